//! Independent oracles shared by the integration tests. Nothing here calls
//! into the numeric parts of the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use xalign::metrics::inner_fold_seed;
use xalign::{FoldPlan, Mat, MatRef};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Mat<f64> {
    Mat::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_seeded(seed: u64, n: usize, d: usize) -> Mat<f64> {
    gaussian(&mut rng(seed), n, d)
}

pub fn uniform_dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn to_rows(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i][p];
            for j in 0..m {
                out[i][j] += aip * b[p][j];
            }
        }
    }
    out
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).collect())
        .collect()
}

/// Solves `A X = B` by Gauss–Jordan elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        let pivot = a[c][c];
        for j in 0..n {
            a[c][j] /= pivot;
        }
        for v in b[c].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != c && a[r][c] != 0.0 {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                }
                for j in 0..b[r].len() {
                    b[r][j] -= f * b[c][j];
                }
            }
        }
    }
    b
}

/// `(XᵀX + λI)⁻¹ XᵀY`
pub fn ridge_normal_equations(x: MatRef<'_, f64>, y: MatRef<'_, f64>, lambda: f64) -> Mat<f64> {
    let (xr, yr) = (to_rows(x), to_rows(y));
    let xt = transpose(&xr);
    let mut gram = matmul(&xt, &xr);
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += lambda;
    }
    from_rows(&solve(gram, matmul(&xt, &yr)))
}

pub fn rel_frobenius(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            num += (a[(i, j)] - b[(i, j)]).powi(2);
            den += b[(i, j)].powi(2);
        }
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Random orthogonal matrix via Gram–Schmidt on a Gaussian matrix.
pub fn orthogonal(seed: u64, d: usize) -> Mat<f64> {
    let g = to_rows(gaussian_seeded(seed, d, d).as_ref());
    let mut q: Vec<Vec<f64>> = Vec::new();
    for v in g {
        let mut v = v;
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|a| a / norm).collect());
    }
    from_rows(&q)
}

/// Linear CKA straight from the definition: double-centred Gram matrices and
/// `tr(KHLH)`-style HSIC.
pub fn cka_gram_oracle(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> f64 {
    let centred_gram = |m: MatRef<'_, f64>| {
        let r = to_rows(m);
        let k = matmul(&r, &transpose(&r));
        let n = k.len();
        let row_mean: Vec<f64> = k.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let all = row_mean.iter().sum::<f64>() / n as f64;
        (0..n)
            .map(|i| (0..n).map(|j| k[i][j] - row_mean[i] - row_mean[j] + all).collect())
            .collect::<Vec<Vec<f64>>>()
    };
    let (k, l) = (centred_gram(x), centred_gram(y));
    let hsic = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>())
            .sum()
    };
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

fn zscore_columns(fit: &[Vec<f64>], apply: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = fit[0].len();
    let n = fit.len() as f64;
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let mean = fit.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = fit.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        stats.push((mean, var.sqrt().max(1e-12)));
    }
    let tf = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().zip(&stats).map(|(v, (m, s))| (v - m) / s).collect())
            .collect()
    };
    (tf(fit), tf(apply))
}

fn pearson_columns(pred: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let d = target[0].len();
    let n = target.len() as f64;
    let mut total = 0.0;
    for j in 0..d {
        let (mp, mt) = (
            pred.iter().map(|r| r[j]).sum::<f64>() / n,
            target.iter().map(|r| r[j]).sum::<f64>() / n,
        );
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (p, t) in pred.iter().zip(target) {
            let (a, b) = (p[j] - mp, t[j] - mt);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        // flat columns count as zero correlation
        if saa > 1e-20 && sbb > 1e-20 {
            total += sab / (saa * sbb).sqrt();
        }
    }
    total / d as f64
}

fn pick(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn split_score(x: &[Vec<f64>], y: &[Vec<f64>], fit: &[usize], eval: &[usize], lambda: f64) -> f64 {
    let (xf, xe) = zscore_columns(&pick(x, fit), &pick(x, eval));
    let (yf, ye) = zscore_columns(&pick(y, fit), &pick(y, eval));
    let xt = transpose(&xf);
    let mut gram = matmul(&xt, &xf);
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += lambda;
    }
    let w = solve(gram, matmul(&xt, &yf));
    pearson_columns(&matmul(&xe, &w), &ye)
}

/// Nested-CV linear predictivity written out longhand with normal equations.
/// Fold membership comes from the plan; everything numeric is recomputed.
pub fn reference_predictivity(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    plan: &FoldPlan,
    grid: &[f64],
    seed: u64,
) -> (f64, Vec<f64>) {
    let (xr, yr) = (to_rows(x), to_rows(y));
    let k = plan.n_folds;
    let mut scores = Vec::new();
    let mut lambdas = Vec::new();
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    for fold in 0..k {
        let train: Vec<usize> = (0..plan.n_items).filter(|&i| plan.assignments[i] != fold).collect();
        let test: Vec<usize> = (0..plan.n_items).filter(|&i| plan.assignments[i] == fold).collect();
        let inner = plan.nested(&train, k, inner_fold_seed(seed, fold)).unwrap();
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &lambda in &grid {
            let mut total = 0.0;
            for f in 0..k {
                let fit: Vec<usize> = (0..train.len())
                    .filter(|&i| inner.assignments[i] != f)
                    .map(|i| train[i])
                    .collect();
                let eval: Vec<usize> = (0..train.len())
                    .filter(|&i| inner.assignments[i] == f)
                    .map(|i| train[i])
                    .collect();
                total += split_score(&xr, &yr, &fit, &eval, lambda);
            }
            let mean = total / k as f64;
            if mean > best.0 {
                best = (mean, lambda);
            }
        }
        scores.push(split_score(&xr, &yr, &train, &test, best.1));
        lambdas.push(best.1);
    }
    (scores.iter().sum::<f64>() / k as f64, lambdas)
}

/// `Γ((ν+1)/2) / (√(νπ) Γ(ν/2))` for integer ν via the half-integer
/// recurrences of Γ.
pub fn t_density_constant(df: u32) -> f64 {
    // r(ν) = Γ((ν+1)/2) / Γ(ν/2); r(1) = 1/√π, r(2) = √π/2, r(ν+2) = r(ν)·(ν+1)/ν
    let pi = std::f64::consts::PI;
    let mut r = if df % 2 == 1 { 1.0 / pi.sqrt() } else { pi.sqrt() / 2.0 };
    let mut nu = if df % 2 == 1 { 1 } else { 2 };
    while nu < df {
        r *= (nu as f64 + 1.0) / nu as f64;
        nu += 2;
    }
    r / (df as f64 * pi).sqrt()
}

/// Two-sided Student-t p-value by composite Simpson quadrature of the
/// density over `[0, |t|]` with `intervals` (even) subintervals.
pub fn t_two_sided_quadrature(t: f64, df: u32, intervals: usize) -> f64 {
    let c = t_density_constant(df);
    let nu = df as f64;
    let f = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let b = t.abs();
    let h = b / intervals as f64;
    let mut acc = f(0.0) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    let half = acc * h / 3.0;
    (1.0 - 2.0 * half).max(0.0)
}
