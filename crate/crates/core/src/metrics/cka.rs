//! Linear centered kernel alignment with the biased HSIC estimator.
//!
//! `HSIC(K, L) = tr(HKH · HLH) / N²` with `K = XXᵀ`, `L = YYᵀ`. For linear
//! kernels `HKH = X_c X_cᵀ`, so `tr(HKH · HLH) = ‖X_cᵀ Y_c‖²_F` and the
//! `1/N²` factors cancel in the normalized ratio.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, mult, tmul};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CkaRoute {
    /// Pick the cheaper of the two routes for the shapes involved.
    Auto,
    /// Cross-covariance norms in feature space.
    Features,
    /// Centered N×N Gram matrices.
    Gram,
}

pub fn cka_linear(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<f64> {
    cka_linear_with(x, y, CkaRoute::Auto)
}

pub fn cka_linear_with(x: MatRef<'_, f64>, y: MatRef<'_, f64>, route: CkaRoute) -> Result<f64> {
    let n = x.nrows();
    if n != y.nrows() {
        return Err(Error::InvalidArgument(format!("X has {n} rows, Y has {}", y.nrows())));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("CKA needs at least 3 rows, got {n}")));
    }
    let xc = center(x);
    let yc = center(y);
    let route = match route {
        CkaRoute::Auto if x.ncols().max(y.ncols()) < n => CkaRoute::Features,
        CkaRoute::Auto => CkaRoute::Gram,
        r => r,
    };
    let (xy, xx, yy) = match route {
        CkaRoute::Features => (
            frobenius_sq(tmul(xc.as_ref(), yc.as_ref()).as_ref()),
            frobenius_sq(tmul(xc.as_ref(), xc.as_ref()).as_ref()),
            frobenius_sq(tmul(yc.as_ref(), yc.as_ref()).as_ref()),
        ),
        _ => {
            let k = mult(xc.as_ref(), xc.as_ref());
            let l = mult(yc.as_ref(), yc.as_ref());
            (trace_product(&k, &l), trace_product(&k, &k), trace_product(&l, &l))
        }
    };
    if xx <= 0.0 || yy <= 0.0 || !is_spread(&xc, x) || !is_spread(&yc, y) {
        return Err(Error::Numeric("degenerate representation (zero self-HSIC)".into()));
    }
    Ok((xy / (xx.sqrt() * yy.sqrt())).clamp(0.0, 1.0))
}

fn center(x: MatRef<'_, f64>) -> Mat<f64> {
    let n = x.nrows() as f64;
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.col(j).iter().sum::<f64>() / n).collect();
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

/// tr(A B) for symmetric A, B.
fn trace_product(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

/// Rejects inputs whose centered values are pure rounding noise.
fn is_spread(centered: &Mat<f64>, raw: MatRef<'_, f64>) -> bool {
    let peak = raw.col_iter().flat_map(|c| c.iter().copied()).fold(0.0f64, |m, v| m.max(v.abs()));
    let ulp = 4.0 * f64::EPSILON * peak;
    frobenius_sq(centered.as_ref()) > ulp * ulp * (raw.nrows() * raw.ncols()) as f64
}
