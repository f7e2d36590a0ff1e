//! Paired t-tests, Benjamini–Hochberg adjustment and standard errors for
//! comparing alignment scores across model pairs.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsResult {
    pub t: f64,
    /// `n − 1`
    pub df: usize,
    /// Two-sided.
    pub p: f64,
    /// BH-adjusted within the comparison's family, once assigned.
    pub q: Option<f64>,
    pub n: usize,
}

/// Two-sided paired t-test of `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<StatsResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs n >= 2, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::Numeric("degenerate differences (zero variance)".into()));
    }
    let t = mean / (var / n as f64).sqrt();
    let df = n - 1;
    Ok(StatsResult {
        t,
        df,
        p: student_t_two_sided(t, df as f64),
        q: None,
        n,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Benjamini–Hochberg step-up q-values, in input order, with family size
/// equal to the number of p-values.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    bh_fdr_family(p_values, p_values.len())
}

/// Benjamini–Hochberg with an explicit family size `m ≥ p_values.len()`.
/// Comparisons of the family that were not computed count as `p = 1`.
pub fn bh_fdr_family(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-value {bad} outside [0, 1]")));
    }
    if m < p_values.len() {
        return Err(Error::InvalidArgument(format!(
            "family size {m} smaller than {} p-values",
            p_values.len()
        )));
    }
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]).then(i.cmp(&j)));
    let mut q = vec![0.0; p_values.len()];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let adjusted = p_values[i] * (m as f64 / (rank + 1) as f64);
        running = running.min(adjusted).min(1.0);
        q[i] = running;
    }
    Ok(q)
}

/// Sample standard deviation over √n.
pub fn stderr(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("standard error needs n >= 2, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((var / n as f64).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
