use faer::MatRef;

use crate::error::{Error, Result};

/// Mean over columns of the Pearson correlation between `predicted` and
/// `target`. Columns where either side is constant contribute 0.
pub fn pearson_mean(predicted: MatRef<'_, f64>, target: MatRef<'_, f64>) -> Result<f64> {
    if predicted.nrows() != target.nrows() || predicted.ncols() != target.ncols() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            predicted.nrows(),
            predicted.ncols(),
            target.nrows(),
            target.ncols()
        )));
    }
    if predicted.nrows() < 3 {
        return Err(Error::InvalidArgument(format!(
            "Pearson correlation needs at least 3 rows, got {}",
            predicted.nrows()
        )));
    }
    if predicted.ncols() == 0 {
        return Err(Error::InvalidArgument("no columns to correlate".into()));
    }
    Ok(mean_column_r(predicted, target))
}

/// Unchecked core of [`pearson_mean`]; tolerates tiny validation folds.
pub(crate) fn mean_column_r(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let total: f64 = (0..a.ncols()).map(|j| column_r(a, b, j)).sum();
    total / a.ncols() as f64
}

fn column_r(a: MatRef<'_, f64>, b: MatRef<'_, f64>, j: usize) -> f64 {
    let n = a.nrows();
    if n < 2 {
        return 0.0;
    }
    let (ca, cb) = (a.col(j), b.col(j));
    let ma = ca.iter().sum::<f64>() / n as f64;
    let mb = cb.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    let (mut peak_a, mut peak_b) = (0.0f64, 0.0f64);
    for (x, y) in ca.iter().zip(cb.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
        peak_a = peak_a.max(x.abs());
        peak_b = peak_b.max(y.abs());
    }
    if is_flat(saa, peak_a, n) || is_flat(sbb, peak_b, n) {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Spread indistinguishable from rounding of the mean.
fn is_flat(sum_sq: f64, peak: f64, n: usize) -> bool {
    let ulp = 4.0 * f64::EPSILON * peak;
    sum_sq <= ulp * ulp * n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use faer::Mat;

    #[test]
    fn identical_is_one() {
        let y = Mat::from_fn(6, 3, |i, j| ((i * 5 + j * 3) % 7) as f64);
        assert_abs_diff_eq!(pearson_mean(y.as_ref(), y.as_ref()).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn negated_is_minus_one() {
        let y = Mat::from_fn(6, 3, |i, j| ((i * 5 + j * 3) % 7) as f64);
        let neg = Mat::from_fn(6, 3, |i, j| -y[(i, j)]);
        assert_abs_diff_eq!(pearson_mean(neg.as_ref(), y.as_ref()).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn small_oracle() {
        // r([1,2,3],[1,2,4]): cov = 1.5, var = 1 and 7/3 (sums of squares 2 and 14/3)
        let a = Mat::from_fn(3, 1, |i, _| [1.0, 2.0, 3.0][i]);
        let b = Mat::from_fn(3, 1, |i, _| [1.0, 2.0, 4.0][i]);
        let oracle = 3.0 / (2.0f64.sqrt() * (14.0f64 / 3.0).sqrt());
        let r = pearson_mean(a.as_ref(), b.as_ref()).unwrap();
        assert_abs_diff_eq!(r, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(r, 0.98198, epsilon = 1e-5);
    }

    #[test]
    fn constant_column_contributes_zero() {
        let a = Mat::from_fn(4, 2, |i, j| if j == 0 { 0.1 } else { i as f64 });
        let b = Mat::from_fn(4, 2, |i, _| i as f64);
        assert_abs_diff_eq!(pearson_mean(a.as_ref(), b.as_ref()).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let a = Mat::<f64>::zeros(4, 2);
        let b = Mat::<f64>::zeros(4, 3);
        assert!(pearson_mean(a.as_ref(), b.as_ref()).is_err());
    }
}
