//! Ridge regression `min ‖XW − Y‖² + λ‖W‖²_F` along a whole λ path.
//!
//! One spectral factorization of `X` serves every λ. With `X = U S Vᵀ`:
//!
//! * `d ≤ n`: eigendecompose `XᵀX = V S² Vᵀ`, then `W = V (S² + λ)⁻¹ Vᵀ XᵀY`;
//! * `d > n`: eigendecompose `XXᵀ = U S² Uᵀ`, then `W = Xᵀ U (S² + λ)⁻¹ Uᵀ Y`.
//!
//! Both forms avoid dividing by singular values. Components whose squared
//! singular value is below `max(S²)·max(n, d)·ε` are treated as exactly zero
//! and dropped; they lie in the null space and contribute nothing in exact
//! arithmetic.

use faer::{Mat, MatRef};

use super::zscore::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::{first_non_finite, mul, sym_eigen, tmul};

/// A factorized design matrix from which ridge solutions for any λ follow
/// in closed form.
///
/// Both factorizations are stored as a pair of bases so that
/// `W(λ) = B_w diag(g) B_cᵀ Y` with `g = 1 / (s² + λ)`:
/// primal `B_w = V`, `B_c = X V`; dual `B_w = Xᵀ U`, `B_c = U`.
#[derive(Clone, Debug)]
pub struct RidgePath {
    /// Retained squared singular values, descending.
    spectrum: Vec<f64>,
    /// d × r
    weight_basis: Mat<f64>,
    /// n × r
    coef_basis: Mat<f64>,
}

impl RidgePath {
    pub fn new(x: MatRef<'_, f64>) -> Result<Self> {
        if let Some((row, col)) = first_non_finite(x) {
            return Err(Error::NonFinite { row, col });
        }
        let (n, d) = (x.nrows(), x.ncols());
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("empty design matrix {n}x{d}")));
        }
        let primal = d <= n;
        let gram = if primal { tmul(x, x) } else { mul(x, x.transpose()) };
        let (values, vectors) = sym_eigen(gram.as_ref())?;
        let top = values.iter().copied().fold(0.0f64, f64::max);
        let tol = top * n.max(d) as f64 * f64::EPSILON;
        let keep: Vec<usize> = (0..values.len()).rev().filter(|&k| values[k] > tol).collect();
        let spectrum: Vec<f64> = keep.iter().map(|&k| values[k]).collect();
        let kept = Mat::from_fn(vectors.nrows(), keep.len(), |i, j| vectors[(i, keep[j])]);
        let (weight_basis, coef_basis) = if primal {
            let xv = mul(x, kept.as_ref());
            (kept, xv)
        } else {
            let xtu = tmul(x, kept.as_ref());
            (xtu, kept)
        };
        Ok(RidgePath {
            spectrum,
            weight_basis,
            coef_basis,
        })
    }

    /// Number of retained spectral components.
    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }

    /// Squared singular values of the training design, descending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `1 / (s² + λ)` per component.
    pub fn shrinkage(&self, lambda: f64) -> Vec<f64> {
        shrinkage(&self.spectrum, lambda)
    }

    /// Maps evaluation rows into the spectral basis (n_eval × r), so that
    /// predictions are `projector · diag(g) · coefficients`.
    pub fn projector(&self, x_eval: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x_eval.ncols(), self.weight_basis.nrows());
        mul(x_eval, self.weight_basis.as_ref())
    }

    /// Spectral coefficients of training targets (r × d_Y).
    pub fn target_coefficients(&self, y: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(y.nrows(), self.coef_basis.nrows());
        tmul(self.coef_basis.as_ref(), y)
    }

    /// Full weight matrix (d_X × d_Y) for one λ.
    pub fn weights(&self, y: MatRef<'_, f64>, lambda: f64) -> Mat<f64> {
        let coef = self.target_coefficients(y);
        let g = self.shrinkage(lambda);
        let scaled = Mat::from_fn(coef.nrows(), coef.ncols(), |i, j| coef[(i, j)] * g[i]);
        mul(self.weight_basis.as_ref(), scaled.as_ref())
    }

    /// Keeps only what evaluating fixed rows needs: spectrum, projector of
    /// `x_eval`, and the coefficient basis.
    pub(crate) fn into_evaluator(self, x_eval: MatRef<'_, f64>) -> PathEvaluator {
        let projector = self.projector(x_eval);
        PathEvaluator {
            spectrum: self.spectrum,
            projector,
            coef_basis: self.coef_basis,
        }
    }
}

pub(crate) fn shrinkage(spectrum: &[f64], lambda: f64) -> Vec<f64> {
    spectrum.iter().map(|s| 1.0 / (s + lambda)).collect()
}

/// Ridge predictions for a fixed set of evaluation rows, for any targets and λ.
#[derive(Clone, Debug)]
pub(crate) struct PathEvaluator {
    pub spectrum: Vec<f64>,
    pub projector: Mat<f64>,
    pub coef_basis: Mat<f64>,
}

impl PathEvaluator {
    pub fn coefficients(&self, y_fit: MatRef<'_, f64>) -> Mat<f64> {
        tmul(self.coef_basis.as_ref(), y_fit)
    }

    pub fn predict(&self, coef: MatRef<'_, f64>, lambda: f64) -> Mat<f64> {
        predict(self.projector.as_ref(), &shrinkage(&self.spectrum, lambda), coef)
    }
}

/// Predictions `P diag(g) M` for one λ given a projector `P`, shrinkage `g`
/// and target coefficients `M`.
pub(crate) fn predict(p: MatRef<'_, f64>, g: &[f64], m: MatRef<'_, f64>) -> Mat<f64> {
    let scaled = Mat::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)] * g[j]);
    mul(scaled.as_ref(), m)
}

/// Solves ridge regression on already z-scored inputs.
pub fn ridge_solve(x: MatRef<'_, f64>, y: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    check_lambda(lambda)?;
    if x.nrows() != y.nrows() {
        return Err(Error::InvalidArgument(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if let Some((row, col)) = first_non_finite(y) {
        return Err(Error::NonFinite { row, col });
    }
    let path = RidgePath::new(x)?;
    Ok(path.weights(y, lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// A ridge map fitted on raw features, with the z-scoring it was trained under.
#[derive(Clone, Debug)]
pub struct RidgeFit {
    pub weights: Mat<f64>,
    pub lambda: f64,
    pub x_scaler: Standardizer,
    pub y_scaler: Standardizer,
}

impl RidgeFit {
    pub fn fit(x: MatRef<'_, f64>, y: MatRef<'_, f64>, lambda: f64) -> Result<Self> {
        let (x_scaler, xz) = Standardizer::fit_apply(x)?;
        let (y_scaler, yz) = Standardizer::fit_apply(y)?;
        let weights = ridge_solve(xz.as_ref(), yz.as_ref(), lambda)?;
        Ok(RidgeFit {
            weights,
            lambda,
            x_scaler,
            y_scaler,
        })
    }

    /// Predictions in z-scored target units.
    pub fn predict(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let xz = self.x_scaler.apply(x);
        mul(xz.as_ref(), self.weights.as_ref())
    }
}
