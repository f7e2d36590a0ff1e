use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose population std falls below this are mapped to zero.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature mean and population standard deviation fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: MatRef<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "z-scoring needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.col(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            mean.push(mu);
            std.push(var.sqrt());
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x.ncols(), self.mean.len(), "column count differs from fit");
        Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            let s = self.std[j];
            if s < STD_FLOOR {
                0.0
            } else {
                (x[(i, j)] - self.mean[j]) / s
            }
        })
    }

    pub fn fit_apply(x: MatRef<'_, f64>) -> Result<(Self, Mat<f64>)> {
        let s = Self::fit(x)?;
        let z = s.apply(x);
        Ok((s, z))
    }
}
