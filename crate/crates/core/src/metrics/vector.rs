use crate::error::{Error, Result};

/// Cosine similarity of two nonzero vectors.
pub fn cosine_score(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument("cosine of a zero vector".into()));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Elementwise arithmetic mean of equally long vectors.
pub fn aggregate_mean<V: AsRef<[f64]>>(rows: &[V]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot average zero vectors".into()))?
        .as_ref();
    let mut sum = first.to_vec();
    for row in &rows[1..] {
        let row = row.as_ref();
        if row.len() != sum.len() {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: {} vs {}",
                row.len(),
                sum.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    let k = rows.len() as f64;
    Ok(sum.into_iter().map(|s| s / k).collect())
}
