use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Per-step reference features for attention feature propagation.
#[derive(Debug, Clone)]
pub struct AfpContext {
    /// `[reference][block]` key matrices, one token per row.
    pub reference_keys: Vec<Vec<DMatrix<f64>>>,
    pub reference_values: Vec<Vec<DMatrix<f64>>>,
    pub lambda_a: f64,
    /// Image-embedding injector applied to a block's hidden tokens. Unset
    /// means no injection.
    pub clip_image_hook: Option<fn(&mut DMatrix<f64>)>,
}

impl AfpContext {
    pub fn reference_count(&self) -> usize {
        self.reference_keys.len()
    }
}

/// `softmax(QKᵀ/√d)·V` with rows of Q, K, V as tokens.
pub fn self_attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    d: usize,
) -> Result<DMatrix<f64>> {
    if q.ncols() != k.ncols() || k.ncols() != d {
        return Err(Error::Dimension(format!(
            "attention query dim {} and key dim {} with d = {d}",
            q.ncols(),
            k.ncols()
        )));
    }
    if k.nrows() != v.nrows() || k.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "attention with {} keys and {} values",
            k.nrows(),
            v.nrows()
        )));
    }
    let mut logits = q * k.transpose();
    logits /= (d as f64).sqrt();
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(logits * v)
}

/// `λ·mean_r Attn(Q, K_r, V_r) + (1−λ)·Attn(Q, K, V)` for one block.
pub fn afp_blend(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    context: &AfpContext,
    block: usize,
) -> Result<DMatrix<f64>> {
    let n = context.reference_count();
    if n == 0 || context.reference_values.len() != n {
        return Err(Error::Invalid("attention propagation without references".into()));
    }
    let d = k.ncols();
    let own = self_attention(q, k, v, d)?;
    let mut cross = DMatrix::zeros(own.nrows(), own.ncols());
    for r in 0..n {
        let (kr, vr) = match (
            context.reference_keys[r].get(block),
            context.reference_values[r].get(block),
        ) {
            (Some(kr), Some(vr)) => (kr, vr),
            _ => {
                return Err(Error::Dimension(format!(
                    "reference {r} has no features for attention block {block}"
                )))
            }
        };
        let out = self_attention(q, kr, vr, d)?;
        if out.shape() != own.shape() {
            return Err(Error::Dimension(format!(
                "reference {r} values have {} columns, block expects {}",
                out.ncols(),
                own.ncols()
            )));
        }
        cross += out;
    }
    let lambda = context.lambda_a;
    Ok(cross * (lambda / n as f64) + own * (1.0 - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn single_key_returns_its_value() {
        let q = m(3, 2, &[1.0, -2.0, 0.5, 7.0, -3.0, 0.0]);
        let k = m(1, 2, &[0.3, 0.9]);
        let v = m(1, 3, &[4.0, -1.0, 2.0]);
        let out = self_attention(&q, &k, &v, 2).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), v.row(0));
        }
    }

    #[test]
    fn equal_logits_average_values() {
        let q = m(1, 2, &[1.0, 1.0]);
        let k = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let v = m(2, 1, &[2.0, 6.0]);
        assert!((self_attention(&q, &k, &v, 2).unwrap()[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let q = m(1, 2, &[1.0, 1.0]);
        let k = m(2, 3, &[0.0; 6]);
        let v = m(2, 1, &[0.0; 2]);
        assert!(self_attention(&q, &k, &v, 2).is_err());
        let k = m(2, 2, &[0.0; 4]);
        let v = m(3, 1, &[0.0; 3]);
        assert!(self_attention(&q, &k, &v, 2).is_err());
    }
}
