//! Forward kernels. Each one is a pure function of its inputs; the tape in
//! [`super::tape`] records the same kernels and adds their adjoints.

use rand::Rng;

use super::{Matrix, NumError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · w + b`, with `b` a 1×q row vector broadcast over rows.
pub fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix, NumError> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(NumError::Dimension { op: "linear(bias)", left: w.shape(), right: b.shape() });
    }
    let mut out = x.matmul(w).map_err(|_| NumError::Dimension {
        op: "linear",
        left: x.shape(),
        right: w.shape(),
    })?;
    let bias = b.as_slice();
    for i in 0..out.rows() {
        for (o, &bj) in out.row_mut(i).iter_mut().zip(bias) {
            *o += bj;
        }
    }
    Ok(out)
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn elu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { v.exp_m1() })
}

/// Row-wise softmax restricted to entries where `mask` is nonzero.
///
/// Masked entries come out as exactly `0.0`; each row sums to one over its
/// unmasked entries.
pub fn masked_row_softmax(d: &Matrix, mask: &Matrix) -> Result<Matrix, NumError> {
    d.ensure_same_shape(mask, "masked_row_softmax")?;
    let mut out = Matrix::zeros(d.rows(), d.cols());
    for i in 0..d.rows() {
        let (row, keep) = (d.row(i), mask.row(i));
        let max = row
            .iter()
            .zip(keep)
            .filter(|(_, &m)| m != 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(NumError::DegenerateRow { row: i });
        }
        let o = out.row_mut(i);
        let mut total = 0.0;
        for ((o, &v), &m) in o.iter_mut().zip(row).zip(keep) {
            if m != 0.0 {
                *o = (v - max).exp();
                total += *o;
            }
        }
        for v in o.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Per-row statistics produced by [`layer_norm_parts`].
pub(crate) struct LayerNormParts {
    pub normed: Matrix,
    pub inv_std: Vec<f64>,
    pub out: Matrix,
}

pub(crate) fn layer_norm_parts(x: &Matrix, gain: &Matrix, bias: &Matrix, eps: f64) -> Result<LayerNormParts, NumError> {
    let d = x.cols();
    if gain.shape() != (1, d) || bias.shape() != (1, d) {
        return Err(NumError::Dimension { op: "layer_norm", left: x.shape(), right: gain.shape() });
    }
    if d < 2 {
        return Err(NumError::Dimension { op: "layer_norm(width<2)", left: x.shape(), right: gain.shape() });
    }
    let mut normed = Matrix::zeros(x.rows(), d);
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std.push(r);
        let n = normed.row_mut(i);
        for (nv, &v) in n.iter_mut().zip(row) {
            *nv = (v - mean) * r;
        }
        let n = normed.row(i).to_vec();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = n[j] * gain.as_slice()[j] + bias.as_slice()[j];
        }
    }
    Ok(LayerNormParts { normed, inv_std, out })
}

/// Per-row layer normalization with elementwise gain and bias (both 1×d).
pub fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix, eps: f64) -> Result<Matrix, NumError> {
    Ok(layer_norm_parts(x, gain, bias, eps)?.out)
}

/// Inverted-dropout scale mask: entries are `1/keep` with probability `keep`,
/// else `0`. Returns `None` when the op is the identity (inference or keep = 1).
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, keep: f64, training: bool, rng: &mut R) -> Option<Matrix> {
    if !training || keep >= 1.0 {
        return None;
    }
    let scale = 1.0 / keep;
    Some(Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < keep { scale } else { 0.0 }))
}

pub fn dropout<R: Rng + ?Sized>(x: &Matrix, keep: f64, training: bool, rng: &mut R) -> Matrix {
    match dropout_mask(x.rows(), x.cols(), keep, training, rng) {
        Some(mask) => x.zip_map(&mask, "dropout", |a, m| a * m).expect("mask built with x's shape"),
        None => x.clone(),
    }
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Unmasked row softmax of each logit row.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let ones = Matrix::filled(z.rows(), z.cols(), 1.0);
    masked_row_softmax(z, &ones).unwrap_or_else(|_| Matrix::zeros(z.rows(), z.cols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn linear_identity_and_bias() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let out = linear(&Matrix::identity(2), &w, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(out, w);
        let out = linear(&Matrix::row_vector(&[1.0, 1.0]), &Matrix::identity(2), &Matrix::row_vector(&[5.0, 5.0])).unwrap();
        assert_eq!(out.as_slice(), &[6.0, 6.0]);
    }

    #[test]
    fn linear_shape_mismatch_names_shapes() {
        let err = linear(&Matrix::zeros(3, 4), &Matrix::zeros(3, 2), &Matrix::zeros(1, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x4") && msg.contains("3x2"), "{msg}");
    }

    #[test]
    fn activations() {
        assert_eq!(leaky_relu(&scalar(3.0), 0.2)[(0, 0)], 3.0);
        assert_eq!(leaky_relu(&scalar(-1.0), 0.2)[(0, 0)], -0.2);
        assert_eq!(leaky_relu(&scalar(0.0), 0.2)[(0, 0)], 0.0);
        assert_eq!(elu(&scalar(2.0))[(0, 0)], 2.0);
        assert_eq!(elu(&scalar(0.0))[(0, 0)], 0.0);
        assert!((elu(&scalar(-1.0))[(0, 0)] - (-0.632_120_558_828_557_7)).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        let ones = Matrix::filled(1, 2, 1.0);
        let w = masked_row_softmax(&Matrix::row_vector(&[0.0, 0.0]), &ones).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = masked_row_softmax(&Matrix::row_vector(&[2f64.ln(), 0.0]), &ones).unwrap();
        assert!((w[(0, 0)] - 2.0 / 3.0).abs() < 1e-15 && (w[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        let w = masked_row_softmax(&Matrix::row_vector(&[5.0, 9.0]), &Matrix::row_vector(&[1.0, 0.0])).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
        assert_eq!(w[(0, 1)].to_bits(), 0f64.to_bits());
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let mask = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        let err = masked_row_softmax(&Matrix::zeros(2, 2), &mask).unwrap_err();
        assert!(matches!(err, NumError::DegenerateRow { row: 1 }));
    }

    #[test]
    fn layer_norm_examples() {
        let g = Matrix::filled(1, 3, 1.0);
        let z = Matrix::zeros(1, 3);
        let out = layer_norm(&Matrix::row_vector(&[4.0, 4.0, 4.0]), &g, &z, LAYER_NORM_EPS).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 0.0]);

        let out = layer_norm(&Matrix::row_vector(&[1.0, -1.0]), &Matrix::filled(1, 2, 1.0), &Matrix::zeros(1, 2), 1e-15).unwrap();
        assert!((out[(0, 0)] - 1.0).abs() < 1e-12 && (out[(0, 1)] + 1.0).abs() < 1e-12);

        let out = layer_norm(&Matrix::row_vector(&[1.0, 7.0, -3.0]), &Matrix::zeros(1, 3), &Matrix::filled(1, 3, 2.5), LAYER_NORM_EPS).unwrap();
        assert_eq!(out.as_slice(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::filled(10, 10, 2.0);
        assert_eq!(dropout(&x, 1.0, true, &mut rng), x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng), x);
    }

    #[test]
    fn dropout_keep_fraction_within_binomial_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Matrix::filled(100, 100, 1.0);
        let out = dropout(&x, 0.5, true, &mut rng);
        let kept = out.as_slice().iter().filter(|&&v| v != 0.0).count() as f64;
        // 3σ of Binomial(10⁴, 0.5) is 150.
        assert!((kept - 5000.0).abs() <= 150.0, "kept {kept}");
        assert!(out.as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_is_deterministic_per_seed() {
        let x = Matrix::filled(8, 8, 1.0);
        let a = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(5));
        let b = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
