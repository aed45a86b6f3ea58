use rand::Rng;

use crate::error::{CoreError, Result};

use super::linalg::{gemm, View};
use super::params::{ConvLayer, Dense};

/// SELU scale.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch coefficient.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

/// Derivative of [`selu`]; the right-hand branch is used for `x > 0`.
#[inline]
pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Valid-convolution output length, or `None` when the input is shorter than
/// the filter.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel && stride > 0).then(|| (len - kernel) / stride + 1)
}

/// Unrolls a `[maps][len]` stack into a `[maps·kernel][out_len]` patch
/// matrix: `cols[c·kernel + j][t] = input[c][stride·t + j]`.
fn im2col(input: &[f64], maps: usize, len: usize, kernel: usize, stride: usize, out_len: usize) -> Vec<f64> {
    let mut cols = vec![0.0; maps * kernel * out_len];
    for c in 0..maps {
        let x = &input[c * len..(c + 1) * len];
        for j in 0..kernel {
            let row = &mut cols[(c * kernel + j) * out_len..][..out_len];
            for (t, v) in row.iter_mut().enumerate() {
                *v = x[stride * t + j];
            }
        }
    }
    cols
}

/// Strided valid cross-correlation of a `[in_maps][len]` stack.
///
/// Returns the `[out_maps][out_len]` pre-activations and `out_len`.
pub fn conv1d_forward(
    input: &[f64],
    len: usize,
    layer: &ConvLayer,
    stride: usize,
) -> Result<(Vec<f64>, usize)> {
    if input.len() != layer.in_maps * len {
        return Err(CoreError::invalid(format!(
            "conv input has {} values, expected {} maps x {len}",
            input.len(),
            layer.in_maps
        )));
    }
    let out_len = conv_output_len(len, layer.kernel, stride).ok_or_else(|| {
        CoreError::invalid(format!(
            "conv input length {len} is shorter than filter {}",
            layer.kernel
        ))
    })?;
    let taps = layer.in_maps * layer.kernel;
    let cols = im2col(input, layer.in_maps, len, layer.kernel, stride, out_len);
    let mut out = vec![0.0; layer.out_maps * out_len];
    for (row, b) in out.chunks_exact_mut(out_len).zip(&layer.biases) {
        row.fill(*b);
    }
    gemm(
        1.0,
        View::row_major(&layer.weights, layer.out_maps, taps),
        View::row_major(&cols, taps, out_len),
        1.0,
        &mut out,
    );
    Ok((out, out_len))
}

/// Backpropagates through one convolution.
///
/// `d_out` is the gradient w.r.t. the layer's pre-activations. Weight and
/// bias gradients are accumulated into `grad`; the input gradient is
/// returned when `want_input` is set.
pub(crate) fn conv1d_backward(
    input: &[f64],
    len: usize,
    layer: &ConvLayer,
    stride: usize,
    d_out: &[f64],
    grad: &mut ConvLayer,
    want_input: bool,
) -> Option<Vec<f64>> {
    let out_len = d_out.len() / layer.out_maps;
    let k = layer.kernel;
    let taps = layer.in_maps * k;
    for (b, dz) in grad.biases.iter_mut().zip(d_out.chunks_exact(out_len)) {
        *b += dz.iter().sum::<f64>();
    }
    let cols = im2col(input, layer.in_maps, len, k, stride, out_len);
    let d_z = View::row_major(d_out, layer.out_maps, out_len);
    gemm(
        1.0,
        d_z,
        View::row_major(&cols, taps, out_len).transposed(),
        1.0,
        &mut grad.weights,
    );
    if !want_input {
        return None;
    }
    let mut d_cols = vec![0.0; taps * out_len];
    gemm(
        1.0,
        View::row_major(&layer.weights, layer.out_maps, taps).transposed(),
        d_z,
        0.0,
        &mut d_cols,
    );
    let mut d_input = vec![0.0; input.len()];
    for c in 0..layer.in_maps {
        let dx = &mut d_input[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &d_cols[(c * k + j) * out_len..][..out_len];
            for (t, g) in row.iter().enumerate() {
                dx[stride * t + j] += g;
            }
        }
    }
    Some(d_input)
}

pub(crate) fn dense_forward(layer: &Dense, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), layer.inputs);
    layer
        .weights
        .chunks_exact(layer.inputs)
        .zip(&layer.biases)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

/// Gradient of a dense layer's output w.r.t. its input: `Wᵀ · dz`.
pub(crate) fn dense_input_gradient(layer: &Dense, dz: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; layer.inputs];
    for (row, g) in layer.weights.chunks_exact(layer.inputs).zip(dz) {
        for (d, w) in dx.iter_mut().zip(row) {
            *d += w * g;
        }
    }
    dx
}

/// Accumulates `dz ⊗ x` and `dz` into a dense layer's gradient.
pub(crate) fn dense_accumulate(grad: &mut Dense, x: &[f64], dz: &[f64]) {
    for ((row, b), g) in grad
        .weights
        .chunks_exact_mut(grad.inputs)
        .zip(grad.biases.iter_mut())
        .zip(dz)
    {
        *b += g;
        for (w, v) in row.iter_mut().zip(x) {
            *w += g * v;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Keep flags and affine correction of one alpha-dropout application.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
    pub shift: f64,
}

impl DropoutMask {
    /// Affine coefficients `(a, b)` for the given drop rate.
    pub fn coefficients(rate: f64) -> (f64, f64) {
        let saturated = -SELU_LAMBDA * SELU_ALPHA;
        let keep = 1.0 - rate;
        let a = (keep + saturated * saturated * rate * keep).powf(-0.5);
        let b = -a * rate * saturated;
        (a, b)
    }

    /// Draws keep flags with drop probability `rate`.
    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Self {
        let keep = (0..len).map(|_| rng.random::<f64>() >= rate).collect();
        let (scale, shift) = Self::coefficients(rate);
        DropoutMask { keep, scale, shift }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let saturated = -SELU_LAMBDA * SELU_ALPHA;
        x.iter()
            .zip(&self.keep)
            .map(|(&v, &k)| self.scale * if k { v } else { saturated } + self.shift)
            .collect()
    }

    /// Chain rule through [`DropoutMask::apply`].
    pub fn backward(&self, d_out: &[f64]) -> Vec<f64> {
        d_out
            .iter()
            .zip(&self.keep)
            .map(|(&g, &k)| if k { self.scale * g } else { 0.0 })
            .collect()
    }
}

/// Alpha dropout. Outside training it is the identity and returns no mask.
///
/// In training mode dropped units are set to the SELU saturation value
/// `-λα` and the result is rescaled so that zero-mean, unit-variance inputs
/// keep those moments.
pub fn alpha_dropout<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    training: bool,
    rng: &mut R,
) -> (Vec<f64>, Option<DropoutMask>) {
    if !training {
        return (x.to_vec(), None);
    }
    let mask = DropoutMask::sample(x.len(), rate, rng);
    (mask.apply(x), Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn selu_values() {
        assert_eq!(selu(0.0), 0.0);
        assert_abs_diff_eq!(selu(1.0), 1.05070098, epsilon = 1e-8);
        assert_abs_diff_eq!(selu(-50.0), -SELU_LAMBDA * SELU_ALPHA, epsilon = 1e-12);
        assert_abs_diff_eq!(selu(-1e6), -1.7581, epsilon = 1e-4);
    }

    #[test]
    fn selu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -0.5, -1e-3, 1e-3, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (selu(x + h) - selu(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(selu_derivative(x), fd, epsilon = 1e-6);
        }
    }

    fn single(weights: Vec<f64>, bias: f64) -> ConvLayer {
        ConvLayer {
            in_maps: 1,
            out_maps: 1,
            kernel: 3,
            weights,
            biases: vec![bias],
        }
    }

    #[test]
    fn identity_kernel_picks_window_centres() {
        let layer = single(vec![0.0, 1.0, 0.0], 0.0);
        let (out, len) = conv1d_forward(&[1.0, 2.0, 3.0, 4.0, 5.0], 5, &layer, 2).unwrap();
        assert_eq!(len, 2);
        assert_eq!(out, vec![2.0, 4.0]);
    }

    #[test]
    fn bias_only_conv_is_constant() {
        let layer = single(vec![0.0; 3], 0.75);
        let (out, _) = conv1d_forward(&[3.0, -1.0, 8.0, 2.0, 0.5, 9.0, 1.0], 7, &layer, 2).unwrap();
        assert!(out.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn conv_rejects_short_input() {
        let layer = single(vec![0.0; 3], 0.0);
        assert!(conv1d_forward(&[1.0, 2.0], 2, &layer, 2).is_err());
    }

    #[test]
    fn conv_matches_triple_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let len = 9;
        let layer = ConvLayer {
            in_maps: 2,
            out_maps: 3,
            kernel: 3,
            weights: (0..18).map(|_| rng.random_range(-1.0..1.0)).collect(),
            biases: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let input: Vec<f64> = (0..2 * len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (out, out_len) = conv1d_forward(&input, len, &layer, 2).unwrap();
        assert_eq!(out_len, 4);
        for m in 0..3 {
            for t in 0..out_len {
                let mut expected = layer.biases[m];
                for c in 0..2 {
                    for j in 0..3 {
                        expected += layer.weights[m * 6 + c * 3 + j] * input[c * len + 2 * t + j];
                    }
                }
                assert_abs_diff_eq!(out[m * out_len + t], expected, epsilon = 1e-12);
            }
        }
        // The generic path (non 3/2 geometry) agrees with the same loop.
        let (generic, glen) = conv1d_forward(&input, len, &layer, 3).unwrap();
        assert_eq!(glen, 3);
        for t in 0..glen {
            let mut expected = layer.biases[0];
            for c in 0..2 {
                for j in 0..3 {
                    expected += layer.weights[c * 3 + j] * input[c * len + 3 * t + j];
                }
            }
            assert_abs_diff_eq!(generic[t], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = vec![0.3, -1.2, 2.0];
        let (y, mask) = alpha_dropout(&x, 0.0, true, &mut rng);
        let mask = mask.unwrap();
        assert_eq!(mask.scale, 1.0);
        assert_eq!(mask.shift, 0.0);
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_inference_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = vec![0.3, -1.2, 2.0];
        for rate in [0.05, 0.5, 0.9] {
            let (y, mask) = alpha_dropout(&x, rate, false, &mut rng);
            assert_eq!(y, x);
            assert!(mask.is_none());
        }
    }

    #[test]
    fn dropout_preserves_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let x: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (y, mask) = alpha_dropout(&x, 0.05, true, &mut rng);
        let dropped = mask.unwrap().keep.iter().filter(|k| !**k).count() as f64 / x.len() as f64;
        assert!((dropped - 0.05).abs() < 0.005);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let p = softmax(&[1.0, 2.0, -3.0, 0.5]);
        let q = softmax(&[101.0, 102.0, 97.0, 100.5]);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for (a, b) in p.iter().zip(&q) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
