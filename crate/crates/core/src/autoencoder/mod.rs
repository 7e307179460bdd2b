//! Trainable encoder (complex measurement matrix) and support-estimating
//! decoder with hand-written forward and backward passes.
//!
//! The encoder realizes `y = A x + z` as two real linear maps that share the
//! parameter blocks `Re A` and `Im A`. The decoder is a fully connected
//! network `2L -> Q -> Q -> N` with ReLU hidden layers and a sigmoid output.

mod adam;
mod train;

pub use adam::AdamState;
pub use train::{scenario_pilots, train, EpochRecord, TrainConfig, TrainLog, TrainOutcome};

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::datagen::{gen_channel, gen_noise};
use crate::error::{check_len, Error, Result};
use crate::model::{complex_matvec, MeasurementMatrix, SplitComplexVector};

/// Decoder outputs are clipped to `[OUTPUT_CLIP, 1 - OUTPUT_CLIP]`.
pub const OUTPUT_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `Q x 2L`
    pub theta1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `Q x Q`
    pub theta2: Array2<f64>,
    pub b2: Array1<f64>,
    /// `N x Q`
    pub theta3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl DecoderParams {
    pub fn zeros(l: usize, q: usize, n: usize) -> Self {
        Self {
            theta1: Array2::zeros((q, 2 * l)),
            b1: Array1::zeros(q),
            theta2: Array2::zeros((q, q)),
            b2: Array1::zeros(q),
            theta3: Array2::zeros((n, q)),
            b3: Array1::zeros(n),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(l: usize, q: usize, n: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(l, q, n);
        for theta in [&mut w.theta1, &mut w.theta2, &mut w.theta3] {
            let (fan_out, fan_in) = theta.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            theta.iter_mut().for_each(|v| *v = dist.sample(rng));
        }
        w
    }

    /// `(L, Q, N)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.theta1.ncols() / 2, self.theta1.nrows(), self.theta3.nrows())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn slices(&self) -> [&[f64]; 6] {
        [
            self.theta1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.theta2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.theta3.as_slice().unwrap(),
            self.b3.as_slice().unwrap(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.theta1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.theta2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.theta3.as_slice_mut().unwrap(),
            self.b3.as_slice_mut().unwrap(),
        ]
    }
}

/// Everything the training loop updates: the pilot matrix and the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub a: MeasurementMatrix,
    pub w: DecoderParams,
}

impl AutoencoderParams {
    pub fn zeros_like(&self) -> Self {
        let (l, q, n) = self.w.dims();
        Self {
            a: MeasurementMatrix::zeros(l, n),
            w: DecoderParams::zeros(l, q, n),
        }
    }

    /// Flat views in a fixed order: `a_re, a_im, theta1, b1, theta2, b2, theta3, b3`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.a.re.as_slice().unwrap(), self.a.im.as_slice().unwrap()];
        out.extend(self.w.slices());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.a.re.as_slice_mut().unwrap(),
            self.a.im.as_slice_mut().unwrap(),
        ];
        out.extend(self.w.slices_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum()
    }
}

/// i.i.d. `CN(0, 1)` pilot matrix.
pub fn gaussian_pilots<R: Rng + ?Sized>(l: usize, n: usize, rng: &mut R) -> MeasurementMatrix {
    let mut a = MeasurementMatrix::zeros(l, n);
    for col in 0..n {
        let h = gen_channel(l, rng);
        a.re.column_mut(col).assign(&h.re);
        a.im.column_mut(col).assign(&h.im);
    }
    a
}

/// Rescale every complex column to Euclidean norm `sqrt(L)`, keeping its direction.
pub fn project_pilot_power(a: &MeasurementMatrix) -> Result<MeasurementMatrix> {
    let mut out = a.clone();
    project_pilot_power_in_place(&mut out)?;
    Ok(out)
}

pub fn project_pilot_power_in_place(a: &mut MeasurementMatrix) -> Result<()> {
    let target = (a.rows() as f64).sqrt();
    for n in 0..a.cols() {
        let norm = a.column_norm(n);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroColumn(n));
        }
        let scale = target / norm;
        a.re.column_mut(n).mapv_inplace(|v| v * scale);
        a.im.column_mut(n).mapv_inplace(|v| v * scale);
    }
    Ok(())
}

/// Largest deviation of any column norm from `sqrt(L)`, relative to `sqrt(L)`.
pub fn pilot_power_deviation(a: &MeasurementMatrix) -> f64 {
    let target = (a.rows() as f64).sqrt();
    a.column_norms()
        .into_iter()
        .map(|n| (n - target).abs() / target)
        .fold(0.0, f64::max)
}

/// Noisy linear measurement `A x + z` with `z ~ CN(0, sigma2 I)` drawn from `rng`.
/// With `sigma2 == 0` no randomness is consumed.
pub fn encoder_forward<R: Rng + ?Sized>(
    a: &MeasurementMatrix,
    x: &SplitComplexVector,
    sigma2: f64,
    rng: &mut R,
) -> Result<SplitComplexVector> {
    let y = complex_matvec(a, x)?;
    if sigma2 == 0.0 {
        return Ok(y);
    }
    y.add(&gen_noise(a.rows(), sigma2, rng).z)
}

/// Batched encoder producing the decoder input `[Re Y | Im Y]` (`B x 2L`).
///
/// `noise` is `(Re Z, Im Z)`, `B x L` each, and is treated as a constant by
/// [`backward`].
pub fn encode_batch(
    a: &MeasurementMatrix,
    x_re: &Array2<f64>,
    x_im: &Array2<f64>,
    noise: Option<(&Array2<f64>, &Array2<f64>)>,
) -> Array2<f64> {
    let l = a.rows();
    let mut u = Array2::zeros((x_re.nrows(), 2 * l));
    let mut y_re = x_re.dot(&a.re.t()) - x_im.dot(&a.im.t());
    let mut y_im = x_re.dot(&a.im.t()) + x_im.dot(&a.re.t());
    if let Some((z_re, z_im)) = noise {
        y_re += z_re;
        y_im += z_im;
    }
    u.slice_mut(s![.., ..l]).assign(&y_re);
    u.slice_mut(s![.., l..]).assign(&y_im);
    u
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn clip_output(v: f64) -> f64 {
    v.clamp(OUTPUT_CLIP, 1.0 - OUTPUT_CLIP)
}

/// Intermediate activations of one sample, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCache {
    pub u: Array1<f64>,
    pub h1_pre: Array1<f64>,
    pub h1: Array1<f64>,
    pub h2_pre: Array1<f64>,
    pub h2: Array1<f64>,
    /// Sigmoid output before clipping.
    pub raw: Array1<f64>,
}

/// Single-sample decoder. Returns clipped soft support scores in `(0, 1)`.
pub fn decoder_forward(
    w: &DecoderParams,
    y: &SplitComplexVector,
) -> Result<(Array1<f64>, DecoderCache)> {
    let (l, _, _) = w.dims();
    check_len("decoder input", l, y.len())?;
    let mut u = Array1::zeros(2 * l);
    u.slice_mut(s![..l]).assign(&y.re);
    u.slice_mut(s![l..]).assign(&y.im);
    let h1_pre = w.theta1.dot(&u) + &w.b1;
    let h1 = h1_pre.mapv(|v| v.max(0.0));
    let h2_pre = w.theta2.dot(&h1) + &w.b2;
    let h2 = h2_pre.mapv(|v| v.max(0.0));
    let raw = (w.theta3.dot(&h2) + &w.b3).mapv(sigmoid);
    let out = raw.mapv(clip_output);
    Ok((
        out,
        DecoderCache {
            u,
            h1_pre,
            h1,
            h2_pre,
            h2,
            raw,
        },
    ))
}

/// Activations of a whole batch (rows are samples).
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub u: Array2<f64>,
    pub h1_pre: Array2<f64>,
    pub h1: Array2<f64>,
    pub h2_pre: Array2<f64>,
    pub h2: Array2<f64>,
    pub raw: Array2<f64>,
    /// Clipped outputs.
    pub out: Array2<f64>,
}

fn affine_rows(input: &Array2<f64>, theta: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut z = input.dot(&theta.t());
    z += bias;
    z
}

pub fn decode_batch(w: &DecoderParams, u: Array2<f64>) -> BatchCache {
    let h1_pre = affine_rows(&u, &w.theta1, &w.b1);
    let h1 = h1_pre.mapv(|v| v.max(0.0));
    let h2_pre = affine_rows(&h1, &w.theta2, &w.b2);
    let h2 = h2_pre.mapv(|v| v.max(0.0));
    let raw = affine_rows(&h2, &w.theta3, &w.b3).mapv(sigmoid);
    let out = raw.mapv(clip_output);
    BatchCache {
        u,
        h1_pre,
        h1,
        h2_pre,
        h2,
        raw,
        out,
    }
}

/// Mean binary cross-entropy over all `B * N` entries, with outputs clipped
/// to `[OUTPUT_CLIP, 1 - OUTPUT_CLIP]`.
pub fn cross_entropy_loss(alpha_tilde: &Array2<f64>, alpha: &Array2<f64>) -> f64 {
    assert_eq!(alpha_tilde.dim(), alpha.dim(), "loss operands differ in shape");
    let total: f64 = alpha_tilde
        .iter()
        .zip(alpha.iter())
        .map(|(&p, &t)| {
            let p = clip_output(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / alpha.len() as f64
}

/// Exact gradients of [`cross_entropy_loss`] with respect to every
/// parameter, for the forward pass recorded in `cache`.
///
/// The noise added by the encoder is a constant here. With `freeze_matrix`
/// the pilot gradients are left at zero.
pub fn backward(
    params: &AutoencoderParams,
    x_re: &Array2<f64>,
    x_im: &Array2<f64>,
    alpha: &Array2<f64>,
    cache: &BatchCache,
    freeze_matrix: bool,
) -> AutoencoderParams {
    let w = &params.w;
    let scale = 1.0 / alpha.len() as f64;
    // d loss / d logit; zero where the clip is active.
    let mut d_out = Array2::zeros(alpha.dim());
    Zip::from(&mut d_out)
        .and(&cache.raw)
        .and(alpha)
        .for_each(|d, &s, &t| {
            if (OUTPUT_CLIP..=1.0 - OUTPUT_CLIP).contains(&s) {
                *d = (s - t) * scale;
            }
        });

    let mut grads = params.zeros_like();
    grads.w.theta3 = d_out.t().dot(&cache.h2);
    grads.w.b3 = d_out.sum_axis(Axis(0));

    let mut d_h2 = d_out.dot(&w.theta3);
    Zip::from(&mut d_h2).and(&cache.h2_pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    grads.w.theta2 = d_h2.t().dot(&cache.h1);
    grads.w.b2 = d_h2.sum_axis(Axis(0));

    let mut d_h1 = d_h2.dot(&w.theta2);
    Zip::from(&mut d_h1).and(&cache.h1_pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    grads.w.theta1 = d_h1.t().dot(&cache.u);
    grads.w.b1 = d_h1.sum_axis(Axis(0));

    if !freeze_matrix {
        let l = params.a.rows();
        let d_u = d_h1.dot(&w.theta1);
        let d_yre = d_u.slice(s![.., ..l]);
        let d_yim = d_u.slice(s![.., l..]);
        grads.a.re = d_yre.t().dot(x_re) + d_yim.t().dot(x_im);
        grads.a.im = d_yim.t().dot(x_re) - d_yre.t().dot(x_im);
    }
    grads
}

/// Forward loss for a batch with fixed noise; used by training and gradient checks.
pub fn batch_loss(
    params: &AutoencoderParams,
    x_re: &Array2<f64>,
    x_im: &Array2<f64>,
    noise: Option<(&Array2<f64>, &Array2<f64>)>,
    alpha: &Array2<f64>,
) -> (f64, BatchCache) {
    let u = encode_batch(&params.a, x_re, x_im, noise);
    let cache = decode_batch(&params.w, u);
    (cross_entropy_loss(&cache.out, alpha), cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::stream_rng;
    use ndarray::array;
    use rand::Rng;

    fn random_params<R: Rng>(l: usize, q: usize, n: usize, rng: &mut R) -> AutoencoderParams {
        let mut w = DecoderParams::init(l, q, n, rng);
        w.b1.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        w.b2.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        w.b3.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        AutoencoderParams {
            a: gaussian_pilots(l, n, rng),
            w,
        }
    }

    fn random_batch<R: Rng>(b: usize, n: usize, rng: &mut R) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let alpha = Array2::from_shape_fn((b, n), |_| f64::from(u8::from(rng.gen_bool(0.3))));
        let x_re = Array2::from_shape_fn((b, n), |(i, j)| alpha[[i, j]] * rng.gen_range(-1.0..1.0));
        let x_im = Array2::from_shape_fn((b, n), |(i, j)| alpha[[i, j]] * rng.gen_range(-1.0..1.0));
        (x_re, x_im, alpha)
    }

    /// Straightforward loop implementation of the decoder used as an oracle.
    fn oracle_decoder(w: &DecoderParams, u: &[f64]) -> Vec<f64> {
        let layer = |theta: &Array2<f64>, b: &Array1<f64>, input: &[f64]| -> Vec<f64> {
            (0..theta.nrows())
                .map(|i| {
                    let mut acc = b[i];
                    for (j, v) in input.iter().enumerate() {
                        acc += theta[[i, j]] * v;
                    }
                    acc
                })
                .collect()
        };
        let h1: Vec<f64> = layer(&w.theta1, &w.b1, u).into_iter().map(|v| v.max(0.0)).collect();
        let h2: Vec<f64> = layer(&w.theta2, &w.b2, &h1).into_iter().map(|v| v.max(0.0)).collect();
        layer(&w.theta3, &w.b3, &h2)
            .into_iter()
            .map(|v| (1.0 / (1.0 + (-v).exp())).clamp(OUTPUT_CLIP, 1.0 - OUTPUT_CLIP))
            .collect()
    }

    #[test]
    fn encoder_noiseless_cases() {
        let mut rng = stream_rng(1, 0);
        let a = gaussian_pilots(3, 6, &mut rng);
        let y = encoder_forward(&a, &SplitComplexVector::zeros(6), 0.0, &mut rng).unwrap();
        assert_eq!(y, SplitComplexVector::zeros(3));
        let x = gen_channel(6, &mut rng);
        assert_eq!(
            encoder_forward(&a, &x, 0.0, &mut rng).unwrap(),
            complex_matvec(&a, &x).unwrap()
        );
    }

    #[test]
    fn encoder_noise_composes_with_generator() {
        let mut rng = stream_rng(2, 0);
        let a = gaussian_pilots(4, 8, &mut rng);
        let x = gen_channel(8, &mut rng);
        let y = encoder_forward(&a, &x, 0.1, &mut stream_rng(99, 5)).unwrap();
        let z = gen_noise(4, 0.1, &mut stream_rng(99, 5)).z;
        let expected = complex_matvec(&a, &x).unwrap().add(&z).unwrap();
        assert_eq!(y, expected);
    }

    #[test]
    fn zero_decoder_outputs_half() {
        let w = DecoderParams::zeros(3, 5, 7);
        let mut rng = stream_rng(3, 0);
        let y = gen_channel(3, &mut rng);
        let (out, _) = decoder_forward(&w, &y).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_neuron_chain() {
        let mut w = DecoderParams::zeros(1, 1, 1);
        w.theta1.fill(1.0);
        w.theta2.fill(1.0);
        w.theta3.fill(1.0);
        let y = SplitComplexVector::new(array![1.0], array![0.0]).unwrap();
        let (out, cache) = decoder_forward(&w, &y).unwrap();
        assert_eq!(cache.h1[0], 1.0);
        assert_eq!(cache.h2[0], 1.0);
        assert!((out[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        // negative input is cut by the first ReLU
        let y = SplitComplexVector::new(array![-2.0], array![0.0]).unwrap();
        assert_eq!(decoder_forward(&w, &y).unwrap().0[0], 0.5);
    }

    #[test]
    fn decoder_matches_loop_oracle() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..20 {
            let p = random_params(5, 9, 11, &mut rng);
            let y = gen_channel(5, &mut rng);
            let (out, cache) = decoder_forward(&p.w, &y).unwrap();
            let oracle = oracle_decoder(&p.w, cache.u.as_slice().unwrap());
            for (a, b) in out.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
            // the batched path agrees with the single-sample path
            let u = cache.u.clone().insert_axis(Axis(0));
            let batch = decode_batch(&p.w, u);
            for (a, b) in batch.out.row(0).iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decoder_rejects_wrong_input_length() {
        let w = DecoderParams::zeros(3, 4, 5);
        assert!(decoder_forward(&w, &SplitComplexVector::zeros(2)).is_err());
    }

    #[test]
    fn outputs_stay_inside_clip_range() {
        let mut w = DecoderParams::zeros(2, 2, 3);
        w.b3 = array![1e3, -1e3, 0.0];
        let (out, _) = decoder_forward(&w, &SplitComplexVector::zeros(2)).unwrap();
        assert_eq!(out[0], 1.0 - OUTPUT_CLIP);
        assert_eq!(out[1], OUTPUT_CLIP);
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn loss_examples() {
        let alpha = array![[1.0, 0.0], [0.0, 1.0]];
        let eps_loss = cross_entropy_loss(&alpha, &alpha);
        assert!((eps_loss - (-(1.0 - OUTPUT_CLIP).ln())).abs() < 1e-15);
        assert!((eps_loss - OUTPUT_CLIP).abs() < 1e-12);
        let half = cross_entropy_loss(&array![[0.5]], &array![[1.0]]);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);

        let pred = array![[0.9, 0.2], [0.4, 0.7]];
        let mut sum = 0.0;
        for i in 0..2 {
            for n in 0..2 {
                let (p, t): (f64, f64) = (pred[[i, n]], alpha[[i, n]]);
                sum += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            }
        }
        assert!((cross_entropy_loss(&pred, &alpha) - sum / 4.0).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let mut rng = stream_rng(5, 0);
        let a = project_pilot_power(&gaussian_pilots(4, 9, &mut rng)).unwrap();
        for n in a.column_norms() {
            assert!((n - 2.0).abs() < 1e-12);
        }
        let again = project_pilot_power(&a).unwrap();
        for (x, y) in a.re.iter().zip(again.re.iter()) {
            assert!((x - y).abs() <= 1e-15);
        }

        let mut unit = MeasurementMatrix::zeros(4, 1);
        unit.re[[0, 0]] = 0.6;
        unit.im[[2, 0]] = 0.8;
        let scaled = project_pilot_power(&unit).unwrap();
        assert!((scaled.re[[0, 0]] - 1.2).abs() < 1e-15);
        assert!((scaled.im[[2, 0]] - 1.6).abs() < 1e-15);

        let mut degenerate = a.clone();
        degenerate.re.column_mut(3).fill(0.0);
        degenerate.im.column_mut(3).fill(0.0);
        assert!(matches!(project_pilot_power(&degenerate), Err(Error::ZeroColumn(3))));
    }

    #[test]
    fn saturated_exact_outputs_have_zero_gradient() {
        let mut rng = stream_rng(6, 0);
        let mut p = random_params(3, 8, 6, &mut rng);
        // all-zero decoder weights except huge output biases matching the labels
        p.w = DecoderParams::zeros(3, 8, 6);
        p.w.b3 = array![40.0, -40.0, 40.0, -40.0, -40.0, -40.0];
        let alpha = Array2::from_shape_fn((4, 6), |(_, j)| f64::from(u8::from(p.w.b3[j] > 0.0)));
        let x_re = alpha.mapv(|a| a * 0.7);
        let x_im = alpha.mapv(|a| a * -0.2);
        let (_, cache) = batch_loss(&p, &x_re, &x_im, None, &alpha);
        let g = backward(&p, &x_re, &x_im, &alpha, &cache, false);
        assert!(g.norm_sqr().sqrt() < 1e-6);
    }

    #[test]
    fn frozen_matrix_gets_no_gradient() {
        let mut rng = stream_rng(7, 0);
        let p = random_params(3, 8, 6, &mut rng);
        let (x_re, x_im, alpha) = random_batch(5, 6, &mut rng);
        let (_, cache) = batch_loss(&p, &x_re, &x_im, None, &alpha);
        let g = backward(&p, &x_re, &x_im, &alpha, &cache, true);
        assert!(g.a.re.iter().chain(g.a.im.iter()).all(|&v| v == 0.0));
        assert!(g.w.theta1.iter().any(|&v| v != 0.0));
    }

    /// Largest relative error between analytic and central-difference gradients.
    fn gradient_check_error(seed: u64) -> f64 {
        let (l, q, n, b) = (3, 8, 6, 4);
        let mut rng = stream_rng(seed, 77);
        let mut p = random_params(l, q, n, &mut rng);
        let (x_re, x_im, alpha) = random_batch(b, n, &mut rng);
        let (z_re, z_im) = crate::datagen::gen_noise_batch(b, l, 0.1, &mut rng);
        let noise = Some((&z_re, &z_im));
        let (_, cache) = batch_loss(&p, &x_re, &x_im, noise, &alpha);
        let analytic = backward(&p, &x_re, &x_im, &alpha, &cache, false);
        let analytic: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (t, grads) in analytic.iter().enumerate() {
            for (k, &g) in grads.iter().enumerate() {
                let orig = p.slices()[t][k];
                p.slices_mut()[t][k] = orig + h;
                let plus = batch_loss(&p, &x_re, &x_im, noise, &alpha).0;
                p.slices_mut()[t][k] = orig - h;
                let minus = batch_loss(&p, &x_re, &x_im, noise, &alpha).0;
                p.slices_mut()[t][k] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let err = gradient_check_error(seed);
            assert!(err < 1e-5, "seed {seed}: relative error {err}");
        }
    }
}
