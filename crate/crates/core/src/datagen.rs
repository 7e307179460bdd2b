//! Activity patterns, Rayleigh channels and AWGN for the three access models,
//! plus dataset assembly and the `.ssup` dataset file format.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Role, Sample, SplitComplexVector};

/// Device activity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ActivityCase {
    /// Every device active independently with probability `p`.
    Iid,
    /// Two equal halves with access probabilities `p1`, `p2`, `p1 / p2 = ratio_p1_p2`.
    TwoGroup { ratio_p1_p2: f64 },
    /// `group_count` contiguous groups; a group wakes with probability `p / p_u`
    /// and each device of an awake group is then active with probability `p_u`.
    GroupCorrelated { p_u: f64, group_count: usize },
}

impl ActivityCase {
    pub fn id(&self) -> u32 {
        match self {
            ActivityCase::Iid => 1,
            ActivityCase::TwoGroup { .. } => 2,
            ActivityCase::GroupCorrelated { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of devices `N`.
    pub n: usize,
    /// Pilot length `L`.
    pub l: usize,
    #[serde(flatten)]
    pub case: ActivityCase,
    /// Marginal access probability.
    pub p: f64,
    /// Noise variance of each complex measurement.
    pub sigma2: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn iid(n: usize, l: usize, p: f64, sigma2: f64, seed: u64) -> Self {
        Self {
            n,
            l,
            case: ActivityCase::Iid,
            p,
            sigma2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if self.l == 0 || self.l >= self.n {
            return bad(format!("pilot length L={} must satisfy 1 <= L < N={}", self.l, self.n));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("access probability p={} outside [0,1]", self.p));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("noise variance {} must be positive", self.sigma2));
        }
        match self.case {
            ActivityCase::Iid => {}
            ActivityCase::TwoGroup { ratio_p1_p2 } => {
                if self.n % 2 != 0 {
                    return bad(format!("two-group case needs even N, got {}", self.n));
                }
                if !(ratio_p1_p2 > 0.0 && ratio_p1_p2.is_finite()) {
                    return bad(format!("ratio p1/p2={ratio_p1_p2} must be positive"));
                }
                let (p1, p2) = self.group_probabilities().unwrap();
                if p1 > 1.0 || p2 > 1.0 {
                    return bad(format!("group probabilities ({p1}, {p2}) exceed 1"));
                }
            }
            ActivityCase::GroupCorrelated { p_u, group_count } => {
                if group_count == 0 || self.n % group_count != 0 {
                    return bad(format!("group count {group_count} must divide N={}", self.n));
                }
                if !(p_u > 0.0 && p_u <= 1.0) {
                    return bad(format!("conditional access probability p_u={p_u} outside (0,1]"));
                }
                let p_g = self.p / p_u;
                if p_g > 1.0 {
                    return bad(format!("group probability p/p_u={p_g} exceeds 1"));
                }
            }
        }
        Ok(())
    }

    /// `(p1, p2)` for the two-group case.
    pub fn group_probabilities(&self) -> Option<(f64, f64)> {
        match self.case {
            ActivityCase::TwoGroup { ratio_p1_p2 } => {
                let p2 = 2.0 * self.p / (1.0 + ratio_p1_p2);
                Some((ratio_p1_p2 * p2, p2))
            }
            _ => None,
        }
    }

    /// Contiguous group size for the group-correlated case.
    pub fn group_size(&self) -> Option<usize> {
        match self.case {
            ActivityCase::GroupCorrelated { group_count, .. } => Some(self.n / group_count),
            _ => None,
        }
    }
}

/// Independent RNG stream derived from `(seed, tag)`.
///
/// Different tags select different ChaCha streams under the same key, so
/// streams never overlap.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Stream tags used across the crate.
pub mod streams {
    pub const TRAIN_NOISE: u64 = 11;
    pub const VALIDATION_NOISE: u64 = 12;
    pub const TEST_NOISE: u64 = 13;
    pub const DECODER_INIT: u64 = 20;
    pub const SHUFFLE: u64 = 21;
    pub const PILOTS: u64 = 30;
    pub const CALIBRATION: u64 = 40;
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

pub fn gen_activity<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<u8>> {
    cfg.validate()?;
    let n = cfg.n;
    let alpha = match cfg.case {
        ActivityCase::Iid => (0..n).map(|_| u8::from(bernoulli(rng, cfg.p))).collect(),
        ActivityCase::TwoGroup { .. } => {
            let (p1, p2) = cfg.group_probabilities().unwrap();
            (0..n)
                .map(|k| u8::from(bernoulli(rng, if k < n / 2 { p1 } else { p2 })))
                .collect()
        }
        ActivityCase::GroupCorrelated { p_u, group_count } => {
            let p_g = cfg.p / p_u;
            let size = n / group_count;
            let mut alpha = Vec::with_capacity(n);
            for _ in 0..group_count {
                let awake = bernoulli(rng, p_g);
                for _ in 0..size {
                    let on = bernoulli(rng, p_u);
                    alpha.push(u8::from(awake && on));
                }
            }
            alpha
        }
    };
    Ok(alpha)
}

/// i.i.d. `CN(0, 1)` entries.
pub fn gen_channel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SplitComplexVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = Array1::from_shape_fn(n, |_| s * rng.sample::<f64, _>(StandardNormal));
    let im = Array1::from_shape_fn(n, |_| s * rng.sample::<f64, _>(StandardNormal));
    SplitComplexVector { re, im }
}

pub fn gen_sample<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Sample> {
    let alpha = gen_activity(cfg, rng)?;
    let h = gen_channel(cfg.n, rng);
    Ok(sample_from_parts(alpha, &h))
}

pub(crate) fn sample_from_parts(alpha: Vec<u8>, h: &SplitComplexVector) -> Sample {
    let mask = Array1::from_iter(alpha.iter().map(|&a| f64::from(a)));
    let x = SplitComplexVector {
        re: &h.re * &mask,
        im: &h.im * &mask,
    };
    Sample { x, alpha }
}

/// One draw of `CN(0, sigma2 I_L)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub z: SplitComplexVector,
}

pub fn gen_noise<R: Rng + ?Sized>(l: usize, sigma2: f64, rng: &mut R) -> NoiseDraw {
    let s = (sigma2 / 2.0).sqrt();
    let re = Array1::from_shape_fn(l, |_| s * rng.sample::<f64, _>(StandardNormal));
    let im = Array1::from_shape_fn(l, |_| s * rng.sample::<f64, _>(StandardNormal));
    NoiseDraw {
        z: SplitComplexVector { re, im },
    }
}

/// `rows` consecutive [`gen_noise`] draws stacked into `(Re Z, Im Z)`.
pub fn gen_noise_batch<R: Rng + ?Sized>(
    rows: usize,
    l: usize,
    sigma2: f64,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    let mut re = Array2::zeros((rows, l));
    let mut im = Array2::zeros((rows, l));
    for r in 0..rows {
        let draw = gen_noise(l, sigma2, rng);
        re.row_mut(r).assign(&draw.z.re);
        im.row_mut(r).assign(&draw.z.im);
    }
    (re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl DatasetSizes {
    pub const PAPER_CASES_1_2: Self = Self {
        train: 450_000,
        validation: 50_000,
        test: 10_000,
    };
    pub const PAPER_CASE_3: Self = Self {
        train: 90_000,
        validation: 10_000,
        test: 100_000,
    };
    pub const DESK: Self = Self {
        train: 50_000,
        validation: 5_000,
        test: 10_000,
    };

    pub fn paper(case: &ActivityCase) -> Self {
        match case {
            ActivityCase::GroupCorrelated { .. } => Self::PAPER_CASE_3,
            _ => Self::PAPER_CASES_1_2,
        }
    }
}

pub fn gen_dataset(cfg: &ScenarioConfig, role: Role, count: usize) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, role.tag());
    let samples = (0..count)
        .map(|_| gen_sample(cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, role)
}

/// Train, validation and test sets, each from its own stream.
pub fn build_datasets(cfg: &ScenarioConfig, sizes: DatasetSizes) -> Result<[Dataset; 3]> {
    if sizes.train == 0 || sizes.validation == 0 || sizes.test == 0 {
        return Err(Error::InvalidConfig(format!("dataset sizes must be positive: {sizes:?}")));
    }
    Ok([
        gen_dataset(cfg, Role::Train, sizes.train)?,
        gen_dataset(cfg, Role::Validation, sizes.validation)?,
        gen_dataset(cfg, Role::Test, sizes.test)?,
    ])
}

const SSUP_MAGIC: &[u8; 5] = b"SSUP1";

/// Write a dataset as `SSUP1 | N | count | case` (u32 LE) followed by
/// per-sample `N` interleaved `(re, im)` f64 LE pairs and `N` support bytes.
pub fn write_ssup<W: Write>(mut w: W, data: &Dataset, case_id: u32) -> Result<()> {
    let n = data.dim();
    w.write_all(SSUP_MAGIC)?;
    for v in [n as u32, data.len() as u32, case_id] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(n * 17);
    for s in &data.samples {
        buf.clear();
        for k in 0..n {
            buf.extend_from_slice(&s.x.re[k].to_le_bytes());
            buf.extend_from_slice(&s.x.im[k].to_le_bytes());
        }
        buf.extend_from_slice(&s.alpha);
        w.write_all(&buf)?;
    }
    Ok(())
}

fn parse_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Parse {
        format: "SSUP1",
        field,
        reason: reason.into(),
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], field: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => parse_err(field, "file truncated"),
        _ => Error::Io(e),
    })
}

/// Read a `.ssup` dataset, returning it with its stored case id.
pub fn read_ssup<R: Read>(mut r: R, role: Role) -> Result<(Dataset, u32)> {
    let mut magic = [0u8; 5];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != SSUP_MAGIC {
        return Err(parse_err("magic", format!("expected SSUP1, found {magic:?}")));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 3];
    for (slot, field) in header.iter_mut().zip(["N", "count", "case"]) {
        read_exact_or(&mut r, &mut word, field)?;
        *slot = u32::from_le_bytes(word);
    }
    let [n, count, case_id] = header.map(|v| v as usize);
    if !(1..=3).contains(&case_id) {
        return Err(parse_err("case", format!("unknown case id {case_id}")));
    }
    let mut record = vec![0u8; n * 17];
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        read_exact_or(&mut r, &mut record, "sample")?;
        let f = |k: usize| f64::from_le_bytes(record[8 * k..8 * k + 8].try_into().unwrap());
        let re = Array1::from_shape_fn(n, |k| f(2 * k));
        let im = Array1::from_shape_fn(n, |k| f(2 * k + 1));
        let alpha = record[16 * n..].to_vec();
        if alpha.iter().any(|&a| a > 1) {
            return Err(parse_err("alpha", "support byte is not 0 or 1"));
        }
        samples.push(Sample {
            x: SplitComplexVector { re, im },
            alpha,
        });
    }
    Ok((Dataset::new(samples, role)?, case_id as u32))
}
