//! Split-complex value types shared across the crate.
//!
//! Complex quantities are carried as a pair of real arrays so that the
//! encoder can be expressed as real linear maps and trained with ordinary
//! real-valued backpropagation.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_len, Error, Result};

/// A complex vector stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitComplexVector {
    pub re: Array1<f64>,
    pub im: Array1<f64>,
}

impl SplitComplexVector {
    pub fn new(re: Array1<f64>, im: Array1<f64>) -> Result<Self> {
        check_len("SplitComplexVector imaginary part", re.len(), im.len())?;
        Ok(Self { re, im })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            re: Array1::zeros(n),
            im: Array1::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.re[k].hypot(self.im[k])
    }

    pub fn magnitudes(&self) -> Array1<f64> {
        self.re
            .iter()
            .zip(self.im.iter())
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }

    /// Squared Euclidean norm.
    pub fn norm_sqr(&self) -> f64 {
        self.re.dot(&self.re) + self.im.dot(&self.im)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_len("SplitComplexVector add", self.len(), other.len())?;
        Ok(Self {
            re: &self.re + &other.re,
            im: &self.im + &other.im,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_len("SplitComplexVector sub", self.len(), other.len())?;
        Ok(Self {
            re: &self.re - &other.re,
            im: &self.im - &other.im,
        })
    }
}

/// Learnable complex `L x N` measurement (pilot) matrix.
///
/// Column `n` is the pilot sequence of device `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl MeasurementMatrix {
    pub fn new(re: Array2<f64>, im: Array2<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::InvalidInput(format!(
                "real part is {:?} but imaginary part is {:?}",
                re.dim(),
                im.dim()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            re: Array2::zeros((rows, cols)),
            im: Array2::zeros((rows, cols)),
        }
    }

    /// Number of measurements `L`.
    pub fn rows(&self) -> usize {
        self.re.nrows()
    }

    /// Signal dimension `N`.
    pub fn cols(&self) -> usize {
        self.re.ncols()
    }

    /// Euclidean norm of complex column `n`.
    pub fn column_norm(&self, n: usize) -> f64 {
        column_energy(self.re.column(n), self.im.column(n)).sqrt()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols()).map(|n| self.column_norm(n)).collect()
    }

    /// `a_n^H v` for a length-`L` vector `v`, returned as `(re, im)`.
    pub fn column_inner(&self, n: usize, v_re: &[f64], v_im: &[f64]) -> (f64, f64) {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for l in 0..self.rows() {
            let (ar, ai) = (self.re[[l, n]], self.im[[l, n]]);
            // conj(a) * v
            acc_re += ar * v_re[l] + ai * v_im[l];
            acc_im += ar * v_im[l] - ai * v_re[l];
        }
        (acc_re, acc_im)
    }

    /// `A^H v`.
    pub fn adjoint_matvec(&self, v: &SplitComplexVector) -> Result<SplitComplexVector> {
        check_len("adjoint_matvec input", self.rows(), v.len())?;
        // A^H v = (Re A^T - i Im A^T)(v_re + i v_im)
        let re = self.re.t().dot(&v.re) + self.im.t().dot(&v.im);
        let im = self.re.t().dot(&v.im) - self.im.t().dot(&v.re);
        Ok(SplitComplexVector { re, im })
    }
}

fn column_energy(re: ArrayView1<f64>, im: ArrayView1<f64>) -> f64 {
    re.dot(&re) + im.dot(&im)
}

/// `A x` computed through the two real relations
/// `Re(y) = Re(A)Re(x) - Im(A)Im(x)` and `Im(y) = Im(A)Re(x) + Re(A)Im(x)`.
pub fn complex_matvec(a: &MeasurementMatrix, x: &SplitComplexVector) -> Result<SplitComplexVector> {
    check_len("complex_matvec input", a.cols(), x.len())?;
    let re = a.re.dot(&x.re) - a.im.dot(&x.im);
    let im = a.im.dot(&x.re) + a.re.dot(&x.im);
    Ok(SplitComplexVector { re, im })
}

/// Binary support indicator: `1` where `|x_n| > tol`.
pub fn support_of(x: &SplitComplexVector, tol: f64) -> Vec<u8> {
    (0..x.len()).map(|k| u8::from(x.magnitude(k) > tol)).collect()
}

/// One `(x, alpha)` training/evaluation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: SplitComplexVector,
    pub alpha: Vec<u8>,
}

impl Sample {
    pub fn new(x: SplitComplexVector, alpha: Vec<u8>) -> Result<Self> {
        check_len("Sample support", x.len(), alpha.len())?;
        Ok(Self { x, alpha })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    pub fn tag(self) -> u64 {
        match self {
            Role::Train => 1,
            Role::Validation => 2,
            Role::Test => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub role: Role,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, role: Role) -> Result<Self> {
        if let Some(first) = samples.first() {
            let n = first.len();
            for s in &samples {
                check_len("Dataset sample dimension", n, s.len())?;
            }
        }
        Ok(Self { samples, role })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Signal dimension, or 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Sample::len)
    }

    /// Stack the rows `indices` into `(Re X, Im X, alpha)` batch matrices.
    pub fn batch(&self, indices: &[usize]) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let n = self.dim();
        let mut re = Array2::zeros((indices.len(), n));
        let mut im = Array2::zeros((indices.len(), n));
        let mut alpha = Array2::zeros((indices.len(), n));
        for (row, &i) in indices.iter().enumerate() {
            let s = &self.samples[i];
            re.row_mut(row).assign(&s.x.re);
            im.row_mut(row).assign(&s.x.im);
            for (dst, &a) in alpha.row_mut(row).iter_mut().zip(&s.alpha) {
                *dst = f64::from(a);
            }
        }
        (re, im, alpha)
    }
}
