//! Gaussian-process surrogate with a fixed isotropic squared-exponential
//! kernel, and the expected-improvement acquisition.
//!
//! Targets are z-scored before fitting, so predictions are in standardized
//! units: the prior mean is 0 and the prior variance is the signal variance.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("gaussian process needs at least one training point")]
    NoData,
    #[error("inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("kernel matrix not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub jitter: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self { length_scale: 0.3, signal_variance: 1.0, jitter: 1e-6 }
    }
}

/// Jitter is multiplied by 10 up to this many times before giving up.
const JITTER_ESCALATIONS: u32 = 3;

impl GpParams {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn jitter_schedule(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=JITTER_ESCALATIONS).map(|i| self.jitter * 10f64.powi(i as i32))
    }
}

/// Mean and population standard deviation used for z-scoring. A constant
/// target vector gets scale 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(targets: &[f64]) -> Self {
        let n = targets.len().max(1) as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
        Self { mean, scale }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn stddev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    params: GpParams,
    jitter: f64,
    inputs: Vec<Vec<f64>>,
    standardizer: Standardizer,
    targets: Vec<f64>,
    lower: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GaussianProcess {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], params: GpParams) -> Result<Self, GpError> {
        if inputs.is_empty() {
            return Err(GpError::NoData);
        }
        if inputs.len() != targets.len() {
            return Err(GpError::LengthMismatch { inputs: inputs.len(), targets: targets.len() });
        }
        let n = inputs.len();
        let standardizer = Standardizer::fit(targets);
        let z: Vec<f64> = targets.iter().map(|&t| standardizer.apply(t)).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| params.kernel(&inputs[i], &inputs[j]));

        let mut last = params.jitter;
        for jitter in params.jitter_schedule() {
            last = jitter;
            let k = &gram + DMatrix::identity(n, n) * jitter;
            if let Some(chol) = k.cholesky() {
                let alpha = chol.solve(&DVector::from_column_slice(&z));
                return Ok(Self {
                    params,
                    jitter,
                    inputs: inputs.to_vec(),
                    standardizer,
                    targets: z,
                    lower: chol.unpack(),
                    alpha,
                });
            }
        }
        Err(GpError::NotPositiveDefinite(last))
    }

    pub fn params(&self) -> GpParams {
        self.params
    }

    /// Jitter that was needed to factorize the kernel matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    pub fn standardized_targets(&self) -> &[f64] {
        &self.targets
    }

    /// Posterior at `x`, in standardized units.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.params.kernel(xi, x)));
        let mean = k.dot(&self.alpha);
        let v = self.lower.solve_lower_triangular(&k).expect("cholesky factor has a non-zero diagonal");
        let variance = (self.params.signal_variance - v.norm_squared()).max(0.0);
        Prediction { mean, variance }
    }
}

/// Posterior over a fixed candidate set, updated one training point at a
/// time.
///
/// Keeps the Cholesky factor `L` of the training kernel matrix and
/// `V = L^-1 K(X, C)` for all candidates `C`. Adding a point appends one
/// row to each, so a full posterior sweep costs `O(n m)` instead of
/// `O(n^2 m)`.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    params: GpParams,
    jitter: f64,
    dims: usize,
    candidates: Vec<f64>,
    train: Vec<usize>,
    lower: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    v_sq: Vec<f64>,
}

impl GridPosterior {
    /// `candidates` is a row-major `m x dims` matrix of normalized points.
    pub fn new(params: GpParams, dims: usize, candidates: Vec<f64>) -> Self {
        assert!(dims > 0 && candidates.len().is_multiple_of(dims));
        let m = candidates.len() / dims;
        Self {
            params,
            jitter: params.jitter,
            dims,
            candidates,
            train: Vec::new(),
            lower: Vec::new(),
            v: Vec::new(),
            v_sq: vec![0.0; m],
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.v_sq.len()
    }

    pub fn candidate(&self, j: usize) -> &[f64] {
        &self.candidates[j * self.dims..(j + 1) * self.dims]
    }

    pub fn training(&self) -> &[usize] {
        &self.train
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Adds candidate `j` as a training input.
    pub fn add(&mut self, j: usize) -> Result<(), GpError> {
        self.train.push(j);
        if self.extend(j) {
            return Ok(());
        }
        let schedule: Vec<f64> = self.params.jitter_schedule().filter(|&e| e > self.jitter).collect();
        for jitter in schedule {
            self.jitter = jitter;
            if self.rebuild() {
                return Ok(());
            }
        }
        self.train.pop();
        self.jitter = self.params.jitter;
        self.rebuild();
        Err(GpError::NotPositiveDefinite(self.jitter * 10f64.powi(JITTER_ESCALATIONS as i32)))
    }

    fn rebuild(&mut self) -> bool {
        let train = std::mem::take(&mut self.train);
        self.lower.clear();
        self.v.clear();
        self.v_sq.iter_mut().for_each(|s| *s = 0.0);
        for &j in &train {
            self.train.push(j);
            if !self.extend(j) {
                self.train = train;
                return false;
            }
        }
        true
    }

    /// Appends the last training point to `L` and `V`. Returns false if the
    /// new pivot is not positive.
    fn extend(&mut self, j: usize) -> bool {
        let n = self.lower.len();
        let x = self.candidate(j).to_vec();
        let k: Vec<f64> = self.train[..n].iter().map(|&t| self.params.kernel(self.candidate(t), &x)).collect();
        let l = forward_solve(&self.lower, &k);
        let pivot2 = self.params.signal_variance + self.jitter - l.iter().map(|v| v * v).sum::<f64>();
        if !(pivot2 > 0.0) || !pivot2.is_finite() {
            return false;
        }
        let pivot = pivot2.sqrt();

        let m = self.candidate_count();
        let mut row: Vec<f64> = (0..m).map(|c| self.params.kernel(self.candidate(c), &x)).collect();
        for (li, vi) in l.iter().zip(&self.v) {
            for (r, v) in row.iter_mut().zip(vi) {
                *r -= li * v;
            }
        }
        for (r, s) in row.iter_mut().zip(self.v_sq.iter_mut()) {
            *r /= pivot;
            *s += *r * *r;
        }
        let mut lrow = l;
        lrow.push(pivot);
        self.lower.push(lrow);
        self.v.push(row);
        true
    }

    /// Posterior mean and variance at every candidate for standardized
    /// targets given in training order.
    pub fn predict_all(&self, targets: &[f64]) -> Vec<Prediction> {
        assert_eq!(targets.len(), self.train.len());
        let w = forward_solve(&self.lower, targets);
        let mut means = vec![0.0; self.candidate_count()];
        for (wi, vi) in w.iter().zip(&self.v) {
            for (m, v) in means.iter_mut().zip(vi) {
                *m += wi * v;
            }
        }
        means
            .into_iter()
            .zip(&self.v_sq)
            .map(|(mean, s)| Prediction { mean, variance: (self.params.signal_variance - s).max(0.0) })
            .collect()
    }
}

/// Solves `L x = b` for a lower-triangular `L` stored as ragged rows.
fn forward_solve(lower: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(lower.len());
    for (i, row) in lower.iter().enumerate() {
        let s: f64 = row[..i].iter().zip(&x).map(|(l, x)| l * x).sum();
        x.push((b[i] - s) / row[i]);
    }
    x
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` (minimization).
pub fn expected_improvement(mean: f64, stddev: f64, best: f64) -> f64 {
    let gain = best - mean;
    if !(stddev > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / stddev;
    (gain * std_normal_cdf(z) + stddev * std_normal_pdf(z)).max(0.0)
}
