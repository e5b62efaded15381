//! Exact GP posterior with an incrementally extended Cholesky factor.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::cholesky::LowerFactor;
use super::{GpError, KernelParams};

/// Default FIFO cap on the number of training points held by one GP.
pub const DEFAULT_CAPACITY: usize = 2000;

const JITTER_START: f64 = 1e-9;
const JITTER_MAX: f64 = 1e-3;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Training inputs `X` and outputs `y`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self, GpError> {
        let set = Self { inputs, outputs };
        set.validate(None)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.inputs.push(x);
        self.outputs.push(y);
    }

    pub(crate) fn validate(&self, dim: Option<usize>) -> Result<(), GpError> {
        if self.inputs.len() != self.outputs.len() {
            return Err(GpError::LengthMismatch {
                inputs: self.inputs.len(),
                outputs: self.outputs.len(),
            });
        }
        let dim = dim.or(self.dim());
        for x in &self.inputs {
            check_input(x, dim)?;
        }
        if self.outputs.iter().any(|y| !y.is_finite()) {
            return Err(GpError::NonFinite("training output"));
        }
        Ok(())
    }
}

fn check_input(x: &[f64], dim: Option<usize>) -> Result<(), GpError> {
    if let Some(d) = dim {
        if x.len() != d {
            return Err(GpError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite("input"));
    }
    Ok(())
}

/// Prior mean function μ(x).
#[derive(Clone, Default)]
pub enum PriorMean {
    #[default]
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl PriorMean {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
            PriorMean::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for PriorMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorMean::Zero => write!(f, "Zero"),
            PriorMean::Constant(c) => write!(f, "Constant({c})"),
            PriorMean::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Posterior predictive distribution of a noisy observation at one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Includes the observation noise ω².
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Exact GP regression model.
///
/// Mutating methods consume `self` and hand back the updated model, so a
/// model value never changes underneath a reader.
#[derive(Clone, Debug)]
pub struct GpModel {
    params: KernelParams,
    prior: PriorMean,
    data: TrainingSet,
    /// `y - μ(X)`.
    centered: Vec<f64>,
    factor: LowerFactor,
    /// `L⁻¹·(y - μ(X))`.
    z: Vec<f64>,
    alpha: OnceLock<Vec<f64>>,
    jitter: f64,
    capacity: Option<usize>,
    generation: u64,
    output_version: u64,
}

impl GpModel {
    /// A model with no data, zero prior mean and the default capacity.
    pub fn new(params: KernelParams) -> Result<Self, GpError> {
        params.validate()?;
        Ok(Self {
            params,
            prior: PriorMean::Zero,
            data: TrainingSet::default(),
            centered: Vec::new(),
            factor: LowerFactor::default(),
            z: Vec::new(),
            alpha: OnceLock::new(),
            jitter: 0.0,
            capacity: Some(DEFAULT_CAPACITY),
            generation: next_generation(),
            output_version: 0,
        })
    }

    /// Batch fit on `data`.
    pub fn fit(params: KernelParams, data: TrainingSet) -> Result<Self, GpError> {
        Self::new(params)?.with_data(data)
    }

    pub fn with_prior(mut self, prior: PriorMean) -> Self {
        self.prior = prior;
        self.recenter();
        self
    }

    /// `None` disables eviction.
    pub fn with_capacity(mut self, capacity: Option<usize>) -> Result<Self, GpError> {
        self.capacity = capacity.map(|c| c.max(1));
        self.enforce_capacity()?;
        Ok(self)
    }

    /// Replaces the training data and refactors.
    pub fn with_data(mut self, data: TrainingSet) -> Result<Self, GpError> {
        data.validate(Some(self.params.dim()))?;
        self.data = data;
        self.enforce_capacity()?;
        self.refactor(0.0)?;
        Ok(self)
    }

    /// Replaces the hyperparameters and refactors on the existing data.
    pub fn with_params(mut self, params: KernelParams) -> Result<Self, GpError> {
        params.validate()?;
        if params.dim() != self.params.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.params.dim(),
                got: params.dim(),
            });
        }
        self.params = params;
        self.refactor(0.0)?;
        Ok(self)
    }

    /// Replaces the outputs while keeping inputs (and thus the factor).
    pub fn with_outputs(mut self, outputs: Vec<f64>) -> Result<Self, GpError> {
        if outputs.len() != self.data.len() {
            return Err(GpError::LengthMismatch {
                inputs: self.data.len(),
                outputs: outputs.len(),
            });
        }
        if outputs.iter().any(|y| !y.is_finite()) {
            return Err(GpError::NonFinite("training output"));
        }
        self.data.outputs = outputs;
        self.recenter();
        Ok(self)
    }

    /// Adds observations. Predictions afterwards equal a batch fit on the
    /// concatenated data.
    pub fn update(mut self, batch: &[(Vec<f64>, f64)]) -> Result<Self, GpError> {
        for (x, y) in batch {
            self.push(x.clone(), *y)?;
        }
        Ok(self)
    }

    /// In-place single-observation update; the owning equivalent of
    /// [`GpModel::update`] for agent loops that hold the model mutably.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<(), GpError> {
        check_input(&x, Some(self.params.dim()))?;
        if !y.is_finite() {
            return Err(GpError::NonFinite("training output"));
        }
        if let Some(cap) = self.capacity {
            if self.data.len() + 1 > cap {
                self.data.push(x, y);
                self.enforce_capacity()?;
                return self.refactor(self.jitter);
            }
        }
        let cross: Vec<f64> = self
            .data
            .inputs
            .iter()
            .map(|xi| self.params.cov_unchecked(&x, xi))
            .collect();
        let diag = self.params.signal_var() + self.params.noise_var + self.jitter;
        let c = y - self.prior.eval(&x);
        self.data.push(x, y);
        self.centered.push(c);
        match self.factor.push(&cross, diag) {
            Ok(row) => {
                let n = row.len() - 1;
                let s: f64 = row[..n].iter().zip(&self.z).map(|(l, z)| l * z).sum();
                self.z.push((c - s) / row[n]);
                self.alpha = OnceLock::new();
                Ok(())
            }
            Err(_) => {
                let start = if self.jitter == 0.0 {
                    JITTER_START * (self.params.signal_var() + self.params.noise_var)
                } else {
                    self.jitter * 10.0
                };
                self.refactor(start)
            }
        }
    }

    fn enforce_capacity(&mut self) -> Result<(), GpError> {
        if let Some(cap) = self.capacity {
            if self.data.len() > cap {
                // Evict down to 90% of the cap so refactorizations are amortized.
                let keep = if cap >= 10 { cap - cap / 10 } else { cap };
                let drop = self.data.len() - keep;
                self.data.inputs.drain(..drop);
                self.data.outputs.drain(..drop);
            }
        }
        Ok(())
    }

    fn recenter(&mut self) {
        self.centered = self
            .data
            .inputs
            .iter()
            .zip(&self.data.outputs)
            .map(|(x, y)| y - self.prior.eval(x))
            .collect();
        self.z = self.factor.solve_lower(&self.centered);
        self.alpha = OnceLock::new();
        self.output_version += 1;
    }

    /// Full refactorization, escalating jitter from `start` when needed.
    fn refactor(&mut self, start: f64) -> Result<(), GpError> {
        let mean_diag = self.params.signal_var() + self.params.noise_var;
        let mut jitter = start;
        loop {
            let base = self.params.signal_var() + self.params.noise_var + jitter;
            let inputs = &self.data.inputs;
            let params = &self.params;
            let attempt = LowerFactor::decompose(inputs.len(), |i, j| {
                if i == j {
                    base
                } else {
                    params.cov_unchecked(&inputs[i], &inputs[j])
                }
            });
            match attempt {
                Ok(f) => {
                    self.factor = f;
                    self.jitter = jitter;
                    self.generation = next_generation();
                    self.recenter();
                    return Ok(());
                }
                Err(_) => {
                    jitter = if jitter == 0.0 {
                        JITTER_START * mean_diag
                    } else {
                        jitter * 10.0
                    };
                    if jitter > JITTER_MAX * mean_diag * (1.0 + 1e-9) {
                        return Err(GpError::IllConditioned { jitter });
                    }
                }
            }
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn prior(&self) -> &PriorMean {
        &self.prior
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub(crate) fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub(crate) fn z(&self) -> &[f64] {
        &self.z
    }

    pub(crate) fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn output_version(&self) -> u64 {
        self.output_version
    }

    /// `[K + ω²I + jitter·I]⁻¹·(y − μ(X))`.
    pub fn alpha(&self) -> &[f64] {
        self.alpha.get_or_init(|| self.factor.solve_upper(&self.z))
    }

    fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .inputs
            .iter()
            .map(|xi| self.params.cov_unchecked(x, xi))
            .collect()
    }

    /// Posterior predictive mean and variance (noise included).
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        check_input(x, Some(self.params.dim()))?;
        let k = self.cross_cov(x);
        let mean = self.prior.eval(x) + k.iter().zip(self.alpha()).map(|(a, b)| a * b).sum::<f64>();
        let v = self.factor.solve_lower(&k);
        let explained: f64 = v.iter().map(|t| t * t).sum();
        let latent = (self.params.signal_var() - explained).max(0.0);
        Ok(Prediction {
            mean,
            variance: latent + self.params.noise_var,
        })
    }

    /// Posterior mean only; O(n) instead of O(n²).
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64, GpError> {
        check_input(x, Some(self.params.dim()))?;
        let alpha = self.alpha();
        let mut m = self.prior.eval(x);
        for (xi, a) in self.data.inputs.iter().zip(alpha) {
            m += self.params.cov_unchecked(x, xi) * a;
        }
        Ok(m)
    }

    /// Relative Frobenius error of `L·Lᵀ` against `K + (ω² + jitter)·I`.
    pub fn factor_reconstruction_error(&self) -> f64 {
        let n = self.len();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (self.factor.row(i), self.factor.row(j));
                let llt: f64 = (0..=j).map(|k| ri[k] * rj[k]).sum();
                let mut k = self.params.cov_unchecked(&self.data.inputs[i], &self.data.inputs[j]);
                if i == j {
                    k += self.params.noise_var + self.jitter;
                }
                let w = if i == j { 1.0 } else { 2.0 };
                num += w * (llt - k) * (llt - k);
                den += w * k * k;
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params1d(noise: f64) -> KernelParams {
        KernelParams::isotropic(1.0, 0.8, 1, noise).unwrap()
    }

    #[test]
    fn empty_model_predicts_prior() {
        let m = GpModel::new(params1d(0.01)).unwrap();
        let p = m.predict(&[3.0]).unwrap();
        assert_eq!(p.mean, 0.0);
        assert!((p.variance - 1.01).abs() < 1e-15);

        let m = m.with_prior(PriorMean::Constant(2.5));
        let p = m.predict(&[-7.0]).unwrap();
        assert_eq!(p.mean, 2.5);
    }

    #[test]
    fn noise_free_interpolation() {
        let data = TrainingSet::new(vec![vec![0.0], vec![1.0], vec![2.5]], vec![0.3, -1.0, 2.0]).unwrap();
        let m = GpModel::fit(params1d(0.0), data).unwrap();
        for (x, y) in [(0.0, 0.3), (1.0, -1.0), (2.5, 2.0)] {
            let p = m.predict(&[x]).unwrap();
            assert!((p.mean - y).abs() < 1e-6);
            assert!(p.variance <= 1e-6);
        }
    }

    #[test]
    fn duplicate_inputs_without_noise_get_jitter() {
        let data = TrainingSet::new(vec![vec![1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let m = GpModel::fit(params1d(0.0), data).unwrap();
        assert!(m.jitter() > 0.0);
        assert!(m.factor_reconstruction_error() < 1e-8);
        assert!((m.predict(&[1.0]).unwrap().mean - 0.5).abs() < 1e-4);
    }

    #[test]
    fn update_matches_batch_fit() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.7 - 1.0, (i * i) as f64 * 0.1]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin() + x[1]).collect();
        let p = KernelParams::new(1.3, vec![0.9, 1.7], 0.05).unwrap();
        let batch = GpModel::fit(p.clone(), TrainingSet::new(xs.clone(), ys.clone()).unwrap()).unwrap();
        let pairs: Vec<_> = xs.into_iter().zip(ys).collect();
        let inc = GpModel::new(p).unwrap().update(&pairs).unwrap();
        for i in 0..20 {
            let q = [i as f64 * 0.31 - 3.0, (i % 7) as f64 * 0.2];
            let (a, b) = (batch.predict(&q).unwrap(), inc.predict(&q).unwrap());
            assert!((a.mean - b.mean).abs() < 1e-8);
            assert!((a.variance - b.variance).abs() < 1e-8);
        }
    }

    #[test]
    fn update_on_empty_equals_single_fit() {
        let p = params1d(0.1);
        let a = GpModel::new(p.clone()).unwrap().update(&[(vec![0.4], 1.0)]).unwrap();
        let b = GpModel::fit(p, TrainingSet::new(vec![vec![0.4]], vec![1.0]).unwrap()).unwrap();
        let (pa, pb) = (a.predict(&[1.0]).unwrap(), b.predict(&[1.0]).unwrap());
        assert_eq!(pa, pb);
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut m = GpModel::new(params1d(0.1)).unwrap().with_capacity(Some(20)).unwrap();
        for i in 0..25 {
            m.push(vec![i as f64], i as f64).unwrap();
        }
        assert!(m.len() <= 20);
        assert_eq!(*m.data().outputs.last().unwrap(), 24.0);
        assert!(m.data().outputs[0] > 0.0);
        assert!(m.factor_reconstruction_error() < 1e-8);
    }

    #[test]
    fn with_outputs_keeps_inputs() {
        let data = TrainingSet::new(vec![vec![0.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        let m = GpModel::fit(params1d(0.01), data).unwrap();
        let m2 = m.clone().with_outputs(vec![2.0, 4.0]).unwrap();
        let (a, b) = (m.predict(&[0.5]).unwrap(), m2.predict(&[0.5]).unwrap());
        assert!((2.0 * a.mean - b.mean).abs() < 1e-12);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn non_finite_query_is_rejected() {
        let m = GpModel::new(params1d(0.01)).unwrap();
        assert!(matches!(m.predict(&[f64::NAN]), Err(GpError::NonFinite(_))));
    }

    #[test]
    fn predict_mean_agrees_with_predict() {
        let data = TrainingSet::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![1.0, 2.0, -1.0]).unwrap();
        let m = GpModel::fit(params1d(0.02), data).unwrap().with_prior(PriorMean::Constant(0.5));
        for q in [-1.0, 0.5, 2.0] {
            assert!((m.predict(&[q]).unwrap().mean - m.predict_mean(&[q]).unwrap()).abs() < 1e-12);
        }
    }
}
