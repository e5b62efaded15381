//! Negative log marginal likelihood, its gradient in log-parameter space, and
//! a deterministic gradient-descent fit of the kernel hyperparameters.

use std::f64::consts::PI;

use super::{GpError, GpModel, KernelParams, TrainingSet};

/// Floor applied to ω² before taking its logarithm.
pub const MIN_NOISE_VAR: f64 = 1e-10;

const LOG_BOUND: f64 = 20.0;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 2.0;

/// Default iteration budget for [`fit_hyperparameters`].
pub const DEFAULT_BUDGET: usize = 100;

/// Negative log marginal likelihood of `data` under a zero-mean GP.
pub fn nlml(data: &TrainingSet, params: &KernelParams) -> Result<f64, GpError> {
    if data.is_empty() {
        return Err(GpError::InsufficientData { needed: 1, got: 0 });
    }
    let model = GpModel::fit(params.clone(), data.clone())?.with_capacity(None)?;
    Ok(nlml_of(&model))
}

fn nlml_of(model: &GpModel) -> f64 {
    let n = model.len() as f64;
    let fit: f64 = model.z().iter().map(|z| z * z).sum();
    0.5 * fit + 0.5 * model.factor().log_det() + 0.5 * n * (2.0 * PI).ln()
}

/// Gradient of [`nlml`] with respect to `(ln σ, ln l_1..ln l_D, ln ω²)`.
pub fn nlml_gradient(data: &TrainingSet, params: &KernelParams) -> Result<Vec<f64>, GpError> {
    if data.is_empty() {
        return Err(GpError::InsufficientData { needed: 1, got: 0 });
    }
    let model = GpModel::fit(params.clone(), data.clone())?.with_capacity(None)?;
    Ok(gradient_of(&model))
}

fn gradient_of(model: &GpModel) -> Vec<f64> {
    let params = model.params();
    let x = &model.data().inputs;
    let n = x.len();
    let dim = params.dim();
    let alpha = model.alpha();
    let inv = model.factor().inverse();
    let mut grad = vec![0.0; dim + 2];
    for i in 0..n {
        for k in 0..n {
            let w = inv[i][k] - alpha[i] * alpha[k];
            let kf = params.cov_unchecked(&x[i], &x[k]);
            grad[0] += w * 2.0 * kf;
            for d in 0..dim {
                let diff = (x[i][d] - x[k][d]) / params.lengthscales[d];
                grad[1 + d] += w * kf * diff * diff;
            }
            if i == k {
                grad[dim + 1] += w * params.noise_var;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);
    grad
}

/// Outcome of a hyperparameter fit.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperFit {
    pub params: KernelParams,
    pub nlml: f64,
    pub initial_nlml: f64,
    pub iterations: usize,
    /// All inputs coincide; `params` is the initial guess with the noise
    /// raised to the output variance.
    pub degenerate: bool,
}

/// Minimizes the NLML by gradient descent with backtracking in log space.
///
/// Deterministic for fixed `data`, `init` and `budget`. The returned NLML
/// never exceeds the NLML at `init`; a budget of zero returns `init`.
pub fn fit_hyperparameters(data: &TrainingSet, init: &KernelParams, budget: usize) -> Result<HyperFit, GpError> {
    fit_hyperparameters_masked(data, init, budget, &vec![true; init.dim() + 2])
}

/// [`fit_hyperparameters`] over a subset of the parameters. `free` follows
/// the order σ, l_1..l_d, ω²; fixed entries keep their `init` values.
pub fn fit_hyperparameters_masked(
    data: &TrainingSet,
    init: &KernelParams,
    budget: usize,
    free: &[bool],
) -> Result<HyperFit, GpError> {
    init.validate()?;
    data.validate(Some(init.dim()))?;
    if free.len() != init.dim() + 2 {
        return Err(GpError::DimensionMismatch {
            expected: init.dim() + 2,
            got: free.len(),
        });
    }
    if data.len() < 2 {
        return Err(GpError::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    if data.inputs.iter().all(|x| x == &data.inputs[0]) {
        let n = data.len() as f64;
        let mean = data.outputs.iter().sum::<f64>() / n;
        let var = data.outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let mut params = init.clone();
        if free[init.dim() + 1] {
            params.noise_var = params.noise_var.max(var);
        }
        let value = nlml(data, &params)?;
        return Ok(HyperFit {
            params,
            nlml: value,
            initial_nlml: value,
            iterations: 0,
            degenerate: true,
        });
    }

    let initial_nlml = nlml(data, init)?;
    let mut best = HyperFit {
        params: init.clone(),
        nlml: initial_nlml,
        initial_nlml,
        iterations: 0,
        degenerate: false,
    };
    if budget == 0 {
        return Ok(best);
    }

    let compose = |theta: &[f64]| -> KernelParams {
        let mut p = KernelParams::from_log(theta);
        let d = init.dim();
        if !free[0] {
            p.signal_std = init.signal_std;
        }
        for k in 0..d {
            if !free[k + 1] {
                p.lengthscales[k] = init.lengthscales[k];
            }
        }
        if !free[d + 1] {
            p.noise_var = init.noise_var;
        }
        p
    };
    let eval = |theta: &[f64]| -> Option<(f64, GpModel)> {
        let p = compose(theta);
        let m = GpModel::fit(p, data.clone()).ok()?.with_capacity(None).ok()?;
        let v = nlml_of(&m);
        v.is_finite().then_some((v, m))
    };

    let mut theta = init.to_log();
    let Some((mut value, mut model)) = eval(&theta) else {
        return Ok(best);
    };
    let mut step = 0.5;
    for iter in 0..budget {
        let mut grad = gradient_of(&model);
        grad.iter_mut().zip(free).filter(|(_, f)| !**f).for_each(|(g, _)| *g = 0.0);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-9 {
            break;
        }
        let mut accepted = false;
        while step >= MIN_STEP {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| (t - step * g / norm).clamp(-LOG_BOUND, LOG_BOUND))
                .collect();
            if let Some((v, m)) = eval(&trial) {
                if v <= value - ARMIJO * step * norm {
                    theta = trial;
                    value = v;
                    model = m;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        best.iterations = iter + 1;
        if !accepted {
            break;
        }
        step = (step * 2.0).min(MAX_STEP);
    }
    if value < best.nlml {
        best.params = model.params().clone();
        best.nlml = value;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> TrainingSet {
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let outputs = inputs.iter().map(|x| x.iter().map(|v| v.sin()).sum::<f64>() + rng.random_range(-0.1..0.1)).collect();
        TrainingSet::new(inputs, outputs).unwrap()
    }

    #[test]
    fn single_zero_observation_unit_variance() {
        let data = TrainingSet::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let p = KernelParams::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        let v = nlml(&data, &p).unwrap();
        assert!((v - 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v - 0.91894).abs() < 1e-5);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let data = random_set(&mut rng, 10, 2);
            let p = KernelParams::new(
                rng.random_range(0.5..2.0),
                vec![rng.random_range(0.4..2.0), rng.random_range(0.4..2.0)],
                rng.random_range(0.01..0.3),
            )
            .unwrap();
            let g = nlml_gradient(&data, &p).unwrap();
            let theta = p.to_log();
            for j in 0..theta.len() {
                let h = 1e-5;
                let mut up = theta.clone();
                up[j] += h;
                let mut dn = theta.clone();
                dn[j] -= h;
                let fd = (nlml(&data, &KernelParams::from_log(&up)).unwrap()
                    - nlml(&data, &KernelParams::from_log(&dn)).unwrap())
                    / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-4, "component {j}: analytic {} vs fd {fd}", g[j]);
            }
        }
    }

    #[test]
    fn fit_never_increases_nlml() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let data = random_set(&mut rng, 15, 2);
            let init = KernelParams::new(0.3, vec![5.0, 0.2], 1.0).unwrap();
            let fit = fit_hyperparameters(&data, &init, 30).unwrap();
            assert!(fit.nlml <= nlml(&data, &init).unwrap());
            assert!(fit.nlml < fit.initial_nlml);
        }
    }

    #[test]
    fn zero_budget_returns_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let outputs = (0..12).map(|i| i as f64 * 3.0).collect();
        let data = TrainingSet::new(inputs, outputs).unwrap();
        let init = KernelParams::lidar_q_defaults();
        let fit = fit_hyperparameters(&data, &init, 0).unwrap();
        assert_eq!(fit.params, init);
        assert_eq!(fit.params.signal_std, 102.74);
        assert_eq!(fit.params.lengthscales, vec![2.1, 5.1, 14.0, 6.2, 15.0, 2.0, 2.0, 1.0]);
        assert_eq!(fit.params.noise_var, 20.0);
    }

    #[test]
    fn degenerate_inputs_inflate_noise() {
        let data = TrainingSet::new(vec![vec![1.0]; 4], vec![1.0, 3.0, 1.0, 3.0]).unwrap();
        let init = KernelParams::isotropic(1.0, 1.0, 1, 0.01).unwrap();
        let fit = fit_hyperparameters(&data, &init, 50).unwrap();
        assert!(fit.degenerate);
        assert!((fit.params.noise_var - 1.0).abs() < 1e-12);
        assert_eq!(fit.params.lengthscales, init.lengthscales);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_set(&mut rng, 12, 1);
        let init = KernelParams::isotropic(1.0, 1.0, 1, 0.1).unwrap();
        let a = fit_hyperparameters(&data, &init, 25).unwrap();
        let b = fit_hyperparameters(&data, &init, 25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_little_data_is_an_error() {
        let data = TrainingSet::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let init = KernelParams::isotropic(1.0, 1.0, 1, 0.1).unwrap();
        assert!(matches!(
            fit_hyperparameters(&data, &init, 5),
            Err(GpError::InsufficientData { .. })
        ));
    }

    #[test]
    fn masked_fit_leaves_fixed_parameters_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_set(&mut rng, 12, 2);
        let init = KernelParams::new(1.3, vec![0.7, 1.1], 0.05).unwrap();
        let fit = fit_hyperparameters_masked(&data, &init, 40, &[false, true, false, false]).unwrap();
        assert_eq!(fit.params.signal_std, init.signal_std);
        assert_eq!(fit.params.lengthscales[1], init.lengthscales[1]);
        assert_eq!(fit.params.noise_var, init.noise_var);
        assert!(fit.nlml <= fit.initial_nlml);
        assert!(fit_hyperparameters_masked(&data, &init, 5, &[true; 3]).is_err());
    }
}
