//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use gp_mfrl::gp::KernelParams;
use gp_mfrl::mdp::DiscreteMdp;

pub fn se(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    p.signal_std * p.signal_std * (-0.5 * r2).exp()
}

fn gram(xs: &[Vec<f64>], p: &KernelParams) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| se(&xs[i], &xs[j], p) + if i == j { p.noise_var } else { 0.0 })
}

/// Posterior mean and predictive variance (with noise) by explicit inversion.
pub fn dense_predict(xs: &[Vec<f64>], ys: &[f64], p: &KernelParams, q: &[f64]) -> (f64, f64) {
    let kinv = gram(xs, p).try_inverse().expect("invertible Gram matrix");
    let ks = DVector::from_iterator(xs.len(), xs.iter().map(|x| se(x, q, p)));
    let y = DVector::from_column_slice(ys);
    let mean = (ks.transpose() * &kinv * y)[(0, 0)];
    let var = se(q, q, p) - (ks.transpose() * &kinv * &ks)[(0, 0)] + p.noise_var;
    (mean, var)
}

/// Negative log marginal likelihood from a dense determinant and inverse.
pub fn dense_nlml(xs: &[Vec<f64>], ys: &[f64], p: &KernelParams) -> f64 {
    let k = gram(xs, p);
    let det = k.determinant();
    let kinv = k.try_inverse().expect("invertible Gram matrix");
    let y = DVector::from_column_slice(ys);
    let fit = (y.transpose() * kinv * &y)[(0, 0)];
    0.5 * fit + 0.5 * det.ln() + 0.5 * ys.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Values of a deterministic policy by solving `(I − γP_π)V = R_π`.
pub fn policy_values(mdp: &DiscreteMdp, policy: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        for o in mdp.outcomes(s, policy[s]) {
            a[(s, o.next)] -= mdp.gamma() * o.prob;
            r[s] += o.prob * o.reward;
        }
    }
    let v = a.lu().solve(&r).expect("non-singular policy system");
    v.iter().copied().collect()
}

/// Best deterministic policy by trying all of them; returns the policy and
/// its values.
pub fn exhaustive_optimum(mdp: &DiscreteMdp) -> (Vec<usize>, Vec<f64>) {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut policy = vec![0; n];
    let mut best: Option<(Vec<usize>, Vec<f64>)> = None;
    loop {
        let v = policy_values(mdp, &policy);
        let better = match &best {
            None => true,
            Some((_, bv)) => v.iter().sum::<f64>() > bv.iter().sum::<f64>() + 1e-12,
        };
        if better {
            best = Some((policy.clone(), v));
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.expect("at least one policy");
            }
            policy[i] += 1;
            if policy[i] < m {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}

pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, m: usize, gamma: f64) -> DiscreteMdp {
    let mut p = vec![vec![vec![0.0; n]; m]; n];
    let mut r = vec![vec![vec![0.0; n]; m]; n];
    for s in 0..n {
        for a in 0..m {
            let support = rng.random_range(1..=n);
            let mut w: Vec<f64> = (0..n).map(|k| if k < support { rng.random::<f64>() + 1e-3 } else { 0.0 }).collect();
            // shuffle which states receive mass
            for k in (1..n).rev() {
                let j = rng.random_range(0..=k);
                w.swap(k, j);
            }
            let total: f64 = w.iter().sum();
            for k in 0..n {
                p[s][a][k] = w[k] / total;
                r[s][a][k] = rng.random_range(-10.0..10.0);
            }
        }
    }
    DiscreteMdp::from_dense(&p, &r, gamma).expect("valid random MDP")
}

/// Monte-Carlo next-cell frequencies for independent Gaussian axes truncated
/// at 3σ, with the edge cells absorbing mass beyond the grid.
pub fn mc_cells<R: Rng>(rng: &mut R, mean: [f64; 2], std: [f64; 2], w: usize, h: usize, samples: usize) -> Vec<f64> {
    let draw = |rng: &mut R, mu: f64, sd: f64| -> f64 {
        let d = Normal::new(mu, sd).expect("valid normal");
        loop {
            let v = d.sample(rng);
            if (v - mu).abs() <= 3.0 * sd {
                return v;
            }
        }
    };
    let cell = |v: f64, n: usize| -> usize { v.round().clamp(0.0, (n - 1) as f64) as usize };
    let mut counts = vec![0.0; w * h];
    for _ in 0..samples {
        let x = cell(draw(rng, mean[0], std[0]), w);
        let y = cell(draw(rng, mean[1], std[1]), h);
        counts[y * w + x] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= samples as f64);
    counts
}
