//! Posterior mean/variance at a fixed set of query inputs, kept in sync with a
//! growing [`GpModel`] at O(n·Q) per added observation.
//!
//! The cache stores `V = L⁻¹·K(X, Xq)` one row per training point. Appending
//! a point appends a row of `V`; the posterior at every query then changes by
//! a rank-one correction. A refactorization of the model (eviction, jitter
//! escalation, new hyperparameters) forces a rebuild.

use super::{GpError, GpModel, Prediction};

#[derive(Clone, Debug)]
pub struct QueryCache {
    queries: Vec<Vec<f64>>,
    prior_at_queries: Vec<f64>,
    prior_var: Vec<f64>,
    rows: Vec<Vec<f64>>,
    mean: Vec<f64>,
    explained: Vec<f64>,
    noise_var: f64,
    generation: u64,
    output_version: u64,
}

impl QueryCache {
    pub fn new(model: &GpModel, queries: Vec<Vec<f64>>) -> Result<Self, GpError> {
        let dim = model.params().dim();
        if let Some(q) = queries.iter().find(|q| q.len() != dim) {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: q.len(),
            });
        }
        let nq = queries.len();
        let mut cache = Self {
            prior_at_queries: vec![0.0; nq],
            prior_var: vec![0.0; nq],
            queries,
            rows: Vec::new(),
            mean: vec![0.0; nq],
            explained: vec![0.0; nq],
            noise_var: 0.0,
            generation: 0,
            output_version: 0,
        };
        cache.rebuild(model);
        Ok(cache)
    }

    pub fn queries(&self) -> &[Vec<f64>] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn rebuild(&mut self, model: &GpModel) {
        let params = model.params();
        self.noise_var = params.noise_var;
        for (i, q) in self.queries.iter().enumerate() {
            self.prior_at_queries[i] = model.prior().eval(q);
            self.prior_var[i] = params.signal_var();
        }
        self.rows.clear();
        self.explained.iter_mut().for_each(|v| *v = 0.0);
        self.generation = model.generation();
        for i in 0..model.len() {
            self.absorb_row(model, i);
        }
        self.refresh_means(model);
    }

    fn absorb_row(&mut self, model: &GpModel, i: usize) {
        let params = model.params();
        let xi = &model.data().inputs[i];
        let lrow = model.factor().row(i);
        let pivot = lrow[i];
        let mut row: Vec<f64> = self.queries.iter().map(|q| params.cov_unchecked(xi, q)).collect();
        for (l, prev) in lrow[..i].iter().zip(&self.rows) {
            if *l != 0.0 {
                for (r, p) in row.iter_mut().zip(prev) {
                    *r -= l * p;
                }
            }
        }
        for (r, e) in row.iter_mut().zip(self.explained.iter_mut()) {
            *r /= pivot;
            *e += *r * *r;
        }
        self.rows.push(row);
    }

    fn refresh_means(&mut self, model: &GpModel) {
        for (p, q) in self.prior_at_queries.iter_mut().zip(&self.queries) {
            *p = model.prior().eval(q);
        }
        self.mean.copy_from_slice(&self.prior_at_queries);
        for (row, z) in self.rows.iter().zip(model.z()) {
            for (m, v) in self.mean.iter_mut().zip(row) {
                *m += v * z;
            }
        }
        self.output_version = model.output_version();
    }

    /// Brings the cache up to date with `model`, which must be the model the
    /// cache was built from (possibly with points appended since).
    pub fn sync(&mut self, model: &GpModel) {
        if model.generation() != self.generation || model.len() < self.rows.len() {
            self.rebuild(model);
            return;
        }
        let start = self.rows.len();
        for i in start..model.len() {
            self.absorb_row(model, i);
        }
        if model.output_version() != self.output_version {
            self.refresh_means(model);
        } else {
            let z = model.z();
            for i in start..model.len() {
                let zi = z[i];
                for (m, v) in self.mean.iter_mut().zip(&self.rows[i]) {
                    *m += v * zi;
                }
            }
        }
    }

    pub fn mean(&self, q: usize) -> f64 {
        self.mean[q]
    }

    pub fn variance(&self, q: usize) -> f64 {
        (self.prior_var[q] - self.explained[q]).max(0.0) + self.noise_var
    }

    pub fn prediction(&self, q: usize) -> Prediction {
        Prediction {
            mean: self.mean(q),
            variance: self.variance(q),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelParams, PriorMean};

    #[test]
    fn cache_tracks_incremental_updates_and_rebuilds() {
        let p = KernelParams::new(1.0, vec![0.7, 1.3], 0.01).unwrap();
        let mut model = GpModel::new(p).unwrap().with_capacity(Some(12)).unwrap();
        let queries: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
        let mut cache = QueryCache::new(&model, queries.clone()).unwrap();
        for step in 0..30 {
            let x = vec![(step as f64 * 0.37) % 3.0, (step as f64 * 0.61) % 3.0];
            model.push(x, (step as f64).sin()).unwrap();
            cache.sync(&model);
            for (i, q) in queries.iter().enumerate() {
                let p = model.predict(q).unwrap();
                assert!((cache.mean(i) - p.mean).abs() < 1e-9, "step {step}");
                assert!((cache.variance(i) - p.variance).abs() < 1e-9, "step {step}");
            }
        }
        let outputs: Vec<f64> = model.data().outputs.iter().map(|y| y * 2.0 + 1.0).collect();
        let model = model.with_outputs(outputs).unwrap().with_prior(PriorMean::Constant(0.25));
        cache.sync(&model);
        for (i, q) in queries.iter().enumerate() {
            let p = model.predict(q).unwrap();
            assert!((cache.mean(i) - p.mean).abs() < 1e-9);
        }
    }
}
