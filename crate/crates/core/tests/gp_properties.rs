mod common;

use gp_mfrl::gp::{GpModel, GpSnapshot, KernelParams, TrainingSet};
use proptest::prelude::*;

fn dataset(dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..12).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-4.0..4.0f64, dim), n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
    })
}

fn params(dim: usize) -> impl Strategy<Value = KernelParams> {
    (0.2..3.0f64, prop::collection::vec(0.2..3.0f64, dim), 1e-3..0.5f64)
        .prop_map(|(s, l, n)| KernelParams::new(s, l, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_dense_oracle((xs, ys) in dataset(2), p in params(2), q in prop::collection::vec(-5.0..5.0f64, 2)) {
        let model = GpModel::fit(p.clone(), TrainingSet::new(xs.clone(), ys.clone()).unwrap()).unwrap();
        let got = model.predict(&q).unwrap();
        let (mean, var) = common::dense_predict(&xs, &ys, &p, &q);
        prop_assert!((got.mean - mean).abs() < 1e-7);
        prop_assert!((got.variance - var).abs() < 1e-7);
    }

    #[test]
    fn variance_is_bounded_by_the_prior((xs, ys) in dataset(1), p in params(1), q in -6.0..6.0f64) {
        let model = GpModel::fit(p.clone(), TrainingSet::new(xs, ys).unwrap()).unwrap();
        let v = model.predict(&[q]).unwrap().variance;
        prop_assert!(v >= p.noise_var - 1e-12);
        prop_assert!(v <= p.signal_var() + p.noise_var + 1e-12);
    }

    #[test]
    fn incremental_updates_equal_a_batch_fit((xs, ys) in dataset(2), p in params(2), q in prop::collection::vec(-5.0..5.0f64, 2)) {
        let batch = GpModel::fit(p.clone(), TrainingSet::new(xs.clone(), ys.clone()).unwrap()).unwrap();
        let mut inc = GpModel::new(p).unwrap();
        for (x, y) in xs.into_iter().zip(ys) {
            inc.push(x, y).unwrap();
        }
        let (a, b) = (batch.predict(&q).unwrap(), inc.predict(&q).unwrap());
        prop_assert!((a.mean - b.mean).abs() < 1e-8);
        prop_assert!((a.variance - b.variance).abs() < 1e-8);
    }

    #[test]
    fn snapshots_restore_exact_predictions((xs, ys) in dataset(3), p in params(3), q in prop::collection::vec(-5.0..5.0f64, 3)) {
        let model = GpModel::fit(p, TrainingSet::new(xs, ys).unwrap()).unwrap();
        let mut buf = Vec::new();
        GpSnapshot::of(&model).write_to(&mut buf).unwrap();
        let back = GpSnapshot::read_from(buf.as_slice()).unwrap().into_model().unwrap();
        prop_assert_eq!(model.predict(&q).unwrap(), back.predict(&q).unwrap());
    }
}

#[test]
fn far_from_data_the_prior_returns() {
    let p = KernelParams::isotropic(1.5, 0.5, 1, 0.01).unwrap();
    let model = GpModel::fit(p.clone(), TrainingSet::new(vec![vec![0.0], vec![0.3]], vec![2.0, 1.0]).unwrap()).unwrap();
    let far = model.predict(&[50.0]).unwrap();
    assert!(far.mean.abs() < 1e-12);
    assert!((far.variance - p.prior_predictive_var()).abs() < 1e-12);
}
