//! Fits a GP to noisy samples of sin(x), tunes its hyperparameters and
//! round-trips the model through a snapshot.
use gp_mfrl::gp::{fit_hyperparameters, GpModel, GpSnapshot, KernelParams, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random_range(-4.0..4.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x[0].sin() + rng.random_range(-0.1..0.1)).collect();
    let data = TrainingSet::new(xs, ys)?;

    let init = KernelParams::isotropic(1.0, 0.5, 1, 0.1)?;
    let fit = fit_hyperparameters(&data, &init, 100)?;
    println!(
        "nlml {:.3} -> {:.3}, signal_std {:.3}, lengthscale {:.3}, noise_var {:.2e}",
        fit.initial_nlml, fit.nlml, fit.params.signal_std, fit.params.lengthscales[0], fit.params.noise_var
    );

    let model = GpModel::fit(fit.params, data)?;
    for x in [-3.0, -1.5, 0.0, 1.5, 3.0, 6.0] {
        let p = model.predict(&[x])?;
        println!("x {x:>5.1}  mean {:>7.3}  std {:.3}  sin {:>7.3}", p.mean, p.std(), f64::sin(x));
    }

    let mut buf = Vec::new();
    GpSnapshot::of(&model).write_to(&mut buf)?;
    let back = GpSnapshot::read_from(buf.as_slice())?.into_model()?;
    println!("snapshot {} bytes, restored mean at 1.0: {:.6}", buf.len(), back.predict_mean(&[1.0])?);
    Ok(())
}
