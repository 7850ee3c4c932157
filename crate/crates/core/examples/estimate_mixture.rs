//! Recover a three-spike mixture from a noisy observation.

use offgrid::dictionary::Dictionary;
use offgrid::noise::NoiseModel;
use offgrid::signal::{observe, Mixture};
use offgrid::solver::{default_kappa, Solver, SolverConfig};

fn main() -> offgrid::Result<()> {
    let d = Dictionary::gaussian_schedule(256, 0.5)?;
    let truth = Mixture::new(vec![6.0, -4.0, 5.0], vec![-2.0, 0.3, 2.2])?;
    let nm = NoiseModel::white_for(0.5, d.measure())?;
    let y = observe(&truth, &d, &nm, 7, 0)?;
    let kappa = default_kappa(&nm, 256.0, 2.0)?;
    let solver = Solver::new(&d, SolverConfig::for_sparsity(kappa, 3))?;
    let fit = solver.fit(&y)?;
    println!(
        "kappa = {kappa:.4}, converged = {}, iterations = {}",
        fit.converged, fit.iterations
    );
    for (b, t) in fit.mixture.beta().iter().zip(fit.mixture.theta()) {
        println!("  beta = {b:>8.4}  theta = {t:>8.4}");
    }
    println!("stationarity: {:?}", solver.stationarity(&y, &fit.mixture)?);
    Ok(())
}
