//! The three tests on one draw from the null and one from an alternative.

use offgrid::dictionary::Dictionary;
use offgrid::hypotest::{run_tests, NullSpec, TestContext, TestKind};
use offgrid::noise::NoiseModel;
use offgrid::signal::{observe, Mixture};
use offgrid::solver::{default_kappa, SolverConfig};

fn main() -> offgrid::Result<()> {
    let d = Dictionary::gaussian_schedule(256, 0.5)?;
    let nm = NoiseModel::white_for(1.0, d.measure())?;
    let kappa = default_kappa(&nm, 256.0, 2.0)?;
    let null = NullSpec::mixture(Mixture::new(vec![3.0, -3.0], vec![-2.0, 0.0])?);
    let ctx = TestContext::new(
        &d,
        &nm,
        &null,
        SolverConfig::for_sparsity(kappa, 3),
        [2.0, 10.0, 20.0],
    )?;
    let alt = Mixture::new(vec![3.0, -3.0, 4.0], vec![-2.0, 0.0, 2.0])?;
    for (label, m) in [("null draw", &null.mixture), ("alternative", &alt)] {
        let y = observe(m, &d, &nm, 1, 0)?;
        for o in run_tests(&y, &[TestKind::T1, TestKind::T2, TestKind::Max], &ctx)? {
            println!(
                "{label:>12} {:>4}: statistic {:>9.4}, threshold {:>7.3}, reject {}",
                o.which.name(),
                o.statistic,
                o.threshold,
                o.reject
            );
        }
    }
    Ok(())
}
