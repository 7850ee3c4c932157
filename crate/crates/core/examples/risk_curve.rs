//! Empirical risk of the residual-norm test against its closed-form bound.

use offgrid::harness::{run_risk_curve, Alternative, DictionarySpec, NoiseSpec, Scenario};
use offgrid::hypotest::NullSpec;
use offgrid::signal::Mixture;

fn main() -> offgrid::Result<()> {
    let mut sc = Scenario::new(
        "example",
        DictionarySpec::GaussianSchedule {
            resolution: 256,
            shrink: 0.5,
        },
        NoiseSpec::White { sigma_bar: 1.0 },
        NullSpec::mixture(Mixture::new(vec![1.0], vec![-1.0])?),
        Alternative::Amplitude {
            direction: Mixture::new(vec![1.0], vec![1.5])?,
        },
        vec![1.0, 2.0, 3.0, 4.0, 6.0],
    );
    sc.replicates = 500;
    let curve = run_risk_curve(&sc)?;
    for r in &curve.rows {
        println!(
            "rho {:>4.1}: type I {:.3}, type II {:.3}, bound {:.3}",
            r.rho,
            r.type1,
            r.type2,
            r.bound.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
