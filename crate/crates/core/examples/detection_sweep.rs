//! Smallest detectable separation on the torus grid versus the theory.

use offgrid::harness::{run_detection_sweep, SweepSpec};
use offgrid::hypotest::TestConstants;

fn main() -> offgrid::Result<()> {
    let spec = SweepSpec {
        s_values: vec![1, 8],
        t_values: vec![64],
        alpha: 0.1,
        rho_grid: vec![1.0, 1.5, 2.0, 2.5, 3.0],
        replicates: 100,
        seed: 5,
        constants: TestConstants {
            c0: 1.5,
            ..TestConstants::default()
        },
    };
    for r in run_detection_sweep(&spec)? {
        println!(
            "s {:>2}, T {}: empirical {:?}, rho_min {:.3} ({:?} binds)",
            r.s, r.resolution, r.empirical_rho, r.rho_min, r.binding
        );
    }
    Ok(())
}
