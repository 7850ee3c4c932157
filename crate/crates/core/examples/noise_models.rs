//! Noise summaries and a seeded draw.

use offgrid::measure::ObservationMeasure;
use offgrid::noise::NoiseModel;

fn main() -> offgrid::Result<()> {
    let grid = ObservationMeasure::regular_grid(-1.0, 1.0, 200)?;
    let white = NoiseModel::grid_white(1.0, &grid)?;
    let basis = NoiseModel::basis_white(1.0, 63)?;
    let colored =
        NoiseModel::basis_colored(0.5, (1..=63).map(|k| 1.0 / (63.0 * k as f64)).collect())?;
    for (name, nm) in [
        ("grid white", &white),
        ("basis white", &basis),
        ("colored", &colored),
    ] {
        let s = nm.summary();
        println!(
            "{name:>12}: decay {:.4e}, variance of |w|^2 {:.4e}, E|w|^2 {:.4}",
            s.decay, s.xi, s.expected_sq_norm
        );
    }
    let w = white.sample(&grid, 42, 0)?;
    println!("first grid draw values: {:.4?}", &w[..4]);
    Ok(())
}
