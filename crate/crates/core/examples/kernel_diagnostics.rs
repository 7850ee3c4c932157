//! Proximity report and assumption verdict for both presets.

use offgrid::diagnostics::{approximation_report, check_assumption, prox_for};
use offgrid::dictionary::Dictionary;

fn main() -> offgrid::Result<()> {
    for (d, r) in [
        (Dictionary::dirichlet_basis(63)?, 0.2),
        (Dictionary::gaussian_schedule(1024, 0.5)?, 0.4),
    ] {
        let rep = approximation_report(&d)?;
        print!("{}", rep.to_csv());
        let v = check_assumption(&d, &prox_for(&d), 0.5, r, 2, &[])?;
        println!("assumption holds: {}\n", v.holds());
    }
    Ok(())
}
