//! Calibrate the prediction and l1 error constants.

use offgrid::harness::{calibrate_constants, CalibrationSpec, DictionarySpec, NoiseSpec};

fn main() -> offgrid::Result<()> {
    let mut spec = CalibrationSpec::new(
        DictionarySpec::GaussianSchedule {
            resolution: 256,
            shrink: 0.5,
        },
        NoiseSpec::White { sigma_bar: 1.0 },
    );
    spec.replicates = 200;
    let rec = calibrate_constants(&spec)?;
    print!("{}", rec.to_csv());
    println!("kappa = {:.4}", rec.kappa);
    Ok(())
}
