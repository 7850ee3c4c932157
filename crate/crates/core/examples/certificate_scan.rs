//! Interpolating certificate for a signed support and its measured constants.

use offgrid::certificate::{build_certificate, verify_certificate};
use offgrid::dictionary::Dictionary;

fn main() -> offgrid::Result<()> {
    for (name, d, anchors, r) in [
        (
            "gaussian",
            Dictionary::gaussian_schedule(256, 0.5)?,
            vec![-2.0, 0.0, 2.0],
            0.4,
        ),
        (
            "low-pass",
            Dictionary::dirichlet_basis(31)?,
            vec![0.1, 0.4, 0.7],
            0.2,
        ),
    ] {
        let cert = build_certificate(&d, &anchors, &[1.0, -1.0, 1.0])?;
        let rep = verify_certificate(&cert, &d, &d.metric()?, r, d.scale() / 20.0)?;
        println!(
            "{name}: residual {:.1e}, C_N {:.4}, C_F {:.4}, C_B {:.4}, pass {}",
            cert.residual, rep.near_constant, rep.far_constant, rep.norm_constant, rep.pass
        );
    }
    Ok(())
}
