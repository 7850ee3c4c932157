//! Normalized features and the covariant kernel against its limit.

use offgrid::dictionary::Dictionary;
use offgrid::prox::ProxFunction;

fn main() -> offgrid::Result<()> {
    let d = Dictionary::gaussian_schedule(512, 0.5)?;
    let sigma = d.scale();
    let w = d.window();
    println!(
        "gaussian T = 512: sigma = {sigma:.4}, window [{:.3}, {:.3}]",
        w.lo, w.hi
    );
    let pf = ProxFunction::gaussian();
    for k in 0..6 {
        let off = 0.5 * k as f64 * sigma;
        let emp = d.empirical_kernel(0.0, off, 0, 0)?;
        let lim = pf.kernel_derivative(-off, sigma, 0, 0);
        println!(
            "  offset {:.2} sigma: K_T = {emp:.6}, limit = {lim:.6}",
            off / sigma
        );
    }
    let lp = Dictionary::dirichlet_basis(31)?;
    println!(
        "low-pass T = 31: sigma = {:.4}, g(0.3) = {:.4}",
        lp.scale(),
        lp.g(0.3)?
    );
    Ok(())
}
