//! Constants derived from the limit kernel for both presets.

use offgrid::prox::ProxFunction;

fn main() -> offgrid::Result<()> {
    for (name, pf, r) in [
        ("gaussian", ProxFunction::gaussian(), 0.4),
        ("sinc", ProxFunction::sinc(), 0.2),
    ] {
        let c = pf.constants(r)?;
        println!(
            "{name}: g_inf = {:.6}, r = {r}, r_cap = {:.4}",
            c.g_inf,
            pf.r_cap()
        );
        println!("  L0..L4 = {:.4?}, L6 = {:.4}", &c.l[..5], c.l[5]);
        println!(
            "  eps(r/2) = {:.6e}, nu(2r) = {:.6}, H1 = {:.6e}, H2 = {:.6e}",
            c.eps_half_r, c.nu_two_r, c.h1, c.h2
        );
        for s in [1, 2, 3, 5, 8] {
            let delta = pf.delta_separation(0.5 * c.h2, s)?;
            let sigma = pf.separation_requirement(0.5, r, s)?;
            println!("  s = {s}: delta = {delta:.4}, Sigma(0.5, r, s) = {sigma:.4}");
        }
    }
    Ok(())
}
