//! Distance between the empirical kernel and its translation-invariant
//! surrogate, and an end-to-end check of the estimation assumptions.

use rayon::prelude::*;

use crate::dictionary::{signed_diff, Dictionary, Domain, FeatureFamily, ThetaWindow};
use crate::error::{Error, Result};
use crate::measure::dot;
use crate::prox::{ProxFunction, ProxPreset};

/// Kernel derivatives `𝒦^{[i,j]}` tabulated on a point set.
pub type KernelTable<'a> = Box<dyn Fn(usize, usize, usize, usize) -> f64 + Sync + 'a>;

/// A kernel with covariant derivatives up to order 3 in each argument.
pub trait CovariantKernel: Sync {
    /// Returns `(a, b, i, j) ↦ 𝒦^{[i,j]}(points[a], points[b])`.
    fn tabulate<'a>(&'a self, points: &'a [f64]) -> Result<KernelTable<'a>>;
}

/// `𝒦_T` of a dictionary.
pub struct EmpiricalKernel<'d>(pub &'d Dictionary);

impl CovariantKernel for EmpiricalKernel<'_> {
    fn tabulate<'a>(&'a self, points: &'a [f64]) -> Result<KernelTable<'a>> {
        let dict = self.0;
        let feats = points
            .par_iter()
            .map(|&t| dict.covariant_feature(t))
            .collect::<Result<Vec<_>>>()?;
        let w = dict.measure().weight();
        Ok(Box::new(move |a, b, i, j| {
            dot(&feats[a].cov[i], &feats[b].cov[j]) * w
        }))
    }
}

/// `𝒦^prox` at scale `σ` on a domain.
#[derive(Debug, Clone)]
pub struct ProxKernel {
    pub prox: ProxFunction,
    pub sigma: f64,
    pub domain: Domain,
}

impl ProxKernel {
    pub fn for_dictionary(dict: &Dictionary) -> Self {
        Self {
            prox: prox_for(dict),
            sigma: dict.scale(),
            domain: dict.domain(),
        }
    }
}

impl CovariantKernel for ProxKernel {
    fn tabulate<'a>(&'a self, points: &'a [f64]) -> Result<KernelTable<'a>> {
        Ok(Box::new(move |a, b, i, j| {
            let off = signed_diff(self.domain, points[a], points[b]);
            self.prox.kernel_derivative(off, self.sigma, i, j)
        }))
    }
}

/// The limit function matching a feature family.
pub fn prox_for(dict: &Dictionary) -> ProxFunction {
    match dict.family() {
        FeatureFamily::Gaussian { .. } => ProxFunction::new(ProxPreset::Gaussian),
        FeatureFamily::Dirichlet { .. } => ProxFunction::new(ProxPreset::Sinc),
    }
}

/// `C_T = max(sup √(g_prox/g_T), sup √(g_T/g_prox))` over a grid of step `σ_T/20`,
/// with `g_prox = g∞/σ_T²`.
pub fn compute_ct(dict: &Dictionary, prox: &ProxFunction) -> Result<f64> {
    let sigma = dict.scale();
    let gp = prox.g_inf() / (sigma * sigma);
    let pts = dict.window().scan_points(sigma / 20.0);
    let ratios = pts
        .par_iter()
        .map(|&t| dict.g(t).map(|g| (gp / g).sqrt().max((g / gp).sqrt())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ratios.into_iter().fold(1.0, f64::max))
}

/// Sup-norm gaps between two kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub c_t: f64,
    /// `max_{i,j ≤ 2} sup |𝒦^{[i,j]} - 𝒦^prox[i,j]|`.
    pub v1: f64,
    /// `sup |𝒦^{[3,3]}(θ,θ) - 𝒦^prox[3,3](θ,θ)|`.
    pub v2: f64,
    pub v_t: f64,
    pub grid_step: f64,
}

impl ApproxReport {
    /// Rows `quantity,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        for (k, v) in [
            ("C_T", self.c_t),
            ("V1", self.v1),
            ("V2", self.v2),
            ("V_T", self.v_t),
            ("grid_step", self.grid_step),
        ] {
            out.push_str(&format!("{k},{v:.16e}\n"));
        }
        out
    }
}

/// Scan layout: fine points on the window, coarse anchors every `stride` points.
struct Scan {
    points: Vec<f64>,
    periodic: bool,
    max_offset: usize,
    stride: usize,
}

impl Scan {
    fn new(window: &ThetaWindow, step: f64, span: f64, stride: usize) -> Self {
        let points = window.scan_points(step);
        let periodic = window.domain == Domain::Torus;
        let actual = if points.len() > 1 {
            points[1] - points[0]
        } else {
            step
        };
        let max_offset = ((span / actual).round() as usize).min(points.len().saturating_sub(1));
        Self {
            points,
            periodic,
            max_offset,
            stride,
        }
    }

    fn partner(&self, a: usize, k: usize) -> Option<usize> {
        let b = a + k;
        if self.periodic {
            Some(b % self.points.len())
        } else {
            (b < self.points.len()).then_some(b)
        }
    }
}

/// Sup gaps between two kernels on `window`.
///
/// Orders up to 2 are compared at pairs `(θ, θ + u)` with `θ` every fourth
/// point of a grid of step `grid_step` and `u ∈ [0, min(|Θ|, 40σ)]` on the
/// same grid. The diagonal of order 3 is compared on a grid of half the step.
pub fn compute_vt_between(
    a: &dyn CovariantKernel,
    b: &dyn CovariantKernel,
    window: &ThetaWindow,
    sigma: f64,
    grid_step: f64,
) -> Result<(f64, f64)> {
    if !(grid_step > 0.0) || grid_step > sigma / 10.0 * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "kernel scan step {grid_step} must lie in (0, sigma/10]"
        )));
    }
    let span = window.length().min(40.0 * sigma);
    let scan = Scan::new(window, grid_step, span, 4);
    let ka = a.tabulate(&scan.points)?;
    let kb = b.tabulate(&scan.points)?;
    let anchors: Vec<usize> = (0..scan.points.len()).step_by(scan.stride).collect();
    let v1 = anchors
        .par_iter()
        .map(|&p| {
            let mut m = 0.0f64;
            for k in 0..=scan.max_offset {
                let Some(q) = scan.partner(p, k) else { break };
                for i in 0..3 {
                    for j in 0..3 {
                        m = m.max((ka(p, q, i, j) - kb(p, q, i, j)).abs());
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    let diag = window.scan_points(grid_step / 2.0);
    let ha = a.tabulate(&diag)?;
    let hb = b.tabulate(&diag)?;
    let v2 = (0..diag.len())
        .into_par_iter()
        .map(|p| (ha(p, p, 3, 3) - hb(p, p, 3, 3)).abs())
        .reduce(|| 0.0, f64::max);
    Ok((v1, v2))
}

/// `C_T` and `𝒱_T` of a dictionary against its limit kernel.
pub fn compute_vt(dict: &Dictionary, prox: &ProxFunction, grid_step: f64) -> Result<ApproxReport> {
    let limit = ProxKernel {
        prox: prox.clone(),
        sigma: dict.scale(),
        domain: dict.domain(),
    };
    let (v1, v2) = compute_vt_between(
        &EmpiricalKernel(dict),
        &limit,
        dict.window(),
        dict.scale(),
        grid_step,
    )?;
    Ok(ApproxReport {
        c_t: compute_ct(dict, prox)?,
        v1,
        v2,
        v_t: v1.max(v2),
        grid_step,
    })
}

/// Default scan: step `σ_T/20`.
pub fn approximation_report(dict: &Dictionary) -> Result<ApproxReport> {
    compute_vt(dict, &prox_for(dict), dict.scale() / 20.0)
}

/// `γ_T = 2Δ_T/σ_T + √π exp(-ξ²b_T²/(2σ_T²))` for Gaussian spikes on `[-b, b]`
/// with grid step `Δ_T` and window shrinkage `ξ`.
pub fn gaussian_gamma(grid_step: f64, sigma: f64, half_width: f64, shrink: f64) -> f64 {
    let m = shrink * half_width / sigma;
    2.0 * grid_step / sigma + std::f64::consts::PI.sqrt() * (-0.5 * m * m).exp()
}

/// `γ_T` of a Gaussian dictionary built by [`Dictionary::gaussian`].
pub fn gaussian_gamma_of(dict: &Dictionary) -> Result<f64> {
    let FeatureFamily::Gaussian { sigma } = *dict.family() else {
        return Err(Error::Structural(
            "γ_T is defined for Gaussian dictionaries".into(),
        ));
    };
    let pts = dict.measure().points();
    let half_width = 0.5 * (pts[pts.len() - 1] - pts[0] + dict.measure().weight());
    let shrink = 1.0 - dict.window().hi / half_width;
    Ok(gaussian_gamma(
        dict.measure().weight(),
        sigma,
        half_width,
        shrink,
    ))
}

/// Outcome of the assumption check with the numbers behind each verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionVerdict {
    /// `g_T > 0` on the scan grid.
    pub regularity: bool,
    /// `ε(r/2) > 0` and `ν(2r) > 0`.
    pub f_properties: bool,
    /// `C_T ≤ 2`, `𝒱_T ≤ H₁(r)` and `(s-1)𝒱_T ≤ (1-η)H₂(r)`.
    pub proximity: bool,
    /// Pairwise gaps above `σ_T Σ(η, r, s)`.
    pub separation: bool,
    pub margins: AssumptionMargins,
}

impl AssumptionVerdict {
    pub fn holds(&self) -> bool {
        self.regularity && self.f_properties && self.proximity && self.separation
    }

    /// Rows `item,value`.
    pub fn to_csv(&self) -> String {
        let m = &self.margins;
        let mut out = String::from("item,value\n");
        for (k, v) in [
            ("regularity", self.regularity),
            ("f_properties", self.f_properties),
            ("proximity", self.proximity),
            ("separation", self.separation),
        ] {
            out.push_str(&format!("{k},{v}\n"));
        }
        for (k, v) in [
            ("min_g", m.min_g),
            ("eps_half_r", m.eps_half_r),
            ("nu_two_r", m.nu_two_r),
            ("C_T", m.c_t),
            ("V_T", m.v_t),
            ("H1", m.h1),
            ("H2", m.h2),
            ("required_gap", m.required_gap),
            ("min_gap", m.min_gap),
        ] {
            out.push_str(&format!("{k},{v:.16e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionMargins {
    pub min_g: f64,
    pub eps_half_r: f64,
    pub nu_two_r: f64,
    pub c_t: f64,
    pub v_t: f64,
    pub h1: f64,
    pub h2: f64,
    /// `σ_T Σ(η, r, s)`; infinite when no finite separation exists.
    pub required_gap: f64,
    /// Smallest pairwise gap of `points`; infinite for fewer than two points.
    pub min_gap: f64,
}

/// Checks regularity, properties of the limit function, proximity of the
/// kernels and separation of `points`, reporting failures instead of
/// raising them.
pub fn check_assumption(
    dict: &Dictionary,
    prox: &ProxFunction,
    eta: f64,
    r: f64,
    s: usize,
    points: &[f64],
) -> Result<AssumptionVerdict> {
    if !(eta > 0.0 && eta < 1.0) || !(r > 0.0) || s == 0 {
        return Err(Error::Domain(format!(
            "need η in (0, 1), r > 0 and s >= 1, got η = {eta}, r = {r}, s = {s}"
        )));
    }
    let sigma = dict.scale();
    let grid = dict.window().scan_points(sigma / 20.0);
    let gs: Vec<f64> = grid
        .par_iter()
        .map(|&t| match dict.g(t) {
            Ok(g) => g,
            Err(Error::Positivity { value, .. }) => value,
            Err(_) => f64::NAN,
        })
        .collect();
    let min_g = gs.iter().copied().fold(f64::INFINITY, f64::min);
    let regularity = min_g > 0.0;

    let eps = prox.epsilon(0.5 * r);
    let nu = prox.nu(2.0 * r);
    let f_properties = eps > 0.0 && nu > 0.0;

    let (h1, h2) = match prox.constants(r) {
        Ok(c) => (c.h1, c.h2),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let (c_t, v_t) = if regularity {
        let rep = compute_vt(dict, prox, sigma / 20.0)?;
        (rep.c_t, rep.v_t)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let proximity = c_t <= 2.0 && v_t <= h1 && (s as f64 - 1.0) * v_t <= (1.0 - eta) * h2;

    let required_gap = match prox.separation_requirement(eta, r, s) {
        Ok(v) => sigma * v,
        Err(_) => f64::INFINITY,
    };
    let mut min_gap = f64::INFINITY;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            min_gap = min_gap.min(signed_diff(dict.domain(), points[a], points[b]).abs());
        }
    }
    let separation = points.len() < 2 || min_gap > required_gap;
    Ok(AssumptionVerdict {
        regularity,
        f_properties,
        proximity,
        separation,
        margins: AssumptionMargins {
            min_g,
            eps_half_r: eps,
            nu_two_r: nu,
            c_t,
            v_t,
            h1,
            h2,
            required_gap,
            min_gap,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_pass_ct_is_exact() {
        for t in [15usize, 31, 63] {
            let d = Dictionary::dirichlet_basis(t).unwrap();
            let c = compute_ct(&d, &ProxFunction::sinc()).unwrap();
            let tf = t as f64;
            assert!(
                (c - tf / (tf * tf - 1.0).sqrt()).abs() < 1e-10,
                "T = {t}: {c}"
            );
            assert!((1.0 - c).abs() <= 1.0 / (2.0 * (tf * tf - 1.0)));
        }
    }

    #[test]
    fn identical_kernels_have_zero_gap() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let k = ProxKernel::for_dictionary(&d);
        let (v1, v2) = compute_vt_between(&k, &k, d.window(), d.scale(), d.scale() / 20.0).unwrap();
        assert_eq!((v1, v2), (0.0, 0.0));
        let e = EmpiricalKernel(&d);
        let (v1, v2) = compute_vt_between(&e, &e, d.window(), d.scale(), d.scale() / 10.0).unwrap();
        assert_eq!((v1, v2), (0.0, 0.0));
    }

    #[test]
    fn gaussian_kernel_is_close_to_its_limit() {
        let d = Dictionary::gaussian_schedule(1024, 0.5).unwrap();
        let rep = approximation_report(&d).unwrap();
        assert!(rep.v_t < 0.1, "{rep:?}");
        assert!(rep.c_t < 1.05);
        assert_eq!(rep.v_t, rep.v1.max(rep.v2));
    }

    #[test]
    fn coarse_scan_is_rejected() {
        let d = Dictionary::dirichlet_basis(15).unwrap();
        assert!(compute_vt(&d, &ProxFunction::sinc(), d.scale() / 5.0).is_err());
    }

    #[test]
    fn refinement_never_lowers_the_sup() {
        // the fine grid contains the coarse one, so its sup is at least as large
        let d = Dictionary::dirichlet_basis(15).unwrap();
        let p = ProxFunction::sinc();
        let coarse = compute_vt(&d, &p, d.scale() / 10.0).unwrap();
        let fine = compute_vt(&d, &p, d.scale() / 20.0).unwrap();
        assert!(fine.v1 >= coarse.v1 * (1.0 - 1e-12));
        assert!(fine.v2 >= coarse.v2 * (1.0 - 1e-12));
    }

    #[test]
    fn gamma_decreases_along_the_schedule() {
        let mut prev = f64::INFINITY;
        for t in [64usize, 128, 256, 512, 1024, 2048] {
            let d = Dictionary::gaussian_schedule(t, 0.5).unwrap();
            let g = gaussian_gamma_of(&d).unwrap();
            let (sigma, b) = crate::dictionary::gaussian_schedule_params(t, 0.5).unwrap();
            let direct = gaussian_gamma(2.0 * b / t as f64, sigma, b, 0.5);
            assert!((g - direct).abs() < 1e-12 * direct);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn verdicts_report_failures() {
        let d = Dictionary::gaussian_schedule(1024, 0.5).unwrap();
        let p = ProxFunction::gaussian();
        let close = check_assumption(&d, &p, 0.5, 0.4, 2, &[0.0, 0.1]).unwrap();
        assert!(close.regularity && close.f_properties);
        assert!(!close.separation);
        assert!(close.margins.min_gap < close.margins.required_gap);
        let coarse = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let crowded = check_assumption(&coarse, &p, 0.5, 0.4, 10_000, &[0.0]).unwrap();
        assert!(!crowded.proximity);
        let low = Dictionary::dirichlet_basis(63).unwrap();
        let v = check_assumption(&low, &ProxFunction::sinc(), 0.5, 0.36, 2, &[0.1, 0.6]).unwrap();
        assert!(!v.f_properties);
    }
}
