//! The translation-invariant limit kernel `F((θ-θ')/σ)` and the constants
//! derived from `F`: `g∞`, `L_i`, `ε`, `ν`, `δ(u, s)`, `H∞^(1)`, `H∞^(2)`, `Σ`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Limit functions shipped with the dictionary presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxPreset {
    /// `F(t) = exp(-t²/4)`, the limit of Gaussian spikes.
    Gaussian,
    /// `F(t) = sin(πt)/(πt)`, the limit of the Dirichlet (low-pass) kernel.
    Sinc,
}

/// Node spacing of the envelope tables.
const ENV_STEP: f64 = 1e-3;

/// `F` with derivatives up to order 6 and certified envelopes
/// `r ↦ sup_{|x| ≥ r} |F^{(i)}(x)|` for `i ∈ 0..=3`.
#[derive(Debug, Clone)]
pub struct ProxFunction {
    preset: ProxPreset,
    g_inf: f64,
    x_max: f64,
    /// `suffix[i][k]` bounds `|F^{(i)}|` on `[k h, ∞)`.
    suffix: [Vec<f64>; 4],
    sup_abs: [f64; 7],
}

impl ProxFunction {
    pub fn new(preset: ProxPreset) -> Self {
        let (g_inf, x_max) = match preset {
            ProxPreset::Gaussian => (0.5, 60.0),
            ProxPreset::Sinc => (PI * PI / 3.0, 200.0),
        };
        let mut pf = Self {
            preset,
            g_inf,
            x_max,
            suffix: Default::default(),
            sup_abs: [0.0; 7],
        };
        pf.build_tables();
        pf
    }

    pub fn gaussian() -> Self {
        Self::new(ProxPreset::Gaussian)
    }

    pub fn sinc() -> Self {
        Self::new(ProxPreset::Sinc)
    }

    pub fn preset(&self) -> ProxPreset {
        self.preset
    }

    /// `g∞ = -F''(0)`.
    pub fn g_inf(&self) -> f64 {
        self.g_inf
    }

    /// `F^{(n)}(x)` for `n ∈ 0..=6`.
    pub fn deriv(&self, n: usize, x: f64) -> f64 {
        assert!(n <= 6, "derivatives of F are available up to order 6");
        match self.preset {
            ProxPreset::Gaussian => {
                let z = x / std::f64::consts::SQRT_2;
                (-std::f64::consts::FRAC_1_SQRT_2).powi(n as i32)
                    * hermite_e(n, z)
                    * (-0.25 * x * x).exp()
            }
            ProxPreset::Sinc => PI.powi(n as i32) * sinc_deriv(n, PI * x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.deriv(0, x)
    }

    /// Upper bound on `|F^{(i)}|` on `[x, ∞)` valid beyond the table.
    fn tail_bound(&self, i: usize, x: f64) -> f64 {
        match self.preset {
            // Beyond the largest Hermite root the modulus decreases.
            ProxPreset::Gaussian => self.deriv(i, x).abs(),
            ProxPreset::Sinc => {
                let z = PI * x;
                let mut acc = 0.0;
                let mut binom = 1.0;
                let mut fact = 1.0;
                for k in 0..=i {
                    if k > 0 {
                        binom = binom * (i - k + 1) as f64 / k as f64;
                        fact *= k as f64;
                    }
                    acc += binom * fact / z.powi(k as i32 + 1);
                }
                PI.powi(i as i32) * acc
            }
        }
    }

    fn build_tables(&mut self) {
        let h = ENV_STEP;
        let n = (self.x_max / h).round() as usize;
        let nodes: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let vals: Vec<[f64; 6]> = nodes
            .iter()
            .map(|&x| {
                let mut v = [0.0; 6];
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = self.deriv(i, x).abs();
                }
                v
            })
            .collect();
        for i in 0..7 {
            let mut best = 0usize;
            let mut best_v = 0.0f64;
            for (k, &x) in nodes.iter().enumerate() {
                let v = if i < 6 {
                    vals[k][i]
                } else {
                    self.deriv(6, x).abs()
                };
                if v > best_v {
                    best_v = v;
                    best = k;
                }
            }
            let lo = nodes[best.saturating_sub(1)];
            let hi = nodes[(best + 1).min(n)];
            let refined = golden_max(|x| self.deriv(i, x).abs(), lo, hi);
            self.sup_abs[i] = best_v.max(refined);
        }
        // |f| ≤ max(|f(a)|, |f(b)|) + h²/8 sup|f''| on each cell; the second
        // derivative is bounded by its endpoint values plus h times the next sup.
        for i in 0..4 {
            let mut suffix = vec![0.0; n + 1];
            let mut run = self.tail_bound(i, self.x_max);
            suffix[n] = run;
            for k in (0..n).rev() {
                let f2 = vals[k][i + 2].max(vals[k + 1][i + 2]) + h * self.sup_abs[i + 3];
                // no interior critical point when f' cannot vanish on the cell
                let monotone = vals[k][i + 1] > h * f2;
                let corr = if monotone { 0.0 } else { h * h / 8.0 * f2 };
                let cell = vals[k][i].max(vals[k + 1][i]) + corr;
                run = run.max(cell);
                suffix[k] = run;
            }
            self.suffix[i] = suffix;
        }
    }

    /// Certified `sup_{|x| ≥ r} |F^{(i)}(x)|`, `i ∈ 0..=3`.
    pub fn envelope(&self, i: usize, r: f64) -> f64 {
        assert!(i <= 3, "envelopes are tabulated for orders 0..=3");
        let r = r.abs();
        if r >= self.x_max {
            return self.tail_bound(i, r);
        }
        let h = ENV_STEP;
        let k = (r / h).floor() as usize;
        let next = (k + 1) as f64 * h;
        let len = next - r;
        let a = self.deriv(i, r).abs();
        let b = self.deriv(i, next).abs();
        let f2 = self
            .deriv(i + 2, r)
            .abs()
            .max(self.deriv(i + 2, next).abs())
            + len * self.sup_abs[i + 3];
        let monotone = self.deriv(i + 1, r).abs() > len * f2;
        let corr = if monotone { 0.0 } else { len * len / 8.0 * f2 };
        let partial = a.max(b) + corr;
        let rest = self.suffix[i].get(k + 1).copied().unwrap_or(0.0);
        partial.max(rest)
    }

    /// `L_i = g∞^{-i/2} sup|F^{(i)}|` for `i ∈ 0..=4`, and `L_6 = g∞^{-3}|F^{(6)}(0)|`.
    pub fn l_const(&self, i: usize) -> f64 {
        match i {
            0..=4 => self.g_inf.powf(-(i as f64) / 2.0) * self.sup_abs[i],
            6 => self.g_inf.powi(-3) * self.deriv(6, 0.0).abs(),
            _ => panic!("L_{i} is not defined"),
        }
    }

    /// `ε(r) = 1 - sup_{|x| ≥ r} |F(x)|`.
    pub fn epsilon(&self, r: f64) -> f64 {
        1.0 - self.envelope(0, r)
    }

    /// `ν(r) = -sup_{x ∈ [0, r]} F''(x)/g∞`.
    pub fn nu(&self, r: f64) -> f64 {
        let r = r.abs();
        let n = ((r / 0.005).ceil() as usize).max(200);
        let f = |x: f64| self.deriv(2, x) / self.g_inf;
        let mut best = 0usize;
        let mut best_v = f(0.0);
        for k in 1..=n {
            let v = f(r * k as f64 / n as f64);
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        let lo = r * best.saturating_sub(1) as f64 / n as f64;
        let hi = r * (best + 1).min(n) as f64 / n as f64;
        -best_v.max(golden_max(f, lo, hi))
    }

    /// Largest admissible `r`: the open bound `1/√(2 g∞ L₂)` scaled by 0.99.
    pub fn r_cap(&self) -> f64 {
        0.99 / (2.0 * self.g_inf * self.l_const(2)).sqrt()
    }

    fn sum_ok(&self, delta: f64, u: f64, s: usize) -> bool {
        (0..4).all(|i| {
            let scale = self.g_inf.powf(-(i as f64) / 2.0);
            let total: f64 = (1..s)
                .map(|m| 2.0 * scale * self.envelope(i, m as f64 * delta))
                .sum();
            total <= u
        })
    }

    /// Upper bound on `δ(u, s)` from the equispaced worst case: the smallest
    /// `δ` (to bisection tolerance) with `2 Σ_{m<s} g∞^{-i/2} env_i(mδ) ≤ u`
    /// for every `i ≤ 3`. Returns `+∞` when no `δ ≤ 1e6` qualifies.
    pub fn delta_separation(&self, u: f64, s: usize) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::Domain(format!("δ(u, s) needs u > 0, got {u}")));
        }
        if s <= 1 {
            return Ok(0.0);
        }
        let cap = 1e6;
        if !self.sum_ok(cap, u, s) {
            return Ok(f64::INFINITY);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while !self.sum_ok(hi, u, s) {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.sum_ok(mid, u, s) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `H∞^(1)(r)`, `H∞^(2)(r)` and the quantities they are built from.
    pub fn constants(&self, r: f64) -> Result<ProxConstants> {
        if !(r > 0.0) || r >= 1.0 / (2.0 * self.g_inf * self.l_const(2)).sqrt() {
            return Err(Error::Domain(format!(
                "r = {r} must lie in (0, 1/sqrt(2 g_inf L_2))"
            )));
        }
        let eps = self.epsilon(r / 2.0);
        let nu = self.nu(2.0 * r);
        if !(eps > 0.0) {
            return Err(Error::Assumption(format!(
                "epsilon(r/2) = {eps} is not positive"
            )));
        }
        if !(nu > 0.0) {
            return Err(Error::Assumption(format!("nu(2r) = {nu} is not positive")));
        }
        let l = [
            self.l_const(0),
            self.l_const(1),
            self.l_const(2),
            self.l_const(3),
            self.l_const(4),
            self.l_const(6),
        ];
        let h1 = [0.5, l[2], l[3], l[4], l[5], nu / 10.0, eps / 10.0]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let h2 = [
            1.0 / 6.0,
            8.0 * eps / (10.0 * (5.0 + 2.0 * l[1])),
            8.0 * nu / (9.0 * (2.0 * l[2] + 2.0 * l[3] + 4.0)),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        Ok(ProxConstants {
            r,
            g_inf: self.g_inf,
            l,
            eps_half_r: eps,
            nu_two_r: nu,
            h1,
            h2,
        })
    }

    /// `Σ(η, r, s) = 4 max(r g∞^{-1/2}, 2 δ(η H∞^(2)(r), s))`.
    pub fn separation_requirement(&self, eta: f64, r: f64, s: usize) -> Result<f64> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Domain(format!("η must lie in (0, 1), got {eta}")));
        }
        let c = self.constants(r)?;
        let delta = self.delta_separation(eta * c.h2, s)?;
        Ok(4.0 * (r / self.g_inf.sqrt()).max(2.0 * delta))
    }

    /// `𝒦^prox[i,j](θ, θ') = (-1)^j g∞^{-(i+j)/2} F^{(i+j)}((θ-θ')/σ)`, with
    /// the signed offset already reduced to the domain's representative.
    pub fn kernel_derivative(&self, offset: f64, sigma: f64, i: usize, j: usize) -> f64 {
        let n = i + j;
        let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * self.g_inf.powf(-(n as f64) / 2.0) * self.deriv(n, offset / sigma)
    }
}

/// Constants depending only on `F` and `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxConstants {
    pub r: f64,
    pub g_inf: f64,
    /// `L_0 … L_4, L_6`.
    pub l: [f64; 6],
    pub eps_half_r: f64,
    pub nu_two_r: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Probabilists' Hermite polynomial `He_n`.
fn hermite_e(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `n`-th derivative of `sin(z)/z`.
fn sinc_deriv(n: usize, z: f64) -> f64 {
    if z.abs() < 4.0 {
        // Taylor series: sin(z)/z = Σ (-1)^k z^{2k} / (2k+1)!
        let mut acc = 0.0;
        let mut fact = 1.0; // (2k+1)!
        for k in 0..40usize {
            if k > 0 {
                fact *= (2 * k) as f64 * (2 * k + 1) as f64;
            }
            let p = 2 * k;
            if p < n {
                continue;
            }
            let mut falling = 1.0;
            for q in 0..n {
                falling *= (p - q) as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * falling * z.powi((p - n) as i32) / fact;
        }
        return acc;
    }
    // z S(z) = sin z, so z S^{(n)} + n S^{(n-1)} = sin^{(n)}(z).
    let mut s = z.sin() / z;
    let (sz, cz) = z.sin_cos();
    let sin_deriv = [sz, cz, -sz, -cz];
    for k in 1..=n {
        s = (sin_deriv[k % 4] - k as f64 * s) / z;
    }
    s
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn presets() -> [ProxFunction; 2] {
        [ProxFunction::gaussian(), ProxFunction::sinc()]
    }

    #[test]
    fn values_at_zero_and_curvature() {
        for pf in presets() {
            assert!((pf.value(0.0) - 1.0).abs() < 1e-15);
            assert!((pf.deriv(2, 0.0) + pf.g_inf()).abs() < 1e-12);
            assert_eq!(pf.kernel_derivative(0.0, 0.3, 0, 0), 1.0);
        }
        assert_eq!(ProxFunction::gaussian().g_inf(), 0.5);
        assert!((ProxFunction::sinc().g_inf() - PI * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn evenness_and_finite_differences() {
        for pf in presets() {
            for x in [0.13, 0.9, 1.7, 3.2, 5.5] {
                assert!((pf.value(x) - pf.value(-x)).abs() < 1e-14);
                for n in 0..6 {
                    let h = 1e-5;
                    let fd = (pf.deriv(n, x + h) - pf.deriv(n, x - h)) / (2.0 * h);
                    let an = pf.deriv(n + 1, x);
                    let scale = an.abs().max(1e-2 * pf.sup_abs[n + 1]);
                    assert!((fd - an).abs() <= 1e-6 * scale, "n={n} x={x}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn sinc_series_and_recurrence_agree_at_the_switch() {
        for n in 0..=6 {
            let below = sinc_deriv(n, 4.0 - 1e-9);
            let above = sinc_deriv(n, 4.0 + 1e-9);
            assert!((below - above).abs() < 1e-8, "n={n}: {below} vs {above}");
        }
    }

    #[test]
    fn envelopes_dominate_probes() {
        for pf in presets() {
            for i in 0..4 {
                for r in [0.0, 0.05, 0.5, 1.0, 2.5, 7.0, 30.0] {
                    let env = pf.envelope(i, r);
                    for k in 0..4000 {
                        let x = r + k as f64 * 0.0137;
                        assert!(env >= pf.deriv(i, x).abs() - 1e-15, "i={i} r={r} x={x}");
                    }
                }
                let mut prev = f64::INFINITY;
                for k in 0..500 {
                    let e = pf.envelope(i, k as f64 * 0.37);
                    assert!(e <= prev + 1e-15);
                    prev = e;
                }
            }
        }
    }

    #[test]
    fn gaussian_closed_forms() {
        let pf = ProxFunction::gaussian();
        assert!((pf.epsilon(1.0) - 0.221199).abs() < 1e-6);
        for r in [0.2f64, 0.5, 0.8, 1.1] {
            let exact = (1.0 - r * r / 2.0) * (-r * r / 4.0).exp();
            assert!((pf.nu(r) - exact).abs() < 1e-10);
            assert!((pf.epsilon(r) - (1.0 - (-r * r / 4.0f64).exp())).abs() < 1e-6);
        }
        assert!((pf.l_const(2) - 1.0).abs() < 1e-10);
        assert!((pf.l_const(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn sinc_epsilon_closed_form() {
        let pf = ProxFunction::sinc();
        for r in [0.1f64, 0.3, 0.6, 0.7] {
            let exact = 1.0 - (PI * r).sin() / (PI * r);
            assert!((pf.epsilon(r) - exact).abs() < 1e-5, "{r}");
        }
        assert!((pf.l_const(2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn h_bounds_term_by_term() {
        let pf = ProxFunction::gaussian();
        let r = 0.4;
        let c = pf.constants(r).unwrap();
        let eps = 1.0 - (-(r / 2.0) * (r / 2.0) / 4.0f64).exp();
        let nu = (1.0 - 2.0 * r * r) * (-(r * r)).exp();
        // sup |F'| = (√2/2) e^{-1/2} at x = √2
        let l1 = (-0.5f64).exp();
        assert!((c.l[1] - l1).abs() < 1e-9, "{} vs {l1}", c.l[1]);
        let l3 = 2f64.powf(1.5)
            * (0..200_000)
                .map(|k| {
                    let x = k as f64 * 1e-4;
                    ((0.75 * x - x * x * x / 8.0) * (-x * x / 4.0).exp()).abs()
                })
                .fold(0.0, f64::max);
        let h1 = [0.5, 1.0, l3, c.l[4], 15.0, nu / 10.0, eps / 10.0]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let h2 = [
            1.0 / 6.0,
            8.0 * eps / (10.0 * (5.0 + 2.0 * l1)),
            8.0 * nu / (9.0 * (2.0 + 2.0 * l3 + 4.0)),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        assert!((c.h1 - h1).abs() < 1e-6 * h1);
        assert!((c.h2 - h2).abs() < 1e-6 * h2);
        assert!(c.h1 <= 0.5 && c.h2 <= 1.0 / 6.0);
    }

    #[test]
    fn sinc_r_beyond_validity_names_nu() {
        let pf = ProxFunction::sinc();
        match pf.constants(0.36) {
            Err(Error::Assumption(msg)) => assert!(msg.contains("nu(2r)")),
            other => panic!("expected assumption error, got {other:?}"),
        }
        assert!(pf.constants(0.2).is_ok());
    }

    #[test]
    fn delta_conventions_and_monotonicity() {
        let pf = ProxFunction::gaussian();
        assert_eq!(pf.delta_separation(0.01, 1).unwrap(), 0.0);
        assert!(pf.delta_separation(0.0, 3).is_err());
        let d = pf.delta_separation(0.01, 8).unwrap();
        assert!(d.is_finite() && d > 0.0);
        assert!(pf.delta_separation(0.02, 8).unwrap() <= d);
        assert!(pf.delta_separation(0.01, 9).unwrap() >= d);
        for u in [1e-4, 1e-3, 1e-2, 0.1, 1.0] {
            assert!(pf.delta_separation(u, 64).unwrap() <= 10.0 / u);
        }
    }

    #[test]
    fn separation_requirement_shape() {
        let pf = ProxFunction::gaussian();
        let s1 = pf.separation_requirement(0.5, 0.4, 1).unwrap();
        assert!((s1 - 4.0 * 0.4 / 0.5f64.sqrt()).abs() < 1e-12);
        let mut prev = 0.0;
        for s in 1..6 {
            let v = pf.separation_requirement(0.5, 0.4, s).unwrap();
            assert!(v.is_finite() && v >= prev);
            prev = v;
        }
    }

    #[test]
    fn transpose_identity() {
        for pf in presets() {
            for i in 0..4 {
                for j in 0..4 {
                    let a = pf.kernel_derivative(0.37, 0.5, i, j);
                    let b = pf.kernel_derivative(-0.37, 0.5, j, i);
                    assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }
}
