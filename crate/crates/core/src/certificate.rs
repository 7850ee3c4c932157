//! Interpolating dual certificates with vanishing derivative at the anchors,
//! and a numerical verifier for their near-quadratic decay and far-region
//! gap.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::dictionary::{Dictionary, MetricAccumulator};
use crate::error::{Error, Result};
use crate::measure::axpy;

/// Condition-number guard of the interpolation system.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `p = Σ α_k φ_T(θ_k) + Σ ξ_k D̃₁[φ_T](θ_k)` interpolating the signs `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub anchors: Vec<f64>,
    pub signs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    /// `p` sampled on the measure.
    pub rep: Vec<f64>,
    /// Largest interpolation residual over both constraint families.
    pub residual: f64,
    pub condition: f64,
}

impl Certificate {
    /// `⟨φ_T(θ), p⟩`.
    pub fn correlation(&self, dict: &Dictionary, theta: f64) -> Result<f64> {
        dict.measure().inner(&dict.atom(theta)?, &self.rep)
    }

    pub fn norm(&self, dict: &Dictionary) -> Result<f64> {
        dict.measure().norm(&self.rep)
    }

    pub fn s(&self) -> usize {
        self.anchors.len()
    }
}

/// Solves the `2s × 2s` Gram system for `(α, ξ)`.
pub fn build_certificate(dict: &Dictionary, anchors: &[f64], signs: &[f64]) -> Result<Certificate> {
    let s = anchors.len();
    if s == 0 {
        return Err(Error::Input(
            "a certificate needs at least one anchor".into(),
        ));
    }
    if signs.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: signs.len(),
        });
    }
    if signs.iter().any(|v| (v.abs() - 1.0).abs() > 1e-12) {
        return Err(Error::Input("certificate signs must be +1 or -1".into()));
    }
    let meas = dict.measure();
    let feats = anchors
        .iter()
        .map(|&t| dict.covariant_feature(t))
        .collect::<Result<Vec<_>>>()?;
    // basis vectors: φ(θ_1..s), D̃₁φ(θ_1..s)
    let basis: Vec<&[f64]> = feats
        .iter()
        .map(|f| f.cov[0].as_slice())
        .chain(feats.iter().map(|f| f.cov[1].as_slice()))
        .collect();
    let n = 2 * s;
    let gram = DMatrix::from_fn(n, n, |a, b| meas.inner_unchecked(basis[a], basis[b]));
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Separation {
            cond: condition,
            limit: CONDITION_LIMIT,
        });
    }
    let mut rhs = DVector::zeros(n);
    for k in 0..s {
        rhs[k] = signs[k];
    }
    let lu = gram.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(Error::Separation {
        cond: f64::INFINITY,
        limit: CONDITION_LIMIT,
    })?;
    // one step of iterative refinement
    let res = &rhs - &gram * &sol;
    if let Some(corr) = lu.solve(&res) {
        sol += corr;
    }
    let mut rep = meas.zeros();
    for (i, b) in basis.iter().enumerate() {
        axpy(sol[i], b, &mut rep);
    }
    let mut residual = 0.0f64;
    for k in 0..s {
        residual = residual.max((meas.inner_unchecked(&feats[k].cov[0], &rep) - signs[k]).abs());
        residual = residual.max(meas.inner_unchecked(&feats[k].cov[1], &rep).abs());
    }
    Ok(Certificate {
        anchors: anchors.to_vec(),
        signs: signs.to_vec(),
        alpha: sol.rows(0, s).iter().copied().collect(),
        xi: sol.rows(s, s).iter().copied().collect(),
        rep,
        residual,
        condition,
    })
}

/// Measured certificate constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// Per anchor: largest `C` with `|⟨φ_T(θ), p⟩| ≤ 1 - C 𝔡_T(θ_k, θ)²` on the ball of radius `r`.
    pub near_constants: Vec<f64>,
    pub near_constant: f64,
    /// `1 - sup |⟨φ_T(θ), p⟩|` outside every ball.
    pub far_constant: f64,
    /// `‖p‖/√s`.
    pub norm_constant: f64,
    /// `sup |⟨φ_T(θ), p⟩|` over scan points that are not anchors.
    pub max_off_anchor: f64,
    /// `max_k ||⟨φ_T(θ_k), p⟩| - 1|`.
    pub anchor_deviation: f64,
    pub scan_points: usize,
    pub pass: bool,
}

impl CertificateReport {
    /// CSV rows `quantity,anchor,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,anchor,value\n");
        for (k, c) in self.near_constants.iter().enumerate() {
            out.push_str(&format!("C_N,{k},{c:.16e}\n"));
        }
        out.push_str(&format!("C_N,all,{:.16e}\n", self.near_constant));
        out.push_str(&format!("C_F,all,{:.16e}\n", self.far_constant));
        out.push_str(&format!("C_B,all,{:.16e}\n", self.norm_constant));
        out.push_str(&format!(
            "max_off_anchor,all,{:.16e}\n",
            self.max_off_anchor
        ));
        out.push_str(&format!("pass,all,{}\n", self.pass));
        out
    }
}

/// One point of a certificate scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub theta: f64,
    pub correlation: f64,
    /// Metric distance to the nearest anchor and its index.
    pub distance: f64,
    pub nearest: usize,
}

/// `⟨φ_T(θ), p⟩` on a grid of the window with spacing at most `grid_step`.
pub fn scan_certificate(
    cert: &Certificate,
    dict: &Dictionary,
    metric: &MetricAccumulator,
    grid_step: f64,
) -> Result<Vec<ScanPoint>> {
    let window = dict.window();
    let mut thetas = window.scan_points(grid_step);
    thetas.extend(cert.anchors.iter().copied());
    thetas.sort_by(|a, b| a.total_cmp(b));
    thetas.dedup();
    let meas = dict.measure();
    thetas
        .par_iter()
        .map(|&t| {
            let c = meas.inner_unchecked(&dict.atom(t)?, &cert.rep);
            let mut best = (f64::INFINITY, 0usize);
            for (k, &a) in cert.anchors.iter().enumerate() {
                let d = metric.distance(t, a)?;
                if d < best.0 {
                    best = (d, k);
                }
            }
            Ok(ScanPoint {
                theta: t,
                correlation: c,
                distance: best.0,
                nearest: best.1,
            })
        })
        .collect()
}

/// Measures `Ĉ_N`, `Ĉ_F` and `Ĉ_B` on a grid of step `grid_step ≤ σ_T/20`.
pub fn verify_certificate(
    cert: &Certificate,
    dict: &Dictionary,
    metric: &MetricAccumulator,
    r: f64,
    grid_step: f64,
) -> Result<CertificateReport> {
    if !(grid_step > 0.0) || grid_step > dict.scale() / 20.0 * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "verification grid step {grid_step} must lie in (0, sigma/20]"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!(
            "near-region radius must be positive, got {r}"
        )));
    }
    let pts = scan_certificate(cert, dict, metric, grid_step)?;
    let s = cert.s();
    let mut near = vec![f64::INFINITY; s];
    let mut far_sup = 0.0f64;
    let mut off_sup = 0.0f64;
    let mut anchor_dev = 0.0f64;
    // below this metric distance 1 - |c| is at rounding level
    let tiny = 1e-4 * r;
    for p in &pts {
        let c = p.correlation.abs();
        if p.distance == 0.0 {
            anchor_dev = anchor_dev.max((c - 1.0).abs());
            continue;
        }
        off_sup = off_sup.max(c);
        if p.distance <= r {
            if p.distance >= tiny {
                near[p.nearest] = near[p.nearest].min((1.0 - c) / (p.distance * p.distance));
            }
        } else {
            far_sup = far_sup.max(c);
        }
    }
    for &a in &cert.anchors {
        let c = cert.correlation(dict, a)?.abs();
        anchor_dev = anchor_dev.max((c - 1.0).abs());
    }
    let near_constant = near.iter().copied().fold(f64::INFINITY, f64::min);
    let far_constant = 1.0 - far_sup;
    let norm_constant = cert.norm(dict)? / (s as f64).sqrt();
    Ok(CertificateReport {
        pass: near_constant > 0.0 && far_constant > 0.0,
        near_constants: near,
        near_constant,
        far_constant,
        norm_constant,
        max_off_anchor: off_sup,
        anchor_deviation: anchor_dev,
        scan_points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_anchor_is_the_feature() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let c = build_certificate(&d, &[0.4], &[1.0]).unwrap();
        assert!((c.alpha[0] - 1.0).abs() < 1e-10);
        assert!(c.xi[0].abs() < 1e-8);
        let atom = d.atom(0.4).unwrap();
        let diff = c
            .rep
            .iter()
            .zip(&atom)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8);
        let acc = d.metric().unwrap();
        let rep = verify_certificate(&c, &d, &acc, 0.3, d.scale() / 20.0).unwrap();
        assert!(rep.far_constant > 0.0 && rep.near_constant > 0.0 && rep.pass);
        assert!(rep.anchor_deviation < 1e-10);
    }

    #[test]
    fn mixed_signs_interpolate() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let c = build_certificate(&d, &[-1.8, 0.1, 1.9], &[1.0, -1.0, 1.0]).unwrap();
        assert!(c.residual <= 1e-8, "{}", c.residual);
        let neg = build_certificate(&d, &[-1.8, 0.1, 1.9], &[-1.0, 1.0, -1.0]).unwrap();
        for (a, b) in c.rep.iter().zip(&neg.rep) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn near_coincident_anchors_are_singular() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let err = build_certificate(&d, &[0.2, 0.2 + 1e-7], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let d = Dictionary::dirichlet_basis(31).unwrap();
        let c = build_certificate(&d, &[0.3], &[1.0]).unwrap();
        let acc = d.metric().unwrap();
        assert!(verify_certificate(&c, &d, &acc, 0.3, d.scale() / 10.0).is_err());
    }
}
