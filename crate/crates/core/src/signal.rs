//! Sparse mixtures `βΦ_T(ϑ)` and noisy observations of them.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dictionary::{signed_diff, Dictionary, Domain};
use crate::error::{Error, Result};
use crate::measure::axpy;
use crate::noise::NoiseModel;

/// `(β, ϑ)` with nonzero coefficients and distinct locations; `s = 0` is the zero signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mixture {
    beta: Vec<f64>,
    theta: Vec<f64>,
}

impl Mixture {
    /// Validated mixture: equal lengths, finite nonzero `β`, pairwise distinct `θ`.
    pub fn new(beta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let m = Self::relaxed(beta, theta)?;
        if let Some(b) = m.beta.iter().find(|b| **b == 0.0) {
            return Err(Error::InvalidMixture(format!("coefficient {b} is zero")));
        }
        let spread = m.theta.iter().fold(1.0f64, |acc, t| acc.max(t.abs()));
        if let Some(gap) = m.min_gap(Domain::RealLine) {
            if gap <= 1e-12 * spread {
                return Err(Error::InvalidMixture(format!(
                    "locations must be distinct (closest pair {gap:e} apart)"
                )));
            }
        }
        Ok(m)
    }

    /// Unchecked apart from lengths and finiteness; for negative tests only.
    pub fn relaxed(beta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if beta.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                got: theta.len(),
            });
        }
        if beta.iter().chain(&theta).any(|x| !x.is_finite()) {
            return Err(Error::InvalidMixture("non-finite entry".into()));
        }
        Ok(Self { beta, theta })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn s(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    /// Coefficients multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.beta.iter().map(|b| b * c).collect(),
            self.theta.clone(),
        )
    }

    /// Components of both mixtures side by side.
    pub fn concat(&self, other: &Mixture) -> Result<Self> {
        let mut beta = self.beta.clone();
        beta.extend_from_slice(&other.beta);
        let mut theta = self.theta.clone();
        theta.extend_from_slice(&other.theta);
        Self::new(beta, theta)
    }

    /// Smallest pairwise distance; `None` when `s < 2`.
    pub fn min_gap(&self, domain: Domain) -> Option<f64> {
        let mut best: Option<f64> = None;
        for a in 0..self.theta.len() {
            for b in a + 1..self.theta.len() {
                let d = signed_diff(domain, self.theta[a], self.theta[b]).abs();
                best = Some(best.map_or(d, |x: f64| x.min(d)));
            }
        }
        best
    }

    /// Whether every pair is farther apart than `delta`.
    pub fn is_separated(&self, domain: Domain, delta: f64) -> bool {
        self.min_gap(domain).is_none_or(|g| g > delta)
    }

    fn check_in(&self, dict: &Dictionary) -> Result<()> {
        let w = dict.window();
        for &t in &self.theta {
            if !w.contains(t) {
                return Err(Error::Domain(format!(
                    "theta = {t} lies outside [{}, {}]",
                    w.lo, w.hi
                )));
            }
        }
        if let Some(gap) = self.min_gap(dict.domain()) {
            if gap <= 1e-12 * w.length() {
                return Err(Error::InvalidMixture(format!(
                    "locations must be distinct (closest pair {gap:e} apart)"
                )));
            }
        }
        Ok(())
    }

    /// Line-delimited record: `s`, then one `β,θ` line per component, 17 significant digits.
    pub fn to_record(&self) -> String {
        let mut out = format!("{}\n", self.s());
        for (b, t) in self.beta.iter().zip(&self.theta) {
            let _ = writeln!(out, "{b:.16e},{t:.16e}");
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let s: usize = lines
            .next()
            .ok_or_else(|| Error::Input("empty mixture record".into()))?
            .parse()
            .map_err(|e| Error::Input(format!("bad component count: {e}")))?;
        let mut beta = Vec::with_capacity(s);
        let mut theta = Vec::with_capacity(s);
        for line in lines {
            let (b, t) = line
                .split_once(',')
                .ok_or_else(|| Error::Input(format!("expected 'beta,theta', got '{line}'")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Input(format!("bad number '{x}': {e}")))
            };
            beta.push(parse(b)?);
            theta.push(parse(t)?);
        }
        if beta.len() != s {
            return Err(Error::Input(format!(
                "record announces {s} components but lists {}",
                beta.len()
            )));
        }
        Self::new(beta, theta)
    }
}

/// `Σ_k β_k φ_T(θ_k)`.
pub fn synthesize(m: &Mixture, dict: &Dictionary) -> Result<Vec<f64>> {
    m.check_in(dict)?;
    let mut out = dict.measure().zeros();
    for (&b, &t) in m.beta.iter().zip(&m.theta) {
        axpy(b, &dict.atom(t)?, &mut out);
    }
    Ok(out)
}

/// `y = βΦ_T(ϑ) + w_T` for replicate `index` of the experiment seeded with `seed`.
pub fn observe(
    m: &Mixture,
    dict: &Dictionary,
    noise: &NoiseModel,
    seed: u64,
    index: u64,
) -> Result<Vec<f64>> {
    let mut y = synthesize(m, dict)?;
    let w = noise.sample(dict.measure(), seed, index)?;
    axpy(1.0, &w, &mut y);
    Ok(y)
}

/// `Γ_{kℓ} = 𝒦_T(θ_k, θ_ℓ)`; no distinctness check, so rank-deficient inputs are allowed.
pub fn gram(m: &Mixture, dict: &Dictionary) -> Result<DMatrix<f64>> {
    let atoms = m
        .theta
        .iter()
        .map(|&t| dict.atom(t))
        .collect::<Result<Vec<_>>>()?;
    let s = atoms.len();
    let meas = dict.measure();
    Ok(DMatrix::from_fn(s, s, |a, b| {
        if a == b {
            1.0
        } else {
            meas.inner_unchecked(&atoms[a], &atoms[b])
        }
    }))
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the Gram matrix.
pub fn gram_extreme_eigenvalues(m: &Mixture, dict: &Dictionary) -> Result<(f64, f64)> {
    if m.is_empty() {
        return Err(Error::InvalidMixture(
            "the Gram matrix of an empty mixture is empty".into(),
        ));
    }
    let g = gram(m, dict)?;
    let ev = SymmetricEigen::new(g).eigenvalues;
    Ok((ev.min(), ev.max()))
}

pub fn gram_min_eigenvalue(m: &Mixture, dict: &Dictionary) -> Result<f64> {
    Ok(gram_extreme_eigenvalues(m, dict)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;

    fn dict() -> Dictionary {
        Dictionary::gaussian(0.5, 6.0, 480, 0.4).unwrap()
    }

    #[test]
    fn zero_and_single_spike() {
        let d = dict();
        let z = synthesize(&Mixture::empty(), &d).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        let one = Mixture::new(vec![2.0], vec![0.3]).unwrap();
        let y = synthesize(&one, &d).unwrap();
        assert!((d.measure().norm(&y).unwrap() - 2.0).abs() < 1e-12);
        assert!((gram_min_eigenvalue(&one, &d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_spike_norm_matches_gram_form() {
        let d = dict();
        let m = Mixture::new(vec![1.5, -0.7], vec![-0.4, 0.9]).unwrap();
        let y = synthesize(&m, &d).unwrap();
        let g = gram(&m, &d).unwrap();
        let b = nalgebra::DVector::from_vec(m.beta().to_vec());
        let quad = (b.transpose() * &g * &b)[(0, 0)];
        assert!((d.measure().norm_sq(&y).unwrap() - quad).abs() < 1e-12);
    }

    #[test]
    fn coincident_locations() {
        let d = dict();
        assert!(matches!(
            Mixture::new(vec![1.0, 1.0], vec![0.2, 0.2]),
            Err(Error::InvalidMixture(_))
        ));
        let r = Mixture::relaxed(vec![1.0, 1.0], vec![0.2, 0.2]).unwrap();
        assert!(gram_min_eigenvalue(&r, &d).unwrap().abs() < 1e-12);
        assert!(matches!(synthesize(&r, &d), Err(Error::InvalidMixture(_))));
        assert!(Mixture::new(vec![0.0], vec![0.1]).is_err());
    }

    #[test]
    fn observation_contracts() {
        let d = dict();
        let m = Mixture::new(vec![1.0, -2.0], vec![-1.0, 1.0]).unwrap();
        let quiet = NoiseModel::grid_white(0.0, d.measure()).unwrap();
        assert_eq!(
            observe(&m, &d, &quiet, 1, 0).unwrap(),
            synthesize(&m, &d).unwrap()
        );
        let nm = NoiseModel::grid_white(1.0, d.measure()).unwrap();
        assert_eq!(
            observe(&m, &d, &nm, 8, 2).unwrap(),
            observe(&m, &d, &nm, 8, 2).unwrap()
        );
        let w = nm.sample(d.measure(), 8, 2).unwrap();
        assert_eq!(observe(&Mixture::empty(), &d, &nm, 8, 2).unwrap(), w);
    }

    #[test]
    fn record_round_trip() {
        let m = Mixture::new(vec![0.1, -3.25], vec![1.0 / 3.0, -2.0]).unwrap();
        let text = m.to_record();
        assert!(text.starts_with("2\n"));
        assert_eq!(Mixture::from_record(&text).unwrap(), m);
        assert!(Mixture::from_record("3\n1,2\n").is_err());
        assert_eq!(Mixture::from_record("0\n").unwrap(), Mixture::empty());
    }

    #[test]
    fn torus_separation_wraps() {
        let m = Mixture::new(vec![1.0, 1.0], vec![0.02, 0.97]).unwrap();
        assert!((m.min_gap(Domain::Torus).unwrap() - 0.05).abs() < 1e-12);
        assert!(!m.is_separated(Domain::Torus, 0.06));
        assert!(m.is_separated(Domain::RealLine, 0.9));
    }
}
