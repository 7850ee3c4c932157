//! Goodness-of-fit tests against a reference mixture or a signed support.
//!
//! Three statistics are provided: the centered residual norm `𝒯₁`, the
//! plug-in distance `𝒯₂` between the fitted and reference signals, and the
//! certificate statistic `𝒯₃` for support inclusion. Each test rejects when
//! the absolute statistic exceeds its threshold.

use crate::certificate::{build_certificate, Certificate};
use crate::dictionary::{Dictionary, MetricAccumulator};
use crate::error::{Error, Result};
use crate::measure::axpy;
use crate::noise::NoiseModel;
use crate::signal::{synthesize, Mixture};
use crate::solver::{FitResult, Solver, SolverConfig};

/// Reference model of the null hypothesis.
///
/// For the goodness-of-fit tests the whole mixture is the null. For the
/// support test only the locations and `signs` matter; the stored
/// amplitudes are then the signs themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpec {
    pub mixture: Mixture,
    pub signs: Vec<f64>,
}

impl NullSpec {
    /// `H₀: βΦ_T(ϑ) = β⁰Φ_T(ϑ⁰)`; the signs follow `β⁰`.
    pub fn mixture(m: Mixture) -> Self {
        let signs = m.beta().iter().map(|b| b.signum()).collect();
        Self { mixture: m, signs }
    }

    /// Signal detection, `s⁰ = 0`.
    pub fn detection() -> Self {
        Self::mixture(Mixture::empty())
    }

    /// Support-inclusion null on `anchors` labelled by `signs ∈ {±1}`.
    pub fn support(anchors: Vec<f64>, signs: Vec<f64>) -> Result<Self> {
        if signs.iter().any(|v| (v.abs() - 1.0).abs() > 1e-12) {
            return Err(Error::Input("support signs must be +1 or -1".into()));
        }
        let mixture = Mixture::new(signs.clone(), anchors)?;
        Ok(Self { mixture, signs })
    }

    pub fn s0(&self) -> usize {
        self.mixture.s()
    }

    pub fn anchors(&self) -> &[f64] {
        self.mixture.theta()
    }

    /// `β⁰Φ_T(ϑ⁰)` on the measure.
    pub fn signal(&self, dict: &Dictionary) -> Result<Vec<f64>> {
        synthesize(&self.mixture, dict)
    }

    /// Vanishing-derivative pre-certificate `p₀` interpolating the signs.
    pub fn certificate(&self, dict: &Dictionary) -> Result<Certificate> {
        build_certificate(dict, self.anchors(), &self.signs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    T1,
    T2,
    T3,
    Max,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::T1 => "T1",
            TestKind::T2 => "T2",
            TestKind::T3 => "T3",
            TestKind::Max => "MAX",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(TestKind::T1),
            "T2" => Ok(TestKind::T2),
            "T3" => Ok(TestKind::T3),
            "MAX" => Ok(TestKind::Max),
            _ => Err(Error::Config(format!(
                "unknown test '{s}' (expected T1, T2, T3 or MAX)"
            ))),
        }
    }
}

/// Decision of one test. For `Max` the statistic is the largest ratio
/// `|𝒯|/t` over the sub-tests and the threshold is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub which: TestKind,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub parts: Vec<TestOutcome>,
}

impl TestOutcome {
    pub fn new(which: TestKind, statistic: f64, threshold: f64) -> Self {
        Self {
            which,
            statistic,
            threshold,
            reject: statistic.abs() > threshold,
            parts: Vec::new(),
        }
    }

    /// Rejects as soon as one sub-test rejects.
    pub fn combine(parts: Vec<TestOutcome>) -> Self {
        let ratio = parts
            .iter()
            .map(|p| {
                if p.threshold > 0.0 {
                    p.statistic.abs() / p.threshold
                } else if p.statistic != 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        let reject = parts.iter().any(|p| p.reject);
        Self {
            which: TestKind::Max,
            statistic: ratio,
            threshold: 1.0,
            reject,
            parts,
        }
    }
}

/// `𝒯₁ = ‖y - β⁰Φ_T(ϑ⁰)‖² - 𝔼‖w_T‖²`.
pub fn stat_t1(y: &[f64], null: &NullSpec, dict: &Dictionary, noise: &NoiseModel) -> Result<f64> {
    let meas = dict.measure();
    meas.check(y)?;
    let mut r = y.to_vec();
    axpy(-1.0, &null.signal(dict)?, &mut r);
    Ok(meas.norm_sq(&r)? - noise.summary().expected_sq_norm)
}

/// `𝒯₂ = ‖β̂Φ_T(ϑ̂) - β⁰Φ_T(ϑ⁰)‖²`, together with the fit.
pub fn stat_t2(y: &[f64], null: &NullSpec, solver: &Solver) -> Result<(f64, FitResult)> {
    let dict = solver.dictionary();
    let fit = solver.fit(y)?;
    Ok((plug_in_distance(&fit, null, dict)?, fit))
}

fn plug_in_distance(fit: &FitResult, null: &NullSpec, dict: &Dictionary) -> Result<f64> {
    let mut d = synthesize(&fit.mixture, dict)?;
    axpy(-1.0, &null.signal(dict)?, &mut d);
    dict.measure().norm_sq(&d)
}

/// `𝒯₃ = ‖β̂‖₁ - ⟨y, p₀⟩`, together with the fit.
pub fn stat_t3(y: &[f64], cert: &Certificate, solver: &Solver) -> Result<(f64, FitResult)> {
    let dict = solver.dictionary();
    let fit = solver.fit(y)?;
    let proj = dict.measure().inner(y, &cert.rep)?;
    Ok((fit.mixture.l1_norm() - proj, fit))
}

/// `B = ‖β‖₁ - ⟨βΦ_T(ϑ), p₀⟩`; zero when the support and signs are contained in the null.
pub fn certificate_gap(m: &Mixture, cert: &Certificate, dict: &Dictionary) -> Result<f64> {
    let sig = synthesize(m, dict)?;
    Ok(m.l1_norm() - dict.measure().inner(&sig, &cert.rep)?)
}

/// `ρ²/2`.
pub fn threshold_t1(rho: f64) -> f64 {
    0.5 * rho * rho
}

/// Upper bound on the total risk of the residual-norm test at threshold `t`
/// and separation `ρ`, clipped at 2.
pub fn risk_bound_t1(rho: f64, t: f64, noise: &NoiseModel) -> Result<f64> {
    if !(t > 0.0) || !(rho * rho > t) {
        return Err(Error::Domain(format!(
            "need rho^2 > t > 0, got rho = {rho}, t = {t}"
        )));
    }
    let s = noise.summary();
    let var = noise.sigma_bar * noise.sigma_bar * s.decay;
    let gap = rho * rho - t;
    let tail = if var > 0.0 {
        (-gap * gap / (32.0 * var * rho * rho)).exp()
    } else {
        0.0
    };
    Ok((s.xi / (t * t) + 4.0 * s.xi / (gap * gap) + tail).min(2.0))
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "level must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Separation at which the residual-norm test at `t = ρ²/2` has risk at most `α`.
pub fn rho1(alpha: f64, noise: &NoiseModel) -> Result<f64> {
    check_level(alpha)?;
    let s = noise.summary();
    let a = (40.0 * s.xi / alpha).powf(0.25);
    let b = 8.0 * noise.sigma_bar * (2.0 * s.decay * (2.0 / alpha).ln()).sqrt();
    Ok(a.max(b))
}

/// Magnitudes of the error and certificate constants behind the thresholds;
/// set from defaults or from a calibration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConstants {
    /// Prediction error scale: `‖β̂Φ - β⋆Φ‖ ≤ 𝒞₀ √s κ`.
    pub c0: f64,
    /// Tuning scale: `κ = 𝒞₁ σ̄ √(Δ_T log τ)`.
    pub c1: f64,
    /// ℓ₁ error scale: `|‖β̂‖₁ - ‖β⋆‖₁| ≤ 𝒞₃ s κ`.
    pub c3: f64,
    /// Certificate near and far constants.
    pub c_near: f64,
    pub c_far: f64,
    /// Multiplier `c` inside the logarithm of the closed-form separation.
    pub c_log: f64,
}

impl Default for TestConstants {
    fn default() -> Self {
        Self {
            c0: 2.0,
            c1: 2.0,
            c3: 2.0,
            c_near: 0.25,
            c_far: 0.25,
            c_log: 2.0,
        }
    }
}

impl TestConstants {
    /// `C = 2𝒞₀𝒞₁`.
    pub fn c_big(&self) -> f64 {
        2.0 * self.c0 * self.c1
    }

    fn certificate_floor(&self) -> f64 {
        self.c_near.min(self.c_far)
    }

    /// `𝒞₄ = 2𝒞₃/(C_N ∧ C_F)`.
    pub fn c4(&self) -> f64 {
        2.0 * self.c3 / self.certificate_floor()
    }

    /// `𝒞₅ = 2/(C_N ∧ C_F)`.
    pub fn c5(&self) -> f64 {
        2.0 / self.certificate_floor()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c0,
            self.c1,
            self.c3,
            self.c_near,
            self.c_far,
            self.c_log,
        ];
        if all.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Config(
                "test constants must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// `|Θ_T|` and `σ_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub window_length: f64,
    pub sigma: f64,
}

impl Geometry {
    pub fn of(dict: &Dictionary) -> Self {
        Self {
            window_length: dict.window().length(),
            sigma: dict.scale(),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.window_length / self.sigma
    }
}

/// Threshold and separation of the plug-in test.
#[derive(Debug, Clone, PartialEq)]
pub struct PlugInSeparation {
    pub t: f64,
    pub rho: f64,
    /// `C σ̄ √((s∨s⁰∨1) Δ_T log(c|Θ_T|/(α σ_T)))`.
    pub closed_form: f64,
    /// Set when `|Θ_T|/σ_T < 1`, outside the range of the closed form.
    pub warning: Option<String>,
}

/// `t = 𝒞₀²(s⁰∨1)κ²` and `ρ = 𝒞₀√(s∨1)κ + √t`.
pub fn rho2(
    alpha: f64,
    s: usize,
    s0: usize,
    kappa: f64,
    noise: &NoiseModel,
    geom: Geometry,
    consts: &TestConstants,
) -> Result<PlugInSeparation> {
    check_level(alpha)?;
    consts.validate()?;
    let t = consts.c0.powi(2) * s0.max(1) as f64 * kappa * kappa;
    let rho = consts.c0 * (s.max(1) as f64).sqrt() * kappa + t.sqrt();
    let warning = (geom.ratio() < 1.0).then(|| {
        format!(
            "window length / scale = {} < 1: the closed-form separation is outside its range",
            geom.ratio()
        )
    });
    Ok(PlugInSeparation {
        t,
        rho,
        closed_form: sparse_term(alpha, s.max(s0).max(1), noise, geom, consts, consts.c_log),
        warning,
    })
}

fn sparse_term(
    alpha: f64,
    s: usize,
    noise: &NoiseModel,
    geom: Geometry,
    consts: &TestConstants,
    c: f64,
) -> f64 {
    let arg = (c * geom.ratio() / alpha).ln().max(0.0);
    consts.c_big() * noise.sigma_bar * (s as f64 * noise.decay() * arg).sqrt()
}

/// Which term of the aggregated separation is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `(80Ξ_T/α)^{1/4}` binds.
    Dense,
    /// The logarithmic sparse term binds.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateSeparation {
    pub value: f64,
    pub dense_term: f64,
    pub sparse_term: f64,
    pub binding: Regime,
}

/// `min((80Ξ_T/α)^{1/4}, C σ̄ √((s∨s⁰∨1) Δ_T log(2c|Θ_T|/(α σ_T))))`.
pub fn rho_min(
    alpha: f64,
    s: usize,
    s0: usize,
    noise: &NoiseModel,
    geom: Geometry,
    consts: &TestConstants,
) -> Result<AggregateSeparation> {
    check_level(alpha)?;
    consts.validate()?;
    let dense = (80.0 * noise.summary().xi / alpha).powf(0.25);
    let sparse = sparse_term(
        alpha,
        s.max(s0).max(1),
        noise,
        geom,
        consts,
        2.0 * consts.c_log,
    );
    let binding = if dense <= sparse {
        Regime::Dense
    } else {
        Regime::Sparse
    };
    Ok(AggregateSeparation {
        value: dense.min(sparse),
        dense_term: dense,
        sparse_term: sparse,
        binding,
    })
}

/// Threshold and separation of the support test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportSeparation {
    /// `t = 2𝒞₃ s⁰ κ`.
    pub t: f64,
    /// `ρ = 𝒞₄ s κ + 𝒞₅ t`.
    pub rho: f64,
}

pub fn rho3(s: usize, s0: usize, kappa: f64, consts: &TestConstants) -> Result<SupportSeparation> {
    consts.validate()?;
    let t = 2.0 * consts.c3 * s0 as f64 * kappa;
    Ok(SupportSeparation {
        t,
        rho: consts.c4() * s as f64 * kappa + consts.c5() * t,
    })
}

/// `𝒟_{T,r}`: squared metric distance weighted by `|β_ℓ|` for components
/// within `r` of an anchor carrying their sign, `|β_ℓ|` for the rest.
pub fn discrepancy(
    m: &Mixture,
    null: &NullSpec,
    metric: &MetricAccumulator,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let anchors = null.anchors();
    for a in 0..anchors.len() {
        for b in a + 1..anchors.len() {
            let d = metric.distance(anchors[a], anchors[b])?;
            if r >= 0.5 * d {
                return Err(Error::Domain(format!(
                    "radius {r} must be below half the anchor distance {d}"
                )));
            }
        }
    }
    let mut total = 0.0;
    for (&b, &t) in m.beta().iter().zip(m.theta()) {
        let mut near = None;
        for (k, &a) in anchors.iter().enumerate() {
            let d = metric.distance(t, a)?;
            if d <= r && b.signum() == null.signs[k] {
                near = Some(d);
                break;
            }
        }
        total += match near {
            Some(d) => b.abs() * d * d,
            None => b.abs(),
        };
    }
    Ok(total)
}

/// Everything a decision needs besides the data.
#[derive(Debug, Clone)]
pub struct TestContext<'a> {
    pub dict: &'a Dictionary,
    pub noise: &'a NoiseModel,
    pub null: &'a NullSpec,
    pub solver: Solver<'a>,
    /// Thresholds for `𝒯₁`, `𝒯₂`, `𝒯₃`.
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    cert: Option<Certificate>,
}

impl<'a> TestContext<'a> {
    /// Builds the solver and, when the null has anchors, the certificate `p₀`.
    pub fn new(
        dict: &'a Dictionary,
        noise: &'a NoiseModel,
        null: &'a NullSpec,
        cfg: SolverConfig,
        thresholds: [f64; 3],
    ) -> Result<Self> {
        noise.check_compatible(dict.measure())?;
        let cert = if null.s0() > 0 {
            Some(null.certificate(dict)?)
        } else {
            None
        };
        Ok(Self {
            dict,
            noise,
            null,
            solver: Solver::new(dict, cfg)?,
            t1: thresholds[0],
            t2: thresholds[1],
            t3: thresholds[2],
            cert,
        })
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.cert.as_ref()
    }
}

/// Thresholds for a single test at level `α`, or for the aggregated test
/// (level `α/2` per sub-test) when `aggregate` is set.
pub fn thresholds(
    alpha: f64,
    aggregate: bool,
    s: usize,
    null: &NullSpec,
    kappa: f64,
    noise: &NoiseModel,
    geom: Geometry,
    consts: &TestConstants,
) -> Result<[f64; 3]> {
    let a = if aggregate { alpha / 2.0 } else { alpha };
    let t1 = threshold_t1(rho1(a, noise)?);
    let t2 = rho2(a, s, null.s0(), kappa, noise, geom, consts)?.t;
    let t3 = rho3(s, null.s0(), kappa, consts)?.t;
    Ok([t1, t2, t3])
}

pub fn run_test(y: &[f64], which: TestKind, ctx: &TestContext) -> Result<TestOutcome> {
    match which {
        TestKind::T1 => Ok(TestOutcome::new(
            TestKind::T1,
            stat_t1(y, ctx.null, ctx.dict, ctx.noise)?,
            ctx.t1,
        )),
        TestKind::T2 => {
            let (stat, _) = stat_t2(y, ctx.null, &ctx.solver)?;
            Ok(TestOutcome::new(TestKind::T2, stat, ctx.t2))
        }
        TestKind::T3 => {
            let cert = ctx
                .cert
                .as_ref()
                .ok_or_else(|| Error::Input("the support test needs at least one anchor".into()))?;
            let (stat, _) = stat_t3(y, cert, &ctx.solver)?;
            Ok(TestOutcome::new(TestKind::T3, stat, ctx.t3))
        }
        TestKind::Max => run_max_test(y, ctx),
    }
}

/// Aggregated test: rejects when either the residual-norm or the plug-in test rejects.
pub fn run_max_test(y: &[f64], ctx: &TestContext) -> Result<TestOutcome> {
    let a = run_test(y, TestKind::T1, ctx)?;
    let b = run_test(y, TestKind::T2, ctx)?;
    Ok(TestOutcome::combine(vec![a, b]))
}

/// Runs every test in `which` on `y`, fitting at most once.
pub fn run_tests(y: &[f64], which: &[TestKind], ctx: &TestContext) -> Result<Vec<TestOutcome>> {
    let needs_fit = which.iter().any(|w| !matches!(w, TestKind::T1));
    let fit = if needs_fit {
        Some(ctx.solver.fit(y)?)
    } else {
        None
    };
    let t1 = || -> Result<TestOutcome> {
        Ok(TestOutcome::new(
            TestKind::T1,
            stat_t1(y, ctx.null, ctx.dict, ctx.noise)?,
            ctx.t1,
        ))
    };
    let t2 = || -> Result<TestOutcome> {
        let f = fit.as_ref().expect("fit computed");
        Ok(TestOutcome::new(
            TestKind::T2,
            plug_in_distance(f, ctx.null, ctx.dict)?,
            ctx.t2,
        ))
    };
    which
        .iter()
        .map(|w| match w {
            TestKind::T1 => t1(),
            TestKind::T2 => t2(),
            TestKind::T3 => {
                let cert = ctx.cert.as_ref().ok_or_else(|| {
                    Error::Input("the support test needs at least one anchor".into())
                })?;
                let f = fit.as_ref().expect("fit computed");
                let stat = f.mixture.l1_norm() - ctx.dict.measure().inner(y, &cert.rep)?;
                Ok(TestOutcome::new(TestKind::T3, stat, ctx.t3))
            }
            TestKind::Max => Ok(TestOutcome::combine(vec![t1()?, t2()?])),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ObservationMeasure;

    fn grid_noise(sigma_bar: f64, n: usize) -> NoiseModel {
        let m = ObservationMeasure::regular_grid(0.0, 1.0, n).unwrap();
        NoiseModel::grid_white(sigma_bar, &m).unwrap()
    }

    #[test]
    fn risk_bound_spot_value() {
        // σ̄ = 1, Δ = 1/256 and Ξ = 0.02: 655 coefficients of variance 1/256
        // plus one remainder coefficient
        let mut xi = vec![1.0 / 256.0; 655];
        xi.push((0.01 - 655.0 / 65536.0f64).sqrt());
        let nm = NoiseModel::basis_colored(1.0, xi).unwrap();
        let s = nm.summary();
        assert!((s.xi - 0.02).abs() < 1e-15 && s.decay == 1.0 / 256.0);
        let expected = 0.08 + 0.32 + (-2.0f64).exp();
        assert!((risk_bound_t1(1.0, 0.5, &nm).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn risk_bound_at_half_square() {
        let nm = grid_noise(1.0, 256);
        let s = nm.summary();
        for rho in [0.5, 1.0, 2.0] {
            let b = risk_bound_t1(rho, threshold_t1(rho), &nm).unwrap();
            let closed = 20.0 * s.xi / rho.powi(4) + (-rho * rho / (128.0 * s.decay)).exp();
            assert!((b - closed.min(2.0)).abs() < 1e-12 * closed.max(1.0));
        }
        assert!(risk_bound_t1(1.0, 1.0, &nm).is_err());
        assert!(risk_bound_t1(1.0, 0.0, &nm).is_err());
        let far = risk_bound_t1(1e4, 0.5, &nm).unwrap();
        assert!((far - s.xi / 0.25).abs() < 1e-9);
    }

    #[test]
    fn risk_bound_decreases_in_rho() {
        let nm = grid_noise(1.0, 256);
        let t = 0.3;
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let rho = (2.0f64 * t).sqrt() + 0.02 * k as f64;
            let b = risk_bound_t1(rho, t, &nm).unwrap();
            assert!(b <= prev + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn rho1_terms() {
        let nm = grid_noise(1.0, 256);
        let s = nm.summary();
        let r = rho1(0.5, &nm).unwrap();
        assert!((r - (80.0 * s.xi).powf(0.25)).abs() < 1e-12);
        // the proof's display: σ̄√(128 Δ log(2/α)) equals 8σ̄√(2Δ log(2/α))
        let quiet = grid_noise(1.0, 4);
        let alpha = 0.05;
        let proof_form = (128.0 * quiet.decay() * (2.0f64 / alpha).ln()).sqrt();
        let dense = (40.0 * quiet.summary().xi / alpha).powf(0.25);
        assert!((rho1(alpha, &quiet).unwrap() - proof_form.max(dense)).abs() < 1e-12);
        assert!(rho1(0.0, &nm).is_err() && rho1(1.0, &nm).is_err());
        assert!(rho1(1e-6, &nm).unwrap() > rho1(1e-2, &nm).unwrap());
    }

    #[test]
    fn rho2_inequalities() {
        let nm = grid_noise(1.0, 256);
        let geom = Geometry {
            window_length: 5.0,
            sigma: 0.6,
        };
        let c = TestConstants::default();
        let kappa = 0.3;
        for (s, s0) in [(1, 1), (3, 1), (1, 4), (0, 0), (5, 5)] {
            let p = rho2(0.1, s, s0, kappa, &nm, geom, &c).unwrap();
            assert!(p.t > 0.0);
            assert!(c.c0 * (s0 as f64).sqrt() * kappa <= p.t.sqrt() + 1e-15);
            assert!(p.t.sqrt() < p.rho);
            assert!(p.t.sqrt() + c.c0 * (s as f64).sqrt() * kappa <= p.rho + 1e-15);
            if s == s0 {
                let sym = 2.0 * c.c0 * (s.max(1) as f64).sqrt() * kappa;
                assert!((p.rho - sym).abs() < 1e-12);
            }
            assert!(p.warning.is_none());
        }
        let narrow = Geometry {
            window_length: 0.5,
            sigma: 0.6,
        };
        assert!(rho2(0.1, 1, 1, kappa, &nm, narrow, &c)
            .unwrap()
            .warning
            .is_some());
    }

    #[test]
    fn rho_min_regimes() {
        let geom = Geometry {
            window_length: 1.0,
            sigma: 1.0 / 128.0,
        };
        let c = TestConstants {
            c0: 1.0,
            ..TestConstants::default()
        };
        let nm = grid_noise(1.0, 128);
        let sparse = rho_min(0.1, 1, 0, &nm, geom, &c).unwrap();
        assert_eq!(sparse.binding, Regime::Sparse);
        let dense = rho_min(0.1, 128, 0, &nm, geom, &c).unwrap();
        assert_eq!(dense.binding, Regime::Dense);
        assert_eq!(dense.value, dense.dense_term.min(dense.sparse_term));
        let half = rho_min(0.05, 1, 0, &nm, geom, &c).unwrap();
        assert!(half.value > sparse.value);
    }

    #[test]
    fn rho3_formula() {
        let c = TestConstants {
            c3: 1.5,
            c_near: 0.2,
            c_far: 0.4,
            ..TestConstants::default()
        };
        let r = rho3(2, 3, 0.1, &c).unwrap();
        assert!((r.t - 2.0 * 1.5 * 3.0 * 0.1).abs() < 1e-15);
        assert!((r.rho - (2.0 * 1.5 / 0.2 * 2.0 * 0.1 + 2.0 / 0.2 * r.t)).abs() < 1e-12);
    }

    #[test]
    fn outcome_rules() {
        let o = TestOutcome::new(TestKind::T1, -0.6, 0.5);
        assert!(o.reject);
        assert!(!TestOutcome::new(TestKind::T2, 0.5, 0.5).reject);
        let never = TestOutcome::new(TestKind::T1, 0.0, f64::INFINITY);
        let m = TestOutcome::combine(vec![never.clone(), o.clone()]);
        assert_eq!(m.reject, o.reject);
        let m = TestOutcome::combine(vec![never, TestOutcome::new(TestKind::T2, 0.1, 0.5)]);
        assert!(!m.reject);
        assert!("max".parse::<TestKind>().unwrap() == TestKind::Max);
        assert!("T4".parse::<TestKind>().is_err());
    }

    #[test]
    fn noiseless_statistics() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let quiet = NoiseModel::grid_white(0.0, d.measure()).unwrap();
        let null_m = Mixture::new(vec![3.0, -2.0], vec![-1.5, 1.2]).unwrap();
        let null = NullSpec::mixture(null_m.clone());
        let y = synthesize(&null_m, &d).unwrap();
        assert!(stat_t1(&y, &null, &d, &quiet).unwrap().abs() < 1e-24);
        let alt = Mixture::new(vec![3.0, -2.0, 1.0], vec![-1.5, 1.2, 0.0]).unwrap();
        let ya = synthesize(&alt, &d).unwrap();
        let mut diff = ya.clone();
        axpy(-1.0, &y, &mut diff);
        let r2 = d.measure().norm_sq(&diff).unwrap();
        assert!((stat_t1(&ya, &null, &d, &quiet).unwrap() - r2).abs() < 1e-12);
        let white = NoiseModel::grid_white(1.0, d.measure()).unwrap();
        let e = white.summary().expected_sq_norm;
        assert!((stat_t1(&y, &null, &d, &white).unwrap() + e).abs() < 1e-12);

        let solver = Solver::new(&d, SolverConfig::with_kappa(1e-6)).unwrap();
        let (t2, fit) = stat_t2(&ya, &null, &solver).unwrap();
        assert_eq!(fit.mixture.s(), 3);
        assert!((t2 - r2).abs() < 1e-4 * r2, "{t2} vs {r2}");
        let det = NullSpec::detection();
        let zero = d.measure().zeros();
        assert_eq!(stat_t2(&zero, &det, &solver).unwrap().0, 0.0);
    }

    #[test]
    fn support_statistic_and_gap() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let null = NullSpec::support(vec![-1.8, 0.1, 1.9], vec![1.0, -1.0, 1.0]).unwrap();
        let cert = null.certificate(&d).unwrap();
        let inside = Mixture::new(vec![2.0, 0.5], vec![-1.8, 1.9]).unwrap();
        assert!(certificate_gap(&inside, &cert, &d).unwrap().abs() < 1e-8);
        let solver = Solver::new(&d, SolverConfig::with_kappa(1e-6)).unwrap();
        let y = synthesize(&inside, &d).unwrap();
        let (t3, _) = stat_t3(&y, &cert, &solver).unwrap();
        assert!(t3.abs() < 1e-4, "{t3}");
        let zero = d.measure().zeros();
        assert!(stat_t3(&zero, &cert, &solver).unwrap().0.abs() < 1e-15);
        let wrong = Mixture::new(vec![1.0], vec![0.1]).unwrap();
        assert!((certificate_gap(&wrong, &cert, &d).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn discrepancy_terms() {
        let d = Dictionary::gaussian_schedule(256, 0.5).unwrap();
        let acc = d.metric().unwrap();
        let null = NullSpec::support(vec![-1.8, 1.9], vec![1.0, -1.0]).unwrap();
        let on = Mixture::new(vec![2.0, -3.0], vec![-1.8, 1.9]).unwrap();
        assert!(discrepancy(&on, &null, &acc, 0.4).unwrap() < 1e-20);
        let near = Mixture::new(vec![1.5], vec![-1.75]).unwrap();
        let dist = acc.distance(-1.75, -1.8).unwrap();
        assert!(dist < 0.4);
        let got = discrepancy(&near, &null, &acc, 0.4).unwrap();
        assert!((got - 1.5 * dist * dist).abs() < 1e-14);
        let far = Mixture::new(vec![0.7], vec![0.0]).unwrap();
        assert!((discrepancy(&far, &null, &acc, 0.4).unwrap() - 0.7).abs() < 1e-15);
        let flipped = Mixture::new(vec![-0.7], vec![-1.75]).unwrap();
        assert!((discrepancy(&flipped, &null, &acc, 0.4).unwrap() - 0.7).abs() < 1e-15);
        assert!(discrepancy(&on, &null, &acc, 100.0).is_err());
    }
}
