//! Monte Carlo experiments: empirical risk curves, the detection sweep and
//! calibration of the error constants, with CSV and manifest output.
//!
//! Replicate `i` of an experiment seeded with `seed` always draws the same
//! noise, whatever the thread count or execution order. Null draws use
//! stream `i`, alternative draws use stream `ALT_STREAM + i`, and the same
//! streams are reused at every separation (common random numbers).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::certificate::verify_certificate;
use crate::dictionary::{Dictionary, Domain};
use crate::error::{Error, Result};
use crate::hypotest::{
    discrepancy, rho1, rho2, rho_min, risk_bound_t1, stat_t1, threshold_t1, Geometry, NullSpec,
    Regime, TestConstants, TestKind,
};
use crate::measure::axpy;
use crate::noise::NoiseModel;
use crate::signal::{gram_extreme_eigenvalues, observe, synthesize, Mixture};
use crate::solver::{default_kappa, FitResult, Solver, SolverConfig};

const ALT_STREAM: u64 = 1 << 32;

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum DictionarySpec {
    /// Gaussian spikes under the log schedule.
    GaussianSchedule { resolution: usize, shrink: f64 },
    Gaussian {
        sigma: f64,
        half_width: f64,
        resolution: usize,
        shrink: f64,
    },
    /// Dirichlet features in the Fourier basis.
    LowPass { bandwidth: usize },
    /// Dirichlet features on a torus grid of `resolution` points.
    LowPassGrid { bandwidth: usize, resolution: usize },
    /// Torus grid with `T` points and the largest odd bandwidth `≤ T`.
    Detection { resolution: usize },
}

impl DictionarySpec {
    pub fn build(&self) -> Result<Dictionary> {
        match *self {
            DictionarySpec::GaussianSchedule { resolution, shrink } => {
                Dictionary::gaussian_schedule(resolution, shrink)
            }
            DictionarySpec::Gaussian {
                sigma,
                half_width,
                resolution,
                shrink,
            } => Dictionary::gaussian(sigma, half_width, resolution, shrink),
            DictionarySpec::LowPass { bandwidth } => Dictionary::dirichlet_basis(bandwidth),
            DictionarySpec::LowPassGrid {
                bandwidth,
                resolution,
            } => Dictionary::dirichlet_grid(bandwidth, resolution),
            DictionarySpec::Detection { resolution } => {
                Dictionary::dirichlet_grid(detection_bandwidth(resolution), resolution)
            }
        }
    }

    /// Resolution `T`, the default `τ` of the tuning rule.
    pub fn resolution(&self) -> usize {
        match *self {
            DictionarySpec::GaussianSchedule { resolution, .. }
            | DictionarySpec::Gaussian { resolution, .. }
            | DictionarySpec::LowPassGrid { resolution, .. }
            | DictionarySpec::Detection { resolution } => resolution,
            DictionarySpec::LowPass { bandwidth } => bandwidth,
        }
    }
}

/// Largest odd bandwidth not exceeding `resolution`.
pub fn detection_bandwidth(resolution: usize) -> usize {
    if resolution % 2 == 1 {
        resolution
    } else {
        resolution.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Grid-white on grid measures, truncated basis-white on basis measures.
    White {
        sigma_bar: f64,
    },
    Colored {
        sigma_bar: f64,
        xi: Vec<f64>,
    },
}

impl NoiseSpec {
    pub fn build(&self, dict: &Dictionary) -> Result<NoiseModel> {
        let nm = match self {
            NoiseSpec::White { sigma_bar } => NoiseModel::white_for(*sigma_bar, dict.measure())?,
            NoiseSpec::Colored { sigma_bar, xi } => {
                NoiseModel::basis_colored(*sigma_bar, xi.clone())?
            }
        };
        nm.check_compatible(dict.measure())?;
        Ok(nm)
    }
}

/// Rule producing an alternative at target separation `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Alternative {
    /// `null + c·direction` with `c` chosen so that `‖alt - null‖ = ρ`.
    Amplitude { direction: Mixture },
    /// The first null representative plus one spike of amplitude `sign·ρ` at `theta`,
    /// placed in the far region so that the discrepancy equals `ρ`.
    OffSupport { theta: f64, sign: f64 },
}

/// Adds `b` into `a`, summing coefficients at coinciding locations.
pub fn merge(a: &Mixture, b: &Mixture) -> Result<Mixture> {
    let mut beta = a.beta().to_vec();
    let mut theta = a.theta().to_vec();
    for (&bb, &tb) in b.beta().iter().zip(b.theta()) {
        match theta.iter().position(|&t| t == tb) {
            Some(k) => beta[k] += bb,
            None => {
                beta.push(bb);
                theta.push(tb);
            }
        }
    }
    let (beta, theta): (Vec<f64>, Vec<f64>) = beta
        .into_iter()
        .zip(theta)
        .filter(|(b, _)| *b != 0.0)
        .unzip();
    Mixture::new(beta, theta)
}

/// Everything that defines one risk experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub dictionary: DictionarySpec,
    pub noise: NoiseSpec,
    pub null: NullSpec,
    /// Parameters drawn under the null, cycled by replicate index; empty means the null mixture.
    pub h0: Vec<Mixture>,
    pub alternative: Alternative,
    pub rho_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub tests: Vec<TestKind>,
    pub alpha: f64,
    /// Defaults to the tuning rule with `𝒞₁` and `τ`.
    pub kappa: Option<f64>,
    /// Defaults to `T`.
    pub tau: Option<f64>,
    pub constants: TestConstants,
    /// Residual-norm threshold `ρ²/2` at each separation instead of the level rule.
    pub t1_half_square: bool,
    /// Near-region radius of the support test.
    pub radius: f64,
    pub max_features: Option<usize>,
}

impl Scenario {
    /// A residual-norm / plug-in scenario with defaults for the rest.
    pub fn new(
        id: &str,
        dictionary: DictionarySpec,
        noise: NoiseSpec,
        null: NullSpec,
        alternative: Alternative,
        rho_grid: Vec<f64>,
    ) -> Self {
        Self {
            id: id.to_string(),
            dictionary,
            noise,
            null,
            h0: Vec::new(),
            alternative,
            rho_grid,
            replicates: 200,
            seed: 0,
            tests: vec![TestKind::T1],
            alpha: 0.1,
            kappa: None,
            tau: None,
            constants: TestConstants::default(),
            t1_half_square: true,
            radius: 0.4,
            max_features: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.rho_grid.is_empty()
            || self.rho_grid.iter().any(|r| !(*r > 0.0) || !r.is_finite())
            || self.rho_grid.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Config(
                "rho grid must be positive and strictly increasing".into(),
            ));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("at least one test must be selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        self.constants.validate()
    }

    /// SHA-256 of the scenario's canonical description.
    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(format!("{self:?}").as_bytes()))
    }

    fn h0_list(&self) -> Vec<Mixture> {
        if self.h0.is_empty() {
            vec![self.null.mixture.clone()]
        } else {
            self.h0.clone()
        }
    }
}

/// SHA-256 of a scenario file together with its overrides.
pub fn hex_digest(file: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(file);
    for o in overrides {
        h.update(b"\n");
        h.update(o.as_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Dictionary, noise and tuning derived from a scenario.
pub struct Setup {
    pub dict: Dictionary,
    pub noise: NoiseModel,
    pub kappa: f64,
    pub geometry: Geometry,
}

impl Setup {
    pub fn new(
        dictionary: &DictionarySpec,
        noise: &NoiseSpec,
        kappa: Option<f64>,
        tau: Option<f64>,
        c1: f64,
    ) -> Result<Self> {
        let dict = dictionary.build()?;
        let noise = noise.build(&dict)?;
        let kappa = match kappa {
            Some(k) => k,
            None => default_kappa(&noise, tau.unwrap_or(dictionary.resolution() as f64), c1)?,
        };
        let geometry = Geometry::of(&dict);
        Ok(Self {
            dict,
            noise,
            kappa,
            geometry,
        })
    }
}

/// Generates the alternative at separation `rho` and checks that it hits
/// the target within 1%.
pub fn generate_alternative(sc: &Scenario, setup: &Setup, rho: f64) -> Result<Mixture> {
    let dict = &setup.dict;
    let alt = match &sc.alternative {
        Alternative::Amplitude { direction } => {
            let norm = dict.measure().norm(&synthesize(direction, dict)?)?;
            if !(norm > 0.0) {
                return Err(Error::Config("alternative direction has zero norm".into()));
            }
            merge(&sc.null.mixture, &direction.scaled(rho / norm)?)?
        }
        Alternative::OffSupport { theta, sign } => {
            let base = sc.h0_list().swap_remove(0);
            let spike = Mixture::new(vec![sign.signum() * rho], vec![*theta])?;
            merge(&base, &spike)?
        }
    };
    let achieved = match &sc.alternative {
        Alternative::Amplitude { .. } => {
            let mut d = synthesize(&alt, dict)?;
            axpy(-1.0, &sc.null.signal(dict)?, &mut d);
            dict.measure().norm(&d)?
        }
        Alternative::OffSupport { .. } => discrepancy(&alt, &sc.null, &dict.metric()?, sc.radius)?,
    };
    if (achieved - rho).abs() > 0.01 * rho {
        return Err(Error::Config(format!(
            "alternative reaches {achieved} instead of the target {rho}"
        )));
    }
    Ok(alt)
}

/// Statistics of one replicate; `None` where the fit failed.
#[derive(Debug, Clone, Copy, Default)]
struct ReplicateStats {
    t1: Option<f64>,
    t2: Option<f64>,
    t3: Option<f64>,
    failed: bool,
}

struct Runner<'a> {
    sc: &'a Scenario,
    setup: &'a Setup,
    solver: Option<Solver<'a>>,
    p0: Option<crate::certificate::Certificate>,
    null_signal: Vec<f64>,
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario, setup: &'a Setup) -> Result<Self> {
        let needs_fit = sc.tests.iter().any(|t| *t != TestKind::T1);
        let solver = if needs_fit {
            let s_max = sc.h0_list().iter().map(Mixture::s).max().unwrap_or(0)
                + match &sc.alternative {
                    Alternative::Amplitude { direction } => direction.s(),
                    Alternative::OffSupport { .. } => 1,
                };
            let mut cfg = SolverConfig::for_sparsity(setup.kappa, s_max.max(sc.null.s0()).max(1));
            if let Some(k) = sc.max_features {
                cfg.max_features = k;
            }
            Some(Solver::new(&setup.dict, cfg)?)
        } else {
            None
        };
        let p0 = if sc.tests.contains(&TestKind::T3) {
            Some(sc.null.certificate(&setup.dict)?)
        } else {
            None
        };
        Ok(Self {
            sc,
            setup,
            solver,
            p0,
            null_signal: sc.null.signal(&setup.dict)?,
        })
    }

    fn stats(&self, m: &Mixture, stream: u64) -> Result<ReplicateStats> {
        let dict = &self.setup.dict;
        let y = observe(m, dict, &self.setup.noise, self.sc.seed, stream)?;
        let mut out = ReplicateStats {
            t1: Some(stat_t1(&y, &self.sc.null, dict, &self.setup.noise)?),
            ..Default::default()
        };
        if let Some(solver) = &self.solver {
            match solver.fit(&y) {
                Ok(fit) => {
                    out.failed = !fit.converged;
                    out.t2 = Some(self.plug_in(&fit)?);
                    if let Some(p0) = &self.p0 {
                        out.t3 = Some(fit.mixture.l1_norm() - dict.measure().inner(&y, &p0.rep)?);
                    }
                }
                Err(_) => out.failed = true,
            }
        }
        Ok(out)
    }

    fn plug_in(&self, fit: &FitResult) -> Result<f64> {
        let mut d = synthesize(&fit.mixture, &self.setup.dict)?;
        axpy(-1.0, &self.null_signal, &mut d);
        self.setup.dict.measure().norm_sq(&d)
    }
}

/// Thresholds at separation `rho` for `(T1, T2, T3)`; sub-tests of the
/// aggregated test use level `α/2`.
fn thresholds_at(sc: &Scenario, setup: &Setup, rho: f64, aggregate: bool) -> Result<[f64; 3]> {
    let a = if aggregate { sc.alpha / 2.0 } else { sc.alpha };
    let t1 = if sc.t1_half_square {
        threshold_t1(rho)
    } else {
        threshold_t1(rho1(a, &setup.noise)?)
    };
    let s0 = sc.null.s0();
    let t2 = rho2(
        a,
        s0,
        s0,
        setup.kappa,
        &setup.noise,
        setup.geometry,
        &sc.constants,
    )?
    .t;
    let t3 = 2.0 * sc.constants.c3 * s0 as f64 * setup.kappa;
    Ok([t1, t2, t3])
}

/// Empirical error rates of one test at one separation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub rho: f64,
    pub test: TestKind,
    pub threshold: f64,
    pub type1: f64,
    pub type2: f64,
    pub se_type1: f64,
    pub se_type2: f64,
    /// Closed-form risk bound where one exists (residual-norm test).
    pub bound: Option<f64>,
    pub n_null: usize,
    pub n_alt: usize,
}

impl RiskRow {
    pub fn risk(&self) -> f64 {
        self.type1 + self.type2
    }

    /// Standard error of the total risk.
    pub fn se(&self) -> f64 {
        (self.se_type1.powi(2) + self.se_type2.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub scenario_id: String,
    pub rows: Vec<RiskRow>,
    pub failed_replicates: usize,
    pub total_replicates: usize,
    pub kappa: f64,
}

pub const RISK_HEADER: &str =
    "scenario,rho,test,threshold,type1,type2,risk,se_type1,se_type2,bound,n_null,n_alt";

impl RiskCurve {
    pub fn failure_rate(&self) -> f64 {
        if self.total_replicates == 0 {
            0.0
        } else {
            self.failed_replicates as f64 / self.total_replicates as f64
        }
    }

    /// False when more than 1% of the replicates failed.
    pub fn valid(&self) -> bool {
        self.failure_rate() <= MAX_FAILURE_RATE
    }

    pub fn rows_for(&self, test: TestKind) -> impl Iterator<Item = &RiskRow> {
        self.rows.iter().filter(move |r| r.test == test)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{RISK_HEADER}\n");
        for r in &self.rows {
            let bound = r.bound.map_or(String::from("nan"), |b| format!("{b:.16e}"));
            let _ = writeln!(
                out,
                "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                self.scenario_id,
                r.rho,
                r.test.name(),
                r.threshold,
                r.type1,
                r.type2,
                r.risk(),
                r.se_type1,
                r.se_type2,
                bound,
                r.n_null,
                r.n_alt
            );
        }
        out
    }
}

/// `√(p(1-p)/N)`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

fn statistic(s: &ReplicateStats, test: TestKind) -> Option<f64> {
    match test {
        TestKind::T1 => s.t1,
        TestKind::T2 => s.t2,
        TestKind::T3 => s.t3,
        TestKind::Max => None,
    }
}

fn rejects(s: &ReplicateStats, test: TestKind, t: &[f64; 3]) -> Option<bool> {
    match test {
        TestKind::Max => {
            let a = s.t1?.abs() > t[0];
            let b = s.t2?.abs() > t[1];
            Some(a || b)
        }
        TestKind::T1 => Some(statistic(s, test)?.abs() > t[0]),
        TestKind::T2 => Some(statistic(s, test)?.abs() > t[1]),
        TestKind::T3 => Some(statistic(s, test)?.abs() > t[2]),
    }
}

fn rate(stats: &[ReplicateStats], test: TestKind, t: &[f64; 3], reject: bool) -> (f64, usize) {
    let mut hits = 0usize;
    let mut n = 0usize;
    for s in stats {
        if let Some(r) = rejects(s, test, t) {
            n += 1;
            if r == reject {
                hits += 1;
            }
        }
    }
    (
        if n == 0 {
            f64::NAN
        } else {
            hits as f64 / n as f64
        },
        n,
    )
}

/// Empirical type I and type II errors at every separation of the grid.
pub fn run_risk_curve(sc: &Scenario) -> Result<RiskCurve> {
    sc.validate()?;
    let setup = Setup::new(&sc.dictionary, &sc.noise, sc.kappa, sc.tau, sc.constants.c1)?;
    run_risk_curve_with(sc, &setup)
}

/// [`run_risk_curve`] on a prepared setup.
pub fn run_risk_curve_with(sc: &Scenario, setup: &Setup) -> Result<RiskCurve> {
    sc.validate()?;
    let runner = Runner::new(sc, setup)?;
    let h0 = sc.h0_list();
    let null_stats = (0..sc.replicates)
        .into_par_iter()
        .map(|i| runner.stats(&h0[i % h0.len()], i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut failed = null_stats.iter().filter(|s| s.failed).count();
    let mut total = sc.replicates;
    let mut rows = Vec::new();
    for &rho in &sc.rho_grid {
        let alt = generate_alternative(sc, setup, rho)?;
        let alt_stats = (0..sc.replicates)
            .into_par_iter()
            .map(|i| runner.stats(&alt, ALT_STREAM + i as u64))
            .collect::<Result<Vec<_>>>()?;
        failed += alt_stats.iter().filter(|s| s.failed).count();
        total += sc.replicates;
        for &test in &sc.tests {
            let t = thresholds_at(sc, setup, rho, test == TestKind::Max)?;
            let (type1, n0) = rate(&null_stats, test, &t, true);
            let (type2, n1) = rate(&alt_stats, test, &t, false);
            let threshold = match test {
                TestKind::T1 => t[0],
                TestKind::T2 => t[1],
                TestKind::T3 => t[2],
                TestKind::Max => 1.0,
            };
            let bound = (test == TestKind::T1 && rho * rho > t[0])
                .then(|| risk_bound_t1(rho, t[0], &setup.noise))
                .transpose()?;
            rows.push(RiskRow {
                rho,
                test,
                threshold,
                type1,
                type2,
                se_type1: binomial_se(type1, n0),
                se_type2: binomial_se(type2, n1),
                bound,
                n_null: n0,
                n_alt: n1,
            });
        }
    }
    Ok(RiskCurve {
        scenario_id: sc.id.clone(),
        rows,
        failed_replicates: failed,
        total_replicates: total,
        kappa: setup.kappa,
    })
}

/// Per-replicate decisions on null draws, for the `test` command.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub which: TestKind,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub seed: u64,
    pub replicate: u64,
}

pub const OUTCOME_HEADER: &str = "scenario,replicate,seed,which,statistic,threshold,reject";

pub fn outcomes_to_csv(scenario_id: &str, rows: &[OutcomeRow]) -> String {
    let mut out = format!("{OUTCOME_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{scenario_id},{},{},{},{:.16e},{:.16e},{}",
            r.replicate,
            r.seed,
            r.which.name(),
            r.statistic,
            r.threshold,
            r.reject
        );
    }
    out
}

/// Decisions of every selected test on the first `replicates` draws of
/// `data` (null representative or alternative).
pub fn run_outcomes(sc: &Scenario, data: &Mixture, alt_streams: bool) -> Result<Vec<OutcomeRow>> {
    sc.validate()?;
    let setup = Setup::new(&sc.dictionary, &sc.noise, sc.kappa, sc.tau, sc.constants.c1)?;
    let runner = Runner::new(sc, &setup)?;
    let base = if alt_streams { ALT_STREAM } else { 0 };
    let rho = sc.rho_grid[0];
    let stats = (0..sc.replicates)
        .into_par_iter()
        .map(|i| runner.stats(data, base + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, s) in stats.iter().enumerate() {
        for &test in &sc.tests {
            let t = thresholds_at(sc, &setup, rho, test == TestKind::Max)?;
            let (stat, thr) = match test {
                TestKind::Max => {
                    let (Some(a), Some(b)) = (s.t1, s.t2) else {
                        continue;
                    };
                    ((a.abs() / t[0]).max(b.abs() / t[1]), 1.0)
                }
                TestKind::T1 => (s.t1.unwrap_or(f64::NAN), t[0]),
                TestKind::T2 => (s.t2.unwrap_or(f64::NAN), t[1]),
                TestKind::T3 => (s.t3.unwrap_or(f64::NAN), t[2]),
            };
            rows.push(OutcomeRow {
                which: test,
                statistic: stat,
                threshold: thr,
                reject: stat.abs() > thr,
                seed: sc.seed,
                replicate: base + i as u64,
            });
        }
    }
    Ok(rows)
}

/// `s` components with alternating signs, evenly spaced over the window
/// (offset by a quarter spacing on the torus).
pub fn spread_mixture(dict: &Dictionary, s: usize, amplitude: f64) -> Result<Mixture> {
    let w = dict.window();
    let beta = (0..s)
        .map(|k| if k % 2 == 0 { amplitude } else { -amplitude })
        .collect();
    let theta = (0..s)
        .map(|k| match w.domain {
            Domain::Torus => (k as f64 + 0.25) / s as f64,
            Domain::RealLine => w.lo + w.length() * (k as f64 + 0.5) / s as f64,
        })
        .collect();
    Mixture::new(beta, theta)
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Calibration of `𝒞₀` and `𝒞₃` from fits of spread mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub dictionary: DictionarySpec,
    pub noise: NoiseSpec,
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
    pub c1: f64,
    pub s_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Amplitude of the calibration spikes in units of `κ`.
    pub amplitude: f64,
    pub quantile: f64,
}

impl CalibrationSpec {
    pub fn new(dictionary: DictionarySpec, noise: NoiseSpec) -> Self {
        Self {
            dictionary,
            noise,
            kappa: None,
            tau: None,
            c1: 2.0,
            s_values: vec![1, 2, 4],
            replicates: 400,
            seed: 0,
            amplitude: 5.0,
            quantile: 0.99,
        }
    }

    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

/// Normalized errors at one sparsity level.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub s: usize,
    /// `‖β̂Φ - β⋆Φ‖/(√s κ)` at the calibration quantile and at 0.9.
    pub c0: f64,
    pub c0_p90: f64,
    /// `|‖β̂‖₁ - ‖β⋆‖₁|/(s κ)` at the calibration quantile and at 0.9.
    pub c3: f64,
    pub c3_p90: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub c0: f64,
    pub c3: f64,
    pub kappa: f64,
    pub entries: Vec<CalibrationEntry>,
    pub replicates: usize,
    pub seed: u64,
    pub scenario_hash: String,
}

impl CalibrationRecord {
    pub fn failure_rate(&self) -> f64 {
        let f: usize = self.entries.iter().map(|e| e.failures).sum();
        f as f64 / (self.replicates * self.entries.len()).max(1) as f64
    }

    /// Copies the calibrated constants into `consts`.
    pub fn apply(&self, consts: &TestConstants) -> TestConstants {
        TestConstants {
            c0: self.c0,
            c3: self.c3,
            ..*consts
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,c0,c0_p90,c3,c3_p90,failures\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                e.s, e.c0, e.c0_p90, e.c3, e.c3_p90, e.failures
            );
        }
        let _ = writeln!(out, "all,{:.16e},nan,{:.16e},nan,0", self.c0, self.c3);
        out
    }
}

/// Runs `replicates` fits per sparsity level and records the normalized
/// prediction and ℓ₁ errors; the constants are the maxima over levels of
/// the per-level quantiles.
pub fn calibrate_constants(spec: &CalibrationSpec) -> Result<CalibrationRecord> {
    if spec.replicates == 0 || spec.s_values.is_empty() || spec.s_values.contains(&0) {
        return Err(Error::Config(
            "calibration needs replicates >= 1 and s values >= 1".into(),
        ));
    }
    let setup = Setup::new(&spec.dictionary, &spec.noise, spec.kappa, spec.tau, spec.c1)?;
    let kappa = setup.kappa;
    if !(kappa > 0.0) {
        return Err(Error::Config(
            "calibration needs a positive tuning parameter".into(),
        ));
    }
    let dict = &setup.dict;
    let mut entries = Vec::new();
    for (level, &s) in spec.s_values.iter().enumerate() {
        let truth = spread_mixture(dict, s, spec.amplitude * kappa)?;
        let sig = synthesize(&truth, dict)?;
        let solver = Solver::new(dict, SolverConfig::for_sparsity(kappa, s))?;
        let base = (level as u64) << 40;
        let errs = (0..spec.replicates)
            .into_par_iter()
            .map(|i| -> Result<Option<(f64, f64)>> {
                let y = observe(&truth, dict, &setup.noise, spec.seed, base + i as u64)?;
                let fit = match solver.fit(&y) {
                    Ok(f) if f.converged => f,
                    _ => return Ok(None),
                };
                let mut d = synthesize(&fit.mixture, dict)?;
                axpy(-1.0, &sig, &mut d);
                let pred = dict.measure().norm(&d)? / ((s as f64).sqrt() * kappa);
                let l1 = (fit.mixture.l1_norm() - truth.l1_norm()).abs() / (s as f64 * kappa);
                Ok(Some((pred, l1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let ok: Vec<(f64, f64)> = errs.iter().flatten().copied().collect();
        let pred: Vec<f64> = ok.iter().map(|e| e.0).collect();
        let l1: Vec<f64> = ok.iter().map(|e| e.1).collect();
        entries.push(CalibrationEntry {
            s,
            c0: quantile(&pred, spec.quantile),
            c0_p90: quantile(&pred, 0.9),
            c3: quantile(&l1, spec.quantile),
            c3_p90: quantile(&l1, 0.9),
            failures: spec.replicates - ok.len(),
        });
    }
    let c0 = entries.iter().map(|e| e.c0).fold(0.0, f64::max);
    let c3 = entries.iter().map(|e| e.c3).fold(0.0, f64::max);
    Ok(CalibrationRecord {
        c0,
        c3,
        kappa,
        entries,
        replicates: spec.replicates,
        seed: spec.seed,
        scenario_hash: spec.fingerprint(),
    })
}

/// Certificate constants `(C_N, C_F)` of the support null, measured on a `σ_T/20` scan.
pub fn certificate_constants(
    null: &NullSpec,
    dict: &Dictionary,
    radius: f64,
) -> Result<(f64, f64)> {
    let cert = null.certificate(dict)?;
    let rep = verify_certificate(&cert, dict, &dict.metric()?, radius, dict.scale() / 20.0)?;
    Ok((rep.near_constant, rep.far_constant))
}

/// Detection sweep in the torus-grid setting with `σ̄ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub s_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub alpha: f64,
    /// Separations probed, increasing.
    pub rho_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub constants: TestConstants,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub s: usize,
    pub resolution: usize,
    /// Smallest probed separation with empirical risk at most `α`.
    pub empirical_rho: Option<f64>,
    pub rho_min: f64,
    pub dense_term: f64,
    pub sparse_term: f64,
    pub binding: Regime,
    /// Extremes of `‖βΦ_T(ϑ)‖/‖β‖₂` over the generated alternative.
    pub norm_ratio: (f64, f64),
    pub kappa: f64,
}

pub const SWEEP_HEADER: &str =
    "s,T,empirical_rho,rho_min,dense_term,sparse_term,binding,ratio_min,ratio_max,kappa";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let emp = r
            .empirical_rho
            .map_or(String::from("nan"), |v| format!("{v:.16e}"));
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.s,
            r.resolution,
            emp,
            r.rho_min,
            r.dense_term,
            r.sparse_term,
            match r.binding {
                Regime::Dense => "dense",
                Regime::Sparse => "sparse",
            },
            r.norm_ratio.0,
            r.norm_ratio.1,
            r.kappa
        );
    }
    out
}

/// `κ = 𝒞₁ σ̄ √(Δ_T log(c|Θ_T|/((α/2) σ_T)))`, the tuning behind the aggregated test.
pub fn detection_kappa(
    dict: &Dictionary,
    noise: &NoiseModel,
    alpha: f64,
    consts: &TestConstants,
) -> Result<f64> {
    let g = Geometry::of(dict);
    default_kappa(noise, consts.c_log * g.ratio() / (alpha / 2.0), consts.c1)
}

/// For each `(s, T)`, the smallest probed separation at which the aggregated
/// test has empirical risk at most `α`, next to both terms of `ρ^min(α)`.
pub fn run_detection_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &t in &spec.t_values {
        for &s in &spec.s_values {
            let dspec = DictionarySpec::Detection { resolution: t };
            let nspec = NoiseSpec::White { sigma_bar: 1.0 };
            let dict = dspec.build()?;
            let noise = nspec.build(&dict)?;
            let kappa = detection_kappa(&dict, &noise, spec.alpha, &spec.constants)?;
            let direction = spread_mixture(&dict, s, 1.0)?;
            let (lo, hi) = gram_extreme_eigenvalues(&direction, &dict)?;
            let mut sc = Scenario::new(
                &format!("detect-s{s}-T{t}"),
                dspec.clone(),
                nspec.clone(),
                NullSpec::detection(),
                Alternative::Amplitude { direction },
                spec.rho_grid.clone(),
            );
            sc.replicates = spec.replicates;
            sc.seed = spec.seed;
            sc.tests = vec![TestKind::Max];
            sc.alpha = spec.alpha;
            sc.kappa = Some(kappa);
            sc.constants = spec.constants;
            sc.t1_half_square = false;
            let setup = Setup {
                geometry: Geometry::of(&dict),
                dict,
                noise,
                kappa,
            };
            let curve = run_risk_curve_with(&sc, &setup)?;
            let empirical_rho = curve
                .rows
                .iter()
                .find(|r| r.risk() <= spec.alpha)
                .map(|r| r.rho);
            let rm = rho_min(
                spec.alpha,
                s,
                0,
                &setup.noise,
                setup.geometry,
                &spec.constants,
            )?;
            rows.push(SweepRow {
                s,
                resolution: t,
                empirical_rho,
                rho_min: rm.value,
                dense_term: rm.dense_term,
                sparse_term: rm.sparse_term,
                binding: rm.binding,
                norm_ratio: (lo.max(0.0).sqrt(), hi.sqrt()),
                kappa,
            });
        }
    }
    Ok(rows)
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run manifest: scenario hash, seed, code version and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub scenario_hash: String,
    pub seed: u64,
    pub version: String,
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(scenario_hash: String, seed: u64, outputs: Vec<String>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            scenario_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            outputs,
        }
    }

    pub fn render(&self) -> String {
        let outputs = self
            .outputs
            .iter()
            .map(|o| format!("\"{o}\""))
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "scenario_hash = \"{}\"\nseed = {}\nversion = \"{}\"\ntimestamp = {}\noutputs = [{}]\n",
            self.scenario_hash, self.seed, self.version, self.timestamp, outputs
        )
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.toml");
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

/// Creates `dir` if needed and writes `name` into it.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1_scenario() -> Scenario {
        let dspec = DictionarySpec::GaussianSchedule {
            resolution: 128,
            shrink: 0.5,
        };
        let mut sc = Scenario::new(
            "t1",
            dspec,
            NoiseSpec::White { sigma_bar: 1.0 },
            NullSpec::mixture(Mixture::new(vec![2.0], vec![-1.0]).unwrap()),
            Alternative::Amplitude {
                direction: Mixture::new(vec![1.0], vec![1.0]).unwrap(),
            },
            vec![1.0, 3.0, 6.0],
        );
        sc.replicates = 300;
        sc.seed = 4;
        sc
    }

    #[test]
    fn amplitude_alternative_hits_target() {
        let sc = t1_scenario();
        let setup = Setup::new(&sc.dictionary, &sc.noise, None, None, 2.0).unwrap();
        for rho in [0.1, 1.0, 7.5] {
            let alt = generate_alternative(&sc, &setup, rho).unwrap();
            let mut d = synthesize(&alt, &setup.dict).unwrap();
            axpy(-1.0, &sc.null.signal(&setup.dict).unwrap(), &mut d);
            let got = setup.dict.measure().norm(&d).unwrap();
            assert!((got - rho).abs() < 1e-10 * rho);
        }
    }

    #[test]
    fn merge_adds_coinciding_components() {
        let a = Mixture::new(vec![1.0, 2.0], vec![0.0, 1.0]).unwrap();
        let b = Mixture::new(vec![-1.0, 0.5], vec![0.0, 2.0]).unwrap();
        let m = merge(&a, &b).unwrap();
        assert_eq!(m.beta(), &[2.0, 0.5]);
        assert_eq!(m.theta(), &[1.0, 2.0]);
    }

    #[test]
    fn risk_curve_is_reproducible_and_sane() {
        let sc = t1_scenario();
        let a = run_risk_curve(&sc).unwrap();
        let b = with_threads(1, || run_risk_curve(&sc)).unwrap().unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.valid());
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.type1) && (0.0..=1.0).contains(&r.type2));
            assert!((r.se_type1 - binomial_se(r.type1, r.n_null)).abs() < 1e-15);
        }
        let last = a.rows.last().unwrap();
        assert!(last.risk() <= 0.05, "{last:?}");
    }

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn noiseless_calibration_is_tiny() {
        let mut spec = CalibrationSpec::new(
            DictionarySpec::GaussianSchedule {
                resolution: 128,
                shrink: 0.5,
            },
            NoiseSpec::White { sigma_bar: 0.0 },
        );
        spec.kappa = Some(0.05);
        spec.replicates = 3;
        let rec = calibrate_constants(&spec).unwrap();
        // a lone unit-norm atom is shrunk by exactly κ
        let e = &rec.entries[0];
        assert!(
            (e.c0 - 1.0).abs() < 1e-6 && (e.c3 - 1.0).abs() < 1e-6,
            "{rec:?}"
        );
        assert!(rec.c0 >= e.c0 && rec.c3 >= e.c3);
        assert_eq!(rec, calibrate_constants(&spec).unwrap());
    }

    #[test]
    fn detection_bandwidth_is_odd() {
        assert_eq!(detection_bandwidth(128), 127);
        assert_eq!(detection_bandwidth(63), 63);
    }

    #[test]
    fn scenario_validation() {
        let mut sc = t1_scenario();
        sc.rho_grid = vec![1.0, 1.0];
        assert!(sc.validate().is_err());
        let mut sc = t1_scenario();
        sc.replicates = 0;
        assert!(sc.validate().is_err());
        assert_eq!(t1_scenario().fingerprint(), t1_scenario().fingerprint());
    }
}
