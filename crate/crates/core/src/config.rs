//! Scenario files.
//!
//! A scenario is a TOML document with the sections `dictionary`, `noise`,
//! `signal`, `null`, `alt`, `test`, `mc`, `detection`, `calibration`,
//! `diagnose` and `constants`, plus top-level `id` and `seed`. Each command
//! reads the sections it needs. Unknown keys are rejected with the key
//! named in the message. Overrides `a.b.c=value` are applied to the parsed
//! document before validation; values are read as TOML and fall back to
//! plain strings.

use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::harness::{
    Alternative, CalibrationSpec, DictionarySpec, NoiseSpec, Scenario, SweepSpec,
};
use crate::hypotest::{NullSpec, TestConstants, TestKind};
use crate::signal::Mixture;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub id: Option<String>,
    pub seed: Option<u64>,
    pub dictionary: Option<DictionarySection>,
    pub noise: Option<NoiseSection>,
    pub signal: Option<MixtureSection>,
    pub null: Option<NullSection>,
    pub alt: Option<AltSection>,
    pub test: Option<TestSection>,
    pub mc: Option<McSection>,
    pub detection: Option<DetectionSection>,
    pub calibration: Option<CalibrationSection>,
    pub diagnose: Option<DiagnoseSection>,
    pub constants: Option<ConstantsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    /// `gaussian` or `dirichlet`.
    pub preset: String,
    /// `T`: grid size for Gaussian spikes, bandwidth for low-pass features.
    pub resolution: usize,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    /// Gaussian width; the log schedule is used when absent.
    pub sigma: Option<f64>,
    pub half_width: Option<f64>,
    /// Low-pass layout: `basis`, `grid` or `detection`.
    pub layout: Option<String>,
    pub grid_points: Option<usize>,
}

fn default_shrink() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// `white` or `colored`.
    #[serde(default = "default_noise_kind")]
    pub kind: String,
    pub sigma_bar: f64,
    /// Colored spectrum preset: `truncated-white` (`ξ_k = 1/n`, `k < n`)
    /// or `harmonic` (`ξ_k = 1/(n(k+1))`).
    pub xi_preset: Option<String>,
    pub xi_len: Option<usize>,
    pub xi: Option<Vec<f64>>,
}

fn default_noise_kind() -> String {
    "white".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
}

impl MixtureSection {
    pub fn mixture(&self) -> Result<Mixture> {
        Mixture::new(self.beta.clone(), self.theta.clone())
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullSection {
    /// `mixture`, `detection` or `support`.
    #[serde(default = "default_null_kind")]
    pub kind: String,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub anchors: Vec<f64>,
    #[serde(default)]
    pub signs: Vec<f64>,
    /// Parameters drawn under the null, cycled over replicates.
    #[serde(default)]
    pub h0: Vec<MixtureSection>,
}

fn default_null_kind() -> String {
    "mixture".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltSection {
    /// `amplitude` or `off-support`.
    pub kind: String,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Spike location and sign of the off-support generator.
    pub location: Option<f64>,
    pub sign: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub which: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
    /// `half-square` (`t = ρ²/2`) or `level` (`t` from `ρ^(1)(α)`).
    pub t1_rule: Option<String>,
    pub radius: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c3: Option<f64>,
    pub c_near: Option<f64>,
    pub c_far: Option<f64>,
    pub c_log: Option<f64>,
}

impl TestSection {
    pub fn constants(&self) -> Result<TestConstants> {
        let d = TestConstants::default();
        let c = TestConstants {
            c0: self.c0.unwrap_or(d.c0),
            c1: self.c1.unwrap_or(d.c1),
            c3: self.c3.unwrap_or(d.c3),
            c_near: self.c_near.unwrap_or(d.c_near),
            c_far: self.c_far.unwrap_or(d.c_far),
            c_log: self.c_log.unwrap_or(d.c_log),
        };
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn tests(&self) -> Result<Vec<TestKind>> {
        match &self.which {
            None => Ok(vec![TestKind::T1]),
            Some(w) => w.iter().map(|s| s.parse()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default)]
    pub rho: Vec<f64>,
    pub replicates: Option<usize>,
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub s: Vec<usize>,
    pub resolution: Vec<usize>,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub s: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub amplitude: Option<f64>,
    pub quantile: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    pub eta: Option<f64>,
    pub r: Option<f64>,
    pub s: Option<usize>,
    #[serde(default)]
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    /// `gaussian` or `sinc`.
    pub preset: String,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub r: f64,
    pub s: Vec<usize>,
}

fn default_eta() -> f64 {
    0.5
}

/// Reads `path`, applies `overrides` and validates the schema.
pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, overrides).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str, overrides: &[String]) -> Result<Config> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

/// Sets `a.b.c=value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override key `{key}`: `{p}` is not a section"))
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing section `{section}`"))
}

impl Config {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| "scenario".into())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn dictionary_spec(&self) -> Result<DictionarySpec> {
        let d = self
            .dictionary
            .as_ref()
            .ok_or_else(|| missing("dictionary"))?;
        let spec = match d.preset.as_str() {
            "gaussian" => match (d.sigma, d.half_width) {
                (None, None) => DictionarySpec::GaussianSchedule {
                    resolution: d.resolution,
                    shrink: d.shrink,
                },
                (Some(sigma), Some(half_width)) => DictionarySpec::Gaussian {
                    sigma,
                    half_width,
                    resolution: d.resolution,
                    shrink: d.shrink,
                },
                _ => {
                    return Err(Error::Config(
                        "dictionary.sigma and dictionary.half_width must be given together".into(),
                    ))
                }
            },
            "dirichlet" => match d.layout.as_deref().unwrap_or("basis") {
                "basis" => DictionarySpec::LowPass {
                    bandwidth: d.resolution,
                },
                "grid" => DictionarySpec::LowPassGrid {
                    bandwidth: d.resolution,
                    resolution: d.grid_points.ok_or_else(|| {
                        Error::Config(
                            "dictionary.grid_points is required for the grid layout".into(),
                        )
                    })?,
                },
                "detection" => DictionarySpec::Detection {
                    resolution: d.resolution,
                },
                other => {
                    return Err(Error::Config(format!(
                        "dictionary.layout must be basis, grid or detection, got `{other}`"
                    )))
                }
            },
            other => {
                return Err(Error::Config(format!(
                    "dictionary.preset must be gaussian or dirichlet, got `{other}`"
                )))
            }
        };
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let n = self.noise.as_ref().ok_or_else(|| missing("noise"))?;
        match n.kind.as_str() {
            "white" => Ok(NoiseSpec::White {
                sigma_bar: n.sigma_bar,
            }),
            "colored" => {
                let xi = match (&n.xi, n.xi_preset.as_deref()) {
                    (Some(xi), None) => xi.clone(),
                    (None, Some(preset)) => {
                        let len = n.xi_len.ok_or_else(|| {
                            Error::Config("noise.xi_len is required with noise.xi_preset".into())
                        })?;
                        xi_preset(preset, len)?
                    }
                    _ => {
                        return Err(Error::Config(
                            "colored noise needs exactly one of noise.xi and noise.xi_preset"
                                .into(),
                        ))
                    }
                };
                Ok(NoiseSpec::Colored {
                    sigma_bar: n.sigma_bar,
                    xi,
                })
            }
            other => Err(Error::Config(format!(
                "noise.kind must be white or colored, got `{other}`"
            ))),
        }
    }

    pub fn signal(&self) -> Result<Mixture> {
        self.signal
            .as_ref()
            .ok_or_else(|| missing("signal"))?
            .mixture()
    }

    pub fn null_spec(&self) -> Result<NullSpec> {
        let n = self.null.as_ref().ok_or_else(|| missing("null"))?;
        let cfg = |e: Error| Error::Config(e.to_string());
        match n.kind.as_str() {
            "mixture" => Ok(NullSpec::mixture(
                Mixture::new(n.beta.clone(), n.theta.clone()).map_err(cfg)?,
            )),
            "detection" => Ok(NullSpec::detection()),
            "support" => NullSpec::support(n.anchors.clone(), n.signs.clone()).map_err(cfg),
            other => Err(Error::Config(format!(
                "null.kind must be mixture, detection or support, got `{other}`"
            ))),
        }
    }

    pub fn h0(&self) -> Result<Vec<Mixture>> {
        self.null.as_ref().map_or(Ok(Vec::new()), |n| {
            n.h0.iter().map(MixtureSection::mixture).collect()
        })
    }

    pub fn alternative(&self) -> Result<Alternative> {
        let a = self.alt.as_ref().ok_or_else(|| missing("alt"))?;
        match a.kind.as_str() {
            "amplitude" => Ok(Alternative::Amplitude {
                direction: Mixture::new(a.beta.clone(), a.theta.clone())
                    .map_err(|e| Error::Config(e.to_string()))?,
            }),
            "off-support" => Ok(Alternative::OffSupport {
                theta: a.location.ok_or_else(|| {
                    Error::Config("alt.location is required for off-support".into())
                })?,
                sign: a.sign.unwrap_or(1.0),
            }),
            other => Err(Error::Config(format!(
                "alt.kind must be amplitude or off-support, got `{other}`"
            ))),
        }
    }

    pub fn test_section(&self) -> TestSection {
        self.test.clone().unwrap_or_default()
    }

    /// The risk-curve scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        self.build_scenario(true)
    }

    /// Scenario for single-draw testing: `alt` and `mc` may be absent, in
    /// which case the residual-norm threshold follows the level rule.
    pub fn test_scenario(&self) -> Result<Scenario> {
        self.build_scenario(false)
    }

    fn build_scenario(&self, full: bool) -> Result<Scenario> {
        let t = self.test_section();
        let mc = match (&self.mc, full) {
            (Some(mc), _) => mc.clone(),
            (None, true) => return Err(missing("mc")),
            (None, false) => McSection::default(),
        };
        let alternative = match (&self.alt, full) {
            (None, false) => Alternative::OffSupport {
                theta: 0.0,
                sign: 1.0,
            },
            _ => self.alternative()?,
        };
        let level_only = mc.rho.is_empty() && !full;
        let rho = if level_only {
            vec![1.0]
        } else {
            mc.rho.clone()
        };
        let mut sc = Scenario::new(
            &self.id(),
            self.dictionary_spec()?,
            self.noise_spec()?,
            self.null_spec()?,
            alternative,
            rho,
        );
        sc.h0 = self.h0()?;
        sc.seed = self.seed();
        sc.tests = t.tests()?;
        match mc.replicates {
            Some(n) => sc.replicates = n,
            None if !full => sc.replicates = 1,
            None => {}
        }
        if let Some(a) = t.alpha {
            sc.alpha = a;
        }
        sc.kappa = t.kappa;
        sc.tau = t.tau;
        sc.constants = t.constants()?;
        sc.t1_half_square = match t.t1_rule.as_deref().unwrap_or("half-square") {
            "half-square" => true,
            "level" => false,
            other => {
                return Err(Error::Config(format!(
                    "test.t1_rule must be half-square or level, got `{other}`"
                )))
            }
        };
        sc.radius = t.radius.unwrap_or_else(|| default_radius(&sc.dictionary));
        if level_only {
            sc.t1_half_square = false;
        }
        sc.max_features = mc.max_features;
        sc.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(sc)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let d = self
            .detection
            .as_ref()
            .ok_or_else(|| missing("detection"))?;
        let t = self.test_section();
        Ok(SweepSpec {
            s_values: d.s.clone(),
            t_values: d.resolution.clone(),
            alpha: t.alpha.unwrap_or(0.1),
            rho_grid: d.rho.clone(),
            replicates: self.mc.as_ref().and_then(|m| m.replicates).unwrap_or(200),
            seed: self.seed(),
            constants: t.constants()?,
        })
    }

    pub fn calibration_spec(&self) -> Result<CalibrationSpec> {
        let mut spec = CalibrationSpec::new(self.dictionary_spec()?, self.noise_spec()?);
        let t = self.test_section();
        spec.kappa = t.kappa;
        spec.tau = t.tau;
        spec.c1 = t.constants()?.c1;
        spec.seed = self.seed();
        if let Some(c) = &self.calibration {
            if let Some(s) = &c.s {
                spec.s_values = s.clone();
            }
            if let Some(n) = c.replicates {
                spec.replicates = n;
            }
            if let Some(a) = c.amplitude {
                spec.amplitude = a;
            }
            if let Some(q) = c.quantile {
                spec.quantile = q;
            }
        }
        Ok(spec)
    }
}

/// Near-region radius used when `test.radius` is absent: 0.4 for Gaussian
/// spikes, 0.2 for low-pass features.
pub fn default_radius(spec: &DictionarySpec) -> f64 {
    match spec {
        DictionarySpec::GaussianSchedule { .. } | DictionarySpec::Gaussian { .. } => 0.4,
        _ => 0.2,
    }
}

/// Named colored-noise spectra of length `len`.
pub fn xi_preset(name: &str, len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::Config("noise.xi_len must be positive".into()));
    }
    let n = len as f64;
    match name {
        "truncated-white" => Ok(vec![1.0 / n; len]),
        "harmonic" => Ok((0..len).map(|k| 1.0 / (n * (k as f64 + 1.0))).collect()),
        other => Err(Error::Config(format!(
            "noise.xi_preset must be truncated-white or harmonic, got `{other}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
id = "demo"
seed = 3

[dictionary]
preset = "gaussian"
resolution = 128

[noise]
sigma_bar = 1.0

[null]
beta = [1.0]
theta = [0.0]

[alt]
kind = "amplitude"
beta = [1.0]
theta = [1.5]

[mc]
rho = [1.0, 2.0]
replicates = 10
"#;

    #[test]
    fn parses_full_scenario() {
        let c = parse(BASE, &[]).unwrap();
        let sc = c.scenario().unwrap();
        assert_eq!(sc.id, "demo");
        assert_eq!(sc.seed, 3);
        assert_eq!(sc.replicates, 10);
        assert_eq!(
            sc.dictionary,
            DictionarySpec::GaussianSchedule {
                resolution: 128,
                shrink: 0.5
            }
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(&format!("{BASE}\nbogus_key = 1\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = parse(BASE, &["noise.colour=1".into()]).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let c = parse(
            BASE,
            &[
                "seed=11".into(),
                "mc.rho=[0.5, 4.0]".into(),
                "test.which=[\"T1\", \"max\"]".into(),
                "dictionary.preset=dirichlet".into(),
                "dictionary.layout=detection".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.seed(), 11);
        assert_eq!(c.mc.as_ref().unwrap().rho, vec![0.5, 4.0]);
        assert_eq!(
            c.test_section().tests().unwrap(),
            vec![TestKind::T1, TestKind::Max]
        );
        assert_eq!(
            c.dictionary_spec().unwrap(),
            DictionarySpec::Detection { resolution: 128 }
        );
    }

    #[test]
    fn malformed_override() {
        assert!(parse(BASE, &["seed".into()]).is_err());
        assert!(parse(BASE, &["seed.x=1".into()]).is_err());
        assert!(parse(BASE, &["a..b=1".into()]).is_err());
    }

    #[test]
    fn colored_presets() {
        let xi = xi_preset("truncated-white", 4).unwrap();
        assert_eq!(xi, vec![0.25; 4]);
        let c = parse(
            BASE,
            &[
                "noise.kind=colored".into(),
                "noise.xi_preset=harmonic".into(),
                "noise.xi_len=3".into(),
            ],
        )
        .unwrap();
        match c.noise_spec().unwrap() {
            NoiseSpec::Colored { xi, .. } => assert!((xi[2] - 1.0 / 9.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = load(Path::new("/nonexistent/x.toml"), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("/nonexistent/x.toml"));
    }
}
