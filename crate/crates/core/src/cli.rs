//! Command-line driver: parses arguments, loads the scenario, runs one verb
//! and writes CSV, SVG and a manifest into the output directory.
//!
//! Exit codes: 0 success, 2 configuration, 3 numerical assumption
//! violated, 4 I/O, 1 anything else.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::certificate::{scan_certificate, verify_certificate};
use crate::config::{self, default_radius, Config};
use crate::diagnostics::{
    approximation_report, check_assumption, prox_for, CovariantKernel, EmpiricalKernel, ProxKernel,
};
use crate::error::{Error, Result};
use crate::harness::{
    calibrate_constants, outcomes_to_csv, run_detection_sweep, run_outcomes, run_risk_curve,
    sweep_to_csv, with_threads, write_output, Manifest, RiskCurve, Setup,
};
use crate::hypotest::TestKind;
use crate::plot::{LinePlot, Series};
use crate::prox::ProxFunction;
use crate::signal::{observe, synthesize, Mixture};
use crate::solver::{Solver, SolverConfig};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "OFFGRID_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "offgrid",
    version,
    about = "Off-the-grid sparse mixture estimation and testing"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo loops.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $OFFGRID_OUT, else ./offgrid-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set noise.sigma_bar=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one observation of `[signal]`.
    Simulate { config: PathBuf },
    /// Fit a mixture to a simulated observation, or to `--data`.
    Estimate {
        config: PathBuf,
        /// CSV with a `value` column holding the observation.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Build and verify the interpolating certificate of `[null]`.
    Certify { config: PathBuf },
    /// Run the selected tests on draws of `[signal]` (or the null).
    Test { config: PathBuf },
    /// Kernel approximation report and assumption verdict.
    Diagnose { config: PathBuf },
    /// Risk curve over `mc.rho` and/or the detection sweep.
    Sweep { config: PathBuf },
    /// Calibrate the error constants.
    Calibrate { config: PathBuf },
    /// Table of constants of a limit function.
    Constants { config: PathBuf },
}

impl Command {
    fn config_path(&self) -> &Path {
        match self {
            Command::Simulate { config }
            | Command::Estimate { config, .. }
            | Command::Certify { config }
            | Command::Test { config }
            | Command::Diagnose { config }
            | Command::Sweep { config }
            | Command::Calibrate { config }
            | Command::Constants { config } => config,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Domain(_) | Error::InvalidMixture(_) => 2,
        Error::Assumption(_)
        | Error::Separation { .. }
        | Error::Positivity { .. }
        | Error::DegenerateFeature { .. } => 3,
        Error::Io(_) => 4,
        Error::Structural(_) | Error::DimensionMismatch { .. } => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("offgrid-out"))
}

/// Runs the parsed command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let path = cli.command.config_path();
    let cfg = config::load(path, &overrides)?;
    let hash = crate::harness::hex_digest(&std::fs::read(path)?, &overrides);
    let out = out_dir(cli);
    let files = with_threads(cli.threads, || dispatch(&cli.command, &cfg, &out))??;
    let manifest = Manifest::new(
        hash,
        cfg.seed(),
        files.iter().map(|(n, _)| n.clone()).collect(),
    );
    let mut paths: Vec<PathBuf> = files.into_iter().map(|(_, p)| p).collect();
    paths.push(manifest.write(&out)?);
    Ok(paths)
}

type Written = Vec<(String, PathBuf)>;

struct Sink<'a> {
    dir: &'a Path,
    files: Written,
}

impl Sink<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = write_output(self.dir, name, contents)?;
        self.files.push((name.to_string(), p));
        Ok(())
    }
}

fn dispatch(cmd: &Command, cfg: &Config, dir: &Path) -> Result<Written> {
    let mut sink = Sink {
        dir,
        files: Vec::new(),
    };
    let outcome = match cmd {
        Command::Simulate { .. } => simulate(cfg, &mut sink),
        Command::Estimate { data, .. } => estimate(cfg, data.as_deref(), &mut sink),
        Command::Certify { .. } => certify(cfg, &mut sink),
        Command::Test { .. } => test(cfg, &mut sink),
        Command::Diagnose { .. } => diagnose(cfg, &mut sink),
        Command::Sweep { .. } => sweep(cfg, &mut sink),
        Command::Calibrate { .. } => calibrate(cfg, &mut sink),
        Command::Constants { .. } => constants(cfg, &mut sink),
    };
    outcome.map(|_| sink.files)
}

fn setup(cfg: &Config) -> Result<Setup> {
    let t = cfg.test_section();
    Setup::new(
        &cfg.dictionary_spec()?,
        &cfg.noise_spec()?,
        t.kappa,
        t.tau,
        t.constants()?.c1,
    )
}

/// Abscissae of an observation: grid points, or basis indices.
fn abscissae(setup: &Setup) -> Vec<f64> {
    let m = setup.dict.measure();
    if m.points().is_empty() {
        (0..m.len()).map(|k| k as f64).collect()
    } else {
        m.points().to_vec()
    }
}

fn observation_csv(x: &[f64], y: &[f64]) -> String {
    let mut out = String::from("index,point,value\n");
    for (k, (a, b)) in x.iter().zip(y).enumerate() {
        let _ = writeln!(out, "{k},{a:.16e},{b:.16e}");
    }
    out
}

fn simulate(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let setup = setup(cfg)?;
    let m = cfg.signal()?;
    let y = observe(&m, &setup.dict, &setup.noise, cfg.seed(), 0)?;
    let clean = synthesize(&m, &setup.dict)?;
    let x = abscissae(&setup);
    sink.put("observation.csv", &observation_csv(&x, &y))?;
    sink.put("signal.csv", &m.to_record())?;
    let plot = LinePlot::new("observation", "t", "y")
        .with(Series::new("observed", zip(&x, &y)))
        .with(Series::new("signal", zip(&x, &clean)));
    sink.put("observation.svg", &plot.render())
}

fn zip(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().copied().zip(y.iter().copied()).collect()
}

/// Reads the `value` column of a CSV file.
pub fn read_observation(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Input(format!("{}: no `value` column", path.display())))?;
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
            r.get(col)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("{}: bad value: {e}", path.display())))
        })
        .collect()
}

fn estimate(cfg: &Config, data: Option<&Path>, sink: &mut Sink) -> Result<()> {
    let setup = setup(cfg)?;
    let truth = cfg.signal.as_ref().map(|s| s.mixture()).transpose()?;
    let y = match (data, &truth) {
        (Some(p), _) => read_observation(p)?,
        (None, Some(m)) => observe(m, &setup.dict, &setup.noise, cfg.seed(), 0)?,
        (None, None) => return Err(Error::Config("estimate needs [signal] or --data".into())),
    };
    let expected = truth.as_ref().map_or(4, Mixture::s).max(1);
    let mut sc = SolverConfig::for_sparsity(setup.kappa, expected);
    if let Some(k) = cfg.mc.as_ref().and_then(|m| m.max_features) {
        sc.max_features = k;
    }
    let solver = Solver::new(&setup.dict, sc)?;
    let fit = solver.fit(&y)?;
    sink.put("estimate.csv", &fit.to_record())?;
    let mut trace = String::from("iteration,objective\n");
    for (k, v) in fit.trace.iter().enumerate() {
        let _ = writeln!(trace, "{k},{v:.16e}");
    }
    sink.put("trace.csv", &trace)?;
    let x = abscissae(&setup);
    let fitted = synthesize(&fit.mixture, &setup.dict)?;
    let plot = LinePlot::new("fit", "t", "y")
        .with(Series::new("observed", zip(&x, &y)))
        .with(Series::new("fitted", zip(&x, &fitted)));
    sink.put("estimate.svg", &plot.render())?;
    if !fit.converged {
        return Err(Error::Assumption(
            "solver did not reach stationarity".into(),
        ));
    }
    Ok(())
}

fn certify(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let setup = setup(cfg)?;
    let null = cfg.null_spec()?;
    if null.s0() == 0 {
        return Err(Error::Config(
            "certify needs a non-empty null support".into(),
        ));
    }
    let radius = cfg
        .test_section()
        .radius
        .unwrap_or_else(|| default_radius(&cfg.dictionary_spec().expect("checked by setup")));
    let dict = &setup.dict;
    let metric = dict.metric()?;
    let cert = null.certificate(dict)?;
    let step = dict.scale() / 20.0;
    let report = verify_certificate(&cert, dict, &metric, radius, step)?;
    let scan = scan_certificate(&cert, dict, &metric, step)?;
    let mut csv = String::from("theta,correlation,distance,nearest\n");
    for p in &scan {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{}",
            p.theta, p.correlation, p.distance, p.nearest
        );
    }
    let mut summary = report.to_csv();
    let _ = writeln!(summary, "residual,{:.16e}", cert.residual);
    let _ = writeln!(summary, "condition,{:.16e}", cert.condition);
    sink.put("certificate.csv", &summary)?;
    sink.put("scan.csv", &csv)?;
    let plot = LinePlot::new("certificate scan", "theta", "correlation").with(Series::new(
        "<phi(theta), p>",
        scan.iter().map(|p| (p.theta, p.correlation)).collect(),
    ));
    sink.put("certificate.svg", &plot.render())?;
    if !report.pass {
        return Err(Error::Assumption(format!(
            "certificate fails its interpolation checks (C_N = {:.3e}, C_F = {:.3e})",
            report.near_constant, report.far_constant
        )));
    }
    Ok(())
}

fn test(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let sc = cfg.test_scenario()?;
    let data = match &cfg.signal {
        Some(s) => s.mixture()?,
        None => sc
            .h0
            .first()
            .cloned()
            .unwrap_or_else(|| sc.null.mixture.clone()),
    };
    let rows = run_outcomes(&sc, &data, false)?;
    sink.put("outcomes.csv", &outcomes_to_csv(&sc.id, &rows))
}

fn diagnose(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let setup = setup(cfg)?;
    let dict = &setup.dict;
    let prox = prox_for(dict);
    let d = cfg.diagnose.clone().unwrap_or_default();
    let report = approximation_report(dict)?;
    let r =
        d.r.unwrap_or_else(|| default_radius(&cfg.dictionary_spec().expect("checked by setup")));
    let verdict = check_assumption(
        dict,
        &prox,
        d.eta.unwrap_or(0.5),
        r,
        d.s.unwrap_or(1),
        &d.points,
    )?;
    sink.put("approximation.csv", &report.to_csv())?;
    sink.put("assumption.csv", &verdict.to_csv())?;
    println!("{:<14}{:>24}", "quantity", "value");
    for (k, v) in [
        ("C_T", report.c_t),
        ("V1", report.v1),
        ("V2", report.v2),
        ("V_T", report.v_t),
        ("grid_step", report.grid_step),
    ] {
        println!("{k:<14}{v:>24.16e}");
    }
    for (k, v) in [
        ("regularity", verdict.regularity),
        ("f_properties", verdict.f_properties),
        ("proximity", verdict.proximity),
        ("separation", verdict.separation),
    ] {
        println!("{k:<14}{v:>24}");
    }
    // kernel difference along offsets from the window centre
    let w = dict.window();
    let centre = 0.5 * (w.lo + w.hi);
    let sigma = dict.scale();
    let n = 200;
    let pts: Vec<f64> = std::iter::once(centre)
        .chain((0..=n).map(|k| w.project(centre + sigma * (-5.0 + 10.0 * k as f64 / n as f64))))
        .collect();
    let emp = EmpiricalKernel(dict);
    let px = ProxKernel::for_dictionary(dict);
    let (ke, kp) = (emp.tabulate(&pts)?, px.tabulate(&pts)?);
    let mut plot = LinePlot::new("kernel difference", "offset / sigma", "K_T - K_prox");
    for (i, j) in [(0, 0), (1, 0), (1, 1)] {
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                (
                    -5.0 + 10.0 * k as f64 / n as f64,
                    ke(0, k + 1, i, j) - kp(0, k + 1, i, j),
                )
            })
            .collect();
        plot = plot.with(Series::new(&format!("[{i},{j}]"), pts));
    }
    sink.put("kernel.svg", &plot.render())
}

fn risk_plot(curve: &RiskCurve, tests: &[TestKind]) -> LinePlot {
    let mut plot = LinePlot::new(
        &format!("risk: {}", curve.scenario_id),
        "rho",
        "type I + type II",
    );
    for &t in tests {
        plot = plot.with(Series::new(
            t.name(),
            curve.rows_for(t).map(|r| (r.rho, r.risk())).collect(),
        ));
        if t == TestKind::T1 {
            let b: Vec<(f64, f64)> = curve
                .rows_for(t)
                .filter_map(|r| r.bound.map(|b| (r.rho, b)))
                .collect();
            if !b.is_empty() {
                plot = plot.with(Series::new("T1 bound", b));
            }
        }
    }
    plot
}

fn sweep(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let mut ran = false;
    let mut invalid = None;
    if cfg.alt.is_some() {
        let sc = cfg.scenario()?;
        let curve = run_risk_curve(&sc)?;
        sink.put("risk.csv", &curve.to_csv())?;
        sink.put("risk.svg", &risk_plot(&curve, &sc.tests).render())?;
        if !curve.valid() {
            invalid = Some(curve.failure_rate());
        }
        ran = true;
    }
    if cfg.detection.is_some() {
        let spec = cfg.sweep_spec()?;
        let rows = run_detection_sweep(&spec)?;
        sink.put("detection.csv", &sweep_to_csv(&rows))?;
        let mut plot = LinePlot::new("detection", "s", "separation");
        for &t in &spec.t_values {
            let sel = rows.iter().filter(|r| r.resolution == t);
            plot = plot
                .with(Series::new(
                    &format!("empirical T={t}"),
                    sel.clone()
                        .filter_map(|r| r.empirical_rho.map(|e| (r.s as f64, e)))
                        .collect(),
                ))
                .with(Series::new(
                    &format!("rho_min T={t}"),
                    sel.map(|r| (r.s as f64, r.rho_min)).collect(),
                ));
        }
        sink.put("detection.svg", &plot.render())?;
        ran = true;
    }
    if !ran {
        return Err(Error::Config(
            "sweep needs [alt] with [mc], or [detection]".into(),
        ));
    }
    match invalid {
        Some(rate) => Err(Error::Assumption(format!(
            "{:.2}% of replicates failed (limit 1%)",
            100.0 * rate
        ))),
        None => Ok(()),
    }
}

fn calibrate(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let spec = cfg.calibration_spec()?;
    let rec = calibrate_constants(&spec)?;
    let mut csv = rec.to_csv();
    let _ = writeln!(
        csv,
        "# kappa = {:.16e}, scenario = {}",
        rec.kappa, rec.scenario_hash
    );
    sink.put("calibration.csv", &csv)
}

fn constants(cfg: &Config, sink: &mut Sink) -> Result<()> {
    let c = cfg
        .constants
        .as_ref()
        .ok_or_else(|| Error::Config("missing section `constants`".into()))?;
    let pf = match c.preset.as_str() {
        "gaussian" => ProxFunction::gaussian(),
        "sinc" | "dirichlet" => ProxFunction::sinc(),
        other => {
            return Err(Error::Config(format!(
                "constants.preset must be gaussian or sinc, got `{other}`"
            )))
        }
    };
    sink.put("constants.csv", &constants_table(&pf, c.eta, c.r, &c.s)?)
}

/// `quantity,value` rows of `g∞`, `L_i`, `ε`, `ν`, `H1`, `H2` and `Σ(η, r, s)`.
pub fn constants_table(pf: &ProxFunction, eta: f64, r: f64, s: &[usize]) -> Result<String> {
    let k = pf.constants(r)?;
    let mut out = String::from("quantity,value\n");
    let mut row = |name: &str, v: f64| {
        let _ = writeln!(out, "{name},{v:.16e}");
    };
    row("g_inf", k.g_inf);
    for (name, v) in ["L0", "L1", "L2", "L3", "L4", "L6"].iter().zip(k.l) {
        row(name, v);
    }
    row("eps_half_r", k.eps_half_r);
    row("nu_two_r", k.nu_two_r);
    row("H1", k.h1);
    row("H2", k.h2);
    for &si in s {
        row(
            &format!("Sigma_s{si}"),
            pf.separation_requirement(eta, r, si)?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Assumption("x".into())), 3);
        assert_eq!(exit_code(&Error::Io("x".into())), 4);
    }

    #[test]
    fn constants_table_rows() {
        let t = constants_table(&ProxFunction::gaussian(), 0.5, 0.4, &[2, 5]).unwrap();
        assert!(t.starts_with("quantity,value\ng_inf,5.0000000000000000e-1\n"));
        assert!(t.contains("Sigma_s5,"));
        assert_eq!(t.lines().count(), 1 + 11 + 2);
    }

    #[test]
    fn parses_global_flags_after_verb() {
        let cli = Cli::try_parse_from([
            "offgrid",
            "sweep",
            "a.toml",
            "--threads",
            "8",
            "--seed",
            "3",
            "--set",
            "mc.replicates=5",
        ])
        .unwrap();
        assert_eq!(cli.threads, 8);
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.overrides, vec!["mc.replicates=5".to_string()]);
    }
}
