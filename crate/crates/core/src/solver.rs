//! Sliding greedy solver for the ℓ₁-penalized least-squares problem over
//! amplitudes and continuous locations,
//! `min ½‖y - Σ β_k φ_T(θ_k)‖² + κ‖β‖₁`.
//!
//! Each outer iteration scans the residual correlation on a fixed grid,
//! polishes the best location, inserts it, re-solves the amplitudes by
//! coordinate descent, and then slides amplitudes and locations jointly
//! with a damped Newton method whose coefficient signs are frozen.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::{Dictionary, Domain, NormalizedFeature};
use crate::error::{Error, Result};
use crate::measure::{axpy, dot};
use crate::noise::NoiseModel;
use crate::signal::Mixture;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Maximum number of active features `K`.
    pub max_features: usize,
    pub kappa: f64,
    /// Insertion scan points per `σ_T`.
    pub grid_factor: usize,
    /// Defaults to `2K + 4` when `None`.
    pub max_outer_iters: Option<usize>,
    /// Location step tolerance in units of `σ_T`.
    pub step_tol: f64,
    pub objective_tol: f64,
    pub max_local_iters: usize,
    /// Merge radius in units of `σ_T`.
    pub merge_radius: f64,
    pub prune_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_features: 8,
            kappa: 0.0,
            grid_factor: 8,
            max_outer_iters: None,
            step_tol: 1e-10,
            objective_tol: 1e-12,
            max_local_iters: 500,
            merge_radius: 0.01,
            prune_threshold: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn with_kappa(kappa: f64) -> Self {
        Self {
            kappa,
            ..Self::default()
        }
    }

    /// `K = max(8, 4 s)`.
    pub fn for_sparsity(kappa: f64, expected_s: usize) -> Self {
        Self {
            kappa,
            max_features: (4 * expected_s).max(8),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_features == 0 || self.grid_factor == 0 {
            return Err(Error::Config(
                "max_features and grid_factor must be >= 1".into(),
            ));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        let tols = [
            self.step_tol,
            self.objective_tol,
            self.merge_radius,
            self.prune_threshold,
        ];
        if tols.iter().any(|t| !(*t > 0.0)) || self.max_local_iters == 0 {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    fn outer_cap(&self) -> usize {
        self.max_outer_iters.unwrap_or(2 * self.max_features + 4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mixture: Mixture,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// `converged,objective,iterations` then the mixture record.
    pub fn to_record(&self) -> String {
        format!(
            "{},{:.16e},{}\n{}",
            self.converged,
            self.objective,
            self.iterations,
            self.mixture.to_record()
        )
    }
}

/// Stationarity residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    /// `sup |⟨φ_T(θ), r⟩|` over the scan grid.
    pub max_correlation: f64,
    /// `max_k |⟨φ_T(θ_k), r⟩ - κ sign(β_k)|`.
    pub amplitude_residual: f64,
    /// `max_k |β_k| |⟨∂φ_T(θ_k), r⟩|`.
    pub location_residual: f64,
    pub holds: bool,
}

/// `κ = c₁ σ̄ √(Δ_T log τ)`.
pub fn default_kappa(noise: &NoiseModel, tau: f64, c1: f64) -> Result<f64> {
    if !(tau > 1.0) {
        return Err(Error::Domain(format!("tau must exceed 1, got {tau}")));
    }
    Ok(c1 * noise.sigma_bar * (noise.decay() * tau.ln()).sqrt())
}

/// Solver bound to one dictionary; the insertion scan atoms are cached.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    dict: &'a Dictionary,
    cfg: SolverConfig,
    scan_theta: Vec<f64>,
    scan_atoms: Vec<f64>,
}

struct Active {
    beta: Vec<f64>,
    theta: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(dict: &'a Dictionary, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let step = dict.scale() / cfg.grid_factor as f64;
        let scan_theta = dict.window().scan_points(step);
        let n = dict.measure().len();
        let mut scan_atoms = Vec::with_capacity(scan_theta.len() * n);
        for &t in &scan_theta {
            scan_atoms.extend_from_slice(&dict.atom(t)?);
        }
        Ok(Self {
            dict,
            cfg,
            scan_theta,
            scan_atoms,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    fn weight(&self) -> f64 {
        self.dict.measure().weight()
    }

    fn residual(&self, y: &[f64], act: &Active) -> Result<Vec<f64>> {
        let mut r = y.to_vec();
        for (&b, &t) in act.beta.iter().zip(&act.theta) {
            axpy(-b, &self.dict.atom(t)?, &mut r);
        }
        Ok(r)
    }

    /// `½‖y - βΦ_T(ϑ)‖² + κ‖β‖₁`.
    pub fn objective(&self, y: &[f64], m: &Mixture) -> Result<f64> {
        self.dict.measure().check(y)?;
        let act = Active {
            beta: m.beta().to_vec(),
            theta: m.theta().to_vec(),
        };
        let r = self.residual(y, &act)?;
        Ok(self.objective_from_residual(&r, &act.beta))
    }

    fn objective_from_residual(&self, r: &[f64], beta: &[f64]) -> f64 {
        0.5 * self.weight() * dot(r, r) + self.cfg.kappa * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Scan `|⟨φ_T(θ), r⟩|`; ties resolve to the smallest location.
    fn scan(&self, r: &[f64]) -> (usize, f64) {
        let n = r.len();
        let w = self.weight();
        let mut best = (0usize, 0.0f64);
        for (k, atom) in self.scan_atoms.chunks_exact(n).enumerate() {
            let c = w * dot(atom, r);
            if c.abs() > best.1.abs() {
                best = (k, c);
            }
        }
        best
    }

    fn project(&self, theta: f64) -> f64 {
        self.dict.window().project(theta)
    }

    /// Local maximization of `|⟨φ_T(θ), r⟩|` around a scan point.
    fn polish(&self, r: &[f64], k: usize, c0: f64) -> Result<(f64, f64)> {
        let sign = c0.signum();
        let step = self.dict.scale() / self.cfg.grid_factor as f64;
        let theta0 = self.scan_theta[k];
        let m = self.dict.measure();
        let eval = |t: f64| -> Result<(f64, f64, f64)> {
            let f = self.dict.normalized_feature(t, 2)?;
            Ok((
                sign * m.inner_unchecked(f.d(0), r),
                sign * m.inner_unchecked(f.d(1), r),
                sign * m.inner_unchecked(f.d(2), r),
            ))
        };
        let (mut lo, mut hi) = (theta0 - step, theta0 + step);
        if self.dict.domain() == Domain::RealLine {
            lo = self.project(lo);
            hi = self.project(hi);
        }
        let mut t = theta0;
        let (mut best_t, mut best_v) = (theta0, sign * c0);
        for _ in 0..60 {
            let (v, d1, d2) = eval(self.wrap(t))?;
            if v > best_v {
                best_v = v;
                best_t = t;
            }
            if d1 > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            let mut next = if d2 < 0.0 { t - d1 / d2 } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-13 * self.dict.scale() || hi - lo <= 1e-13 * self.dict.scale()
            {
                t = next;
                break;
            }
            t = next;
        }
        let (v, _, _) = eval(self.wrap(t))?;
        if v > best_v {
            best_v = v;
            best_t = t;
        }
        Ok((self.wrap(best_t), sign * best_v))
    }

    fn wrap(&self, t: f64) -> f64 {
        self.project(t)
    }

    /// Exact amplitudes for fixed locations by cyclic soft-thresholding.
    fn solve_amplitudes(&self, y: &[f64], act: &mut Active) -> Result<()> {
        let s = act.theta.len();
        if s == 0 {
            return Ok(());
        }
        let m = self.dict.measure();
        let atoms = act
            .theta
            .iter()
            .map(|&t| self.dict.atom(t))
            .collect::<Result<Vec<_>>>()?;
        let corr: Vec<f64> = atoms.iter().map(|a| m.inner_unchecked(a, y)).collect();
        let gram = DMatrix::from_fn(s, s, |a, b| m.inner_unchecked(&atoms[a], &atoms[b]));
        let kappa = self.cfg.kappa;
        for _ in 0..20_000 {
            let mut change = 0.0f64;
            for k in 0..s {
                let mut z = corr[k];
                for l in 0..s {
                    if l != k {
                        z -= gram[(k, l)] * act.beta[l];
                    }
                }
                let nb = soft(z, kappa) / gram[(k, k)];
                change = change.max((nb - act.beta[k]).abs());
                act.beta[k] = nb;
            }
            if change <= 1e-15 * (1.0 + act.beta.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
                break;
            }
        }
        Ok(())
    }

    /// Joint damped-Newton refinement of amplitudes and locations with
    /// frozen signs. A coefficient reaching zero truncates the step and is
    /// set to exactly zero for pruning.
    fn slide(&self, y: &[f64], act: &mut Active) -> Result<()> {
        let m = self.dict.measure();
        let kappa = self.cfg.kappa;
        let sigma = self.dict.scale();
        let mut mu = 1e-3;
        let mut r = self.residual(y, act)?;
        let mut obj = self.objective_from_residual(&r, &act.beta);
        for _ in 0..self.cfg.max_local_iters {
            let s = act.beta.len();
            if s == 0 || act.beta.contains(&0.0) {
                return Ok(());
            }
            let sign: Vec<f64> = act.beta.iter().map(|b| b.signum()).collect();
            let jets: Vec<NormalizedFeature> = act
                .theta
                .iter()
                .map(|&t| self.dict.normalized_feature(t, 2))
                .collect::<Result<_>>()?;
            let n = 2 * s;
            let mut g = DVector::zeros(n);
            let mut h = DMatrix::zeros(n, n);
            for k in 0..s {
                let c0 = m.inner_unchecked(jets[k].d(0), &r);
                let c1 = m.inner_unchecked(jets[k].d(1), &r);
                let c2 = m.inner_unchecked(jets[k].d(2), &r);
                g[k] = -c0 + kappa * sign[k];
                g[s + k] = -act.beta[k] * c1;
                for l in 0..s {
                    let pp = m.inner_unchecked(jets[k].d(0), jets[l].d(0));
                    let pd = m.inner_unchecked(jets[k].d(0), jets[l].d(1));
                    let dd = m.inner_unchecked(jets[k].d(1), jets[l].d(1));
                    h[(k, l)] = pp;
                    h[(k, s + l)] = act.beta[l] * pd;
                    h[(s + k, s + l)] = act.beta[k] * act.beta[l] * dd;
                }
                h[(k, s + k)] -= c1;
                h[(s + k, s + k)] -= act.beta[k] * c2;
            }
            for k in 0..s {
                for l in 0..s {
                    h[(s + l, k)] = h[(k, s + l)];
                }
            }
            let gnorm = g.amax();
            if gnorm <= 1e-13 * (1.0 + obj.abs().sqrt()) {
                return Ok(());
            }
            let diag: Vec<f64> = (0..n).map(|i| h[(i, i)].abs().max(1e-12)).collect();
            let mut accepted = false;
            while mu < 1e14 {
                let mut a = h.clone();
                for i in 0..n {
                    a[(i, i)] += mu * diag[i];
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => {
                        mu *= 10.0;
                        continue;
                    }
                };
                let mut frac = 1.0f64;
                let mut hits = Vec::new();
                for k in 0..s {
                    let nb = act.beta[k] + step[k];
                    if nb * sign[k] <= 0.0 {
                        let f = act.beta[k] / (act.beta[k] - nb);
                        if f < frac {
                            frac = f;
                        }
                        hits.push(k);
                    }
                }
                let mut cand = Active {
                    beta: (0..s).map(|k| act.beta[k] + frac * step[k]).collect(),
                    theta: (0..s)
                        .map(|k| self.project(act.theta[k] + frac * step[s + k]))
                        .collect(),
                };
                for &k in &hits {
                    if act.beta[k] / (act.beta[k] - (act.beta[k] + step[k])) <= frac + 1e-15 {
                        cand.beta[k] = 0.0;
                    }
                }
                let cr = self.residual(y, &cand)?;
                let cobj = self.objective_from_residual(&cr, &cand.beta);
                if cobj < obj {
                    let dtheta = (0..s)
                        .map(|k| (cand.theta[k] - act.theta[k]).abs())
                        .fold(0.0, f64::max);
                    let dec = obj - cobj;
                    *act = cand;
                    r = cr;
                    obj = cobj;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    if dtheta <= self.cfg.step_tol * sigma
                        && dec <= self.cfg.objective_tol * obj.max(1.0)
                    {
                        return Ok(());
                    }
                    break;
                }
                mu *= 4.0;
            }
            if !accepted {
                return Ok(());
            }
        }
        Ok(())
    }

    fn prune_and_merge(&self, act: &mut Active) {
        let keep: Vec<usize> = (0..act.beta.len())
            .filter(|&k| act.beta[k].abs() >= self.cfg.prune_threshold)
            .collect();
        act.beta = keep.iter().map(|&k| act.beta[k]).collect();
        act.theta = keep.iter().map(|&k| act.theta[k]).collect();
        let radius = self.cfg.merge_radius * self.dict.scale();
        let domain = self.dict.domain();
        let mut k = 0;
        while k < act.theta.len() {
            let mut l = k + 1;
            while l < act.theta.len() {
                let d = crate::dictionary::signed_diff(domain, act.theta[l], act.theta[k]);
                if d.abs() <= radius {
                    let (bk, bl) = (act.beta[k].abs(), act.beta[l].abs());
                    let w = if bk + bl > 0.0 { bl / (bk + bl) } else { 0.5 };
                    act.theta[k] = self.project(act.theta[k] + w * d);
                    act.beta[k] += act.beta[l];
                    act.beta.remove(l);
                    act.theta.remove(l);
                } else {
                    l += 1;
                }
            }
            k += 1;
        }
        let keep: Vec<usize> = (0..act.beta.len())
            .filter(|&k| act.beta[k].abs() >= self.cfg.prune_threshold)
            .collect();
        act.beta = keep.iter().map(|&k| act.beta[k]).collect();
        act.theta = keep.iter().map(|&k| act.theta[k]).collect();
    }

    fn settle(&self, y: &[f64], act: &mut Active) -> Result<()> {
        for _ in 0..4 {
            self.solve_amplitudes(y, act)?;
            self.prune_and_merge(act);
            let before = act.beta.len();
            self.slide(y, act)?;
            self.prune_and_merge(act);
            if act.beta.len() == before {
                break;
            }
        }
        Ok(())
    }

    /// Stationarity certificate of `m` for data `y`.
    pub fn stationarity(&self, y: &[f64], m: &Mixture) -> Result<Stationarity> {
        let act = Active {
            beta: m.beta().to_vec(),
            theta: m.theta().to_vec(),
        };
        let r = self.residual(y, &act)?;
        let meas = self.dict.measure();
        let (_, c) = self.scan(&r);
        let mut amp = 0.0f64;
        let mut loc = 0.0f64;
        for (&b, &t) in act.beta.iter().zip(&act.theta) {
            let f = self.dict.normalized_feature(t, 1)?;
            amp = amp.max((meas.inner_unchecked(f.d(0), &r) - self.cfg.kappa * b.signum()).abs());
            loc = loc.max(b.abs() * meas.inner_unchecked(f.d(1), &r).abs());
        }
        let ynorm = meas.norm_sq(y)?.sqrt();
        let holds = c.abs() <= self.cfg.kappa * (1.0 + 1e-6) + 1e-9 * (1.0 + ynorm)
            && amp <= 1e-6
            && loc <= 1e-6 * (1.0 + ynorm);
        Ok(Stationarity {
            max_correlation: c.abs(),
            amplitude_residual: amp,
            location_residual: loc,
            holds,
        })
    }

    pub fn fit(&self, y: &[f64]) -> Result<FitResult> {
        self.dict.measure().check(y)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "observation contains non-finite values".into(),
            ));
        }
        let mut act = Active {
            beta: Vec::new(),
            theta: Vec::new(),
        };
        let mut obj = self.objective_from_residual(y, &[]);
        let mut trace = vec![obj];
        let mut iterations = 0;
        for _ in 0..self.cfg.outer_cap() {
            iterations += 1;
            let r = self.residual(y, &act)?;
            let (k, c) = self.scan(&r);
            let (theta, value) = if c != 0.0 {
                self.polish(&r, k, c)?
            } else {
                (self.scan_theta[k], 0.0)
            };
            let insert = value.abs() > self.cfg.kappa * (1.0 + 1e-7)
                && act.beta.len() < self.cfg.max_features;
            let saved = (act.beta.clone(), act.theta.clone());
            if insert {
                act.beta.push(0.0);
                act.theta.push(theta);
            }
            self.settle(y, &mut act)?;
            let r = self.residual(y, &act)?;
            let new_obj = self.objective_from_residual(&r, &act.beta);
            if new_obj > obj {
                act.beta = saved.0;
                act.theta = saved.1;
                break;
            }
            let delta = obj - new_obj;
            obj = new_obj;
            trace.push(obj);
            if !insert && delta <= self.cfg.objective_tol * obj.max(1.0) {
                break;
            }
        }
        let mixture = Mixture::new(act.beta, act.theta)?;
        let converged = self.stationarity(y, &mixture)?.holds;
        Ok(FitResult {
            mixture,
            objective: obj,
            trace,
            converged,
            iterations,
        })
    }
}

#[inline]
fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// One-shot fit without keeping the scan cache.
pub fn fit(y: &[f64], dict: &Dictionary, cfg: SolverConfig) -> Result<FitResult> {
    Solver::new(dict, cfg)?.fit(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synthesize;

    fn gauss() -> Dictionary {
        Dictionary::gaussian_schedule(128, 0.5).unwrap()
    }

    #[test]
    fn kappa_rule() {
        let m = crate::measure::ObservationMeasure::regular_grid(0.0, 1.0, 256).unwrap();
        let nm = NoiseModel::grid_white(1.0, &m).unwrap();
        let k = default_kappa(&nm, 256.0, 2.0).unwrap();
        assert!((k - 2.0 * (256f64.ln() / 256.0).sqrt()).abs() < 1e-15);
        assert!((k - 0.2943).abs() < 1e-4);
        assert!(default_kappa(&nm, 1.0, 2.0).is_err());
        assert!(default_kappa(&nm, 1.0 + 1e-12, 2.0).unwrap() < 1e-5);
        let nm2 = NoiseModel::grid_white(2.0, &m).unwrap();
        assert!((default_kappa(&nm2, 256.0, 2.0).unwrap() - 2.0 * k).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_empty_fit() {
        let d = gauss();
        let y = d.measure().zeros();
        let fit = fit(&y, &d, SolverConfig::with_kappa(0.1)).unwrap();
        assert!(fit.mixture.is_empty());
        assert_eq!(fit.objective, 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn single_spike_soft_threshold() {
        let d = gauss();
        let sigma = d.scale();
        let theta0 = 0.3137;
        let m = Mixture::new(vec![3.0], vec![theta0]).unwrap();
        let y = synthesize(&m, &d).unwrap();
        let kappa = 1e-3;
        let fit = fit(&y, &d, SolverConfig::with_kappa(kappa)).unwrap();
        assert_eq!(fit.mixture.s(), 1, "{:?}", fit.mixture);
        assert!((fit.mixture.theta()[0] - theta0).abs() <= 1e-3 * sigma);
        assert!((fit.mixture.beta()[0] - (3.0 - kappa)).abs() <= 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn trace_is_monotone_and_below_zero_solution() {
        let d = gauss();
        let m = Mixture::new(vec![1.2, -0.8, 0.9], vec![-1.6, 0.1, 1.7]).unwrap();
        let nm = NoiseModel::grid_white(0.5, d.measure()).unwrap();
        let y = crate::signal::observe(&m, &d, &nm, 4, 0).unwrap();
        let kappa = default_kappa(&nm, 128.0, 2.0).unwrap();
        let fit = fit(&y, &d, SolverConfig::with_kappa(kappa)).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.objective <= 0.5 * d.measure().norm_sq(&y).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let d = gauss();
        let mut y = d.measure().zeros();
        y[3] = f64::NAN;
        assert!(matches!(
            fit(&y, &d, SolverConfig::default()),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            fit(&y[1..], &d, SolverConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = SolverConfig {
            max_features: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(Solver::new(&d, bad), Err(Error::Config(_))));
    }

    #[test]
    fn dirichlet_two_spikes_on_the_circle() {
        let d = Dictionary::dirichlet_basis(31).unwrap();
        let m = Mixture::new(vec![1.0, -1.5], vec![0.97, 0.3]).unwrap();
        let y = synthesize(&m, &d).unwrap();
        let fit = fit(&y, &d, SolverConfig::with_kappa(1e-6)).unwrap();
        assert_eq!(fit.mixture.s(), 2);
        let mut got: Vec<(f64, f64)> = fit
            .mixture
            .theta()
            .iter()
            .copied()
            .zip(fit.mixture.beta().iter().copied())
            .collect();
        got.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((got[0].0 - 0.3).abs() < 1e-3 / 31.0 && (got[0].1 + 1.5).abs() < 1e-4);
        assert!((got[1].0 - 0.97).abs() < 1e-3 / 31.0 && (got[1].1 - 1.0).abs() < 1e-4);
    }
}
