//! Continuous dictionaries of translated, scaled features.
//!
//! A [`Dictionary`] couples a [`FeatureFamily`] (the template `h` and its
//! analytic derivatives in the location argument) with the
//! [`ObservationMeasure`] it is observed under and the window `Θ_T` over
//! which locations may range. From those it produces normalized features
//! `φ_T(θ)` with their first three θ-derivatives, the empirical kernel
//! `𝒦_T` with its covariant derivatives, and the Riemannian metric `𝔡_T`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measure::{axpy, dot, MeasureKind, ObservationMeasure};

/// Where locations live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    RealLine,
    Torus,
}

/// Signed difference `a - b`; on the torus the representative in `[-1/2, 1/2)`.
#[inline]
pub fn signed_diff(domain: Domain, a: f64, b: f64) -> f64 {
    match domain {
        Domain::RealLine => a - b,
        Domain::Torus => wrap_half(a - b),
    }
}

#[inline]
pub(crate) fn wrap_half(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// The closed interval `Θ_T` (or the whole circle on the torus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaWindow {
    pub lo: f64,
    pub hi: f64,
    pub domain: Domain,
}

impl ThetaWindow {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            domain: Domain::RealLine,
        }
    }

    pub fn circle() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            domain: Domain::Torus,
        }
    }

    /// Euclidean length `|Θ_T|`.
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, theta: f64) -> bool {
        match self.domain {
            Domain::Torus => theta.is_finite(),
            Domain::RealLine => theta >= self.lo - 1e-12 && theta <= self.hi + 1e-12,
        }
    }

    /// Projection onto the interval, or wrapping onto `[0, 1)`.
    pub fn project(&self, theta: f64) -> f64 {
        match self.domain {
            Domain::Torus => wrap_unit(theta),
            Domain::RealLine => theta.clamp(self.lo, self.hi),
        }
    }

    /// Equispaced scan points with spacing at most `step`, in increasing order.
    pub fn scan_points(&self, step: f64) -> Vec<f64> {
        match self.domain {
            Domain::Torus => {
                let n = (1.0 / step).ceil().max(1.0) as usize;
                (0..n).map(|k| k as f64 / n as f64).collect()
            }
            Domain::RealLine => {
                let n = (self.length() / step).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|k| self.lo + self.length() * k as f64 / n as f64)
                    .collect()
            }
        }
    }
}

/// Feature templates `h(·, σ)` with analytic derivatives in their first argument.
///
/// The Shannon multi-resolution family is not provided; any family added
/// later only needs `raw_jet` and `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureFamily {
    /// `h(t, σ) = exp(-t²/2σ²) / (π^{1/4} σ^{1/2})` on the real line.
    Gaussian { sigma: f64 },
    /// Normalized Dirichlet kernel `sin(Tπt) / (√T sin πt)` on the torus,
    /// `T = 2 f_c + 1`, `σ = 1/T`.
    Dirichlet { bandwidth: usize },
}

impl FeatureFamily {
    pub fn scale(&self) -> f64 {
        match *self {
            FeatureFamily::Gaussian { sigma } => sigma,
            FeatureFamily::Dirichlet { bandwidth } => 1.0 / bandwidth as f64,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            FeatureFamily::Gaussian { .. } => Domain::RealLine,
            FeatureFamily::Dirichlet { .. } => Domain::Torus,
        }
    }

    /// `h^{(i)}(t)` for `i ∈ 0..=3`, derivative in the first argument.
    pub fn eval(&self, t: f64, order: usize) -> f64 {
        let mut out = [0.0; 4];
        self.eval_upto(t, order, &mut out);
        out[order]
    }

    /// Fills `out[0..=order]` with `h, h', h'', h'''` at `t`.
    pub fn eval_upto(&self, t: f64, order: usize, out: &mut [f64; 4]) {
        match *self {
            FeatureFamily::Gaussian { sigma } => {
                let z = t / sigma;
                let h = (-0.5 * z * z).exp() / (PI.powf(0.25) * sigma.sqrt());
                out[0] = h;
                if order >= 1 {
                    out[1] = -z / sigma * h;
                }
                if order >= 2 {
                    out[2] = (z * z - 1.0) / (sigma * sigma) * h;
                }
                if order >= 3 {
                    out[3] = -(z * z * z - 3.0 * z) / (sigma * sigma * sigma) * h;
                }
            }
            FeatureFamily::Dirichlet { bandwidth } => dirichlet_upto(bandwidth, t, order, out),
        }
    }

    /// `‖h(·, σ)‖²` under Lebesgue measure by composite trapezoid quadrature.
    pub fn lebesgue_norm_sq(&self) -> f64 {
        match *self {
            FeatureFamily::Gaussian { sigma } => {
                let n = 20_000;
                let half = 20.0 * sigma;
                let step = 2.0 * half / n as f64;
                (0..=n)
                    .map(|k| {
                        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                        let h = self.eval(-half + k as f64 * step, 0);
                        w * h * h
                    })
                    .sum::<f64>()
                    * step
            }
            FeatureFamily::Dirichlet { bandwidth } => {
                // Periodic trapezoid is exact for trigonometric polynomials of
                // degree below the node count.
                let n = 4 * bandwidth + 7;
                (0..n)
                    .map(|k| {
                        let h = self.eval(k as f64 / n as f64 + 0.5 / n as f64, 0);
                        h * h
                    })
                    .sum::<f64>()
                    / n as f64
            }
        }
    }
}

fn dirichlet_upto(bandwidth: usize, t: f64, order: usize, out: &mut [f64; 4]) {
    let tw = wrap_half(t);
    let tn = bandwidth as f64;
    let scale = 1.0 / tn.sqrt();
    if tw.abs() < 0.05 {
        // Near the peak the quotient form cancels badly; sum the cosine series.
        let fc = (bandwidth - 1) / 2;
        let w = 2.0 * PI * tw;
        let (s1, c1) = w.sin_cos();
        let (mut sk, mut ck) = (0.0f64, 1.0f64);
        *out = [0.0; 4];
        out[0] = 1.0;
        for k in 1..=fc {
            let nc = ck * c1 - sk * s1;
            let ns = sk * c1 + ck * s1;
            ck = nc;
            sk = ns;
            let om = 2.0 * PI * k as f64;
            out[0] += 2.0 * ck;
            if order >= 1 {
                out[1] -= 2.0 * om * sk;
            }
            if order >= 2 {
                out[2] -= 2.0 * om * om * ck;
            }
            if order >= 3 {
                out[3] += 2.0 * om * om * om * sk;
            }
        }
        for v in out.iter_mut() {
            *v *= scale;
        }
        return;
    }
    let a = tn * PI;
    let b = PI;
    let (sa, ca) = (a * tw).sin_cos();
    let (sb, cb) = (b * tw).sin_cos();
    // Derivatives of numerator sin(a t) and denominator sin(b t).
    let num = [sa, a * ca, -a * a * sa, -a * a * a * ca];
    let den = [sb, b * cb, -b * b * sb, -b * b * b * cb];
    let q0 = num[0] / den[0];
    out[0] = q0 * scale;
    if order >= 1 {
        let q1 = (num[1] - q0 * den[1]) / den[0];
        out[1] = q1 * scale;
        if order >= 2 {
            let q2 = (num[2] - 2.0 * q1 * den[1] - q0 * den[2]) / den[0];
            out[2] = q2 * scale;
            if order >= 3 {
                let q3 = (num[3] - 3.0 * q2 * den[1] - 3.0 * q1 * den[2] - q0 * den[3]) / den[0];
                out[3] = q3 * scale;
            }
        }
    }
}

/// `φ_T(θ)` and its θ-derivatives, sampled under the dictionary's measure.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFeature {
    pub theta: f64,
    /// `derivs[0] = φ_T(θ)`, `derivs[i] = ∂_θ^i φ_T(θ)`; only the requested
    /// orders are filled.
    pub derivs: Vec<Vec<f64>>,
}

impl NormalizedFeature {
    pub fn values(&self) -> &[f64] {
        &self.derivs[0]
    }

    pub fn d(&self, i: usize) -> &[f64] {
        &self.derivs[i]
    }

    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }
}

/// Covariant derivatives `D̃_i[φ_T](θ)` for `i ∈ 0..=3`, with the local metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariantFeature {
    pub theta: f64,
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
    pub cov: [Vec<f64>; 4],
}

/// A feature family observed under a measure, restricted to `Θ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    family: FeatureFamily,
    measure: ObservationMeasure,
    window: ThetaWindow,
}

impl Dictionary {
    pub fn new(
        family: FeatureFamily,
        measure: ObservationMeasure,
        window: ThetaWindow,
    ) -> Result<Self> {
        if family.scale() <= 0.0 || !family.scale().is_finite() {
            return Err(Error::Domain("feature scale must be positive".into()));
        }
        match family {
            FeatureFamily::Gaussian { .. } => {
                if measure.kind() != MeasureKind::RegularGrid || measure.is_periodic() {
                    return Err(Error::Structural(
                        "gaussian features need a regular grid on the real line".into(),
                    ));
                }
            }
            FeatureFamily::Dirichlet { bandwidth } => {
                if bandwidth < 3 || bandwidth % 2 == 0 {
                    return Err(Error::Domain(format!(
                        "dirichlet bandwidth must be odd and >= 3, got {bandwidth}"
                    )));
                }
                let ok = match measure.kind() {
                    MeasureKind::BasisContinuum => measure.len() == bandwidth,
                    MeasureKind::RegularGrid => measure.is_periodic() && measure.len() >= bandwidth,
                };
                if !ok {
                    return Err(Error::Structural(
                        "dirichlet features need a basis of size T or a torus grid with N >= T"
                            .into(),
                    ));
                }
            }
        }
        if family.domain() != window.domain {
            return Err(Error::Structural(
                "window domain does not match family".into(),
            ));
        }
        Ok(Self {
            family,
            measure,
            window,
        })
    }

    /// Gaussian spikes on the grid `[-b, b]` with `T` points, `Θ_T = [-(1-ξ)b, (1-ξ)b]`.
    pub fn gaussian(sigma: f64, half_width: f64, resolution: usize, shrink: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&shrink) {
            return Err(Error::Domain(format!(
                "shrinkage must lie in [0, 1), got {shrink}"
            )));
        }
        let measure = ObservationMeasure::regular_grid(-half_width, half_width, resolution)?;
        let edge = (1.0 - shrink) * half_width;
        Self::new(
            FeatureFamily::Gaussian { sigma },
            measure,
            ThetaWindow::interval(-edge, edge),
        )
    }

    /// Gaussian spikes with `b_T = log T` and `σ_T = 1/√(ξ log T)`.
    pub fn gaussian_schedule(resolution: usize, shrink: f64) -> Result<Self> {
        let (sigma, b) = gaussian_schedule_params(resolution, shrink)?;
        Self::gaussian(sigma, b, resolution, shrink)
    }

    /// Dirichlet features in the real Fourier basis of size `T`.
    pub fn dirichlet_basis(bandwidth: usize) -> Result<Self> {
        Self::new(
            FeatureFamily::Dirichlet { bandwidth },
            ObservationMeasure::basis(bandwidth)?,
            ThetaWindow::circle(),
        )
    }

    /// Dirichlet features sampled on a torus grid with `N >= T` points.
    pub fn dirichlet_grid(bandwidth: usize, resolution: usize) -> Result<Self> {
        Self::new(
            FeatureFamily::Dirichlet { bandwidth },
            ObservationMeasure::torus_grid(resolution)?,
            ThetaWindow::circle(),
        )
    }

    pub fn family(&self) -> &FeatureFamily {
        &self.family
    }

    pub fn measure(&self) -> &ObservationMeasure {
        &self.measure
    }

    pub fn window(&self) -> &ThetaWindow {
        &self.window
    }

    pub fn scale(&self) -> f64 {
        self.family.scale()
    }

    pub fn domain(&self) -> Domain {
        self.family.domain()
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() || !self.window.contains(theta) {
            return Err(Error::Domain(format!(
                "theta = {theta} lies outside [{}, {}]",
                self.window.lo, self.window.hi
            )));
        }
        Ok(())
    }

    /// Unnormalized `∂_θ^i h(θ - ·, σ_T)` for `i ∈ 0..=order`.
    pub fn raw_jet(&self, theta: f64, order: usize) -> Vec<Vec<f64>> {
        let n = self.measure.len();
        let mut out = vec![vec![0.0; n]; order + 1];
        match (self.family, self.measure.kind()) {
            (FeatureFamily::Dirichlet { bandwidth }, MeasureKind::BasisContinuum) => {
                let fc = (bandwidth - 1) / 2;
                let scale = 1.0 / (bandwidth as f64).sqrt();
                let root2 = std::f64::consts::SQRT_2 * scale;
                out[0][0] = scale;
                let w = 2.0 * PI * theta;
                let (s1, c1) = w.sin_cos();
                let (mut sk, mut ck) = (0.0f64, 1.0f64);
                for k in 1..=fc {
                    let nc = ck * c1 - sk * s1;
                    let ns = sk * c1 + ck * s1;
                    ck = nc;
                    sk = ns;
                    let om = 2.0 * PI * k as f64;
                    // derivatives of (cos, sin)(ω θ) cycle through (-sin, cos), (-cos, -sin), (sin, -cos)
                    let cyc = [(ck, sk), (-sk, ck), (-ck, -sk), (sk, -ck)];
                    let mut pow = 1.0;
                    for (i, row) in out.iter_mut().enumerate() {
                        row[2 * k - 1] = root2 * pow * cyc[i].0;
                        row[2 * k] = root2 * pow * cyc[i].1;
                        pow *= om;
                    }
                }
            }
            _ => {
                let mut buf = [0.0; 4];
                for (j, &t) in self.measure.points().iter().enumerate() {
                    let x = theta - t;
                    if let FeatureFamily::Gaussian { sigma } = self.family {
                        if x.abs() > 40.0 * sigma {
                            continue;
                        }
                    }
                    self.family.eval_upto(x, order, &mut buf);
                    for (i, row) in out.iter_mut().enumerate() {
                        row[j] = buf[i];
                    }
                }
            }
        }
        out
    }

    /// `φ_T(θ) = h(θ-·)/‖h(θ-·)‖` with θ-derivatives up to `order` (≤ 3),
    /// obtained from the analytic derivatives of `h` by the quotient rule.
    pub fn normalized_feature(&self, theta: f64, order: usize) -> Result<NormalizedFeature> {
        self.check_theta(theta)?;
        if order > 3 {
            return Err(Error::Domain(
                "feature derivatives are available up to order 3".into(),
            ));
        }
        let raw = self.raw_jet(theta, order);
        let m = &self.measure;
        let q0 = m.inner_unchecked(&raw[0], &raw[0]);
        if !(q0 > 0.0) || !q0.is_finite() {
            return Err(Error::DegenerateFeature { theta });
        }
        // Derivatives of q = ‖ϕ‖² and of the multiplier μ = q^{-1/2}.
        let ip = |a: usize, b: usize| m.inner_unchecked(&raw[a], &raw[b]);
        let q1 = if order >= 1 { 2.0 * ip(1, 0) } else { 0.0 };
        let q2 = if order >= 2 {
            2.0 * ip(2, 0) + 2.0 * ip(1, 1)
        } else {
            0.0
        };
        let q3 = if order >= 3 {
            2.0 * ip(3, 0) + 6.0 * ip(2, 1)
        } else {
            0.0
        };
        let r = q0.sqrt();
        let mu0 = 1.0 / r;
        let mu1 = -0.5 * q1 / (q0 * r);
        let mu2 = 0.75 * q1 * q1 / (q0 * q0 * r) - 0.5 * q2 / (q0 * r);
        let mu3 = -1.875 * q1 * q1 * q1 / (q0 * q0 * q0 * r) + 2.25 * q1 * q2 / (q0 * q0 * r)
            - 0.5 * q3 / (q0 * r);
        let mu = [mu0, mu1, mu2, mu3];
        const BINOM: [[f64; 4]; 4] = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        let n = m.len();
        let mut derivs = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v = vec![0.0; n];
            for j in 0..=k {
                axpy(BINOM[k][j] * mu[k - j], &raw[j], &mut v);
            }
            derivs.push(v);
        }
        Ok(NormalizedFeature { theta, derivs })
    }

    /// `φ_T(θ)` alone.
    pub fn atom(&self, theta: f64) -> Result<Vec<f64>> {
        Ok(self.normalized_feature(theta, 0)?.derivs.swap_remove(0))
    }

    /// `g_T(θ) = ‖∂_θ φ_T(θ)‖²`.
    pub fn g(&self, theta: f64) -> Result<f64> {
        let f = self.normalized_feature(theta, 1)?;
        let g = self.measure.inner_unchecked(f.d(1), f.d(1));
        if !(g > 0.0) {
            return Err(Error::Positivity { theta, value: g });
        }
        Ok(g)
    }

    /// Covariant derivatives of the feature map at θ, with `g_T`, `g_T'`, `g_T''`
    /// assembled from the analytic feature derivatives.
    pub fn covariant_feature(&self, theta: f64) -> Result<CovariantFeature> {
        let f = self.normalized_feature(theta, 3)?;
        let m = &self.measure;
        let (p1, p2, p3) = (f.d(1), f.d(2), f.d(3));
        let g = m.inner_unchecked(p1, p1);
        if !(g > 0.0) {
            return Err(Error::Positivity { theta, value: g });
        }
        let dg = 2.0 * m.inner_unchecked(p2, p1);
        let d2g = 2.0 * m.inner_unchecked(p3, p1) + 2.0 * m.inner_unchecked(p2, p2);
        let n = m.len();
        let gs = g.sqrt();
        let mut c1 = vec![0.0; n];
        axpy(1.0 / gs, p1, &mut c1);
        let mut c2 = vec![0.0; n];
        axpy(1.0 / g, p2, &mut c2);
        axpy(-0.5 * dg / (g * g), p1, &mut c2);
        let mut c3 = vec![0.0; n];
        let g32 = g * gs;
        axpy(1.0 / g32, p3, &mut c3);
        axpy(-1.5 * dg / (g * g32), p2, &mut c3);
        axpy(dg * dg / (g * g * g32) - 0.5 * d2g / (g * g32), p1, &mut c3);
        let NormalizedFeature { mut derivs, .. } = f;
        let c0 = derivs.swap_remove(0);
        Ok(CovariantFeature {
            theta,
            g,
            dg,
            d2g,
            cov: [c0, c1, c2, c3],
        })
    }

    /// `𝒦_T^{[i,j]}(θ, θ') = ⟨D̃_i[φ_T](θ), D̃_j[φ_T](θ')⟩`.
    pub fn empirical_kernel(&self, theta: f64, theta_p: f64, i: usize, j: usize) -> Result<f64> {
        if i > 3 || j > 3 {
            return Err(Error::Domain(
                "covariant orders are limited to 0..=3".into(),
            ));
        }
        if i == 0 && j == 0 {
            let a = self.atom(theta)?;
            let b = self.atom(theta_p)?;
            return Ok(self.measure.inner_unchecked(&a, &b));
        }
        let a = self.covariant_feature(theta)?;
        let b = self.covariant_feature(theta_p)?;
        Ok(self.measure.inner_unchecked(&a.cov[i], &b.cov[j]))
    }

    /// `𝒦_T^{[i,j]}` between precomputed covariant features.
    pub fn kernel_between(
        &self,
        a: &CovariantFeature,
        b: &CovariantFeature,
        i: usize,
        j: usize,
    ) -> f64 {
        dot(&a.cov[i], &b.cov[j]) * self.measure.weight()
    }

    /// Primitive of `√g_T` tabulated at step `σ_T/50`.
    pub fn metric(&self) -> Result<MetricAccumulator> {
        MetricAccumulator::build(self, self.scale() / 50.0)
    }
}

/// `(σ_T, b_T)` for the schedule `b_T = log T`, `σ_T = 1/√(ξ log T)`.
pub fn gaussian_schedule_params(resolution: usize, shrink: f64) -> Result<(f64, f64)> {
    if resolution < 3 || !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::Domain(format!(
            "schedule needs T >= 3 and ξ in (0, 1), got T = {resolution}, ξ = {shrink}"
        )));
    }
    let lt = (resolution as f64).ln();
    Ok((1.0 / (shrink * lt).sqrt(), lt))
}

/// Tabulated `G_T`, a primitive of `√g_T` on `Θ_T`, and the metric `𝔡_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAccumulator {
    nodes: Vec<f64>,
    primitive: Vec<f64>,
    sqrt_g: Vec<f64>,
    window: ThetaWindow,
}

impl MetricAccumulator {
    /// Trapezoid quadrature of `√g_T` on nodes spaced at most `step` apart.
    pub fn build(dict: &Dictionary, step: f64) -> Result<Self> {
        let window = *dict.window();
        let n = (window.length() / step).ceil().max(1.0) as usize;
        let nodes: Vec<f64> = (0..=n)
            .map(|k| window.lo + window.length() * k as f64 / n as f64)
            .collect();
        let sqrt_g = nodes
            .iter()
            .map(|&t| {
                let t = if window.domain == Domain::Torus {
                    wrap_unit(t)
                } else {
                    t
                };
                dict.g(t).map(f64::sqrt)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_samples(nodes, sqrt_g, window))
    }

    /// Builds the table from `√g` samples on increasing nodes.
    pub fn from_samples(nodes: Vec<f64>, sqrt_g: Vec<f64>, window: ThetaWindow) -> Self {
        let mut primitive = Vec::with_capacity(nodes.len());
        primitive.push(0.0);
        for k in 1..nodes.len() {
            let h = nodes[k] - nodes[k - 1];
            let prev = primitive[k - 1];
            primitive.push(prev + 0.5 * h * (sqrt_g[k] + sqrt_g[k - 1]));
        }
        Self {
            nodes,
            primitive,
            sqrt_g,
            window,
        }
    }

    pub fn window(&self) -> &ThetaWindow {
        &self.window
    }

    /// `g_T` at the table nodes.
    pub fn g_samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.sqrt_g)
            .map(|(&t, &s)| (t, s * s))
    }

    fn interp(&self, theta: f64) -> f64 {
        let lo = self.nodes[0];
        let hi = *self.nodes.last().unwrap();
        let t = theta.clamp(lo, hi);
        let n = self.nodes.len() - 1;
        let pos = ((t - lo) / (hi - lo) * n as f64).floor() as usize;
        let k = pos.min(n - 1);
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let w = if b > a { (t - a) / (b - a) } else { 0.0 };
        self.primitive[k] + w * (self.primitive[k + 1] - self.primitive[k])
    }

    /// `G_T(θ)`; on the torus, extended quasi-periodically.
    pub fn primitive(&self, theta: f64) -> f64 {
        match self.window.domain {
            Domain::RealLine => self.interp(theta),
            Domain::Torus => {
                let turns = theta.floor();
                let total = *self.primitive.last().unwrap();
                self.interp(theta - turns) + turns * total
            }
        }
    }

    /// `𝔡_T(θ, θ') = |G_T(θ) - G_T(θ')|`.
    pub fn distance(&self, theta: f64, theta_p: f64) -> Result<f64> {
        for t in [theta, theta_p] {
            if !t.is_finite() || !self.window.contains(t) {
                return Err(Error::Domain(format!(
                    "theta = {t} lies outside [{}, {}]",
                    self.window.lo, self.window.hi
                )));
            }
        }
        Ok(match self.window.domain {
            Domain::RealLine => (self.interp(theta) - self.interp(theta_p)).abs(),
            Domain::Torus => {
                let base = wrap_unit(theta_p);
                let other = base + wrap_half(theta - theta_p);
                (self.primitive(other) - self.primitive(base)).abs()
            }
        })
    }
}

/// Free-function form of [`MetricAccumulator::distance`].
pub fn metric_distance(acc: &MetricAccumulator, theta: f64, theta_p: f64) -> Result<f64> {
    acc.distance(theta, theta_p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(dict: &Dictionary, theta: f64, order: usize, h: f64, tol: f64) {
        let f = dict.normalized_feature(theta, 3).unwrap();
        let plus = dict.normalized_feature(theta + h, 3).unwrap();
        let minus = dict.normalized_feature(theta - h, 3).unwrap();
        let analytic = f.d(order + 1);
        let scale = analytic.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for j in 0..analytic.len() {
            let fd = (plus.d(order)[j] - minus.d(order)[j]) / (2.0 * h);
            assert!(
                (fd - analytic[j]).abs() <= tol * scale,
                "order {order} sample {j}: fd {fd} analytic {}",
                analytic[j]
            );
        }
    }

    #[test]
    fn gaussian_features_have_unit_norm_and_orthogonal_derivative() {
        let d = Dictionary::gaussian(0.4, 5.0, 400, 0.3).unwrap();
        for theta in [-2.5, -0.3, 0.0, 1.7, 3.4] {
            let f = d.normalized_feature(theta, 1).unwrap();
            let m = d.measure();
            assert!((m.norm_sq(f.values()).unwrap() - 1.0).abs() < 1e-10);
            assert!(m.inner(f.values(), f.d(1)).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_template_is_unit_in_lebesgue_norm() {
        let fam = FeatureFamily::Gaussian { sigma: 0.7 };
        assert!((fam.lebesgue_norm_sq() - 1.0).abs() < 1e-10);
        let fam = FeatureFamily::Dirichlet { bandwidth: 31 };
        assert!((fam.lebesgue_norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn template_derivatives_match_finite_differences() {
        for fam in [
            FeatureFamily::Gaussian { sigma: 0.6 },
            FeatureFamily::Dirichlet { bandwidth: 31 },
        ] {
            let h = 1e-5 * fam.scale();
            for t in [-0.41, -0.13, -0.02, 0.004, 0.07, 0.29] {
                for i in 0..3 {
                    let fd = (fam.eval(t + h, i) - fam.eval(t - h, i)) / (2.0 * h);
                    let an = fam.eval(t, i + 1);
                    let scale = fam.eval(0.0, 0).abs() / fam.scale().powi(i as i32 + 1);
                    assert!(
                        (fd - an).abs() <= 1e-6 * scale.max(an.abs()),
                        "{fam:?} t={t} order={i}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn dirichlet_first_derivative_matches_finite_differences() {
        let d = Dictionary::dirichlet_basis(31).unwrap();
        fd_check(&d, 0.3, 0, 1e-6, 1e-6);
        fd_check(&d, 0.3, 1, 1e-6, 1e-6);
        fd_check(&d, 0.3, 2, 1e-6, 1e-6);
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let d = Dictionary::gaussian(0.5, 4.0, 300, 0.2).unwrap();
        for theta in [-1.1, 0.37, 2.9] {
            for order in 0..3 {
                fd_check(&d, theta, order, 1e-5, 1e-6);
            }
        }
    }

    #[test]
    fn dense_gaussian_kernel_matches_continuum_limit() {
        let d = Dictionary::gaussian(1.0, 12.0, 24_000, 0.5).unwrap();
        let k = d.empirical_kernel(0.0, 0.7, 0, 0).unwrap();
        assert!((k - (-0.49f64 / 4.0).exp()).abs() < 1e-3, "{k}");
    }

    #[test]
    fn dirichlet_kernel_closed_form() {
        let d = Dictionary::dirichlet_basis(31).unwrap();
        for (a, b) in [(0.1, 0.37), (0.9, 0.05), (0.5, 0.5001), (0.2, 0.7)] {
            let u = a - b;
            let expected = (31.0 * PI * u).sin() / (31.0 * (PI * u).sin());
            let k = d.empirical_kernel(a, b, 0, 0).unwrap();
            assert!((k - expected).abs() < 1e-10, "{a} {b}: {k} vs {expected}");
        }
    }

    #[test]
    fn torus_grid_reproduces_the_continuum_dirichlet_kernel() {
        let grid = Dictionary::dirichlet_grid(31, 40).unwrap();
        let basis = Dictionary::dirichlet_basis(31).unwrap();
        for (a, b) in [(0.1, 0.37), (0.63, 0.05), (0.25, 0.26)] {
            for (i, j) in [(0, 0), (1, 0), (1, 2), (3, 3)] {
                let kg = grid.empirical_kernel(a, b, i, j).unwrap();
                let kb = basis.empirical_kernel(a, b, i, j).unwrap();
                assert!((kg - kb).abs() < 1e-9, "({i},{j}) {kg} vs {kb}");
            }
        }
    }

    #[test]
    fn diagonal_identities() {
        let dicts = [
            Dictionary::gaussian(0.5, 5.0, 256, 0.5).unwrap(),
            Dictionary::dirichlet_basis(15).unwrap(),
        ];
        for d in &dicts {
            for theta in [0.0, 0.2, 0.45] {
                assert!((d.empirical_kernel(theta, theta, 0, 0).unwrap() - 1.0).abs() < 1e-12);
                assert!((d.empirical_kernel(theta, theta, 1, 1).unwrap() - 1.0).abs() < 1e-8);
                assert!(d.empirical_kernel(theta, theta, 3, 3).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn dirichlet_metric_is_constant() {
        let t = 31.0f64;
        let d = Dictionary::dirichlet_basis(31).unwrap();
        let ginf = PI * PI / 3.0;
        for theta in [0.0, 0.13, 0.77] {
            let g = d.g(theta).unwrap();
            assert!((g / (ginf * (t * t - 1.0)) - 1.0).abs() < 1e-6);
        }
        let acc = d.metric().unwrap();
        let dist = acc.distance(0.1, 0.14).unwrap();
        assert!((dist - (ginf * (t * t - 1.0)).sqrt() * 0.04).abs() < 1e-6);
        // the short way round the circle
        let wrapped = acc.distance(0.98, 0.03).unwrap();
        assert!((wrapped - (ginf * (t * t - 1.0)).sqrt() * 0.05).abs() < 1e-6);
        assert_eq!(acc.distance(0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_metric_is_nearly_euclidean_for_dense_grids() {
        let sigma = 0.5;
        let d = Dictionary::gaussian(sigma, 8.0, 4000, 0.5).unwrap();
        let acc = d.metric().unwrap();
        for u in [0.01, 0.05, 0.1] {
            let dist = acc.distance(0.0, u).unwrap();
            let expected = (0.5f64).sqrt() * u / sigma;
            assert!((dist / expected - 1.0).abs() < 0.01, "{dist} vs {expected}");
        }
    }

    #[test]
    fn out_of_window_is_a_domain_error() {
        let d = Dictionary::gaussian(0.5, 4.0, 100, 0.5).unwrap();
        assert!(matches!(d.atom(3.0), Err(Error::Domain(_))));
        let acc = d.metric().unwrap();
        assert!(matches!(acc.distance(0.0, 2.5), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_norm_feature_is_degenerate() {
        // narrow spike far from every grid point
        let fam = FeatureFamily::Gaussian { sigma: 1e-3 };
        let m = ObservationMeasure::regular_grid(-1.0, 1.0, 4).unwrap();
        let d = Dictionary::new(fam, m, ThetaWindow::interval(-1.0, 1.0)).unwrap();
        assert!(matches!(d.atom(0.25), Err(Error::DegenerateFeature { .. })));
    }
}
