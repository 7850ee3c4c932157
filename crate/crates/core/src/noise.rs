//! Gaussian noise processes with decay rate `Δ_T`, level `σ̄` and
//! squared-norm variance `Ξ_T`, sampled reproducibly per replicate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measure::{MeasureKind, ObservationMeasure};

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// i.i.d. `N(0, σ̄²)` values at the grid points.
    GridWhite { step: f64, len: usize },
    /// Coefficients `√ξ_k G_k` in an orthonormal basis.
    BasisColored { xi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma_bar: f64,
}

/// `(Δ_T, Ξ_T, 𝔼‖w_T‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSummary {
    pub decay: f64,
    pub xi: f64,
    pub expected_sq_norm: f64,
}

/// Generator for replicate `index` of an experiment seeded with `seed`;
/// streams are independent of the order in which replicates run.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl NoiseModel {
    /// White noise on the grid of `measure`, `Δ_T` equal to the grid weight.
    pub fn grid_white(sigma_bar: f64, measure: &ObservationMeasure) -> Result<Self> {
        check_level(sigma_bar)?;
        if measure.kind() != MeasureKind::RegularGrid {
            return Err(Error::Structural("grid noise needs a grid measure".into()));
        }
        Ok(Self {
            kind: NoiseKind::GridWhite {
                step: measure.weight(),
                len: measure.len(),
            },
            sigma_bar,
        })
    }

    /// Basis noise with the given variance sequence `ξ`.
    pub fn basis_colored(sigma_bar: f64, xi: Vec<f64>) -> Result<Self> {
        check_level(sigma_bar)?;
        if xi.is_empty() || xi.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(
                "ξ must be a nonempty finite nonnegative sequence".into(),
            ));
        }
        Ok(Self {
            kind: NoiseKind::BasisColored { xi },
            sigma_bar,
        })
    }

    /// Truncated white noise `ξ_k = 1/T` on the first `T` basis elements.
    pub fn basis_white(sigma_bar: f64, len: usize) -> Result<Self> {
        Self::basis_colored(sigma_bar, vec![1.0 / len as f64; len])
    }

    /// The matching default model for a measure: grid-white or truncated basis-white.
    pub fn white_for(sigma_bar: f64, measure: &ObservationMeasure) -> Result<Self> {
        match measure.kind() {
            MeasureKind::RegularGrid => Self::grid_white(sigma_bar, measure),
            MeasureKind::BasisContinuum => Self::basis_white(sigma_bar, measure.len()),
        }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            NoiseKind::GridWhite { len, .. } => *len,
            NoiseKind::BasisColored { xi } => xi.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn summary(&self) -> NoiseSummary {
        let s2 = self.sigma_bar * self.sigma_bar;
        match &self.kind {
            NoiseKind::GridWhite { step, len } => NoiseSummary {
                decay: *step,
                xi: 2.0 * s2 * s2 * step * step * *len as f64,
                expected_sq_norm: s2 * step * *len as f64,
            },
            NoiseKind::BasisColored { xi } => NoiseSummary {
                decay: xi.iter().copied().fold(0.0, f64::max),
                xi: 2.0 * s2 * s2 * xi.iter().map(|x| x * x).sum::<f64>(),
                expected_sq_norm: s2 * xi.iter().sum::<f64>(),
            },
        }
    }

    /// `Δ_T`.
    pub fn decay(&self) -> f64 {
        self.summary().decay
    }

    pub fn check_compatible(&self, measure: &ObservationMeasure) -> Result<()> {
        let ok = match &self.kind {
            NoiseKind::GridWhite { step, len } => {
                measure.kind() == MeasureKind::RegularGrid
                    && *len == measure.len()
                    && (step - measure.weight()).abs() <= 1e-12 * step
            }
            NoiseKind::BasisColored { xi } => {
                measure.kind() == MeasureKind::BasisContinuum && xi.len() == measure.len()
            }
        };
        if !ok {
            return Err(Error::Structural(
                "noise model does not match the measure".into(),
            ));
        }
        Ok(())
    }

    /// Draws `w_T` from `rng`.
    pub fn sample_with(
        &self,
        measure: &ObservationMeasure,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        self.check_compatible(measure)?;
        let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        Ok(match &self.kind {
            NoiseKind::GridWhite { len, .. } => {
                (0..*len).map(|_| self.sigma_bar * draw(rng)).collect()
            }
            NoiseKind::BasisColored { xi } => xi
                .iter()
                .map(|x| self.sigma_bar * x.sqrt() * draw(rng))
                .collect(),
        })
    }

    /// Draws `w_T` for replicate `index` of the experiment seeded with `seed`.
    pub fn sample(&self, measure: &ObservationMeasure, seed: u64, index: u64) -> Result<Vec<f64>> {
        self.sample_with(measure, &mut replicate_rng(seed, index))
    }
}

fn check_level(sigma_bar: f64) -> Result<()> {
    if !(sigma_bar >= 0.0) || !sigma_bar.is_finite() {
        return Err(Error::Domain(format!(
            "noise level must be >= 0, got {sigma_bar}"
        )));
    }
    Ok(())
}

/// Free-function form of [`NoiseModel::sample`].
pub fn sample_noise(nm: &NoiseModel, measure: &ObservationMeasure, seed: u64) -> Result<Vec<f64>> {
    nm.sample(measure, seed, 0)
}

/// Free-function form of [`NoiseModel::summary`].
pub fn noise_summary(nm: &NoiseModel) -> NoiseSummary {
    nm.summary()
}
