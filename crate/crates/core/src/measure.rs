//! Observation measures and the `L²(λ_T)` geometry they induce.
//!
//! A function observed under a measure is stored as a plain `Vec<f64>`:
//! grid samples for the grid kind, coefficients in an orthonormal basis for
//! the basis kind. In both cases the inner product is a weighted Euclidean
//! sum, so all downstream linear algebra is exact.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// `λ_T = Δ_T Σ_j δ_{t_j}` on a regular grid.
    RegularGrid,
    /// Lebesgue measure seen through a truncated orthonormal basis.
    BasisContinuum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMeasure {
    kind: MeasureKind,
    points: Vec<f64>,
    weight: f64,
    len: usize,
    periodic: bool,
}

impl ObservationMeasure {
    /// Regular grid `t_j = a + jΔ`, `j = 1..=T`, with `Δ = (b - a)/T`.
    pub fn regular_grid(a: f64, b: f64, resolution: usize) -> Result<Self> {
        if resolution == 0 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!(
                "regular grid needs a < b and T >= 1 (a = {a}, b = {b}, T = {resolution})"
            )));
        }
        let step = (b - a) / resolution as f64;
        let points = (1..=resolution).map(|j| a + j as f64 * step).collect();
        Ok(Self {
            kind: MeasureKind::RegularGrid,
            points,
            weight: step,
            len: resolution,
            periodic: false,
        })
    }

    /// Regular grid on the torus `ℝ/ℤ`: `t_j = j/N`, `j = 0..N`, `Δ = 1/N`.
    pub fn torus_grid(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Domain("torus grid needs N >= 1".into()));
        }
        let step = 1.0 / resolution as f64;
        let points = (0..resolution).map(|j| j as f64 * step).collect();
        Ok(Self {
            kind: MeasureKind::RegularGrid,
            points,
            weight: step,
            len: resolution,
            periodic: true,
        })
    }

    /// Truncated orthonormal basis of the given size (Lebesgue measure on the torus).
    pub fn basis(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Domain("basis needs at least one element".into()));
        }
        Ok(Self {
            kind: MeasureKind::BasisContinuum,
            points: Vec::new(),
            weight: 1.0,
            len,
            periodic: true,
        })
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    /// Number of stored samples or coefficients.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Grid points (empty for the basis kind).
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `Δ_T` for grids, 1 for an orthonormal basis.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Total mass of the measure (grid kind) or the basis size.
    pub fn total_mass(&self) -> f64 {
        self.weight * self.len as f64
    }

    pub fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len {
            return Err(Error::DimensionMismatch {
                expected: self.len,
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `⟨f, g⟩_{L²(λ_T)}`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.inner_unchecked(f, g))
    }

    #[inline]
    pub(crate) fn inner_unchecked(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight * dot(f, g)
    }

    pub fn norm_sq(&self, f: &[f64]) -> Result<f64> {
        self.inner(f, f)
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.norm_sq(f)?.sqrt())
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len]
    }
}

/// Free-function form of [`ObservationMeasure::inner`].
pub fn inner_product(f: &[f64], g: &[f64], measure: &ObservationMeasure) -> Result<f64> {
    measure.inner(f, g)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_one_has_total_mass() {
        let m = ObservationMeasure::regular_grid(-1.0, 1.0, 4).unwrap();
        assert_eq!(m.weight(), 0.5);
        let one = vec![1.0; 4];
        assert!((m.inner(&one, &one).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_norm_is_scaled_l2() {
        let m = ObservationMeasure::regular_grid(0.0, 3.0, 12).unwrap();
        let f: Vec<f64> = (0..12).map(|j| (j as f64).sin() + 0.3).collect();
        let l2 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((m.norm(&f).unwrap() - m.weight().sqrt() * l2).abs() < 1e-14);
    }

    #[test]
    fn random_pairs_match_direct_summation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = ObservationMeasure::regular_grid(-2.0, 2.0, 16).unwrap();
        let f: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle = 0.0;
        for j in 0..16 {
            oracle += 0.25 * f[j] * g[j];
        }
        assert!((m.inner(&f, &g).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn grid_points_are_increasing_with_uniform_step() {
        let m = ObservationMeasure::regular_grid(-3.0, 3.0, 30).unwrap();
        let pts = m.points();
        assert!((pts[0] - (-3.0 + 0.2)).abs() < 1e-14);
        assert!((pts[29] - 3.0).abs() < 1e-12);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let m = ObservationMeasure::basis(5).unwrap();
        let err = m.inner(&[1.0; 5], &[1.0; 4]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 5,
                got: 4
            }
        );
    }
}
