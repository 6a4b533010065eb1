//! Periodic square-lattice fields and the primitives shared by both
//! integrators: finite-difference stencils, seeded Gaussian noise, and
//! eigenvalue-binned power spectra.
//!
//! Fields are stored row-major: site (x, y) lives at index `y*L + x`, and
//! every stencil wraps indices modulo L in both directions.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub mod noise;
pub mod spectrum;
pub mod stencil;

pub use noise::{sample_noise_field, NoiseStream};
pub use spectrum::{power_spectrum, shell_average, SpectrumBin};
pub use stencil::{grad_squared, laplacian};

/// Smallest usable side: the 5-point stencil needs the left/right and
/// up/down neighbors of a site to be distinct from the site itself.
pub const MIN_SIDE: usize = 3;

fn validate_geometry(side: usize, spacing: f64) -> Result<()> {
    if side < MIN_SIDE {
        return Err(Error::InvalidLattice(format!(
            "side {side} is below the minimum {MIN_SIDE}"
        )));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Parameter(format!(
            "lattice spacing must be positive and finite, got {spacing}"
        )));
    }
    Ok(())
}

/// Real scalar field θ(r) on an L×L periodic lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    side: usize,
    spacing: f64,
    time: f64,
    values: Vec<f64>,
}

impl PhaseField {
    /// Identically-zero field at time 0.
    pub fn flat(side: usize, spacing: f64) -> Result<Self> {
        validate_geometry(side, spacing)?;
        Ok(Self {
            side,
            spacing,
            time: 0.0,
            values: vec![0.0; side * side],
        })
    }

    /// Builds a field from raw row-major values, validating geometry,
    /// length, and finiteness.
    pub fn from_values(side: usize, spacing: f64, time: f64, values: Vec<f64>) -> Result<Self> {
        validate_geometry(side, spacing)?;
        if values.len() != side * side {
            return Err(Error::InvalidLattice(format!(
                "expected {} values for side {side}, got {}",
                side * side,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter(
                "field values must all be finite".to_string(),
            ));
        }
        if !time.is_finite() {
            return Err(Error::Parameter(format!("time must be finite, got {time}")));
        }
        Ok(Self {
            side,
            spacing,
            time,
            values,
        })
    }

    /// Internal constructor for operator outputs whose geometry is already
    /// known to be valid; skips the finiteness scan.
    pub(crate) fn raw(side: usize, spacing: f64, time: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), side * side);
        Self {
            side,
            spacing,
            time,
            values,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Flat index of site (x, y); callers keep x, y < L.
    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.side + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = self.idx(x, y);
        self.values[i] = v;
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Complex scalar field ψ(r) on an L×L periodic lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    side: usize,
    spacing: f64,
    time: f64,
    values: Vec<Complex64>,
}

impl ComplexField {
    /// Spatially uniform field at time 0.
    pub fn uniform(side: usize, spacing: f64, value: Complex64) -> Result<Self> {
        validate_geometry(side, spacing)?;
        Ok(Self {
            side,
            spacing,
            time: 0.0,
            values: vec![value; side * side],
        })
    }

    pub fn from_values(
        side: usize,
        spacing: f64,
        time: f64,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        validate_geometry(side, spacing)?;
        if values.len() != side * side {
            return Err(Error::InvalidLattice(format!(
                "expected {} values for side {side}, got {}",
                side * side,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Parameter(
                "field values must all be finite".to_string(),
            ));
        }
        if !time.is_finite() {
            return Err(Error::Parameter(format!("time must be finite, got {time}")));
        }
        Ok(Self {
            side,
            spacing,
            time,
            values,
        })
    }

    pub(crate) fn raw(side: usize, spacing: f64, time: f64, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), side * side);
        Self {
            side,
            spacing,
            time,
            values,
        }
    }

    /// Unit-modulus field e^{iθ} carrying the phase of a real field.
    pub fn from_phase(theta: &PhaseField) -> Self {
        let values = theta
            .values()
            .iter()
            .map(|&t| Complex64::from_polar(1.0, t))
            .collect();
        Self::raw(theta.side(), theta.spacing(), theta.time(), values)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.side + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[self.idx(x, y)]
    }

    pub fn all_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}
