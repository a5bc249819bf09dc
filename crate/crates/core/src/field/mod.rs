//! Sampled scalar fields, free-space and lens propagation, sources and
//! speckle statistics.
//!
//! Sample `(row, col)` of an `rows × cols` array sits at
//! `x = origin.0 + (col − (cols−1)/2)·pitch`, `y = origin.1 + (row − (rows−1)/2)·pitch`,
//! so the array center is the physical point `origin` for both even and odd
//! sizes. Forward Fourier transforms use the kernel `e^{−i q·x}` throughout.

mod fft;
mod propagate;
mod source;
mod stats;

pub use propagate::{
    angular_spectrum_propagate, angular_spectrum_round_trip, crop, far_field_on_grid, lens_far_field, zero_pad,
};
pub use source::{gaussian_source, plane_wave};
pub use stats::{incoherent_sum, pearson_correlation, speckle_contrast};

pub(crate) use fft::{fft2_inplace, fft_frequencies, Direction};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{config_err, Error, Result};

/// Sampling geometry shared by fields and intensity maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    /// Sample spacing in meters, identical along x and y.
    pub pitch: f64,
    /// Physical coordinate of the array center in meters.
    pub origin: (f64, f64),
}

impl Grid {
    pub fn new(rows: usize, cols: usize, pitch: f64, origin: (f64, f64)) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(config_err("grid", format!("dimensions {rows}x{cols} must be at least 2x2")));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(config_err("grid.pitch", format!("{pitch} must be positive")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(config_err("grid.origin", "must be finite"));
        }
        Ok(Self { rows, cols, pitch, origin })
    }

    /// Square grid centered on the optical axis.
    pub fn square(size: usize, pitch: f64) -> Result<Self> {
        Self::new(size, size, pitch, (0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, col: usize) -> f64 {
        self.origin.0 + (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn y(&self, row: usize) -> f64 {
        self.origin.1 + (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch
    }

    /// Width and height of the sampled window (`cols·pitch`, `rows·pitch`).
    pub fn extent(&self) -> (f64, f64) {
        (self.cols as f64 * self.pitch, self.rows as f64 * self.pitch)
    }

    /// Same shape, pitch and origin up to rounding.
    pub fn congruent(&self, other: &Grid) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (self.pitch - other.pitch).abs() <= 1e-12 * self.pitch
            && (self.origin.0 - other.origin.0).abs() <= 1e-9 * self.pitch
            && (self.origin.1 - other.origin.1).abs() <= 1e-9 * self.pitch
    }

    pub(crate) fn check_congruent(&self, other: &Grid, context: &str) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{context}: {}x{} @ {:.4e} m vs {}x{} @ {:.4e} m",
                self.rows, self.cols, self.pitch, other.rows, other.cols, other.pitch
            )))
        }
    }
}

/// Complex scalar field sampled on a [`Grid`] at one wavelength.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    wavelength: f64,
    values: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, wavelength: f64, values: Array2<Complex64>) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(config_err("wavelength", format!("{wavelength} must be positive")));
        }
        if values.dim() != (grid.rows, grid.cols) {
            return Err(Error::GridMismatch(format!(
                "array {:?} does not match grid {}x{}",
                values.dim(),
                grid.rows,
                grid.cols
            )));
        }
        Ok(Self { grid, wavelength, values })
    }

    pub fn zeros(grid: Grid, wavelength: f64) -> Result<Self> {
        Self::new(grid, wavelength, Array2::zeros((grid.rows, grid.cols)))
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn from_fn(
        grid: Grid,
        wavelength: f64,
        mut f: impl FnMut(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let values = Array2::from_shape_fn((grid.rows, grid.cols), |(r, c)| f(grid.x(c), grid.y(r)));
        Self::new(grid, wavelength, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pitch(&self) -> f64 {
        self.grid.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    /// Same samples relabelled with another wavelength.
    pub fn with_wavelength(mut self, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(config_err("wavelength", format!("{wavelength} must be positive")));
        }
        self.wavelength = wavelength;
        Ok(self)
    }

    /// `∫|E|² dx dy`, evaluated as `Σ|E|²·pitch²`.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.pitch * self.grid.pitch
    }

    /// `∫ conj(self)·other`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        self.grid.check_congruent(&other.grid, "inner product")?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.pitch * self.grid.pitch)
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.values.mapv_inplace(|v| v * factor);
        self
    }

    pub fn intensity(&self, label: impl Into<String>) -> IntensityMap {
        IntensityMap {
            grid: self.grid,
            values: self.values.mapv(|v| v.norm_sqr()),
            label: label.into(),
        }
    }
}

/// Non-negative intensity image.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityMap {
    grid: Grid,
    values: Array2<f64>,
    label: String,
}

impl IntensityMap {
    pub fn new(grid: Grid, values: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        if values.dim() != (grid.rows, grid.cols) {
            return Err(Error::GridMismatch(format!(
                "array {:?} does not match grid {}x{}",
                values.dim(),
                grid.rows,
                grid.cols
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(config_err("intensity", format!("value {v} is negative or NaN")));
        }
        Ok(Self { grid, values, label: label.into() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pitch(&self) -> f64 {
        self.grid.pitch
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn total(&self) -> f64 {
        self.values.sum() * self.grid.pitch * self.grid.pitch
    }
}

/// Square analysis window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionOfInterest {
    pub center: (f64, f64),
    pub half_width: f64,
}

impl RegionOfInterest {
    pub fn new(center: (f64, f64), half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Roi(format!("half-width {half_width} must be positive")));
        }
        Ok(Self { center, half_width })
    }

    /// Square around the grid origin spanning `fraction` of the smaller
    /// window side.
    pub fn centered_fraction(grid: &Grid, fraction: f64) -> Result<Self> {
        let (w, h) = grid.extent();
        Self::new(grid.origin, 0.5 * fraction * w.min(h))
    }

    /// `(row, col)` indices of the samples inside the window.
    pub fn samples(&self, grid: &Grid) -> Result<Vec<(usize, usize)>> {
        let (w, h) = grid.extent();
        let slack = 1e-9 * grid.pitch;
        let dx = (self.center.0 - grid.origin.0).abs() + self.half_width;
        let dy = (self.center.1 - grid.origin.1).abs() + self.half_width;
        if dx > 0.5 * w + slack || dy > 0.5 * h + slack {
            return Err(Error::Roi(format!(
                "window at ({:.3e}, {:.3e}) with half-width {:.3e} m exceeds the {:.3e} x {:.3e} m field",
                self.center.0, self.center.1, self.half_width, w, h
            )));
        }
        let lim = self.half_width * (1.0 + 1e-12) + slack;
        let cols: Vec<usize> = (0..grid.cols)
            .filter(|&c| (grid.x(c) - self.center.0).abs() <= lim)
            .collect();
        let rows: Vec<usize> = (0..grid.rows)
            .filter(|&r| (grid.y(r) - self.center.1).abs() <= lim)
            .collect();
        let out: Vec<(usize, usize)> = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .collect();
        if out.len() < 4 {
            return Err(Error::Roi(format!("window holds {} samples, need at least 4", out.len())));
        }
        Ok(out)
    }
}
