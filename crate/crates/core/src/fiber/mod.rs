//! Scalar LP eigenmodes of step-index and parabolic graded-index fibers.
//!
//! Modes are real: each azimuthal order `l > 0` contributes a `cos(lφ)` and a
//! `sin(lφ)` mode sharing one propagation constant. The fiber axis is the
//! physical point `(0, 0)` of the sampling grid.

mod basis;
mod cache;
mod dispersion;
pub mod radial;

pub use basis::solve_modes;
pub use cache::{cache_key, cache_path, load_basis, save_basis, solve_modes_cached};
pub use dispersion::{beta_derivatives, dispersion_table, DispersionTable, ModeDispersion};
pub(crate) use dispersion::{deficit_of, deficits_at};

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{config_err, Error, Result};
use crate::field::{ComplexField, Grid};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular frequency of a vacuum wavelength.
pub fn omega_of(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / wavelength
}

/// Vacuum wavelength of an angular frequency.
pub fn wavelength_of(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / omega
}

/// Linearized conversion `Δω = −2πc·Δλ/λ₀²`.
pub fn detuning_omega(lambda0: f64, delta_lambda: f64) -> f64 {
    -2.0 * std::f64::consts::PI * SPEED_OF_LIGHT * delta_lambda / (lambda0 * lambda0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexProfile {
    Step,
    /// Parabolic core, `n²(r) = n_core² − NA²·(r/a)²`, uniform cladding.
    Graded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberSpec {
    pub core_radius: f64,
    pub numerical_aperture: f64,
    pub profile: IndexProfile,
    pub cladding_index: f64,
    pub length: f64,
}

impl FiberSpec {
    /// Used whenever only the NA is known.
    pub const DEFAULT_CLADDING_INDEX: f64 = 1.45;

    pub fn new(
        core_radius: f64,
        numerical_aperture: f64,
        profile: IndexProfile,
        cladding_index: f64,
        length: f64,
    ) -> Result<Self> {
        if !(core_radius > 0.0 && core_radius.is_finite()) {
            return Err(config_err("fiber.core_radius", format!("{core_radius} must be positive")));
        }
        if !(cladding_index > 0.0 && cladding_index.is_finite()) {
            return Err(config_err("fiber.cladding_index", format!("{cladding_index} must be positive")));
        }
        if !(numerical_aperture > 0.0 && numerical_aperture < cladding_index) {
            return Err(config_err(
                "fiber.numerical_aperture",
                format!("{numerical_aperture} must lie in (0, cladding index {cladding_index})"),
            ));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(config_err("fiber.length", format!("{length} must be positive")));
        }
        Ok(Self { core_radius, numerical_aperture, profile, cladding_index, length })
    }

    pub fn step_index(core_radius: f64, numerical_aperture: f64, length: f64) -> Result<Self> {
        Self::new(core_radius, numerical_aperture, IndexProfile::Step, Self::DEFAULT_CLADDING_INDEX, length)
    }

    pub fn graded_index(core_radius: f64, numerical_aperture: f64, length: f64) -> Result<Self> {
        Self::new(core_radius, numerical_aperture, IndexProfile::Graded, Self::DEFAULT_CLADDING_INDEX, length)
    }

    pub fn with_length(self, length: f64) -> Result<Self> {
        Self::new(self.core_radius, self.numerical_aperture, self.profile, self.cladding_index, length)
    }

    /// On-axis core index.
    pub fn core_index(&self) -> f64 {
        self.cladding_index.hypot(self.numerical_aperture)
    }

    pub fn v_number(&self, wavelength: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.core_radius * self.numerical_aperture / wavelength
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberMode {
    pub l: u32,
    pub p: u32,
    pub parity: Parity,
    /// Propagation constant in rad/m.
    pub beta: f64,
    /// Transverse eigenvalue `k²n_core² − β²` in rad²/m².
    pub mu: f64,
}

impl FiberMode {
    /// `k·n_core − β`, computed without cancellation.
    pub fn deficit(&self, wavelength: f64, core_index: f64) -> f64 {
        let kn = 2.0 * std::f64::consts::PI / wavelength * core_index;
        self.mu / (kn + self.beta)
    }

    pub fn label(&self) -> String {
        let par = match self.parity {
            Parity::Cos => "cos",
            Parity::Sin => "sin",
        };
        if self.l == 0 {
            format!("LP0{}", self.p)
        } else {
            format!("LP{}{}-{par}", self.l, self.p)
        }
    }
}

/// Real orthonormal modes sampled on one grid at one wavelength.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    fiber: FiberSpec,
    wavelength: f64,
    grid: Grid,
    modes: Vec<FiberMode>,
    /// One row per mode, row-major samples of the grid.
    profiles: Array2<f64>,
}

impl ModeBasis {
    pub(crate) fn from_parts(
        fiber: FiberSpec,
        wavelength: f64,
        grid: Grid,
        modes: Vec<FiberMode>,
        profiles: Array2<f64>,
    ) -> Self {
        debug_assert_eq!(profiles.dim(), (modes.len(), grid.len()));
        Self { fiber, wavelength, grid, modes, profiles }
    }

    pub fn fiber(&self) -> &FiberSpec {
        &self.fiber
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[FiberMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `n_modes × n_pixels` matrix of real samples.
    pub fn profiles(&self) -> &Array2<f64> {
        &self.profiles
    }

    /// Mode `n` as a field (zero imaginary part).
    pub fn profile(&self, n: usize) -> ComplexField {
        let values = self
            .profiles
            .row(n)
            .mapv(|v| Complex64::new(v, 0.0))
            .into_shape_with_order((self.grid.rows, self.grid.cols))
            .expect("profile row has grid length");
        ComplexField::new(self.grid, self.wavelength, values).expect("basis grid is valid")
    }

    /// `∫ f_n f_m` for all pairs.
    pub fn gram(&self) -> Array2<f64> {
        let p2 = self.grid.pitch * self.grid.pitch;
        self.profiles.dot(&self.profiles.t()) * p2
    }

    /// Integer class of the D4 symmetry group the mode transforms under on a
    /// centered grid. Modes of different classes are exactly orthogonal.
    pub(crate) fn symmetry_class(mode: &FiberMode) -> usize {
        let l = match mode.l % 4 {
            0 => 0,
            2 => 1,
            _ => 2,
        };
        match mode.parity {
            Parity::Cos => l,
            Parity::Sin => 3 + l,
        }
    }

    /// Mode indices grouped by D4 class when the grid is centered on the
    /// fiber axis (classes are then mutually orthogonal), else one group.
    pub(crate) fn symmetry_blocks(&self) -> Vec<Vec<usize>> {
        let g = &self.grid;
        if g.origin == (0.0, 0.0) && g.rows == g.cols {
            (0..6)
                .map(|c| (0..self.len()).filter(|&n| Self::symmetry_class(&self.modes[n]) == c).collect())
                .collect()
        } else {
            vec![(0..self.len()).collect()]
        }
    }

    pub(crate) fn check_field(&self, field: &ComplexField) -> Result<()> {
        self.grid.check_congruent(field.grid(), "field vs mode basis")?;
        if (field.wavelength() - self.wavelength).abs() > 1e-12 * self.wavelength {
            return Err(Error::GridMismatch(format!(
                "field wavelength {:.6e} m vs basis wavelength {:.6e} m",
                field.wavelength(),
                self.wavelength
            )));
        }
        Ok(())
    }

    /// `c_n = ∫ f_n E`.
    pub fn decompose(&self, field: &ComplexField) -> Result<Array1<Complex64>> {
        self.check_field(field)?;
        let p2 = self.grid.pitch * self.grid.pitch;
        let n = self.grid.len();
        let mut stacked = Array2::<f64>::zeros((n, 2));
        for (i, v) in field.values().iter().enumerate() {
            stacked[[i, 0]] = v.re;
            stacked[[i, 1]] = v.im;
        }
        let c = self.profiles.dot(&stacked);
        Ok(c.axis_iter(Axis(0)).map(|r| Complex64::new(r[0], r[1]) * p2).collect())
    }

    /// Coefficients of several fields at once: row `i` holds `∫ f_n E_i`.
    pub fn decompose_many(&self, fields: &[ComplexField]) -> Result<Array2<Complex64>> {
        let npix = self.grid.len();
        let mut stacked = Array2::<f64>::zeros((npix, 2 * fields.len()));
        for (j, field) in fields.iter().enumerate() {
            self.check_field(field)?;
            for (i, v) in field.values().iter().enumerate() {
                stacked[[i, 2 * j]] = v.re;
                stacked[[i, 2 * j + 1]] = v.im;
            }
        }
        let c = self.profiles.dot(&stacked);
        let p2 = self.grid.pitch * self.grid.pitch;
        Ok(Array2::from_shape_fn((fields.len(), self.len()), |(j, n)| {
            Complex64::new(c[[n, 2 * j]], c[[n, 2 * j + 1]]) * p2
        }))
    }

    /// `Σ c_n f_n`.
    pub fn compose(&self, coefficients: &Array1<Complex64>) -> Result<ComplexField> {
        if coefficients.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: coefficients.len() });
        }
        let mut stacked = Array2::<f64>::zeros((2, self.len()));
        for (i, c) in coefficients.iter().enumerate() {
            stacked[[0, i]] = c.re;
            stacked[[1, i]] = c.im;
        }
        let e = stacked.dot(&self.profiles);
        let values = Array2::from_shape_fn((self.grid.rows, self.grid.cols), |(r, c)| {
            let i = r * self.grid.cols + c;
            Complex64::new(e[[0, i]], e[[1, i]])
        });
        ComplexField::new(self.grid, self.wavelength, values)
    }

    /// Fields from several coefficient vectors, one per row of `coefficients`.
    pub fn compose_many(&self, coefficients: &Array2<Complex64>) -> Result<Vec<ComplexField>> {
        if coefficients.ncols() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: coefficients.ncols() });
        }
        let k = coefficients.nrows();
        let mut stacked = Array2::<f64>::zeros((2 * k, self.len()));
        for ((j, i), c) in coefficients.indexed_iter() {
            stacked[[2 * j, i]] = c.re;
            stacked[[2 * j + 1, i]] = c.im;
        }
        let e = stacked.dot(&self.profiles);
        (0..k)
            .map(|j| {
                let values = Array2::from_shape_fn((self.grid.rows, self.grid.cols), |(r, c)| {
                    let i = r * self.grid.cols + c;
                    Complex64::new(e[[2 * j, i]], e[[2 * j + 1, i]])
                });
                ComplexField::new(self.grid, self.wavelength, values)
            })
            .collect()
    }

    /// Phases `e^{iβ_n L}`.
    pub fn phases(&self, length: f64) -> Array1<Complex64> {
        self.modes
            .iter()
            .map(|m| Complex64::from_polar(1.0, m.beta * length))
            .collect()
    }
}

/// Projection coefficients of `field` onto `basis`.
pub fn modal_decompose(field: &ComplexField, basis: &ModeBasis) -> Result<Array1<Complex64>> {
    basis.decompose(field)
}

/// Field synthesized from modal coefficients.
pub fn modal_compose(coefficients: &Array1<Complex64>, basis: &ModeBasis) -> Result<ComplexField> {
    basis.compose(coefficients)
}

/// `c_n → c_n e^{iβ_n L}`.
pub fn propagate_in_fiber(
    coefficients: &Array1<Complex64>,
    basis: &ModeBasis,
    length: f64,
) -> Result<Array1<Complex64>> {
    if coefficients.len() != basis.len() {
        return Err(Error::LengthMismatch { expected: basis.len(), got: coefficients.len() });
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(config_err("length", format!("{length} must be non-negative")));
    }
    Ok(coefficients * &basis.phases(length))
}
