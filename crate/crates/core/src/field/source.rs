use num_complex::Complex64;

use super::{ComplexField, Grid};
use crate::error::{config_err, Error, Result};

/// Gaussian spot `∝ exp(−|x−center|²/waist²)`, normalized to unit power.
pub fn gaussian_source(
    waist: f64,
    center: (f64, f64),
    grid: &Grid,
    wavelength: f64,
) -> Result<ComplexField> {
    if !(waist > 0.0 && waist.is_finite()) {
        return Err(config_err("waist", format!("{waist} must be positive")));
    }
    if grid.pitch > waist / 2.0 {
        return Err(Error::UnderResolved {
            what: format!("Gaussian waist {waist:.3e} m"),
            required_pitch: waist / 2.0,
            pitch: grid.pitch,
        });
    }
    let inv = 1.0 / (waist * waist);
    let mut field = ComplexField::from_fn(*grid, wavelength, |x, y| {
        let dx = x - center.0;
        let dy = y - center.1;
        Complex64::new((-(dx * dx + dy * dy) * inv).exp(), 0.0)
    })?;
    let p = field.power();
    if !(p > 0.0) {
        return Err(config_err("center", "Gaussian lies outside the grid"));
    }
    let s = 1.0 / p.sqrt();
    field.values_mut().mapv_inplace(|v| v * s);
    Ok(field)
}

/// Unit-amplitude plane wave `exp(i·(qx·x + qy·y))`.
pub fn plane_wave(grid: &Grid, wavelength: f64, q: (f64, f64)) -> Result<ComplexField> {
    ComplexField::from_fn(*grid, wavelength, |x, y| Complex64::from_polar(1.0, q.0 * x + q.1 * y))
}
