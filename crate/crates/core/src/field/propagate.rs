use ndarray::Array2;
use num_complex::Complex64;

use super::fft::{centered_dft2, fft2_inplace, fft_frequencies, Direction};
use super::{ComplexField, Grid};
use crate::error::{config_err, Error, Result};

/// Advances a field by `dz` with the transfer function `exp(i·dz·√(k²−q²))`.
/// Spatial frequencies with `|q| ≥ k` are discarded.
pub fn angular_spectrum_propagate(field: &ComplexField, dz: f64) -> ComplexField {
    if dz == 0.0 {
        return field.clone();
    }
    let grid = *field.grid();
    let k = field.wavenumber();
    let k2 = k * k;
    let qx = fft_frequencies(grid.cols, grid.pitch);
    let qy = fft_frequencies(grid.rows, grid.pitch);
    let mut spec = field.values().clone();
    fft2_inplace(&mut spec, Direction::Forward);
    let norm = 1.0 / grid.len() as f64;
    for ((r, c), v) in spec.indexed_iter_mut() {
        let q2 = qx[c] * qx[c] + qy[r] * qy[r];
        *v = if q2 < k2 {
            *v * Complex64::from_polar(norm, dz * (k2 - q2).sqrt())
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    fft2_inplace(&mut spec, Direction::Inverse);
    ComplexField::new(grid, field.wavelength(), spec).expect("same grid")
}

/// Propagates by `dz` at the field's wavelength, switches to `wavelength`,
/// and propagates by `dz` again, in one spectral multiplication. This is the
/// free-space leg of a frequency-switching reflection.
pub fn angular_spectrum_round_trip(field: &ComplexField, dz: f64, wavelength: f64) -> Result<ComplexField> {
    if dz == 0.0 {
        return field.clone().with_wavelength(wavelength);
    }
    let grid = *field.grid();
    let k1 = field.wavenumber();
    let k2 = 2.0 * std::f64::consts::PI / wavelength;
    let qx = fft_frequencies(grid.cols, grid.pitch);
    let qy = fft_frequencies(grid.rows, grid.pitch);
    let mut spec = field.values().clone();
    fft2_inplace(&mut spec, Direction::Forward);
    let norm = 1.0 / grid.len() as f64;
    let kmin2 = k1.min(k2).powi(2);
    for ((r, c), v) in spec.indexed_iter_mut() {
        let q2 = qx[c] * qx[c] + qy[r] * qy[r];
        *v = if q2 < kmin2 {
            *v * Complex64::from_polar(norm, dz * ((k1 * k1 - q2).sqrt() + (k2 * k2 - q2).sqrt()))
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    fft2_inplace(&mut spec, Direction::Inverse);
    ComplexField::new(grid, wavelength, spec)
}

/// Embeds `field` in a larger zero-filled `rows × cols` grid with the same
/// pitch and physical center.
pub fn zero_pad(field: &ComplexField, rows: usize, cols: usize) -> Result<ComplexField> {
    let g = *field.grid();
    if rows < g.rows || cols < g.cols || (rows - g.rows) % 2 != 0 || (cols - g.cols) % 2 != 0 {
        return Err(Error::GridMismatch(format!(
            "cannot center {}x{} inside {rows}x{cols}",
            g.rows, g.cols
        )));
    }
    let big = Grid::new(rows, cols, g.pitch, g.origin)?;
    let (r0, c0) = ((rows - g.rows) / 2, (cols - g.cols) / 2);
    let mut values = Array2::zeros((rows, cols));
    values
        .slice_mut(ndarray::s![r0..r0 + g.rows, c0..c0 + g.cols])
        .assign(field.values());
    ComplexField::new(big, field.wavelength(), values)
}

/// Inverse of [`zero_pad`]: the central window matching `grid`.
pub fn crop(field: &ComplexField, grid: &Grid) -> Result<ComplexField> {
    let g = *field.grid();
    if grid.rows > g.rows || grid.cols > g.cols || (g.rows - grid.rows) % 2 != 0 || (g.cols - grid.cols) % 2 != 0 {
        return Err(Error::GridMismatch(format!(
            "cannot crop {}x{} to {}x{}",
            g.rows, g.cols, grid.rows, grid.cols
        )));
    }
    let (r0, c0) = ((g.rows - grid.rows) / 2, (g.cols - grid.cols) / 2);
    let values = field
        .values()
        .slice(ndarray::s![r0..r0 + grid.rows, c0..c0 + grid.cols])
        .to_owned();
    ComplexField::new(*grid, field.wavelength(), values)
}

/// Field in the back focal plane of a thin lens of focal length `f`:
/// `E′(x′) = (1/(iλf))·∫E(x)·e^{−i k x·x′/f} dx`.
///
/// The output grid has pitch `λf/(N·pitch)` and is centered on the optical
/// axis. Requires a square input grid so that the output pitch is the same
/// along both axes.
pub fn lens_far_field(field: &ComplexField, focal_length: f64) -> Result<ComplexField> {
    check_focal(focal_length)?;
    let grid = *field.grid();
    if grid.rows != grid.cols {
        return Err(Error::GridMismatch(format!(
            "lens far field needs a square grid, got {}x{}",
            grid.rows, grid.cols
        )));
    }
    let lambda = field.wavelength();
    let n = grid.cols as f64;
    let out_pitch = lambda * focal_length / (n * grid.pitch);
    let out_grid = Grid::new(grid.rows, grid.cols, out_pitch, (0.0, 0.0))?;
    let mut out = centered_dft2(field.values());

    let scale = Complex64::new(0.0, -grid.pitch * grid.pitch / (lambda * focal_length));
    let k = field.wavenumber();
    let (x0, y0) = grid.origin;
    let shifted = x0 != 0.0 || y0 != 0.0;
    for ((r, c), v) in out.indexed_iter_mut() {
        let mut s = scale;
        if shifted {
            let ph = -k * (x0 * out_grid.x(c) + y0 * out_grid.y(r)) / focal_length;
            s *= Complex64::from_polar(1.0, ph);
        }
        *v *= s;
    }
    ComplexField::new(out_grid, lambda, out)
}

/// Lens far field evaluated on an arbitrary output grid by a separable
/// matrix Fourier transform. Fields at different wavelengths land on common
/// physical coordinates, which the FFT-based [`lens_far_field`] cannot do.
pub fn far_field_on_grid(
    field: &ComplexField,
    focal_length: f64,
    out_grid: &Grid,
) -> Result<ComplexField> {
    check_focal(focal_length)?;
    let grid = *field.grid();
    let lambda = field.wavelength();
    let kf = field.wavenumber() / focal_length;
    let wy = Array2::from_shape_fn((out_grid.rows, grid.rows), |(a, r)| {
        Complex64::from_polar(1.0, -kf * grid.y(r) * out_grid.y(a))
    });
    let wxt = Array2::from_shape_fn((grid.cols, out_grid.cols), |(c, b)| {
        Complex64::from_polar(1.0, -kf * grid.x(c) * out_grid.x(b))
    });
    let tmp = wy.dot(field.values());
    let mut out = tmp.dot(&wxt);
    let scale = Complex64::new(0.0, -grid.pitch * grid.pitch / (lambda * focal_length));
    out.mapv_inplace(|v| v * scale);
    ComplexField::new(*out_grid, lambda, out)
}

fn check_focal(focal_length: f64) -> Result<()> {
    if focal_length > 0.0 && focal_length.is_finite() {
        Ok(())
    } else {
        Err(config_err("focal_length", format!("{focal_length} must be positive")))
    }
}
