//! Thin phase elements: random diffusers (and multi-core fiber screens built
//! the same way) and blazed gratings, with their classical and two-photon far
//! fields.
//!
//! A thin element of thickness `L(x, y)` and index `n(λ)` multiplies a field
//! at wavenumber `k` by `e^{i(n−1)kL}`. In the advanced-wave picture with the
//! crystal imaged onto the element both photons cross the same point, so the
//! pair sees `e^{i[(n₊−1)k₊ + (n₋−1)k₋]L}`.

mod diffuser;
mod grating;

pub use diffuser::{run_diffuser_study, DiffuserOutput, DiffuserStudy};
pub use grating::{
    grating_order_profile, grating_orders_analytical, grating_orders_numerical, run_grating_study, GratingChannel,
    GratingOrder, GratingRow, GratingStudy, NumericalOrder,
};

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{config_err, Error, Result};
use crate::field::{far_field_on_grid, lens_far_field, ComplexField, Grid, IntensityMap, RegionOfInterest};
use crate::io;

/// Refractive index of the element material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaterialModel {
    Constant { n: f64 },
    /// `n = A + B/λ² + C/λ⁴` with `λ` in µm, `B` in µm², `C` in µm⁴.
    Cauchy { a: f64, b: f64, c: f64 },
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel::Constant { n: 1.5 }
    }
}

impl MaterialModel {
    pub fn index(&self, wavelength: f64) -> f64 {
        match *self {
            MaterialModel::Constant { n } => n,
            MaterialModel::Cauchy { a, b, c } => {
                let l2 = (wavelength * 1e6).powi(2);
                a + b / l2 + c / (l2 * l2)
            }
        }
    }

    /// Checks `n > 1` at both band edges and at the center.
    pub fn validate_band(&self, min_wavelength: f64, max_wavelength: f64) -> Result<()> {
        if !(min_wavelength > 0.0 && max_wavelength >= min_wavelength && max_wavelength.is_finite()) {
            return Err(config_err("material.band", format!("[{min_wavelength}, {max_wavelength}] is not a band")));
        }
        for l in [min_wavelength, 0.5 * (min_wavelength + max_wavelength), max_wavelength] {
            let n = self.index(l);
            if !(n > 1.0 && n.is_finite()) {
                return Err(config_err("material", format!("n({:.1} nm) = {n} must exceed 1", l * 1e9)));
            }
        }
        Ok(())
    }

    fn sidecar_entries(&self) -> Vec<(&'static str, String)> {
        match *self {
            MaterialModel::Constant { n } => vec![("material", "constant".into()), ("n", format!("{n:?}"))],
            MaterialModel::Cauchy { a, b, c } => vec![
                ("material", "cauchy".into()),
                ("cauchy_a", format!("{a:?}")),
                ("cauchy_b_um2", format!("{b:?}")),
                ("cauchy_c_um4", format!("{c:?}")),
            ],
        }
    }
}

impl fmt::Display for MaterialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaterialModel::Constant { n } => write!(f, "constant n={n}"),
            MaterialModel::Cauchy { a, b, c } => write!(f, "cauchy A={a} B={b} um^2 C={c} um^4"),
        }
    }
}

/// Piecewise-constant thickness map on square macro-pixels.
///
/// Macro-pixel `(i, j)` covers field samples `[i·s, (i+1)·s) × [j·s, (j+1)·s)`
/// with `s = macro_pixel / pitch`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScreen {
    thickness: Array2<f64>,
    macro_pixel: f64,
    material: MaterialModel,
    seed: u64,
    stream: u64,
}

impl PhaseScreen {
    pub fn new(thickness: Array2<f64>, macro_pixel: f64, material: MaterialModel) -> Result<Self> {
        if thickness.is_empty() {
            return Err(config_err("screen.thickness", "needs at least one macro-pixel"));
        }
        if let Some(t) = thickness.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(config_err("screen.thickness", format!("{t} must be finite and non-negative")));
        }
        if !(macro_pixel > 0.0 && macro_pixel.is_finite()) {
            return Err(config_err("screen.macro_pixel", format!("{macro_pixel} must be positive")));
        }
        Ok(Self { thickness, macro_pixel, material, seed: 0, stream: 0 })
    }

    /// Thickness per macro-pixel in meters.
    pub fn thickness(&self) -> &Array2<f64> {
        &self.thickness
    }

    pub fn macro_pixel(&self) -> f64 {
        self.macro_pixel
    }

    pub fn material(&self) -> MaterialModel {
        self.material
    }

    /// Generator seed and stream; zero for screens built with [`PhaseScreen::new`].
    pub fn seed(&self) -> (u64, u64) {
        (self.seed, self.stream)
    }

    /// Samples per macro-pixel side on `grid`.
    fn samples_per_pixel(&self, grid: &Grid) -> Result<usize> {
        samples_per_macro_pixel(self.macro_pixel, grid.pitch)
    }

    /// Thickness at every sample of `grid`.
    pub fn thickness_on(&self, grid: &Grid) -> Result<Array2<f64>> {
        let s = self.samples_per_pixel(grid)?;
        let (mr, mc) = self.thickness.dim();
        if mr * s < grid.rows || mc * s < grid.cols {
            return Err(Error::GridMismatch(format!(
                "{mr}x{mc} macro-pixels of {s} samples do not cover a {}x{} grid",
                grid.rows, grid.cols
            )));
        }
        Ok(Array2::from_shape_fn((grid.rows, grid.cols), |(r, c)| self.thickness[[r / s, c / s]]))
    }

    /// Raw thickness dump (QTPF, pitch = macro-pixel) plus a text sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::save_qtpf(path, &self.thickness, self.macro_pixel)?;
        let mut entries = vec![
            ("kind", "phase_screen".to_string()),
            ("macro_pixel_m", format!("{:?}", self.macro_pixel)),
            ("seed", self.seed.to_string()),
            ("stream", self.stream.to_string()),
        ];
        entries.extend(self.material.sidecar_entries());
        io::write_sidecar(path, &entries)
    }

    /// Reads a screen written by [`PhaseScreen::save`]. Thickness comes back
    /// at `f32` precision.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = io::load_qtpf(path)?;
        let meta = io::read_sidecar(path)?;
        let get = |key: &str| {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Format(format!("screen sidecar lacks {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| Error::Format(format!("screen sidecar {key} is not a number")))
        };
        let int = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| Error::Format(format!("screen sidecar {key} is not an integer")))
        };
        let material = match get("material")?.as_str() {
            "constant" => MaterialModel::Constant { n: num("n")? },
            "cauchy" => MaterialModel::Cauchy { a: num("cauchy_a")?, b: num("cauchy_b_um2")?, c: num("cauchy_c_um4")? },
            other => return Err(Error::Format(format!("unknown material {other:?}"))),
        };
        let mut screen = Self::new(raw.values.mapv(f64::from), num("macro_pixel_m")?, material)?;
        screen.seed = int("seed")?;
        screen.stream = int("stream")?;
        Ok(screen)
    }
}

pub(crate) fn samples_per_macro_pixel(macro_pixel: f64, pitch: f64) -> Result<usize> {
    let ratio = macro_pixel / pitch;
    let s = ratio.round();
    if !(s >= 1.0) || (ratio - s).abs() > 1e-9 * ratio {
        return Err(config_err(
            "macro_pixel",
            format!("{macro_pixel:.4e} m is not an integer multiple of the {pitch:.4e} m pitch"),
        ));
    }
    Ok(s as usize)
}

/// Random screen covering `grid` with i.i.d. thickness `U[0, thickness_max]`
/// per macro-pixel, drawn row-major from `ChaCha20Rng::seed_from_u64(seed)`.
pub fn generate_diffuser(
    grid: &Grid,
    macro_pixel: f64,
    thickness_max: f64,
    material: MaterialModel,
    seed: u64,
) -> Result<PhaseScreen> {
    generate_diffuser_stream(grid, macro_pixel, thickness_max, material, seed, 0)
}

/// [`generate_diffuser`] on generator stream `stream`, used to derive
/// independent realizations from one seed.
pub fn generate_diffuser_stream(
    grid: &Grid,
    macro_pixel: f64,
    thickness_max: f64,
    material: MaterialModel,
    seed: u64,
    stream: u64,
) -> Result<PhaseScreen> {
    if !(thickness_max >= 0.0 && thickness_max.is_finite()) {
        return Err(config_err("diffuser.thickness_max", format!("{thickness_max} must be non-negative")));
    }
    let s = samples_per_macro_pixel(macro_pixel, grid.pitch)?;
    let (mr, mc) = (grid.rows.div_ceil(s), grid.cols.div_ceil(s));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let thickness = Array2::from_shape_simple_fn((mr, mc), || rng.gen::<f64>() * thickness_max);
    let mut screen = PhaseScreen::new(thickness, macro_pixel, material)?;
    screen.seed = seed;
    screen.stream = stream;
    Ok(screen)
}

/// Sawtooth transmission grating blazed for `design_wavelength`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GratingSpec {
    pub period: f64,
    pub design_wavelength: f64,
    pub index: f64,
    pub blaze_order: u32,
}

impl GratingSpec {
    pub fn new(period: f64, design_wavelength: f64, index: f64) -> Result<Self> {
        let spec = Self { period, design_wavelength, index, blaze_order: 1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.design_wavelength > 0.0 && self.design_wavelength.is_finite()) {
            return Err(config_err("grating.design_wavelength", "must be positive"));
        }
        if !(self.period > self.design_wavelength && self.period.is_finite()) {
            return Err(config_err(
                "grating.period",
                format!("{:.4e} m must exceed the design wavelength", self.period),
            ));
        }
        if !(self.index > 1.0 && self.index.is_finite()) {
            return Err(config_err("grating.index", format!("{} must exceed 1", self.index)));
        }
        if self.blaze_order == 0 {
            return Err(config_err("grating.blaze_order", "must be at least 1"));
        }
        Ok(())
    }

    /// Groove depth, one blaze order of optical thickness at `λ₀`.
    pub fn height(&self) -> f64 {
        self.blaze_order as f64 * self.design_wavelength / (self.index - 1.0)
    }

    /// `L(x) = height · (x mod d)/d`.
    pub fn thickness_at(&self, x: f64) -> f64 {
        self.height() * (x / self.period).rem_euclid(1.0)
    }

    pub fn thickness_on(&self, grid: &Grid) -> Array2<f64> {
        let row: Vec<f64> = (0..grid.cols).map(|c| self.thickness_at(grid.x(c))).collect();
        Array2::from_shape_fn((grid.rows, grid.cols), |(_, c)| row[c])
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ThinElement<'a> {
    Screen(&'a PhaseScreen),
    Grating(&'a GratingSpec),
}

impl ThinElement<'_> {
    fn thickness_on(&self, grid: &Grid) -> Result<Array2<f64>> {
        match self {
            ThinElement::Screen(s) => s.thickness_on(grid),
            ThinElement::Grating(g) => Ok(g.thickness_on(grid)),
        }
    }

    pub fn index(&self, wavelength: f64) -> f64 {
        match self {
            ThinElement::Screen(s) => s.material.index(wavelength),
            ThinElement::Grating(g) => g.index,
        }
    }
}

/// Which wavenumbers accumulate phase in the element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseMode {
    /// One pass at the field's own wavelength.
    Single,
    /// Both photons of a pair at these wavelengths.
    Pair { plus: f64, minus: f64 },
}

/// Phase per meter of thickness, `Σ (n(λ)−1)·2π/λ` over the active passes.
fn phase_per_thickness(element: &ThinElement<'_>, mode: PhaseMode, field_wavelength: f64) -> Result<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let lambdas: Vec<f64> = match mode {
        PhaseMode::Single => vec![field_wavelength],
        PhaseMode::Pair { plus, minus } => vec![plus, minus],
    };
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(config_err("phase_mode", "wavelengths must be positive"));
    }
    Ok(match (element, mode) {
        // Constant index: only k₊ + k₋ enters.
        (ThinElement::Grating(g), PhaseMode::Pair { plus, minus }) => (g.index - 1.0) * (tau / plus + tau / minus),
        (ThinElement::Screen(s), PhaseMode::Pair { plus, minus }) if matches!(s.material, MaterialModel::Constant { .. }) => {
            (s.material.index(plus) - 1.0) * (tau / plus + tau / minus)
        }
        _ => lambdas.iter().map(|&l| (element.index(l) - 1.0) * tau / l).sum(),
    })
}

/// Multiplies `field` by the element's transmission. The output keeps the
/// field's wavelength label.
pub fn apply_phase_element(field: &ComplexField, element: ThinElement<'_>, mode: PhaseMode) -> Result<ComplexField> {
    let kappa = phase_per_thickness(&element, mode, field.wavelength())?;
    let thickness = element.thickness_on(field.grid())?;
    let mut out = field.clone();
    for (v, t) in out.values_mut().iter_mut().zip(thickness.iter()) {
        *v *= Complex64::from_polar(1.0, kappa * t);
    }
    Ok(out)
}

/// Where the lens far field is sampled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FarFieldSampling {
    /// FFT grid with pitch `λf/(N·pitch)`, so coordinates scale with `λ`.
    Fft,
    /// Fixed physical coordinates shared by all wavelengths.
    OnGrid(Grid),
}

fn far_field(field: &ComplexField, focal_length: f64, sampling: FarFieldSampling) -> Result<ComplexField> {
    match sampling {
        FarFieldSampling::Fft => lens_far_field(field, focal_length),
        FarFieldSampling::OnGrid(g) => far_field_on_grid(field, focal_length, &g),
    }
}

/// `|F{illumination · t(λ)}|²` at wavelength `λ`.
pub fn classical_farfield(
    element: ThinElement<'_>,
    illumination: &ComplexField,
    wavelength: f64,
    focal_length: f64,
    sampling: FarFieldSampling,
) -> Result<IntensityMap> {
    let input = illumination.clone().with_wavelength(wavelength)?;
    let shaped = apply_phase_element(&input, element, PhaseMode::Single)?;
    Ok(far_field(&shaped, focal_length, sampling)?
        .intensity(format!("classical far field λ={:.3} nm", wavelength * 1e9)))
}

/// Coincidence rate with the fixed detector on the far-field axis at
/// `fixed_wavelength`, scanned detector at `scanned_wavelength`.
///
/// A point detector on axis back-propagates to a plane wave at the element,
/// the crystal multiplies it by the pump `envelope`, and the element acts
/// once per photon before the far field at the scanned wavelength.
pub fn two_photon_farfield(
    element: ThinElement<'_>,
    envelope: &ComplexField,
    fixed_wavelength: f64,
    scanned_wavelength: f64,
    focal_length: f64,
    sampling: FarFieldSampling,
) -> Result<IntensityMap> {
    let input = envelope.clone().with_wavelength(scanned_wavelength)?;
    let mode = PhaseMode::Pair { plus: fixed_wavelength, minus: scanned_wavelength };
    let shaped = apply_phase_element(&input, element, mode)?;
    Ok(far_field(&shaped, focal_length, sampling)?.intensity(format!(
        "coincidence far field λ₊={:.3} nm λ₋={:.3} nm",
        fixed_wavelength * 1e9,
        scanned_wavelength * 1e9
    )))
}

/// Diffraction-limited spot width `λf/(πw₀)` of a Gaussian beam of waist `w₀`.
pub fn spot_width(wavelength: f64, focal_length: f64, beam_waist: f64) -> f64 {
    wavelength * focal_length / (std::f64::consts::PI * beam_waist)
}

/// Square around the far-field axis spanning ±2 spot widths.
pub fn on_axis_roi(wavelength: f64, focal_length: f64, beam_waist: f64) -> Result<RegionOfInterest> {
    RegionOfInterest::new((0.0, 0.0), 2.0 * spot_width(wavelength, focal_length, beam_waist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_source;

    #[test]
    fn cauchy_index_and_band_check() {
        let m = MaterialModel::Cauchy { a: 1.5, b: 0.004, c: 0.0 };
        assert!((m.index(1e-6) - 1.504).abs() < 1e-12);
        assert!(m.validate_band(700e-9, 900e-9).is_ok());
        assert!(MaterialModel::Constant { n: 0.9 }.validate_band(700e-9, 900e-9).is_err());
    }

    #[test]
    fn macro_pixel_must_be_a_pitch_multiple() {
        let g = Grid::square(16, 1e-6).unwrap();
        assert!(generate_diffuser(&g, 2.5e-6, 1e-6, MaterialModel::default(), 1).is_err());
        assert!(generate_diffuser(&g, 3e-6, -1.0, MaterialModel::default(), 1).is_err());
        let s = generate_diffuser(&g, 3e-6, 1e-6, MaterialModel::default(), 1).unwrap();
        assert_eq!(s.thickness().dim(), (6, 6));
        let t = s.thickness_on(&g).unwrap();
        assert_eq!(t[[4, 5]], s.thickness()[[1, 1]]);
        assert_eq!(t[[15, 0]], s.thickness()[[5, 0]]);
    }

    #[test]
    fn flat_screen_is_transparent() {
        let g = Grid::square(32, 1e-6).unwrap();
        let s = generate_diffuser(&g, 4e-6, 0.0, MaterialModel::default(), 3).unwrap();
        let f = gaussian_source(6e-6, (0.0, 0.0), &g, 800e-9).unwrap();
        let out = apply_phase_element(&f, ThinElement::Screen(&s), PhaseMode::Single).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn grating_profile() {
        let gs = GratingSpec::new(16e-6, 808e-9, 1.5).unwrap();
        assert!((gs.height() - 2.0 * 808e-9).abs() < 1e-20);
        assert!(gs.thickness_at(-1e-6) > 0.0);
        assert!((gs.thickness_at(8e-6) - 808e-9).abs() < 1e-18);
        assert!(GratingSpec::new(0.5e-6, 808e-9, 1.5).is_err());
        assert!(GratingSpec::new(16e-6, 808e-9, 1.0).is_err());
    }

    #[test]
    fn screen_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("screen.qtpf");
        let g = Grid::square(16, 1e-6).unwrap();
        let m = MaterialModel::Cauchy { a: 1.49, b: 0.0042, c: 1e-5 };
        let s = generate_diffuser_stream(&g, 2e-6, 5e-6, m, 42, 3).unwrap();
        s.save(&path).unwrap();
        let back = PhaseScreen::load(&path).unwrap();
        assert_eq!(back.seed(), (42, 3));
        assert_eq!(back.material(), m);
        assert_eq!(back.macro_pixel(), 2e-6);
        for (a, b) in back.thickness().iter().zip(s.thickness()) {
            assert!((a - b).abs() <= 1e-7 * b.abs());
        }
    }
}
