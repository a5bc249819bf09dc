//! Focusing through a fiber with a phase-only SLM, and how the focus holds up
//! as the wavelength or the pair detuning moves away from the design point.
//!
//! The SLM is a square of `K × K` macro-pixels centered on the facet it is
//! imaged onto. The display around the macro-pixels is one flat region whose
//! phase moves with any constant added to the mask. A focus is a point
//! of the imaged output facet, except behind the output SLM, which can only
//! focus in its lens far field.
//!
//! * [`FocusScenario::Classical`]: a flat-top beam filling the SLM at the
//!   input facet.
//! * [`FocusScenario::SpdcSlmInput`]: SLM between crystal and fiber. Both
//!   photons cross it, so the pair picks up `e^{2iφ}` and the state entering
//!   the fiber is no longer diagonal in the mode basis.
//! * [`FocusScenario::SpdcSlmOutput`]: SLM on the scanned photon only, after
//!   the fiber.
//!
//! For the coincidence scenarios the fixed detector is a point at the facet
//! target, so its advanced wave fills the whole mode set.

mod mixing;

pub use mixing::{masked_input_state, slm_mode_mixing_diagnostic, MixingReport};

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{config_err, Error, Result};
use crate::fiber::{FiberSpec, ModeBasis};
use crate::io;
use crate::field::{far_field_on_grid, ComplexField, Grid, IntensityMap, RegionOfInterest};
use crate::twophoton::{pair_wavelengths, Bases, CrystalKernel, PairChannel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlmPlane {
    FiberInput,
    FiberOutputOnePhoton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FocusScenario {
    Classical,
    SpdcSlmInput,
    SpdcSlmOutput,
}

impl FocusScenario {
    pub const ALL: [FocusScenario; 3] = [FocusScenario::Classical, FocusScenario::SpdcSlmInput, FocusScenario::SpdcSlmOutput];

    pub fn as_str(&self) -> &'static str {
        match self {
            FocusScenario::Classical => "classical",
            FocusScenario::SpdcSlmInput => "spdc_slm_input",
            FocusScenario::SpdcSlmOutput => "spdc_slm_output",
        }
    }

    pub fn plane(&self) -> SlmPlane {
        match self {
            FocusScenario::SpdcSlmOutput => SlmPlane::FiberOutputOnePhoton,
            _ => SlmPlane::FiberInput,
        }
    }
}

/// Phase per macro-pixel, wrapped to `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlmMask {
    phases: Array2<f64>,
    samples: usize,
    plane: SlmPlane,
    /// Phase of the display outside the macro-pixel area.
    border: f64,
    zeroed: usize,
}

impl SlmMask {
    /// `samples` field samples per macro-pixel side.
    pub fn new(phases: Array2<f64>, samples: usize, plane: SlmPlane) -> Result<Self> {
        if phases.is_empty() || samples == 0 {
            return Err(config_err("slm", "needs at least one macro-pixel of at least one sample"));
        }
        if phases.nrows() != phases.ncols() {
            return Err(config_err("slm.phases", "macro-pixel layout must be square"));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(config_err("slm.phases", "must be finite"));
        }
        let tau = 2.0 * std::f64::consts::PI;
        let phases = phases.mapv(|p| {
            let w = p.rem_euclid(tau);
            if w >= tau {
                0.0
            } else {
                w
            }
        });
        Ok(Self { phases, samples, plane, border: 0.0, zeroed: 0 })
    }

    pub fn zeros(pixels: usize, samples: usize, plane: SlmPlane) -> Result<Self> {
        Self::new(Array2::zeros((pixels, pixels)), samples, plane)
    }

    /// I.i.d. phases `U[0, 2π)` from `ChaCha20Rng::seed_from_u64(seed)`.
    pub fn random(pixels: usize, samples: usize, plane: SlmPlane, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tau = 2.0 * std::f64::consts::PI;
        Self::new(Array2::from_shape_simple_fn((pixels, pixels), || tau * rng.gen::<f64>()), samples, plane)
    }

    pub fn phases(&self) -> &Array2<f64> {
        &self.phases
    }

    pub fn plane(&self) -> SlmPlane {
        self.plane
    }

    pub fn samples_per_pixel(&self) -> usize {
        self.samples
    }

    /// Macro-pixel side in meters on `grid`.
    pub fn macro_pixel(&self, grid: &Grid) -> f64 {
        self.samples as f64 * grid.pitch
    }

    /// Macro-pixels left at phase 0 because their transmission vanished.
    pub fn zeroed_pixels(&self) -> usize {
        self.zeroed
    }

    pub fn border_phase(&self) -> f64 {
        self.border
    }

    /// Every phase shifted by `theta`, border included.
    pub fn shifted(&self, theta: f64) -> Result<Self> {
        let mut m = Self::new(self.phases.mapv(|p| p + theta), self.samples, self.plane)?;
        m.border = (self.border + theta).rem_euclid(2.0 * std::f64::consts::PI);
        m.zeroed = self.zeroed;
        Ok(m)
    }

    /// QTPF dump of the phases with the macro-pixel side on `grid` as pitch,
    /// plus a sidecar recording the plane and sampling.
    pub fn save(&self, path: &Path, grid: &Grid) -> Result<()> {
        io::save_qtpf(path, &self.phases, self.macro_pixel(grid))?;
        let plane = match self.plane {
            SlmPlane::FiberInput => "fiber_input",
            SlmPlane::FiberOutputOnePhoton => "fiber_output_one_photon",
        };
        io::write_sidecar(
            path,
            &[
                ("kind", "slm_mask".to_string()),
                ("plane", plane.to_string()),
                ("samples_per_pixel", self.samples.to_string()),
                ("border_phase", format!("{:?}", self.border)),
                ("zeroed_pixels", self.zeroed.to_string()),
            ],
        )
    }

    /// Reads a mask written by [`SlmMask::save`], phases at `f32` precision.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = io::load_qtpf(path)?;
        let meta = io::read_sidecar(path)?;
        let get = |key: &str| {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("mask sidecar lacks {key}")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::Format(format!("mask sidecar {key} is not an integer")))
        };
        let plane = match get("plane")? {
            "fiber_input" => SlmPlane::FiberInput,
            "fiber_output_one_photon" => SlmPlane::FiberOutputOnePhoton,
            other => return Err(Error::Format(format!("unknown SLM plane {other:?}"))),
        };
        let mut mask = Self::new(raw.values.mapv(f64::from), int("samples_per_pixel")?, plane)?;
        mask.zeroed = int("zeroed_pixels")?;
        mask.border = get("border_phase")?
            .parse()
            .map_err(|_| Error::Format("mask sidecar border_phase is not a number".into()))?;
        Ok(mask)
    }

    /// Macro-pixel index of every sample, `None` outside the SLM.
    fn pixel_map(&self, grid: &Grid) -> Result<Vec<Option<usize>>> {
        let (k, _) = self.phases.dim();
        let side = k * self.samples;
        if side > grid.rows || side > grid.cols || (grid.rows - side) % 2 != 0 || (grid.cols - side) % 2 != 0 {
            return Err(Error::GridMismatch(format!(
                "a {side}-sample SLM cannot be centered on a {}x{} grid",
                grid.rows, grid.cols
            )));
        }
        let (r0, c0) = ((grid.rows - side) / 2, (grid.cols - side) / 2);
        let mut out = vec![None; grid.len()];
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                out[r * grid.cols + c] = Some(((r - r0) / self.samples) * k + (c - c0) / self.samples);
            }
        }
        Ok(out)
    }

    /// `e^{i·power·φ(x)}` on `grid`, the border phase outside the macro-pixels.
    fn transmission(&self, grid: &Grid, power: f64) -> Result<Array2<Complex64>> {
        let map = self.pixel_map(grid)?;
        let flat: Vec<f64> = self.phases.iter().copied().collect();
        let border = Complex64::from_polar(1.0, power * self.border);
        Ok(Array2::from_shape_fn((grid.rows, grid.cols), |(r, c)| match map[r * grid.cols + c] {
            Some(k) => Complex64::from_polar(1.0, power * flat[k]),
            None => border,
        }))
    }

    /// Applies the mask `power` times (2 for a pair crossing it together).
    pub fn apply(&self, field: &ComplexField, power: f64) -> Result<ComplexField> {
        let t = self.transmission(field.grid(), power)?;
        ComplexField::new(*field.grid(), field.wavelength(), field.values() * &t)
    }
}

/// Where a scenario's focus is detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectionPlane {
    /// The fiber output facet, imaged.
    Facet,
    /// The lens far field of the facet (after the output SLM).
    FarField,
}

impl FocusScenario {
    pub fn detection(&self) -> DetectionPlane {
        match self {
            FocusScenario::SpdcSlmOutput => DetectionPlane::FarField,
            _ => DetectionPlane::Facet,
        }
    }
}

/// Fiber, SLM layout and detection geometry for the focusing scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapingSetup {
    /// The fiber, whose `length` is the shaping length.
    pub fiber: FiberSpec,
    pub grid: Grid,
    pub center_wavelength: f64,
    pub slm_pixels: usize,
    pub slm_samples: usize,
    /// `(row, col)` on `grid` of the facet focus and of the fixed detector.
    pub facet_target: (usize, usize),
    pub focal_length: f64,
    /// Far-field sampling, physical coordinates at the focal plane.
    pub far_grid: Grid,
    /// `(row, col)` of the far-field focus on `far_grid`.
    pub far_target: (usize, usize),
    pub mode_cache: Option<PathBuf>,
}

impl ShapingSetup {
    /// 25 µm / NA 0.2 step fiber of 20 cm on 256² samples at 0.3 µm,
    /// λ₀ = 810 nm, 16×16 macro-pixels of 10 samples, facet focus at
    /// (6.15, 3.15) µm, `f = 1 m` with a 96² far field at 6 mm pitch.
    pub fn fig6() -> Result<Self> {
        Ok(Self {
            fiber: FiberSpec::step_index(25e-6, 0.2, 0.2)?,
            grid: Grid::square(256, 0.3e-6)?,
            center_wavelength: 810e-9,
            slm_pixels: 16,
            slm_samples: 10,
            facet_target: (138, 148),
            focal_length: 1.0,
            far_grid: Grid::square(96, 6e-3)?,
            far_target: (52, 56),
            mode_cache: None,
        })
    }

    /// Background window for `plane`: the square inscribed in the core, or
    /// in the NA cone in the far field.
    pub fn background_roi(&self, plane: DetectionPlane) -> Result<RegionOfInterest> {
        let half = match plane {
            DetectionPlane::Facet => self.fiber.core_radius,
            DetectionPlane::FarField => self.fiber.numerical_aperture * self.focal_length,
        };
        RegionOfInterest::new((0.0, 0.0), half / std::f64::consts::SQRT_2)
    }

    fn detection_grid(&self, plane: DetectionPlane) -> &Grid {
        match plane {
            DetectionPlane::Facet => &self.grid,
            DetectionPlane::FarField => &self.far_grid,
        }
    }

    pub fn target(&self, plane: DetectionPlane) -> (usize, usize) {
        match plane {
            DetectionPlane::Facet => self.facet_target,
            DetectionPlane::FarField => self.far_target,
        }
    }

    pub fn target_position(&self, plane: DetectionPlane) -> (f64, f64) {
        let (r, c) = self.target(plane);
        let g = self.detection_grid(plane);
        (g.x(c), g.y(r))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength > 0.0 && self.center_wavelength.is_finite()) {
            return Err(config_err("wfs.center_wavelength", "must be positive"));
        }
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return Err(config_err("wfs.focal_length", "must be positive"));
        }
        SlmMask::zeros(self.slm_pixels, self.slm_samples, SlmPlane::FiberInput)?.pixel_map(&self.grid)?;
        for (plane, name) in [(DetectionPlane::Facet, "wfs.facet_target"), (DetectionPlane::FarField, "wfs.far_target")] {
            let (r, c) = self.target(plane);
            let g = self.detection_grid(plane);
            if r >= g.rows || c >= g.cols {
                return Err(config_err(name, format!("{:?} is outside the grid", (r, c))));
            }
            let roi = self.background_roi(plane)?;
            roi.samples(g)?;
            let (x, y) = self.target_position(plane);
            if (x - roi.center.0).abs() > roi.half_width || (y - roi.center.1).abs() > roi.half_width {
                return Err(config_err(name, "must lie inside the background window"));
            }
        }
        Ok(())
    }

    fn zero_mask(&self, scenario: FocusScenario) -> Result<SlmMask> {
        SlmMask::zeros(self.slm_pixels, self.slm_samples, scenario.plane())
    }
}

/// Flat-top beam over the SLM aperture.
fn slm_illumination(setup: &ShapingSetup, wavelength: f64) -> Result<ComplexField> {
    let mask = setup.zero_mask(FocusScenario::Classical)?;
    let map = mask.pixel_map(&setup.grid)?;
    let g = setup.grid;
    ComplexField::new(
        g,
        wavelength,
        Array2::from_shape_fn((g.rows, g.cols), |(r, c)| {
            if map[r * g.cols + c].is_some() {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    )
}

/// Unit-power point at the facet target. Also the fixed detector's mode.
fn facet_point(setup: &ShapingSetup, wavelength: f64) -> Result<ComplexField> {
    let mut f = ComplexField::zeros(setup.grid, wavelength)?;
    f.values_mut()[setup.facet_target] = Complex64::new(1.0 / setup.grid.pitch, 0.0);
    Ok(f)
}

/// Facet weights `w` with `Σ E w p²` proportional to the detected amplitude
/// at the target of `plane`.
fn target_weights(setup: &ShapingSetup, plane: DetectionPlane, wavelength: f64) -> Result<ComplexField> {
    match plane {
        DetectionPlane::Facet => facet_point(setup, wavelength),
        DetectionPlane::FarField => {
            let (xt, yt) = setup.target_position(plane);
            let kf = 2.0 * std::f64::consts::PI / wavelength / setup.focal_length;
            ComplexField::from_fn(setup.grid, wavelength, |x, y| Complex64::from_polar(1.0, -kf * (x * xt + y * yt)))
        }
    }
}

fn through_fiber(basis: &ModeBasis, field: &ComplexField, length: f64) -> Result<ComplexField> {
    basis.compose(&(basis.decompose(field)? * &basis.phases(length)))
}

/// Bases needed to evaluate one scenario at one detuning.
pub enum FocusBases<'a> {
    Classical(&'a ModeBasis),
    Pair { plus: &'a ModeBasis, minus: &'a ModeBasis },
}

impl<'a> FocusBases<'a> {
    fn single(&self) -> Result<&'a ModeBasis> {
        match self {
            FocusBases::Classical(b) => Ok(b),
            FocusBases::Pair { .. } => Err(config_err("bases", "the classical scenario needs one basis")),
        }
    }

    fn pair(&self) -> Result<(&'a ModeBasis, &'a ModeBasis)> {
        match self {
            FocusBases::Pair { plus, minus } => Ok((plus, minus)),
            FocusBases::Classical(_) => Err(config_err("bases", "coincidence scenarios need a basis pair")),
        }
    }
}

/// Coincidence amplitude at the output facet for the fixed detector at the
/// facet target, with an optional SLM at the input facet.
fn facet_coincidence(setup: &ShapingSetup, plus: &ModeBasis, minus: &ModeBasis, slm_input: Option<&SlmMask>) -> Result<ComplexField> {
    let length = setup.fiber.length;
    let detector = facet_point(setup, plus.wavelength())?;
    match slm_input {
        None => PairChannel::new(plus, minus, CrystalKernel::Mirror, 0.0, length)?.amplitude(&detector),
        Some(mask) => {
            let at_input = back_propagated_detector(setup, plus, &detector)?;
            let crossed = mask.apply(&at_input, 2.0)?.with_wavelength(minus.wavelength())?;
            through_fiber(minus, &crossed, length)
        }
    }
}

/// Advanced wave of the fixed detector at the input facet, `Σ conj(g_n) e^{iβ⁺L} f_n⁺`.
fn back_propagated_detector(setup: &ShapingSetup, plus: &ModeBasis, detector: &ComplexField) -> Result<ComplexField> {
    let g = plus.decompose(detector)?;
    let a: Array1<Complex64> = g.iter().zip(plus.phases(setup.fiber.length).iter()).map(|(c, p)| c.conj() * p).collect();
    plus.compose(&a)
}

/// Field in the detection plane for `scenario` with `mask`.
fn output_field(setup: &ShapingSetup, scenario: FocusScenario, mask: &SlmMask, bases: &FocusBases<'_>) -> Result<ComplexField> {
    match scenario {
        FocusScenario::Classical => {
            let b = bases.single()?;
            let input = mask.apply(&slm_illumination(setup, b.wavelength())?, 1.0)?;
            through_fiber(b, &input, setup.fiber.length)
        }
        FocusScenario::SpdcSlmInput => {
            let (p, m) = bases.pair()?;
            facet_coincidence(setup, p, m, Some(mask))
        }
        FocusScenario::SpdcSlmOutput => {
            let (p, m) = bases.pair()?;
            let shaped = mask.apply(&facet_coincidence(setup, p, m, None)?, 1.0)?;
            far_field_on_grid(&shaped, setup.focal_length, &setup.far_grid)
        }
    }
}

/// Detected intensity (classical) or coincidence rate in the scenario's
/// detection plane.
pub fn focus_pattern(setup: &ShapingSetup, scenario: FocusScenario, mask: &SlmMask, bases: &FocusBases<'_>) -> Result<IntensityMap> {
    if mask.plane() != scenario.plane() {
        return Err(config_err("slm.plane", format!("{} needs an SLM at {:?}", scenario.as_str(), scenario.plane())));
    }
    Ok(output_field(setup, scenario, mask, bases)?.intensity(scenario.as_str()))
}

/// Target intensity over the mean of the background window of `scenario`'s
/// detection plane.
pub fn enhancement(setup: &ShapingSetup, scenario: FocusScenario, pattern: &IntensityMap) -> Result<f64> {
    let plane = scenario.detection();
    setup.detection_grid(plane).check_congruent(pattern.grid(), "pattern vs detection grid")?;
    let idx = setup.background_roi(plane)?.samples(pattern.grid())?;
    let v = pattern.values();
    let mean = idx.iter().map(|&(r, c)| v[[r, c]]).sum::<f64>() / idx.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::ZeroMean);
    }
    Ok(v[setup.target(plane)] / mean)
}

/// Phase conjugation per macro-pixel at the design point.
///
/// Each macro-pixel's contribution `T_k` to the target amplitude is computed
/// from the reciprocal field, and the pixel is set to cancel `arg T_k`
/// (half of it for the input SLM, which the pair crosses twice). Pixels with
/// `T_k = 0` stay at 0 and are counted in [`SlmMask::zeroed_pixels`].
pub fn compute_focus_mask(setup: &ShapingSetup, scenario: FocusScenario, bases: &FocusBases<'_>) -> Result<SlmMask> {
    setup.validate()?;
    let zero = setup.zero_mask(scenario)?;
    let map = zero.pixel_map(&setup.grid)?;
    let length = setup.fiber.length;
    // Per-sample density whose macro-pixel sums are the T_k.
    let (density, power) = match scenario {
        FocusScenario::Classical => {
            let b = bases.single()?;
            let w = target_weights(setup, DetectionPlane::Facet, b.wavelength())?;
            let r = through_fiber(b, &w, length)?;
            let e = slm_illumination(setup, b.wavelength())?;
            (e.values() * r.values(), 1.0)
        }
        FocusScenario::SpdcSlmInput => {
            let (p, m) = bases.pair()?;
            let f_plus = back_propagated_detector(setup, p, &facet_point(setup, p.wavelength())?)?;
            let r_minus = through_fiber(m, &target_weights(setup, DetectionPlane::Facet, m.wavelength())?, length)?;
            (f_plus.values() * r_minus.values(), 2.0)
        }
        FocusScenario::SpdcSlmOutput => {
            let (p, m) = bases.pair()?;
            let b = facet_coincidence(setup, p, m, None)?;
            let w = target_weights(setup, DetectionPlane::FarField, m.wavelength())?;
            (b.values() * w.values(), 1.0)
        }
    };
    let k = setup.slm_pixels;
    let mut t = vec![Complex64::new(0.0, 0.0); k * k];
    for (i, v) in density.iter().enumerate() {
        if let Some(px) = map[i] {
            t[px] += v;
        }
    }
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut zeroed = 0;
    let phases = Array2::from_shape_fn((k, k), |(i, j)| {
        let v = t[i * k + j];
        if v.norm() <= 1e-14 * scale || scale == 0.0 {
            zeroed += 1;
            0.0
        } else {
            -v.arg() / power
        }
    });
    let mut mask = SlmMask::new(phases, setup.slm_samples, scenario.plane())?;
    mask.zeroed = zeroed;
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FocusReport {
    pub scenario: FocusScenario,
    /// Enhancement at `Δλ = 0`.
    pub enhancement: f64,
    /// `Δλ` where the enhancement first falls to half its design value.
    pub half_bandwidth: Option<f64>,
    /// `(Δλ, enhancement)` in meters.
    pub curve: Vec<(f64, f64)>,
}

impl FocusReport {
    fn from_curve(scenario: FocusScenario, curve: Vec<(f64, f64)>) -> Self {
        let e0 = curve[0].1;
        let level = 0.5 * e0;
        let half_bandwidth = curve.windows(2).find_map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            (y0 >= level && y1 < level).then(|| x0 + (y0 - level) / (y0 - y1) * (x1 - x0))
        });
        Self { scenario, enhancement: e0, half_bandwidth, curve }
    }

    /// Rows `delta_lambda_nm,enhancement,scenario` under one header.
    pub fn write_csv(reports: &[FocusReport], mut out: impl Write) -> Result<()> {
        writeln!(out, "delta_lambda_nm,enhancement,scenario")?;
        for r in reports {
            for (d, e) in &r.curve {
                writeln!(out, "{:?},{:?},{}", d * 1e9, e, r.scenario.as_str())?;
            }
        }
        Ok(())
    }
}

/// Result of [`run_focus_study`].
#[derive(Clone, Debug)]
pub struct FocusStudy {
    pub masks: Vec<SlmMask>,
    pub reports: Vec<FocusReport>,
    /// Patterns at `Δλ = 0`, one per scenario.
    pub focused: Vec<IntensityMap>,
    pub basis_solves: usize,
    pub cache_hits: usize,
}

fn check_detunings(detunings: &[f64]) -> Result<()> {
    if detunings.first() != Some(&0.0) || detunings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config_err("wfs.detunings", "must start at 0 and ascend strictly"));
    }
    Ok(())
}

/// Designs a mask per scenario at `λ₀` and scans it over `detunings`.
///
/// The classical beam moves to `λ₀ + Δλ`; the pair moves to
/// `ω± = ω₀ ± ½Δω(Δλ)`, a separation of `Δλ`. Masks stay fixed.
pub fn run_focus_study(setup: &ShapingSetup, scenarios: &[FocusScenario], detunings: &[f64]) -> Result<FocusStudy> {
    setup.validate()?;
    check_detunings(detunings)?;
    let mut bases = Bases::new(&setup.fiber, &setup.grid, setup.mode_cache.as_deref());
    let l0 = setup.center_wavelength;
    let center = bases.get(l0)?;
    let design = |s: FocusScenario| match s {
        FocusScenario::Classical => FocusBases::Classical(&center),
        _ => FocusBases::Pair { plus: &center, minus: &center },
    };
    let masks = scenarios
        .iter()
        .map(|&s| compute_focus_mask(setup, s, &design(s)))
        .collect::<Result<Vec<_>>>()?;
    let focused = scenarios
        .iter()
        .zip(&masks)
        .map(|(&s, m)| focus_pattern(setup, s, m, &design(s)))
        .collect::<Result<Vec<_>>>()?;
    let mut curves: Vec<Vec<(f64, f64)>> = focused
        .iter()
        .zip(scenarios)
        .map(|(p, &s)| Ok(vec![(0.0, enhancement(setup, s, p)?)]))
        .collect::<Result<Vec<_>>>()?;
    let need_classical = scenarios.contains(&FocusScenario::Classical);
    let need_pair = scenarios.iter().any(|s| *s != FocusScenario::Classical);
    for &dl in &detunings[1..] {
        let shifted = if need_classical { Some(bases.get(l0 + dl)?) } else { None };
        let pair = if need_pair {
            let (lp, lm) = pair_wavelengths(l0, dl);
            Some((bases.get(lp)?, bases.get(lm)?))
        } else {
            None
        };
        for (i, (&s, m)) in scenarios.iter().zip(&masks).enumerate() {
            let b = match s {
                FocusScenario::Classical => FocusBases::Classical(shifted.as_ref().expect("classical basis")),
                _ => {
                    let (p, q) = pair.as_ref().expect("pair bases");
                    FocusBases::Pair { plus: p, minus: q }
                }
            };
            curves[i].push((dl, enhancement(setup, s, &focus_pattern(setup, s, m, &b)?)?));
        }
    }
    let reports = scenarios.iter().zip(curves).map(|(&s, c)| FocusReport::from_curve(s, c)).collect();
    Ok(FocusStudy { masks, reports, focused, basis_solves: bases.solves, cache_hits: bases.hits })
}

/// Enhancement of a fixed `mask` over `detunings` for one scenario.
pub fn scan_focus_vs_detuning(
    setup: &ShapingSetup,
    mask: &SlmMask,
    scenario: FocusScenario,
    detunings: &[f64],
) -> Result<FocusReport> {
    setup.validate()?;
    check_detunings(detunings)?;
    let mut bases = Bases::new(&setup.fiber, &setup.grid, setup.mode_cache.as_deref());
    let l0 = setup.center_wavelength;
    let mut curve = Vec::with_capacity(detunings.len());
    for &dl in detunings {
        let e = match scenario {
            FocusScenario::Classical => {
                let b = bases.get(l0 + dl)?;
                enhancement(setup, scenario, &focus_pattern(setup, scenario, mask, &FocusBases::Classical(&b))?)?
            }
            _ => {
                let (lp, lm) = pair_wavelengths(l0, dl);
                let p = bases.get(lp)?;
                let m = if dl == 0.0 { p.clone() } else { bases.get(lm)? };
                enhancement(setup, scenario, &focus_pattern(setup, scenario, mask, &FocusBases::Pair { plus: &p, minus: &m })?)?
            }
        };
        curve.push((dl, e));
    }
    Ok(FocusReport::from_curve(scenario, curve))
}
