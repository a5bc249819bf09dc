//! Monte-Carlo detuning scans through a fiber: correlation curves and
//! incoherent sums for the classical and coincidence channels.

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::awp::{CrystalKernel, PairChannel};
use super::phase_matching::{cnm_finite_phase_matching, ModeSpectra, PhaseMatchingKernel};
use super::{classical_fiber_speckles, pair_detuning, SpdcSpec, TwoPhotonModeState};
use crate::error::{config_err, Error, Result};
use crate::fiber::{detuning_omega, omega_of, solve_modes_cached, wavelength_of, FiberSpec, ModeBasis};
use crate::field::{
    gaussian_source, incoherent_sum, pearson_correlation, speckle_contrast, ComplexField, Grid, IntensityMap,
    RegionOfInterest,
};

/// Detunings in meters of pair separation, 0 to 40 nm, dense near zero.
pub fn default_detunings() -> Vec<f64> {
    let mut nm = vec![0.0, 0.05, 0.1, 0.15];
    nm.extend((1..=20).map(|i| 0.25 * i as f64));
    nm.extend([6.0, 8.0, 10.0, 15.0, 20.0, 30.0, 40.0]);
    nm.into_iter().map(|v| v * 1e-9).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetuningScan {
    pub center_wavelength: f64,
    /// Pair separations `Δλ = λ₊ − λ₋` in meters, ascending from 0.
    pub detunings: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
}

impl DetuningScan {
    pub fn new(center_wavelength: f64, detunings: Vec<f64>, realizations: usize, seed: u64) -> Result<Self> {
        if !(center_wavelength > 0.0 && center_wavelength.is_finite()) {
            return Err(config_err("scan.center_wavelength", "must be positive"));
        }
        if detunings.first() != Some(&0.0) {
            return Err(config_err("scan.detunings", "the first detuning must be 0"));
        }
        if detunings.windows(2).any(|w| !(w[1] > w[0])) || detunings.iter().any(|d| !d.is_finite()) {
            return Err(config_err("scan.detunings", "must be finite and strictly ascending"));
        }
        if realizations == 0 {
            return Err(config_err("scan.realizations", "must be at least 1"));
        }
        Ok(Self { center_wavelength, detunings, realizations, seed })
    }

    /// `(λ₊, λ₋)` of detuning `Δλ` split symmetrically in frequency.
    pub fn pair_wavelengths(&self, delta_lambda: f64) -> (f64, f64) {
        pair_wavelengths(self.center_wavelength, delta_lambda)
    }
}

/// `(λ₊, λ₋)` with `ω± = ω₀ ± ½·Δω(Δλ)`, so the pair is `Δλ` apart to first
/// order and `ω₊ + ω₋ = 2ω₀` exactly.
pub fn pair_wavelengths(center_wavelength: f64, delta_lambda: f64) -> (f64, f64) {
    let w0 = omega_of(center_wavelength);
    let half = 0.5 * detuning_omega(center_wavelength, delta_lambda);
    (wavelength_of(w0 + half), wavelength_of(w0 - half))
}

/// Crystal description used by a scan variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CrystalModel {
    Thin,
    Finite(SpdcSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanVariant {
    pub name: String,
    pub crystal: CrystalModel,
    /// Facet-to-crystal-image distance in meters.
    pub defocus: f64,
}

impl ScanVariant {
    pub fn thin(name: impl Into<String>) -> Self {
        Self { name: name.into(), crystal: CrystalModel::Thin, defocus: 0.0 }
    }
}

/// Fiber, sampling and detection settings shared by every realization.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberScenario {
    pub fiber: FiberSpec,
    pub grid: Grid,
    pub detector_waist: f64,
    /// Random positions are drawn within this fraction of the core radius.
    pub position_fraction: f64,
    /// ROI side as a fraction of the window side.
    pub roi_fraction: f64,
    /// Largest detuning included in the incoherent sums, meters.
    pub sum_band: f64,
    pub mode_cache: Option<PathBuf>,
    pub classical: bool,
}

impl FiberScenario {
    pub fn new(fiber: FiberSpec, grid: Grid) -> Self {
        Self {
            fiber,
            grid,
            detector_waist: 0.6e-6,
            position_fraction: 0.8,
            roi_fraction: 0.4,
            sum_band: 5e-9,
            mode_cache: None,
            classical: true,
        }
    }

    pub fn roi(&self) -> Result<RegionOfInterest> {
        RegionOfInterest::centered_fraction(&self.grid, self.roi_fraction)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.position_fraction > 0.0 && self.position_fraction <= 1.0) {
            return Err(config_err("scenario.position_fraction", "must lie in (0, 1]"));
        }
        if !(self.sum_band >= 0.0) {
            return Err(config_err("scenario.sum_band", "must be non-negative"));
        }
        let w = self.detector_waist;
        if !(w > 0.0 && w.is_finite()) {
            return Err(config_err("scenario.detector_waist", format!("{w} must be positive")));
        }
        if self.grid.pitch > w / 2.0 {
            return Err(Error::UnderResolved {
                what: format!("detector waist {w:.3e} m"),
                required_pitch: w / 2.0,
                pitch: self.grid.pitch,
            });
        }
        let (ex, ey) = self.grid.extent();
        if 2.0 * self.fiber.core_radius > ex.min(ey) {
            return Err(config_err("scenario.grid", "the window must contain the fiber core"));
        }
        self.roi()?.samples(&self.grid)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Classical,
    Spdc,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Classical => "classical",
            Channel::Spdc => "spdc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationPoint {
    pub delta_lambda: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    pub channel: Channel,
    pub label: String,
    pub points: Vec<CorrelationPoint>,
}

impl CorrelationCurve {
    pub(crate) fn from_samples(channel: Channel, label: String, detunings: &[f64], samples: &[Vec<f64>]) -> Self {
        let points = detunings
            .iter()
            .zip(samples)
            .map(|(&d, s)| {
                let n = s.len() as f64;
                let mean = s.iter().sum::<f64>() / n;
                let stderr = if s.len() > 1 {
                    (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                CorrelationPoint { delta_lambda: d, mean, stderr }
            })
            .collect();
        Self { channel, label, points }
    }

    /// First detuning where the mean falls below `level`, linearly
    /// interpolated between samples.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            (a.mean >= level && b.mean < level).then(|| {
                a.delta_lambda + (a.mean - level) / (a.mean - b.mean) * (b.delta_lambda - a.delta_lambda)
            })
        })
    }

    /// Mean at `delta_lambda` by linear interpolation; `None` outside the scan.
    pub fn value_at(&self, delta_lambda: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            (delta_lambda >= a.delta_lambda && delta_lambda <= b.delta_lambda).then(|| {
                let t = (delta_lambda - a.delta_lambda) / (b.delta_lambda - a.delta_lambda);
                a.mean + t * (b.mean - a.mean)
            })
        })
    }

    /// Rows `delta_lambda_nm,pcc_mean,pcc_stderr,channel,label` under one header.
    pub fn write_csv(curves: &[&CorrelationCurve], mut out: impl Write) -> Result<()> {
        writeln!(out, "delta_lambda_nm,pcc_mean,pcc_stderr,channel,label")?;
        for c in curves {
            for p in &c.points {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_num(p.delta_lambda * 1e9),
                    fmt_num(p.mean),
                    fmt_num(p.stderr),
                    c.channel.as_str(),
                    c.label
                )?;
            }
        }
        Ok(())
    }
}

/// Shortest round-tripping decimal form.
fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// `Δλ` where the mean correlation first drops below ½.
pub fn half_correlation_width(curve: &CorrelationCurve) -> Option<f64> {
    curve.crossing(0.5)
}

#[derive(Clone, Debug)]
pub struct VariantOutput {
    pub name: String,
    pub curve: CorrelationCurve,
    /// Mean over realizations of the ROI contrast of the incoherent sum.
    pub sum_contrast: f64,
    /// Realization 0: degenerate pattern and incoherent sum.
    pub reference: IntensityMap,
    pub sum: IntensityMap,
}

#[derive(Clone, Debug)]
pub struct ClassicalOutput {
    pub curve: CorrelationCurve,
    pub sum_contrast: f64,
    pub reference: IntensityMap,
    pub sum: IntensityMap,
}

#[derive(Clone, Debug)]
pub struct ScanOutput {
    pub classical: Option<ClassicalOutput>,
    pub variants: Vec<VariantOutput>,
    pub basis_solves: usize,
    pub cache_hits: usize,
}

/// Uniform point in a disk of radius `r`.
fn disk_point(rng: &mut ChaCha20Rng, r: f64) -> (f64, f64) {
    let rho = r * rng.gen::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    (rho * phi.cos(), rho * phi.sin())
}

/// Detector and classical-input positions of realization `r`: stream `r` of
/// a ChaCha20 generator keyed by the seed, detector first.
pub(crate) fn realization_positions(seed: u64, r: usize, radius: f64) -> ((f64, f64), (f64, f64)) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let det = disk_point(&mut rng, radius);
    let input = disk_point(&mut rng, radius);
    (det, input)
}

/// Trapezoid weights over the detunings within `band`.
fn band_weights(detunings: &[f64], band: f64) -> Vec<f64> {
    let k = detunings.iter().take_while(|&&d| d <= band * (1.0 + 1e-12)).count();
    let mut w = vec![0.0; detunings.len()];
    if k == 1 {
        w[0] = 1.0;
        return w;
    }
    for j in 0..k {
        let lo = if j == 0 { detunings[0] } else { detunings[j - 1] };
        let hi = if j + 1 == k { detunings[k - 1] } else { detunings[j + 1] };
        w[j] = 0.5 * (hi - lo);
    }
    w
}

/// Mode-basis solver with an optional disk cache and solve/hit counters.
pub(crate) struct Bases {
    fiber: FiberSpec,
    grid: Grid,
    cache: Option<PathBuf>,
    pub(crate) solves: usize,
    pub(crate) hits: usize,
}

impl Bases {
    pub(crate) fn new(fiber: &FiberSpec, grid: &Grid, cache: Option<&std::path::Path>) -> Self {
        Self { fiber: fiber.clone(), grid: *grid, cache: cache.map(|p| p.to_path_buf()), solves: 0, hits: 0 }
    }

    pub(crate) fn get(&mut self, wavelength: f64) -> Result<ModeBasis> {
        let (b, hit) = solve_modes_cached(&self.fiber, wavelength, &self.grid, self.cache.as_deref())?;
        if hit {
            self.hits += 1;
        } else {
            self.solves += 1;
        }
        Ok(b)
    }
}

/// Coupling for every variant at one detuning, sharing mode spectra between
/// crystal lengths.
fn variant_channels<'a>(
    variants: &[ScanVariant],
    plus: &'a ModeBasis,
    minus: &'a ModeBasis,
    length: f64,
) -> Result<Vec<PairChannel<'a>>> {
    let mut spectra: Vec<(SpdcSpec, ModeSpectra, ModeSpectra)> = Vec::new();
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let channel = match v.crystal {
            CrystalModel::Thin => PairChannel::new(plus, minus, CrystalKernel::Mirror, v.defocus, length)?,
            CrystalModel::Finite(spdc) if spdc.crystal_length == 0.0 => {
                let state = cnm_finite_phase_matching(plus, minus, &spdc)?;
                PairChannel::new(plus, minus, CrystalKernel::Modal(&state), v.defocus, length)?
            }
            CrystalModel::Finite(spdc) => {
                let key = SpdcSpec { crystal_length: 0.0, ..spdc };
                let pos = match spectra.iter().position(|(k, _, _)| *k == key) {
                    Some(i) => i,
                    None => {
                        spectra.push((key, ModeSpectra::new(plus, &spdc)?, ModeSpectra::new(minus, &spdc)?));
                        spectra.len() - 1
                    }
                };
                let (_, sp, sm) = &spectra[pos];
                let c = sp.couple(sm, &PhaseMatchingKernel::new(sp, &spdc)?)?;
                let state = TwoPhotonModeState::new(c, pair_detuning(plus, minus))?.normalized()?;
                PairChannel::new(plus, minus, CrystalKernel::Modal(&state), v.defocus, length)?
            }
        };
        out.push(channel);
    }
    Ok(out)
}

/// Correlation curves against the degenerate pattern of each realization,
/// and incoherent sums over `Δλ ≤ sum_band`.
///
/// Classical speckle compares the input at `λ₊` with the same input at
/// `λ₋`; the classical sum adds both.
pub fn run_detuning_scan(scan: &DetuningScan, scenario: &FiberScenario, variants: &[ScanVariant]) -> Result<ScanOutput> {
    scenario.validate()?;
    if variants.is_empty() && !scenario.classical {
        return Err(config_err("scan.variants", "nothing to compute"));
    }
    for v in variants {
        if !(v.defocus >= 0.0 && v.defocus.is_finite()) {
            return Err(config_err("variant.defocus", format!("{} must be non-negative", v.defocus)));
        }
    }
    let roi = scenario.roi()?;
    let fiber = scenario.fiber;
    let grid = scenario.grid;
    let length = fiber.length;
    let radius = scenario.position_fraction * fiber.core_radius;
    let nr = scan.realizations;
    let nd = scan.detunings.len();
    let positions: Vec<_> = (0..nr).map(|r| realization_positions(scan.seed, r, radius)).collect();
    let detectors = positions
        .iter()
        .map(|(d, _)| gaussian_source(scenario.detector_waist, *d, &grid, scan.center_wavelength))
        .collect::<Result<Vec<_>>>()?;
    let weights = band_weights(&scan.detunings, scenario.sum_band);

    let mut bases = Bases::new(&scenario.fiber, &scenario.grid, scenario.mode_cache.as_deref());
    let center = bases.get(scan.center_wavelength)?;

    let nv = variants.len();
    let mut refs: Vec<Vec<IntensityMap>> = vec![Vec::new(); nv];
    let mut sums: Vec<Vec<Option<IntensityMap>>> = vec![vec![None; nr]; nv];
    let mut pcc = vec![vec![vec![0.0; nr]; nd]; nv];
    let mut cl_ref: Vec<IntensityMap> = Vec::new();
    let mut cl_sum: Vec<Option<IntensityMap>> = vec![None; nr];
    let mut cl_pcc = vec![vec![0.0; nr]; nd];

    let accumulate = |slot: &mut Option<IntensityMap>, maps: &[&IntensityMap], w: f64| -> Result<()> {
        let mut parts: Vec<&IntensityMap> = maps.to_vec();
        let mut ws = vec![w; maps.len()];
        if let Some(prev) = slot.as_ref() {
            parts.push(prev);
            ws.push(1.0);
        }
        let s = incoherent_sum(&parts, &ws)?;
        *slot = Some(s);
        Ok(())
    };

    for (j, &dl) in scan.detunings.iter().enumerate() {
        let (plus, minus) = if dl == 0.0 {
            (center.clone(), center.clone())
        } else {
            let (lp, lm) = scan.pair_wavelengths(dl);
            (bases.get(lp)?, bases.get(lm)?)
        };
        let channels = variant_channels(variants, &plus, &minus, length)?;
        for (v, ch) in channels.iter().enumerate() {
            let amps = ch.amplitudes(&detectors)?;
            for (r, a) in amps.into_iter().enumerate() {
                let map = a.intensity(format!("{} Δλ={:.3} nm", variants[v].name, dl * 1e9));
                if j == 0 {
                    refs[v].push(map.clone());
                }
                // The degenerate pattern is its own reference.
                pcc[v][j][r] = if j == 0 { 1.0 } else { pearson_correlation(&refs[v][r], &map, &roi)? };
                if weights[j] > 0.0 {
                    accumulate(&mut sums[v][r], &[&map], weights[j])?;
                }
            }
        }
        if scenario.classical {
            let inputs = |basis: &ModeBasis| -> Result<Vec<IntensityMap>> {
                let fields = positions
                    .iter()
                    .map(|(_, pos)| gaussian_source(scenario.detector_waist, *pos, &grid, basis.wavelength()))
                    .collect::<Result<Vec<ComplexField>>>()?;
                classical_fiber_speckles(&fields, basis, length)
            };
            let ip = inputs(&plus)?;
            let im = if dl == 0.0 { ip.clone() } else { inputs(&minus)? };
            for r in 0..nr {
                if j == 0 {
                    cl_ref.push(ip[r].clone());
                }
                cl_pcc[j][r] = if dl == 0.0 { 1.0 } else { pearson_correlation(&ip[r], &im[r], &roi)? };
                if weights[j] > 0.0 {
                    accumulate(&mut cl_sum[r], &[&ip[r], &im[r]], weights[j])?;
                }
            }
        }
    }

    let contrast_mean = |maps: &[Option<IntensityMap>]| -> Result<(f64, IntensityMap)> {
        let mut total = 0.0;
        for m in maps {
            total += speckle_contrast(m.as_ref().expect("band contains Δλ = 0"), &roi)?;
        }
        Ok((total / maps.len() as f64, maps[0].clone().expect("band contains Δλ = 0")))
    };
    let mut outputs = Vec::with_capacity(nv);
    for (v, variant) in variants.iter().enumerate() {
        let (sum_contrast, sum) = contrast_mean(&sums[v])?;
        outputs.push(VariantOutput {
            name: variant.name.clone(),
            curve: CorrelationCurve::from_samples(Channel::Spdc, variant.name.clone(), &scan.detunings, &pcc[v]),
            sum_contrast,
            reference: refs[v][0].clone(),
            sum: sum.with_label(format!("{} incoherent sum", variant.name)),
        });
    }
    let classical = if scenario.classical {
        let (sum_contrast, sum) = contrast_mean(&cl_sum)?;
        Some(ClassicalOutput {
            curve: CorrelationCurve::from_samples(Channel::Classical, "classical".into(), &scan.detunings, &cl_pcc),
            sum_contrast,
            reference: cl_ref[0].clone(),
            sum: sum.with_label("classical incoherent sum"),
        })
    } else {
        None
    };
    Ok(ScanOutput { classical, variants: outputs, basis_solves: bases.solves, cache_hits: bases.hits })
}

/// Thin-crystal coincidence curve with the crystal image `dz` before the
/// fiber facet.
pub fn apply_defocus_study(scan: &DetuningScan, scenario: &FiberScenario, dz: f64) -> Result<CorrelationCurve> {
    let mut sc = scenario.clone();
    sc.classical = false;
    let variant = ScanVariant { name: format!("dz={:.1} um", dz * 1e6), crystal: CrystalModel::Thin, defocus: dz };
    let out = run_detuning_scan(scan, &sc, &[variant])?;
    out.variants.into_iter().next().map(|v| v.curve).ok_or_else(|| Error::Format("empty scan output".into()))
}
