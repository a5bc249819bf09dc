//! Far-field speckle of a thin random diffuser for classical light and for
//! photon pairs, averaged over diffuser realizations.

use rayon::prelude::*;

use super::{
    classical_farfield, generate_diffuser_stream, spot_width, two_photon_farfield, FarFieldSampling, MaterialModel,
    ThinElement,
};
use crate::error::{config_err, Result};
use crate::fiber::{omega_of, wavelength_of};
use crate::field::{gaussian_source, incoherent_sum, pearson_correlation, speckle_contrast, Grid, IntensityMap};
use crate::twophoton::{pair_wavelengths, Channel, CorrelationCurve};

#[derive(Clone, Debug, PartialEq)]
pub struct DiffuserStudy {
    /// Element-plane sampling.
    pub grid: Grid,
    pub center_wavelength: f64,
    /// Field samples per macro-pixel side.
    pub macro_samples: usize,
    pub thickness_max: f64,
    pub material: MaterialModel,
    /// Waist of the classical beam and of the pump envelope at the element.
    pub beam_waist: f64,
    pub focal_length: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Pair separations `Δλ = λ₊ − λ₋`, ascending from 0.
    pub separations: Vec<f64>,
    /// Incoherent sums cover detected wavelengths `λ₀ ± band_half_width`.
    pub band_half_width: f64,
    pub band_samples: usize,
    /// Far-field window side in samples and sampling per spot width.
    pub far_size: usize,
    pub far_samples_per_spot: f64,
}

impl DiffuserStudy {
    /// 256² samples at 2 µm, 8-sample macro-pixels, thickness `U[0, 40λ₀]`,
    /// `n = 1.5`, 64 µm waist, `f = 10 cm`, 30 realizations, ±40 nm band.
    pub fn fig4(center_wavelength: f64, seed: u64) -> Result<Self> {
        let nm = [0.0, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0];
        Ok(Self {
            grid: Grid::square(256, 2e-6)?,
            center_wavelength,
            macro_samples: 8,
            thickness_max: 40.0 * center_wavelength,
            material: MaterialModel::default(),
            beam_waist: 64e-6,
            focal_length: 0.1,
            realizations: 30,
            seed,
            separations: nm.iter().map(|v| v * 1e-9).collect(),
            band_half_width: 40e-9,
            band_samples: 41,
            far_size: 128,
            far_samples_per_spot: 4.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength > 0.0 && self.center_wavelength.is_finite()) {
            return Err(config_err("diffuser.center_wavelength", "must be positive"));
        }
        if self.macro_samples == 0 {
            return Err(config_err("diffuser.macro_samples", "must be at least 1"));
        }
        if !(self.thickness_max >= 0.0 && self.thickness_max.is_finite()) {
            return Err(config_err("diffuser.thickness_max", "must be non-negative"));
        }
        if !(self.beam_waist >= 2.0 * self.grid.pitch && 4.0 * self.beam_waist <= self.grid.extent().0.min(self.grid.extent().1)) {
            return Err(config_err("diffuser.beam_waist", "must span 2 samples and fit the window (4·w₀ ≤ extent)"));
        }
        if !(self.focal_length > 0.0) {
            return Err(config_err("diffuser.focal_length", "must be positive"));
        }
        if self.realizations == 0 {
            return Err(config_err("diffuser.realizations", "must be at least 1"));
        }
        if self.separations.first() != Some(&0.0) || self.separations.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("diffuser.separations", "must start at 0 and ascend strictly"));
        }
        if !(self.band_half_width >= 0.0 && self.band_half_width < self.center_wavelength) || self.band_samples == 0 {
            return Err(config_err("diffuser.band", "half-width must be in [0, λ₀) with at least one sample"));
        }
        if self.far_size < 16 || !(self.far_samples_per_spot >= 1.0) {
            return Err(config_err("diffuser.far_field", "needs at least 16 samples and 1 sample per spot"));
        }
        let smax = self.separations.last().copied().unwrap_or(0.0);
        let (lp, lm) = pair_wavelengths(self.center_wavelength, smax);
        let lo = (self.center_wavelength - self.band_half_width).min(lm);
        let hi = (self.center_wavelength + self.band_half_width).max(lp);
        self.material.validate_band(lo, hi)?;
        // The far window must lie inside the element grid's Nyquist range.
        let half_far = 0.5 * self.far_size as f64 * self.far_pitch();
        if half_far >= lo * self.focal_length / (2.0 * self.grid.pitch) {
            return Err(config_err("diffuser.far_field", "far window exceeds the element sampling bandwidth"));
        }
        Ok(())
    }

    pub fn macro_pixel(&self) -> f64 {
        self.macro_samples as f64 * self.grid.pitch
    }

    pub fn spot(&self) -> f64 {
        spot_width(self.center_wavelength, self.focal_length, self.beam_waist)
    }

    fn far_pitch(&self) -> f64 {
        self.spot() / self.far_samples_per_spot
    }

    pub fn far_grid(&self) -> Result<Grid> {
        Grid::square(self.far_size, self.far_pitch())
    }

    /// On-axis window of ±2 spot widths at `λ₀`.
    pub fn roi(&self) -> Result<crate::field::RegionOfInterest> {
        super::on_axis_roi(self.center_wavelength, self.focal_length, self.beam_waist)
    }

    fn band(&self) -> Vec<f64> {
        let n = self.band_samples;
        if n == 1 {
            return vec![self.center_wavelength];
        }
        (0..n)
            .map(|i| self.center_wavelength - self.band_half_width + 2.0 * self.band_half_width * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct DiffuserOutput {
    pub classical: CorrelationCurve,
    pub spdc: CorrelationCurve,
    /// Band sums of the first realization.
    pub classical_sum: IntensityMap,
    pub spdc_sum: IntensityMap,
    /// On-axis contrast of the band sums, averaged over realizations.
    pub classical_contrast: f64,
    pub spdc_contrast: f64,
}

struct Realization {
    classical_pcc: Vec<f64>,
    spdc_pcc: Vec<f64>,
    classical_sum: IntensityMap,
    spdc_sum: IntensityMap,
    classical_contrast: f64,
    spdc_contrast: f64,
}

fn realization(study: &DiffuserStudy, r: usize) -> Result<Realization> {
    let l0 = study.center_wavelength;
    let (f, grid) = (study.focal_length, &study.grid);
    let screen = generate_diffuser_stream(grid, study.macro_pixel(), study.thickness_max, study.material, study.seed, r as u64)?;
    let element = ThinElement::Screen(&screen);
    let beam = gaussian_source(study.beam_waist, (0.0, 0.0), grid, l0)?;
    let sampling = FarFieldSampling::OnGrid(study.far_grid()?);
    let roi = study.roi()?;
    let classical = |l: f64| classical_farfield(element, &beam, l, f, sampling);
    let pair = |lp: f64, lm: f64| two_photon_farfield(element, &beam, lp, lm, f, sampling);

    let s_ref = pair(l0, l0)?;
    let mut classical_pcc = vec![1.0];
    let mut spdc_pcc = vec![1.0];
    for &s in &study.separations[1..] {
        let (lp, lm) = pair_wavelengths(l0, s);
        classical_pcc.push(pearson_correlation(&classical(lp)?, &classical(lm)?, &roi)?);
        spdc_pcc.push(pearson_correlation(&pair(lp, lm)?, &s_ref, &roi)?);
    }
    let band = study.band();
    let w0 = omega_of(l0);
    let mut cl = Vec::with_capacity(band.len());
    let mut sp = Vec::with_capacity(band.len());
    for &l in &band {
        cl.push(classical(l)?);
        sp.push(pair(wavelength_of(2.0 * w0 - omega_of(l)), l)?);
    }
    let weights = vec![1.0 / band.len() as f64; band.len()];
    let classical_sum = incoherent_sum(&cl.iter().collect::<Vec<_>>(), &weights)?.with_label("classical band sum");
    let spdc_sum = incoherent_sum(&sp.iter().collect::<Vec<_>>(), &weights)?.with_label("coincidence band sum");
    Ok(Realization {
        classical_pcc,
        spdc_pcc,
        classical_contrast: speckle_contrast(&classical_sum, &roi)?,
        spdc_contrast: speckle_contrast(&spdc_sum, &roi)?,
        classical_sum,
        spdc_sum,
    })
}

/// Correlation curves and band sums over all realizations. Realization `r`
/// uses generator stream `r` of `seed`.
pub fn run_diffuser_study(study: &DiffuserStudy) -> Result<DiffuserOutput> {
    study.validate()?;
    let runs = (0..study.realizations)
        .into_par_iter()
        .map(|r| realization(study, r))
        .collect::<Result<Vec<_>>>()?;
    let n = study.separations.len();
    let collect = |pick: fn(&Realization) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..n).map(|j| runs.iter().map(|r| pick(r)[j]).collect()).collect()
    };
    let label = format!("diffuser t_max={:.3e} m", study.thickness_max);
    let classical = CorrelationCurve::from_samples(Channel::Classical, label.clone(), &study.separations, &collect(|r| &r.classical_pcc));
    let spdc = CorrelationCurve::from_samples(Channel::Spdc, label, &study.separations, &collect(|r| &r.spdc_pcc));
    let m = runs.len() as f64;
    Ok(DiffuserOutput {
        classical,
        spdc,
        classical_contrast: runs.iter().map(|r| r.classical_contrast).sum::<f64>() / m,
        spdc_contrast: runs.iter().map(|r| r.spdc_contrast).sum::<f64>() / m,
        classical_sum: runs[0].classical_sum.clone(),
        spdc_sum: runs[0].spdc_sum.clone(),
    })
}
