//! Diffraction orders of a blazed grating: the infinite-grating model and
//! order powers integrated from simulated far fields.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::{classical_farfield, spot_width, two_photon_farfield, FarFieldSampling, GratingSpec, ThinElement};
use crate::error::{config_err, Result};
use crate::fiber::{omega_of, wavelength_of};
use crate::field::{gaussian_source, Grid, IntensityMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GratingChannel {
    Classical,
    Spdc,
}

impl GratingChannel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GratingChannel::Classical => "classical",
            GratingChannel::Spdc => "spdc",
        }
    }
}

/// One Gaussian peak of the far field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GratingOrder {
    pub order: i32,
    /// Peak position `x′_m = mλf/d`.
    pub center: f64,
    pub weight: f64,
    /// `λf/(πw₀)`.
    pub width: f64,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Orders of the infinite grating under a Gaussian beam of waist `w₀`.
///
/// `delta_k` is the wavenumber offset of the detected photon from
/// `k₀ = 2π/λ₀`. Classical weights are `sinc²(π(m − m_b(1 + δk/k₀)))` for
/// `m` in `orders`. The coincidence channel has a single peak at
/// `m = 2m_b` for any `δk`, because the two passes add to a ramp of exactly
/// twice the design slope.
pub fn grating_orders_analytical(
    spec: &GratingSpec,
    delta_k: f64,
    beam_waist: f64,
    focal_length: f64,
    channel: GratingChannel,
    orders: RangeInclusive<i32>,
) -> Result<Vec<GratingOrder>> {
    spec.validate()?;
    let k0 = 2.0 * std::f64::consts::PI / spec.design_wavelength;
    let k = k0 + delta_k;
    if !(k > 0.0 && k.is_finite()) {
        return Err(config_err("delta_k", format!("{delta_k} leaves no positive wavenumber")));
    }
    if !(beam_waist > 0.0 && focal_length > 0.0) {
        return Err(config_err("beam_waist", "beam waist and focal length must be positive"));
    }
    let lambda = 2.0 * std::f64::consts::PI / k;
    let width = spot_width(lambda, focal_length, beam_waist);
    let center = |m: i32| m as f64 * lambda * focal_length / spec.period;
    let mb = spec.blaze_order as f64;
    Ok(match channel {
        GratingChannel::Classical => {
            let alpha = mb * (1.0 + delta_k / k0);
            orders
                .map(|m| {
                    let s = sinc(std::f64::consts::PI * (m as f64 - alpha));
                    GratingOrder { order: m, center: center(m), weight: s * s, width }
                })
                .collect()
        }
        GratingChannel::Spdc => {
            let m = 2 * spec.blaze_order as i32;
            vec![GratingOrder { order: m, center: center(m), weight: 1.0, width }]
        }
    })
}

/// Order power and centroid read off a far-field map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericalOrder {
    pub order: i32,
    /// Fraction of the total far-field power.
    pub weight: f64,
    /// Intensity-weighted mean `x′` inside the order window.
    pub centroid: f64,
}

/// Power in the strips `x′ ∈ [(m−½), (m+½))·λf/d`, summed over `y′`.
pub fn grating_orders_numerical(
    map: &IntensityMap,
    spec: &GratingSpec,
    wavelength: f64,
    focal_length: f64,
    orders: RangeInclusive<i32>,
) -> Result<Vec<NumericalOrder>> {
    let g = map.grid();
    let v = map.values();
    let column: Vec<f64> = (0..g.cols).map(|c| v.column(c).sum()).collect();
    let total: f64 = column.iter().sum();
    if !(total > 0.0) {
        return Err(crate::error::Error::ZeroMean);
    }
    let spacing = wavelength * focal_length / spec.period;
    Ok(orders
        .map(|m| {
            let (lo, hi) = ((m as f64 - 0.5) * spacing, (m as f64 + 0.5) * spacing);
            let (mut p, mut px) = (0.0, 0.0);
            for (c, &w) in column.iter().enumerate() {
                let x = g.x(c);
                if x >= lo && x < hi {
                    p += w;
                    px += w * x;
                }
            }
            let centroid = if p > 0.0 { px / p } else { f64::NAN };
            NumericalOrder { order: m, weight: p / total, centroid }
        })
        .collect())
}

/// Grating far fields over a set of detected-photon wavelength offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct GratingStudy {
    pub spec: GratingSpec,
    pub grid: Grid,
    pub beam_waist: f64,
    pub focal_length: f64,
    /// `λ − λ₀` of the detected photon in meters.
    pub offsets: Vec<f64>,
    pub orders: RangeInclusive<i32>,
}

impl GratingStudy {
    /// 1024² samples at 1 µm, 16 µm period (64 periods across the window),
    /// 200 µm waist, `f = 10 cm`, offsets every 5 nm over ±40 nm.
    pub fn default_for(design_wavelength: f64) -> Result<Self> {
        Ok(Self {
            spec: GratingSpec::new(16e-6, design_wavelength, 1.5)?,
            grid: Grid::square(1024, 1e-6)?,
            beam_waist: 200e-6,
            focal_length: 0.1,
            offsets: (-8..=8).map(|i| i as f64 * 5e-9).collect(),
            orders: -2..=4,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.grid.rows != self.grid.cols {
            return Err(config_err("grid", "grating far fields need a square grid"));
        }
        let periods = self.grid.extent().0 / self.spec.period;
        if periods < 50.0 {
            return Err(config_err("grid", format!("window holds {periods:.1} grating periods, need at least 50")));
        }
        if !(self.beam_waist > 0.0 && 4.0 * self.beam_waist <= self.grid.extent().0) {
            return Err(config_err("beam_waist", "the beam must fit the window (4·w₀ ≤ extent)"));
        }
        if !(self.focal_length > 0.0) {
            return Err(config_err("focal_length", "must be positive"));
        }
        if self.offsets.is_empty() {
            return Err(config_err("offsets", "needs at least one wavelength offset"));
        }
        if self.offsets.iter().any(|o| !(self.spec.design_wavelength + o > 0.0)) {
            return Err(config_err("offsets", "every offset must leave a positive wavelength"));
        }
        if self.orders.is_empty() {
            return Err(config_err("orders", "empty order range"));
        }
        Ok(())
    }
}

/// One (offset, channel, order) entry of a grating study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GratingRow {
    pub delta_lambda: f64,
    pub channel: GratingChannel,
    pub order: i32,
    pub weight_analytical: f64,
    pub weight_numerical: f64,
    pub center_analytical: f64,
    pub centroid_numerical: f64,
}

impl GratingRow {
    pub fn write_csv(rows: &[GratingRow], mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "delta_lambda_nm,channel,order,weight_analytical,weight_numerical,center_analytical_m,centroid_numerical_m"
        )?;
        for r in rows {
            writeln!(
                out,
                "{:?},{},{},{:?},{:?},{:?},{:?}",
                r.delta_lambda * 1e9,
                r.channel.as_str(),
                r.order,
                r.weight_analytical,
                r.weight_numerical,
                r.center_analytical,
                r.centroid_numerical
            )?;
        }
        Ok(())
    }
}

/// Far-field maps of both channels for one detected-photon wavelength.
fn channel_maps(study: &GratingStudy, offset: f64) -> Result<[(GratingChannel, f64, IntensityMap); 2]> {
    let l0 = study.spec.design_wavelength;
    let lambda = l0 + offset;
    let beam = gaussian_source(study.beam_waist, (0.0, 0.0), &study.grid, l0)?;
    let element = ThinElement::Grating(&study.spec);
    let classical = classical_farfield(element, &beam, lambda, study.focal_length, FarFieldSampling::Fft)?;
    // The fixed photon carries the partner frequency 2ω₀ − ω.
    let partner = wavelength_of(2.0 * omega_of(l0) - omega_of(lambda));
    let spdc = two_photon_farfield(element, &beam, partner, lambda, study.focal_length, FarFieldSampling::Fft)?;
    Ok([(GratingChannel::Classical, lambda, classical), (GratingChannel::Spdc, lambda, spdc)])
}

/// Analytical and numerical order weights for every offset and channel.
pub fn run_grating_study(study: &GratingStudy) -> Result<Vec<GratingRow>> {
    study.validate()?;
    let k0 = 2.0 * std::f64::consts::PI / study.spec.design_wavelength;
    let per_offset = study
        .offsets
        .par_iter()
        .map(|&offset| {
            let mut rows = Vec::new();
            for (channel, lambda, map) in channel_maps(study, offset)? {
                let dk = 2.0 * std::f64::consts::PI / lambda - k0;
                let analytical = grating_orders_analytical(
                    &study.spec,
                    dk,
                    study.beam_waist,
                    study.focal_length,
                    channel,
                    study.orders.clone(),
                )?;
                let numerical =
                    grating_orders_numerical(&map, &study.spec, lambda, study.focal_length, study.orders.clone())?;
                for n in numerical {
                    let a = analytical.iter().find(|a| a.order == n.order);
                    rows.push(GratingRow {
                        delta_lambda: offset,
                        channel,
                        order: n.order,
                        weight_analytical: a.map_or(0.0, |a| a.weight),
                        weight_numerical: n.weight,
                        center_analytical: n.order as f64 * lambda * study.focal_length / study.spec.period,
                        centroid_numerical: n.centroid,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_offset.into_iter().flatten().collect())
}

/// Band-summed far-field profiles along `x′`, binned in units of the design
/// order spacing `λ₀f/d` with `bins_per_order` bins per order. Returns
/// `(u, classical, spdc)` rows with each channel normalized to unit sum.
pub fn grating_order_profile(study: &GratingStudy, bins_per_order: usize) -> Result<Vec<(f64, f64, f64)>> {
    study.validate()?;
    if bins_per_order == 0 {
        return Err(config_err("bins_per_order", "must be at least 1"));
    }
    let lo = *study.orders.start() as f64 - 0.5;
    let hi = *study.orders.end() as f64 + 0.5;
    let nbins = ((hi - lo) * bins_per_order as f64).round() as usize;
    let unit = study.spec.design_wavelength * study.focal_length / study.spec.period;
    let maps = study
        .offsets
        .par_iter()
        .map(|&o| channel_maps(study, o))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![[0.0f64; 2]; nbins];
    for pair in &maps {
        for (i, (_, _, map)) in pair.iter().enumerate() {
            let g = map.grid();
            for c in 0..g.cols {
                let u = g.x(c) / unit;
                if u >= lo && u < hi {
                    let b = (((u - lo) * bins_per_order as f64) as usize).min(nbins - 1);
                    acc[b][i] += map.values().column(c).sum();
                }
            }
        }
    }
    let sums = [acc.iter().map(|a| a[0]).sum::<f64>(), acc.iter().map(|a| a[1]).sum::<f64>()];
    Ok(acc
        .iter()
        .enumerate()
        .map(|(b, a)| {
            let u = lo + (b as f64 + 0.5) / bins_per_order as f64;
            (u, a[0] / sums[0], a[1] / sums[1])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_classical_is_all_first_order() {
        let gs = GratingSpec::new(16e-6, 808e-9, 1.5).unwrap();
        let o = grating_orders_analytical(&gs, 0.0, 200e-6, 0.1, GratingChannel::Classical, -3..=3).unwrap();
        for g in &o {
            let expect = if g.order == 1 { 1.0 } else { 0.0 };
            assert!((g.weight - expect).abs() < 1e-12, "{g:?}");
        }
        assert!((o[4].center - 808e-9 * 0.1 / 16e-6).abs() < 1e-15);
    }

    #[test]
    fn classical_weights_sum_to_one() {
        // Σ_m sinc²(π(m−α)) = 1 for any α.
        let gs = GratingSpec::new(16e-6, 808e-9, 1.5).unwrap();
        let k0 = 2.0 * std::f64::consts::PI / 808e-9;
        let o = grating_orders_analytical(&gs, 0.07 * k0, 200e-6, 0.1, GratingChannel::Classical, -4000..=4000)
            .unwrap();
        let s: f64 = o.iter().map(|g| g.weight).sum();
        assert!((s - 1.0).abs() < 1e-4);
    }

    #[test]
    fn spdc_has_a_single_second_order_peak() {
        let gs = GratingSpec::new(16e-6, 808e-9, 1.5).unwrap();
        let o = grating_orders_analytical(&gs, -3e5, 200e-6, 0.1, GratingChannel::Spdc, -3..=3).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].order, 2);
        let lambda = 2.0 * std::f64::consts::PI / (2.0 * std::f64::consts::PI / 808e-9 - 3e5);
        assert!((o[0].center - 2.0 * lambda * 0.1 / 16e-6).abs() < 1e-15);
    }
}
