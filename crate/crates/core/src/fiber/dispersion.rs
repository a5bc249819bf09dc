//! Frequency derivatives of propagation constants.
//!
//! With a dispersion-free core index, `β = n_core·ω/c − δ(ω)` where the
//! deficit `δ = μ/(k n_core + β)` is small and smooth, so derivatives are
//! taken on `δ` by Richardson-extrapolated central differences. The linear
//! part is exact.

use crate::error::{config_err, Error, Result};

use super::radial::{solve_radial, solve_radial_order, RadialMode};
use super::{omega_of, wavelength_of, FiberSpec, SPEED_OF_LIGHT};

/// Relative frequency step of the first difference pair.
const REL_STEP: f64 = 1e-3;
/// Number of radial samples used to match modes across frequencies.
const MATCH_SAMPLES: usize = 600;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeDispersion {
    pub l: u32,
    pub p: u32,
    pub beta: f64,
    /// `∂β/∂ω` in s/m.
    pub beta1: f64,
    /// `∂²β/∂ω²` in s²/m.
    pub beta2: f64,
}

/// Dispersion of every guided radial mode at one wavelength.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionTable {
    pub wavelength: f64,
    pub entries: Vec<ModeDispersion>,
    /// Modes too close to cutoff to difference across the step.
    pub unresolved: Vec<(u32, u32)>,
}

impl DispersionTable {
    pub fn get(&self, l: u32, p: u32) -> Option<&ModeDispersion> {
        self.entries.iter().find(|e| e.l == l && e.p == p)
    }
}

fn deficit(fiber: &FiberSpec, omega: f64, mu: f64) -> f64 {
    let kn = omega / SPEED_OF_LIGHT * fiber.core_index();
    let beta = (kn * kn - mu).sqrt();
    mu / (kn + beta)
}

fn match_radius(fiber: &FiberSpec) -> Vec<f64> {
    let r_max = 2.0 * fiber.core_radius;
    (0..MATCH_SAMPLES)
        .map(|i| (i as f64 + 0.5) * r_max / MATCH_SAMPLES as f64)
        .collect()
}

/// Normalized radial overlap `∫R₁R₂ r dr / (‖R₁‖‖R₂‖)`.
fn overlap(a: &[f64], b: &[f64], r: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for ((x, y), rr) in a.iter().zip(b).zip(r) {
        ab += x * y * rr;
        aa += x * x * rr;
        bb += y * y * rr;
    }
    ab / (aa * bb).sqrt()
}

/// Deficit of the mode at `omega` that best matches reference profile
/// `reference` among candidates with azimuthal order `l`.
fn matched_deficit(
    fiber: &FiberSpec,
    omega: f64,
    l: u32,
    p: u32,
    reference: &[f64],
    candidates: &[(RadialMode, Vec<f64>)],
    radii: &[f64],
) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (c, prof) in candidates.iter().filter(|c| c.0.l == l) {
        let o = overlap(reference, prof, radii).abs();
        if best.map_or(true, |(bo, _)| o > bo) {
            best = Some((o, c.mu));
        }
    }
    match best {
        Some((o, mu)) if o >= 0.5 => Ok(deficit(fiber, omega, mu)),
        other => Err(Error::ModeMatch {
            mode: format!("LP{l}{p} at {:.6e} m", wavelength_of(omega)),
            overlap: other.map_or(0.0, |(o, _)| o),
        }),
    }
}

fn sampled(modes: Vec<RadialMode>, fiber: &FiberSpec, radii: &[f64]) -> Vec<(RadialMode, Vec<f64>)> {
    modes
        .into_iter()
        .map(|m| {
            let s = m.sample(radii, fiber.core_radius);
            (m, s)
        })
        .collect()
}

struct Stencil {
    h: f64,
    /// Deficits at ω₀ ± h, ω₀ ± h/2.
    plus: f64,
    minus: f64,
    half_plus: f64,
    half_minus: f64,
}

fn derivative_estimates(s: &Stencil, d0: f64) -> (f64, f64, f64, f64) {
    let h = s.h;
    let d1_h = (s.plus - s.minus) / (2.0 * h);
    let d1_half = (s.half_plus - s.half_minus) / h;
    let d2_h = (s.plus + s.minus - 2.0 * d0) / (h * h);
    let d2_half = (s.half_plus + s.half_minus - 2.0 * d0) / (0.25 * h * h);
    (d1_h, d1_half, d2_h, d2_half)
}

/// `∂β/∂ω` (`order` 1) or `∂²β/∂ω²` (`order` 2) of mode LP_lp.
pub fn beta_derivatives(fiber: &FiberSpec, l: u32, p: u32, wavelength: f64, order: u8) -> Result<f64> {
    if order != 1 && order != 2 {
        return Err(config_err("order", format!("{order} must be 1 or 2")));
    }
    let omega0 = omega_of(wavelength);
    let radii = match_radius(fiber);
    let center = solve_radial_order(fiber, wavelength, l)?;
    let reference = center.iter().find(|m| m.p == p).ok_or_else(|| Error::ModeMatch {
        mode: format!("LP{l}{p} is not guided at {wavelength:.6e} m"),
        overlap: 0.0,
    })?;
    let ref_profile = reference.sample(&radii, fiber.core_radius);
    let d0 = deficit(fiber, omega0, reference.mu);

    let mut h = REL_STEP * omega0;
    for _ in 0..6 {
        let at = |omega: f64| -> Result<f64> {
            let cands = sampled(solve_radial_order(fiber, wavelength_of(omega), l)?, fiber, &radii);
            matched_deficit(fiber, omega, l, p, &ref_profile, &cands, &radii)
        };
        let s = Stencil {
            h,
            plus: at(omega0 + h)?,
            minus: at(omega0 - h)?,
            half_plus: at(omega0 + 0.5 * h)?,
            half_minus: at(omega0 - 0.5 * h)?,
        };
        let (d1_h, d1_half, d2_h, d2_half) = derivative_estimates(&s, d0);
        let beta1_h = fiber.core_index() / SPEED_OF_LIGHT - d1_h;
        let beta1_half = fiber.core_index() / SPEED_OF_LIGHT - d1_half;
        let (coarse, fine, rich) = if order == 1 {
            (beta1_h, beta1_half, fiber.core_index() / SPEED_OF_LIGHT - (4.0 * d1_half - d1_h) / 3.0)
        } else {
            (-d2_h, -d2_half, -(4.0 * d2_half - d2_h) / 3.0)
        };
        if (coarse - fine).abs() <= 0.01 * fine.abs() {
            return Ok(rich);
        }
        h *= 0.5;
    }
    Err(Error::ModeMatch {
        mode: format!("LP{l}{p}: derivative of order {order} did not stabilize under step halving"),
        overlap: 1.0,
    })
}

/// `β`, `β′`, `β″` for every guided radial mode at `wavelength`.
pub fn dispersion_table(fiber: &FiberSpec, wavelength: f64) -> Result<DispersionTable> {
    let omega0 = omega_of(wavelength);
    let radii = match_radius(fiber);
    let center = solve_radial(fiber, wavelength)?;
    let h = REL_STEP * omega0;
    let shifted: Vec<Vec<(RadialMode, Vec<f64>)>> = [h, -h, 0.5 * h, -0.5 * h]
        .iter()
        .map(|dw| {
            solve_radial(fiber, wavelength_of(omega0 + dw))
                .or_else(|e| match e {
                    Error::EmptyBasis { .. } => Ok(Vec::new()),
                    e => Err(e),
                })
                .map(|modes| sampled(modes, fiber, &radii))
        })
        .collect::<Result<_>>()?;

    let kn0 = omega0 / SPEED_OF_LIGHT * fiber.core_index();
    let mut entries = Vec::new();
    let mut unresolved = Vec::new();
    for m in &center {
        let prof = m.sample(&radii, fiber.core_radius);
        let d0 = deficit(fiber, omega0, m.mu);
        let ds: Result<Vec<f64>> = shifted
            .iter()
            .zip([h, -h, 0.5 * h, -0.5 * h])
            .map(|(c, dw)| matched_deficit(fiber, omega0 + dw, m.l, m.p, &prof, c, &radii))
            .collect();
        let Ok(ds) = ds else {
            unresolved.push((m.l, m.p));
            continue;
        };
        let s = Stencil { h, plus: ds[0], minus: ds[1], half_plus: ds[2], half_minus: ds[3] };
        let (d1_h, d1_half, d2_h, d2_half) = derivative_estimates(&s, d0);
        entries.push(ModeDispersion {
            l: m.l,
            p: m.p,
            beta: (kn0 * kn0 - m.mu).sqrt(),
            beta1: fiber.core_index() / SPEED_OF_LIGHT - (4.0 * d1_half - d1_h) / 3.0,
            beta2: -(4.0 * d2_half - d2_h) / 3.0,
        });
    }
    Ok(DispersionTable { wavelength, entries, unresolved })
}

/// Deficits `δ` at `omega` of the modes in `center`, matched by radial
/// shape. `None` where the mode is cut off or no candidate matches.
pub(crate) fn deficits_at(fiber: &FiberSpec, center: &[RadialMode], omega: f64) -> Result<Vec<Option<f64>>> {
    let radii = match_radius(fiber);
    let cands = match solve_radial(fiber, wavelength_of(omega)) {
        Ok(modes) => sampled(modes, fiber, &radii),
        Err(Error::EmptyBasis { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(center
        .iter()
        .map(|m| {
            let prof = m.sample(&radii, fiber.core_radius);
            matched_deficit(fiber, omega, m.l, m.p, &prof, &cands, &radii).ok()
        })
        .collect())
}

/// `δ = μ/(k n_core + β)` at `omega`.
pub(crate) fn deficit_of(fiber: &FiberSpec, omega: f64, mu: f64) -> f64 {
    deficit(fiber, omega, mu)
}
