//! Residual phases of classical and two-photon propagation.
//!
//! With `ω± = ω₀ ± Δω` and the idler shifted by the pump bandwidth `ε_p`:
//!
//! - classical `Δ_n^(cl) = β_n′ Δω L`
//! - two-photon `Δ_n^(2p) = β_n″ Δω² L ± β_n′ ε_p L`
//! - cross `Δ_nm^(cross) = (β_n′ − β_m′) Δω L`
//!
//! Exact values difference `β` itself. Because the core index is constant,
//! the `n_core ω/c` part is carried analytically and only the deficits `δ`
//! are differenced.

use crate::error::{config_err, Result};
use crate::fiber::radial::solve_radial;
use crate::fiber::{deficit_of, deficits_at, dispersion_table, omega_of, FiberSpec, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeResidual {
    pub l: u32,
    pub p: u32,
    pub beta1: f64,
    pub beta2: f64,
    /// `β′ΔωL`.
    pub classical: f64,
    /// `β″Δω²L + β′ε_pL` and `β″Δω²L − β′ε_pL`.
    pub two_photon: [f64; 2],
    /// `[β(ω₀+Δω) − β(ω₀)]L`.
    pub classical_exact: Option<f64>,
    /// `[β(ω₀+Δω) + β(ω₀−Δω±ε_p) − 2β(ω₀)]L` for both signs.
    pub two_photon_exact: Option<[f64; 2]>,
    deficit0: f64,
    deficit_plus: Option<f64>,
    deficit_minus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseResidualTable {
    pub wavelength: f64,
    pub delta_omega: f64,
    pub length: f64,
    pub pump_bandwidth: f64,
    pub modes: Vec<ModeResidual>,
}

impl PhaseResidualTable {
    /// `(β_n′ − β_m′)ΔωL` for table rows `n`, `m`.
    pub fn cross(&self, n: usize, m: usize) -> f64 {
        (self.modes[n].beta1 - self.modes[m].beta1) * self.delta_omega * self.length
    }

    /// `[β_n(ω₊) + β_m(ω₋) − β_n(ω₀) − β_m(ω₀)]L`, without the pump offset.
    pub fn cross_exact(&self, n: usize, m: usize) -> Option<f64> {
        let (a, b) = (&self.modes[n], &self.modes[m]);
        let dn = a.deficit_plus? - a.deficit0;
        let dm = b.deficit_minus? - b.deficit0;
        Some(-(dn + dm) * self.length)
    }

    pub fn get(&self, l: u32, p: u32) -> Option<&ModeResidual> {
        self.modes.iter().find(|m| m.l == l && m.p == p)
    }
}

/// Residual phases for every mode with resolved dispersion at `wavelength`.
pub fn phase_residuals(
    fiber: &FiberSpec,
    wavelength: f64,
    delta_omega: f64,
    length: f64,
    pump_bandwidth: f64,
) -> Result<PhaseResidualTable> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(config_err("length", format!("{length} must be non-negative")));
    }
    if !delta_omega.is_finite() || !(pump_bandwidth >= 0.0 && pump_bandwidth.is_finite()) {
        return Err(config_err("detuning", "Δω and ε_p must be finite, ε_p ≥ 0"));
    }
    let omega0 = omega_of(wavelength);
    let table = dispersion_table(fiber, wavelength)?;
    let center: Vec<_> = solve_radial(fiber, wavelength)?
        .into_iter()
        .filter(|m| table.get(m.l, m.p).is_some())
        .collect();
    let at = |dw: f64| -> Result<Vec<Option<f64>>> {
        if dw == 0.0 {
            Ok(center.iter().map(|m| Some(deficit_of(fiber, omega0, m.mu))).collect())
        } else {
            deficits_at(fiber, &center, omega0 + dw)
        }
    };
    let plus = at(delta_omega)?;
    let minus = at(-delta_omega)?;
    let (idler_a, idler_b) = if pump_bandwidth == 0.0 {
        (minus.clone(), minus.clone())
    } else {
        (at(-delta_omega + pump_bandwidth)?, at(-delta_omega - pump_bandwidth)?)
    };
    let n_over_c = fiber.core_index() / SPEED_OF_LIGHT;
    let modes = center
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let d = table.get(m.l, m.p).expect("filtered above");
            let d0 = deficit_of(fiber, omega0, m.mu);
            let classical_exact = plus[i].map(|dp| (n_over_c * delta_omega - (dp - d0)) * length);
            let two_photon_exact = match (plus[i], idler_a[i], idler_b[i]) {
                (Some(dp), Some(da), Some(db)) => Some([
                    (n_over_c * pump_bandwidth - (dp + da - 2.0 * d0)) * length,
                    (-n_over_c * pump_bandwidth - (dp + db - 2.0 * d0)) * length,
                ]),
                _ => None,
            };
            let gvd = d.beta2 * delta_omega * delta_omega * length;
            let pump = d.beta1 * pump_bandwidth * length;
            ModeResidual {
                l: m.l,
                p: m.p,
                beta1: d.beta1,
                beta2: d.beta2,
                classical: d.beta1 * delta_omega * length,
                two_photon: [gvd + pump, gvd - pump],
                classical_exact,
                two_photon_exact,
                deficit0: d0,
                deficit_plus: plus[i],
                deficit_minus: minus[i],
            }
        })
        .collect();
    Ok(PhaseResidualTable { wavelength, delta_omega, length, pump_bandwidth, modes })
}
