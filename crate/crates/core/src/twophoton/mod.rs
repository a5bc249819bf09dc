//! Biphoton state in the fiber-mode basis and the speckle it produces.
//!
//! The pair frequencies are `ω± = ω₀ ± Δω`. A [`TwoPhotonModeState`] stores
//! `C_nm`, the amplitude for the signal in mode `n` of the ω₊ basis and the
//! idler in mode `m` of the ω₋ basis.

mod awp;
mod phase_matching;
mod residuals;
mod scan;

pub(crate) use scan::Bases;

pub use awp::{coincidence_amplitude_sequential, coincidence_fiber_speckle, CrystalKernel, PairChannel};
pub use phase_matching::{cnm_finite_phase_matching, ModeSpectra, PhaseMatchingKernel};
pub use residuals::{phase_residuals, ModeResidual, PhaseResidualTable};
pub use scan::{
    apply_defocus_study, default_detunings, half_correlation_width, pair_wavelengths, run_detuning_scan, Channel, ClassicalOutput,
    CorrelationCurve, CorrelationPoint, CrystalModel, DetuningScan, FiberScenario, ScanOutput, ScanVariant,
    VariantOutput,
};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{config_err, Error, Result};
use crate::fiber::{omega_of, ModeBasis};
use crate::field::{ComplexField, IntensityMap};

/// Pump, crystal and imaging parameters for SPDC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdcSpec {
    pub pump_wavelength: f64,
    /// Angular-spectrum width of the pump, `√2 / w_pump` for a waist `w_pump`.
    pub pump_waist_kspace: f64,
    /// Zero selects the thin-crystal limit.
    pub crystal_length: f64,
    /// Demagnification from the crystal onto the fiber facet.
    pub magnification: f64,
    /// Pump bandwidth in rad/s.
    pub pump_bandwidth: f64,
    /// Refractive index entering `k_p = 2πn/λ_p`.
    pub crystal_index: f64,
}

impl SpdcSpec {
    pub fn new(
        pump_wavelength: f64,
        pump_waist_kspace: f64,
        crystal_length: f64,
        magnification: f64,
        pump_bandwidth: f64,
    ) -> Result<Self> {
        let spec = Self {
            pump_wavelength,
            pump_waist_kspace,
            crystal_length,
            magnification,
            pump_bandwidth,
            crystal_index: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parameters from a pump waist in meters (`σ = √2/w`).
    pub fn from_pump_waist(
        pump_wavelength: f64,
        pump_waist: f64,
        crystal_length: f64,
        magnification: f64,
    ) -> Result<Self> {
        if !(pump_waist > 0.0) {
            return Err(config_err("spdc.pump_waist", format!("{pump_waist} must be positive")));
        }
        Self::new(pump_wavelength, std::f64::consts::SQRT_2 / pump_waist, crystal_length, magnification, 0.0)
    }

    pub fn with_crystal_index(mut self, n: f64) -> Result<Self> {
        self.crystal_index = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_crystal_length(mut self, length: f64) -> Result<Self> {
        self.crystal_length = length;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.pump_wavelength > 0.0 && self.pump_wavelength.is_finite()) {
            return Err(config_err("spdc.pump_wavelength", format!("{} must be positive", self.pump_wavelength)));
        }
        if !(self.pump_waist_kspace >= 0.0 && self.pump_waist_kspace.is_finite()) {
            return Err(config_err("spdc.pump_waist_kspace", "must be finite and non-negative"));
        }
        if !(self.crystal_length >= 0.0 && self.crystal_length.is_finite()) {
            return Err(config_err("spdc.crystal_length", format!("{} must be non-negative", self.crystal_length)));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(config_err("spdc.magnification", format!("{} must be positive", self.magnification)));
        }
        if !(self.pump_bandwidth >= 0.0 && self.pump_bandwidth.is_finite()) {
            return Err(config_err("spdc.pump_bandwidth", "must be finite and non-negative"));
        }
        if !(self.crystal_index >= 1.0 && self.crystal_index.is_finite()) {
            return Err(config_err("spdc.crystal_index", format!("{} must be at least 1", self.crystal_index)));
        }
        Ok(())
    }

    /// Degenerate signal/idler wavelength `2λ_p`.
    pub fn central_wavelength(&self) -> f64 {
        2.0 * self.pump_wavelength
    }

    pub fn pump_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.crystal_index / self.pump_wavelength
    }

    /// Sinc width in the fiber plane, `√(L_c / (4 k_p M²))`.
    pub fn sinc_width(&self) -> f64 {
        (self.crystal_length / (4.0 * self.pump_wavenumber() * self.magnification.powi(2))).sqrt()
    }
}

/// `C_nm` over (basis at ω₊) × (basis at ω₋).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhotonModeState {
    c: Array2<Complex64>,
    detuning: f64,
}

impl TwoPhotonModeState {
    pub fn new(c: Array2<Complex64>, detuning: f64) -> Result<Self> {
        if c.is_empty() {
            return Err(config_err("state", "C must have at least one entry"));
        }
        if !detuning.is_finite() {
            return Err(config_err("state.detuning", "must be finite"));
        }
        Ok(Self { c, detuning })
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.c
    }

    /// `Δω = ω₊ − ω₀` in rad/s.
    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn shape(&self) -> (usize, usize) {
        self.c.dim()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Scaled to unit Frobenius norm.
    pub fn normalized(&self) -> Result<Self> {
        let f = self.frobenius_norm();
        if !(f > 0.0) {
            return Err(config_err("state", "C is identically zero"));
        }
        Ok(Self { c: &self.c / Complex64::new(f, 0.0), detuning: self.detuning })
    }

    /// `Σ_n |C_nn|² / Σ_nm |C_nm|²` over the leading square block.
    pub fn diagonal_power_fraction(&self) -> f64 {
        let total: f64 = self.c.iter().map(|v| v.norm_sqr()).sum();
        let k = self.c.nrows().min(self.c.ncols());
        let diag: f64 = (0..k).map(|n| self.c[[n, n]].norm_sqr()).sum();
        diag / total
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.c.rows().into_iter().map(|r| r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).collect()
    }

    /// Every entry multiplied by `e^{iθ}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let u = Complex64::from_polar(1.0, theta);
        Self { c: self.c.mapv(|v| v * u), detuning: self.detuning }
    }
}

/// Half the angular-frequency gap between two bases, `(ω₊ − ω₋)/2`.
pub(crate) fn pair_detuning(plus: &ModeBasis, minus: &ModeBasis) -> f64 {
    0.5 * (omega_of(plus.wavelength()) - omega_of(minus.wavelength()))
}

/// Thin-crystal state: `C_nm = ∫ f_n⁺ f_m⁻`, the cross-wavelength overlap.
///
/// Entries between different symmetry classes vanish identically on a grid
/// centered on the fiber axis and are set to zero there. The result is left in
/// overlap normalization; see [`TwoPhotonModeState::normalized`].
pub fn cnm_thin_crystal(plus: &ModeBasis, minus: &ModeBasis) -> Result<TwoPhotonModeState> {
    plus.grid().check_congruent(minus.grid(), "ω₊ vs ω₋ basis")?;
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::GridMismatch("cannot couple an empty basis".into()));
    }
    let p2 = plus.grid().pitch * plus.grid().pitch;
    let blocks_p = plus.symmetry_blocks();
    let blocks_m = minus.symmetry_blocks();
    let mut c = Array2::<Complex64>::zeros((plus.len(), minus.len()));
    for (bp, bm) in blocks_p.iter().zip(&blocks_m) {
        if bp.is_empty() || bm.is_empty() {
            continue;
        }
        let fp = plus.profiles().select(ndarray::Axis(0), bp);
        let fm = minus.profiles().select(ndarray::Axis(0), bm);
        let block = fp.dot(&fm.t());
        for (i, &n) in bp.iter().enumerate() {
            for (j, &m) in bm.iter().enumerate() {
                c[[n, m]] = Complex64::new(block[[i, j]] * p2, 0.0);
            }
        }
    }
    TwoPhotonModeState::new(c, pair_detuning(plus, minus))
}

/// [`classical_fiber_speckle`] for several inputs sharing one basis.
pub fn classical_fiber_speckles(inputs: &[ComplexField], basis: &ModeBasis, length: f64) -> Result<Vec<IntensityMap>> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(config_err("length", format!("{length} must be non-negative")));
    }
    let c = basis.decompose_many(inputs)? * &basis.phases(length);
    let label = format!("classical λ={:.4} nm L={length} m", basis.wavelength() * 1e9);
    Ok(basis.compose_many(&c)?.iter().map(|f| f.intensity(label.clone())).collect())
}

/// `|Σ_n c_n e^{iβ_n L} f_n|²` with `c = modal_decompose(input)`.
pub fn classical_fiber_speckle(input: &ComplexField, basis: &ModeBasis, length: f64) -> Result<IntensityMap> {
    let c = crate::fiber::modal_decompose(input, basis)?;
    let c = crate::fiber::propagate_in_fiber(&c, basis, length)?;
    let out = crate::fiber::modal_compose(&c, basis)?;
    Ok(out.intensity(format!("classical λ={:.4} nm L={length} m", basis.wavelength() * 1e9)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spdc_validation() {
        assert!(SpdcSpec::from_pump_waist(405e-9, 500e-6, 1e-3, 10.0).is_ok());
        assert!(SpdcSpec::from_pump_waist(405e-9, 500e-6, -1e-3, 10.0).is_err());
        assert!(SpdcSpec::from_pump_waist(405e-9, 500e-6, 1e-3, 0.0).is_err());
        let s = SpdcSpec::from_pump_waist(405e-9, 500e-6, 4e-3, 10.0).unwrap();
        assert!((s.central_wavelength() - 810e-9).abs() < 1e-12 * 810e-9);
        // k_p = 2π/405 nm, width √(L_c/(4 k_p M²))
        let kp = 2.0 * std::f64::consts::PI / 405e-9;
        assert!((s.sinc_width() - (4e-3 / (4.0 * kp * 100.0)).sqrt()).abs() < 1e-20);
    }

    #[test]
    fn state_normalization_and_phase() {
        let c = Array2::from_shape_fn((3, 3), |(i, j)| Complex64::new((i + 2 * j) as f64, i as f64 - 1.0));
        let s = TwoPhotonModeState::new(c, 1.0).unwrap().normalized().unwrap();
        assert!((s.frobenius_norm() - 1.0).abs() < 1e-12);
        let r = s.with_global_phase(0.7);
        assert!((r.frobenius_norm() - 1.0).abs() < 1e-12);
        assert!((r.diagonal_power_fraction() - s.diagonal_power_fraction()).abs() < 1e-14);
        assert!(TwoPhotonModeState::new(Array2::zeros((2, 2)), 0.0).unwrap().normalized().is_err());
    }
}
