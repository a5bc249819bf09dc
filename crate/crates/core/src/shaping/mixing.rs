//! How far an SLM mask scrambles the fiber-mode content of a field.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::SlmMask;
use crate::error::{config_err, Result};
use crate::fiber::ModeBasis;
use crate::field::gaussian_source;
use crate::twophoton::TwoPhotonModeState;

/// Pair state after both photons cross `mask` at the input facet:
/// `C'_nm = ∫ f_n⁺ e^{2iφ} f_m⁻`.
pub fn masked_input_state(plus: &ModeBasis, minus: &ModeBasis, mask: &SlmMask) -> Result<TwoPhotonModeState> {
    let grid = *plus.grid();
    grid.check_congruent(minus.grid(), "ω₊ vs ω₋ basis")?;
    let t = mask.transmission(&grid, 2.0)?;
    let p2 = grid.pitch * grid.pitch;
    let fm = minus.profiles();
    let weighted = |part: fn(&Complex64) -> f64| {
        let w: Array1<f64> = t.iter().map(part).collect();
        let mut scaled = fm.clone();
        for mut row in scaled.rows_mut() {
            row *= &w;
        }
        plus.profiles().dot(&scaled.t())
    };
    let re = weighted(|v| v.re);
    let im = weighted(|v| v.im);
    let c = Array2::from_shape_fn(re.dim(), |(n, m)| Complex64::new(re[[n, m]], im[[n, m]]) * p2);
    TwoPhotonModeState::new(c, 0.0)
}

/// Mode-power distributions before and after a mask placed at the output of
/// `length` of fiber, for a seeded off-axis Gaussian input.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingReport {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// Bhattacharyya overlap `Σ √(p_n q_n)`; 1 means no mixing.
    pub overlap: f64,
    /// Input spot center, meters.
    pub input_center: (f64, f64),
}

const PROBE_WAIST: f64 = 3e-6;

fn normalized_powers(c: &Array1<Complex64>) -> Vec<f64> {
    let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    c.iter().map(|v| v.norm_sqr() / total).collect()
}

/// The probe is a 3 µm Gaussian centered at a point drawn uniformly within
/// half the core radius from `ChaCha20Rng::seed_from_u64(seed)`.
pub fn slm_mode_mixing_diagnostic(basis: &ModeBasis, mask: &SlmMask, seed: u64, length: f64) -> Result<MixingReport> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(config_err("length", format!("{length} must be non-negative")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r = 0.5 * basis.fiber().core_radius * rng.gen::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let center = (r * theta.cos(), r * theta.sin());
    let probe = gaussian_source(PROBE_WAIST, center, basis.grid(), basis.wavelength())?;
    let c = basis.decompose(&probe)? * &basis.phases(length);
    let out = mask.apply(&basis.compose(&c)?, 1.0)?;
    let before = normalized_powers(&c);
    let after = normalized_powers(&basis.decompose(&out)?);
    let overlap = before.iter().zip(&after).map(|(p, q)| (p * q).sqrt()).sum();
    Ok(MixingReport { before, after, overlap, input_center: center })
}
