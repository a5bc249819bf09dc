//! Coincidence amplitude with one detector fixed and the other scanned.
//!
//! Two equivalent routes are provided. [`PairChannel`] folds the crystal and
//! any free-space defocus into one coupling matrix `D` and evaluates
//! `A = Σ_nm D_nm e^{i(β_n⁺+β_m⁻)L} ⟨g|f_n⁺⟩ f_m⁻`.
//! [`coincidence_amplitude_sequential`] follows the advanced wave field by
//! field: back from the detector at ω₊, through the crystal, forward at ω₋.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use super::TwoPhotonModeState;
use crate::error::{config_err, Error, Result};
use crate::fiber::ModeBasis;
use crate::field::{angular_spectrum_propagate, angular_spectrum_round_trip, crop, zero_pad, ComplexField, IntensityMap};

/// How the crystal couples the ω₊ field back into the ω₋ field.
#[derive(Clone, Copy, Debug)]
pub enum CrystalKernel<'a> {
    /// Thin crystal: the field is reflected point by point, only its
    /// frequency changes.
    Mirror,
    /// Finite phase matching: the mode amplitudes at the crystal image plane
    /// are mapped by `C`.
    Modal(&'a TwoPhotonModeState),
}

/// Windows are padded by this factor before free-space steps so spreading
/// light does not wrap around.
const DEFOCUS_PAD: usize = 2;

fn padded_leg(field: &ComplexField, dz: f64) -> Result<ComplexField> {
    let g = *field.grid();
    let big = zero_pad(field, DEFOCUS_PAD * g.rows, DEFOCUS_PAD * g.cols)?;
    crop(&angular_spectrum_propagate(&big, dz), &g)
}

fn padded_round_trip(field: &ComplexField, dz: f64, wavelength: f64) -> Result<ComplexField> {
    let g = *field.grid();
    let big = zero_pad(field, DEFOCUS_PAD * g.rows, DEFOCUS_PAD * g.cols)?;
    crop(&angular_spectrum_round_trip(&big, dz, wavelength)?, &g)
}

/// `T[n, m] = ∫ f_m^{target} · op(f_n^{source})` for every source mode.
fn mapped_overlaps(
    source: &ModeBasis,
    target: &ModeBasis,
    op: impl Fn(&ComplexField) -> Result<ComplexField> + Sync,
) -> Result<Array2<Complex64>> {
    const CHUNK: usize = 16;
    let mut out = Array2::<Complex64>::zeros((source.len(), target.len()));
    let idx: Vec<usize> = (0..source.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let fields = chunk
            .par_iter()
            .map(|&n| op(&source.profile(n))?.with_wavelength(target.wavelength()))
            .collect::<Result<Vec<_>>>()?;
        let rows = target.decompose_many(&fields)?;
        for (i, &n) in chunk.iter().enumerate() {
            out.row_mut(n).assign(&rows.row(i));
        }
    }
    Ok(out)
}

fn check_pair(plus: &ModeBasis, minus: &ModeBasis, dz: f64, length: f64) -> Result<()> {
    plus.grid().check_congruent(minus.grid(), "ω₊ vs ω₋ basis")?;
    if !(dz >= 0.0 && dz.is_finite()) {
        return Err(config_err("defocus", format!("{dz} must be non-negative")));
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(config_err("length", format!("{length} must be non-negative")));
    }
    Ok(())
}

fn check_state(state: &TwoPhotonModeState, plus: &ModeBasis, minus: &ModeBasis) -> Result<()> {
    if state.shape() != (plus.len(), minus.len()) {
        return Err(Error::LengthMismatch {
            expected: plus.len() * minus.len(),
            got: state.shape().0 * state.shape().1,
        });
    }
    Ok(())
}

/// The detector mode as seen by the ω₊ basis: same samples, relabelled.
fn detector_in(basis: &ModeBasis, detector: &ComplexField) -> Result<ComplexField> {
    basis.grid().check_congruent(detector.grid(), "detector mode vs fiber grid")?;
    detector.clone().with_wavelength(basis.wavelength())
}

/// Coupling matrix and fiber phases for one (ω₊, ω₋) pair.
#[derive(Clone, Debug)]
pub struct PairChannel<'a> {
    plus: &'a ModeBasis,
    minus: &'a ModeBasis,
    coupling: Array2<Complex64>,
    phase_plus: Array1<Complex64>,
    phase_minus: Array1<Complex64>,
}

impl<'a> PairChannel<'a> {
    /// `dz` is the distance between the fiber facet and the crystal image
    /// plane; `length` the fiber length traversed at each frequency.
    pub fn new(
        plus: &'a ModeBasis,
        minus: &'a ModeBasis,
        kernel: CrystalKernel<'_>,
        dz: f64,
        length: f64,
    ) -> Result<Self> {
        check_pair(plus, minus, dz, length)?;
        let coupling = match kernel {
            CrystalKernel::Mirror if dz == 0.0 => super::cnm_thin_crystal(plus, minus)?.matrix().clone(),
            CrystalKernel::Mirror => {
                let lm = minus.wavelength();
                mapped_overlaps(plus, minus, |f| padded_round_trip(f, dz, lm))?
            }
            CrystalKernel::Modal(state) => {
                check_state(state, plus, minus)?;
                if dz == 0.0 {
                    state.matrix().clone()
                } else {
                    let mp = mapped_overlaps(plus, plus, |f| padded_leg(f, dz))?;
                    let mm = mapped_overlaps(minus, minus, |f| padded_leg(f, dz))?;
                    mp.dot(state.matrix()).dot(&mm)
                }
            }
        };
        Ok(Self {
            plus,
            minus,
            coupling,
            phase_plus: plus.phases(length),
            phase_minus: minus.phases(length),
        })
    }

    /// `D_nm`, rows over the ω₊ basis.
    pub fn coupling(&self) -> &Array2<Complex64> {
        &self.coupling
    }

    fn finish(&self, g: &Array1<Complex64>) -> Result<ComplexField> {
        let a: Array1<Complex64> = g.iter().zip(&self.phase_plus).map(|(c, p)| c.conj() * p).collect();
        let b = self.coupling.t().dot(&a) * &self.phase_minus;
        self.minus.compose(&b)
    }

    /// Coincidence amplitude over the scanned detector plane.
    pub fn amplitude(&self, detector: &ComplexField) -> Result<ComplexField> {
        let g = self.plus.decompose(&detector_in(self.plus, detector)?)?;
        self.finish(&g)
    }

    /// Amplitudes for several fixed-detector modes with one projection gemm.
    pub fn amplitudes(&self, detectors: &[ComplexField]) -> Result<Vec<ComplexField>> {
        let fields = detectors
            .iter()
            .map(|d| detector_in(self.plus, d))
            .collect::<Result<Vec<_>>>()?;
        let g = self.plus.decompose_many(&fields)?;
        let a = g.mapv(|c| c.conj()) * &self.phase_plus;
        let b = a.dot(&self.coupling) * &self.phase_minus;
        self.minus.compose_many(&b)
    }

    pub fn intensity(&self, detector: &ComplexField) -> Result<IntensityMap> {
        Ok(self.amplitude(detector)?.intensity("coincidence"))
    }
}

/// The advanced-wave chain evaluated on fields: conj(g) at ω₊ through the
/// fiber, `dz` of free space, the crystal, `dz` back, the fiber at ω₋.
pub fn coincidence_amplitude_sequential(
    plus: &ModeBasis,
    minus: &ModeBasis,
    kernel: CrystalKernel<'_>,
    dz: f64,
    length: f64,
    detector: &ComplexField,
) -> Result<ComplexField> {
    check_pair(plus, minus, dz, length)?;
    let mut back = detector_in(plus, detector)?;
    back.values_mut().mapv_inplace(|v| v.conj());
    let c = crate::fiber::propagate_in_fiber(&plus.decompose(&back)?, plus, length)?;
    let facet = plus.compose(&c)?;
    let returned = match kernel {
        CrystalKernel::Mirror => {
            let g = *facet.grid();
            let big = zero_pad(&facet, DEFOCUS_PAD * g.rows, DEFOCUS_PAD * g.cols)?;
            let there = angular_spectrum_propagate(&big, dz).with_wavelength(minus.wavelength())?;
            crop(&angular_spectrum_propagate(&there, dz), &g)?
        }
        CrystalKernel::Modal(state) => {
            check_state(state, plus, minus)?;
            let at_crystal = plus.decompose(&padded_leg(&facet, dz)?)?;
            let reflected = minus.compose(&state.matrix().t().dot(&at_crystal))?;
            padded_leg(&reflected, dz)?
        }
    };
    let c = crate::fiber::propagate_in_fiber(&minus.decompose(&returned)?, minus, length)?;
    minus.compose(&c)
}

/// `|A(x)|²` for a state `C` imaged directly onto the fiber facet.
pub fn coincidence_fiber_speckle(
    state: &TwoPhotonModeState,
    detector: &ComplexField,
    plus: &ModeBasis,
    minus: &ModeBasis,
    length: f64,
) -> Result<IntensityMap> {
    let channel = PairChannel::new(plus, minus, CrystalKernel::Modal(state), 0.0, length)?;
    Ok(channel
        .amplitude(detector)?
        .intensity(format!("coincidence Δω={:.4e} rad/s", state.detuning())))
}
