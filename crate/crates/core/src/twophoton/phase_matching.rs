//! Finite phase matching: the pump Gaussian and the crystal sinc as a kernel
//! between signal and idler mode spectra.
//!
//! In the fiber plane the joint amplitude factorizes over sum and difference
//! coordinates. With the pump field `g(X) = exp(−|X|²/w_f²)`, `w_f = √2/(Mσ)`,
//!
//! `g((x+y)/2) = p(x)·p(y)·e^{|x−y|²/(4w_f²)}`,  `p(x) = e^{−|x|²/(2w_f²)}`,
//!
//! so `C_nm = ∬ (p f_n)(x) Φ(x−y) (p f_m)(y)` where `Φ` is the inverse
//! transform of `sinc(4b|κ|²)`, `b = L_c/(4k_pM²)`, times the lag Gaussian.
//! `Φ` is real and even, so `C` is one weighted inner product of the mode
//! spectra on the padded grid.

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use super::{pair_detuning, SpdcSpec, TwoPhotonModeState};
use crate::error::{Error, Result};
use crate::fiber::ModeBasis;
use crate::field::{fft2_inplace, fft_frequencies, Direction, Grid};

/// Kernel is tapered to zero between these multiples of `k₀·NA`.
const TAPER_START: f64 = 1.3;
const TAPER_END: f64 = 1.5;
/// Largest mode energy fraction allowed outside the spectral disk.
const MAX_OUTSIDE: f64 = 0.01;
/// Cap on the lag Gaussian `e^{|ξ|²/(4w_f²)}` over the window.
const MAX_LAG_GAIN: f64 = 1e6;

/// Pump-field width in the fiber plane, `None` for a plane-wave pump.
fn fiber_plane_width(spdc: &SpdcSpec) -> Option<f64> {
    (spdc.pump_waist_kspace > 0.0).then(|| std::f64::consts::SQRT_2 / (spdc.magnification * spdc.pump_waist_kspace))
}

fn envelope(grid: &Grid, w_f: Option<f64>) -> Vec<f64> {
    let mut p = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let r2 = grid.x(c).powi(2) + grid.y(r).powi(2);
            p.push(w_f.map_or(1.0, |w| (-r2 / (2.0 * w * w)).exp()));
        }
    }
    p
}

fn disk_cut(basis: &ModeBasis, spdc: &SpdcSpec) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / spdc.central_wavelength();
    TAPER_END * k0 * basis.fiber().numerical_aperture
}

/// Padded spectra of `p·f_n` restricted to a disk around `q = 0`.
#[derive(Clone, Debug)]
pub struct ModeSpectra {
    padded: Grid,
    q_cut: f64,
    w_f: Option<f64>,
    /// Flat indices into the padded spectrum.
    disk: Vec<usize>,
    re: Array2<f64>,
    im: Array2<f64>,
}

impl ModeSpectra {
    /// Transforms every mode once. Reusable for all crystal lengths sharing
    /// the pump width and magnification.
    pub fn new(basis: &ModeBasis, spdc: &SpdcSpec) -> Result<Self> {
        let g = *basis.grid();
        let padded = Grid::new(2 * g.rows, 2 * g.cols, g.pitch, g.origin)?;
        let w_f = fiber_plane_width(spdc);
        if let Some(w) = w_f {
            if w < 2.0 * g.pitch {
                return Err(Error::UnderResolved {
                    what: format!("pump image width {w:.3e} m"),
                    required_pitch: w / 2.0,
                    pitch: g.pitch,
                });
            }
        }
        let q_cut = disk_cut(basis, spdc);
        let qx = fft_frequencies(padded.cols, g.pitch);
        let qy = fft_frequencies(padded.rows, g.pitch);
        let nyquist = std::f64::consts::PI / g.pitch;
        if q_cut >= nyquist {
            return Err(Error::KernelUnderSampled(format!(
                "spectral disk {q_cut:.3e} rad/m exceeds Nyquist {nyquist:.3e}; pitch must be below {:.3e} m",
                std::f64::consts::PI / q_cut
            )));
        }
        let mut disk = Vec::new();
        for r in 0..padded.rows {
            for c in 0..padded.cols {
                if qx[c].hypot(qy[r]) <= q_cut {
                    disk.push(r * padded.cols + c);
                }
            }
        }
        let p = envelope(&g, w_f);
        let n = basis.len();
        let mut re = Array2::<f64>::zeros((n, disk.len()));
        let mut im = Array2::<f64>::zeros((n, disk.len()));
        let (pr, pc) = (padded.rows, padded.cols);
        let (r0, c0) = ((pr - g.rows) / 2, (pc - g.cols) / 2);
        let profiles = basis.profiles();
        let mut worst = (0.0f64, 0usize);
        // Two real modes per complex transform.
        for pair in (0..n).collect::<Vec<_>>().chunks(2) {
            let mut z = Array2::<Complex64>::zeros((pr, pc));
            for r in 0..g.rows {
                for c in 0..g.cols {
                    let i = r * g.cols + c;
                    let a = profiles[[pair[0], i]] * p[i];
                    let b = pair.get(1).map_or(0.0, |&m| profiles[[m, i]] * p[i]);
                    z[[r0 + r, c0 + c]] = Complex64::new(a, b);
                }
            }
            fft2_inplace(&mut z, Direction::Forward);
            let zf = z.as_slice().expect("standard layout");
            let neg = |k: usize| {
                let (r, c) = (k / pc, k % pc);
                ((pr - r) % pr) * pc + (pc - c) % pc
            };
            for (slot, &m) in pair.iter().enumerate() {
                let mut total = 0.0;
                let mut inside = 0.0;
                let spectrum = |k: usize| {
                    let (zk, zn) = (zf[k], zf[neg(k)].conj());
                    if slot == 0 {
                        (zk + zn) * 0.5
                    } else {
                        (zk - zn) * Complex64::new(0.0, -0.5)
                    }
                };
                for k in 0..zf.len() {
                    total += spectrum(k).norm_sqr();
                }
                for (j, &k) in disk.iter().enumerate() {
                    let v = spectrum(k);
                    inside += v.norm_sqr();
                    re[[m, j]] = v.re;
                    im[[m, j]] = v.im;
                }
                let outside = 1.0 - inside / total;
                if outside > worst.0 {
                    worst = (outside, m);
                }
            }
        }
        if worst.0 > MAX_OUTSIDE {
            return Err(Error::KernelUnderSampled(format!(
                "mode {} keeps {:.2}% of its spectral energy beyond {q_cut:.3e} rad/m; a finer-pitch grid or lower NA is required",
                basis.modes()[worst.1].label(),
                100.0 * worst.0
            )));
        }
        Ok(Self { padded, q_cut, w_f, disk, re, im })
    }

    pub fn len(&self) -> usize {
        self.re.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.re.nrows() == 0
    }

    /// Number of spectral samples kept.
    pub fn disk_len(&self) -> usize {
        self.disk.len()
    }

    /// `C_nm = (p⁴/N²) Σ_κ conj(Â_n) Φ̂ B̂_m` on the disk.
    pub fn couple(&self, other: &ModeSpectra, kernel: &PhaseMatchingKernel) -> Result<Array2<Complex64>> {
        if self.disk != other.disk || self.padded != other.padded || kernel.disk_len() != self.disk.len() {
            return Err(Error::GridMismatch("mode spectra and kernel use different spectral windows".into()));
        }
        let phi = &kernel.values;
        let weighted = |m: &Array2<f64>| {
            let mut w = m.clone();
            for mut row in w.axis_iter_mut(Axis(0)) {
                row *= phi;
            }
            w
        };
        let (ar, ai) = (weighted(&self.re), weighted(&self.im));
        let re = ar.dot(&other.re.t()) + ai.dot(&other.im.t());
        let im = ar.dot(&other.im.t()) - ai.dot(&other.re.t());
        let p = self.padded.pitch;
        let scale = p.powi(4) / self.padded.len() as f64;
        Ok(Array2::from_shape_fn(re.dim(), |(n, m)| Complex64::new(re[[n, m]], im[[n, m]]) * scale))
    }
}

/// Real weights `Φ̂(κ)` on the spectral disk of a [`ModeSpectra`].
#[derive(Clone, Debug)]
pub struct PhaseMatchingKernel {
    values: ndarray::Array1<f64>,
}

impl PhaseMatchingKernel {
    pub fn new(spectra: &ModeSpectra, spdc: &SpdcSpec) -> Result<Self> {
        let grid = spectra.padded;
        let (pr, pc) = (grid.rows, grid.cols);
        let p = grid.pitch;
        let qx = fft_frequencies(pc, p);
        let qy = fft_frequencies(pr, p);
        let q_cut = spectra.q_cut;
        let q_start = q_cut * TAPER_START / TAPER_END;
        let b = spdc.crystal_length / (4.0 * spdc.pump_wavenumber() * spdc.magnification.powi(2));

        // The sinc chirp reaches lags of 8bκ; it must fit in the padded window
        // so the periodic kernel is unambiguous for every in-window lag.
        let chirp = 8.0 * b * q_cut;
        let half_window = 0.5 * (pr.min(pc) as f64) * p;
        if chirp >= half_window {
            return Err(Error::KernelUnderSampled(format!(
                "phase-matching kernel spans lags up to {chirp:.3e} m but the padded window half-width is \
                 {half_window:.3e} m; a field grid of at least {} samples per side is required",
                (2.0 * chirp / p).ceil() as usize
            )));
        }
        if let Some(w) = spectra.w_f {
            let gain = (2.0 * half_window * half_window / (4.0 * w * w)).exp();
            if gain > MAX_LAG_GAIN {
                return Err(Error::KernelUnderSampled(format!(
                    "pump image width {w:.3e} m is too narrow for the {half_window:.3e} m window (lag gain {gain:.1e})"
                )));
            }
        }

        let mut s = Array2::<Complex64>::zeros((pr, pc));
        for ((r, c), v) in s.indexed_iter_mut() {
            let q = qx[c].hypot(qy[r]);
            let taper = if q <= q_start {
                1.0
            } else if q >= q_cut {
                0.0
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * (q - q_start) / (q_cut - q_start)).cos())
            };
            *v = Complex64::new(sinc(4.0 * b * q * q) * taper, 0.0);
        }
        fft2_inplace(&mut s, Direction::Inverse);
        // s now holds N²·p²·Φ at lag samples (wrapped order) before the gain.
        let norm = 1.0 / (grid.len() as f64 * p * p);
        for ((r, c), v) in s.indexed_iter_mut() {
            let xi2 = lag(c, pc, p).powi(2) + lag(r, pr, p).powi(2);
            let gain = spectra.w_f.map_or(1.0, |w| (xi2 / (4.0 * w * w)).exp());
            *v = Complex64::new(v.re * norm * gain, 0.0);
        }
        fft2_inplace(&mut s, Direction::Forward);
        let flat = s.as_slice().expect("standard layout");
        let values = spectra.disk.iter().map(|&k| flat[k].re).collect();
        Ok(Self { values })
    }

    pub fn disk_len(&self) -> usize {
        self.values.len()
    }
}

/// Signed displacement of DFT sample `k` in wrapped order.
fn lag(k: usize, n: usize, pitch: f64) -> f64 {
    let m = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    m * pitch
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `C_nm` from the pump Gaussian and crystal sinc, normalized to unit
/// Frobenius norm.
///
/// `L_c = 0` evaluates `∫ f_n⁺ f_m⁻ p²` directly; a zero pump width sets
/// `p ≡ 1`.
pub fn cnm_finite_phase_matching(plus: &ModeBasis, minus: &ModeBasis, spdc: &SpdcSpec) -> Result<TwoPhotonModeState> {
    plus.grid().check_congruent(minus.grid(), "ω₊ vs ω₋ basis")?;
    let c = if spdc.crystal_length == 0.0 {
        let p = envelope(plus.grid(), fiber_plane_width(spdc));
        let mut fp = plus.profiles().clone();
        for mut row in fp.axis_iter_mut(Axis(0)) {
            for (v, w) in row.iter_mut().zip(&p) {
                *v *= w * w;
            }
        }
        let pitch2 = plus.grid().pitch.powi(2);
        fp.dot(&minus.profiles().t()).mapv(|v| Complex64::new(v * pitch2, 0.0))
    } else {
        let sp = ModeSpectra::new(plus, spdc)?;
        let sm = ModeSpectra::new(minus, spdc)?;
        let kernel = PhaseMatchingKernel::new(&sp, spdc)?;
        sp.couple(&sm, &kernel)?
    };
    TwoPhotonModeState::new(c, pair_detuning(plus, minus))?.normalized()
}
