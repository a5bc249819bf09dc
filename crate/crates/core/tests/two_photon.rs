use std::sync::OnceLock;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use qtp_core::fiber::*;
use qtp_core::field::{gaussian_source, pearson_correlation, ComplexField, Grid, IntensityMap, RegionOfInterest};
use qtp_core::twophoton::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const LAMBDA: f64 = 810e-9;

fn small_fiber() -> FiberSpec {
    FiberSpec::step_index(8e-6, 0.2, 0.1).unwrap()
}

fn small_grid() -> Grid {
    Grid::square(96, 0.25e-6).unwrap()
}

/// Bases of the small fiber at λ₀ and at a 2 nm pair separation.
fn small_pair() -> &'static (ModeBasis, ModeBasis, ModeBasis) {
    static B: OnceLock<(ModeBasis, ModeBasis, ModeBasis)> = OnceLock::new();
    B.get_or_init(|| {
        let scan = DetuningScan::new(LAMBDA, vec![0.0], 1, 0).unwrap();
        let (lp, lm) = scan.pair_wavelengths(2e-9);
        let f = small_fiber();
        let g = small_grid();
        (
            solve_modes(&f, LAMBDA, &g).unwrap(),
            solve_modes(&f, lp, &g).unwrap(),
            solve_modes(&f, lm, &g).unwrap(),
        )
    })
}

fn fig2_fiber() -> FiberSpec {
    FiberSpec::step_index(25e-6, 0.2, 0.1).unwrap()
}

fn fig2_grid() -> Grid {
    Grid::square(256, 0.3e-6).unwrap()
}

fn fig2_center() -> &'static ModeBasis {
    static B: OnceLock<ModeBasis> = OnceLock::new();
    B.get_or_init(|| solve_modes(&fig2_fiber(), LAMBDA, &fig2_grid()).unwrap())
}

fn max_abs(f: &ComplexField) -> f64 {
    f.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn max_rel_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    d / max_abs(a).max(max_abs(b))
}

fn random_state(n: usize, m: usize, seed: u64) -> TwoPhotonModeState {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = Array2::from_shape_fn((n, m), |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    TwoPhotonModeState::new(c, 0.0).unwrap().normalized().unwrap()
}

/// A speckle-like detector field: random complex Gaussian spots.
fn random_detector(grid: &Grid, seed: u64) -> ComplexField {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut acc = ComplexField::zeros(*grid, LAMBDA).unwrap();
    for _ in 0..5 {
        let c = (rng.gen_range(-6e-6..6e-6), rng.gen_range(-6e-6..6e-6));
        let w = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let g = gaussian_source(rng.gen_range(0.6e-6..2e-6), c, grid, LAMBDA).unwrap();
        for (a, b) in acc.values_mut().iter_mut().zip(g.values()) {
            *a += w * b;
        }
    }
    acc
}

#[test]
fn thin_crystal_is_identity_without_detuning() {
    let (b0, _, _) = small_pair();
    let s = cnm_thin_crystal(b0, b0).unwrap();
    assert_eq!(s.detuning(), 0.0);
    for ((i, j), v) in s.matrix().indexed_iter() {
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((v - want).norm() < 1e-6, "C[{i},{j}] = {v}");
    }
}

#[test]
fn thin_crystal_rejects_mismatched_grids() {
    let (b0, _, _) = small_pair();
    let other = solve_modes(&small_fiber(), LAMBDA, &Grid::square(100, 0.25e-6).unwrap()).unwrap();
    assert!(matches!(cnm_thin_crystal(b0, &other), Err(qtp_core::Error::GridMismatch(_))));
}

#[test]
fn thin_crystal_rows_are_bounded_and_match_direct_overlaps() {
    let (_, bp, bm) = small_pair();
    let s = cnm_thin_crystal(bp, bm).unwrap();
    assert!(s.row_norms().iter().all(|&r| r <= 1.0 + 1e-9));
    // Direct field inner products, no block structure assumed.
    for n in (0..bp.len()).step_by(3) {
        for m in 0..bm.len() {
            let direct = bm.profile(m).with_wavelength(bp.wavelength()).unwrap().inner(&bp.profile(n)).unwrap();
            assert!((s.matrix()[[n, m]] - direct).norm() < 1e-12, "C[{n},{m}]");
        }
    }
    let w = omega_of(bp.wavelength()) - omega_of(LAMBDA);
    assert!((s.detuning() - w).abs() < 1e-6 * w.abs());
}

#[test]
fn thin_crystal_stays_diagonal_at_small_detuning() {
    let scan = DetuningScan::new(LAMBDA, vec![0.0], 1, 0).unwrap();
    let (lp, lm) = scan.pair_wavelengths(0.1e-9);
    let bp = solve_modes(&fig2_fiber(), lp, &fig2_grid()).unwrap();
    let bm = solve_modes(&fig2_fiber(), lm, &fig2_grid()).unwrap();
    let s = cnm_thin_crystal(&bp, &bm).unwrap();
    let frac = s.diagonal_power_fraction();
    assert!(frac > 0.99, "diagonal power {frac}");
    assert!(s.row_norms().iter().all(|&r| r <= 1.0 + 1e-9));
}

#[test]
fn finite_phase_matching_reduces_to_thin_crystal() {
    let (b0, bp, bm) = small_pair();
    for (a, b) in [(b0, b0), (bp, bm)] {
        let thin = cnm_thin_crystal(a, b).unwrap().normalized().unwrap();
        // Plane-wave pump, 1 µm crystal.
        let spdc = SpdcSpec::new(405e-9, 0.0, 1e-6, 10.0, 0.0).unwrap();
        let finite = cnm_finite_phase_matching(a, b, &spdc).unwrap();
        assert!((finite.frobenius_norm() - 1.0).abs() < 1e-9);
        let diff = (finite.matrix() - thin.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "max |ΔC| = {diff}");
        // L_c = 0 and no pump envelope is the overlap itself.
        let zero = SpdcSpec::new(405e-9, 0.0, 0.0, 10.0, 0.0).unwrap();
        let exact = cnm_finite_phase_matching(a, b, &zero).unwrap();
        let diff = (exact.matrix() - thin.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }
}

#[test]
fn pump_envelope_matches_direct_quadrature() {
    // L_c = 0 with a finite pump: C = ∫ f_n f_m exp(−r²/w_f²), w_f = w_pump/M.
    let (b0, _, _) = small_pair();
    let spdc = SpdcSpec::from_pump_waist(405e-9, 40e-6, 0.0, 10.0).unwrap();
    let s = cnm_finite_phase_matching(b0, b0, &spdc).unwrap();
    let g = *b0.grid();
    let w = 4e-6;
    let weight = ComplexField::from_fn(g, LAMBDA, |x, y| Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0)).unwrap();
    let mut raw = Array2::<Complex64>::zeros((b0.len(), b0.len()));
    for n in 0..b0.len() {
        let mut fw = b0.profile(n);
        for (v, q) in fw.values_mut().iter_mut().zip(weight.values()) {
            *v *= q;
        }
        for m in 0..b0.len() {
            raw[[n, m]] = b0.profile(m).inner(&fw).unwrap();
        }
    }
    let norm = raw.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let diff = (s.matrix() - &(raw / Complex64::new(norm, 0.0))).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12);
}

#[test]
fn spectral_kernel_matches_direct_fourier_sum() {
    // Plane-wave pump: C_nm ∝ Σ_q conj(F_n(q)) S(q) F_m(q) with F the DFT of
    // the mode on the 2N window, evaluated here by separable direct sums.
    let (b0, _, _) = small_pair();
    let spdc = SpdcSpec::new(405e-9, 0.0, 4e-3, 10.0, 0.0).unwrap();
    let fast = cnm_finite_phase_matching(b0, b0, &spdc).unwrap();

    let g = *b0.grid();
    let np = 2 * g.rows;
    let dq = std::f64::consts::TAU / (np as f64 * g.pitch);
    let k0 = std::f64::consts::TAU / LAMBDA;
    let q_cut = 1.5 * k0 * 0.2;
    let q_start = 1.3 * k0 * 0.2;
    let b = spdc.crystal_length / (4.0 * spdc.pump_wavenumber() * 100.0);
    let kmax = (q_cut / dq).ceil() as i64;
    let freqs: Vec<i64> = (-kmax..=kmax).collect();
    let xs: Vec<f64> = (0..g.cols).map(|c| g.x(c)).collect();
    let spectrum = |n: usize| -> Array2<Complex64> {
        let f = b0.profile(n);
        // rows transform first: T[r, kx]
        let t = Array2::from_shape_fn((g.rows, freqs.len()), |(r, j)| {
            let q = freqs[j] as f64 * dq;
            (0..g.cols).map(|c| f.values()[[r, c]] * Complex64::from_polar(1.0, -q * xs[c])).sum::<Complex64>()
        });
        Array2::from_shape_fn((freqs.len(), freqs.len()), |(i, j)| {
            let q = freqs[i] as f64 * dq;
            (0..g.rows).map(|r| t[[r, j]] * Complex64::from_polar(1.0, -q * g.y(r))).sum::<Complex64>()
        })
    };
    let spectra: Vec<_> = (0..b0.len()).map(spectrum).collect();
    let weight = |i: usize, j: usize| {
        let q = (freqs[i] as f64 * dq).hypot(freqs[j] as f64 * dq);
        let taper = if q <= q_start {
            1.0
        } else if q >= q_cut {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (q - q_start) / (q_cut - q_start)).cos())
        };
        let x = 4.0 * b * q * q;
        taper * if x == 0.0 { 1.0 } else { x.sin() / x }
    };
    let mut oracle = Array2::<Complex64>::zeros((b0.len(), b0.len()));
    for n in 0..b0.len() {
        for m in 0..b0.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..freqs.len() {
                for j in 0..freqs.len() {
                    acc += spectra[n][[i, j]].conj() * weight(i, j) * spectra[m][[i, j]];
                }
            }
            oracle[[n, m]] = acc;
        }
    }
    let norm = oracle.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let diff = (fast.matrix() - &(oracle / Complex64::new(norm, 0.0))).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "max |ΔC| = {diff}");
    let frac = fast.diagonal_power_fraction();
    assert!(frac < 0.9999, "diagonal power {frac}");
}

#[test]
fn longer_crystal_has_less_diagonal_weight() {
    let b0 = fig2_center();
    let diag = |lc: f64| {
        let spdc = SpdcSpec::from_pump_waist(405e-9, 500e-6, lc, 10.0).unwrap();
        cnm_finite_phase_matching(b0, b0, &spdc).unwrap().diagonal_power_fraction()
    };
    let (d1, d16) = (diag(1e-3), diag(16e-3));
    assert!(d16 < d1, "16 mm {d16} vs 1 mm {d1}");
}

#[test]
fn finite_kernel_rejects_under_sampled_windows() {
    let (b0, _, _) = small_pair();
    // 1 m crystal: the sinc chirp spans far more than the padded window.
    let spdc = SpdcSpec::new(405e-9, 0.0, 1.0, 10.0, 0.0).unwrap();
    assert!(matches!(
        cnm_finite_phase_matching(b0, b0, &spdc),
        Err(qtp_core::Error::KernelUnderSampled(_))
    ));
}

#[test]
fn direct_and_sequential_routes_agree() {
    let (_, bp, bm) = small_pair();
    let state = random_state(bp.len(), bm.len(), 11);
    for seed in 0..3 {
        let det = random_detector(bp.grid(), seed);
        for dz in [0.0, 3e-6] {
            for kernel in [CrystalKernel::Mirror, CrystalKernel::Modal(&state)] {
                let direct = PairChannel::new(bp, bm, kernel, dz, 0.1).unwrap().amplitude(&det).unwrap();
                let seq = coincidence_amplitude_sequential(bp, bm, kernel, dz, 0.1, &det).unwrap();
                let d = max_rel_diff(&direct, &seq);
                assert!(d < 1e-9, "dz={dz} kernel={kernel:?}: {d}");
            }
        }
    }
}

#[test]
fn defocus_zero_reproduces_facet_imaging() {
    let (_, bp, bm) = small_pair();
    let det = gaussian_source(0.6e-6, (1e-6, -2e-6), bp.grid(), LAMBDA).unwrap();
    let thin = cnm_thin_crystal(bp, bm).unwrap();
    let a = coincidence_fiber_speckle(&thin, &det, bp, bm, 0.1).unwrap();
    let b = PairChannel::new(bp, bm, CrystalKernel::Mirror, 0.0, 0.1).unwrap().intensity(&det).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn degenerate_coincidence_is_fully_correlated_with_itself() {
    let (b0, _, _) = small_pair();
    let det = gaussian_source(0.6e-6, (2e-6, 1e-6), b0.grid(), LAMBDA).unwrap();
    let thin = cnm_thin_crystal(b0, b0).unwrap();
    let a = coincidence_fiber_speckle(&thin, &det, b0, b0, 0.1).unwrap();
    let roi = RegionOfInterest::centered_fraction(b0.grid(), 0.5).unwrap();
    assert!((pearson_correlation(&a, &a, &roi).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn diagonal_state_ignores_constant_phase_offset() {
    // exp(iθ_n) → exp(i(θ_n + c)) on a diagonal C.
    let (b0, _, _) = small_pair();
    let n = b0.len();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let thetas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.3)).collect();
    let make = |c: f64| {
        let mut m = Array2::<Complex64>::zeros((n, n));
        for (k, t) in thetas.iter().enumerate() {
            m[[k, k]] = Complex64::from_polar(1.0, t + c);
        }
        TwoPhotonModeState::new(m, 0.0).unwrap()
    };
    let det = gaussian_source(0.6e-6, (-1e-6, 2e-6), b0.grid(), LAMBDA).unwrap();
    let a = coincidence_fiber_speckle(&make(0.0), &det, b0, b0, 0.1).unwrap();
    let b = coincidence_fiber_speckle(&make(1.234), &det, b0, b0, 0.1).unwrap();
    assert!(max_map_rel_diff(&a, &b) < 1e-12);
}

fn max_map_rel_diff(a: &IntensityMap, b: &IntensityMap) -> f64 {
    let peak = a.values().iter().cloned().fold(0.0, f64::max);
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak
}

#[test]
fn classical_eigenmode_input_keeps_its_pattern() {
    let (b0, _, _) = small_pair();
    for n in [0, 3, b0.len() - 1] {
        let f = b0.profile(n);
        let want = f.intensity("mode");
        for l in [0.0, 0.05, 1.0] {
            let got = classical_fiber_speckle(&f, b0, l).unwrap();
            assert!(max_map_rel_diff(&want, &got) < 1e-9);
        }
    }
}

#[test]
fn classical_zero_length_projects_onto_guided_space() {
    let (b0, _, _) = small_pair();
    let input = gaussian_source(0.6e-6, (1e-6, 0.0), b0.grid(), LAMBDA).unwrap();
    let got = classical_fiber_speckle(&input, b0, 0.0).unwrap();
    let proj = b0.compose(&b0.decompose(&input).unwrap()).unwrap();
    assert!(max_map_rel_diff(&proj.intensity("p"), &got) < 1e-12);
    // The waist diverges beyond the NA, so projection loses power.
    assert!(got.total() * b0.grid().pitch.powi(2) < 0.9);
}

#[test]
fn residuals_vanish_without_detuning() {
    let t = phase_residuals(&small_fiber(), LAMBDA, 0.0, 0.1, 0.0).unwrap();
    assert!(!t.modes.is_empty());
    for m in &t.modes {
        assert_eq!(m.classical, 0.0);
        assert_eq!(m.two_photon, [0.0, 0.0]);
        assert_eq!(m.classical_exact, Some(0.0));
        assert_eq!(m.two_photon_exact, Some([0.0, 0.0]));
    }
    assert_eq!(t.cross(0, 1), 0.0);
}

#[test]
fn classical_difference_equals_cross_term() {
    let dw = detuning_omega(LAMBDA, 1e-9);
    let t = phase_residuals(&small_fiber(), LAMBDA, dw, 0.1, 1e9).unwrap();
    for n in 0..t.modes.len() {
        for m in 0..t.modes.len() {
            let lhs = t.modes[n].classical - t.modes[m].classical;
            let scale = t.modes[n].classical.abs().max(t.modes[m].classical.abs());
            assert!((lhs - t.cross(n, m)).abs() <= 1e-12 * scale);
        }
    }
    // Pump bandwidth enters both signs symmetrically.
    let m = &t.modes[0];
    let gvd = m.beta2 * dw * dw * 0.1;
    assert!(((m.two_photon[0] + m.two_photon[1]) / 2.0 - gvd).abs() <= 1e-12 * gvd.abs().max(1e-300));
    assert!((m.two_photon[0] - m.two_photon[1] - 2.0 * m.beta1 * 1e9 * 0.1).abs() < 1e-9 * m.beta1 * 1e9);
}

#[test]
fn exact_two_photon_residual_has_fourth_order_remainder() {
    let f = small_fiber();
    let rem = |dl: f64| {
        let dw = detuning_omega(LAMBDA, dl);
        let t = phase_residuals(&f, LAMBDA, dw, 0.1, 0.0).unwrap();
        let m = t.get(0, 1).unwrap();
        (m.two_photon_exact.unwrap()[0] - m.two_photon[0]).abs()
    };
    let (a, b) = (rem(20e-9), rem(10e-9));
    let ratio = a / b;
    assert!((12.0..20.0).contains(&ratio), "halving Δω shrank the remainder by {ratio}");
}

#[test]
fn exact_cross_term_matches_taylor_at_small_detuning() {
    let dw = detuning_omega(LAMBDA, 0.01e-9);
    let t = phase_residuals(&small_fiber(), LAMBDA, dw, 0.1, 0.0).unwrap();
    let (n, m) = (0, t.modes.len() - 1);
    let exact = t.cross_exact(n, m).unwrap();
    assert!((exact - t.cross(n, m)).abs() < 1e-3 * t.cross(n, m).abs());
}

fn tiny_scenario() -> FiberScenario {
    let mut s = FiberScenario::new(small_fiber(), small_grid());
    s.roi_fraction = 0.5;
    s.sum_band = 1e-9;
    s
}

#[test]
fn single_degenerate_point_scan_is_one() {
    let scan = DetuningScan::new(LAMBDA, vec![0.0], 1, 3).unwrap();
    let out = run_detuning_scan(&scan, &tiny_scenario(), &[ScanVariant::thin("spdc")]).unwrap();
    assert_eq!(out.variants[0].curve.points.len(), 1);
    assert_eq!(out.variants[0].curve.points[0].mean, 1.0);
    assert_eq!(out.classical.unwrap().curve.points[0].mean, 1.0);
    assert_eq!(out.basis_solves, 1);
}

#[test]
fn scans_are_reproducible_and_seed_dependent() {
    let scan = DetuningScan::new(LAMBDA, vec![0.0, 0.5e-9, 1e-9, 3e-9], 2, 42).unwrap();
    let sc = tiny_scenario();
    let v = [ScanVariant::thin("spdc")];
    let a = run_detuning_scan(&scan, &sc, &v).unwrap();
    let b = run_detuning_scan(&scan, &sc, &v).unwrap();
    assert_eq!(a.variants[0].curve, b.variants[0].curve);
    assert_eq!(a.classical.as_ref().unwrap().curve, b.classical.as_ref().unwrap().curve);
    assert_eq!(a.variants[0].sum.values(), b.variants[0].sum.values());
    assert_eq!(a.basis_solves, 7);
    let other = DetuningScan { seed: 43, ..scan };
    let c = run_detuning_scan(&other, &sc, &v).unwrap();
    assert_ne!(a.variants[0].curve, c.variants[0].curve);
    // Spdc never below classical.
    let cl = &a.classical.unwrap().curve;
    for (s, c) in a.variants[0].curve.points.iter().zip(&cl.points) {
        assert!(s.mean >= c.mean - 1e-9);
    }
}

#[test]
fn defocus_study_at_zero_matches_scan() {
    let scan = DetuningScan::new(LAMBDA, vec![0.0, 1e-9], 1, 9).unwrap();
    let sc = tiny_scenario();
    let a = apply_defocus_study(&scan, &sc, 0.0).unwrap();
    let b = run_detuning_scan(&scan, &sc, &[ScanVariant::thin("x")]).unwrap();
    assert_eq!(a.points, b.variants[0].curve.points);
    assert!(apply_defocus_study(&scan, &sc, -1e-6).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn global_phase_leaves_coincidences_unchanged(theta in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000) {
        let (_, bp, bm) = small_pair();
        let s = random_state(bp.len(), bm.len(), seed);
        let det = random_detector(bp.grid(), seed + 1);
        let a = coincidence_fiber_speckle(&s, &det, bp, bm, 0.1).unwrap();
        let b = coincidence_fiber_speckle(&s.with_global_phase(theta), &det, bp, bm, 0.1).unwrap();
        prop_assert!(max_map_rel_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn thin_crystal_rows_never_exceed_one(dl in 0.0f64..5e-9) {
        let f = small_fiber();
        let scan = DetuningScan::new(LAMBDA, vec![0.0], 1, 0).unwrap();
        let (lp, lm) = scan.pair_wavelengths(dl);
        let bp = solve_modes(&f, lp, &small_grid()).unwrap();
        let bm = solve_modes(&f, lm, &small_grid()).unwrap();
        let s = cnm_thin_crystal(&bp, &bm).unwrap();
        prop_assert!(s.row_norms().iter().all(|&r| r <= 1.0 + 1e-9));
    }
}
