//! Radial eigenproblems: the step-index characteristic equation and the
//! graded-index finite-difference operator. Both produce `RadialMode`s that
//! carry the transverse eigenvalue `μ = k²n_core² − β²` and a way to sample
//! the radial profile.

use crate::error::{Error, Result};
use crate::special::{bessel_j, bessel_j_orders, bessel_k_ratio, ln_bessel_k};

use super::{FiberSpec, IndexProfile};

/// Number of radial samples of the graded-index solver.
pub const GRADED_POINTS: usize = 2000;
/// Outer (Dirichlet) radius of the graded-index solver in core radii.
pub const GRADED_EXTENT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub enum RadialShape {
    /// Core `J_l(u r/a)`, cladding `J_l(u) K_l(w r/a)/K_l(w)`.
    Step { u: f64, w: f64 },
    /// Samples at `r_j = (j + 1/2)·h`, zero beyond the last sample.
    Graded { h: f64, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialMode {
    pub l: u32,
    pub p: u32,
    /// Transverse eigenvalue `μ` in rad²/m².
    pub mu: f64,
    pub shape: RadialShape,
}

impl RadialMode {
    /// Unnormalized radial profile at radii `r` (all ≥ 0).
    pub fn sample(&self, radii: &[f64], core_radius: f64) -> Vec<f64> {
        let l = self.l as usize;
        match &self.shape {
            RadialShape::Step { u, w } => {
                let ju = bessel_j(l, *u);
                let lnk_w = ln_bessel_k(l, *w);
                radii
                    .iter()
                    .map(|&r| {
                        let s = r / core_radius;
                        if s <= 1.0 {
                            bessel_j(l, u * s)
                        } else {
                            ju * (ln_bessel_k(l, w * s) - lnk_w).exp()
                        }
                    })
                    .collect()
            }
            RadialShape::Graded { h, values } => radii
                .iter()
                .map(|&r| graded_interpolate(values, *h, l, r))
                .collect(),
        }
    }
}

/// Cubic Lagrange interpolation on the staggered grid, continued to negative
/// radius with parity `(−1)^l`.
fn graded_interpolate(values: &[f64], h: f64, l: usize, r: f64) -> f64 {
    let t = r / h - 0.5;
    let i = t.floor() as i64;
    let f = t - i as f64;
    let n = values.len() as i64;
    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
    let at = |k: i64| -> f64 {
        if k >= n {
            0.0
        } else if k >= 0 {
            values[k as usize]
        } else {
            // r_k = (k + 1/2)h < 0 mirrors onto index −1 − k.
            sign * values[(-1 - k) as usize]
        }
    };
    lagrange4(f, [at(i - 1), at(i), at(i + 1), at(i + 2)])
}

/// Four-point Lagrange interpolation at fractional offset `f ∈ [0, 1)` from
/// the second node.
pub(crate) fn lagrange4(f: f64, y: [f64; 4]) -> f64 {
    let w = lagrange4_weights(f);
    w[0] * y[0] + w[1] * y[1] + w[2] * y[2] + w[3] * y[3]
}

pub(crate) fn lagrange4_weights(f: f64) -> [f64; 4] {
    let (a, b, c, d) = (f + 1.0, f, f - 1.0, f - 2.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

/// All guided radial modes of `fiber` at `wavelength`, grouped by `l` and
/// ordered by radial order within each `l`.
pub fn solve_radial(fiber: &FiberSpec, wavelength: f64) -> Result<Vec<RadialMode>> {
    let modes = match fiber.profile {
        IndexProfile::Step => solve_step(fiber, wavelength)?,
        IndexProfile::Graded => solve_graded(fiber, wavelength),
    };
    if modes.is_empty() {
        return Err(Error::EmptyBasis { v: fiber.v_number(wavelength) });
    }
    Ok(modes)
}

/// Solve a single azimuthal order.
pub fn solve_radial_order(fiber: &FiberSpec, wavelength: f64, l: u32) -> Result<Vec<RadialMode>> {
    match fiber.profile {
        IndexProfile::Step => step_order(fiber, wavelength, l),
        IndexProfile::Graded => Ok(graded_order(fiber, wavelength, l)),
    }
}

// ---------------------------------------------------------------- step index

/// `u J_{l−1}(u) + w (K_{l−1}/K_l)(w) J_l(u)`: the LP characteristic function
/// multiplied through by `J_l(u)` so it has no poles.
fn characteristic(l: u32, u: f64, v: f64) -> f64 {
    let l = l as usize;
    let w = (v * v - u * u).sqrt();
    let j = bessel_j_orders(l + 1, u);
    let jm1 = if l == 0 { -j[1] } else { j[l - 1] };
    u * jm1 + w * bessel_k_ratio(l, w) * j[l]
}

fn solve_step(fiber: &FiberSpec, wavelength: f64) -> Result<Vec<RadialMode>> {
    let mut out = Vec::new();
    for l in 0.. {
        let modes = step_order(fiber, wavelength, l)?;
        if modes.is_empty() {
            break;
        }
        out.extend(modes);
    }
    Ok(out)
}

fn step_order(fiber: &FiberSpec, wavelength: f64, l: u32) -> Result<Vec<RadialMode>> {
    let v = fiber.v_number(wavelength);
    let a = fiber.core_radius;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let u_max = v * (1.0 - 1e-9);
    let steps = ((u_max / 0.02).ceil() as usize).max(200);
    let du = u_max / steps as f64;

    let mut roots = Vec::new();
    let mut u0 = du * 1e-3;
    let mut f0 = characteristic(l, u0, v);
    for s in 1..=steps {
        let u1 = du * s as f64;
        let f1 = characteristic(l, u1, v);
        if !f0.is_finite() || !f1.is_finite() {
            return Err(bracket_error(fiber, k, l, u0, u1));
        }
        if f0 == 0.0 {
            roots.push(u0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            roots.push(bisect(|u| characteristic(l, u, v), u0, u1, f0));
        }
        u0 = u1;
        f0 = f1;
    }

    Ok(roots
        .into_iter()
        .enumerate()
        .map(|(i, u)| RadialMode {
            l,
            p: i as u32 + 1,
            mu: (u / a) * (u / a),
            shape: RadialShape::Step { u, w: (v * v - u * u).sqrt() },
        })
        .collect())
}

fn bracket_error(fiber: &FiberSpec, k: f64, l: u32, u0: f64, u1: f64) -> Error {
    let n_eff = |u: f64| {
        let nc = fiber.core_index();
        (nc * nc - (u / (k * fiber.core_radius)).powi(2)).sqrt()
    };
    Error::Bracket { l, n_low: n_eff(u1), n_high: n_eff(u0) }
}

/// Bisection to the last representable bit.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let slo = flo.signum();
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

// -------------------------------------------------------------- graded index

/// Symmetric tridiagonal form of
/// `−(1/r)(r R′)′ + l²/r² R + k²NA² g(r) R` on `r_j = (j + 1/2)h`.
fn graded_operator(fiber: &FiberSpec, wavelength: f64, l: u32) -> (Vec<f64>, Vec<f64>, f64) {
    let a = fiber.core_radius;
    let m = GRADED_POINTS;
    let h = GRADED_EXTENT * a / m as f64;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let kna2 = (k * fiber.numerical_aperture).powi(2);
    let l2 = (l as f64).powi(2);
    let r = |j: usize| (j as f64 + 0.5) * h;
    let diag = (0..m)
        .map(|j| {
            let rj = r(j);
            let inner = j as f64 * h;
            let outer = (j as f64 + 1.0) * h;
            let g = if rj < a { (rj / a).powi(2) } else { 1.0 };
            (inner + outer) / (h * h * rj) + l2 / (rj * rj) + kna2 * g
        })
        .collect();
    let off = (0..m - 1)
        .map(|j| -((j as f64 + 1.0) * h) / (h * h * (r(j) * r(j + 1)).sqrt()))
        .collect();
    (diag, off, h)
}

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let qp = if q == 0.0 { f64::EPSILON * (diag[i - 1].abs() + 1.0) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / qp;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvector for eigenvalue `lambda` by two steps of inverse iteration.
fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64) -> Vec<f64> {
    let n = diag.len();
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let tiny = f64::EPSILON * scale;
    let shift = lambda * (1.0 + 4.0 * f64::EPSILON);
    let mut x = vec![1.0; n];
    for _ in 0..3 {
        // Thomas algorithm on (T − shift·I) y = x.
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = diag[0] - shift;
        if piv.abs() < tiny {
            piv = tiny;
        }
        c[0] = if n > 1 { off[0] / piv } else { 0.0 };
        d[0] = x[0] / piv;
        for i in 1..n {
            piv = diag[i] - shift - off[i - 1] * c[i - 1];
            if piv.abs() < tiny {
                piv = tiny;
            }
            c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
            d[i] = (x[i] - off[i - 1] * d[i - 1]) / piv;
        }
        let mut y = vec![0.0; n];
        y[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = d[i] - c[i] * y[i + 1];
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    x
}

fn solve_graded(fiber: &FiberSpec, wavelength: f64) -> Vec<RadialMode> {
    let mut out = Vec::new();
    for l in 0.. {
        let modes = graded_order(fiber, wavelength, l);
        if modes.is_empty() {
            break;
        }
        out.extend(modes);
    }
    out
}

fn graded_order(fiber: &FiberSpec, wavelength: f64, l: u32) -> Vec<RadialMode> {
    let (diag, off, h) = graded_operator(fiber, wavelength, l);
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let cutoff = (k * fiber.numerical_aperture).powi(2);
    let count = sturm_count(&diag, &off, cutoff);
    (0..count)
        .map(|i| {
            // The operator is positive, so [0, cutoff] brackets every guided μ.
            let (mut lo, mut hi) = (0.0, cutoff);
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(&diag, &off, mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mu = 0.5 * (lo + hi);
            let v = inverse_iteration(&diag, &off, mu);
            // Sign convention: positive at the first significant sample.
            let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let first = v.iter().find(|x| x.abs() > 1e-3 * peak).copied().unwrap_or(1.0);
            let sign = first.signum();
            // Undo the symmetrization: R_j = v_j/√r_j.
            let values = v
                .iter()
                .enumerate()
                .map(|(j, x)| sign * x / ((j as f64 + 0.5) * h).sqrt())
                .collect();
            RadialMode {
                l,
                p: i as u32 + 1,
                mu,
                shape: RadialShape::Graded { h, values },
            }
        })
        .collect()
}
