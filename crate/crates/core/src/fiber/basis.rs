//! Sampling radial solutions onto the transverse grid.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};

use crate::error::{config_err, Error, Result};
use crate::field::Grid;

use super::radial::{lagrange4_weights, solve_radial, RadialMode, RadialShape};
use super::{FiberMode, FiberSpec, ModeBasis, Parity};

/// Oversampling of the step-index radial lookup table relative to the pitch.
const TABLE_OVERSAMPLING: f64 = 16.0;

/// Solve all guided modes of `fiber` at `wavelength` and sample them on
/// `grid`, orthonormalized on the grid.
pub fn solve_modes(fiber: &FiberSpec, wavelength: f64, grid: &Grid) -> Result<ModeBasis> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(config_err("wavelength", format!("{wavelength} must be positive")));
    }
    let required = wavelength / (2.0 * fiber.numerical_aperture);
    if grid.pitch > required {
        return Err(Error::UnderResolved {
            what: "fiber mode basis".into(),
            required_pitch: required,
            pitch: grid.pitch,
        });
    }
    let (w, h) = grid.extent();
    let half = 0.5 * w.min(h) - grid.origin.0.abs().max(grid.origin.1.abs());
    if half < 1.1 * fiber.core_radius {
        return Err(config_err(
            "grid",
            format!(
                "window half-width {half:.3e} m must exceed 1.1 x core radius {:.3e} m",
                fiber.core_radius
            ),
        ));
    }

    let radial = solve_radial(fiber, wavelength)?;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let kn = k * fiber.core_index();

    // Expand each radial solution into its real azimuthal partners, sorted
    // by β descending with ties broken by l, then cos before sin.
    let mut entries: Vec<(FiberMode, usize)> = Vec::new();
    for (i, rm) in radial.iter().enumerate() {
        let beta = (kn * kn - rm.mu).sqrt();
        let mut push = |parity| entries.push((FiberMode { l: rm.l, p: rm.p, parity, beta, mu: rm.mu }, i));
        push(Parity::Cos);
        if rm.l > 0 {
            push(Parity::Sin);
        }
    }
    entries.sort_by(|a, b| {
        b.0.beta
            .total_cmp(&a.0.beta)
            .then(a.0.l.cmp(&b.0.l))
            .then(a.0.parity.cmp(&b.0.parity))
    });

    let geometry = PixelGeometry::new(grid, &radial);
    let tables: Vec<Table> = radial.iter().map(|rm| geometry.table(rm, fiber.core_radius)).collect();

    let npix = grid.len();
    let mut profiles = Array2::<f64>::zeros((entries.len(), npix));
    let lmax = radial.iter().map(|m| m.l).max().unwrap_or(0) as usize;
    let angular = AngularCache::new(&geometry.phi, lmax);
    for (row, (mode, ri)) in entries.iter().enumerate() {
        let radial_values = geometry.interpolate(&tables[*ri]);
        let ang = angular.get(mode.l as usize, mode.parity);
        let mut out = profiles.row_mut(row);
        for ((o, r), a) in out.iter_mut().zip(radial_values.iter()).zip(ang.iter()) {
            *o = r * a;
        }
        let norm = (out.iter().map(|v| v * v).sum::<f64>() * grid.pitch * grid.pitch).sqrt();
        if norm > 0.0 {
            out.mapv_inplace(|v| v / norm);
        }
    }

    let modes: Vec<FiberMode> = entries.into_iter().map(|(m, _)| m).collect();
    // On a centered square grid the D4 classes are exactly orthogonal, so
    // each class is orthonormalized on its own.
    let centered = grid.origin == (0.0, 0.0) && grid.rows == grid.cols;
    let classes: Vec<Vec<usize>> = if centered {
        (0..6)
            .map(|c| (0..modes.len()).filter(|&n| ModeBasis::symmetry_class(&modes[n]) == c).collect())
            .collect()
    } else {
        vec![(0..modes.len()).collect()]
    };
    for rows in &classes {
        orthonormalize_class(&mut profiles, rows, &modes, grid.pitch);
    }

    Ok(ModeBasis::from_parts(*fiber, wavelength, *grid, modes, profiles))
}

/// Orthonormalize `rows` by block Gram–Schmidt over azimuthal orders taken
/// from the highest `l` down, with a symmetric (Löwdin) step inside each
/// block. Lattice overlaps between orders are thereby absorbed by the
/// low-`l` modes, so the sampled selection rules of high-`l` modes survive:
/// a centered circular field stays out of `l ≥ 4` modes to ~1e-12.
fn orthonormalize_class(profiles: &mut Array2<f64>, rows: &[usize], modes: &[FiberMode], pitch: f64) {
    let p2 = pitch * pitch;
    let mut ls: Vec<u32> = rows.iter().map(|&r| modes[r].l).collect();
    ls.sort_unstable();
    ls.dedup();
    let mut done: Vec<usize> = Vec::new();
    for &l in ls.iter().rev() {
        let block: Vec<usize> = rows.iter().copied().filter(|&r| modes[r].l == l).collect();
        let mut g = profiles.select(Axis(0), &block);
        if !done.is_empty() {
            let q = profiles.select(Axis(0), &done);
            // Two passes of classical Gram–Schmidt keep the result orthogonal
            // to rounding.
            for _ in 0..2 {
                let proj = g.dot(&q.t()) * p2;
                g -= &proj.dot(&q);
            }
        }
        lowdin(&mut g, p2);
        for (k, &r) in block.iter().enumerate() {
            profiles.row_mut(r).assign(&g.row(k));
        }
        done.extend(block);
    }
}

/// Replace the rows of `f` by `S^{-1/2} F`, the orthonormal set closest to
/// the input.
fn lowdin(f: &mut Array2<f64>, p2: f64) {
    let n = f.nrows();
    let s = f.dot(&f.t()) * p2;
    let sm = DMatrix::from_fn(n, n, |i, j| s[[i, j]]);
    let eig = SymmetricEigen::new(sm);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    let t = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let t = Array2::from_shape_fn((n, n), |(i, j)| t[(i, j)]);
    *f = t.dot(f);
}

/// Radial profile on a uniform table `r_i = r0 + i·dr`, continued to
/// negative radius with parity `(−1)^l`.
struct Table {
    values: Vec<f64>,
    odd: bool,
}

/// Per-pixel polar coordinates and interpolation stencils, shared by all
/// modes of one basis.
struct PixelGeometry {
    phi: Vec<f64>,
    staggered: bool,
    radii: Vec<f64>,
    stencil: Vec<(i64, [f64; 4])>,
}

impl PixelGeometry {
    fn new(grid: &Grid, radial: &[RadialMode]) -> Self {
        let mut phi = Vec::with_capacity(grid.len());
        let mut r_pix = Vec::with_capacity(grid.len());
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let (x, y) = (grid.x(col), grid.y(row));
                r_pix.push(x.hypot(y));
                phi.push(y.atan2(x));
            }
        }
        let (r0, dr, staggered) = match radial.first().map(|m| &m.shape) {
            Some(RadialShape::Graded { h, .. }) => (0.5 * h, *h, true),
            _ => (0.0, grid.pitch / TABLE_OVERSAMPLING, false),
        };
        let r_max = r_pix.iter().fold(0.0f64, |m, r| m.max(*r));
        let n_table = ((r_max - r0) / dr).ceil() as usize + 4;
        let radii = (0..n_table).map(|i| r0 + i as f64 * dr).collect();
        let stencil = r_pix
            .iter()
            .map(|&r| {
                let t = (r - r0) / dr;
                let i = t.floor();
                (i as i64, lagrange4_weights(t - i))
            })
            .collect();
        Self { phi, staggered, radii, stencil }
    }

    fn table(&self, mode: &RadialMode, core_radius: f64) -> Table {
        let values = match &mode.shape {
            RadialShape::Graded { values, .. } => values.clone(),
            RadialShape::Step { .. } => mode.sample(&self.radii, core_radius),
        };
        Table { values, odd: mode.l % 2 == 1 }
    }

    fn interpolate(&self, table: &Table) -> Vec<f64> {
        let n = table.values.len() as i64;
        let sign = if table.odd { -1.0 } else { 1.0 };
        let at = |k: i64| -> f64 {
            if k >= n {
                0.0
            } else if k >= 0 {
                table.values[k as usize]
            } else {
                let m = if self.staggered { -1 - k } else { -k };
                sign * table.values[m as usize]
            }
        };
        self.stencil
            .iter()
            .map(|&(i, w)| w[0] * at(i - 1) + w[1] * at(i) + w[2] * at(i + 1) + w[3] * at(i + 2))
            .collect()
    }
}

/// `cos(lφ)` / `sin(lφ)` per pixel, built incrementally in `l`.
struct AngularCache {
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl AngularCache {
    fn new(phi: &[f64], lmax: usize) -> Self {
        let mut cos = Vec::with_capacity(lmax + 1);
        let mut sin = Vec::with_capacity(lmax + 1);
        for l in 0..=lmax {
            let lf = l as f64;
            cos.push(phi.iter().map(|p| (lf * p).cos()).collect());
            sin.push(phi.iter().map(|p| (lf * p).sin()).collect());
        }
        Self { cos, sin }
    }

    fn get(&self, l: usize, parity: Parity) -> &[f64] {
        match parity {
            Parity::Cos => &self.cos[l],
            Parity::Sin => &self.sin[l],
        }
    }
}
