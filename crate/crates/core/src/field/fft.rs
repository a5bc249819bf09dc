use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    /// Kernel `e^{−i 2π jk/N}`.
    Forward,
    /// Kernel `e^{+i 2π jk/N}`, unnormalized.
    Inverse,
}

/// Unnormalized 2D DFT in place: rows first, then columns.
pub(crate) fn fft2_inplace(a: &mut Array2<Complex64>, dir: Direction) {
    let (rows, cols) = a.dim();
    if !a.is_standard_layout() {
        *a = a.as_standard_layout().to_owned();
    }
    let mut planner = FftPlanner::<f64>::new();
    let plan = |planner: &mut FftPlanner<f64>, n: usize| match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let row_fft = plan(&mut planner, cols);
    let col_fft = plan(&mut planner, rows);
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    let data = a.as_slice_mut().expect("standard layout");
    row_fft.process_with_scratch(data, &mut scratch);

    // Columns: transpose into a buffer, transform, transpose back.
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            buf[c * rows + r] = data[r * cols + c];
        }
    }
    col_fft.process_with_scratch(&mut buf, &mut scratch);
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = buf[c * rows + r];
        }
    }
}

/// Angular frequencies `2π·m/(n·pitch)` of DFT bin order, with `m` wrapped to
/// `[−n/2, n/2)`.
pub(crate) fn fft_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * pitch);
    (0..n)
        .map(|k| {
            let m = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            m * scale
        })
        .collect()
}

/// DFT on symmetric index ranges: `X[j] = Σ_i x[i]·e^{−i2π(j−c)(i−c)/N}` with
/// `c = (N−1)/2` along each axis.
pub(crate) fn centered_dft2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = a.dim();
    let ry = axis_twiddles(rows);
    let rx = axis_twiddles(cols);
    let mut out = Array2::from_shape_fn((rows, cols), |(r, c)| a[[r, c]] * ry[r] * rx[c]);
    fft2_inplace(&mut out, Direction::Forward);
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let tau = 2.0 * std::f64::consts::PI;
    let global = Complex64::from_polar(1.0, -tau * (cy * cy / rows as f64 + cx * cx / cols as f64));
    for ((r, c), v) in out.indexed_iter_mut() {
        *v *= ry[r] * rx[c] * global;
    }
    out
}

fn axis_twiddles(n: usize) -> Vec<Complex64> {
    let c = (n as f64 - 1.0) / 2.0;
    let tau = 2.0 * std::f64::consts::PI;
    (0..n)
        .map(|i| {
            // Reduce the exponent before forming the phase to keep it exact
            // for large products.
            let t = (c * i as f64 / n as f64).rem_euclid(1.0);
            Complex64::from_polar(1.0, tau * t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_centered(a: &Array2<Complex64>) -> Array2<Complex64> {
        let (rows, cols) = a.dim();
        let cy = (rows as f64 - 1.0) / 2.0;
        let cx = (cols as f64 - 1.0) / 2.0;
        let tau = 2.0 * std::f64::consts::PI;
        Array2::from_shape_fn((rows, cols), |(j, k)| {
            let mut s = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let ph = -tau
                        * ((j as f64 - cy) * (r as f64 - cy) / rows as f64
                            + (k as f64 - cx) * (c as f64 - cx) / cols as f64);
                    s += a[[r, c]] * Complex64::from_polar(1.0, ph);
                }
            }
            s
        })
    }

    #[test]
    fn centered_dft_matches_direct_sum() {
        for &(rows, cols) in &[(6, 8), (5, 7), (4, 9)] {
            let a = Array2::from_shape_fn((rows, cols), |(r, c)| {
                Complex64::new((r * 3 + c) as f64 * 0.1 - 0.7, ((r + 2 * c) % 5) as f64 * 0.3)
            });
            let fast = centered_dft2(&a);
            let slow = naive_centered(&a);
            let err = fast
                .iter()
                .zip(slow.iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "{rows}x{cols}: {err}");
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let a = Array2::from_shape_fn((8, 6), |(r, c)| Complex64::new(r as f64, c as f64 - 2.0));
        let mut b = a.clone();
        fft2_inplace(&mut b, Direction::Forward);
        fft2_inplace(&mut b, Direction::Inverse);
        let n = 48.0;
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y / n).norm() < 1e-12);
        }
    }

    #[test]
    fn frequency_order() {
        let f = fft_frequencies(4, 1.0);
        let s = 2.0 * std::f64::consts::PI / 4.0;
        assert_eq!(f, vec![0.0, s, -2.0 * s, -s]);
        let g = fft_frequencies(5, 1.0);
        let s = 2.0 * std::f64::consts::PI / 5.0;
        assert_eq!(g, vec![0.0, s, 2.0 * s, -2.0 * s, -s]);
    }
}
