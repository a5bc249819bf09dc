//! Integer-order Bessel functions of real argument needed by the fiber
//! solvers.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `J_0(x) ..= J_nmax(x)` for `x ≥ 0`.
///
/// Miller's backward recurrence normalized with `J_0 + 2·Σ J_2k = 1`; the
/// start index is far enough above `max(nmax, x)` that truncation is below
/// rounding.
pub fn bessel_j_orders(nmax: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0, "bessel_j_orders needs x >= 0, got {x}");
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let big = (nmax as f64).max(x);
    let mut m = (big + 24.0 + 10.0 * big.cbrt()).ceil() as usize;
    m += m % 2;

    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut sum = 0.0;
    for k in (1..=m).rev() {
        if k <= nmax {
            out[k] = j;
        }
        if k % 2 == 0 {
            sum += 2.0 * j;
        }
        let jm1 = (2.0 * k as f64 / x) * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            sum *= 1e-250;
            for v in out.iter_mut().skip(k) {
                *v *= 1e-250;
            }
        }
    }
    out[0] = j;
    sum += j;
    let s = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= s;
    }
    out
}

/// `J_n(x)` for `x ≥ 0`.
pub fn bessel_j(n: usize, x: f64) -> f64 {
    bessel_j_orders(n, x)[n]
}

/// `(e^x·K_0(x), e^x·K_1(x))` for `x > 0`.
pub fn bessel_k01_scaled(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "bessel_k01_scaled needs x > 0, got {x}");
    if x <= 2.0 {
        let (k0, k1) = k01_series(x);
        let e = x.exp();
        (k0 * e, k1 * e)
    } else {
        k01_continued_fraction(x)
    }
}

// Power series, accurate for 0 < x ≤ 2.
fn k01_series(x: f64) -> (f64, f64) {
    let t = 0.25 * x * x;
    let mut term = 1.0; // t^k/(k!)^2
    let mut i0 = 1.0;
    let mut harmonic = 0.0;
    let mut tail = 0.0;
    let mut term1 = 1.0; // t^k/(k!(k+1)!)
    let mut i1s = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= t / (kf * kf);
        term1 *= t / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        i0 += term;
        i1s += term1;
        tail += term * harmonic;
        if term < 1e-18 * i0 && term * harmonic < 1e-18 * tail.abs().max(1e-300) {
            break;
        }
    }
    let i1 = 0.5 * x * i1s;
    let k0 = -((0.5 * x).ln() + EULER_GAMMA) * i0 + tail;
    // Wronskian I0·K1 + I1·K0 = 1/x.
    let k1 = (1.0 / x - i1 * k0) / i0;
    (k0, k1)
}

// Steed's continued fraction (CF2) for x > 2, order 0.
fn k01_continued_fraction(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..10_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Ratios `r_n = K_n(x)/K_{n−1}(x)` for `n = 1..=l`, by upward recurrence
/// `r_{n+1} = 1/r_n + 2n/x` (stable for the dominant solution).
fn k_ratios(l: usize, x: f64) -> Vec<f64> {
    let (k0, k1) = bessel_k01_scaled(x);
    let mut r = Vec::with_capacity(l);
    if l == 0 {
        return r;
    }
    let mut cur = k1 / k0;
    r.push(cur);
    for n in 1..l {
        cur = 1.0 / cur + 2.0 * n as f64 / x;
        r.push(cur);
    }
    r
}

/// `K_{l−1}(x)/K_l(x)` with the convention `K_{−1} = K_1`.
pub fn bessel_k_ratio(l: usize, x: f64) -> f64 {
    if l == 0 {
        let (k0, k1) = bessel_k01_scaled(x);
        return k1 / k0;
    }
    1.0 / k_ratios(l, x)[l - 1]
}

/// `ln K_l(x)`, free of overflow for large orders and small arguments.
pub fn ln_bessel_k(l: usize, x: f64) -> f64 {
    let (k0, _) = bessel_k01_scaled(x);
    k0.ln() - x + k_ratios(l, x).iter().map(|r| r.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent implementation (cephes/AMOS).
    const J_REF: &[(usize, f64, f64)] = &[
        (0, 1.0, 0.765_197_686_557_966_6),
        (1, 2.5, 0.497_094_102_464_274_1),
        (5, 10.0, -0.234_061_528_186_793_6),
        (30, 40.0, -0.104_085_949_765_649_9),
        (0, 45.3, 0.102_307_365_919_311_53),
        (12, 3.0, 2.275_725_448_320_573e-7),
        (40, 5.0, 8.702_241_617_388_934e-33),
    ];

    const K_REF: &[(usize, f64, f64)] = &[
        (0, 0.1, 2.427_069_024_702_017),
        (1, 0.1, 9.853_844_780_870_606),
        (0, 2.0, 0.113_893_872_749_533_41),
        (1, 2.0, 0.139_865_881_816_522_46),
        (0, 2.5, 0.062_347_553_200_366_196),
        (1, 10.0, 1.864_877_345_382_558_5e-5),
        (0, 38.0, 6.361_617_158_869_05e-18),
        (5, 1.0, 360.960_589_601_240_66),
        (20, 30.0, 1.230_451_647_544_247e-11),
    ];

    #[test]
    fn bessel_j_reference_values() {
        for &(n, x, v) in J_REF {
            let got = bessel_j(n, x);
            let tol = 2e-14 * v.abs().max(1e-300) + 1e-16;
            assert!((got - v).abs() <= tol.max(4e-15 * v.abs()), "J_{n}({x}) = {got}, want {v}");
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        for &(n, x, v) in K_REF {
            let got = ln_bessel_k(n, x).exp();
            assert!((got / v - 1.0).abs() < 2e-13, "K_{n}({x}) = {got}, want {v}");
        }
    }

    #[test]
    fn series_and_fraction_agree_at_switch() {
        for &x in &[1.6, 2.0, 2.4] {
            let (a0, a1) = k01_series(x);
            let (b0, b1) = k01_continued_fraction(x);
            let e = x.exp();
            assert!((a0 * e / b0 - 1.0).abs() < 1e-14, "K0 at {x}");
            assert!((a1 * e / b1 - 1.0).abs() < 1e-14, "K1 at {x}");
        }
    }

    #[test]
    fn j_satisfies_three_term_recurrence() {
        let x = 17.3;
        let j = bessel_j_orders(30, x);
        for n in 1..30 {
            let lhs = j[n - 1] + j[n + 1];
            let rhs = 2.0 * n as f64 / x * j[n];
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn k_ratio_convention_for_order_zero() {
        let x = 3.7;
        let (k0, k1) = bessel_k01_scaled(x);
        assert_eq!(bessel_k_ratio(0, x), k1 / k0);
        assert!((bessel_k_ratio(1, x) - k0 / k1).abs() < 1e-15);
    }
}
