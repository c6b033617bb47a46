//! Gamma, Bessel J and Jacobi polynomials, plus the witness family
//! `U_n(x, y) = y P_n^{(w,s)}(1 - x)` that realizes the lower bound of the
//! Markov exponent.

use serde::Serialize;

use crate::domain::{CuspidalDomain, SubdomainSpec};
use crate::error::{Error, Result};
use crate::polybasis::{Axis, Poly2};
use crate::quad::{lp_norm, QuadSpec};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function by the Lanczos approximation (g = 7, nine terms).
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Range {
            what: "gamma argument",
            value: x,
            range: "(0, inf)",
        });
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI
            / ((std::f64::consts::PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// A truncated power-series value with its tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Magnitude of the first omitted term; bounds the tail once the
    /// alternating terms decrease.
    pub remainder_bound: f64,
    pub terms: usize,
}

const BESSEL_Z_MAX: f64 = 4.0;
const SERIES_REL_EPS: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 200;

fn check_bessel_args(omega: f64, z: f64) -> Result<()> {
    if !(omega >= 0.0) {
        return Err(Error::Range {
            what: "Bessel order",
            value: omega,
            range: "[0, inf)",
        });
    }
    if !(0.0..=BESSEL_Z_MAX).contains(&z) {
        return Err(Error::Range {
            what: "Bessel argument",
            value: z,
            range: "[0, 4]",
        });
    }
    Ok(())
}

/// `sum_m (-1)^m (z/2)^{2m} / (m! Gamma(m + w + 1))`, stopping after
/// `max_terms` terms or once the next term drops below `1e-16` of the sum.
/// `Gamma(w + 1)`, exact for small integer `w`.
fn gamma_plus_one(omega: f64) -> f64 {
    if omega.fract() == 0.0 && (0.0..=170.0).contains(&omega) {
        (1..=omega as u32).map(f64::from).product()
    } else {
        gamma_unchecked(omega + 1.0)
    }
}

fn scaled_series(omega: f64, z: f64, max_terms: usize) -> SeriesValue {
    let q = 0.25 * z * z;
    let mut term = 1.0 / gamma_plus_one(omega);
    let mut sum = 0.0;
    let mut m = 0usize;
    loop {
        sum += term;
        let next = -term * q / ((m as f64 + 1.0) * (m as f64 + 1.0 + omega));
        m += 1;
        if m >= max_terms || next.abs() < SERIES_REL_EPS * sum.abs() || next == 0.0 {
            return SeriesValue {
                value: sum,
                remainder_bound: next.abs(),
                terms: m,
            };
        }
        term = next;
    }
}

/// `(z/2)^{-w} J_w(z)`, evaluated from the series directly so that the
/// `z -> 0` limit `1/Gamma(w + 1)` needs no special casing.
pub fn bessel_j_scaled(omega: f64, z: f64) -> Result<SeriesValue> {
    check_bessel_args(omega, z)?;
    Ok(scaled_series(omega, z, SERIES_MAX_TERMS))
}

/// Bessel function of the first kind `J_w(z)` for `z` in `[0, 4]`.
pub fn bessel_j(omega: f64, z: f64) -> Result<SeriesValue> {
    let s = bessel_j_scaled(omega, z)?;
    let lead = (0.5 * z).powf(omega);
    Ok(SeriesValue {
        value: lead * s.value,
        remainder_bound: lead * s.remainder_bound,
        terms: s.terms,
    })
}

/// Same series truncated after exactly `terms` terms; used to audit the
/// recorded remainder bound.
pub fn bessel_j_truncated(omega: f64, z: f64, terms: usize) -> Result<f64> {
    check_bessel_args(omega, z)?;
    let q = 0.25 * z * z;
    let mut term = 1.0 / gamma_plus_one(omega);
    let mut sum = 0.0;
    for m in 0..terms {
        sum += term;
        term = -term * q / ((m as f64 + 1.0) * (m as f64 + 1.0 + omega));
    }
    Ok((0.5 * z).powf(omega) * sum)
}

/// Jacobi polynomial `P_n^{(w,s)}(t)` by the three-term recurrence.
pub fn jacobi_eval(omega: f64, sigma: f64, n: usize, t: f64) -> f64 {
    let (al, be) = (omega, sigma);
    let p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let p1 = 0.5 * (al - be) + 0.5 * (al + be + 2.0) * t;
    if n == 1 {
        return p1;
    }
    let (mut prev, mut cur) = (p0, p1);
    for m in 2..=n {
        let m = m as f64;
        let s = 2.0 * m + al + be;
        let a1 = 2.0 * m * (m + al + be) * (s - 2.0);
        let a2 = (s - 1.0) * (al * al - be * be);
        let a3 = (s - 2.0) * (s - 1.0) * s;
        let a4 = 2.0 * (m + al - 1.0) * (m + be - 1.0) * s;
        let next = ((a2 + a3 * t) * cur - a4 * prev) / a1;
        prev = cur;
        cur = next;
    }
    debug_assert!(cur.is_finite(), "Jacobi recurrence overflowed");
    cur
}

/// `w p + p/2 - 2 > 2k(p + 1)`.
pub fn admissible(omega: f64, p: f64, k: u32) -> bool {
    omega * p + p / 2.0 - 2.0 > 2.0 * k as f64 * (p + 1.0)
}

/// Smallest integer `w > 0` passing [`admissible`], plus one.
pub fn default_omega(p: f64, k: u32) -> f64 {
    let mut omega = 1.0;
    while !admissible(omega, p, k) {
        omega += 1.0;
    }
    omega + 1.0
}

/// Parameters of the witness `U_n(x, y) = y P_n^{(omega, sigma)}(1 - x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessSpec {
    pub omega: f64,
    pub sigma: f64,
    pub n: usize,
    pub p: f64,
}

impl WitnessSpec {
    pub fn new(omega: f64, sigma: f64, n: usize, p: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::Range {
                what: "omega",
                value: omega,
                range: "(0, inf)",
            });
        }
        if n < 1 {
            return Err(Error::Range {
                what: "witness degree",
                value: n as f64,
                range: "[1, inf)",
            });
        }
        if !(p >= 1.0) {
            return Err(Error::Range {
                what: "p",
                value: p,
                range: "[1, inf)",
            });
        }
        Ok(Self { omega, sigma, n, p })
    }

    pub fn is_admissible(&self, k: u32) -> bool {
        admissible(self.omega, self.p, k)
    }
}

/// The witness `U_n` as a [`Poly2`] of total degree `n + 1`.
pub fn witness_poly(spec: &WitnessSpec, d: &CuspidalDomain) -> Result<Poly2> {
    let jac = jacobi_x_poly(spec, d)?;
    Ok(jac.mul_y())
}

/// `P_n^{(omega, sigma)}(1 - x)` as a [`Poly2`] on the domain's box.
pub fn jacobi_x_poly(spec: &WitnessSpec, d: &CuspidalDomain) -> Result<Poly2> {
    let (om, sg, n) = (spec.omega, spec.sigma, spec.n);
    Poly2::from_x_fn(n, d.y_max(), |x| jacobi_eval(om, sg, n, 1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessRatio {
    pub n: usize,
    /// `||dU_n/dy||_{L_p(K)} / ||U_n||_{L_p(K_{1/n^2})}`.
    pub rho: f64,
    /// `f'(1/n^2)`.
    pub eta_prime: f64,
    /// `rho * f'(1/n^2) / n^2`.
    pub normalized: f64,
    pub admissible: bool,
}

pub fn witness_ratio(spec: &WitnessSpec, d: &CuspidalDomain, q: &QuadSpec) -> Result<WitnessRatio> {
    let u = witness_poly(spec, d)?;
    let du = u.differentiate(Axis::Y);
    let n = spec.n;
    let nf = n as f64;
    let x_lo = 1.0 / (nf * nf);
    let num = lp_norm(&du, d, &SubdomainSpec::full(), spec.p, q)?;
    let den = lp_norm(&u, d, &SubdomainSpec::new(x_lo)?, spec.p, q)?;
    if !(den > 0.0) || !num.is_finite() {
        return Err(Error::Internal(format!(
            "witness norm degenerate at n = {n} (numerator {num}, denominator {den})"
        )));
    }
    let rho = num / den;
    let eta_prime = d.f_prime(x_lo)?.value;
    Ok(WitnessRatio {
        n,
        rho,
        eta_prime,
        normalized: rho * eta_prime / (nf * nf),
        admissible: spec.is_admissible(d.k()),
    })
}

/// `|n^{-w} P_n^{(w,0)}(cos(z/n)) - (z/2)^{-w} J_w(z)|`.
pub fn mehler_heine_gap(omega: f64, n: usize, z: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Range {
            what: "Mehler-Heine degree",
            value: n as f64,
            range: "[1, inf)",
        });
    }
    let nf = n as f64;
    let lhs = nf.powf(-omega) * jacobi_eval(omega, 0.0, n, (z / nf).cos());
    let rhs = bessel_j_scaled(omega, z)?.value;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesselMinBound {
    pub min_val: f64,
    pub argmin: f64,
    /// `w / Gamma(w + 2)`.
    pub bound: f64,
    pub ok: bool,
}

const MIN_GRID: usize = 10_000;

/// Minimum of `(z/2)^{-w} J_w(z)` over `[0, 2]` against `w / Gamma(w + 2)`.
pub fn bessel_min_bound(omega: f64) -> Result<BesselMinBound> {
    if !(omega > 0.0) {
        return Err(Error::Range {
            what: "omega",
            value: omega,
            range: "(0, inf)",
        });
    }
    let g = |z: f64| scaled_series(omega, z, SERIES_MAX_TERMS).value;
    let h = 2.0 / MIN_GRID as f64;
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for i in 0..=MIN_GRID {
        let v = g(i as f64 * h);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = (best_i.saturating_sub(1)) as f64 * h;
    let hi = ((best_i + 1).min(MIN_GRID)) as f64 * h;
    let (z_ref, v_ref) = golden_section_min(&g, lo, hi, 1e-14);
    let (min_val, argmin) = if v_ref < best {
        (v_ref, z_ref)
    } else {
        (best, best_i as f64 * h)
    };
    let bound = omega / gamma_unchecked(omega + 2.0);
    Ok(BesselMinBound {
        min_val,
        argmin,
        bound,
        ok: min_val >= bound - 1e-10,
    })
}

fn golden_section_min(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while (b - a).abs() > tol {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let z = 0.5 * (a + b);
    (z, g(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel(gamma(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma(5.0).unwrap(), 24.0) < 1e-13);
        assert!(rel(gamma(0.5).unwrap(), std::f64::consts::PI.sqrt()) < 1e-12);
    }

    #[test]
    fn gamma_factorials_and_recurrence_on_range() {
        let mut fact = 1.0f64;
        for n in 1..=50u32 {
            assert!(rel(gamma(n as f64).unwrap(), fact) < 1e-12, "n = {n}");
            fact *= n as f64;
        }
        // Gamma(x + 1) = x Gamma(x) off the integers
        for i in 0..200 {
            let x = 0.5 + i as f64 * 0.2437;
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            assert!(rel(lhs, rhs) < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        assert!(gamma(0.0).is_err());
        assert!(gamma(-1.5).is_err());
    }

    #[test]
    fn bessel_at_origin() {
        assert_eq!(bessel_j(0.0, 0.0).unwrap().value, 1.0);
        assert_eq!(bessel_j(2.5, 0.0).unwrap().value, 0.0);
        let s = bessel_j_scaled(3.0, 0.0).unwrap().value;
        assert!(rel(s, 1.0 / 6.0) < 1e-15);
    }

    #[test]
    fn bessel_half_order_closed_form() {
        // J_{1/2}(z) = sqrt(2/(pi z)) sin z
        for &z in &[0.1, 0.7, 1.0, 2.0, 3.3, 4.0] {
            let exact = (2.0 / (std::f64::consts::PI * z)).sqrt() * z.sin();
            assert!(
                rel(bessel_j(0.5, z).unwrap().value, exact) < 1e-13,
                "z = {z}"
            );
        }
    }

    #[test]
    fn bessel_out_of_range() {
        assert!(bessel_j(1.0, 4.5).is_err());
        assert!(bessel_j(1.0, -0.1).is_err());
    }

    #[test]
    fn bessel_remainder_bound_covers_deeper_truncation() {
        for &om in &[0.0, 0.5, 1.0, 3.0, 7.0] {
            for &z in &[0.5, 1.0, 2.0, 4.0] {
                let s = bessel_j(om, z).unwrap();
                let deeper = bessel_j_truncated(om, z, 2 * s.terms).unwrap();
                assert!(
                    (s.value - deeper).abs()
                        <= s.remainder_bound + 4.0 * f64::EPSILON * s.value.abs(),
                    "om = {om}, z = {z}"
                );
            }
        }
    }

    #[test]
    fn jacobi_low_degrees() {
        assert_eq!(jacobi_eval(3.0, 1.0, 0, 0.3), 1.0);
        assert_eq!(jacobi_eval(7.0, 0.0, 1, 1.0), 8.0);
    }

    /// Explicit sum formula with generalized binomials; independent of the
    /// recurrence.
    fn jacobi_explicit(al: f64, be: f64, n: usize, t: f64) -> f64 {
        let binom = |a: f64, k: usize| -> f64 {
            let mut r = 1.0;
            for i in 0..k {
                r *= (a - i as f64) / (i as f64 + 1.0);
            }
            r
        };
        (0..=n)
            .map(|s| {
                binom(n as f64 + al, n - s)
                    * binom(n as f64 + be, s)
                    * ((t - 1.0) / 2.0).powi(s as i32)
                    * ((t + 1.0) / 2.0).powi((n - s) as i32)
            })
            .sum()
    }

    #[test]
    fn jacobi_endpoint_is_binomial() {
        for om in 0..6 {
            for n in 0..=10 {
                let mut b = 1.0;
                for i in 1..=n {
                    b *= (om + i) as f64 / i as f64;
                }
                let v = jacobi_eval(om as f64, 0.7, n, 1.0);
                assert!(rel(v, b) < 1e-13, "om = {om}, n = {n}");
            }
        }
    }

    #[test]
    fn jacobi_recurrence_matches_explicit_sum() {
        for &(al, be) in &[(0.0, 0.0), (7.0, 0.0), (2.5, 1.5), (0.3, 4.0)] {
            for n in 0..=12 {
                for i in 0..=20 {
                    let t = -1.0 + 0.1 * i as f64;
                    let a = jacobi_eval(al, be, n, t);
                    let b = jacobi_explicit(al, be, n, t);
                    assert!(
                        (a - b).abs() <= 1e-11 * b.abs().max(1.0),
                        "{al} {be} {n} {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn admissibility_arithmetic() {
        assert!(admissible(7.0, 2.0, 2));
        assert!(!admissible(6.0, 2.0, 2));
        assert!(admissible(20.0, 1.0, 2));
        assert!(!admissible(6.5, 2.0, 2));
    }

    #[test]
    fn default_omega_adds_margin() {
        assert_eq!(default_omega(2.0, 2), 8.0);
        assert!(admissible(default_omega(1.0, 3), 1.0, 3));
    }

    #[test]
    fn witness_spec_validation() {
        assert!(WitnessSpec::new(0.0, 0.0, 3, 2.0).is_err());
        assert!(WitnessSpec::new(7.0, 0.0, 0, 2.0).is_err());
        assert!(WitnessSpec::new(7.0, 0.0, 3, 0.5).is_err());
    }

    #[test]
    fn mehler_heine_small_z_limit() {
        let om = 7.0;
        let lim = 1.0 / gamma(om + 1.0).unwrap();
        let z = 1e-6;
        let rhs = bessel_j_scaled(om, z).unwrap().value;
        assert!(rel(rhs, lim) < 1e-12);
        // the finite-n correction at z -> 0 is om (om + 1) / (2 n)
        let n = 40_000usize;
        let lhs = (n as f64).powf(-om) * jacobi_eval(om, 0.0, n, (z / n as f64).cos());
        assert!(rel(lhs, lim) < 1e-3);
    }

    #[test]
    fn mehler_heine_gap_shrinks_under_doubling() {
        let mut prev = mehler_heine_gap(7.0, 8, 1.0).unwrap();
        for n in [16, 32, 64, 128] {
            let g = mehler_heine_gap(7.0, n, 1.0).unwrap();
            assert!(g < prev, "n = {n}");
            prev = g;
        }
    }

    #[test]
    fn bessel_min_bound_omega_one() {
        let r = bessel_min_bound(1.0).unwrap();
        assert!(rel(r.bound, 0.5) < 1e-14);
        assert!(r.ok);
    }

    #[test]
    fn bessel_min_bound_omega_seven_and_three() {
        let r = bessel_min_bound(7.0).unwrap();
        assert!(rel(r.bound, 7.0 / 40320.0) < 1e-12);
        assert!(r.ok);
        assert!(bessel_min_bound(3.0).unwrap().ok);
    }
}
