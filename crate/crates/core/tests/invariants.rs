//! Randomized checks of the structural properties of each module.

use std::collections::BTreeMap;

use mlab_core::domain::{
    predicted_exponent, validate, ExtrapolationModel, DEFAULT_GRID_POINTS, DEFAULT_TOL,
};
use mlab_core::linalg::sym_eigen;
use mlab_core::markov::{markov_factor_p2, markov_factor_search, remez_ratio_inverse_square};
use mlab_core::polybasis::{basis_len, gram, DiffOperator};
use mlab_core::quad::{area, gauss_legendre, lp_norm};
use mlab_core::specfun::{jacobi_x_poly, witness_poly, WitnessSpec};
use mlab_core::{Axis, CuspFunction, CuspidalDomain, Poly2, QuadSpec, SubdomainSpec};
use proptest::prelude::*;

fn d1() -> CuspidalDomain {
    CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 0.9 }).unwrap()
}

/// Random monomial coefficients of total degree `<= n`.
fn monomials(n: usize) -> impl Strategy<Value = BTreeMap<(usize, usize), f64>> {
    prop::collection::vec(-1.0f64..1.0, basis_len(n)).prop_map(move |cs| {
        let mut m = BTreeMap::new();
        let mut it = cs.into_iter();
        for t in 0..=n {
            for j in 0..=t {
                m.insert((t - j, j), it.next().unwrap());
            }
        }
        m
    })
}

fn eval_monomials(m: &BTreeMap<(usize, usize), f64>, x: f64, y: f64) -> f64 {
    m.iter()
        .map(|(&(i, j), c)| c * x.powi(i as i32) * y.powi(j as i32))
        .sum()
}

fn poly_strategy(max_n: usize) -> impl Strategy<Value = Poly2> {
    (1..=max_n)
        .prop_flat_map(monomials)
        .prop_map(|m| Poly2::from_monomials(&m, &d1()).unwrap())
}

/// `∫_{x_lo}^1 ∫_{a x^2}^{f(x)} g dy dx` by plain Gauss rules in `x` and `y`,
/// without the `y = s^k` substitution.
fn vertical_strips(d: &CuspidalDomain, x_lo: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
    let rule = gauss_legendre(40);
    let panels = 16;
    let h = (1.0 - x_lo) / panels as f64;
    let mut total = 0.0;
    for j in 0..panels {
        let (xa, xb) = (x_lo + j as f64 * h, x_lo + (j + 1) as f64 * h);
        for (tx, wx) in rule.nodes.iter().zip(&rule.weights) {
            let x = 0.5 * (xa + xb) + 0.5 * (xb - xa) * tx;
            let (ya, yb) = (d.lower(x), d.upper(x));
            let col: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(ty, wy)| wy * g(x, 0.5 * (ya + yb) + 0.5 * (yb - ya) * ty))
                .sum();
            total += 0.5 * (xb - xa) * wx * 0.5 * (yb - ya) * col;
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn boundary_points_belong_to_the_domain(r in 1.2f64..3.0, b in 0.6f64..2.0, t in 0.0f64..1.0) {
        let d = CuspidalDomain::new(0.5, 3, CuspFunction::Power { r, b }).unwrap();
        let x = t * t;
        if d.lower(x) <= d.upper(x) {
            prop_assert!(d.contains(x, d.lower(x)));
            prop_assert!(d.contains(x, d.upper(x)));
        }
    }

    #[test]
    fn kf_dominates_xf_prime_on_valid_domains(r in 1.1f64..2.9, b in 0.6f64..2.0, k in 3u32..5) {
        let d = CuspidalDomain::new(0.5, k, CuspFunction::Power { r, b }).unwrap();
        let rep = validate(&d, DEFAULT_GRID_POINTS, DEFAULT_TOL).unwrap();
        if rep.valid {
            prop_assert!(rep.check("kf>=xf'").unwrap().passed);
        }
    }

    #[test]
    fn power_exponent_is_two_r_for_any_b(r in 1.1f64..4.0, b in 0.1f64..10.0) {
        let d = CuspidalDomain::new(0.5, 3, CuspFunction::Power { r, b }).unwrap();
        for model in [ExtrapolationModel::InverseLog, ExtrapolationModel::InverseLogPlusLogLog] {
            let est = predicted_exponent(&d, 1 << 12, model).unwrap();
            prop_assert!((est.extrapolated - 2.0 * r).abs() <= 1e-6, "{model:?}: {}", est.extrapolated);
            prop_assert!(est.extrapolated >= 2.0 - 1e-9);
            prop_assert!(est.residual >= 0.0);
        }
    }

    #[test]
    fn mixed_partials_commute(p in poly_strategy(8)) {
        let xy = p.differentiate(Axis::X).differentiate(Axis::Y);
        let yx = p.differentiate(Axis::Y).differentiate(Axis::X);
        let scale = p.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for (u, v) in xy.coeffs().iter().zip(yx.coeffs()) {
            prop_assert!((u - v).abs() <= 1e-12 * scale, "{u} vs {v}");
        }
    }

    #[test]
    fn monomial_round_trip(m in (1usize..=6).prop_flat_map(monomials), pts in prop::collection::vec((0.0f64..1.0, 0.0f64..0.9), 100)) {
        let p = Poly2::from_monomials(&m, &d1()).unwrap();
        let mag: f64 = m.values().map(|c| c.abs()).sum();
        for (x, y) in pts {
            let direct = eval_monomials(&m, x, y);
            prop_assert!((p.eval(x, y) - direct).abs() <= 1e-11 * mag, "({x}, {y})");
        }
    }

    #[test]
    fn diff_operator_is_nilpotent(n in 0usize..=8, axis in prop_oneof![Just(Axis::X), Just(Axis::Y)], seed in any::<u64>()) {
        let op = DiffOperator::new(axis, n, d1().y_max());
        let coeffs: Vec<f64> = (0..basis_len(n)).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let mut p = Poly2::from_coeffs(n, d1().y_max(), coeffs).unwrap();
        for _ in 0..=n {
            p = op.apply(&p).unwrap();
        }
        prop_assert!(p.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn homogeneity_and_subset_order(p in poly_strategy(5), c in -5.0f64..5.0, x_lo in 0.0f64..0.9, pi in 0usize..4) {
        let q = QuadSpec::default();
        let d = d1();
        let pp = [1.0, 2.0, 3.0, 4.0][pi];
        let full = SubdomainSpec::full();
        let base = lp_norm(&p, &d, &full, pp, &q).unwrap();
        let scaled = lp_norm(&p.scaled(c), &d, &full, pp, &q).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * c.abs() * base);
        let part = lp_norm(&p, &d, &SubdomainSpec::new(x_lo).unwrap(), pp, &q).unwrap();
        let slack = if pi % 2 == 1 { 1e-12 } else { q.rel_tol };
        prop_assert!(part <= base * (1.0 + slack), "{part} > {base}");
    }

    #[test]
    fn normalized_norms_increase_with_p(p in poly_strategy(4)) {
        let q = QuadSpec::default();
        let d = d1();
        let full = SubdomainSpec::full();
        let a = area(&d, &full, &q).unwrap();
        let norms: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&pp| lp_norm(&p, &d, &full, pp, &q).unwrap() * a.powf(-1.0 / pp))
            .collect();
        prop_assert!(norms[0] <= norms[1] * (1.0 + 1e-9) && norms[1] <= norms[2] * (1.0 + 1e-12), "{norms:?}");
    }

    #[test]
    fn substitution_matches_vertical_strips(p in poly_strategy(4), x_lo in 0.1f64..0.8) {
        let q = QuadSpec::default();
        let d = CuspidalDomain::new(0.5, 2, CuspFunction::Power { r: 2.0, b: 0.9 }).unwrap();
        let p = Poly2::from_coeffs(p.degree(), d.y_max(), p.coeffs().to_vec()).unwrap();
        let sub = SubdomainSpec::new(x_lo).unwrap();
        let ours = lp_norm(&p, &d, &sub, 2.0, &q).unwrap().powi(2);
        let strips = vertical_strips(&d, x_lo, |x, y| p.eval(x, y).powi(2));
        prop_assert!((ours - strips).abs() <= 1e-9 * strips, "{ours} vs {strips}");
    }

    #[test]
    fn gram_invariants(n in 0usize..=5, x_lo in 0.0f64..0.9) {
        let q = QuadSpec::default();
        let d = d1();
        let sub = SubdomainSpec::new(x_lo).unwrap();
        let g = gram(&d, &sub, n, &q).unwrap().entries;
        prop_assert!(g.asymmetry() <= 1e-13 * g.max_abs());
        prop_assert!(sym_eigen(&g).min() >= -1e-10 * g.trace());
        let a = area(&d, &sub, &q).unwrap();
        prop_assert!((g[(0, 0)] - a).abs() <= 1e-12 * a);
    }

    #[test]
    fn witness_y_derivative_is_the_jacobi_factor(omega in 0.5f64..10.0, sigma in 0.0f64..5.0, n in 1usize..=10) {
        let d = d1();
        let spec = WitnessSpec::new(omega, sigma, n, 2.0).unwrap();
        let w = witness_poly(&spec, &d).unwrap().differentiate(Axis::Y);
        let jac = jacobi_x_poly(&spec, &d).unwrap();
        let scale = jac.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for i in 0..=n {
            for j in 0..=n - i {
                prop_assert!((w.coeff(i, j) - jac.coeff(i, j)).abs() <= 1e-9 * scale, "({i}, {j})");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn search_never_exceeds_the_eigenvalue(n in 1usize..=4, seed in any::<u64>(), x_axis in any::<bool>()) {
        let q = QuadSpec::default();
        let axis = if x_axis { Axis::X } else { Axis::Y };
        let exact = markov_factor_p2(&d1(), n, axis, &q).unwrap();
        let found = markov_factor_search(&d1(), n, 2.0, axis, 500, seed, &q).unwrap();
        prop_assert!(found <= exact * (1.0 + 1e-9), "{found} > {exact}");
    }
}

#[test]
fn markov_x_growth_is_quadratic_over_a_doubling() {
    let q = QuadSpec::default();
    let m7 = markov_factor_p2(&d1(), 7, Axis::X, &q).unwrap();
    let m14 = markov_factor_p2(&d1(), 14, Axis::X, &q).unwrap();
    assert!(
        m14 / 196.0 <= 2.0 * m7 / 49.0,
        "M_14/196 = {}, M_7/49 = {}",
        m14 / 196.0,
        m7 / 49.0
    );
}

#[test]
fn remez_growth_is_bounded_over_a_doubling() {
    let q = QuadSpec::default();
    let r7 = remez_ratio_inverse_square(&d1(), 7, &q).unwrap();
    let r14 = remez_ratio_inverse_square(&d1(), 14, &q).unwrap();
    assert!(r14 / r7 <= 1.5, "{r14} / {r7}");
}

#[test]
fn y_derivative_grows_faster_than_x_derivative() {
    let q = QuadSpec::default();
    let d = d1();
    let slope = |axis| {
        let lo = markov_factor_p2(&d, 5, axis, &q).unwrap();
        let hi = markov_factor_p2(&d, 10, axis, &q).unwrap();
        (hi / lo).ln() / 2f64.ln()
    };
    let (sy, sx) = (slope(Axis::Y), slope(Axis::X));
    assert!(sy > sx, "Y slope {sy} vs X slope {sx}");
}
