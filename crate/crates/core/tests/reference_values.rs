//! Markov factors and Remez ratios on `a = 0.5, k = 3, f = 0.9 x^2` against
//! values computed independently in 80-digit arithmetic (Gram matrices from
//! exact moments, generalized eigenproblems solved at full precision).

use mlab_core::markov::{markov_factor_p2, remez_ratio_inverse_square};
use mlab_core::{Axis, CuspFunction, CuspidalDomain, QuadSpec};

/// `(n, M_X, M_Y, Remez(1/n^2))`; the Remez ratio is defined from n = 2.
const REFERENCE: [(usize, f64, f64, f64); 14] = [
    (1, 10.899692901491619, 10.626974863076082, f64::NAN),
    (
        2,
        21.973747589176593,
        20.960633348743862,
        1.7596619929559008,
    ),
    (3, 36.920619074734454, 37.1439033017828, 1.4040400406923046),
    (4, 57.552960830426926, 71.49422066572274, 1.277162948123372),
    (5, 82.81180259495962, 139.8084075230426, 1.21500669790466),
    (6, 112.78894877738261, 260.6900117608467, 1.1796050328209264),
    (
        7,
        147.47971816136555,
        443.38312966323775,
        1.1567684921074721,
    ),
    (8, 186.88170615615843, 703.3444159616631, 1.1408864861261871),
    (
        9,
        231.01365652771076,
        1063.9846570633042,
        1.1292771340490624,
    ),
    (
        10,
        279.90046995612727,
        1544.7771142213683,
        1.1204608232473166,
    ),
    (11, 333.5522879701115, 2166.72197591492, 1.113546113887821),
    (12, 391.97684712410114, 2955.9451855407, 1.107982619690246),
    (13, 455.1841469529782, 3940.4325231923094, 1.103418471898628),
    (14, 523.1823782398956, 5149.028874015441, 1.0996088763550926),
];

fn d1() -> CuspidalDomain {
    CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 0.9 }).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn markov_factors_match_high_precision_reference() {
    let q = QuadSpec::default();
    for &(n, mx, my, _) in &REFERENCE {
        let x = markov_factor_p2(&d1(), n, Axis::X, &q).unwrap();
        let y = markov_factor_p2(&d1(), n, Axis::Y, &q).unwrap();
        assert!(rel(x, mx) < 1e-8, "M_X(n = {n}) = {x}, expected {mx}");
        assert!(rel(y, my) < 1e-8, "M_Y(n = {n}) = {y}, expected {my}");
    }
}

#[test]
fn remez_ratios_match_high_precision_reference() {
    let q = QuadSpec::default();
    for &(n, _, _, r) in REFERENCE.iter().skip(1) {
        let v = remez_ratio_inverse_square(&d1(), n, &q).unwrap();
        assert!(rel(v, r) < 1e-8, "Remez(n = {n}) = {v}, expected {r}");
    }
}
