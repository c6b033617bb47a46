//! Markov factors `sup ||dP/d axis|| / ||P||` over degree-`n` polynomials,
//! Remez ratios `sup ||P||_K / ||P||_{K_{x_lo}}`, per-degree series and
//! power-law fits.
//!
//! For p = 2 both suprema are generalized symmetric eigenvalues. They are
//! solved in an [`OrthoBasis`] of the region so that the Gram matrix, whose
//! condition grows like `10^{2n}` on a cusp, is never factorized. Other p use
//! a seeded search that only certifies lower bounds.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CuspidalDomain, SubdomainSpec};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, norm2, sym_eigen, Mat};
use crate::polybasis::{
    basis_len, cross_products, gram, orthonormalize, Axis, DiffOperator, OrthoBasis, Poly2,
    DEGREE_CAP,
};
use crate::quad::{gram_nodes, lp_norm, QuadSpec};
use crate::specfun::{default_omega, witness_ratio, WitnessSpec};

/// `M_n = sqrt(lambda_max)` of the derivative form in an orthonormal basis
/// of degree-`n` polynomials on `K`.
pub fn markov_factor_p2(d: &CuspidalDomain, n: usize, axis: Axis, q: &QuadSpec) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let ob = OrthoBasis::new(d, &SubdomainSpec::full(), n, q)?;
    let a = cross_products(&ob.derivative_values(axis));
    Ok(sym_eigen(&a).max().max(0.0).sqrt())
}

/// `(lambda, x)` maximizing `x^T A x / x^T G x`, through the Cholesky
/// transform of `G`.
pub fn generalized_max(a: &Mat, g: &Mat) -> Result<(f64, Vec<f64>)> {
    let t = orthonormalize(g)?.t;
    let mut reduced = t.transpose().matmul(a).matmul(&t);
    reduced.symmetrize();
    let e = sym_eigen(&reduced);
    Ok((e.max(), t.matvec(&e.max_vector())))
}

/// Same factor as [`markov_factor_p2`] from the tensor-basis Gram matrix,
/// `D^T G D` against `G`. Limited by the condition cap of
/// [`orthonormalize`] to small degrees; kept as an independent check.
pub fn markov_factor_p2_gram(
    d: &CuspidalDomain,
    n: usize,
    axis: Axis,
    q: &QuadSpec,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let g = gram(d, &SubdomainSpec::full(), n, q)?.entries;
    let dop = DiffOperator::new(axis, n, d.y_max()).matrix;
    let a = dop.transpose().matmul(&g).matmul(&dop);
    Ok(generalized_max(&a, &g)?.0.max(0.0).sqrt())
}

fn check_x_lo(x_lo: f64) -> Result<()> {
    if !(0.0..1.0).contains(&x_lo) {
        return Err(Error::Range {
            what: "x_lo",
            value: x_lo,
            range: "[0, 1)",
        });
    }
    Ok(())
}

/// Smallest eigenvalue accepted for the truncated-region form.
const REMEZ_FLOOR: f64 = 1e-13;

/// `sqrt(lambda_max(G_K, G_{K_{x_lo}}))`, computed as `1/sqrt(lambda_min)` of
/// the truncated-region form of a basis orthonormal over `K`.
pub fn remez_ratio_p2(d: &CuspidalDomain, n: usize, x_lo: f64, q: &QuadSpec) -> Result<f64> {
    check_x_lo(x_lo)?;
    if x_lo == 0.0 {
        return Ok(1.0);
    }
    let ob = OrthoBasis::new(d, &SubdomainSpec::full(), n, q)?;
    let sub = SubdomainSpec::new(x_lo)?;
    let b = cross_products(&ob.sample(&gram_nodes(d, &sub, n, q)));
    let lmin = sym_eigen(&b).min();
    if !(lmin > REMEZ_FLOOR) {
        return Err(Error::Conditioning {
            degree: n,
            estimate: 1.0 / lmin.max(f64::MIN_POSITIVE),
        });
    }
    Ok((1.0 / lmin).sqrt().max(1.0))
}

/// Remez ratio on the inverse-square truncation, `x_lo = 1/n^2`.
pub fn remez_ratio_inverse_square(d: &CuspidalDomain, n: usize, q: &QuadSpec) -> Result<f64> {
    if n < 2 {
        return Err(Error::Range {
            what: "Remez inverse-square degree",
            value: n as f64,
            range: "[2, inf)",
        });
    }
    remez_ratio_p2(d, n, 1.0 / (n * n) as f64, q)
}

/// Gram-route Remez ratio for small degrees.
pub fn remez_ratio_p2_gram(d: &CuspidalDomain, n: usize, x_lo: f64, q: &QuadSpec) -> Result<f64> {
    check_x_lo(x_lo)?;
    if x_lo == 0.0 {
        return Ok(1.0);
    }
    let gk = gram(d, &SubdomainSpec::full(), n, q)?.entries;
    let gs = gram(d, &SubdomainSpec::new(x_lo)?, n, q)?.entries;
    Ok(generalized_max(&gk, &gs)?.0.max(1.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    /// Ratio realized by the best polynomial found; a lower bound on the
    /// factor.
    pub value: f64,
    pub evaluations: usize,
    /// Best coefficients in the orthonormal basis.
    pub coefficients: Vec<f64>,
}

/// Smallest relative coordinate step tried by the ascent.
pub const SEARCH_MIN_STEP: f64 = 1e-3;

struct Objective {
    p: f64,
    /// `sqrt(w) q_m` and `sqrt(w) dq_m` at the nodes.
    vals: Vec<Vec<f64>>,
    dvals: Vec<Vec<f64>>,
    /// `w` at the nodes, for p != 2.
    weights: Vec<f64>,
    /// `A = sum dq dq^T` for p = 2.
    form: Option<Mat>,
}

impl Objective {
    fn eval(&self, c: &[f64]) -> f64 {
        if let Some(a) = &self.form {
            let den: f64 = c.iter().map(|v| v * v).sum();
            if den == 0.0 {
                return 0.0;
            }
            return (a.quad_form(c).max(0.0) / den).sqrt();
        }
        let len = self.weights.len();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..len {
            let (mut pv, mut dv) = (0.0, 0.0);
            for (m, cm) in c.iter().enumerate() {
                pv += cm * self.vals[m][k];
                dv += cm * self.dvals[m][k];
            }
            // values carry sqrt(w); undo it before raising to p
            let sw = self.weights[k].sqrt();
            if sw > 0.0 {
                den += self.weights[k] * (pv / sw).abs().powf(self.p);
                num += self.weights[k] * (dv / sw).abs().powf(self.p);
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).powf(1.0 / self.p)
        }
    }
}

pub fn markov_factor_search(
    d: &CuspidalDomain,
    n: usize,
    p: f64,
    axis: Axis,
    budget: usize,
    seed: u64,
    q: &QuadSpec,
) -> Result<f64> {
    Ok(markov_factor_search_seeded(d, n, p, axis, budget, seed, &[], q)?.value)
}

/// Seeded random directions followed by coordinate ascent (lowest index
/// first, relative steps halved down to [`SEARCH_MIN_STEP`]). `seeds` are
/// extra starting polynomials of degree `<= n`. For p != 2 the reported value
/// is recomputed for the best polynomial with [`lp_norm`].
#[allow(clippy::too_many_arguments)]
pub fn markov_factor_search_seeded(
    d: &CuspidalDomain,
    n: usize,
    p: f64,
    axis: Axis,
    budget: usize,
    seed: u64,
    seeds: &[Poly2],
    q: &QuadSpec,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::Range {
            what: "budget",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Range {
            what: "p",
            value: p,
            range: "[1, inf)",
        });
    }
    if n == 0 {
        return Ok(SearchOutcome {
            value: 0.0,
            evaluations: 0,
            coefficients: vec![1.0],
        });
    }
    let ob = OrthoBasis::new(d, &SubdomainSpec::full(), n, q)?;
    let dvals = ob.derivative_values(axis);
    let dim = ob.dim();
    let obj = if p == 2.0 {
        Objective {
            p,
            form: Some(cross_products(&dvals)),
            vals: Vec::new(),
            dvals: Vec::new(),
            weights: Vec::new(),
        }
    } else {
        Objective {
            p,
            form: None,
            vals: ob.values().to_vec(),
            dvals,
            weights: ob.nodes().ws.clone(),
        }
    };

    let mut evals = 0usize;
    let mut best = vec![0.0; dim];
    best[0] = 1.0;
    let mut best_val = f64::NEG_INFINITY;
    let consider = |c: Vec<f64>, evals: &mut usize, best: &mut Vec<f64>, best_val: &mut f64| {
        let v = obj.eval(&c);
        *evals += 1;
        if v > *best_val {
            *best_val = v;
            *best = c;
        }
    };

    for s in seeds {
        if evals >= budget {
            break;
        }
        let c = ob.project(&s.with_degree(n)?);
        consider(c, &mut evals, &mut best, &mut best_val);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = (budget / 2).max(1);
    while evals < random.min(budget) {
        let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        consider(c, &mut evals, &mut best, &mut best_val);
    }

    let mut step = 0.5;
    while step >= SEARCH_MIN_STEP && evals < budget {
        let mut improved = false;
        for i in 0..dim {
            let scale = norm2(&best);
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let mut trial = best.clone();
                trial[i] += sign * step * scale;
                let before = best_val;
                consider(trial, &mut evals, &mut best, &mut best_val);
                if best_val > before {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let value = if p == 2.0 {
        best_val
    } else {
        let polys = ob.polynomials();
        let mut poly = Poly2::zero(n, d.y_max());
        for (c, qm) in best.iter().zip(&polys) {
            poly = poly.axpy(*c, qm);
        }
        let full = SubdomainSpec::full();
        let num = lp_norm(&poly.differentiate(axis), d, &full, p, q)?;
        let den = lp_norm(&poly, d, &full, p, q)?;
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    Ok(SearchOutcome {
        value,
        evaluations: evals,
        coefficients: best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    MarkovX,
    MarkovY,
    Remez,
}

impl FactorKind {
    pub fn axis(&self) -> Option<Axis> {
        match self {
            Self::MarkovX => Some(Axis::X),
            Self::MarkovY => Some(Axis::Y),
            Self::Remez => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exact p = 2 value from the eigenproblem.
    ExactEigen,
    /// Lower bound from [`markov_factor_search`].
    Search,
    /// Ratio of the Jacobi witness, a lower bound for `MarkovY`.
    Witness,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::ExactEigen => "exact-eigen",
            Self::Search => "search",
            Self::Witness => "witness",
        }
    }

    pub fn is_lower_bound(&self) -> bool {
        !matches!(self, Self::ExactEigen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSeries {
    pub kind: FactorKind,
    pub p: f64,
    pub method: Method,
    pub domain: String,
    /// `(n, value)` sorted by `n`.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            threads: None,
            budget: 2_000,
            seed: 0,
        }
    }
}

/// A series that stopped at its first failing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFailure {
    pub partial: FactorSeries,
    pub n: usize,
    pub error: Error,
}

fn series_entry(
    d: &CuspidalDomain,
    kind: FactorKind,
    p: f64,
    n: usize,
    method: Method,
    q: &QuadSpec,
    opts: &SeriesOptions,
) -> Result<f64> {
    match (kind, method) {
        (FactorKind::Remez, Method::ExactEigen) => remez_ratio_inverse_square(d, n, q),
        (FactorKind::Remez, _) => Err(Error::ParameterDomain(
            "Remez ratios are only computed by the exact p = 2 eigenproblem".into(),
        )),
        (_, Method::ExactEigen) => {
            if p != 2.0 {
                return Err(Error::ParameterDomain(format!(
                    "the exact eigen route requires p = 2 (got p = {p})"
                )));
            }
            markov_factor_p2(d, n, kind.axis().unwrap(), q)
        }
        (_, Method::Search) => markov_factor_search(
            d,
            n,
            p,
            kind.axis().unwrap(),
            opts.budget,
            opts.seed.wrapping_add(n as u64),
            q,
        ),
        (FactorKind::MarkovY, Method::Witness) => {
            if n == 0 {
                return Ok(0.0);
            }
            let spec = WitnessSpec::new(default_omega(p, d.k()), 0.0, n, p)?;
            Ok(witness_ratio(&spec, d, q)?.rho)
        }
        (FactorKind::MarkovX, Method::Witness) => Err(Error::ParameterDomain(
            "the witness family only bounds the y-derivative".into(),
        )),
    }
}

pub fn domain_descriptor(d: &CuspidalDomain) -> String {
    format!("a={}, k={}, f={:?}", d.a(), d.k(), d.f())
}

/// Per-degree values over `n_range`, computed in parallel and returned in
/// order. The first failing degree aborts the series; entries below it are
/// kept in the failure.
pub fn factor_series(
    d: &CuspidalDomain,
    kind: FactorKind,
    p: f64,
    n_range: RangeInclusive<usize>,
    method: Method,
    q: &QuadSpec,
    opts: &SeriesOptions,
) -> std::result::Result<FactorSeries, SeriesFailure> {
    let ns: Vec<usize> = n_range.collect();
    let run = || -> Vec<Result<f64>> {
        ns.par_iter()
            .map(|&n| series_entry(d, kind, p, n, method, q, opts))
            .collect()
    };
    let mut series = FactorSeries {
        kind,
        p,
        method,
        domain: domain_descriptor(d),
        entries: Vec::with_capacity(ns.len()),
    };
    let results = match opts.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                return Err(SeriesFailure {
                    partial: series,
                    n: ns.first().copied().unwrap_or(0),
                    error: Error::Internal(format!("thread pool: {e}")),
                })
            }
        },
        None => run(),
    };
    for (n, r) in ns.iter().zip(results) {
        match r {
            Ok(v) => series.entries.push((*n, v)),
            Err(error) => {
                return Err(SeriesFailure {
                    partial: series,
                    n: *n,
                    error,
                })
            }
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub residual_rms: f64,
    pub points: usize,
}

/// Least-squares fit of `ln value = intercept + slope ln n` over the window,
/// skipping nonpositive values.
pub fn fit_points(entries: &[(usize, f64)], window: (usize, usize)) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|(n, v)| *n >= window.0 && *n <= window.1 && *n > 0 && *v > 0.0 && v.is_finite())
        .map(|(n, v)| ((*n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            needed: 3,
        });
    }
    let a = Mat::from_rows(&pts.iter().map(|(x, _)| vec![1.0, *x]).collect::<Vec<_>>());
    let b: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
    let coef = lstsq(&a, &b)?;
    let ss: f64 = pts
        .iter()
        .map(|(x, y)| (y - coef[0] - coef[1] * x).powi(2))
        .sum();
    Ok(ExponentFit {
        slope: coef[1],
        intercept: coef[0],
        window,
        residual_rms: (ss / pts.len() as f64).sqrt(),
        points: pts.len(),
    })
}

pub fn fit_exponent(s: &FactorSeries, window: (usize, usize)) -> Result<ExponentFit> {
    fit_points(&s.entries, window)
}

/// Dimension of the degree-`n` space searched at the cap.
pub fn max_search_dim() -> usize {
    basis_len(DEGREE_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CuspFunction;

    fn d1() -> CuspidalDomain {
        CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 0.9 }).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn degree_zero_factor_vanishes() {
        let q = QuadSpec::default();
        assert_eq!(markov_factor_p2(&d1(), 0, Axis::X, &q).unwrap(), 0.0);
        assert_eq!(markov_factor_p2(&d1(), 0, Axis::Y, &q).unwrap(), 0.0);
    }

    #[test]
    fn eigen_and_gram_routes_agree_at_low_degree() {
        let q = QuadSpec::default();
        for n in 1..=4 {
            for axis in [Axis::X, Axis::Y] {
                let a = markov_factor_p2(&d1(), n, axis, &q).unwrap();
                let b = markov_factor_p2_gram(&d1(), n, axis, &q).unwrap();
                assert!(rel(a, b) < 1e-9, "n = {n}, {axis:?}: {a} vs {b}");
            }
            let a = remez_ratio_inverse_square(&d1(), n.max(2), &q).unwrap();
            let b = remez_ratio_p2_gram(&d1(), n.max(2), 1.0 / (n.max(2) * n.max(2)) as f64, &q)
                .unwrap();
            assert!(rel(a, b) < 1e-9, "remez n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn remez_trivial_cases() {
        let q = QuadSpec::default();
        let dx2 = CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 1.0 }).unwrap();
        assert_eq!(remez_ratio_p2(&dx2, 5, 0.0, &q).unwrap(), 1.0);
        let r = remez_ratio_p2(&dx2, 0, 0.25, &q).unwrap();
        let trunc = 5.0 / 24.0 - (1.0 / 192.0 - 1.0 / 2048.0);
        assert!(rel(r, (5.0f64 / 24.0 / trunc).sqrt()) < 1e-12);
        assert!((r - 1.011525).abs() < 1e-6);
        assert!(remez_ratio_p2(&dx2, 3, 1.0, &q).is_err());
    }

    #[test]
    fn search_respects_the_supremum() {
        let q = QuadSpec::default();
        for n in 1..=3 {
            let exact = markov_factor_p2(&d1(), n, Axis::Y, &q).unwrap();
            let found = markov_factor_search(&d1(), n, 2.0, Axis::Y, 5_000, 11, &q).unwrap();
            assert!(found <= exact * (1.0 + 1e-9));
            assert!(found >= 0.9 * exact, "n = {n}: {found} vs {exact}");
        }
    }

    #[test]
    fn search_is_deterministic() {
        let q = QuadSpec::default();
        let a = markov_factor_search(&d1(), 2, 3.0, Axis::X, 200, 5, &q).unwrap();
        let b = markov_factor_search(&d1(), 2, 3.0, Axis::X, 200, 5, &q).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn fit_synthetic_power_laws() {
        let e: Vec<(usize, f64)> = (2..=10).map(|n| (n, 3.0 * (n as f64).powi(4))).collect();
        let f = fit_points(&e, (2, 10)).unwrap();
        assert!((f.slope - 4.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
        let e: Vec<(usize, f64)> = (2..=10).map(|n| (n, (n * n) as f64)).collect();
        assert!((fit_points(&e, (2, 10)).unwrap().slope - 2.0).abs() < 1e-12);
        let e = vec![(0, 0.0), (1, 0.0), (2, 1.0), (3, 2.0)];
        assert!(matches!(
            fit_points(&e, (0, 3)),
            Err(Error::InsufficientData {
                usable: 2,
                needed: 3
            })
        ));
    }

    #[test]
    fn series_contracts() {
        let q = QuadSpec::default();
        let opts = SeriesOptions::default();
        let s = factor_series(
            &d1(),
            FactorKind::MarkovY,
            2.0,
            1..=3,
            Method::ExactEigen,
            &q,
            &opts,
        )
        .unwrap();
        assert_eq!(s.entries.len(), 3);
        assert!(s.entries.windows(2).all(|w| w[1].1 >= w[0].1));
        let err = factor_series(
            &d1(),
            FactorKind::MarkovY,
            2.0,
            15..=17,
            Method::ExactEigen,
            &q,
            &opts,
        )
        .unwrap_err();
        assert_eq!(err.n, 17);
        assert_eq!(err.partial.entries.len(), 2);
    }
}
