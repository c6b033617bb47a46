//! Bivariate polynomials of bounded total degree, differentiation, Gram
//! matrices over `K` and its truncations, and a discrete orthonormal basis.
//!
//! [`Poly2`] stores coefficients in the tensor basis `L_i(2x - 1) L_j(2y/Y - 1)`
//! of shifted Legendre polynomials on the bounding box `[0, 1] x [0, Y]`,
//! ordered by total degree and then by the `y` exponent.
//!
//! The Gram matrix of that basis over `K` is still exponentially
//! ill-conditioned in the degree because `K` is thin near its cusp, so the
//! extremal problems use [`OrthoBasis`]: an orthonormal basis for the discrete
//! inner product of a quadrature rule, built by a multivariate Arnoldi
//! recurrence that never forms the Gram matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CuspidalDomain, SubdomainSpec};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, lower_inverse, norm2, sym_eigen, Mat};
use crate::quad::{gauss_legendre, gram_nodes, Integrand, NodeSet, QuadSpec};

/// Largest degree accepted by the extremal problems.
pub const DEGREE_CAP: usize = 16;
/// Largest degree a [`Poly2`] may be constructed with.
pub const REPRESENTATION_CAP: usize = 64;
/// Largest accepted condition estimate in [`orthonormalize`].
pub const CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Number of basis elements of total degree `<= n`.
pub fn basis_len(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Position of the element with exponents `(i, j)`.
pub fn basis_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Exponents `(i, j)` of position `m`.
pub fn basis_pair(m: usize) -> (usize, usize) {
    let mut d = 0;
    while basis_len(d) <= m {
        d += 1;
    }
    let j = m - d * (d + 1) / 2;
    (d - j, j)
}

/// `L_0(t), ..., L_n(t)` into `out[..=n]`.
fn legendre_values(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for m in 2..out.len() {
        let mf = m as f64;
        out[m] = ((2.0 * mf - 1.0) * t * out[m - 1] - (mf - 1.0) * out[m - 2]) / mf;
    }
}

/// `sum c_m L_m(t)` by Clenshaw's recurrence.
fn legendre_series(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for m in (0..c.len()).rev() {
        let mf = m as f64;
        let alpha = (2.0 * mf + 1.0) / (mf + 1.0) * t;
        let beta = (mf + 1.0) / (mf + 2.0);
        let b0 = c[m] + alpha * b1 - beta * b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

/// Coefficients of `d/dt sum c_m L_m(t)`, one shorter than `c`.
fn legendre_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut b = vec![0.0; n + 1];
    for m in (1..n).rev() {
        let mf = m as f64;
        b[m - 1] = (2.0 * mf - 1.0) * (c[m] + b[m + 1] / (2.0 * mf + 3.0));
    }
    b.truncate(n - 1);
    b
}

/// Coefficients of `(1 + t)/2 * sum c_m L_m(t)`, one longer than `c`.
fn legendre_mul_half_shift(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c.len() + 1];
    for (m, &cm) in c.iter().enumerate() {
        let mf = m as f64;
        out[m] += 0.5 * cm;
        out[m + 1] += 0.5 * cm * (mf + 1.0) / (2.0 * mf + 1.0);
        if m > 0 {
            out[m - 1] += 0.5 * cm * mf / (2.0 * mf + 1.0);
        }
    }
    out
}

/// Legendre coefficients of `((1 + t)/2)^m`.
fn power_in_legendre(m: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..m {
        c = legendre_mul_half_shift(&c);
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Poly2 {
    degree: usize,
    y_scale: f64,
    coeffs: Vec<f64>,
}

impl Poly2 {
    pub fn zero(degree: usize, y_scale: f64) -> Self {
        Self {
            degree,
            y_scale,
            coeffs: vec![0.0; basis_len(degree)],
        }
    }

    pub fn constant(c: f64, y_scale: f64) -> Self {
        Self {
            degree: 0,
            y_scale,
            coeffs: vec![c],
        }
    }

    pub fn from_coeffs(degree: usize, y_scale: f64, coeffs: Vec<f64>) -> Result<Self> {
        check_cap(degree, REPRESENTATION_CAP)?;
        if coeffs.len() != basis_len(degree) {
            return Err(Error::Internal(format!(
                "{} coefficients supplied for degree {degree} (expected {})",
                coeffs.len(),
                basis_len(degree)
            )));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Range {
                what: "coefficient",
                value: *bad,
                range: "finite reals",
            });
        }
        if !(y_scale > 0.0) || !y_scale.is_finite() {
            return Err(Error::Range {
                what: "y_scale",
                value: y_scale,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            degree,
            y_scale,
            coeffs,
        })
    }

    /// Polynomial with monomial coefficients `c[(i, j)]` of `x^i y^j`, on the
    /// bounding box of `d`.
    pub fn from_monomials(
        coeffs: &BTreeMap<(usize, usize), f64>,
        d: &CuspidalDomain,
    ) -> Result<Self> {
        Self::from_monomials_scaled(coeffs, d.y_max())
    }

    pub fn from_monomials_scaled(
        coeffs: &BTreeMap<(usize, usize), f64>,
        y_scale: f64,
    ) -> Result<Self> {
        let degree = coeffs.keys().map(|(i, j)| i + j).max().unwrap_or(0);
        check_cap(degree, REPRESENTATION_CAP)?;
        let mut out = Self::zero(degree, y_scale);
        for (&(i, j), &c) in coeffs {
            let px = power_in_legendre(i);
            let py = power_in_legendre(j);
            let yfac = y_scale.powi(j as i32);
            for (a, &u) in px.iter().enumerate() {
                for (b, &v) in py.iter().enumerate() {
                    out.coeffs[basis_index(a, b)] += c * yfac * u * v;
                }
            }
        }
        Self::from_coeffs(degree, y_scale, out.coeffs)
    }

    /// The polynomial `g(x)` of degree `n` interpolating `g` at `n + 1`
    /// Gauss-Legendre nodes; exact when `g` is a polynomial of degree `<= n`.
    pub fn from_x_fn(n: usize, y_scale: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        check_cap(n, REPRESENTATION_CAP)?;
        let rule = gauss_legendre(n + 1);
        let mut c = vec![0.0; n + 1];
        let mut lv = vec![0.0; n + 1];
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let gx = g(0.5 * (t + 1.0));
            legendre_values(*t, &mut lv);
            for m in 0..=n {
                c[m] += w * gx * lv[m];
            }
        }
        let mut out = Self::zero(n, y_scale);
        for (m, cm) in c.iter().enumerate() {
            out.coeffs[basis_index(m, 0)] = cm * (2.0 * m as f64 + 1.0) / 2.0;
        }
        Self::from_coeffs(n, y_scale, out.coeffs)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coeffs[basis_index(i, j)]
        }
    }

    /// Highest total degree carrying a nonzero coefficient.
    pub fn effective_degree(&self) -> usize {
        (0..=self.degree)
            .rev()
            .find(|&d| (0..=d).any(|j| self.coeffs[basis_index(d - j, j)] != 0.0))
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Coefficients of the `y` series at a fixed `x`.
    fn y_series_at(&self, x: f64, lx: &mut Vec<f64>) -> Vec<f64> {
        let n = self.degree;
        lx.resize(n + 1, 0.0);
        legendre_values(2.0 * x - 1.0, lx);
        (0..=n)
            .map(|j| {
                (0..=n - j)
                    .map(|i| self.coeffs[basis_index(i, j)] * lx[i])
                    .sum()
            })
            .collect()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let g = self.y_series_at(x, &mut Vec::new());
        legendre_series(&g, 2.0 * y / self.y_scale - 1.0)
    }

    /// Same polynomial stored with degree `n`; fails when nonzero
    /// coefficients would be dropped.
    pub fn with_degree(&self, n: usize) -> Result<Self> {
        if self.effective_degree() > n && !self.is_zero() {
            return Err(Error::DegreeCap {
                degree: self.effective_degree(),
                cap: n,
            });
        }
        let mut out = Self::zero(n, self.y_scale);
        let m = basis_len(n.min(self.degree));
        out.coeffs[..m].copy_from_slice(&self.coeffs[..m]);
        Ok(out)
    }

    fn map_axis_series(
        &self,
        axis: Axis,
        new_degree: usize,
        op: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let mut out = Self::zero(new_degree, self.y_scale);
        for other in 0..=self.degree {
            let series: Vec<f64> = (0..=self.degree - other)
                .map(|m| match axis {
                    Axis::X => self.coeffs[basis_index(m, other)],
                    Axis::Y => self.coeffs[basis_index(other, m)],
                })
                .collect();
            for (m, v) in op(&series).into_iter().enumerate() {
                if v == 0.0 && m + other > new_degree {
                    continue;
                }
                let idx = match axis {
                    Axis::X => basis_index(m, other),
                    Axis::Y => basis_index(other, m),
                };
                out.coeffs[idx] += v;
            }
        }
        out
    }

    /// Exact partial derivative; the result has degree `max(n - 1, 0)`.
    pub fn differentiate(&self, axis: Axis) -> Self {
        if self.degree == 0 {
            return Self::zero(0, self.y_scale);
        }
        let chain = match axis {
            Axis::X => 2.0,
            Axis::Y => 2.0 / self.y_scale,
        };
        self.map_axis_series(axis, self.degree - 1, |s| {
            legendre_derivative(s)
                .into_iter()
                .map(|v| chain * v)
                .collect()
        })
    }

    pub fn mul_x(&self) -> Self {
        self.map_axis_series(Axis::X, self.degree + 1, legendre_mul_half_shift)
    }

    pub fn mul_y(&self) -> Self {
        let ys = self.y_scale;
        self.map_axis_series(Axis::Y, self.degree + 1, |s| {
            legendre_mul_half_shift(s)
                .into_iter()
                .map(|v| ys * v)
                .collect()
        })
    }

    pub fn mul_axis(&self, axis: Axis) -> Self {
        match axis {
            Axis::X => self.mul_x(),
            Axis::Y => self.mul_y(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            degree: self.degree,
            y_scale: self.y_scale,
            coeffs: self.coeffs.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c * other`; both must live on the same box.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert_eq!(
            self.y_scale, other.y_scale,
            "polynomials on different boxes"
        );
        let n = self.degree.max(other.degree);
        let mut out = Self::zero(n, self.y_scale);
        for (m, v) in self.coeffs.iter().enumerate() {
            out.coeffs[m] += v;
        }
        for (m, v) in other.coeffs.iter().enumerate() {
            out.coeffs[m] += c * v;
        }
        out
    }
}

fn check_cap(degree: usize, cap: usize) -> Result<()> {
    if degree > cap {
        Err(Error::DegreeCap { degree, cap })
    } else {
        Ok(())
    }
}

impl Integrand for Poly2 {
    fn degree(&self) -> usize {
        self.effective_degree()
    }

    fn eval_column(&self, x: f64, ys: &[f64], out: &mut [f64]) {
        let g = self.y_series_at(x, &mut Vec::new());
        let inv = 2.0 / self.y_scale;
        for (o, y) in out.iter_mut().zip(ys) {
            *o = legendre_series(&g, inv * y - 1.0);
        }
    }

    fn is_zero(&self) -> bool {
        Poly2::is_zero(self)
    }
}

/// Matrix of `d/d axis` on coefficient vectors of degree `<= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    pub axis: Axis,
    pub degree: usize,
    pub matrix: Mat,
}

impl DiffOperator {
    pub fn new(axis: Axis, degree: usize, y_scale: f64) -> Self {
        let dim = basis_len(degree);
        let mut matrix = Mat::zeros(dim, dim);
        for col in 0..dim {
            let mut e = Poly2::zero(degree, y_scale);
            e.coeffs[col] = 1.0;
            let de = e.differentiate(axis);
            for (row, v) in de.coeffs.iter().enumerate() {
                matrix[(row, col)] = *v;
            }
        }
        Self {
            axis,
            degree,
            matrix,
        }
    }

    pub fn apply(&self, p: &Poly2) -> Result<Poly2> {
        let p = p.with_degree(self.degree)?;
        Poly2::from_coeffs(self.degree, p.y_scale, self.matrix.matvec(&p.coeffs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub degree: usize,
    pub region: SubdomainSpec,
    pub entries: Mat,
}

/// `G[u, v] = ∫∫_Ω e_u e_v` for the tensor Legendre basis of degree `<= n`.
pub fn gram(
    d: &CuspidalDomain,
    sub: &SubdomainSpec,
    degree: usize,
    q: &QuadSpec,
) -> Result<GramMatrix> {
    check_cap(degree, DEGREE_CAP)?;
    q.validate()?;
    let nodes = gram_nodes(d, sub, degree, q);
    let dim = basis_len(degree);
    let ys = d.y_max();
    // sqrt(w) e_u at every node, one row per basis element
    let mut vals = vec![vec![0.0; nodes.len()]; dim];
    let mut lx = vec![0.0; degree + 1];
    let mut ly = vec![0.0; degree + 1];
    for k in 0..nodes.len() {
        legendre_values(2.0 * nodes.xs[k] - 1.0, &mut lx);
        legendre_values(2.0 * nodes.ys[k] / ys - 1.0, &mut ly);
        let sw = nodes.ws[k].sqrt();
        for (m, row) in vals.iter_mut().enumerate() {
            let (i, j) = basis_pair(m);
            row[k] = sw * lx[i] * ly[j];
        }
    }
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|u| (0..=u).map(|v| dot(&vals[u], &vals[v])).collect())
        .collect();
    let mut entries = Mat::zeros(dim, dim);
    for (u, row) in rows.into_iter().enumerate() {
        for (v, x) in row.into_iter().enumerate() {
            entries[(u, v)] = x;
            entries[(v, u)] = x;
        }
    }
    Ok(GramMatrix {
        degree,
        region: *sub,
        entries,
    })
}

/// `T` upper triangular with `T^T G T = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTransform {
    pub t: Mat,
    /// Condition number of `G` after symmetric diagonal scaling.
    pub condition: f64,
}

fn scaled_condition(g: &Mat, size: usize) -> f64 {
    let mut s = Mat::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            s[(i, j)] = g[(i, j)] / (g[(i, i)] * g[(j, j)]).sqrt();
        }
    }
    let e = sym_eigen(&s);
    if e.min() <= 0.0 {
        f64::INFINITY
    } else {
        e.max() / e.min()
    }
}

pub fn orthonormalize(g: &Mat) -> Result<BasisTransform> {
    orthonormalize_with_cap(g, CONDITION_CAP)
}

pub fn orthonormalize_with_cap(g: &Mat, cap: f64) -> Result<BasisTransform> {
    let dim = g.rows();
    if dim == 0 || (0..dim).any(|i| !(g[(i, i)] > 0.0)) {
        return Err(Error::Conditioning {
            degree: 0,
            estimate: f64::INFINITY,
        });
    }
    let condition = scaled_condition(g, dim);
    if !(condition <= cap) {
        // report the first total degree whose leading block breaks the cap
        let mut degree = 0;
        while basis_len(degree) < dim && scaled_condition(g, basis_len(degree)) <= cap {
            degree += 1;
        }
        let size = basis_len(degree).min(dim);
        return Err(Error::Conditioning {
            degree: basis_pair(size - 1).0 + basis_pair(size - 1).1,
            estimate: scaled_condition(g, size),
        });
    }
    let l = cholesky(g)?;
    Ok(BasisTransform {
        t: lower_inverse(&l).transpose(),
        condition,
    })
}

/// One step of the Arnoldi recurrence
/// `h_m q_m = t q_parent - sum_{i<m} h_i q_i` with `t` the coordinate `axis`.
#[derive(Debug, Clone, PartialEq)]
struct ArnoldiStep {
    parent: usize,
    axis: Axis,
    h: Vec<f64>,
    norm: f64,
}

/// Polynomials `q_0, ..., q_{N-1}` spanning degree `<= n`, orthonormal in the
/// discrete inner product `<u, v> = sum w u(x, y) v(x, y)` of a node set.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    degree: usize,
    nodes: NodeSet,
    /// `sqrt(w) q_m` at the nodes.
    values: Vec<Vec<f64>>,
    q0: f64,
    steps: Vec<ArnoldiStep>,
    y_scale: f64,
}

/// Relative norm below which a new basis vector is treated as dependent.
const BREAKDOWN: f64 = 1e-12;

impl OrthoBasis {
    /// Basis of degree `n` orthonormal over the region `sub` of `d`, with
    /// nodes exact in `s` for products of degree `2 n`.
    pub fn new(d: &CuspidalDomain, sub: &SubdomainSpec, n: usize, q: &QuadSpec) -> Result<Self> {
        Self::with_cap(d, sub, n, q, DEGREE_CAP)
    }

    pub fn with_cap(
        d: &CuspidalDomain,
        sub: &SubdomainSpec,
        n: usize,
        q: &QuadSpec,
        cap: usize,
    ) -> Result<Self> {
        check_cap(n, cap)?;
        q.validate()?;
        let nodes = gram_nodes(d, sub, n, q);
        Self::from_nodes(nodes, n, d.y_max())
    }

    pub fn from_nodes(nodes: NodeSet, n: usize, y_scale: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Conditioning {
                degree: 0,
                estimate: f64::INFINITY,
            });
        }
        let dim = basis_len(n);
        let sw: Vec<f64> = nodes.ws.iter().map(|w| w.sqrt()).collect();
        let total = norm2(&sw);
        let mut values = Vec::with_capacity(dim);
        values.push(sw.iter().map(|v| v / total).collect::<Vec<f64>>());
        let mut steps = Vec::with_capacity(dim.saturating_sub(1));
        for m in 1..dim {
            let (i, j) = basis_pair(m);
            let (parent, axis) = if i > 0 {
                (basis_index(i - 1, j), Axis::X)
            } else {
                (basis_index(0, j - 1), Axis::Y)
            };
            let coord = match axis {
                Axis::X => &nodes.xs,
                Axis::Y => &nodes.ys,
            };
            let mut v: Vec<f64> = values[parent]
                .iter()
                .zip(coord)
                .map(|(q, t)| q * t)
                .collect();
            let start = norm2(&v);
            let mut h = vec![0.0; m];
            for _ in 0..2 {
                let c: Vec<f64> = values.par_iter().map(|qi| dot(qi, &v)).collect();
                for (qi, ci) in values.iter().zip(&c) {
                    for (vk, qk) in v.iter_mut().zip(qi) {
                        *vk -= ci * qk;
                    }
                }
                for (hi, ci) in h.iter_mut().zip(&c) {
                    *hi += ci;
                }
            }
            let norm = norm2(&v);
            if !(norm > BREAKDOWN * start) {
                return Err(Error::Conditioning {
                    degree: i + j,
                    estimate: start / norm,
                });
            }
            v.iter_mut().for_each(|x| *x /= norm);
            values.push(v);
            steps.push(ArnoldiStep {
                parent,
                axis,
                h,
                norm,
            });
        }
        Ok(Self {
            degree: n,
            nodes,
            values,
            q0: 1.0 / total,
            steps,
            y_scale,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    /// `sqrt(w) q_m` at the construction nodes.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Replays the recurrence on other nodes: `sqrt(w') q_m` at every node of
    /// `other`, with `w'` its own weights.
    pub fn sample(&self, other: &NodeSet) -> Vec<Vec<f64>> {
        let sw: Vec<f64> = other.ws.iter().map(|w| w.sqrt()).collect();
        self.replay(other, sw.iter().map(|s| s * self.q0).collect())
    }

    /// Values of `q_m` (unweighted) at `(x, y)` points.
    pub fn eval_points(&self, xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>> {
        let pts = NodeSet {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ws: vec![1.0; xs.len()],
        };
        self.replay(&pts, vec![self.q0; xs.len()])
    }

    fn replay(&self, other: &NodeSet, first: Vec<f64>) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.dim());
        out.push(first);
        for st in &self.steps {
            let coord = match st.axis {
                Axis::X => &other.xs,
                Axis::Y => &other.ys,
            };
            let mut v: Vec<f64> = out[st.parent]
                .iter()
                .zip(coord)
                .map(|(q, t)| q * t)
                .collect();
            for (qi, hi) in out.iter().zip(&st.h) {
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= hi * qk;
                }
            }
            v.iter_mut().for_each(|x| *x /= st.norm);
            out.push(v);
        }
        out
    }

    /// `sqrt(w) dq_m/d axis` at the construction nodes.
    pub fn derivative_values(&self, axis: Axis) -> Vec<Vec<f64>> {
        let len = self.nodes.len();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.dim());
        out.push(vec![0.0; len]);
        for (m, st) in self.steps.iter().enumerate() {
            let coord = match st.axis {
                Axis::X => &self.nodes.xs,
                Axis::Y => &self.nodes.ys,
            };
            let mut v: Vec<f64> = out[st.parent]
                .iter()
                .zip(coord)
                .map(|(q, t)| q * t)
                .collect();
            if st.axis == axis {
                for (vk, qk) in v.iter_mut().zip(&self.values[st.parent]) {
                    *vk += qk;
                }
            }
            for (di, hi) in out.iter().zip(&st.h) {
                for (vk, dk) in v.iter_mut().zip(di) {
                    *vk -= hi * dk;
                }
            }
            v.iter_mut().for_each(|x| *x /= st.norm);
            debug_assert_eq!(out.len(), m + 1);
            out.push(v);
        }
        out
    }

    /// `q_m` as tensor-Legendre polynomials, by the same recurrence on
    /// coefficient vectors. Accurate while the tensor basis is reasonably
    /// conditioned on the region, so best kept to moderate degrees.
    pub fn polynomials(&self) -> Vec<Poly2> {
        let n = self.degree;
        let mut out: Vec<Poly2> = Vec::with_capacity(self.dim());
        out.push(
            Poly2::constant(self.q0, self.y_scale)
                .with_degree(n)
                .expect("zero padding"),
        );
        for st in &self.steps {
            let grown = out[st.parent].mul_axis(st.axis);
            let mut v = grown
                .with_degree(n)
                .expect("recurrence stays within degree n");
            for (qi, hi) in out.iter().zip(&st.h) {
                v = v.axpy(-hi, qi);
            }
            out.push(v.scaled(1.0 / st.norm));
        }
        out
    }

    /// Coordinates of `p` in this basis: `c_m = <p, q_m>`. Exact when `p`
    /// lies in the span and the nodes integrate its products exactly.
    pub fn project(&self, p: &Poly2) -> Vec<f64> {
        let mut pv = vec![0.0; self.nodes.len()];
        let mut start = 0;
        let nodes = &self.nodes;
        while start < nodes.len() {
            let x = nodes.xs[start];
            let mut end = start;
            while end < nodes.len() && nodes.xs[end] == x {
                end += 1;
            }
            p.eval_column(x, &nodes.ys[start..end], &mut pv[start..end]);
            start = end;
        }
        for (v, w) in pv.iter_mut().zip(&nodes.ws) {
            *v *= w.sqrt();
        }
        self.values.iter().map(|q| dot(q, &pv)).collect()
    }
}

/// `A[u, v] = sum rows_u * rows_v`, computed row-parallel with a fixed
/// summation order.
pub fn cross_products(rows: &[Vec<f64>]) -> Mat {
    let dim = rows.len();
    let lower: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|u| (0..=u).map(|v| dot(&rows[u], &rows[v])).collect())
        .collect();
    let mut a = Mat::zeros(dim, dim);
    for (u, row) in lower.into_iter().enumerate() {
        for (v, x) in row.into_iter().enumerate() {
            a[(u, v)] = x;
            a[(v, u)] = x;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CuspFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d1() -> CuspidalDomain {
        CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 0.9 }).unwrap()
    }

    fn dx2() -> CuspidalDomain {
        CuspidalDomain::new(0.5, 3, CuspFunction::Power { r: 2.0, b: 1.0 }).unwrap()
    }

    fn mono(entries: &[((usize, usize), f64)]) -> BTreeMap<(usize, usize), f64> {
        entries.iter().cloned().collect()
    }

    #[test]
    fn index_roundtrip() {
        for m in 0..basis_len(20) {
            let (i, j) = basis_pair(m);
            assert_eq!(basis_index(i, j), m);
        }
        assert_eq!(basis_len(14), 120);
    }

    #[test]
    fn eval_basic() {
        assert_eq!(Poly2::zero(3, 1.0).eval(0.3, 0.2), 0.0);
        let one = Poly2::from_monomials(&mono(&[((0, 0), 1.0)]), &d1()).unwrap();
        assert!((one.eval(0.7, 0.1) - 1.0).abs() < 1e-15);
        let y = Poly2::from_monomials(&mono(&[((0, 1), 1.0)]), &d1()).unwrap();
        assert!((y.eval(0.2, 0.7) - 0.7).abs() < 1e-14);
        let xy = Poly2::from_monomials(&mono(&[((1, 1), 1.0)]), &d1()).unwrap();
        assert!((xy.eval(0.3, 0.5) - 0.15).abs() < 1e-12);
        let p = Poly2::from_monomials(&mono(&[((2, 1), 3.0)]), &d1()).unwrap();
        assert!((p.eval(0.5, 0.5) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn monomial_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 0..=8 {
            let mut map = BTreeMap::new();
            for d in 0..=n {
                for j in 0..=d {
                    map.insert((d - j, j), rng.gen_range(-1.0..1.0));
                }
            }
            let p = Poly2::from_monomials(&map, &d1()).unwrap();
            for _ in 0..100 {
                let (x, y) = (rng.gen_range(0.0..1.0f64), rng.gen_range(0.0..0.9f64));
                let direct: f64 = map
                    .iter()
                    .map(|(&(i, j), c)| c * x.powi(i as i32) * y.powi(j as i32))
                    .sum();
                let scale: f64 = map.values().map(|c| c.abs()).sum::<f64>();
                assert!((p.eval(x, y) - direct).abs() <= 1e-12 * scale, "n = {n}");
            }
        }
    }

    #[test]
    fn derivatives() {
        let xy = Poly2::from_monomials(&mono(&[((1, 1), 1.0)]), &d1()).unwrap();
        let dy = xy.differentiate(Axis::Y);
        for &(x, y) in &[(0.1, 0.2), (0.9, 0.05)] {
            assert!((dy.eval(x, y) - x).abs() < 1e-13);
        }
        let c = Poly2::constant(3.0, 1.0);
        assert!(c.differentiate(Axis::X).is_zero());
        let p = Poly2::from_monomials(
            &mono(&[((3, 2), 2.0), ((1, 4), -1.0), ((0, 0), 5.0)]),
            &d1(),
        )
        .unwrap();
        let px = p.differentiate(Axis::X);
        let py = p.differentiate(Axis::Y);
        let (x, y) = (0.37, 0.21);
        assert!((px.eval(x, y) - (6.0 * x * x * y * y - y.powi(4))).abs() < 1e-12);
        assert!((py.eval(x, y) - (4.0 * x.powi(3) * y - 4.0 * x * y.powi(3))).abs() < 1e-12);
        let a = px.differentiate(Axis::Y);
        let b = py.differentiate(Axis::X);
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplication_by_coordinates() {
        let p = Poly2::from_monomials(&mono(&[((2, 1), 1.5), ((0, 3), -2.0)]), &d1()).unwrap();
        let (x, y) = (0.41, 0.33);
        assert!((p.mul_x().eval(x, y) - x * p.eval(x, y)).abs() < 1e-13);
        assert!((p.mul_y().eval(x, y) - y * p.eval(x, y)).abs() < 1e-13);
    }

    #[test]
    fn x_fn_interpolation_exact_for_polynomials() {
        let p = Poly2::from_x_fn(5, 1.0, |x| x.powi(5) - 3.0 * x * x + 1.0).unwrap();
        for &x in &[0.0, 0.2, 0.77, 1.0] {
            assert!((p.eval(x, 0.3) - (x.powi(5) - 3.0 * x * x + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn diff_operator_is_nilpotent() {
        for n in 0..=5 {
            for axis in [Axis::X, Axis::Y] {
                let op = DiffOperator::new(axis, n, 0.9);
                let mut m = Mat::identity(basis_len(n));
                for _ in 0..=n {
                    m = op.matrix.matmul(&m);
                }
                assert_eq!(m.max_abs(), 0.0, "n = {n}, axis = {axis:?}");
            }
        }
    }

    #[test]
    fn gram_degree_zero_is_area() {
        let q = QuadSpec::default();
        let g = gram(&dx2(), &SubdomainSpec::full(), 0, &q).unwrap();
        assert!((g.entries[(0, 0)] - 5.0 / 24.0).abs() < 1e-13);
        let g = gram(&dx2(), &SubdomainSpec::new(0.25).unwrap(), 0, &q).unwrap();
        let exact = 5.0 / 24.0 - (1.0 / 192.0 - 1.0 / 2048.0);
        assert!((g.entries[(0, 0)] - exact).abs() < 1e-13);
    }

    #[test]
    fn orthonormalize_small_cases() {
        let t = orthonormalize(&Mat::identity(3)).unwrap();
        assert!((t.t.max_abs() - 1.0).abs() < 1e-15);
        let t = orthonormalize(&Mat::from_diag(&[4.0, 9.0])).unwrap();
        assert!((t.t[(0, 0)] - 0.5).abs() < 1e-15 && (t.t[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        let g = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let t = orthonormalize(&g).unwrap();
        let id = t.t.transpose().matmul(&g).matmul(&t.t);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormalize_rejects_ill_conditioned_gram() {
        let q = QuadSpec::default();
        let g = gram(&d1(), &SubdomainSpec::full(), 9, &q).unwrap();
        match orthonormalize(&g.entries) {
            Err(Error::Conditioning { degree, .. }) => assert!(degree <= 9 && degree >= 4),
            other => panic!("expected a conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn ortho_basis_is_orthonormal_and_replays() {
        let q = QuadSpec::default();
        let ob = OrthoBasis::new(&d1(), &SubdomainSpec::full(), 6, &q).unwrap();
        let a = cross_products(ob.values());
        for i in 0..ob.dim() {
            for j in 0..ob.dim() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((a[(i, j)] - e).abs() < 1e-12);
            }
        }
        let again = ob.sample(ob.nodes());
        for (u, v) in again.iter().zip(ob.values()) {
            for (a, b) in u.iter().zip(v) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        // coefficient-space polynomials agree with the node values
        let polys = ob.polynomials();
        let pts = ob.eval_points(&[0.3, 0.8], &[0.05, 0.4]);
        for (m, p) in polys.iter().enumerate() {
            assert!((p.eval(0.3, 0.05) - pts[m][0]).abs() < 1e-8 * (1.0 + pts[m][0].abs()));
            assert!((p.eval(0.8, 0.4) - pts[m][1]).abs() < 1e-8 * (1.0 + pts[m][1].abs()));
        }
    }

    #[test]
    fn ortho_basis_degree_cap() {
        let q = QuadSpec::default();
        assert!(matches!(
            OrthoBasis::new(&d1(), &SubdomainSpec::full(), 17, &q),
            Err(Error::DegreeCap {
                degree: 17,
                cap: 16
            })
        ));
    }
}
