//! L_p norms over `K` and its truncations.
//!
//! Integrals are taken in the coordinates `(x, s)` with `y = s^k`, over
//! `{x_lo <= x <= 1, a^{1/k} x <= s <= f(x)^{1/k}}` with Jacobian `k s^{k-1}`.
//! In `x` the interval is cut into panels graded geometrically towards
//! `x_lo`; each panel carries a Gauss-Legendre rule. In `s` the integrand of
//! a polynomial is itself polynomial, so for even `p` a Gauss rule of the
//! right order is exact. Other `p` split each section at the zeros of the
//! polynomial and bisect adaptively in both `s` and `x`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::domain::{CuspidalDomain, SubdomainSpec};
use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSpec {
    /// Ratio between consecutive panel widths towards `x_lo`, in (0, 1).
    pub grading_ratio: f64,
    pub num_graded_panels: usize,
    /// Minimum Gauss order in `s`; raised to the exactness requirement.
    pub base_gauss_order: usize,
    /// Gauss order per `x` panel; raised for high-degree integrands.
    pub x_order: usize,
    /// Uniform subdivisions of every graded panel.
    pub x_subdivisions: usize,
    pub rel_tol: f64,
    /// Force adaptive `s` integration even for even integer `p`.
    pub p_adaptive: bool,
    pub max_bisection_depth: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            grading_ratio: 0.5,
            num_graded_panels: 40,
            base_gauss_order: 8,
            x_order: 24,
            x_subdivisions: 1,
            rel_tol: 1e-10,
            p_adaptive: false,
            max_bisection_depth: 40,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.grading_ratio > 0.0 && self.grading_ratio < 1.0) {
            return Err(Error::Range {
                what: "grading_ratio",
                value: self.grading_ratio,
                range: "(0, 1)",
            });
        }
        if self.grading_ratio.powi(self.num_graded_panels as i32) > 1e-12 {
            return Err(Error::Range {
                what: "grading_ratio^num_graded_panels",
                value: self.grading_ratio.powi(self.num_graded_panels as i32),
                range: "(0, 1e-12]",
            });
        }
        if self.x_order == 0 || self.base_gauss_order == 0 || self.x_subdivisions == 0 {
            return Err(Error::Range {
                what: "quadrature order",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Range {
                what: "rel_tol",
                value: self.rel_tol,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    /// Gauss order in `s` exact for a polynomial `P` of degree `n` under
    /// `|P|^p` with even integer `p`: the integrand has degree `p k n + k - 1`.
    pub fn s_order(&self, p: f64, k: u32, n: usize) -> usize {
        let kf = k as f64;
        let needed = ((p.ceil() * kf * n as f64 + kf) / 2.0).ceil() as usize + 1;
        needed.max(self.base_gauss_order)
    }

    pub fn x_order_for(&self, p: f64, n: usize) -> usize {
        let needed = ((p.ceil() * n as f64 + 1.0) / 2.0).ceil() as usize + 4;
        needed.max(self.x_order)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn compute_gauss_legendre(m: usize) -> GaussRule {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// Cached Gauss-Legendre rule of order `m`.
pub fn gauss_legendre(m: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("gauss cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| Arc::new(compute_gauss_legendre(m)))
        .clone()
}

/// A function of `(x, y)` that can be integrated.
pub trait Integrand: Sync {
    /// Total polynomial degree; drives the quadrature orders.
    fn degree(&self) -> usize;

    /// Values at `(x, y)` for every `y` in `ys`.
    fn eval_column(&self, x: f64, ys: &[f64], out: &mut [f64]);

    fn is_zero(&self) -> bool {
        false
    }
}

/// `x` panels `[lo, hi]` from `x_lo` to 1, finest at `x_lo`.
pub fn x_panels(x_lo: f64, q: &QuadSpec) -> Vec<(f64, f64)> {
    let width = 1.0 - x_lo;
    if width <= 0.0 {
        return Vec::new();
    }
    let mut edges = vec![x_lo];
    for j in (0..=q.num_graded_panels).rev() {
        edges.push(x_lo + width * q.grading_ratio.powi(j as i32));
    }
    *edges.last_mut().unwrap() = 1.0;
    let mut panels = Vec::new();
    for w in edges.windows(2) {
        let step = (w[1] - w[0]) / q.x_subdivisions as f64;
        for s in 0..q.x_subdivisions {
            let lo = w[0] + step * s as f64;
            let hi = if s + 1 == q.x_subdivisions {
                w[1]
            } else {
                lo + step
            };
            panels.push((lo, hi));
        }
    }
    panels
}

/// `(x, weight)` abscissae of the outer rule.
fn x_nodes(x_lo: f64, order: usize, q: &QuadSpec) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let mut out = Vec::new();
    for (lo, hi) in x_panels(x_lo, q) {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            out.push((mid + half * t, half * w));
        }
    }
    out
}

/// `s` limits at abscissa `x`; `None` when the vertical section is empty.
fn s_limits(d: &CuspidalDomain, x: f64) -> Option<(f64, f64)> {
    let kinv = 1.0 / d.k() as f64;
    let lo = d.a().powf(kinv) * x;
    let hi = d.upper(x).max(0.0).powf(kinv);
    (hi > lo).then_some((lo, hi))
}

/// Tensor quadrature nodes over a region: `sum w g(x, y)` approximates
/// `∫∫ g dx dy`.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ws: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Nodes integrating `g(x, y) = Q(x, y)` exactly in `s` whenever `Q` is a
/// polynomial of total degree `<= 2 n` (the p = 2 Gram requirement for
/// degree-`n` spaces).
pub fn gram_nodes(d: &CuspidalDomain, sub: &SubdomainSpec, n: usize, q: &QuadSpec) -> NodeSet {
    build_nodes(d, sub, q.s_order(2.0, d.k(), n), q.x_order_for(2.0, n), q)
}

pub fn build_nodes(
    d: &CuspidalDomain,
    sub: &SubdomainSpec,
    s_order: usize,
    x_order: usize,
    q: &QuadSpec,
) -> NodeSet {
    let mut set = NodeSet::default();
    if sub.is_empty() {
        return set;
    }
    let k = d.k() as i32;
    let kf = d.k() as f64;
    let srule = gauss_legendre(s_order);
    for (x, wx) in x_nodes(sub.x_lo(), x_order, q) {
        let Some((lo, hi)) = s_limits(d, x) else {
            continue;
        };
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (t, ws) in srule.nodes.iter().zip(&srule.weights) {
            let s = mid + half * t;
            set.xs.push(x);
            set.ys.push(s.powi(k));
            set.ws.push(wx * half * ws * kf * s.powi(k - 1));
        }
    }
    set
}

fn is_even_integer(p: f64) -> bool {
    p.fract() == 0.0 && (p as i64) % 2 == 0
}

fn abs_pow(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v.abs()
    } else if p == 2.0 {
        v * v
    } else {
        v.abs().powf(p)
    }
}

/// `(∫∫_{K_sub} |P|^p dx dy)^{1/p}`.
pub fn lp_norm<F: Integrand + ?Sized>(
    poly: &F,
    d: &CuspidalDomain,
    sub: &SubdomainSpec,
    p: f64,
    q: &QuadSpec,
) -> Result<f64> {
    Ok(lp_integral(poly, d, sub, p, q)?.powf(1.0 / p))
}

/// `∫∫_{K_sub} |P|^p dx dy`.
pub fn lp_integral<F: Integrand + ?Sized>(
    poly: &F,
    d: &CuspidalDomain,
    sub: &SubdomainSpec,
    p: f64,
    q: &QuadSpec,
) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Range {
            what: "p",
            value: p,
            range: "[1, inf)",
        });
    }
    q.validate()?;
    if poly.is_zero() || sub.is_empty() {
        return Ok(0.0);
    }
    let n = poly.degree();
    if is_even_integer(p) && !q.p_adaptive {
        let nodes = build_nodes(d, sub, q.s_order(p, d.k(), n), q.x_order_for(p, n), q);
        return Ok(sum_over_nodes(poly, &nodes, p));
    }
    adaptive_integral(poly, d, sub, p, q)
}

fn sum_over_nodes<F: Integrand + ?Sized>(poly: &F, nodes: &NodeSet, p: f64) -> f64 {
    let mut total = CompensatedSum::new();
    let mut vals = Vec::new();
    let mut start = 0;
    while start < nodes.len() {
        let x = nodes.xs[start];
        let mut end = start;
        while end < nodes.len() && nodes.xs[end] == x {
            end += 1;
        }
        vals.resize(end - start, 0.0);
        poly.eval_column(x, &nodes.ys[start..end], &mut vals);
        let col: f64 = vals
            .iter()
            .zip(&nodes.ws[start..end])
            .map(|(v, w)| w * abs_pow(*v, p))
            .sum();
        total.add(col);
        start = end;
    }
    total.value()
}

struct Bisection<'a, F: ?Sized> {
    poly: &'a F,
    d: &'a CuspidalDomain,
    k: i32,
    p: f64,
    s_rule: Arc<GaussRule>,
    x_rule: Arc<GaussRule>,
    rel_tol: f64,
    max_depth: usize,
    /// Absolute error allowance per unit `x`, from the coarse total.
    column_floor: f64,
    /// Degree of `s -> P(x, s^k)`.
    s_degree: usize,
    worst: f64,
    failed: bool,
    buf_y: Vec<f64>,
    buf_v: Vec<f64>,
}

impl<F: Integrand + ?Sized> Bisection<'_, F> {
    /// `∫_lo^hi |P(x, s^k)|^p k s^{k-1} ds` by one Gauss rule.
    fn rule_on(&mut self, x: f64, lo: f64, hi: f64) -> f64 {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let m = self.s_rule.nodes.len();
        self.buf_y.clear();
        for t in &self.s_rule.nodes {
            self.buf_y.push((mid + half * t).powi(self.k));
        }
        self.buf_v.resize(m, 0.0);
        self.poly.eval_column(x, &self.buf_y, &mut self.buf_v);
        let kf = self.k as f64;
        let mut acc = 0.0;
        for i in 0..m {
            let s = mid + half * self.s_rule.nodes[i];
            acc +=
                self.s_rule.weights[i] * abs_pow(self.buf_v[i], self.p) * kf * s.powi(self.k - 1);
        }
        acc * half
    }

    fn bisect_s(
        &mut self,
        x: f64,
        lo: f64,
        hi: f64,
        whole: f64,
        scale: f64,
        span: f64,
        depth: usize,
    ) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = self.rule_on(x, lo, mid);
        let right = self.rule_on(x, mid, hi);
        let refined = left + right;
        let err = (refined - whole).abs();
        // tighter than the x tolerance, which must see column errors as noise
        let tol = 0.125 * self.rel_tol * refined.abs().max(scale * (hi - lo) / span);
        if err <= tol || refined == 0.0 {
            return refined;
        }
        if depth >= self.max_depth {
            self.failed = true;
            self.worst = self.worst.max(err);
            return refined;
        }
        self.bisect_s(x, lo, mid, left, scale, span, depth + 1)
            + self.bisect_s(x, mid, hi, right, scale, span, depth + 1)
    }

    fn value_at(&mut self, x: f64, s: f64) -> f64 {
        let mut v = [0.0];
        self.poly.eval_column(x, &[s.powi(self.k)], &mut v);
        v[0]
    }

    /// Root of `s -> P(x, s^k)` in `[a, b]`, given `P(a) = fa` of the
    /// opposite sign to `P(b)`.
    fn refine_root(&mut self, x: f64, mut a: f64, mut b: f64, fa: f64) -> f64 {
        while b - a > 4.0 * f64::EPSILON * b.abs() {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.value_at(x, m);
            if fm == 0.0 {
                return m;
            }
            if fm * fa > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Minimizer of `sigma P(x, s^k)` on `[a, b]` by golden section.
    fn golden_min(&mut self, x: f64, sigma: f64, mut a: f64, mut b: f64) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = sigma * self.value_at(x, c);
        let mut fd = sigma * self.value_at(x, d);
        for _ in 0..80 {
            if fc < 0.0 || fd < 0.0 || b - a <= 4.0 * f64::EPSILON * b.abs() {
                break;
            }
            if fc < fd {
                (b, d, fd) = (d, c, fc);
                c = b - INV_PHI * (b - a);
                fc = sigma * self.value_at(x, c);
            } else {
                (a, c, fc) = (c, d, fd);
                d = a + INV_PHI * (b - a);
                fd = sigma * self.value_at(x, d);
            }
        }
        if fc < fd {
            (c, fc)
        } else {
            (d, fd)
        }
    }

    /// Sign changes of `s -> P(x, s^k)` on `[lo, hi]`, sorted. They are
    /// located on a grid finer than the degree in `s`. Pairs of zeros inside
    /// one cell are found from the discrete local minima of `|P|`.
    fn section_roots(&mut self, x: f64, lo: f64, hi: f64) -> Vec<f64> {
        let cells = 2 * self.s_degree + 4;
        let h = (hi - lo) / cells as f64;
        let grid: Vec<f64> = (0..=cells).map(|i| lo + h * i as f64).collect();
        self.buf_y.clear();
        self.buf_y.extend(grid.iter().map(|s| s.powi(self.k)));
        self.buf_v.resize(cells + 1, 0.0);
        self.poly.eval_column(x, &self.buf_y, &mut self.buf_v);
        let v = self.buf_v.clone();
        let mut roots = Vec::new();
        for i in 0..=cells {
            if v[i] == 0.0 {
                if i > 0 && i < cells {
                    roots.push(grid[i]);
                }
                continue;
            }
            if i < cells && v[i] * v[i + 1] < 0.0 {
                roots.push(self.refine_root(x, grid[i], grid[i + 1], v[i]));
                continue;
            }
            let left_ok = i == 0 || (v[i - 1] * v[i] > 0.0 && v[i].abs() <= v[i - 1].abs());
            let right_ok = i == cells || (v[i + 1] * v[i] > 0.0 && v[i].abs() <= v[i + 1].abs());
            if !(left_ok && right_ok) {
                continue;
            }
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(cells)];
            let sigma = v[i].signum();
            let (m, fm) = self.golden_min(x, sigma, a, b);
            if fm < 0.0 {
                let fa = self.value_at(x, a);
                let fb = self.value_at(x, b);
                if fa * fm < 0.0 {
                    roots.push(self.refine_root(x, a, m, fa));
                }
                if fb * fm < 0.0 {
                    roots.push(self.refine_root(x, m, b, fm));
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        roots
    }

    /// Vertical section integral at `x`. The adaptive form splits at the
    /// zeros of `P` in `s`, where `|P|^p` has kinks, and bisects each piece.
    fn column(&mut self, x: f64, adaptive: bool) -> f64 {
        let Some((lo, hi)) = s_limits(self.d, x) else {
            return 0.0;
        };
        if !adaptive {
            return self.rule_on(x, lo, hi);
        }
        let mut cuts = vec![lo];
        cuts.extend(self.section_roots(x, lo, hi));
        cuts.push(hi);
        let pieces: Vec<(f64, f64, f64)> = cuts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1], self.rule_on(x, w[0], w[1])))
            .collect();
        let coarse: f64 = pieces.iter().map(|c| c.2.abs()).sum();
        let scale = coarse.max(self.column_floor);
        pieces
            .into_iter()
            .map(|(a, b, whole)| self.bisect_s(x, a, b, whole, scale, hi - lo, 0))
            .sum()
    }

    /// `x` Gauss rule over `[a, b]` applied to the section integrals.
    fn panel(&mut self, a: f64, b: f64, adaptive: bool) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let rule = Arc::clone(&self.x_rule);
        let mut acc = CompensatedSum::new();
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            acc.add(w * self.column(mid + half * t, adaptive));
        }
        acc.value() * half
    }

    /// The section integral is only piecewise smooth in `x` where the zero
    /// set of `P` meets the boundary, so panels are bisected as well.
    fn bisect_x(&mut self, a: f64, b: f64, whole: f64, depth: usize) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.panel(a, mid, true);
        let right = self.panel(mid, b, true);
        let refined = left + right;
        let err = (refined - whole).abs();
        let tol = self.rel_tol * refined.abs().max(self.column_floor * (b - a));
        if err <= tol || refined == 0.0 {
            return refined;
        }
        if depth >= self.max_depth {
            self.failed = true;
            self.worst = self.worst.max(err);
            return refined;
        }
        self.bisect_x(a, mid, left, depth + 1) + self.bisect_x(mid, b, right, depth + 1)
    }
}

fn adaptive_integral<F: Integrand + ?Sized>(
    poly: &F,
    d: &CuspidalDomain,
    sub: &SubdomainSpec,
    p: f64,
    q: &QuadSpec,
) -> Result<f64> {
    let n = poly.degree();
    // one rule order higher than the even-p requirement keeps smooth pieces exact
    let order = q.s_order(p.ceil(), d.k(), n).min(64);
    let mut bis = Bisection {
        poly,
        d,
        k: d.k() as i32,
        p,
        s_rule: gauss_legendre(order),
        x_rule: gauss_legendre(q.x_order_for(p, n)),
        rel_tol: q.rel_tol,
        max_depth: q.max_bisection_depth,
        column_floor: 0.0,
        s_degree: d.k() as usize * n,
        worst: 0.0,
        failed: false,
        buf_y: Vec::new(),
        buf_v: Vec::new(),
    };
    let panels = x_panels(sub.x_lo(), q);
    // Near the cusp the polynomial values carry cancellation error far above
    // a relative tolerance, so every tolerance is floored by the share of the
    // coarse total that the piece's width represents.
    let coarse: f64 = panels.iter().map(|&(a, b)| bis.panel(a, b, false)).sum();
    bis.column_floor = coarse.abs() / (1.0 - sub.x_lo());
    let mut total = CompensatedSum::new();
    for &(a, b) in &panels {
        let whole = bis.panel(a, b, true);
        total.add(bis.bisect_x(a, b, whole, 0));
    }
    if bis.failed {
        return Err(Error::QuadratureBudget { worst: bis.worst });
    }
    Ok(total.value())
}

struct One;

impl Integrand for One {
    fn degree(&self) -> usize {
        0
    }
    fn eval_column(&self, _x: f64, _ys: &[f64], out: &mut [f64]) {
        out.fill(1.0);
    }
}

/// Area of `K_sub`.
pub fn area(d: &CuspidalDomain, sub: &SubdomainSpec, q: &QuadSpec) -> Result<f64> {
    lp_integral(&One, d, sub, 1.0, q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConvergenceOrder {
    /// Every refinement already agrees with the reference below `1e-12`
    /// relative.
    Saturated { max_error: f64 },
    /// Observed algebraic rate in the panel width.
    Rate(f64),
}

pub const SATURATION_LEVEL: f64 = 1e-12;

/// Empirical order of the `x` discretisation under successive doublings of
/// the panel count.
pub fn convergence_order<F: Integrand + ?Sized>(
    d: &CuspidalDomain,
    poly: &F,
    p: f64,
    q: &QuadSpec,
) -> Result<ConvergenceOrder> {
    let full = SubdomainSpec::full();
    let levels = [1usize, 2, 4, 8, 16];
    let mut vals = Vec::with_capacity(levels.len());
    for &m in &levels {
        let qm = QuadSpec {
            x_subdivisions: q.x_subdivisions * m,
            ..*q
        };
        vals.push(lp_integral(poly, d, &full, p, &qm)?);
    }
    let reference = lp_integral(
        poly,
        d,
        &full,
        p,
        &QuadSpec {
            x_subdivisions: q.x_subdivisions * 64,
            ..*q
        },
    )?;
    let scale = reference.abs().max(f64::MIN_POSITIVE);
    let errors: Vec<f64> = vals.iter().map(|v| (v - reference).abs() / scale).collect();
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    if max_error < SATURATION_LEVEL {
        return Ok(ConvergenceOrder::Saturated { max_error });
    }
    let floor = 100.0 * q.rel_tol.max(f64::EPSILON);
    let mut rates: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    if rates.is_empty() {
        return Ok(ConvergenceOrder::Saturated { max_error });
    }
    rates.sort_by(f64::total_cmp);
    Ok(ConvergenceOrder::Rate(rates[rates.len() / 2]))
}
