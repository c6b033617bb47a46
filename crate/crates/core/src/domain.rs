//! The cuspidal domain `K = {0 <= x <= 1, a x^k <= y <= f(x)}`, numerical
//! certificates for its hypotheses, and the exponent predicted from the
//! decay of `f'(1/n^2)`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Mat};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Upper boundary `f` of the domain.
#[derive(Clone)]
pub enum CuspFunction {
    /// `b x^r`
    Power { r: f64, b: f64 },
    /// `x^r ln(-ln(b x))`, zero at the origin
    LogLog { r: f64, b: f64 },
    /// `-x^r ln(b x)`, zero at the origin
    NegLog { r: f64, b: f64 },
    /// `x^r (-ln(b x))^c`, zero at the origin
    LogPower { r: f64, b: f64, c: f64 },
    Custom {
        name: String,
        value: ScalarFn,
        derivative: Option<ScalarFn>,
    },
}

impl fmt::Debug for CuspFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { r, b } => write!(f, "Power {{ r: {r}, b: {b} }}"),
            Self::LogLog { r, b } => write!(f, "LogLog {{ r: {r}, b: {b} }}"),
            Self::NegLog { r, b } => write!(f, "NegLog {{ r: {r}, b: {b} }}"),
            Self::LogPower { r, b, c } => write!(f, "LogPower {{ r: {r}, b: {b}, c: {c} }}"),
            Self::Custom {
                name, derivative, ..
            } => write!(
                f,
                "Custom {{ name: {name:?}, derivative: {} }}",
                derivative.is_some()
            ),
        }
    }
}

impl CuspFunction {
    pub fn family_name(&self) -> &str {
        match self {
            Self::Power { .. } => "power",
            Self::LogLog { .. } => "loglog",
            Self::NegLog { .. } => "neglog",
            Self::LogPower { .. } => "logpower",
            Self::Custom { name, .. } => name,
        }
    }

    /// Ranges of `b` that keep `f` defined and nonnegative on (0, 1].
    pub fn check_parameters(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterDomain(msg));
        match *self {
            Self::Power { b, r } if !(b > 0.0) || !r.is_finite() => {
                bad(format!("power family needs b > 0 (got b = {b}, r = {r})"))
            }
            Self::LogLog { b, .. } if !(b > 0.0 && b < (-1f64).exp()) => {
                bad(format!("loglog family needs 0 < b < 1/e (got {b})"))
            }
            Self::NegLog { b, .. } if !(b > 0.0 && b <= (-1f64).exp()) => {
                bad(format!("neglog family needs 0 < b <= 1/e (got {b})"))
            }
            Self::LogPower { b, c, .. } if !(b > 0.0 && b < 1.0) || !c.is_finite() => {
                bad(format!("logpower family needs 0 < b < 1 (got {b})"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Power { r, b } => {
                if x == 0.0 {
                    0.0
                } else {
                    b * x.powf(r)
                }
            }
            Self::LogLog { r, b } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(r) * (-(b * x).ln()).ln()
                }
            }
            Self::NegLog { r, b } => {
                if x == 0.0 {
                    0.0
                } else {
                    -x.powf(r) * (b * x).ln()
                }
            }
            Self::LogPower { r, b, c } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(r) * (-(b * x).ln()).powf(c)
                }
            }
            Self::Custom { ref value, .. } => value(x),
        }
    }

    /// Closed-form derivative at `x > 0`.
    fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Self::Power { r, b } => b * r * x.powf(r - 1.0),
            Self::LogLog { r, b } => {
                let lbx = (b * x).ln();
                x.powf(r - 1.0) * (r * (-lbx).ln() + 1.0 / lbx)
            }
            Self::NegLog { r, b } => -x.powf(r - 1.0) * (r * (b * x).ln() + 1.0),
            Self::LogPower { r, b, c } => {
                let l = -(b * x).ln();
                x.powf(r - 1.0) * l.powf(c - 1.0) * (r * l - c)
            }
            Self::Custom { ref derivative, .. } => match derivative {
                Some(d) => d(x),
                None => return Err(Error::MissingDerivative),
            },
        })
    }
}

/// Value of `f'` together with whether it is the hypothesized limit at 0
/// rather than a formula evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slope {
    pub value: f64,
    pub limit: bool,
}

#[derive(Debug, Clone)]
pub struct CuspidalDomain {
    a: f64,
    k: u32,
    f: CuspFunction,
}

impl CuspidalDomain {
    pub fn new(a: f64, k: u32, f: CuspFunction) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Range {
                what: "a",
                value: a,
                range: "(0, inf)",
            });
        }
        if k < 2 {
            return Err(Error::Range {
                what: "k",
                value: k as f64,
                range: "[2, inf)",
            });
        }
        Ok(Self { a, k, f })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn f(&self) -> &CuspFunction {
        &self.f
    }

    pub fn lower(&self, x: f64) -> f64 {
        self.a * x.powi(self.k as i32)
    }

    pub fn upper(&self, x: f64) -> f64 {
        self.f.value(x)
    }

    pub fn eval_boundaries(&self, x: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Range {
                what: "x",
                value: x,
                range: "[0, 1]",
            });
        }
        Ok((self.lower(x), self.upper(x)))
    }

    pub fn f_prime(&self, x: f64) -> Result<Slope> {
        if x == 0.0 {
            return Ok(Slope {
                value: 0.0,
                limit: true,
            });
        }
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Range {
                what: "x",
                value: x,
                range: "(0, 1]",
            });
        }
        Ok(Slope {
            value: self.f.derivative(x)?,
            limit: false,
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=1.0).contains(&x) && self.lower(x) <= y && y <= self.upper(x)
    }

    /// Height of the bounding box `[0, 1] x [0, y_max]`.
    pub fn y_max(&self) -> f64 {
        let mut m = self.upper(1.0).max(self.a);
        for i in 1..64 {
            let v = self.upper(i as f64 / 64.0);
            if v.is_finite() {
                m = m.max(v);
            }
        }
        m
    }
}

/// Left truncation `K_{x_lo} = K ∩ {x >= x_lo}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdomainSpec {
    x_lo: f64,
}

impl SubdomainSpec {
    pub fn full() -> Self {
        Self { x_lo: 0.0 }
    }

    /// `x_lo = 1` is accepted and denotes the empty strip.
    pub fn new(x_lo: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x_lo) {
            return Err(Error::Range {
                what: "x_lo",
                value: x_lo,
                range: "[0, 1]",
            });
        }
        Ok(Self { x_lo })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn is_full(&self) -> bool {
        self.x_lo == 0.0
    }

    pub fn is_empty(&self) -> bool {
        self.x_lo >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Grid abscissa of the worst violation (or of the closest call).
    pub worst_x: Option<f64>,
    pub worst_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub checks: Vec<HypothesisCheck>,
    pub valid: bool,
}

impl ValidityReport {
    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const DEFAULT_GRID_POINTS: usize = 1024;
pub const DEFAULT_TOL: f64 = 1e-9;
const GRID_X_MIN: f64 = 1e-12;

/// Geometric grid on `[1e-12, 1]`, ascending.
pub fn graded_grid(points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| GRID_X_MIN.powf((last - i as f64) / last))
        .collect()
}

/// Certify the hypotheses on a graded grid.
pub fn validate(d: &CuspidalDomain, grid_points: usize, tol: f64) -> Result<ValidityReport> {
    if grid_points < 16 {
        return Err(Error::Range {
            what: "grid_points",
            value: grid_points as f64,
            range: "[16, inf)",
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Range {
            what: "tol",
            value: tol,
            range: "(0, inf)",
        });
    }
    d.f.check_parameters()?;
    let grid = graded_grid(grid_points);
    let fv: Vec<f64> = grid.iter().map(|&x| d.upper(x)).collect();
    if let Some((x, v)) = grid
        .iter()
        .zip(&fv)
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::ParameterDomain(format!(
            "f({x:e}) = {v} is not a finite nonnegative value"
        )));
    }
    let k = d.k as f64;
    let mut checks = Vec::new();

    let f0 = d.upper(0.0);
    checks.push(HypothesisCheck {
        name: "f(0)=0",
        passed: f0.abs() <= tol,
        worst_x: Some(0.0),
        worst_value: f0,
    });

    // f(h)/h must decay like a positive power of h.
    let q = |h: f64| d.upper(h) / h;
    let (q_mid, q_small) = (q(1e-6), q(GRID_X_MIN));
    let decay = if q_small <= tol {
        f64::INFINITY
    } else {
        (q_mid / q_small).ln() / 1e6f64.ln()
    };
    checks.push(HypothesisCheck {
        name: "f'(0)=0",
        passed: q_small.is_finite() && decay > 1e-6,
        worst_x: Some(GRID_X_MIN),
        worst_value: q_small,
    });

    let fp1 = match d.f.derivative(1.0) {
        Ok(v) => v,
        Err(Error::MissingDerivative) => {
            let h = 1e-6;
            (d.upper(1.0) - d.upper(1.0 - h)) / h
        }
        Err(e) => return Err(e),
    };
    checks.push(HypothesisCheck {
        name: "f'(1)<inf",
        passed: fp1.is_finite(),
        worst_x: Some(1.0),
        worst_value: fp1,
    });

    let f1 = d.upper(1.0);
    checks.push(HypothesisCheck {
        name: "f(1)>a",
        passed: f1 > d.a,
        worst_x: Some(1.0),
        worst_value: f1 - d.a,
    });

    checks.push(curvature_check("f convex", &grid, &fv, tol, 1.0));
    let roots: Vec<f64> = fv.iter().map(|v| v.powf(1.0 / k)).collect();
    checks.push(curvature_check("f^(1/k) concave", &grid, &roots, tol, -1.0));

    let mut worst = (None, f64::INFINITY);
    let mut passed = true;
    let mut derivative_missing = false;
    for (&x, &f) in grid.iter().zip(&fv) {
        let fp = match d.f.derivative(x) {
            Ok(v) => v,
            Err(Error::MissingDerivative) => {
                derivative_missing = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let slack = k * f - x * fp;
        let scale = k * f.abs() + (x * fp).abs();
        let normalized = if scale > 0.0 { slack / scale } else { 0.0 };
        if normalized < worst.1 {
            worst = (Some(x), normalized);
        }
        if slack < -tol * scale {
            passed = false;
        }
    }
    checks.push(HypothesisCheck {
        name: "kf>=xf'",
        passed: passed && !derivative_missing,
        worst_x: worst.0,
        worst_value: if derivative_missing {
            f64::NAN
        } else {
            worst.1
        },
    });

    let mut worst = (None, f64::INFINITY);
    let mut passed = true;
    for (&x, &f) in grid.iter().zip(&fv) {
        let gap = f - d.lower(x);
        let scale = f.abs().max(d.lower(x).abs());
        let normalized = if scale > 0.0 { gap / scale } else { 0.0 };
        if normalized < worst.1 {
            worst = (Some(x), normalized);
        }
        if gap < -tol * scale {
            passed = false;
        }
    }
    checks.push(HypothesisCheck {
        name: "ax^k<=f",
        passed,
        worst_x: worst.0,
        worst_value: worst.1,
    });

    let valid = checks.iter().all(|c| c.passed);
    Ok(ValidityReport { checks, valid })
}

/// Sign test on second divided differences; `sign = 1` for convexity,
/// `-1` for concavity. The tolerance is relative to the absolute size of the
/// three terms of each difference.
fn curvature_check(
    name: &'static str,
    xs: &[f64],
    gs: &[f64],
    tol: f64,
    sign: f64,
) -> HypothesisCheck {
    let mut passed = true;
    let mut worst = (None, f64::INFINITY);
    for i in 1..xs.len() - 1 {
        let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
        let (h0, h1) = (x1 - x0, x2 - x1);
        let c0 = 2.0 / (h0 * (h0 + h1));
        let c1 = 2.0 / (h0 * h1);
        let c2 = 2.0 / (h1 * (h0 + h1));
        let d2 = c0 * gs[i - 1] - c1 * gs[i] + c2 * gs[i + 1];
        let scale = c0 * gs[i - 1].abs() + c1 * gs[i].abs() + c2 * gs[i + 1].abs();
        let signed = sign * d2;
        let normalized = if scale > 0.0 { signed / scale } else { 0.0 };
        if normalized < worst.1 {
            worst = (Some(x1), normalized);
        }
        if signed < -tol * scale {
            passed = false;
        }
    }
    HypothesisCheck {
        name,
        passed,
        worst_x: worst.0,
        worst_value: worst.1,
    }
}

/// Basis used to extrapolate `tau_n` to `n -> inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtrapolationModel {
    /// `{1}`
    PlainLimit,
    /// `{1, 1/ln n}`
    InverseLog,
    /// `{1, 1/ln n, ln ln n / ln n}`
    InverseLogPlusLogLog,
}

impl ExtrapolationModel {
    /// Matches the asymptotic form of `tau_n` for each family.
    pub fn default_for(f: &CuspFunction) -> Self {
        match f {
            CuspFunction::Power { .. } => Self::InverseLog,
            _ => Self::InverseLogPlusLogLog,
        }
    }

    fn basis(&self, n: f64) -> Vec<f64> {
        let ln = n.ln();
        match self {
            Self::PlainLimit => vec![1.0],
            Self::InverseLog => vec![1.0, 1.0 / ln],
            Self::InverseLogPlusLogLog => vec![1.0, 1.0 / ln, ln.ln() / ln],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    /// `(n, tau_n)` with `tau_n = 2 - ln f'(1/n^2) / ln n`.
    pub raw_sequence: Vec<(usize, f64)>,
    /// Constant term of the least-squares fit.
    pub extrapolated: f64,
    pub model: ExtrapolationModel,
    /// RMS of the fit residuals.
    pub residual: f64,
}

/// `tau_n = 2 - ln f'(1/n^2) / ln n` for one `n >= 2`.
pub fn tau(d: &CuspidalDomain, n: usize) -> Result<f64> {
    let nf = n as f64;
    let fp = d.f_prime(1.0 / (nf * nf))?.value;
    if !(fp > 0.0) {
        return Err(Error::DomainHypothesis(format!(
            "f'(1/n^2) = {fp} is not positive at n = {n}"
        )));
    }
    Ok(2.0 - fp.ln() / nf.ln())
}

/// Extrapolated limit of `tau_n` over `n = 2, 4, 8, ..., <= n_max`.
pub fn predicted_exponent(
    d: &CuspidalDomain,
    n_max: usize,
    model: ExtrapolationModel,
) -> Result<ExponentEstimate> {
    if n_max < 16 {
        return Err(Error::Range {
            what: "n_max",
            value: n_max as f64,
            range: "[16, inf)",
        });
    }
    let mut raw_sequence = Vec::new();
    let mut n = 2usize;
    while n <= n_max {
        raw_sequence.push((n, tau(d, n)?));
        n *= 2;
    }
    let rows: Vec<Vec<f64>> = raw_sequence
        .iter()
        .map(|&(n, _)| model.basis(n as f64))
        .collect();
    let design = Mat::from_rows(&rows);
    let rhs: Vec<f64> = raw_sequence.iter().map(|&(_, t)| t).collect();
    let coef = lstsq(&design, &rhs)?;
    let fitted = design.matvec(&coef);
    let ss: f64 = fitted.iter().zip(&rhs).map(|(f, t)| (f - t).powi(2)).sum();
    Ok(ExponentEstimate {
        raw_sequence,
        extrapolated: coef[0],
        model,
        residual: (ss / rhs.len() as f64).sqrt(),
    })
}
