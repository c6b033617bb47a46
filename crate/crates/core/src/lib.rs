//! Numerical laboratory for L_p Markov-type polynomial inequalities on the
//! cuspidal planar domains
//!
//! ```text
//! K = {(x, y) : 0 <= x <= 1, a x^k <= y <= f(x)}
//! ```
//!
//! The crate computes Markov factors (exact for p = 2, searched lower bounds
//! otherwise), Remez ratios over the truncations `K_{1/n^2}`, the Jacobi
//! witness polynomials `y P_n^{(w,s)}(1 - x)`, and the exponent predicted from
//! the decay of `f'(1/n^2)`.

pub mod domain;
pub mod error;
pub mod linalg;
pub mod markov;
pub mod polybasis;
pub mod quad;
pub mod specfun;

pub use domain::{CuspFunction, CuspidalDomain, SubdomainSpec};
pub use error::{Error, Result};
pub use polybasis::{Axis, Poly2};
pub use quad::QuadSpec;
