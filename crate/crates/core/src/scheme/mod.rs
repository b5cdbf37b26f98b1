//! Inducing schemes: countable families of branches with inducing times,
//! evaluable forward maps and contracting inverse branches.

mod catalog;
mod custom;
mod validate;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;

pub use catalog::{materialize, CATALOG};
pub use custom::parse_custom_scheme;
pub use validate::validate_scheme;

/// Parameters of a catalog family, keyed by name.
pub type SchemeParams = BTreeMap<String, f64>;

/// Tolerance used when comparing branch endpoints.
pub const ENDPOINT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// Point at relative position `u ∈ [0, 1]`.
    pub fn at(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    /// Clamp into the interior, `rel` widths away from each endpoint.
    pub fn interior(&self, x: f64, rel: f64) -> f64 {
        let d = rel * self.width();
        x.clamp(self.lo + d, self.hi - d)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// `h(y) = sin²(πy/2)`, conjugating the tent map to `4x(1-x)`.
pub fn tent_conj(y: f64) -> f64 {
    let s = (0.5 * PI * y).sin();
    s * s
}

pub fn tent_conj_inv(x: f64) -> f64 {
    2.0 / PI * x.clamp(0.0, 1.0).sqrt().asin()
}

fn tent_conj_deriv(y: f64) -> f64 {
    0.5 * PI * (PI * y).sin()
}

/// The tent map on `[0, 1]`.
pub fn tent(y: f64) -> f64 {
    if y <= 0.5 {
        2.0 * y
    } else {
        2.0 - 2.0 * y
    }
}

/// Realization of `f^τ` on one branch.
#[derive(Debug, Clone)]
pub enum BranchMap {
    /// `x ↦ (a x + b) / (c x + d)`.
    Mobius { a: f64, b: f64, c: f64, d: f64 },
    /// `x ↦ h(slope · h⁻¹(x) + offset)` with `h(y) = sin²(πy/2)`.
    TentConjugate { slope: f64, offset: f64 },
    /// Expression-defined map; without an inverse expression the inverse is
    /// found by bisection on the (monotone) domain.
    Expr {
        forward: Expr,
        derivative: Expr,
        inverse: Option<Expr>,
        domain: Interval,
    },
}

impl BranchMap {
    pub fn forward(&self, x: f64) -> f64 {
        match self {
            BranchMap::Mobius { a, b, c, d } => (a * x + b) / (c * x + d),
            BranchMap::TentConjugate { slope, offset } => tent_conj(slope * tent_conj_inv(x) + offset),
            BranchMap::Expr { forward, .. } => forward.eval(x, 0.0),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            BranchMap::Mobius { a, b, c, d } => {
                let den = c * x + d;
                (a * d - b * c) / (den * den)
            }
            BranchMap::TentConjugate { slope, offset } => {
                let y = tent_conj_inv(x);
                let big_y = slope * y + offset;
                slope * tent_conj_deriv(big_y) / tent_conj_deriv(y)
            }
            BranchMap::Expr { derivative, .. } => derivative.eval(x, 0.0),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            BranchMap::Mobius { a, b, c, d } => (d * y - b) / (a - c * y),
            BranchMap::TentConjugate { slope, offset } => tent_conj((tent_conj_inv(y) - offset) / slope),
            BranchMap::Expr {
                forward,
                inverse,
                domain,
                ..
            } => match inverse {
                Some(g) => g.eval(y, 0.0),
                None => invert_monotone(|x| forward.eval(x, 0.0), *domain, y),
            },
        }
    }
}

/// Solve `f(x) = y` on a monotone branch by bisection, clamping to the
/// nearer endpoint when `y` lies outside the image.
fn invert_monotone(f: impl Fn(f64) -> f64, dom: Interval, y: f64) -> f64 {
    let (mut lo, mut hi) = (dom.lo, dom.hi);
    let increasing = f(hi) >= f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = f(mid) < y;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct BranchSpec {
    pub symbol: u32,
    pub domain: Interval,
    /// Exact endpoints for the families that admit them.
    pub exact_domain: Option<(Rational64, Rational64)>,
    pub tau: u32,
    pub map: BranchMap,
}

impl BranchSpec {
    pub fn forward(&self, x: f64) -> f64 {
        self.map.forward(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.map.derivative(x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.map.inverse(y)
    }
}

/// The underlying one-step map `f`, needed to evaluate Birkhoff sums of
/// potentials along an inducing block.
#[derive(Debug, Clone)]
pub enum OneStep {
    Doubling,
    Gauss,
    Farey,
    /// `4x(1-x)`, iterated through its tent conjugacy for stability.
    Logistic,
    Custom { map: Expr, derivative: Expr },
}

impl OneStep {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            OneStep::Doubling => {
                let y = 2.0 * x;
                if y >= 1.0 {
                    y - 1.0
                } else {
                    y
                }
            }
            OneStep::Gauss => {
                let r = 1.0 / x;
                r - r.floor()
            }
            OneStep::Farey => {
                if x <= 0.5 {
                    x / (1.0 - x)
                } else {
                    (1.0 - x) / x
                }
            }
            OneStep::Logistic => 4.0 * x * (1.0 - x),
            OneStep::Custom { map, .. } => map.eval(x, 0.0),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            OneStep::Doubling => 2.0,
            OneStep::Gauss => -1.0 / (x * x),
            OneStep::Farey => {
                if x <= 0.5 {
                    1.0 / ((1.0 - x) * (1.0 - x))
                } else {
                    -1.0 / (x * x)
                }
            }
            OneStep::Logistic => 4.0 - 8.0 * x,
            OneStep::Custom { derivative, .. } => derivative.eval(x, 0.0),
        }
    }

    /// The points `x, f(x), …, f^{len-1}(x)`.
    pub fn orbit(&self, x: f64, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        match self {
            OneStep::Logistic => {
                let mut y = tent_conj_inv(x);
                for _ in 0..len {
                    out.push(tent_conj(y));
                    y = tent(y);
                }
            }
            _ => {
                let mut z = x;
                for _ in 0..len {
                    out.push(z);
                    z = self.apply(z);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct InducingScheme {
    pub name: String,
    pub params: SchemeParams,
    pub base_interval: Interval,
    pub inducing_range: Interval,
    pub branches: Vec<BranchSpec>,
    pub expansion_lambda: f64,
    pub one_step: Option<OneStep>,
    /// `Some(c)` when τ ≡ c on the whole (untruncated) alphabet.
    pub tau_constant: Option<u32>,
    /// `Some(k)` when the full alphabet has exactly `k` symbols.
    pub alphabet_size: Option<usize>,
    /// Length of the inducing range not covered by materialized branches.
    pub uncovered_length: f64,
}

impl InducingScheme {
    /// Number of materialized branches.
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Whether the materialized branches are the whole alphabet.
    pub fn is_complete(&self) -> bool {
        self.alphabet_size == Some(self.branches.len())
    }

    pub fn branch(&self, index: usize) -> &BranchSpec {
        &self.branches[index]
    }

    pub fn index_of(&self, symbol: u32) -> Option<usize> {
        let first = self.branches.first()?.symbol;
        let i = symbol.checked_sub(first)? as usize;
        (i < self.branches.len() && self.branches[i].symbol == symbol).then_some(i)
    }

    pub fn symbol(&self, index: usize) -> u32 {
        self.branches[index].symbol
    }

    pub fn first_symbol(&self) -> u32 {
        self.branches.first().map(|b| b.symbol).unwrap_or(0)
    }

    /// Check that the first `n` branches are available.
    pub fn require(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::config("truncation level N must be at least 1"));
        }
        if n > self.branches.len() {
            return Err(Error::config(format!(
                "truncation N = {n} exceeds the {} materialized branches of `{}`",
                self.branches.len(),
                self.name
            )));
        }
        Ok(())
    }

    /// A copy restricted to the first `n` branches.
    pub fn truncated(&self, n: usize) -> InducingScheme {
        let n = n.min(self.branches.len());
        let mut out = self.clone();
        out.branches.truncate(n);
        let covered: f64 = out.branches.iter().map(|b| b.domain.width()).sum();
        out.uncovered_length = (out.inducing_range.width() - covered).max(0.0);
        out
    }

    /// A copy with the inducing time of one branch replaced.
    pub fn with_tau_override(&self, index: usize, tau: u32) -> Result<InducingScheme> {
        if tau == 0 {
            return Err(Error::config("inducing times must be at least 1"));
        }
        if index >= self.branches.len() {
            return Err(Error::config(format!("branch index {index} is not materialized")));
        }
        let mut out = self.clone();
        if out.branches[index].tau != tau {
            out.branches[index].tau = tau;
            out.tau_constant = None;
            // The forward map no longer equals f^τ, so Birkhoff sums along
            // the one-step map are unavailable.
            out.one_step = None;
        }
        Ok(out)
    }

    pub fn max_tau(&self) -> u32 {
        self.branches.iter().map(|b| b.tau).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_conjugacy_intertwines_maps() {
        for &y in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let lhs = OneStep::Logistic.apply(tent_conj(y));
            assert!((lhs - tent_conj(tent(y))).abs() < 1e-14);
            assert!((tent_conj_inv(tent_conj(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expression_branch_inverse_by_bisection() {
        let f = Expr::parse("x^2 + x").unwrap();
        let map = BranchMap::Expr {
            derivative: f.derivative(),
            forward: f,
            inverse: None,
            domain: Interval::new(0.0, 1.0),
        };
        let x = map.inverse(1.5);
        assert!((map.forward(x) - 1.5).abs() < 1e-13);
        assert!((map.derivative(0.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn farey_one_step_orbit() {
        let orbit = OneStep::Farey.orbit(0.3, 3);
        assert!((orbit[1] - 0.3 / 0.7).abs() < 1e-15);
        assert!((orbit[2] - orbit[1] / (1.0 - orbit[1])).abs() < 1e-15);
    }
}
