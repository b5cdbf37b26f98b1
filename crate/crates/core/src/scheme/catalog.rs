//! Built-in, exactly solvable inducing schemes.

use std::collections::VecDeque;

use num_rational::Rational64;

use super::{tent_conj, tent_conj_deriv, BranchMap, BranchSpec, InducingScheme, Interval, OneStep, SchemeParams};
use crate::error::{Error, Result};

/// Names accepted by [`materialize`]; `custom` schemes come from
/// [`super::parse_custom_scheme`].
pub const CATALOG: [&str; 4] = ["doubling", "gauss", "farey_induced", "chebyshev_first_return"];

/// Golden-mean contraction bound `φ²` shared by the continued-fraction
/// families: cylinders of depth n have diameter at most `φ^{-2(n-1)}`.
const GOLDEN_SQ: f64 = 2.618_033_988_749_895;

/// Largest dyadic level the first-return enumeration will represent.
const MAX_DYADIC_LEVEL: u32 = 60;

/// Cap on live pieces during first-return enumeration.
const MAX_LIVE_PIECES: usize = 2_000_000;

/// Build the first `n` branches of a catalog family.
pub fn materialize(name: &str, params: &SchemeParams, n: usize) -> Result<InducingScheme> {
    if n == 0 {
        return Err(Error::config("truncation level N must be at least 1"));
    }
    let allowed: &[&str] = match name {
        "doubling" | "gauss" | "farey_induced" => &[],
        "chebyshev_first_return" => &["k", "j", "max_tau"],
        "custom" => {
            return Err(Error::config(
                "custom schemes are read from a config file (use --scheme-file)",
            ))
        }
        other => {
            return Err(Error::config(format!(
                "unknown scheme `{other}` (known: {})",
                CATALOG.join(", ")
            )))
        }
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::config(format!("scheme `{name}` has no parameter `{bad}`")));
    }
    match name {
        "doubling" => Ok(doubling(n)),
        "gauss" => Ok(continued_fraction(n, false)),
        "farey_induced" => Ok(continued_fraction(n, true)),
        _ => chebyshev(params, n),
    }
}

fn doubling(n: usize) -> InducingScheme {
    let n = n.min(2);
    let branches = (0..n as u32)
        .map(|i| {
            let lo = Rational64::new(i as i64, 2);
            let hi = Rational64::new(i as i64 + 1, 2);
            BranchSpec {
                symbol: i,
                domain: Interval::new(0.5 * i as f64, 0.5 * (i + 1) as f64),
                exact_domain: Some((lo, hi)),
                tau: 1,
                map: BranchMap::Mobius {
                    a: 2.0,
                    b: -(i as f64),
                    c: 0.0,
                    d: 1.0,
                },
            }
        })
        .collect::<Vec<_>>();
    let covered = 0.5 * n as f64;
    InducingScheme {
        name: "doubling".into(),
        params: SchemeParams::new(),
        base_interval: Interval::new(0.0, 1.0),
        inducing_range: Interval::new(0.0, 1.0),
        branches,
        expansion_lambda: 2.0,
        one_step: Some(OneStep::Doubling),
        tau_constant: Some(1),
        alphabet_size: Some(2),
        uncovered_length: 1.0 - covered,
    }
}

/// Branch `n ≥ 1` of the Gauss map: `x ↦ 1/x − n` on `(1/(n+1), 1/n)`.
fn gauss_branch(n: u32, tau: u32) -> BranchSpec {
    let k = n as i64;
    BranchSpec {
        symbol: n,
        domain: Interval::new(1.0 / (n as f64 + 1.0), 1.0 / n as f64),
        exact_domain: Some((Rational64::new(1, k + 1), Rational64::new(1, k))),
        tau,
        map: BranchMap::Mobius {
            a: -(n as f64),
            b: 1.0,
            c: 1.0,
            d: 0.0,
        },
    }
}

fn continued_fraction(n: usize, farey: bool) -> InducingScheme {
    let branches: Vec<BranchSpec> = (1..=n as u32)
        .map(|k| gauss_branch(k, if farey { k } else { 1 }))
        .collect();
    InducingScheme {
        name: if farey { "farey_induced" } else { "gauss" }.into(),
        params: SchemeParams::new(),
        base_interval: Interval::new(0.0, 1.0),
        inducing_range: Interval::new(0.0, 1.0),
        branches,
        expansion_lambda: GOLDEN_SQ,
        one_step: Some(if farey { OneStep::Farey } else { OneStep::Gauss }),
        tau_constant: if farey { None } else { Some(1) },
        alphabet_size: None,
        uncovered_length: 1.0 / (n as f64 + 1.0),
    }
}

/// Dyadic interval `[num/2^level, (num+1)/2^level]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dyadic {
    num: u64,
    level: u32,
}

impl Dyadic {
    fn lo(self) -> f64 {
        self.num as f64 / (1u64 << self.level) as f64
    }

    fn hi(self) -> f64 {
        (self.num + 1) as f64 / (1u64 << self.level) as f64
    }

    fn halves(self) -> (Dyadic, Dyadic) {
        let l = Dyadic {
            num: 2 * self.num,
            level: self.level + 1,
        };
        (l, Dyadic { num: l.num + 1, ..l })
    }

    /// Image under the tent map; `flip` reports an orientation reversal.
    fn tent_image(self) -> (Dyadic, bool) {
        debug_assert!(self.level >= 1);
        let half = 1u64 << (self.level - 1);
        if self.num < half {
            (
                Dyadic {
                    num: self.num,
                    level: self.level - 1,
                },
                false,
            )
        } else {
            (
                Dyadic {
                    num: 2 * half - self.num - 1,
                    level: self.level - 1,
                },
                true,
            )
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    /// Sub-interval of the cell, in tent coordinates.
    d: Dyadic,
    /// Its current image `T^i(d)`.
    e: Dyadic,
    flipped: bool,
}

enum Placement {
    Returned,
    Covers,
    Outside,
}

fn place(e: Dyadic, cell: Dyadic) -> Placement {
    if e.level >= cell.level {
        if e.num >> (e.level - cell.level) == cell.num {
            if e.level == cell.level {
                Placement::Returned
            } else {
                // Finer images inside the cell cannot occur: image levels
                // only decrease along the orbit and pieces split at the cell
                // level.
                Placement::Covers
            }
        } else {
            Placement::Outside
        }
    } else if cell.num >> (cell.level - e.level) == e.num {
        Placement::Covers
    } else {
        Placement::Outside
    }
}

/// First-return scheme of `4x(1-x)` to the image under `h(y) = sin²(πy/2)` of
/// the dyadic cell `[j/2^k, (j+1)/2^k]`.
fn chebyshev(params: &SchemeParams, n: usize) -> Result<InducingScheme> {
    let get_int = |key: &str, default: u64| -> Result<u64> {
        match params.get(key) {
            None => Ok(default),
            Some(&v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as u64),
            Some(&v) => Err(Error::config(format!(
                "chebyshev_first_return: `{key}` = {v} must be a non-negative integer; only dyadic cells [j/2^k, (j+1)/2^k] are Markov for the tent conjugacy"
            ))),
        }
    };
    let k = get_int("k", 2)?;
    let j = get_int("j", 1)?;
    let max_tau = get_int("max_tau", 48)? as u32;
    if !(1..=24).contains(&k) {
        return Err(Error::config(format!(
            "chebyshev_first_return: k = {k} out of range 1..=24 (non-Markov or degenerate subinterval)"
        )));
    }
    if j >= 1u64 << k {
        return Err(Error::config(format!(
            "chebyshev_first_return: j = {j} must be below 2^k = {} (cell outside [0, 1])",
            1u64 << k
        )));
    }
    let cell = Dyadic { num: j, level: k as u32 };
    let mut found: Vec<(u32, Piece)> = Vec::new();
    let mut live = vec![Piece {
        d: cell,
        e: cell,
        flipped: false,
    }];
    let mut tau = 0u32;
    while found.len() < n && !live.is_empty() {
        tau += 1;
        if tau > max_tau {
            break;
        }
        let mut next = Vec::new();
        let mut returned = Vec::new();
        let mut queue: VecDeque<Piece> = live
            .drain(..)
            .map(|p| {
                let (e, flip) = p.e.tent_image();
                Piece {
                    d: p.d,
                    e,
                    flipped: p.flipped ^ flip,
                }
            })
            .collect();
        while let Some(p) = queue.pop_front() {
            match place(p.e, cell) {
                Placement::Returned => returned.push(p),
                Placement::Outside => next.push(p),
                Placement::Covers => {
                    if p.d.level >= MAX_DYADIC_LEVEL {
                        return Err(Error::numerical(
                            "first-return enumeration exceeded the representable dyadic depth",
                        ));
                    }
                    let (dl, dr) = p.d.halves();
                    let (el, er) = p.e.halves();
                    let (ea, eb) = if p.flipped { (er, el) } else { (el, er) };
                    queue.push_back(Piece {
                        d: dl,
                        e: ea,
                        flipped: p.flipped,
                    });
                    queue.push_back(Piece {
                        d: dr,
                        e: eb,
                        flipped: p.flipped,
                    });
                }
            }
        }
        returned.sort_by_key(|p| p.d.num.clone());
        found.extend(returned.into_iter().map(|p| (tau, p)));
        if next.len() > MAX_LIVE_PIECES {
            return Err(Error::Budget {
                requested: next.len() as u128,
                budget: MAX_LIVE_PIECES as u128,
            });
        }
        live = next;
    }
    found.truncate(n);
    if found.is_empty() {
        return Err(Error::config("chebyshev_first_return: no return branches found"));
    }
    let (c0, c1) = (cell.lo(), cell.hi());
    let branches: Vec<BranchSpec> = found
        .iter()
        .enumerate()
        .map(|(i, &(tau, p))| {
            let scale = (1u64 << tau) as f64;
            let (slope, offset) = if p.flipped {
                (-scale, c1 + scale * p.d.lo())
            } else {
                (scale, c0 - scale * p.d.lo())
            };
            BranchSpec {
                symbol: i as u32,
                domain: Interval::new(tent_conj(p.d.lo()), tent_conj(p.d.hi())),
                exact_domain: None,
                tau,
                map: BranchMap::TentConjugate { slope, offset },
            }
        })
        .collect();
    // |F'| = 2^τ h'(F_y(y)) / h'(y) with both points in the cell.
    let hp = |y: f64| tent_conj_deriv(y).abs();
    let grid: Vec<f64> = (0..=64).map(|i| c0 + (c1 - c0) * i as f64 / 64.0).collect();
    let hmin = grid.iter().map(|&y| hp(y)).fold(f64::INFINITY, f64::min);
    let hmax = grid.iter().map(|&y| hp(y)).fold(0.0, f64::max);
    let tau_min = branches.iter().map(|b| b.tau).min().unwrap_or(1);
    let lambda = (1u64 << tau_min) as f64 * hmin / hmax;
    let range = Interval::new(tent_conj(c0), tent_conj(c1));
    let covered: f64 = branches.iter().map(|b| b.domain.width()).sum();
    let mut params_out = SchemeParams::new();
    params_out.insert("k".into(), k as f64);
    params_out.insert("j".into(), j as f64);
    params_out.insert("max_tau".into(), max_tau as f64);
    Ok(InducingScheme {
        name: "chebyshev_first_return".into(),
        params: params_out,
        base_interval: Interval::new(0.0, 1.0),
        inducing_range: range,
        branches,
        expansion_lambda: lambda,
        one_step: Some(OneStep::Logistic),
        tau_constant: None,
        alphabet_size: None,
        uncovered_length: (range.width() - covered).max(0.0),
    })
}
