//! Coding map, cylinders, periodic points and word enumeration over the
//! truncated full shift.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheme::{InducingScheme, Interval};

/// Default cap on the number of words a single enumeration may produce.
pub const DEFAULT_WORD_BUDGET: u128 = 10_000_000;

/// Fixed-point tolerance for periodic points.
pub const PERIODIC_TOL: f64 = 1e-13;

/// Iteration cap for periodic points.
pub const PERIODIC_MAX_ITER: usize = 200;

/// A finite word of branch symbols.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Word(pub Vec<u32>);

impl Word {
    pub fn new(symbols: Vec<u32>) -> Self {
        Word(symbols)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    /// The word repeated `k` times.
    pub fn repeat(&self, k: usize) -> Word {
        Word(self.0.repeat(k))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderInterval {
    pub word: Word,
    pub interval: Interval,
    pub diameter: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicPoint {
    pub word: Word,
    pub point: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Branch indices of the symbols of `word`.
pub fn word_indices(scheme: &InducingScheme, word: &Word) -> Result<Vec<usize>> {
    if word.is_empty() {
        return Err(Error::config("words must have length at least 1"));
    }
    word.0
        .iter()
        .map(|&s| {
            scheme.index_of(s).ok_or_else(|| {
                Error::config(format!(
                    "symbol {s} is not materialized in `{}` (N = {})",
                    scheme.name,
                    scheme.len()
                ))
            })
        })
        .collect()
}

/// `G_{w_0} ∘ … ∘ G_{w_{n-1}}(x)`.
pub fn compose_inverse(scheme: &InducingScheme, idx: &[usize], x: f64) -> f64 {
    idx.iter().rev().fold(x, |z, &i| scheme.branches[i].inverse(z))
}

/// The interval of points whose first `n` induced iterates follow `word`.
pub fn cylinder(scheme: &InducingScheme, word: &Word) -> Result<CylinderInterval> {
    let idx = word_indices(scheme, word)?;
    let r = scheme.inducing_range;
    let a = compose_inverse(scheme, &idx, r.lo);
    let b = compose_inverse(scheme, &idx, r.hi);
    let interval = Interval::new(a.min(b), a.max(b));
    let dom = scheme.branches[idx[0]].domain;
    let tol = 1e-12 * dom.width().max(1e-300) + 1e-15;
    if !(interval.lo.is_finite() && interval.hi.is_finite())
        || !dom.contains(interval.lo, tol)
        || !dom.contains(interval.hi, tol)
    {
        return Err(Error::Consistency(format!(
            "cylinder of {word} = {interval} escapes the domain {dom} of its first branch"
        )));
    }
    Ok(CylinderInterval {
        word: word.clone(),
        interval,
        diameter: interval.width(),
    })
}

/// Midpoint of the prefix cylinder and its half-width, an enclosure of every
/// coded point extending the prefix.
pub fn code_point(scheme: &InducingScheme, prefix: &Word) -> Result<(f64, f64)> {
    let c = cylinder(scheme, prefix)?;
    Ok((c.interval.mid(), 0.5 * c.diameter))
}

/// Fixed point of the composed inverse branch on branch indices.
pub(crate) fn periodic_point_idx(scheme: &InducingScheme, idx: &[usize]) -> std::result::Result<(f64, f64, usize), f64> {
    let mut x = scheme.inducing_range.mid();
    let mut residual = f64::INFINITY;
    for it in 1..=PERIODIC_MAX_ITER {
        let y = compose_inverse(scheme, idx, x);
        residual = (y - x).abs();
        x = y;
        if residual <= PERIODIC_TOL {
            let r = (compose_inverse(scheme, idx, x) - x).abs();
            return Ok((x, r, it));
        }
    }
    Err(residual)
}

/// The periodic point of `word`: the unique fixed point of its composed
/// inverse branch.
pub fn periodic_point(scheme: &InducingScheme, word: &Word) -> Result<PeriodicPoint> {
    let idx = word_indices(scheme, word)?;
    match periodic_point_idx(scheme, &idx) {
        Ok((point, residual, iterations)) => Ok(PeriodicPoint {
            word: word.clone(),
            point,
            residual,
            iterations,
        }),
        Err(residual) => Err(Error::numerical(format!(
            "periodic point of {word} did not converge in {PERIODIC_MAX_ITER} iterations (last residual {residual:.3e})"
        ))),
    }
}

/// Lexicographic successor over `alphabet` symbols, leaving the first
/// `fixed` positions untouched; false after the last word.
pub(crate) fn advance(word: &mut [usize], alphabet: usize, fixed: usize) -> bool {
    for k in (fixed..word.len()).rev() {
        word[k] += 1;
        if word[k] < alphabet {
            return true;
        }
        word[k] = 0;
    }
    false
}

/// Number of words of length `n` over `alphabet` symbols, optionally with the
/// first symbol fixed; errors if it exceeds `budget`.
pub fn word_count(alphabet: usize, n: usize, pinned: bool, budget: u128) -> Result<u128> {
    let free = if pinned { n - 1 } else { n };
    let mut count: u128 = 1;
    for _ in 0..free {
        count = count.saturating_mul(alphabet as u128);
    }
    if count > budget {
        return Err(Error::Budget {
            requested: count,
            budget,
        });
    }
    Ok(count)
}

/// Streaming lexicographic enumeration of words; see [`enumerate_words`].
#[derive(Debug, Clone)]
pub struct WordStream {
    symbols: Vec<u32>,
    current: Vec<usize>,
    fixed: usize,
    done: bool,
    remaining: u128,
}

impl Iterator for WordStream {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        let w = Word(self.current.iter().map(|&i| self.symbols[i]).collect());
        let alphabet = self.symbols.len();
        self.done = !advance(&mut self.current, alphabet, self.fixed);
        self.remaining -= 1;
        Some(w)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining.min(usize::MAX as u128) as usize;
        (r, Some(r))
    }
}

/// All words of length `n` over the first `N` symbols of the scheme, in
/// lexicographic order, optionally with a fixed first symbol. The stream
/// never materializes the full list.
pub fn enumerate_words(scheme: &InducingScheme, n_alphabet: usize, n: usize, first: Option<u32>) -> Result<WordStream> {
    enumerate_words_with_budget(scheme, n_alphabet, n, first, DEFAULT_WORD_BUDGET)
}

pub fn enumerate_words_with_budget(
    scheme: &InducingScheme,
    n_alphabet: usize,
    n: usize,
    first: Option<u32>,
    budget: u128,
) -> Result<WordStream> {
    if n == 0 {
        return Err(Error::config("word length must be at least 1"));
    }
    scheme.require(n_alphabet)?;
    let count = word_count(n_alphabet, n, first.is_some(), budget)?;
    let symbols: Vec<u32> = scheme.branches[..n_alphabet].iter().map(|b| b.symbol).collect();
    let mut current = vec![0usize; n];
    let mut fixed = 0;
    if let Some(a) = first {
        let i = symbols.iter().position(|&s| s == a).ok_or_else(|| {
            Error::config(format!("base symbol {a} is outside the truncated alphabet of {n_alphabet} symbols"))
        })?;
        current[0] = i;
        fixed = 1;
    }
    Ok(WordStream {
        symbols,
        current,
        fixed,
        done: false,
        remaining: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{materialize, SchemeParams};
    use proptest::prelude::*;

    fn gauss(n: usize) -> InducingScheme {
        materialize("gauss", &SchemeParams::new(), n).unwrap()
    }

    fn doubling() -> InducingScheme {
        materialize("doubling", &SchemeParams::new(), 2).unwrap()
    }

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    #[test]
    fn doubling_first_cylinder() {
        let c = cylinder(&doubling(), &Word(vec![0])).unwrap();
        assert_eq!(c.interval, Interval::new(0.0, 0.5));
    }

    #[test]
    fn gauss_cylinder_one_one() {
        // Continued fractions [0; 1, 1, x] with x ∈ [0, 1] span [1/2, 2/3].
        let c = cylinder(&gauss(3), &Word(vec![1, 1])).unwrap();
        assert!((c.interval.lo - 0.5).abs() < 1e-15);
        assert!((c.interval.hi - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_golden_cylinder() {
        let c = cylinder(&gauss(3), &Word(vec![1; 6])).unwrap();
        // Endpoints are consecutive Fibonacci quotients 13/21 and 8/13.
        assert!((c.interval.lo - 8.0 / 13.0).abs() < 1e-15);
        assert!((c.interval.hi - 13.0 / 21.0).abs() < 1e-15);
        assert!(c.interval.contains(golden(), 0.0));
        let phi: f64 = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(c.diameter < (1.0 / (phi * phi)).powi(5));
    }

    #[test]
    fn binary_code_point() {
        let mut w = vec![0u32; 10];
        w[0] = 1;
        let (x, r) = code_point(&doubling(), &Word(w)).unwrap();
        assert!((x - (0.5 + 2f64.powi(-11))).abs() < 1e-16);
        assert!((r - 2f64.powi(-11)).abs() < 1e-18);
    }

    #[test]
    fn silver_code_point() {
        let (x, r) = code_point(&gauss(3), &Word(vec![2; 12])).unwrap();
        // x = 1/(2 + x) has the positive root √2 − 1.
        let root = 2f64.sqrt() - 1.0;
        assert!(r < 1e-8);
        assert!((x - root).abs() <= r);
    }

    #[test]
    fn length_one_code_point_is_domain_midpoint() {
        let g = gauss(5);
        for b in &g.branches {
            let (x, r) = code_point(&g, &Word(vec![b.symbol])).unwrap();
            assert!((x - b.domain.mid()).abs() < 1e-15);
            assert!((r - 0.5 * b.domain.width()).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_points_of_examples() {
        let p = periodic_point(&doubling(), &Word(vec![0])).unwrap();
        assert!(p.point.abs() < 1e-13);
        let p = periodic_point(&gauss(3), &Word(vec![1])).unwrap();
        assert!((p.point - golden()).abs() < 1e-13);
        assert!(p.residual <= 1e-12);
        // x = 1/(1 + 1/(2 + x)) ⇔ x² + 2x − 2 = 0 ⇒ x = √3 − 1.
        let p = periodic_point(&gauss(3), &Word(vec![1, 2])).unwrap();
        assert!((p.point - (3f64.sqrt() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn unknown_symbols_are_rejected() {
        assert!(cylinder(&gauss(3), &Word(vec![4])).is_err());
        assert!(periodic_point(&gauss(3), &Word(vec![])).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let d = doubling();
        let all: Vec<Word> = enumerate_words(&d, 2, 2, None).unwrap().collect();
        assert_eq!(all, vec![Word(vec![0, 0]), Word(vec![0, 1]), Word(vec![1, 0]), Word(vec![1, 1])]);

        let c = materialize("chebyshev_first_return", &SchemeParams::new(), 3).unwrap();
        let pinned: Vec<Word> = enumerate_words(&c, 3, 2, Some(1)).unwrap().collect();
        assert_eq!(pinned, vec![Word(vec![1, 0]), Word(vec![1, 1]), Word(vec![1, 2])]);

        let g = gauss(10);
        let stream = enumerate_words(&g, 10, 6, None).unwrap();
        assert_eq!(stream.size_hint().0, 1_000_000);
        assert_eq!(stream.count(), 1_000_000);

        assert!(matches!(enumerate_words(&g, 10, 8, None), Err(Error::Budget { .. })));
        assert!(enumerate_words(&g, 10, 2, Some(11)).is_err());
    }

    proptest! {
        #[test]
        fn cylinders_nest_and_shrink(word in proptest::collection::vec(1u32..=8, 1..=12)) {
            let g = gauss(8);
            let lambda = g.expansion_lambda;
            let mut parent: Option<Interval> = None;
            for k in 1..=word.len() {
                let c = cylinder(&g, &Word(word[..k].to_vec())).unwrap();
                prop_assert!(c.diameter <= g.inducing_range.width() * lambda.powi(-(k as i32 - 1)) * (1.0 + 1e-12));
                if let Some(p) = parent {
                    prop_assert!(p.contains(c.interval.lo, 1e-15) && p.contains(c.interval.hi, 1e-15));
                }
                parent = Some(c.interval);
            }
        }

        #[test]
        fn periodic_point_is_limit_of_code_points(word in proptest::collection::vec(1u32..=6, 1..=4)) {
            let g = gauss(6);
            let w = Word(word);
            let p = periodic_point(&g, &w).unwrap();
            let (x, r) = code_point(&g, &w.repeat(6)).unwrap();
            prop_assert!(p.residual <= 1e-12);
            prop_assert!((p.point - x).abs() <= r + 1e-13);
        }

        #[test]
        fn equal_length_cylinders_are_disjoint(a in proptest::collection::vec(1u32..=5, 3), b in proptest::collection::vec(1u32..=5, 3)) {
            prop_assume!(a != b);
            let g = gauss(5);
            let ca = cylinder(&g, &Word(a)).unwrap().interval;
            let cb = cylinder(&g, &Word(b)).unwrap().interval;
            let overlap = ca.hi.min(cb.hi) - ca.lo.max(cb.lo);
            prop_assert!(overlap <= 1e-15);
        }
    }
}
