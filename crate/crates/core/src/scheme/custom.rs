//! Custom schemes from a TOML config.
//!
//! ```toml
//! grammar = "1"
//! name = "two-branch"
//! base_interval = [0.0, 1.0]
//! inducing_range = [0.0, 1.0]
//!
//! [one_step]              # optional; needed for non-geometric potentials when τ > 1
//! map = "2*x"
//!
//! [[branches]]            # a finite list ...
//! domain = [0.0, 0.5]
//! tau = 1
//! map = "2*x"
//! inverse = "x/2"         # optional, bisection otherwise
//!
//! [family]                # ... or a parametric family in the index n
//! first = 1
//! domain = ["1/(n+1)", "1/n"]
//! tau = "n"
//! map = "1/x - n"
//! inverse = "1/(x + n)"
//! ```
//!
//! Exactly one of `branches` and `family` must be present. Errors cite the
//! line of the offending field.

use serde::Deserialize;
use toml::Spanned;

use super::{BranchMap, BranchSpec, InducingScheme, Interval, OneStep, SchemeParams};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var, GRAMMAR_VERSION};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    grammar: Option<Spanned<String>>,
    name: Option<String>,
    base_interval: Spanned<[f64; 2]>,
    inducing_range: Spanned<[f64; 2]>,
    one_step: Option<RawOneStep>,
    branches: Option<Vec<RawBranch>>,
    family: Option<RawFamily>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOneStep {
    map: Spanned<String>,
    derivative: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    domain: Spanned<[f64; 2]>,
    tau: Spanned<i64>,
    map: Spanned<String>,
    derivative: Option<Spanned<String>>,
    inverse: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NumOrExpr {
    Num(f64),
    Expr(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    first: Option<Spanned<i64>>,
    count: Option<Spanned<i64>>,
    domain: Spanned<[NumOrExpr; 2]>,
    tau: Spanned<NumOrExpr>,
    map: Spanned<String>,
    derivative: Option<Spanned<String>>,
    inverse: Option<Spanned<String>>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn at<T>(src: &str, spanned: &Spanned<T>, field: &str, message: impl Into<String>) -> Error {
    Error::ConfigAt {
        line: line_of(src, spanned.span().start),
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_expr(src: &str, s: &Spanned<String>, field: &str) -> Result<Expr> {
    Expr::parse(s.get_ref()).map_err(|e| at(src, s, field, e.to_string()))
}

fn eval_num(src: &str, v: &NumOrExpr, span: &Spanned<impl Sized>, field: &str, n: f64) -> Result<f64> {
    let x = match v {
        NumOrExpr::Num(x) => *x,
        NumOrExpr::Expr(s) => {
            let e = Expr::parse(s).map_err(|e| at(src, span, field, e.to_string()))?;
            if e.depends_on(Var::X) {
                return Err(at(src, span, field, "may depend on n only, not x"));
            }
            e.eval(0.0, n)
        }
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(at(src, span, field, format!("evaluates to {x} at n = {n}")))
    }
}

fn interval(src: &str, v: &Spanned<[f64; 2]>, field: &str) -> Result<Interval> {
    let [lo, hi] = *v.get_ref();
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(at(src, v, field, format!("needs finite endpoints with lo < hi, got [{lo}, {hi}]")));
    }
    Ok(Interval::new(lo, hi))
}

/// Parse a custom scheme config and materialize its first `n` branches.
pub fn parse_custom_scheme(src: &str, n: usize) -> Result<InducingScheme> {
    if n == 0 {
        return Err(Error::config("truncation level N must be at least 1"));
    }
    let raw: RawScheme = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of(src, s.start)).unwrap_or(0);
        Error::ConfigAt {
            line,
            field: "<document>".into(),
            message: e.message().to_string(),
        }
    })?;
    if let Some(g) = &raw.grammar {
        if g.get_ref() != GRAMMAR_VERSION {
            return Err(at(
                src,
                g,
                "grammar",
                format!("unsupported grammar version `{}` (this build reads `{GRAMMAR_VERSION}`)", g.get_ref()),
            ));
        }
    }
    let base = interval(src, &raw.base_interval, "base_interval")?;
    let range = interval(src, &raw.inducing_range, "inducing_range")?;
    if range.lo < base.lo - 1e-14 || range.hi > base.hi + 1e-14 {
        return Err(at(src, &raw.inducing_range, "inducing_range", "must lie inside base_interval"));
    }
    let one_step = match &raw.one_step {
        None => None,
        Some(os) => {
            let map = parse_expr(src, &os.map, "one_step.map")?;
            let derivative = match &os.derivative {
                Some(d) => parse_expr(src, d, "one_step.derivative")?,
                None => map.derivative(),
            };
            Some(OneStep::Custom { map, derivative })
        }
    };
    let (branches, alphabet_size, tau_constant) = match (&raw.branches, &raw.family) {
        (Some(_), Some(f)) => {
            return Err(at(src, &f.map, "family", "give either [[branches]] or [family], not both"))
        }
        (None, None) => return Err(Error::config("custom scheme needs [[branches]] or a [family] table")),
        (Some(list), None) => {
            if list.is_empty() {
                return Err(Error::config("custom scheme has an empty [[branches]] list"));
            }
            let mut out = Vec::new();
            for (i, b) in list.iter().take(n).enumerate() {
                let field = |f: &str| format!("branches[{i}].{f}");
                let dom = interval(src, &b.domain, &field("domain"))?;
                let tau = *b.tau.get_ref();
                if tau < 1 || tau > u32::MAX as i64 {
                    return Err(at(src, &b.tau, &field("tau"), "must be a positive integer"));
                }
                let forward = parse_expr(src, &b.map, &field("map"))?;
                if forward.depends_on(Var::N) {
                    return Err(at(src, &b.map, &field("map"), "`n` is only defined inside [family]"));
                }
                let derivative = match &b.derivative {
                    Some(d) => parse_expr(src, d, &field("derivative"))?,
                    None => forward.derivative(),
                };
                let inverse = b.inverse.as_ref().map(|g| parse_expr(src, g, &field("inverse"))).transpose()?;
                out.push(BranchSpec {
                    symbol: i as u32,
                    domain: dom,
                    exact_domain: None,
                    tau: tau as u32,
                    map: BranchMap::Expr {
                        forward,
                        derivative,
                        inverse,
                        domain: dom,
                    },
                });
            }
            let taus: Vec<u32> = list.iter().map(|b| *b.tau.get_ref() as u32).collect();
            let constant = taus.windows(2).all(|w| w[0] == w[1]).then(|| taus[0]);
            (out, Some(list.len()), constant)
        }
        (None, Some(f)) => {
            let first = f.first.as_ref().map(|v| *v.get_ref()).unwrap_or(0);
            if first < 0 {
                return Err(at(src, f.first.as_ref().unwrap(), "family.first", "must be non-negative"));
            }
            let count = match &f.count {
                Some(c) if *c.get_ref() < 1 => {
                    return Err(at(src, c, "family.count", "must be at least 1"));
                }
                Some(c) => Some(*c.get_ref() as usize),
                None => None,
            };
            let forward = parse_expr(src, &f.map, "family.map")?;
            let derivative = match &f.derivative {
                Some(d) => parse_expr(src, d, "family.derivative")?,
                None => forward.derivative(),
            };
            let inverse = f.inverse.as_ref().map(|g| parse_expr(src, g, "family.inverse")).transpose()?;
            let total = count.map_or(n, |c| c.min(n));
            let mut out = Vec::with_capacity(total);
            for i in 0..total {
                let k = (first as usize + i) as f64;
                let [dlo, dhi] = f.domain.get_ref();
                let lo = eval_num(src, dlo, &f.domain, "family.domain", k)?;
                let hi = eval_num(src, dhi, &f.domain, "family.domain", k)?;
                let (lo, hi) = (lo.min(hi), lo.max(hi));
                if lo >= hi {
                    return Err(at(src, &f.domain, "family.domain", format!("empty domain at n = {k}")));
                }
                let tau = eval_num(src, f.tau.get_ref(), &f.tau, "family.tau", k)?;
                if tau < 1.0 || tau.fract() != 0.0 {
                    return Err(at(src, &f.tau, "family.tau", format!("τ = {tau} at n = {k} is not a positive integer")));
                }
                let dom = Interval::new(lo, hi);
                out.push(BranchSpec {
                    symbol: first as u32 + i as u32,
                    domain: dom,
                    exact_domain: None,
                    tau: tau as u32,
                    map: BranchMap::Expr {
                        forward: forward.bind_n(k),
                        derivative: derivative.bind_n(k),
                        inverse: inverse.as_ref().map(|g| g.bind_n(k)),
                        domain: dom,
                    },
                });
            }
            let tau_const = match f.tau.get_ref() {
                NumOrExpr::Num(t) => Some(*t as u32),
                NumOrExpr::Expr(s) => Expr::parse(s)
                    .ok()
                    .filter(|e| !e.depends_on(Var::N))
                    .map(|e| e.eval(0.0, 0.0) as u32),
            };
            (out, count, tau_const)
        }
    };
    for (i, b) in branches.iter().enumerate() {
        if !(range.contains(b.domain.lo, 1e-14) && range.contains(b.domain.hi, 1e-14)) {
            return Err(Error::config(format!(
                "branch {i} domain {} is not inside the inducing range {range}",
                b.domain
            )));
        }
    }
    let mut sorted: Vec<&BranchSpec> = branches.iter().collect();
    sorted.sort_by(|a, b| a.domain.lo.total_cmp(&b.domain.lo));
    for w in sorted.windows(2) {
        if w[1].domain.lo < w[0].domain.hi - 1e-14 {
            return Err(Error::config(format!(
                "branch domains of symbols {} and {} overlap",
                w[0].symbol, w[1].symbol
            )));
        }
    }
    // Expansion estimate from interior samples of every branch.
    let lambda = branches
        .iter()
        .flat_map(|b| (1..16).map(move |i| b.derivative(b.domain.at(i as f64 / 16.0)).abs()))
        .fold(f64::INFINITY, f64::min);
    let covered: f64 = branches.iter().map(|b| b.domain.width()).sum();
    let mut params = SchemeParams::new();
    params.insert("grammar".into(), GRAMMAR_VERSION.parse().unwrap_or(1.0));
    Ok(InducingScheme {
        name: raw.name.unwrap_or_else(|| "custom".into()),
        params,
        base_interval: base,
        inducing_range: range,
        branches,
        expansion_lambda: lambda,
        one_step,
        tau_constant,
        alphabet_size,
        uncovered_length: (range.width() - covered).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"
grammar = "1"
name = "two"
base_interval = [0.0, 1.0]
inducing_range = [0.0, 1.0]

[[branches]]
domain = [0.0, 0.5]
tau = 1
map = "2*x"

[[branches]]
domain = [0.5, 1.0]
tau = 1
map = "2*x - 1"
inverse = "(x + 1)/2"
"#;

    #[test]
    fn finite_list_parses() {
        let s = parse_custom_scheme(TWO, 10).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.alphabet_size, Some(2));
        assert!(s.is_complete());
        assert_eq!(s.tau_constant, Some(1));
        assert!((s.branch(0).inverse(0.6) - 0.3).abs() < 1e-15);
        assert!((s.branch(1).inverse(0.6) - 0.8).abs() < 1e-15);
        assert!((s.expansion_lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_family_matches_catalog() {
        let src = r#"
base_interval = [0.0, 1.0]
inducing_range = [0.0, 1.0]
[family]
first = 1
domain = ["1/(n+1)", "1/n"]
tau = 1
map = "1/x - n"
"#;
        let s = parse_custom_scheme(src, 5).unwrap();
        let g = super::super::materialize("gauss", &SchemeParams::new(), 5).unwrap();
        for (a, b) in s.branches.iter().zip(&g.branches) {
            assert_eq!(a.symbol, b.symbol);
            assert!((a.domain.lo - b.domain.lo).abs() < 1e-15);
            for &y in &[0.1, 0.5, 0.9] {
                assert!((a.inverse(y) - b.inverse(y)).abs() < 1e-13);
                let x = b.inverse(y);
                assert!((a.derivative(x) - b.derivative(x)).abs() < 1e-9 * b.derivative(x).abs());
            }
        }
        assert_eq!(s.tau_constant, Some(1));
        assert_eq!(s.alphabet_size, None);
    }

    #[test]
    fn errors_cite_lines() {
        let bad = TWO.replace("map = \"2*x - 1\"", "map = \"2*x - foo\"");
        match parse_custom_scheme(&bad, 2) {
            Err(Error::ConfigAt { line, field, .. }) => {
                assert_eq!(line, 15);
                assert_eq!(field, "branches[1].map");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = TWO.replace("tau = 1\nmap = \"2*x\"", "tau = 0\nmap = \"2*x\"");
        assert!(matches!(parse_custom_scheme(&bad, 2), Err(Error::ConfigAt { line: 9, .. })));
        let bad = TWO.replace("grammar = \"1\"", "grammar = \"9\"");
        assert!(matches!(parse_custom_scheme(&bad, 2), Err(Error::ConfigAt { line: 2, .. })));
        assert!(matches!(parse_custom_scheme("base_interval = [0.0, 1.0", 2), Err(Error::ConfigAt { .. })));
        let unknown = format!("{TWO}\nbogus = 3\n");
        assert!(parse_custom_scheme(&unknown, 2).is_err());
    }
}
