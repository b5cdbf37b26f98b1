//! Gurevich pressure by periodic-orbit sums and by the collocated transfer
//! operator, the normalizing constant `s` with `P_G(φ̃ − sτ) = 0`, and
//! sweeps over geometric families.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{build_gibbs, q_value, GibbsConfig, QValue};
use crate::numeric::log_sum_exp;
use crate::potential::{check_condition, CheckConfig, PotentialSpec};
use crate::report::{Condition, ConditionReport};
use crate::scheme::InducingScheme;
use crate::symbolic::{advance, periodic_point_idx, word_count, Word, DEFAULT_WORD_BUDGET};
use crate::tail::{extrapolate_ladder, ladder_levels, LadderFit};
use crate::transfer::{Collocation, DEFAULT_NODES};

/// Relative floor on reported diagnostics; values agreeing to rounding are
/// not reported as exact.
pub const DIAGNOSTIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PeriodicOrbit,
    TransferEigen,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::PeriodicOrbit => "periodic_orbit",
            Method::TransferEigen => "transfer_eigen",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "periodic" | "periodic_orbit" => Ok(Method::PeriodicOrbit),
            "eigen" | "transfer_eigen" => Ok(Method::TransferEigen),
            other => Err(Error::config(format!("unknown pressure method `{other}` (expected periodic or eigen)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureEstimate {
    /// Estimate at the requested truncation.
    pub value: f64,
    /// Estimate extrapolated in the truncation level; equals `value` when
    /// no extrapolation applies.
    pub tail_corrected: f64,
    pub method: Method,
    pub truncation_n: usize,
    /// Maximal period, or number of collocation nodes.
    pub depth_n: usize,
    /// `(n, (1/n) log Z_n)` or `(N, log λ_N)`.
    pub trace: Vec<(f64, f64)>,
    pub diagnostic: f64,
    pub base_symbol: Option<u32>,
    /// `(n, log Z_n − log Z_{n−1})` for the periodic estimator.
    pub increments: Vec<(f64, f64)>,
    /// Aitken extrapolation of the last three increments; advisory only.
    pub aitken: Option<f64>,
    pub ladder: Option<LadderFit>,
    pub flags: Vec<String>,
}

fn floor(v: f64) -> f64 {
    DIAGNOSTIC_FLOOR * v.abs().max(1.0)
}

/// Birkhoff sum of `φ̃` and total inducing time along the periodic orbit of
/// a word given by branch indices.
pub(crate) fn periodic_birkhoff(scheme: &InducingScheme, phi: &PotentialSpec, idx: &[usize]) -> Result<(f64, f64)> {
    let (x0, _, _) = periodic_point_idx(scheme, idx).map_err(|r| {
        Error::numerical(format!(
            "periodic point of {} did not converge (last residual {r:.3e})",
            Word(idx.iter().map(|&i| scheme.symbol(i)).collect())
        ))
    })?;
    let mut x = x0;
    let mut acc = 0.0;
    let mut tau = 0.0;
    for &i in idx.iter().rev() {
        x = scheme.branches[i].inverse(x);
        acc += phi.induced_unchecked(scheme, i, x);
        tau += scheme.branches[i].tau as f64;
    }
    if !acc.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite weight for word {}: potential `{phi}` is singular on its periodic orbit",
            Word(idx.iter().map(|&i| scheme.symbol(i)).collect())
        )));
    }
    Ok((acc, tau))
}

/// Per-word `(Φ_n, Σ τ)` at periodic points, for each period `1..=n_max`,
/// over words pinned to a base symbol.
#[derive(Debug, Clone)]
pub struct PeriodicTable {
    pub n: usize,
    pub base_symbol: u32,
    pub levels: Vec<Vec<(f64, f64)>>,
}

impl PeriodicTable {
    pub fn build(
        scheme: &InducingScheme,
        phi: &PotentialSpec,
        n: usize,
        n_max: usize,
        base_symbol: u32,
        budget: u128,
    ) -> Result<Self> {
        scheme.require(n)?;
        phi.require_evaluable(scheme)?;
        if n_max < 2 {
            return Err(Error::config("the periodic estimator needs n_max ≥ 2"));
        }
        let a = scheme
            .index_of(base_symbol)
            .filter(|&i| i < n)
            .ok_or_else(|| Error::config(format!("base symbol {base_symbol} is outside the truncated alphabet")))?;
        let mut total: u128 = 0;
        for k in 1..=n_max {
            total = total.saturating_add(word_count(n, k, true, u128::MAX)?);
        }
        if total > budget {
            return Err(Error::Budget {
                requested: total,
                budget,
            });
        }
        let mut levels = Vec::with_capacity(n_max);
        levels.push(vec![periodic_birkhoff(scheme, phi, &[a])?]);
        for k in 2..=n_max {
            let parts: Vec<Result<Vec<(f64, f64)>>> = (0..n)
                .into_par_iter()
                .map(|second| {
                    let mut word = vec![0usize; k];
                    word[0] = a;
                    word[1] = second;
                    let mut out = Vec::new();
                    loop {
                        out.push(periodic_birkhoff(scheme, phi, &word)?);
                        if !advance(&mut word, n, 2) {
                            break;
                        }
                    }
                    Ok(out)
                })
                .collect();
            let mut level = Vec::new();
            for p in parts {
                level.extend(p?);
            }
            levels.push(level);
        }
        Ok(PeriodicTable {
            n,
            base_symbol,
            levels,
        })
    }

    /// `log Z_k` at shift `s`.
    pub fn log_z(&self, k: usize, s: f64) -> f64 {
        let mut w: Vec<f64> = self.levels[k - 1].iter().map(|&(p, t)| p - s * t).collect();
        log_sum_exp(&mut w)
    }

    pub fn estimate(&self, s: f64) -> PressureEstimate {
        let n_max = self.levels.len();
        let logz: Vec<f64> = (1..=n_max).map(|k| self.log_z(k, s)).collect();
        let trace: Vec<(f64, f64)> = logz.iter().enumerate().map(|(i, l)| ((i + 1) as f64, l / (i + 1) as f64)).collect();
        let increments: Vec<(f64, f64)> = (1..n_max).map(|i| ((i + 1) as f64, logz[i] - logz[i - 1])).collect();
        let value = increments.last().map(|p| p.1).unwrap_or(f64::NAN);
        let diagnostic = if increments.len() >= 2 {
            (increments[increments.len() - 1].1 - increments[increments.len() - 2].1).abs()
        } else {
            f64::INFINITY
        }
        .max(floor(value));
        let aitken = if increments.len() >= 3 {
            let k = increments.len();
            let (a, b, c) = (increments[k - 3].1, increments[k - 2].1, increments[k - 1].1);
            let den = c - 2.0 * b + a;
            Some(if den.abs() > 1e-300 { c - (c - b) * (c - b) / den } else { c })
        } else {
            None
        };
        PressureEstimate {
            value,
            tail_corrected: value,
            method: Method::PeriodicOrbit,
            truncation_n: self.n,
            depth_n: n_max,
            trace,
            diagnostic,
            base_symbol: Some(self.base_symbol),
            increments,
            aitken,
            ladder: None,
            flags: Vec::new(),
        }
    }
}

/// Periodic-orbit estimate of the Gurevich pressure over the first `n`
/// symbols with periods up to `n_max`, pinned to the cylinder of `a`.
///
/// The value is the last increment `log Z_n − log Z_{n−1}`, which removes the
/// `O(1/n)` offset of `(1/n) log Z_n` introduced by the pin.
pub fn pressure_periodic(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    n: usize,
    n_max: usize,
    a: u32,
) -> Result<PressureEstimate> {
    pressure_periodic_with_budget(scheme, phi, n, n_max, a, DEFAULT_WORD_BUDGET)
}

pub fn pressure_periodic_with_budget(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    n: usize,
    n_max: usize,
    a: u32,
    budget: u128,
) -> Result<PressureEstimate> {
    Ok(PeriodicTable::build(scheme, phi, n, n_max, a, budget)?.estimate(0.0))
}

/// Log-eigenvalues at each truncation level of the ladder ending at `n`.
fn eigen_ladder(colloc: &Collocation, s: f64, n: usize, complete: bool) -> Result<(Vec<usize>, Vec<f64>)> {
    let levels = if complete { vec![n] } else { ladder_levels(n) };
    let values = levels
        .iter()
        .map(|&k| colloc.log_eigenvalue(s, k))
        .collect::<Result<Vec<f64>>>()?;
    Ok((levels, values))
}

/// Transfer-operator estimate `log λ_N` with a truncation ladder.
pub fn pressure_eigen(scheme: &InducingScheme, phi: &PotentialSpec, n: usize, nodes: usize) -> Result<PressureEstimate> {
    let colloc = Collocation::new(scheme, phi, n, nodes)?;
    let complete = scheme.truncated(n).is_complete();
    let (levels, values) = eigen_ladder(&colloc, 0.0, n, complete)?;
    let value = *values.last().expect("nonempty ladder");
    let mut flags = Vec::new();
    for w in values.windows(2) {
        if w[1] < w[0] - floor(w[0]) {
            flags.push(format!("log λ decreases along the truncation ladder ({} → {})", w[0], w[1]));
        }
    }
    let diagnostic = if values.len() >= 2 {
        (values[values.len() - 1] - values[values.len() - 2]).abs()
    } else {
        0.0
    }
    .max(floor(value));
    let ladder = (!complete).then(|| extrapolate_ladder(&levels, &values));
    Ok(PressureEstimate {
        value,
        tail_corrected: ladder.as_ref().map(|l| l.extrapolated).unwrap_or(value),
        method: Method::TransferEigen,
        truncation_n: n,
        depth_n: nodes,
        trace: levels.iter().map(|&k| k as f64).zip(values).collect(),
        diagnostic,
        base_symbol: None,
        increments: Vec::new(),
        aitken: None,
        ladder,
        flags,
    })
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub n: usize,
    pub nodes: usize,
    /// Maximal period for the periodic method.
    pub n_max: usize,
    /// Base symbol for the periodic method; the first symbol by default.
    pub base_symbol: Option<u32>,
    pub bracket: (f64, f64),
    pub width_tol: f64,
    pub residual_tol: f64,
    /// Extrapolate the root along the truncation ladder (eigen method).
    pub ladder: bool,
    pub check_p4: bool,
    pub word_budget: u128,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            n: 200,
            nodes: DEFAULT_NODES,
            n_max: 6,
            base_symbol: None,
            bracket: (-20.0, 20.0),
            width_tol: 1e-10,
            residual_tol: 1e-8,
            ladder: true,
            check_p4: true,
            word_budget: DEFAULT_WORD_BUDGET,
        }
    }
}

impl SolveConfig {
    pub fn new(n: usize) -> Self {
        SolveConfig {
            n,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationResult {
    /// Root extrapolated along the truncation ladder, or the truncated root.
    pub s_value: f64,
    /// Root of the pressure of the truncated system.
    pub s_truncated: f64,
    pub bracket: (f64, f64),
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub truncation_n: usize,
    pub ladder: Option<LadderFit>,
    /// Pressure decreased strictly between every pair of sampled points.
    pub monotone: bool,
    pub p4: Option<ConditionReport>,
}

struct Root {
    s: f64,
    bracket: (f64, f64),
    residual: f64,
    iterations: usize,
    monotone: bool,
}

/// Bisection on a decreasing function, finished by one secant step inside
/// the final bracket.
fn find_root(f: impl Fn(f64) -> Result<f64>, cfg: &SolveConfig) -> Result<Root> {
    let (mut lo, mut hi) = cfg.bracket;
    if !(lo < hi) {
        return Err(Error::config("search bracket must satisfy lo < hi"));
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let eval = |s: f64, samples: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(s)?;
        samples.push((s, v));
        Ok(v)
    };
    let mut flo = eval(lo, &mut samples)?;
    let mut fhi = eval(hi, &mut samples)?;
    let mut expansions = 0;
    while (flo <= 0.0 || fhi >= 0.0) && expansions < 8 {
        let w = hi - lo;
        if flo <= 0.0 {
            lo -= w;
            flo = eval(lo, &mut samples)?;
        }
        if fhi >= 0.0 {
            hi += w;
            fhi = eval(hi, &mut samples)?;
        }
        expansions += 1;
    }
    if flo <= 0.0 {
        return Err(Error::numerical(format!(
            "no sign change of the pressure on [{lo}, {hi}]: negative everywhere (value {flo:.4e} at s = {lo}); the supremum may not be attained by a liftable measure"
        )));
    }
    if fhi >= 0.0 {
        return Err(Error::numerical(format!(
            "no sign change of the pressure on [{lo}, {hi}]: positive everywhere (value {fhi:.4e} at s = {hi}); the truncation may be too small"
        )));
    }
    let mut iterations = 0;
    while hi - lo > cfg.width_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = eval(mid, &mut samples)?;
        iterations += 1;
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            flo = 0.0;
            fhi = 0.0;
            break;
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let s = if flo == fhi {
        0.5 * (lo + hi)
    } else {
        (lo - flo * (hi - lo) / (fhi - flo)).clamp(lo, hi)
    };
    let residual = eval(s, &mut samples)?.abs();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = samples.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1);
    Ok(Root {
        s,
        bracket: (lo, hi),
        residual,
        iterations,
        monotone,
    })
}

/// Solve `P_G(φ̃ − sτ) = 0` for `s`.
pub fn solve_s(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    method: Method,
    config: &SolveConfig,
) -> Result<NormalizationResult> {
    let n = config.n;
    scheme.require(n)?;
    let complete = scheme.truncated(n).is_complete();
    let (root, ladder) = match method {
        Method::TransferEigen => {
            let colloc = Collocation::new(scheme, phi, n, config.nodes)?;
            let root = find_root(|s| colloc.log_eigenvalue(s, n), config)?;
            let ladder = if config.ladder && !complete {
                let levels = ladder_levels(n);
                let mut roots = Vec::with_capacity(levels.len());
                for &k in &levels[..levels.len() - 1] {
                    roots.push(find_root(|s| colloc.log_eigenvalue(s, k), config)?.s);
                }
                roots.push(root.s);
                Some(extrapolate_ladder(&levels, &roots))
            } else {
                None
            };
            (root, ladder)
        }
        Method::PeriodicOrbit => {
            let a = config.base_symbol.unwrap_or_else(|| scheme.first_symbol());
            let table = PeriodicTable::build(scheme, phi, n, config.n_max, a, config.word_budget)?;
            (find_root(|s| Ok(table.estimate(s).value), config)?, None)
        }
    };
    let s_value = ladder.as_ref().map(|l| l.extrapolated).unwrap_or(root.s);
    let p4 = if config.check_p4 {
        let mut cc = CheckConfig::new(n, 2);
        cc.s = Some(s_value);
        Some(check_condition(scheme, phi, Condition::P4, &cc)?)
    } else {
        None
    };
    Ok(NormalizationResult {
        s_value,
        s_truncated: root.s,
        bracket: root.bracket,
        residual: root.residual,
        iterations: root.iterations,
        method,
        truncation_n: n,
        ladder,
        monotone: root.monotone,
        p4,
    })
}

/// Settings of a sweep over the geometric family `−t log|Df|`.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub solve: SolveConfig,
    /// Gibbs depth per point; depth 1 suffices for `Q`.
    pub depth: usize,
    /// Largest `|s|` counted as "s hits zero" for transition candidates.
    pub zero_tol: f64,
}

impl SweepConfig {
    pub fn new(n: usize) -> Self {
        let mut solve = SolveConfig::new(n);
        solve.check_p4 = false;
        SweepConfig {
            solve,
            depth: 1,
            zero_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    /// Tail-corrected normalizing constant; NaN when the point failed.
    pub s: f64,
    pub s_truncated: f64,
    pub residual: f64,
    pub n: usize,
    pub q: Option<QValue>,
    /// `Q` finite with a converging tail.
    pub liftable: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Smallest and largest `t` of the maximal run of liftable grid points
    /// containing the most liftable points.
    pub liftable_interval: Option<(f64, f64)>,
    /// Grid values with `|s| ≤ zero_tol` and divergent `Q`, or the first
    /// nonliftable point after a liftable one where `s` crosses below the
    /// tolerance.
    pub transition_candidates: Vec<f64>,
    /// Smallest second difference of `s` over uniformly weighted triples.
    pub min_second_difference: Option<f64>,
}

fn sweep_point(scheme: &InducingScheme, t: f64, config: &SweepConfig) -> SweepPoint {
    let n = config.solve.n;
    let mut point = SweepPoint {
        t,
        s: f64::NAN,
        s_truncated: f64::NAN,
        residual: f64::NAN,
        n,
        q: None,
        liftable: false,
        error: None,
    };
    let phi = PotentialSpec::geometric(t);
    let run = || -> Result<(NormalizationResult, QValue)> {
        let r = solve_s(scheme, &phi, Method::TransferEigen, &config.solve)?;
        let mut gc = GibbsConfig::new(n, config.depth);
        gc.nodes = config.solve.nodes;
        let g = build_gibbs(scheme, &phi, r.s_truncated, &gc)?;
        Ok((r, q_value(&g)))
    };
    match run() {
        Ok((r, q)) => {
            point.s = r.s_value;
            point.s_truncated = r.s_truncated;
            point.residual = r.residual;
            point.liftable = q.is_finite();
            point.q = Some(q);
        }
        Err(e) => point.error = Some(e.to_string()),
    }
    point
}

/// Normalizing constant and liftability along `t_grid` for the geometric
/// family. Failures are recorded per point.
pub fn pressure_sweep(scheme: &InducingScheme, t_grid: &[f64], config: &SweepConfig) -> Result<SweepReport> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("t grid must be a nonempty list of finite values"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("t grid must be strictly increasing"));
    }
    scheme.require(config.solve.n)?;
    let points: Vec<SweepPoint> = t_grid.par_iter().map(|&t| sweep_point(scheme, t, config)).collect();

    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, p) in points.iter().enumerate() {
        match (p.liftable, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                if best.is_none_or(|(b0, b1)| i - a > b1 - b0 + 1) {
                    best = Some((a, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        let end = points.len() - 1;
        if best.is_none_or(|(b0, b1)| end - a > b1 - b0) {
            best = Some((a, end));
        }
    }
    let liftable_interval = best.map(|(a, b)| (points[a].t, points[b].t));

    let mut transition_candidates = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let divergent = p.q.as_ref().is_some_and(|q| q.is_divergent());
        let near_zero = p.s.abs() <= config.zero_tol;
        let after_liftable = i > 0 && points[i - 1].liftable && !p.liftable && p.error.is_none();
        if (divergent && near_zero) || (after_liftable && near_zero) {
            transition_candidates.push(p.t);
        }
    }

    let finite: Vec<&SweepPoint> = points.iter().filter(|p| p.s.is_finite()).collect();
    let min_second_difference = finite
        .windows(3)
        .map(|w| {
            let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
            2.0 * (h0 * (w[2].s - w[1].s) - h1 * (w[1].s - w[0].s)) / (h0 * h1 * (h0 + h1))
        })
        .reduce(f64::min);
    Ok(SweepReport {
        points,
        liftable_interval,
        transition_candidates,
        min_second_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{materialize, SchemeParams};

    fn scheme(name: &str, n: usize) -> InducingScheme {
        materialize(name, &SchemeParams::new(), n).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn doubling_estimators_are_exact() {
        let d = scheme("doubling", 2);
        for t in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let phi = PotentialSpec::geometric(t);
            let p = pressure_periodic(&d, &phi, 2, 10, 0).unwrap();
            for &(_, inc) in &p.increments {
                assert!((inc - (1.0 - t) * LN2).abs() < 1e-12);
            }
            let e = pressure_eigen(&d, &phi, 2, 24).unwrap();
            assert!((e.value - (1.0 - t) * LN2).abs() < 1e-12);
            assert!((p.value - e.value).abs() <= p.diagnostic + e.diagnostic);
        }
    }

    #[test]
    fn farey_eigen_at_log_two() {
        let f = scheme("farey_induced", 40);
        let phi = PotentialSpec::geometric(0.0).with_shift(-LN2);
        let e = pressure_eigen(&f, &phi, 40, 24).unwrap();
        assert!(e.value.abs() < 1e-6);
        assert!((e.value - (1.0 - 2f64.powi(-40)).ln()).abs() < 1e-14);
        let p = pressure_periodic(&f, &phi, 40, 4, 1).unwrap();
        assert!(p.value.abs() < 1e-6, "{}", p.value);
    }

    #[test]
    fn gauss_periodic_and_eigen_agree() {
        let g = scheme("gauss", 20);
        let phi = PotentialSpec::geometric(1.0);
        let e = pressure_eigen(&g, &phi, 20, 24).unwrap();
        for a in [1, 2, 3] {
            let p = pressure_periodic(&g, &phi, 20, 5, a).unwrap();
            assert!((p.value - e.value).abs() <= p.diagnostic + e.diagnostic, "a={a}: {} vs {}", p.value, e.value);
        }
    }

    #[test]
    fn eigen_trace_is_monotone() {
        let g = scheme("gauss", 400);
        let e = pressure_eigen(&g, &PotentialSpec::geometric(1.0), 400, 24).unwrap();
        assert!(e.flags.is_empty());
        assert!(e.trace.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(e.tail_corrected.abs() < 5e-4, "{}", e.tail_corrected);
    }

    #[test]
    fn solve_doubling_and_farey() {
        let d = scheme("doubling", 2);
        for t in [-1.0, 0.0, 0.5, 2.0] {
            let r = solve_s(&d, &PotentialSpec::geometric(t), Method::TransferEigen, &SolveConfig::new(2)).unwrap();
            assert!((r.s_value - (1.0 - t) * LN2).abs() < 1e-10);
            assert!(r.monotone);
            let r = solve_s(&d, &PotentialSpec::geometric(t), Method::PeriodicOrbit, &SolveConfig::new(2)).unwrap();
            assert!((r.s_value - (1.0 - t) * LN2).abs() < 1e-10);
        }
        let f = scheme("farey_induced", 60);
        let r = solve_s(&f, &PotentialSpec::geometric(0.0), Method::TransferEigen, &SolveConfig::new(60)).unwrap();
        assert!((r.s_value - LN2).abs() < 1e-8, "{r:?}");
        assert!(r.p4.unwrap().constant("eps0").unwrap() >= 0.3);
    }

    #[test]
    fn shift_moves_s_exactly() {
        let g = scheme("gauss", 100);
        let phi = PotentialSpec::geometric(1.0);
        let mut cfg = SolveConfig::new(100);
        cfg.check_p4 = false;
        let a = solve_s(&g, &phi, Method::TransferEigen, &cfg).unwrap();
        let b = solve_s(&g, &phi.with_shift(0.37), Method::TransferEigen, &cfg).unwrap();
        assert!((b.s_truncated - a.s_truncated - 0.37).abs() < 1e-10);
    }

    #[test]
    fn larger_tau_lowers_s() {
        let f = scheme("farey_induced", 60);
        let phi = PotentialSpec::geometric(0.5);
        let mut cfg = SolveConfig::new(60);
        cfg.check_p4 = false;
        cfg.ladder = false;
        let base = solve_s(&f, &phi, Method::TransferEigen, &cfg).unwrap();
        let bumped = f.with_tau_override(2, 7).unwrap();
        let r = solve_s(&bumped, &phi, Method::TransferEigen, &cfg).unwrap();
        assert!(r.s_value < base.s_value);
    }

    #[test]
    fn missing_sign_change_is_reported() {
        let d = scheme("doubling", 2);
        let mut cfg = SolveConfig::new(2);
        cfg.bracket = (5.0, 6.0);
        cfg.check_p4 = false;
        // The expanded bracket reaches below s = log 2 and succeeds.
        assert!(solve_s(&d, &PotentialSpec::geometric(0.0), Method::TransferEigen, &cfg).is_ok());
        let phi = PotentialSpec::geometric(0.0).with_shift(1e6);
        assert!(matches!(
            solve_s(&d, &phi, Method::TransferEigen, &cfg),
            Err(Error::Numerical(m)) if m.contains("positive everywhere")
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let g = scheme("gauss", 100);
        assert!(matches!(
            pressure_periodic(&g, &PotentialSpec::geometric(1.0), 100, 6, 1),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn doubling_sweep_is_a_line() {
        let d = scheme("doubling", 2);
        let grid = [0.0, 0.5, 1.0, 2.0];
        let r = pressure_sweep(&d, &grid, &SweepConfig::new(2)).unwrap();
        for p in &r.points {
            assert!((p.s - (1.0 - p.t) * LN2).abs() < 1e-10);
            assert!(p.liftable);
            assert_eq!(p.q.as_ref().unwrap().value, Some(1.0));
        }
        assert_eq!(r.liftable_interval, Some((0.0, 2.0)));
        assert!(r.min_second_difference.unwrap().abs() < 1e-6);
        assert!(pressure_sweep(&d, &[1.0, 0.5], &SweepConfig::new(2)).is_err());
    }

    #[test]
    fn farey_sweep_detects_transition() {
        let f = scheme("farey_induced", 1000);
        let grid = [0.0, 0.5, 0.9, 0.99, 1.0];
        let r = pressure_sweep(&f, &grid, &SweepConfig::new(1000)).unwrap();
        let pts = &r.points;
        for w in pts[..4].windows(2) {
            assert!(w[1].s < w[0].s && w[1].s > 0.0);
            assert!(w[1].q.as_ref().unwrap().value > w[0].q.as_ref().unwrap().value);
        }
        assert!(!pts[4].liftable && pts[4].q.as_ref().unwrap().is_divergent());
        assert_eq!(r.liftable_interval, Some((0.0, 0.99)));
        assert_eq!(r.transition_candidates, vec![1.0]);
        assert!(r.min_second_difference.unwrap() >= -1e-6);
    }
}
