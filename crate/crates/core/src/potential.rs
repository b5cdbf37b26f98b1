//! Potentials, induced potentials, variations and the regularity and
//! structure condition checks.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::numeric::linear_fit;
use crate::report::{Condition, ConditionReport, Verdict};
use crate::scheme::{validate_scheme, InducingScheme};
use crate::symbolic::{advance, compose_inverse, word_count, Word, DEFAULT_WORD_BUDGET};
use crate::tail::{fit_series, TailFit, TailVerdict};

/// Relative inset used when an evaluation must come from the branch interior.
const INTERIOR_INSET: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `-t log|df|`.
    Geometric { t: f64 },
    Constant { c: f64 },
    /// A function of `x` in the expression grammar.
    Expression {
        source: String,
        #[serde(skip_serializing)]
        expr: Expr,
    },
}

/// A potential on the base interval plus an additive constant.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    /// Constant added to the potential; induced values gain `shift · τ`.
    pub shift: f64,
}

impl PotentialSpec {
    pub fn geometric(t: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Geometric { t },
            shift: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Constant { c },
            shift: 0.0,
        }
    }

    pub fn expression(source: &str) -> Result<Self> {
        let expr = Expr::parse(source)
            .map_err(|e| Error::config(format!("potential expression `{source}`: {e}")))?;
        if expr.depends_on(Var::N) {
            return Err(Error::config(format!(
                "potential expression `{source}` may only use the variable x"
            )));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::Expression {
                source: source.to_string(),
                expr,
            },
            shift: 0.0,
        })
    }

    /// Parse `geometric:t`, `constant:c` or `expr:<expression>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (family, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("potential `{s}`: expected FAMILY:VALUE")))?;
        let num = |a: &str| {
            a.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(format!("potential `{s}`: `{a}` is not a finite number")))
        };
        match family.trim() {
            "geometric" => Ok(Self::geometric(num(arg)?)),
            "constant" => Ok(Self::constant(num(arg)?)),
            "expr" | "expression" => Self::expression(arg),
            other => Err(Error::config(format!(
                "unknown potential family `{other}` (expected geometric, constant or expr)"
            ))),
        }
    }

    /// The potential plus the constant `c`.
    pub fn with_shift(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.shift += c;
        out
    }

    /// The family parameter `t` of a geometric potential.
    pub fn family_parameter(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Geometric { t } => Some(t),
            _ => None,
        }
    }

    /// Whether the induced potential is a constant multiple of `τ`.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            PotentialKind::Geometric { t } => *t == 0.0,
            PotentialKind::Constant { .. } => true,
            PotentialKind::Expression { expr, .. } => !expr.depends_on(Var::X),
        }
    }

    /// Fail early when the induced potential cannot be evaluated on `scheme`.
    pub fn require_evaluable(&self, scheme: &InducingScheme) -> Result<()> {
        if let PotentialKind::Expression { source, .. } = &self.kind {
            if scheme.one_step.is_none() && scheme.branches.iter().any(|b| b.tau > 1) {
                return Err(Error::config(format!(
                    "potential `{source}` needs the one-step map of `{}` to sum along inducing blocks with τ > 1, and none is provided",
                    scheme.name
                )));
            }
        }
        Ok(())
    }

    /// `φ(x)` at a point of the tower above branch `index`. Level-0 points
    /// of branches with `τ = 1` need no one-step map.
    pub(crate) fn base_value(&self, scheme: &InducingScheme, index: usize, x: f64) -> Result<f64> {
        let v = match &self.kind {
            PotentialKind::Constant { c } => *c,
            PotentialKind::Expression { expr, .. } => expr.eval(x, 0.0),
            PotentialKind::Geometric { t } => {
                if *t == 0.0 {
                    0.0
                } else if scheme.branches[index].tau == 1 {
                    return Ok(self.induced_unchecked(scheme, index, x));
                } else {
                    let f = scheme.one_step.as_ref().ok_or_else(|| {
                        Error::config(format!("`{}` has no one-step map to evaluate `{self}` on its tower", scheme.name))
                    })?;
                    -t * f.derivative(x).abs().ln()
                }
            }
        };
        Ok(v + self.shift)
    }

    /// `φ̃(x) = Σ_{k<τ} φ(f^k x)` on branch `index`. Assumes
    /// [`require_evaluable`](Self::require_evaluable) holds.
    pub(crate) fn induced_unchecked(&self, scheme: &InducingScheme, index: usize, x: f64) -> f64 {
        let b = &scheme.branches[index];
        let tau = b.tau as f64;
        let base = match &self.kind {
            // Chain rule: the Birkhoff sum of log|df| is log|dF|.
            PotentialKind::Geometric { t } => {
                if *t == 0.0 {
                    0.0
                } else {
                    let xi = b.domain.interior(x, 0.0);
                    -t * b.derivative(xi).abs().ln()
                }
            }
            PotentialKind::Constant { c } => c * tau,
            PotentialKind::Expression { expr, .. } => {
                if b.tau == 1 {
                    expr.eval(x, 0.0)
                } else {
                    let f = scheme.one_step.as_ref().expect("checked by require_evaluable");
                    let xi = b.domain.interior(x, INTERIOR_INSET);
                    let orbit = f.orbit(xi, b.tau as usize);
                    crate::numeric::neumaier_sum(orbit.into_iter().map(|z| expr.eval(z, 0.0)))
                }
            }
        };
        base + self.shift * tau
    }

    /// Checked evaluation of the induced potential on branch `index`.
    pub fn induced_at(&self, scheme: &InducingScheme, index: usize, x: f64) -> Result<f64> {
        self.require_evaluable(scheme)?;
        let v = self.induced_unchecked(scheme, index, x);
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "potential `{self}` is singular at x = {x} on branch {} of `{}`",
                scheme.branches[index].symbol, scheme.name
            )));
        }
        Ok(v)
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PotentialKind::Geometric { t } => write!(f, "geometric:{t}")?,
            PotentialKind::Constant { c } => write!(f, "constant:{c}")?,
            PotentialKind::Expression { source, .. } => write!(f, "expr:{source}")?,
        }
        if self.shift != 0.0 {
            write!(f, "{:+}", self.shift)?;
        }
        Ok(())
    }
}

/// The induced potential of one branch with its sup/inf estimates.
#[derive(Debug, Clone, Serialize)]
pub struct InducedPotentialValue {
    pub branch: u32,
    pub tau: u32,
    pub sup_estimate: f64,
    pub inf_estimate: f64,
    /// Growth of the extrema between the coarse and the doubled grid.
    pub refinement_gap: f64,
}

/// `φ̃(x)` on the branch with symbol `branch`.
pub fn induced_value(scheme: &InducingScheme, phi: &PotentialSpec, branch: u32, x: f64) -> Result<f64> {
    let i = scheme
        .index_of(branch)
        .ok_or_else(|| Error::config(format!("branch {branch} is not materialized in `{}`", scheme.name)))?;
    let dom = scheme.branches[i].domain;
    if !dom.contains(x, 1e-12 * dom.width()) {
        return Err(Error::config(format!("x = {x} lies outside the domain {dom} of branch {branch}")));
    }
    phi.induced_at(scheme, i, x)
}

fn grid_extrema(scheme: &InducingScheme, phi: &PotentialSpec, index: usize, points: usize) -> Result<(f64, f64)> {
    let dom = scheme.branches[index].domain;
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for k in 0..points {
        let x = dom.at(k as f64 / (points - 1) as f64);
        let v = phi.induced_unchecked(scheme, index, x);
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "potential `{phi}` is singular at grid point x = {x} of branch {}",
                scheme.branches[index].symbol
            )));
        }
        sup = sup.max(v);
        inf = inf.min(v);
    }
    Ok((sup, inf))
}

/// Sup/inf of `φ̃` over one branch from a grid of `refinement` points
/// including both endpoints.
///
/// The grid is doubled once and any growth of the extrema is added again as
/// a Richardson margin. With a distortion constant `c2` the extrema are
/// further widened by `log(1 + c2 |J|)`.
pub fn branch_sup_inf(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    index: usize,
    refinement: usize,
    c2: Option<f64>,
) -> Result<InducedPotentialValue> {
    if refinement < 2 {
        return Err(Error::config("sup/inf refinement must be at least 2"));
    }
    if index >= scheme.len() {
        return Err(Error::config(format!("branch index {index} is not materialized")));
    }
    phi.require_evaluable(scheme)?;
    let (s1, i1) = grid_extrema(scheme, phi, index, refinement)?;
    let (s2, i2) = grid_extrema(scheme, phi, index, 2 * refinement - 1)?;
    let ds = s2 - s1;
    let di = i1 - i2;
    let mut sup = s2 + ds;
    let mut inf = i2 - di;
    if let Some(c2) = c2 {
        let m = (c2 * scheme.branches[index].domain.width()).ln_1p();
        sup += m;
        inf -= m;
    }
    Ok(InducedPotentialValue {
        branch: scheme.branches[index].symbol,
        tau: scheme.branches[index].tau,
        sup_estimate: sup,
        inf_estimate: inf,
        refinement_gap: ds.max(di),
    })
}

/// [`branch_sup_inf`] for the first `n` branches.
pub fn branch_enclosures(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    n: usize,
    refinement: usize,
    c2: Option<f64>,
) -> Result<Vec<InducedPotentialValue>> {
    scheme.require(n)?;
    let out: Vec<Result<InducedPotentialValue>> = (0..n)
        .into_par_iter()
        .map(|i| branch_sup_inf(scheme, phi, i, refinement, c2))
        .collect();
    out.into_iter().collect()
}

/// Largest oscillation of `φ̃ ∘ h` over depth-`n` cylinders of the first `N`
/// symbols, estimated from the two cylinder endpoints and the midpoint.
/// Returns the value with its witnessing word.
pub fn variation(scheme: &InducingScheme, phi: &PotentialSpec, n: usize, n_alphabet: usize) -> Result<(f64, Word)> {
    variation_with_budget(scheme, phi, n, n_alphabet, DEFAULT_WORD_BUDGET)
}

pub fn variation_with_budget(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    n: usize,
    n_alphabet: usize,
    budget: u128,
) -> Result<(f64, Word)> {
    if n == 0 {
        return Err(Error::config("variation depth must be at least 1"));
    }
    scheme.require(n_alphabet)?;
    phi.require_evaluable(scheme)?;
    word_count(n_alphabet, n, false, budget)?;
    let range = scheme.inducing_range;
    let per_first: Vec<Result<(f64, Vec<usize>)>> = (0..n_alphabet)
        .into_par_iter()
        .map(|first| {
            let mut word = vec![0usize; n];
            word[0] = first;
            let mut best = (f64::NEG_INFINITY, word.clone());
            loop {
                let mut vals = [0.0; 3];
                for (slot, u) in vals.iter_mut().zip([range.lo, range.mid(), range.hi]) {
                    let x = compose_inverse(scheme, &word, u);
                    let v = phi.induced_unchecked(scheme, first, x);
                    if !v.is_finite() {
                        return Err(Error::numerical(format!(
                            "potential `{phi}` is singular at x = {x} on branch {}",
                            scheme.branches[first].symbol
                        )));
                    }
                    *slot = v;
                }
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                if hi - lo > best.0 {
                    best = (hi - lo, word.clone());
                }
                if !advance(&mut word, n_alphabet, 1) {
                    break;
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for r in per_first {
        let (v, w) = r?;
        if v > best.0 {
            best = (v, w);
        }
    }
    let word = Word(best.1.iter().map(|&i| scheme.symbol(i)).collect());
    Ok((best.0, word))
}

/// Knobs for [`check_condition`].
#[derive(Debug, Clone)]
pub struct CheckConfig {
    /// Alphabet truncation.
    pub n: usize,
    /// Deepest word length for variations and distortion.
    pub depth: usize,
    /// Grid points per branch for sup/inf estimates.
    pub refinement: usize,
    /// Normalizing constant, required by P1 and P4.
    pub s: Option<f64>,
    /// P3 is evaluated on the cohomologous potential `φ − p3_shift`.
    pub p3_shift: f64,
    /// Depth-1 equilibrium masses by branch index, required by P5.
    pub branch_masses: Option<Vec<f64>>,
    /// Growth bases for H5.
    pub gammas: Vec<f64>,
    /// Lower end of the logarithmic ε grid of P4; the upper end is 1.
    pub eps_min: f64,
    pub eps_points: usize,
    /// Bisection steps refining the largest passing ε.
    pub eps_refine: usize,
    /// Distortion constant used to widen sup/inf estimates.
    pub c2: Option<f64>,
    /// Word cap per depth for variations and distortion sampling.
    pub words_per_depth: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n: 200,
            depth: 6,
            refinement: 16,
            s: None,
            p3_shift: 0.0,
            branch_masses: None,
            gammas: vec![1.1, 1.5, 2.0],
            eps_min: 1e-4,
            eps_points: 8,
            eps_refine: 8,
            c2: None,
            words_per_depth: 20_000,
        }
    }
}

impl CheckConfig {
    pub fn new(n: usize, depth: usize) -> Self {
        CheckConfig {
            n,
            depth,
            ..Default::default()
        }
    }

    fn alphabet_at(&self, depth: usize) -> usize {
        let cap = (self.words_per_depth as f64).powf(1.0 / depth as f64).floor() as usize;
        cap.clamp(1, self.n)
    }
}

/// Check one condition on the first `config.n` branches.
pub fn check_condition(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    which: Condition,
    config: &CheckConfig,
) -> Result<ConditionReport> {
    scheme.require(config.n)?;
    let trunc = scheme.truncated(config.n);
    match which {
        Condition::H1 => Ok(validate_scheme(&trunc, config.depth, 64).swap_remove(0)),
        Condition::H2 => Ok(validate_scheme(&trunc, config.depth, 64).swap_remove(1)),
        Condition::H3 => Ok(check_h3(&trunc, config)),
        Condition::H4 => Ok(check_h4(&trunc, config)),
        Condition::H5 => Ok(check_h5(&trunc, config)),
        Condition::P1 => check_p1(&trunc, phi, config),
        Condition::P2 => check_p2(&trunc, phi, config),
        Condition::P3 => check_p3(&trunc, phi, config),
        Condition::P4 => check_p4(&trunc, phi, config),
        Condition::P5 => check_p5(&trunc, config),
    }
}

fn need_s(config: &CheckConfig, which: Condition) -> Result<f64> {
    config.s.ok_or_else(|| {
        Error::Precondition(format!(
            "{which} needs the normalizing constant s; run the normalization solver first"
        ))
    })
}

fn record_tail(rep: &mut ConditionReport, prefix: &str, fit: &TailFit) {
    rep.set(&format!("{prefix}partial_sum"), fit.partial);
    rep.set(&format!("{prefix}last_term"), fit.last_term);
    rep.set(&format!("{prefix}tail_estimate"), fit.tail_estimate);
    rep.set(&format!("{prefix}total"), fit.total);
    if fit.kappa.is_finite() {
        rep.set(&format!("{prefix}decay_ratio"), fit.ratio());
    }
    if fit.power.is_finite() {
        rep.set(&format!("{prefix}tail_power"), fit.power);
    }
}

fn check_p1(scheme: &InducingScheme, phi: &PotentialSpec, config: &CheckConfig) -> Result<ConditionReport> {
    let s = need_s(config, Condition::P1)?;
    let mut rep = ConditionReport::new(Condition::P1, config.n, config.depth);
    let enc = branch_enclosures(scheme, phi, config.n, config.refinement, config.c2)?;
    let (mut arg, mut best) = (0usize, f64::NEG_INFINITY);
    for (i, e) in enc.iter().enumerate() {
        let v = e.sup_estimate - s * e.tau as f64;
        if v > best {
            best = v;
            arg = i;
        }
    }
    rep.set("sup_phi_plus", best);
    rep.set("argmax_symbol", scheme.symbol(arg) as f64);
    rep.set("s", s);
    let edge = config.n - config.n / 4;
    rep.verdict = if !best.is_finite() {
        rep.violations.push("sup of the normalized induced potential is not finite".into());
        Verdict::Fail
    } else if !scheme.is_complete() && arg >= edge.min(config.n - 1) {
        rep.flags.push(format!(
            "maximizer at symbol {} lies in the last quarter of the truncated alphabet",
            scheme.symbol(arg)
        ));
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    rep.tail_note = format!(
        "max over {} branches of grid sup φ̃ − sτ; maximizer away from the truncation edge is required",
        config.n
    );
    Ok(rep)
}

fn check_p2(scheme: &InducingScheme, phi: &PotentialSpec, config: &CheckConfig) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new(Condition::P2, config.n, config.depth);
    let depth = config.depth.max(1);
    let mut vs = Vec::with_capacity(depth);
    for n in 1..=depth {
        let a = config.alphabet_at(n);
        let (v, w) = variation_with_budget(scheme, phi, n, a, u128::MAX)?;
        rep.set(&format!("V{n}"), v);
        if n == 1 {
            rep.set("V1_witness_symbol", w.0[0] as f64);
        }
        vs.push(v);
    }
    for n in 1..vs.len() {
        if vs[n] > vs[n - 1] * (1.0 + 1e-9) + 1e-15 {
            rep.flags.push(format!("variation increases from depth {n} to depth {}", n + 1));
        }
    }
    let scale = vs.iter().cloned().fold(0.0f64, f64::max);
    rep.tail_note = format!("variations at depths 1..{depth}, fitted by A·r^n");
    if scale <= 1e-13 {
        rep.set("A", 0.0);
        rep.set("r", 0.0);
        rep.verdict = Verdict::Pass;
        rep.tail_note.push_str("; all variations vanish");
        return Ok(rep);
    }
    let pts: Vec<(f64, f64)> = vs
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-13 * scale)
        .map(|(i, v)| ((i + 1) as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        rep.verdict = Verdict::Inconclusive;
        rep.tail_note.push_str("; fewer than three nonzero variations");
        return Ok(rep);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, b, r2) = linear_fit(&xs, &ys).expect("distinct depths");
    let r = b.exp();
    let a = pts
        .iter()
        .map(|&(n, lv)| (lv - b * n).exp())
        .fold(0.0f64, f64::max);
    rep.set("A", a);
    rep.set("r", r);
    rep.set("fit_r2", r2);
    rep.verdict = if r < 1.0 {
        Verdict::Pass
    } else {
        rep.violations.push(format!("fitted variation ratio r = {r:.4} is not below 1"));
        Verdict::Fail
    };
    Ok(rep)
}

/// Terms `exp(sup φ̃ − c τ + ε τ)` indexed by branch position.
fn sup_terms(enc: &[InducedPotentialValue], c: f64, eps: f64) -> Vec<(f64, f64)> {
    enc.iter()
        .enumerate()
        .map(|(i, e)| ((i + 1) as f64, (e.sup_estimate + (eps - c) * e.tau as f64).exp()))
        .collect()
}

fn check_p3(scheme: &InducingScheme, phi: &PotentialSpec, config: &CheckConfig) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new(Condition::P3, config.n, config.depth);
    let enc = branch_enclosures(scheme, phi, config.n, config.refinement, config.c2)?;
    let c = config.p3_shift;
    let fit = fit_series(&sup_terms(&enc, c, 0.0), scheme.is_complete());
    record_tail(&mut rep, "", &fit);
    rep.set("shift", c);
    rep.verdict = match fit.verdict {
        TailVerdict::Exact | TailVerdict::Summable => Verdict::Pass,
        TailVerdict::Divergent => {
            rep.violations.push(format!("Σ sup exp(φ̃ − {c}τ) diverges: {}", fit.note));
            Verdict::Fail
        }
        TailVerdict::Inconclusive => Verdict::Inconclusive,
    };
    rep.tail_note = format!("Σ_J sup exp(φ̃ − {c}τ) over {} branches; {}", config.n, fit.note);
    Ok(rep)
}

fn check_p4(scheme: &InducingScheme, phi: &PotentialSpec, config: &CheckConfig) -> Result<ConditionReport> {
    let s = need_s(config, Condition::P4)?;
    let mut rep = ConditionReport::new(Condition::P4, config.n, config.depth);
    let enc = branch_enclosures(scheme, phi, config.n, config.refinement, config.c2)?;
    let complete = scheme.is_complete();
    let passes = |eps: f64| fit_series(&sup_terms(&enc, s, eps), complete).is_finite();
    let base = fit_series(&sup_terms(&enc, s, 0.0), complete);
    record_tail(&mut rep, "eps0_", &base);
    rep.set("s", s);
    let weighted: Vec<(f64, f64)> = sup_terms(&enc, s, 0.0)
        .into_iter()
        .zip(&enc)
        .map(|((n, a), e)| (n, a * e.tau as f64))
        .collect();
    let tau_fit = fit_series(&weighted, complete);
    rep.set("tau_weighted_total", tau_fit.total);
    if !base.is_finite() {
        rep.verdict = if base.verdict == TailVerdict::Divergent {
            rep.violations.push(format!("sum diverges already at ε = 0: {}", base.note));
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        rep.set("eps0", 0.0);
        rep.tail_note = format!("ε = 0: {}", base.note);
        return Ok(rep);
    }
    let m = config.eps_points.max(2);
    let lmin = config.eps_min.ln();
    let grid: Vec<f64> = (0..m).map(|k| (lmin * (1.0 - k as f64 / (m - 1) as f64)).exp()).collect();
    let mut last_pass: Option<f64> = None;
    let mut first_fail: Option<f64> = None;
    for &e in &grid {
        if passes(e) {
            last_pass = Some(e);
        } else {
            first_fail = Some(e);
            break;
        }
    }
    let eps0 = match (last_pass, first_fail) {
        (Some(mut lo), Some(mut hi)) => {
            for _ in 0..config.eps_refine {
                let mid = 0.5 * (lo + hi);
                if passes(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
        (Some(lo), None) => lo,
        (None, _) => 0.0,
    };
    rep.set("eps0", eps0);
    // An ε margin below 1/Δτ over the fit window cannot be told apart from
    // zero at this truncation.
    let window = &enc[enc.len() / 2..];
    let tau_lo = window.iter().map(|e| e.tau).min().unwrap_or(1);
    let tau_hi = window.iter().map(|e| e.tau).max().unwrap_or(1);
    let resolution = if tau_hi > tau_lo && !complete { 2.0 / (tau_hi - tau_lo) as f64 } else { 0.0 };
    rep.set("eps_resolution", resolution);
    rep.verdict = if eps0 > resolution {
        Verdict::Pass
    } else if eps0 > 0.0 {
        rep.flags.push(format!(
            "largest passing ε = {eps0:.3e} is below the resolvable scale {resolution:.3e}"
        ));
        Verdict::Inconclusive
    } else {
        rep.violations.push(format!(
            "no ε ≥ {:.1e} keeps Σ sup exp(φ⁺ + ετ) finite",
            config.eps_min
        ));
        Verdict::Fail
    };
    rep.tail_note = format!(
        "{m}-point log grid on [{:.0e}, 1] refined by {} bisections; ε = 0: {}",
        config.eps_min, config.eps_refine, base.note
    );
    Ok(rep)
}

fn check_p5(scheme: &InducingScheme, config: &CheckConfig) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new(Condition::P5, config.n, config.depth);
    if let Some(c) = scheme.tau_constant {
        rep.set("K", 1.0);
        rep.set("theta", 0.0);
        rep.verdict = Verdict::Pass;
        rep.tail_note = format!("τ ≡ {c}: the tail ν(τ ≥ n) vanishes for n > {c}");
        return Ok(rep);
    }
    let masses = config.branch_masses.as_ref().ok_or_else(|| {
        Error::Precondition("P5 needs the depth-1 equilibrium masses; build the Gibbs approximation first".into())
    })?;
    let n = config.n.min(masses.len());
    let max_tau = scheme.branches[..n].iter().map(|b| b.tau).max().unwrap_or(1) as usize;
    let mut per_tau = vec![0.0; max_tau + 1];
    for (b, m) in scheme.branches[..n].iter().zip(masses) {
        per_tau[b.tau as usize] += m;
    }
    // The last level may be cut by the truncation.
    let usable = if scheme.is_complete() { max_tau } else { max_tau.saturating_sub(1) };
    let terms: Vec<(f64, f64)> = (1..=usable).map(|k| (k as f64, per_tau[k])).collect();
    let fit = fit_series(&terms, scheme.is_complete());
    let mut tail = vec![0.0; usable + 2];
    for k in (1..=usable).rev() {
        tail[k] = tail[k + 1] + per_tau[k];
    }
    record_tail(&mut rep, "", &fit);
    let width = fit.window.1 - fit.window.0;
    let exponential = fit.verdict == TailVerdict::Exact || (fit.kappa.is_finite() && fit.kappa * width >= 1.0);
    if exponential {
        let theta = if fit.verdict == TailVerdict::Exact { 0.0 } else { fit.ratio() };
        let k = (1..=usable)
            .filter(|&j| tail[j] > 0.0)
            .map(|j| if theta > 0.0 { tail[j] / theta.powi(j as i32) } else { tail[j] })
            .fold(0.0f64, f64::max);
        rep.set("theta", theta);
        rep.set("K", k);
        rep.verdict = Verdict::Pass;
    } else if fit.verdict == TailVerdict::Inconclusive {
        rep.verdict = Verdict::Inconclusive;
    } else {
        rep.violations.push(format!("tail of ν(τ ≥ n) is not exponential: {}", fit.note));
        rep.verdict = Verdict::Fail;
    }
    rep.tail_note = format!("masses per inducing time 1..{usable}; {}", fit.note);
    Ok(rep)
}

/// Sum of the materialized lengths and branch counts per inducing time.
fn per_tau_stats(scheme: &InducingScheme) -> (Vec<f64>, Vec<f64>, usize) {
    let max_tau = scheme.max_tau() as usize;
    let mut len = vec![0.0; max_tau + 1];
    let mut cnt = vec![0.0; max_tau + 1];
    for b in &scheme.branches {
        len[b.tau as usize] += b.domain.width();
        cnt[b.tau as usize] += 1.0;
    }
    let usable = if scheme.is_complete() { max_tau } else { max_tau.saturating_sub(1) };
    (len, cnt, usable)
}

fn check_h3(scheme: &InducingScheme, config: &CheckConfig) -> ConditionReport {
    let mut rep = ConditionReport::new(Condition::H3, config.n, config.depth);
    if let Some(c) = scheme.tau_constant {
        rep.set("lambda1", f64::INFINITY);
        rep.verdict = Verdict::Pass;
        rep.tail_note = format!("τ ≡ {c}: no length beyond inducing time {c}");
        return rep;
    }
    let (len, _, usable) = per_tau_stats(scheme);
    let terms: Vec<(f64, f64)> = (1..=usable).map(|k| (k as f64, len[k])).collect();
    let fit = fit_series(&terms, scheme.is_complete());
    record_tail(&mut rep, "", &fit);
    let width = fit.window.1 - fit.window.0;
    let exponential = fit.verdict == TailVerdict::Exact || (fit.kappa.is_finite() && fit.kappa * width >= 1.0);
    // Tail lengths include the part of the range left uncovered by the
    // truncation, which belongs to larger inducing times.
    let mut tail = vec![0.0; usable + 2];
    tail[usable + 1] = scheme.uncovered_length + len.iter().skip(usable + 1).sum::<f64>();
    for k in (1..=usable).rev() {
        tail[k] = tail[k + 1] + len[k];
    }
    if exponential {
        let lambda1 = if fit.verdict == TailVerdict::Exact { f64::INFINITY } else { fit.kappa.exp() };
        let c1 = (1..=usable)
            .filter(|&k| tail[k] > 0.0)
            .map(|k| 1.0 / (tail[k] * lambda1.powi(k as i32)))
            .fold(f64::INFINITY, f64::min);
        rep.set("lambda1", lambda1);
        rep.set("c1", c1);
        rep.verdict = Verdict::Pass;
    } else {
        rep.set("lambda1", if fit.kappa.is_finite() { fit.kappa.exp() } else { f64::NAN });
        rep.verdict = if fit.verdict == TailVerdict::Inconclusive && fit.points < crate::tail::MIN_FIT_POINTS {
            Verdict::Inconclusive
        } else {
            rep.violations.push(format!(
                "lengths per inducing time do not decay exponentially: {}",
                fit.note
            ));
            Verdict::Fail
        };
    }
    rep.tail_note = format!("Lebesgue length per inducing time 1..{usable}; {}", fit.note);
    rep
}

fn check_h4(scheme: &InducingScheme, config: &CheckConfig) -> ConditionReport {
    let mut rep = ConditionReport::new(Condition::H4, config.n, config.depth);
    let range = scheme.inducing_range;
    let samples: Vec<f64> = (0..5).map(|k| range.at(0.02 + 0.96 * k as f64 / 4.0)).collect();
    let depth = config.depth.max(1);
    let mut per_depth = Vec::with_capacity(depth);
    for n in 1..=depth {
        let a = config.alphabet_at(n);
        let firsts: Vec<f64> = (0..a)
            .into_par_iter()
            .map(|first| {
                let mut word = vec![0usize; n];
                word[0] = first;
                let mut worst: f64 = 0.0;
                loop {
                    let logd: Vec<f64> = samples
                        .iter()
                        .map(|&u| {
                            let mut z = u;
                            let mut acc = 0.0;
                            for &s in word.iter().rev() {
                                z = scheme.branches[s].inverse(z);
                                acc += scheme.branches[s].derivative(z).abs().ln();
                            }
                            acc
                        })
                        .collect();
                    for i in 0..samples.len() {
                        for j in i + 1..samples.len() {
                            let q = ((logd[i] - logd[j]).exp() - 1.0).abs() / (samples[i] - samples[j]).abs();
                            worst = worst.max(q);
                        }
                    }
                    if !advance(&mut word, a, 1) {
                        break;
                    }
                }
                worst
            })
            .collect();
        let c = firsts.into_iter().fold(0.0f64, f64::max);
        rep.set(&format!("c2_depth{n}"), c);
        per_depth.push(c);
    }
    let c2 = per_depth.iter().cloned().fold(0.0f64, f64::max);
    let c2_min = per_depth.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.set("c2", c2);

    let mut c3 = f64::INFINITY;
    let mut c4: f64 = 0.0;
    for b in &scheme.branches {
        let w = b.domain.width();
        for k in 0..=8 {
            let x = b.domain.interior(b.domain.at(k as f64 / 8.0), INTERIOR_INSET);
            let v = b.derivative(x).abs() * w;
            c3 = c3.min(v);
            c4 = c4.max(v);
        }
    }
    rep.set("c3", c3);
    rep.set("c4", c4);
    let consistent = c2 <= 1e-12 || (c2_min > 0.0 && c2 / c2_min <= 2.0);
    rep.verdict = if !c2.is_finite() || !(c3 > 0.0) || !c4.is_finite() {
        rep.violations.push("distortion or branch-derivative bounds are not finite".into());
        Verdict::Fail
    } else if !consistent {
        rep.violations.push(format!(
            "distortion estimates vary by more than a factor 2 across depths ({c2_min:.4e} to {c2:.4e})"
        ));
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    rep.tail_note = format!("5 sample points per cylinder, depths 1..{depth}; c3, c4 from 9 points per branch");
    rep
}

fn check_h5(scheme: &InducingScheme, config: &CheckConfig) -> ConditionReport {
    let mut rep = ConditionReport::new(Condition::H5, config.n, config.depth);
    if let Some(c) = scheme.tau_constant {
        rep.tail_note = format!("τ ≡ {c}: every branch has inducing time {c}");
        rep.verdict = match scheme.alphabet_size {
            Some(k) => {
                rep.set("growth_rate", 0.0);
                for &g in &config.gammas {
                    rep.set(&format!("c_gamma_{g}"), k as f64 / g.powi(c as i32));
                }
                Verdict::Pass
            }
            None => {
                rep.violations.push(format!("infinitely many branches have inducing time {c}"));
                Verdict::Fail
            }
        };
        return rep;
    }
    let (_, cnt, usable) = per_tau_stats(scheme);
    let pts: Vec<(f64, f64)> = (1..=usable).filter(|&k| cnt[k] > 0.0).map(|k| (k as f64, cnt[k])).collect();
    rep.tail_note = format!("branch counts per inducing time 1..{usable}");
    if pts.len() < crate::tail::MIN_FIT_POINTS && !scheme.is_complete() {
        rep.verdict = Verdict::Inconclusive;
        return rep;
    }
    let growth = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let half = xs.len() / 2;
        linear_fit(&xs[half..], &ys[half..])
            .or_else(|| linear_fit(&xs, &ys))
            .map(|f| f.1)
            .unwrap_or(0.0)
    } else {
        0.0
    };
    rep.set("growth_rate", growth);
    for &g in &config.gammas {
        let c = pts.iter().map(|&(k, n)| n / g.powf(k)).fold(0.0f64, f64::max);
        rep.set(&format!("c_gamma_{g}"), c);
    }
    let gmin = config.gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.verdict = if scheme.is_complete() || growth < gmin.ln() {
        Verdict::Pass
    } else {
        rep.violations.push(format!(
            "branch counts grow at rate {growth:.4} per unit inducing time, above log {gmin}"
        ));
        Verdict::Fail
    };
    rep
}
