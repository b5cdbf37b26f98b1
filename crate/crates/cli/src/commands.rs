//! The four pipelines behind the subcommands.

use std::fs;
use std::sync::Arc;

use serde_json::{json, Value};
use thermoscheme::equilibrium::{equilibrium, EquilibriumConfig, Outcome};
use thermoscheme::measure::{correlation_decay, lift, GibbsConfig};
use thermoscheme::potential::{check_condition, CheckConfig};
use thermoscheme::pressure::{
    pressure_eigen, pressure_periodic_with_budget, pressure_sweep, solve_s, Method, SolveConfig, SweepConfig,
};
use thermoscheme::report::aggregate;
use thermoscheme::scheme::{materialize, parse_custom_scheme, InducingScheme};
use thermoscheme::Error;

use crate::config::{Format, RunConfig};
use crate::output::{meta, num, Sink};
use crate::CliError;

/// Materialize the configured scheme. Finite alphabets are capped at
/// their size, so the default `N` works for every scheme.
pub fn load_scheme(cfg: &RunConfig) -> Result<(InducingScheme, usize), CliError> {
    let scheme = match &cfg.scheme_file {
        Some(path) => {
            let src = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            parse_custom_scheme(&src, cfg.n)?
        }
        None => materialize(&cfg.scheme, &cfg.scheme_params, cfg.n)?,
    };
    let n = if scheme.alphabet_size.is_some() {
        cfg.n.min(scheme.len())
    } else {
        cfg.n
    };
    Ok((scheme, n))
}

fn solve_config(cfg: &RunConfig, n: usize) -> SolveConfig {
    let mut sc = SolveConfig::new(n);
    sc.nodes = cfg.nodes;
    sc.n_max = cfg.n_max;
    sc.word_budget = cfg.word_budget;
    sc
}

/// Alphabet for periodic-orbit sums: the largest `a ≤ N` whose pinned word
/// count `Σ_{k ≤ n_max} a^{k−1}` fits the word budget.
fn periodic_alphabet(cfg: &RunConfig, n: usize) -> usize {
    let words = |a: usize| -> f64 { (0..cfg.n_max as i32).map(|k| (a as f64).powi(k)).sum() };
    let budget = cfg.word_budget as f64;
    let mut a = budget.powf(1.0 / cfg.n_max.saturating_sub(1).max(1) as f64).floor() as usize;
    a = a.clamp(1, n);
    while a > 1 && words(a) > budget {
        a -= 1;
    }
    a
}

pub fn cmd_pressure(cfg: &RunConfig) -> Result<(), CliError> {
    let (scheme, n) = load_scheme(cfg)?;
    let phi = cfg.shifted_potential();
    let eigen = pressure_eigen(&scheme, &phi, n, cfg.nodes)?;
    let pn = periodic_alphabet(cfg, n);
    let a = scheme.first_symbol();
    let periodic = pressure_periodic_with_budget(&scheme, &phi, pn, cfg.n_max, a, cfg.word_budget)?;
    // The estimators are compared on the same alphabet.
    let eigen_same = if pn == n {
        eigen.clone()
    } else {
        pressure_eigen(&scheme, &phi, pn, cfg.nodes)?
    };
    let gap = (eigen_same.value - periodic.value).abs();
    let combined = eigen_same.diagnostic + periodic.diagnostic;
    let mut sink = Sink::new(cfg.out.as_deref())?;
    if cfg.format == Format::Csv {
        let mut rows = Vec::new();
        for &(k, v) in &eigen.trace {
            rows.push(vec!["eigen".into(), num(k), num(v), String::new()]);
        }
        for (&(k, v), &(_, inc)) in periodic.trace.iter().zip(&periodic.increments) {
            rows.push(vec!["periodic".into(), num(k), num(v), num(inc)]);
        }
        sink.csv("pressure_trace.csv", cfg, "pressure", n, &["method", "k", "value", "increment"], rows)?;
    }
    let doc = json!({
        "meta": meta(cfg, "pressure"),
        "value": eigen.tail_corrected,
        "truncated_value": eigen.value,
        "diagnostic": eigen.diagnostic,
        "agreement_gap": gap,
        "combined_diagnostic": combined,
        "estimators_agree": gap <= combined,
        "periodic_alphabet": pn,
        "eigen_at_periodic_alphabet": eigen_same.value,
        "eigen": eigen,
        "periodic": periodic,
    });
    sink.json("pressure_summary.json", &doc)
}

pub fn cmd_equilibrium(cfg: &RunConfig) -> Result<(), CliError> {
    let (scheme, n) = load_scheme(cfg)?;
    let phi = cfg.shifted_potential();
    let mut ec = EquilibriumConfig::new(n, cfg.depth);
    ec.solve = solve_config(cfg, n);
    ec.gibbs = GibbsConfig {
        n,
        depth: cfg.depth,
        nodes: cfg.nodes,
        word_budget: cfg.mass_budget,
        ..GibbsConfig::default()
    };
    ec.observables = cfg.observables.clone();
    let report = equilibrium(&scheme, &phi, &ec)?;
    let correlation = match (&cfg.correlation, report.outcome) {
        (Some(obs), Outcome::Liftable) => {
            let handle = lift(Arc::clone(&report.gibbs));
            Some(correlation_decay(&handle, obs, cfg.lag_max, cfg.samples, cfg.seed)?)
        }
        _ => None,
    };
    let mut sink = Sink::new(cfg.out.as_deref())?;
    if cfg.format == Format::Csv {
        let rows = report.gibbs.levels.iter().flat_map(|l| &l.words).map(|w| {
            vec![w.word.to_string(), num(w.mass), num(w.phi_n), num(w.ratio)]
        });
        sink.csv("masses.csv", cfg, "equilibrium", n, &["word", "mass", "phi_n", "ratio"], rows)?;
    }
    let corrected = report.corrected.as_ref();
    let summary = json!({
        "outcome": report.outcome,
        "s": report.normalization.s_value,
        "s_truncated": report.normalization.s_truncated,
        "Q": if report.q.is_finite() { Value::from(report.q.value_or_inf()) } else { Value::from("inf") },
        "C1": report.c1,
        "C2": report.c2,
        "h_induced": report.entropy.h_induced,
        "h_induced_corrected": corrected.map(|c| c.h_induced.extrapolated),
        "h_base": report.lift.as_ref().map(|l| l.h_base),
        "integral_phi": report.lift.as_ref().map(|l| l.integral_phi),
        "free_energy": report.lift.as_ref().map(|l| l.free_energy),
        "first_masses_corrected": corrected.map(|c| c.first_masses.iter().map(|f| f.extrapolated).collect::<Vec<_>>()),
    });
    let doc = json!({
        "meta": meta(cfg, "equilibrium"),
        "summary": summary,
        "report": report,
        "correlation": correlation,
    });
    sink.json("equilibrium.json", &doc)
}

pub fn cmd_check(cfg: &RunConfig) -> Result<(), CliError> {
    let (scheme, n) = load_scheme(cfg)?;
    let phi = cfg.shifted_potential();
    let mut cc = CheckConfig::new(n, cfg.depth);
    let needs_s = cfg.conditions.iter().any(|c| c.needs_normalization()) || cfg.p3_shift.is_none();
    let mut s = None;
    if needs_s {
        let mut sc = solve_config(cfg, n);
        sc.check_p4 = false;
        let r = solve_s(&scheme, &phi, Method::TransferEigen, &sc)?;
        cc.s = Some(r.s_value);
        s = Some(r.s_value);
        if cfg.conditions.contains(&thermoscheme::report::Condition::P5) {
            let mut gc = GibbsConfig::new(n, 1);
            gc.nodes = cfg.nodes;
            let g = thermoscheme::measure::build_gibbs(&scheme, &phi, r.s_truncated, &gc)?;
            cc.branch_masses = Some(g.branch_masses);
        }
    }
    cc.p3_shift = cfg.p3_shift.or(s).unwrap_or(0.0);
    let reports = cfg
        .conditions
        .iter()
        .map(|&c| check_condition(&scheme, &phi, c, &cc))
        .collect::<Result<Vec<_>, Error>>()?;
    let verdict = aggregate(&reports);
    let mut sink = Sink::new(cfg.out.as_deref())?;
    if cfg.format == Format::Csv {
        let rows = reports.iter().map(|r| {
            vec![
                r.condition.to_string(),
                r.verdict.to_string(),
                r.violations.len().to_string(),
                r.tail_note.clone(),
            ]
        });
        sink.csv("conditions.csv", cfg, "check", n, &["condition", "verdict", "violations", "note"], rows)?;
    }
    let doc = json!({
        "meta": meta(cfg, "check"),
        "normalization_s": s,
        "p3_shift": cc.p3_shift,
        "verdict": verdict,
        "reports": reports,
    });
    sink.json("conditions.json", &doc)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let (scheme, n) = load_scheme(cfg)?;
    let mut sc = SweepConfig::new(n);
    sc.solve = solve_config(cfg, n);
    sc.solve.check_p4 = false;
    let report = pressure_sweep(&scheme, &cfg.t_grid, &sc)?;
    let mut sink = Sink::new(cfg.out.as_deref())?;
    if cfg.format == Format::Csv {
        let rows = report.points.iter().map(|p| {
            vec![
                num(p.t),
                num(p.s),
                num(p.residual),
                p.n.to_string(),
                num(p.q.as_ref().map(|q| q.value_or_inf()).unwrap_or(f64::NAN)),
                u8::from(p.liftable).to_string(),
            ]
        });
        sink.csv(
            "sweep.csv",
            cfg,
            "sweep",
            n,
            &["t", "s", "residual", "N", "Q_value_or_inf", "liftable_flag"],
            rows,
        )?;
    }
    let doc = json!({
        "meta": meta(cfg, "sweep"),
        "family": "geometric",
        "report": report,
    });
    sink.json("sweep.json", &doc)
}
