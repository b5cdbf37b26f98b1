//! Image coverage and expansion checks on a materialized scheme.

use super::InducingScheme;
use crate::report::{Condition, ConditionReport, Verdict};
use crate::symbolic::{advance, compose_inverse};

/// Tolerance on image coverage of the inducing range.
const COVER_TOL: f64 = 1e-12;

/// Cap on the number of words sampled for the depth-d expansion estimate.
const DEPTH_WORD_CAP: usize = 20_000;

/// Check image coverage and the expansion surrogate for the nested-cylinder
/// condition. Returns the reports in the order `[H1, H2]`.
///
/// Failures are reported, never raised.
pub fn validate_scheme(scheme: &InducingScheme, depth: usize, samples: usize) -> Vec<ConditionReport> {
    let depth = depth.max(1);
    let samples = samples.max(3);
    vec![check_cover(scheme, depth), check_expansion(scheme, depth, samples)]
}

fn check_cover(scheme: &InducingScheme, depth: usize) -> ConditionReport {
    let mut rep = ConditionReport::new(Condition::H1, scheme.len(), depth);
    let range = scheme.inducing_range;
    let mut worst: f64 = f64::INFINITY;
    for b in &scheme.branches {
        let a = b.forward(b.domain.lo);
        let c = b.forward(b.domain.hi);
        let (lo, hi) = (a.min(c), a.max(c));
        let margin = (range.lo - lo).min(hi - range.hi);
        worst = worst.min(margin);
        if lo > range.lo + COVER_TOL || hi < range.hi - COVER_TOL || !lo.is_finite() || !hi.is_finite() {
            rep.violations.push(format!(
                "symbol {}: image [{lo}, {hi}] does not cover the inducing range {range}",
                b.symbol
            ));
        }
        let mid = b.forward(b.domain.mid());
        if !(mid > lo.min(hi) - COVER_TOL && mid < hi + COVER_TOL) {
            rep.violations.push(format!("symbol {}: forward map is not monotone", b.symbol));
        }
    }
    rep.set("worst_cover_margin", worst);
    rep.set("uncovered_length", scheme.uncovered_length);
    rep.verdict = if rep.violations.is_empty() { Verdict::Pass } else { Verdict::Fail };
    rep.tail_note = format!(
        "{} branches checked; uncovered length of the inducing range {:.3e}",
        scheme.len(),
        scheme.uncovered_length
    );
    rep
}

fn check_expansion(scheme: &InducingScheme, depth: usize, samples: usize) -> ConditionReport {
    let mut rep = ConditionReport::new(Condition::H2, scheme.len(), depth);
    let mut lambda = f64::INFINITY;
    let mut boundary_min = f64::INFINITY;
    for b in &scheme.branches {
        let mut branch_min = f64::INFINITY;
        for i in 1..samples {
            let x = b.domain.at(i as f64 / samples as f64);
            let d = b.derivative(x).abs();
            branch_min = branch_min.min(d);
        }
        for x in [b.domain.lo, b.domain.hi] {
            boundary_min = boundary_min.min(b.derivative(x).abs());
        }
        if !(branch_min > 1.0) {
            rep.violations.push(format!(
                "symbol {}: min |dF| = {branch_min:.6} on interior samples",
                b.symbol
            ));
        }
        lambda = lambda.min(branch_min);
    }
    rep.set("lambda", lambda);
    rep.set("boundary_min_derivative", boundary_min);
    if boundary_min <= 1.0 + 1e-12 && lambda > 1.0 {
        rep.flags.push(format!(
            "boundary-neutral: |dF| reaches {boundary_min:.6} at a branch endpoint while every interior sample expands"
        ));
    }

    // Depth-d composite expansion and cylinder diameters.
    let n = scheme.len();
    let alphabet = (1..=n)
        .rev()
        .find(|&a| (a as f64).powi(depth as i32) <= DEPTH_WORD_CAP as f64)
        .unwrap_or(1);
    let range = scheme.inducing_range;
    let mut lambda_d = f64::INFINITY;
    let mut max_diam: f64 = 0.0;
    let mut word = vec![0usize; depth];
    loop {
        let lo = compose_inverse(scheme, &word, range.lo);
        let hi = compose_inverse(scheme, &word, range.hi);
        max_diam = max_diam.max((hi - lo).abs());
        for i in 1..samples.min(8) {
            let u = range.at(i as f64 / samples.min(8) as f64);
            let mut z = u;
            let mut log_der = 0.0;
            for &s in word.iter().rev() {
                z = scheme.branches[s].inverse(z);
                log_der += scheme.branches[s].derivative(z).abs().ln();
            }
            lambda_d = lambda_d.min((log_der / depth as f64).exp());
        }
        if !advance(&mut word, alphabet, 0) {
            break;
        }
    }
    rep.set("lambda_depth", lambda_d);
    rep.set("max_cylinder_diameter", max_diam);
    rep.set("sampled_alphabet", alphabet as f64);
    if !(lambda_d > 1.0) {
        rep.violations.push(format!(
            "depth-{depth} composite expansion {lambda_d:.6} is not above 1"
        ));
    }
    rep.verdict = if rep.violations.is_empty() { Verdict::Pass } else { Verdict::Fail };
    rep.tail_note = format!(
        "interior grid of {samples} points per branch; depth-{depth} words over the first {alphabet} symbols"
    );
    rep
}
