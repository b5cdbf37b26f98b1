//! Tail classification of positive series and truncation-ladder extrapolation.
//!
//! Every countable sum in the crate is reported as partial sum plus a fitted
//! tail. The tail model is `log a_n = c - p log n - κ n` fitted over the last
//! half of the available terms; geometric and power-law tails are the special
//! cases `p = 0` and `κ = 0`.

use serde::Serialize;

use crate::numeric::{least_squares, linear_fit, sorted_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVerdict {
    /// Every term of the series is available; the partial sum is the total.
    Exact,
    Summable,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub verdict: TailVerdict,
    pub partial: f64,
    pub last_term: f64,
    /// Fitted remainder beyond the last term; `+inf` when divergent, `NaN`
    /// when inconclusive.
    pub tail_estimate: f64,
    pub total: f64,
    pub log_c: f64,
    pub power: f64,
    pub kappa: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub note: String,
}

/// Minimum number of points the fit needs in its window.
pub const MIN_FIT_POINTS: usize = 4;

/// Margin above `p = 1` required before a pure power law counts as summable.
pub const POWER_MARGIN: f64 = 0.05;

impl TailFit {
    pub fn is_finite(&self) -> bool {
        matches!(self.verdict, TailVerdict::Exact | TailVerdict::Summable)
    }

    /// Decay ratio per unit index implied by the exponential part of the fit.
    pub fn ratio(&self) -> f64 {
        (-self.kappa).exp()
    }
}

/// Classify the series `Σ a_n` given `(n, a_n)` pairs sorted by `n`.
///
/// `complete` marks a series whose every term is present (finite alphabet).
pub fn fit_series(terms: &[(f64, f64)], complete: bool) -> TailFit {
    let mut vals: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let partial = sorted_sum(&mut vals);
    let last_term = terms.last().map(|t| t.1).unwrap_or(0.0);
    let mut fit = TailFit {
        verdict: TailVerdict::Inconclusive,
        partial,
        last_term,
        tail_estimate: f64::NAN,
        total: f64::NAN,
        log_c: f64::NAN,
        power: f64::NAN,
        kappa: f64::NAN,
        window: (f64::NAN, f64::NAN),
        points: 0,
        note: String::new(),
    };
    if complete {
        fit.verdict = TailVerdict::Exact;
        fit.tail_estimate = 0.0;
        fit.total = partial;
        fit.note = "all terms present".into();
        return fit;
    }
    let start = terms.len() / 2;
    let window = &terms[start..];
    if window.len() >= MIN_FIT_POINTS && window.iter().all(|t| t.1 == 0.0) {
        fit.verdict = TailVerdict::Exact;
        fit.tail_estimate = 0.0;
        fit.total = partial;
        fit.note = "trailing terms vanish".into();
        return fit;
    }
    let pts: Vec<(f64, f64)> = window
        .iter()
        .filter(|t| t.1 > 0.0 && t.1.is_finite())
        .map(|&(n, a)| (n, a.ln()))
        .collect();
    fit.points = pts.len();
    if pts.len() < MIN_FIT_POINTS {
        fit.note = format!("only {} positive terms in the fit window", pts.len());
        return fit;
    }
    let n0 = pts[0].0;
    let n1 = pts[pts.len() - 1].0;
    fit.window = (n0, n1);
    let width = n1 - n0;
    if width <= 0.0 {
        fit.note = "degenerate fit window".into();
        return fit;
    }
    let mid = 0.5 * (n0 + n1);
    // Centred regressors keep the normal equations well conditioned.
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|&(n, _)| vec![1.0, -(n / mid).ln(), -(n - mid) / width])
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let Some(beta) = least_squares(&rows, &ys) else {
        fit.note = "singular tail regression".into();
        return fit;
    };
    let kappa = beta[2] / width;
    let kw = kappa * width;
    let (log_c, power, kappa) = if kw.abs() >= 1.0 {
        let p = beta[1];
        (beta[0] + p * mid.ln() + kappa * mid, p, kappa)
    } else {
        // The exponential part is not resolved on this window; refit a pure
        // power law.
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let Some((a, b, _)) = linear_fit(&xs, &ys) else {
            fit.note = "singular power-law regression".into();
            return fit;
        };
        (a, -b, 0.0)
    };
    fit.log_c = log_c;
    fit.power = power;
    fit.kappa = kappa;
    if kappa * width >= 1.0 {
        fit.verdict = TailVerdict::Summable;
        fit.note = format!("exponential tail, ratio {:.6e} per index", (-kappa).exp());
    } else if kappa * width <= -1.0 {
        fit.verdict = TailVerdict::Divergent;
        fit.note = format!("exponentially growing terms, rate {kappa:.3e}");
    } else if power > 1.0 + POWER_MARGIN {
        fit.verdict = TailVerdict::Summable;
        fit.note = format!("power-law tail n^-{power:.4}");
    } else if power <= 1.0 {
        fit.verdict = TailVerdict::Divergent;
        fit.note = format!("power-law tail n^-{power:.4} is not summable");
    } else {
        fit.note = format!("power-law exponent {power:.4} too close to 1 to decide");
    }
    match fit.verdict {
        TailVerdict::Summable => {
            fit.tail_estimate = tail_integral(log_c, power, kappa, n1 + 0.5);
            fit.total = partial + fit.tail_estimate;
        }
        TailVerdict::Divergent => {
            fit.tail_estimate = f64::INFINITY;
            fit.total = f64::INFINITY;
        }
        _ => {}
    }
    fit
}

/// `∫_{x0}^∞ exp(c - p log x - κ x) dx` by Simpson's rule in `u = log x`.
fn tail_integral(c: f64, p: f64, kappa: f64, x0: f64) -> f64 {
    let g = |u: f64| {
        let x = x0 * u.exp();
        (c - p * x.ln() - kappa * x + u).exp() * x0
    };
    let mut total = 0.0;
    let h = 0.01;
    let mut u = 0.0;
    let head = g(0.0);
    while u < 200.0 {
        let a = g(u);
        let m = g(u + 0.5 * h);
        let b = g(u + h);
        total += h / 6.0 * (a + 4.0 * m + b);
        u += h;
        if b < 1e-18 * head.max(total) && u > 1.0 {
            break;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderModel {
    /// Differences vanish to rounding; the last level is already converged.
    Exact,
    /// Differences shrink by a constant ratio per doubling (algebraic in N).
    Power,
    /// Differences shrink like `a^N` (geometric in N).
    Geometric,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderFit {
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    pub model: LadderModel,
    pub extrapolated: f64,
    /// `extrapolated - last value`.
    pub correction: f64,
}

/// Truncation levels `N/8, N/4, N/2, N` with duplicates and zeros removed.
pub fn ladder_levels(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 8, n / 4, n / 2, n].into_iter().filter(|&k| k >= 1).collect();
    v.dedup();
    v
}

/// Extrapolate values computed at doubling truncation levels to `N = ∞`.
pub fn extrapolate_ladder(levels: &[usize], values: &[f64]) -> LadderFit {
    let last = values.last().copied().unwrap_or(f64::NAN);
    let mut out = LadderFit {
        levels: levels.to_vec(),
        values: values.to_vec(),
        model: LadderModel::Inconclusive,
        extrapolated: last,
        correction: 0.0,
    };
    if values.len() < 2 {
        return out;
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if d.iter().all(|x| x.abs() <= 1e-11 * scale) {
        out.model = LadderModel::Exact;
        return out;
    }
    if d.len() < 2 {
        return out;
    }
    let k = d.len();
    let (d1, d2) = (d[k - 2], d[k - 1]);
    let same_sign = d1 * d2 > 0.0;
    if !same_sign {
        return out;
    }
    let q = d2 / d1;
    let power_ok = q > 0.0 && q < 1.0;
    let geo_ok = q > 0.0 && q < 2.0;
    let power_rem = d2 * q / (1.0 - q);
    let geo_rem = {
        let x = 0.5 * (-1.0 + (1.0 + 4.0 * q).sqrt());
        d2 * x * x / (1.0 - x * x)
    };
    let model = if k >= 3 && d[k - 3] * d1 > 0.0 {
        // Predict the latest difference from the two before it.
        let d0 = d[k - 3];
        let pred_power = d1 * d1 / d0;
        let r0 = d1 / d0;
        let pred_geo = if r0 > 0.0 && r0 < 2.0 {
            let x0 = 0.5 * (-1.0 + (1.0 + 4.0 * r0).sqrt());
            let c = d0 / (x0 - x0 * x0);
            c * (x0.powi(4) - x0.powi(8))
        } else {
            f64::NAN
        };
        let ep = (pred_power - d2).abs();
        let eg = (pred_geo - d2).abs();
        if geo_ok && (eg < ep || !power_ok) {
            LadderModel::Geometric
        } else if power_ok {
            LadderModel::Power
        } else {
            LadderModel::Inconclusive
        }
    } else if power_ok {
        LadderModel::Power
    } else {
        LadderModel::Inconclusive
    };
    let rem = match model {
        LadderModel::Power => power_rem,
        LadderModel::Geometric => geo_rem,
        _ => 0.0,
    };
    out.model = model;
    out.correction = rem;
    out.extrapolated = last + rem;
    out
}
