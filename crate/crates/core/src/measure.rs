//! Gibbs measures of the induced system, entropy, the return-time integral
//! `Q`, lifted integrals and sampled correlation decay on the tower.
//!
//! Everything is assembled from the leading eigen-data of the collocated
//! transfer operator. With `l` the left eigenvector (a quadrature for the
//! conformal measure) and `h` the eigenfunction,
//!
//! `ν[w] = λ^{−n} Σ_k l_k exp(Φ⁺_n(G_w x_k)) h(G_w x_k)`,
//!
//! which is exact for the collocated operator because the integrand is
//! smooth after pulling back through the inverse branches.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, neumaier_sum, sorted_sum, Neumaier};
use crate::potential::{branch_enclosures, PotentialSpec};
use crate::pressure::periodic_birkhoff;
use crate::scheme::InducingScheme;
use crate::symbolic::Word;
use crate::tail::{fit_series, TailFit, TailVerdict};
use crate::transfer::{Collocation, DEFAULT_NODES};

/// Default total number of stored words across all depths.
pub const DEFAULT_MASS_BUDGET: usize = 200_000;

/// Largest number of depth-2 words used for the block entropy.
pub const BLOCK_ENTROPY_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct GibbsConfig {
    pub n: usize,
    pub depth: usize,
    pub nodes: usize,
    /// Total stored words, shared evenly between depths.
    pub word_budget: usize,
    /// Largest admissible `|log λ_N(s)|`.
    pub normalization_tol: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            n: 200,
            depth: 6,
            nodes: DEFAULT_NODES,
            word_budget: DEFAULT_MASS_BUDGET,
            normalization_tol: 1e-6,
        }
    }
}

impl GibbsConfig {
    pub fn new(n: usize, depth: usize) -> Self {
        GibbsConfig {
            n,
            depth,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StoredWord {
    pub word: Word,
    pub mass: f64,
    /// `Φ⁺_n` at the periodic point of the word.
    pub phi_n: f64,
    /// `ν[w] / exp(−n log λ + Φ⁺_n)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthLevel {
    pub depth: usize,
    /// Words at this depth use the first `alphabet` symbols.
    pub alphabet: usize,
    pub total_mass: f64,
    pub words: Vec<StoredWord>,
}

/// Gibbs measure of the normalized induced potential on the truncated
/// shift, with cylinder masses stored to a fixed depth.
#[derive(Debug, Clone)]
pub struct GibbsApproximation {
    pub scheme: Arc<InducingScheme>,
    pub phi: PotentialSpec,
    pub normalization_s: f64,
    /// `log λ_N(s)`, zero up to the normalization tolerance.
    pub log_lambda: f64,
    pub truncation_n: usize,
    pub depth: usize,
    pub nodes: Vec<f64>,
    pub left_eigen: Vec<f64>,
    pub right_eigen: Vec<f64>,
    /// Depth-1 masses by branch index.
    pub branch_masses: Vec<f64>,
    pub levels: Vec<DepthLevel>,
    pub c1: f64,
    pub c2: f64,
    colloc: Collocation,
}

fn decode(mut idx: usize, alphabet: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut().rev() {
        *d = idx % alphabet;
        idx /= alphabet;
    }
    out
}

fn encode(digits: &[usize], alphabet: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * alphabet + d)
}

/// Per-depth alphabets: all `n` symbols at depth 1, then the largest `a`
/// with `a^k` within the per-depth share of the budget.
fn depth_alphabets(n: usize, depth: usize, budget: usize) -> Vec<usize> {
    let share = (budget / depth.max(1)).max(1) as f64;
    let mut out = vec![n];
    for k in 2..=depth {
        let mut a = share.powf(1.0 / k as f64).floor() as usize;
        while a > 1 && (a as f64).powi(k as i32) > share {
            a -= 1;
        }
        while ((a + 1) as f64).powi(k as i32) <= share {
            a += 1;
        }
        let prev = *out.last().unwrap();
        out.push(a.clamp(1, prev));
    }
    out
}

/// Build the Gibbs measure of `φ̃ − sτ` over the first `config.n` symbols.
///
/// Requires `|log λ_N(s)| ≤ config.normalization_tol`, i.e. `s` is the root
/// of the truncated pressure.
pub fn build_gibbs(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    s: f64,
    config: &GibbsConfig,
) -> Result<GibbsApproximation> {
    let n = config.n;
    scheme.require(n)?;
    if config.depth == 0 {
        return Err(Error::config("Gibbs depth must be at least 1"));
    }
    let trunc = Arc::new(scheme.truncated(n));
    let colloc = Collocation::new(&trunc, phi, n, config.nodes)?;
    let eig = colloc.eigen(s, n)?;
    if !(eig.log_lambda.abs() <= config.normalization_tol) {
        return Err(Error::Precondition(format!(
            "pressure at s = {s} is {:.3e} at N = {n}, outside ±{:.0e}; solve for the normalizing s first",
            eig.log_lambda, config.normalization_tol
        )));
    }
    let ll = eig.log_lambda;
    let m = colloc.nodes();
    let grid = &colloc.grid;
    let left = &eig.left;
    let right = &eig.right;
    // Masses of deep words underflow; they and the Gibbs ratios are formed
    // from log-masses.
    let log_mass_of = |z: &[f64], cum: &[f64]| -> f64 {
        let top = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = neumaier_sum((0..m).map(|k| left[k] * (cum[k] - top).exp() * grid.interpolate(right, z[k])));
        top + scaled.ln()
    };
    let tau: Vec<f64> = trunc.branches.iter().map(|b| b.tau as f64).collect();
    let alphabets = depth_alphabets(n, config.depth, config.word_budget);

    // Depth 1: nodes pulled back through each branch.
    let mut prev_z: Vec<f64> = Vec::with_capacity(n * m);
    let mut prev_cum: Vec<f64> = Vec::with_capacity(n * m);
    for i in 0..n {
        prev_z.extend_from_slice(&colloc.points[i]);
        prev_cum.extend(colloc.psi[i].iter().map(|p| p - s * tau[i] - ll));
    }
    let stored = |digits: &[usize], log_mass: f64| -> Result<StoredWord> {
        let (phin, t) = periodic_birkhoff(&trunc, phi, digits)?;
        let phi_n = phin - s * t;
        Ok(StoredWord {
            word: Word(digits.iter().map(|&j| trunc.symbol(j)).collect()),
            mass: log_mass.exp(),
            phi_n,
            ratio: (log_mass - phi_n + digits.len() as f64 * ll).exp(),
        })
    };
    let first: Vec<Result<StoredWord>> = (0..n)
        .into_par_iter()
        .map(|i| {
            stored(&[i], log_mass_of(&prev_z[i * m..(i + 1) * m], &prev_cum[i * m..(i + 1) * m]))
        })
        .collect();
    let first: Vec<StoredWord> = first.into_iter().collect::<Result<_>>()?;
    let branch_masses: Vec<f64> = first.iter().map(|w| w.mass).collect();
    let mut levels = vec![DepthLevel {
        depth: 1,
        alphabet: n,
        total_mass: sorted_sum(&mut branch_masses.clone()),
        words: first,
    }];

    for d in 2..=config.depth {
        let a = alphabets[d - 1];
        let a_prev = alphabets[d - 2];
        let count = a.pow(d as u32);
        let built: Vec<Result<(Vec<f64>, Vec<f64>, StoredWord)>> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let digits = decode(idx, a, d);
                let i = digits[0];
                let p = encode(&digits[1..], a_prev);
                let b = &trunc.branches[i];
                let mut z = Vec::with_capacity(m);
                let mut cum = Vec::with_capacity(m);
                for k in 0..m {
                    let y = b.inverse(prev_z[p * m + k]);
                    z.push(y);
                    cum.push(prev_cum[p * m + k] + phi.induced_unchecked(&trunc, i, y) - s * tau[i] - ll);
                }
                let w = stored(&digits, log_mass_of(&z, &cum))?;
                Ok((z, cum, w))
            })
            .collect();
        let mut z_all = Vec::with_capacity(count * m);
        let mut c_all = Vec::with_capacity(count * m);
        let mut words = Vec::with_capacity(count);
        for r in built {
            let (z, c, w) = r?;
            z_all.extend(z);
            c_all.extend(c);
            words.push(w);
        }
        let mut ms: Vec<f64> = words.iter().map(|w| w.mass).collect();
        levels.push(DepthLevel {
            depth: d,
            alphabet: a,
            total_mass: sorted_sum(&mut ms),
            words,
        });
        prev_z = z_all;
        prev_cum = c_all;
    }

    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    for w in levels.iter().flat_map(|l| &l.words) {
        if !(w.ratio.is_finite() && w.ratio > 0.0) {
            return Err(Error::numerical(format!(
                "Gibbs ratio of word {} is {} (mass {:.3e})",
                w.word, w.ratio, w.mass
            )));
        }
        c1 = c1.min(w.ratio);
        c2 = c2.max(w.ratio);
    }
    Ok(GibbsApproximation {
        scheme: trunc,
        phi: phi.clone(),
        normalization_s: s,
        log_lambda: ll,
        truncation_n: n,
        depth: config.depth,
        nodes: grid.nodes.clone(),
        left_eigen: eig.left,
        right_eigen: eig.right,
        branch_masses,
        levels,
        c1,
        c2,
        colloc,
    })
}

impl GibbsApproximation {
    /// Eigenfunction `h` at `y`.
    pub fn density(&self, y: f64) -> f64 {
        self.colloc.grid.interpolate(&self.right_eigen, y)
    }

    /// Stored mass of a word, if its depth and symbols were stored.
    pub fn mass(&self, word: &Word) -> Option<f64> {
        let level = self.levels.get(word.len().checked_sub(1)?)?;
        let digits: Option<Vec<usize>> = word
            .0
            .iter()
            .map(|&s| self.scheme.index_of(s).filter(|&i| i < level.alphabet))
            .collect();
        Some(level.words[encode(&digits?, level.alphabet)].mass)
    }

    /// `∫_{J_i} g dν` for every branch, with `g(i, k, y)` evaluated at the
    /// pulled-back node `y = G_i x_k`.
    pub fn integrate_branches<G>(&self, g: G) -> Vec<f64>
    where
        G: Fn(usize, usize, f64) -> f64 + Sync,
    {
        let s = self.normalization_s;
        let ll = self.log_lambda;
        (0..self.truncation_n)
            .into_par_iter()
            .map(|i| {
                let tau = self.scheme.branches[i].tau as f64;
                let pts = &self.colloc.points[i];
                let psi = &self.colloc.psi[i];
                neumaier_sum((0..pts.len()).map(|k| {
                    let y = pts[k];
                    self.left_eigen[k] * (psi[k] - s * tau - ll).exp() * self.density(y) * g(i, k, y)
                }))
            })
            .collect()
    }

    /// `φ⁺ = φ̃ − sτ` at the pulled-back node `k` of branch `i`.
    fn phi_plus_at(&self, i: usize, k: usize) -> f64 {
        self.colloc.psi[i][k] - self.normalization_s * self.scheme.branches[i].tau as f64
    }

    /// Largest `ν[w] − Σ_j ν[wj]` over stored words whose children are all
    /// stored; zero up to rounding for an exact Gibbs measure.
    pub fn compatibility_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for pair in self.levels.windows(2) {
            let (parent, child) = (&pair[0], &pair[1]);
            if child.alphabet != self.truncation_n {
                continue;
            }
            let a = child.alphabet;
            let k = child.depth - 1;
            for idx in 0..a.pow(k as u32) {
                let pw = &parent.words[encode(&decode(idx, a, k), parent.alphabet)];
                let mut kids: Vec<f64> = (0..a).map(|j| child.words[idx * a + j].mass).collect();
                worst = worst.max((pw.mass - sorted_sum(&mut kids)).abs());
            }
        }
        worst
    }
}

/// Extremal Gibbs ratios `(C1, C2)` over all stored words.
pub fn gibbs_constants(g: &GibbsApproximation) -> (f64, f64) {
    (g.c1, g.c2)
}

#[derive(Debug, Clone, Serialize)]
pub struct QValue {
    /// `Σ τ ν` with its fitted tail, or `None` when divergent or undecided.
    pub value: Option<f64>,
    pub verdict: TailVerdict,
    /// `Σ τ(J) ν(J)` over materialized branches.
    pub partial: f64,
    pub tail_estimate: f64,
    pub note: String,
}

impl QValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_some()
    }

    pub fn is_divergent(&self) -> bool {
        self.verdict == TailVerdict::Divergent
    }

    /// The value, or `+∞` when not finite.
    pub fn value_or_inf(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

/// `Q = Σ_J τ(J) ν(J)` with a tail fit over inducing times.
pub fn q_value(g: &GibbsApproximation) -> QValue {
    let scheme = &g.scheme;
    let mut per: Vec<f64> = g
        .branch_masses
        .iter()
        .zip(&scheme.branches)
        .map(|(m, b)| m * b.tau as f64)
        .collect();
    let partial = sorted_sum(&mut per);
    if let Some(c) = scheme.tau_constant {
        return QValue {
            value: Some(c as f64),
            verdict: TailVerdict::Exact,
            partial,
            tail_estimate: 0.0,
            note: format!("τ ≡ {c}"),
        };
    }
    let max_tau = scheme.max_tau() as usize;
    let mut by_tau = vec![0.0; max_tau + 1];
    for (m, b) in g.branch_masses.iter().zip(&scheme.branches) {
        by_tau[b.tau as usize] += m * b.tau as f64;
    }
    let terms: Vec<(f64, f64)> = (1..=max_tau).map(|k| (k as f64, by_tau[k])).collect();
    let fit: TailFit = fit_series(&terms, scheme.is_complete());
    let value = fit.is_finite().then_some(partial + fit.tail_estimate);
    QValue {
        value,
        verdict: fit.verdict,
        partial,
        tail_estimate: fit.tail_estimate,
        note: fit.note,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// `h_ν(F) = −∫φ⁺ dν` at the normalization.
    pub h_induced: f64,
    pub integral_phi_plus: f64,
    /// `∫φ⁺ dν` bounded by branch sup/inf estimates.
    pub integral_enclosure: (f64, f64),
    /// Conditional block entropy `H₂ − H₁`, an independent estimate of the
    /// entropy; absent when `N²` exceeds the block budget.
    pub h_block: Option<f64>,
    /// `|h_block + ∫φ⁺ dν|`.
    pub variational_residual: Option<f64>,
    pub q: QValue,
    /// `h_induced / Q` over the materialized alphabet.
    pub h_base: Option<f64>,
    /// `∫φ dμ` on the base, by the Kac identity.
    pub integral_phi: Option<f64>,
    /// `h_base + ∫φ dμ`; equals `s` at an equilibrium.
    pub free_energy: Option<f64>,
    pub abramov_residual: Option<f64>,
}

/// Entropy of the induced Gibbs measure and its base counterpart.
pub fn entropy(g: &GibbsApproximation) -> Result<EntropyReport> {
    let s = g.normalization_s;
    let mut parts = g.integrate_branches(|i, k, _| g.phi_plus_at(i, k));
    let integral_phi_plus = sorted_sum(&mut parts);
    let enc = branch_enclosures(&g.scheme, &g.phi, g.truncation_n, 16, None)?;
    let (mut lo, mut hi) = (Neumaier::new(), Neumaier::new());
    for ((e, m), b) in enc.iter().zip(&g.branch_masses).zip(&g.scheme.branches) {
        lo.add(m * (e.inf_estimate - s * b.tau as f64));
        hi.add(m * (e.sup_estimate - s * b.tau as f64));
    }
    let h_induced = -integral_phi_plus;
    let h_block = block_entropy(g);
    let q = q_value(g);
    let q_partial = q.partial;
    let (h_base, integral_phi, free_energy, abramov) = if q.is_finite() {
        let hb = h_induced / q_partial;
        let ip = (integral_phi_plus + s * q_partial) / q_partial;
        (Some(hb), Some(ip), Some(hb + ip), Some((h_induced - q_partial * hb).abs()))
    } else {
        (None, None, None, None)
    };
    Ok(EntropyReport {
        h_induced,
        integral_phi_plus,
        integral_enclosure: (lo.value(), hi.value()),
        h_block,
        variational_residual: h_block.map(|h| (h + integral_phi_plus).abs()),
        q,
        h_base,
        integral_phi,
        free_energy,
        abramov_residual: abramov,
    })
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `H₂ − H₁` over all words of length two in the truncated alphabet.
fn block_entropy(g: &GibbsApproximation) -> Option<f64> {
    let n = g.truncation_n;
    if n.checked_mul(n)? > BLOCK_ENTROPY_BUDGET {
        return None;
    }
    let s = g.normalization_s;
    let ll = g.log_lambda;
    let m = g.nodes.len();
    let scheme = &g.scheme;
    let mut h1: Vec<f64> = g.branch_masses.iter().map(|&p| -xlogx(p)).collect();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = &scheme.branches[i];
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    let tj = scheme.branches[j].tau as f64;
                    let mass = neumaier_sum((0..m).map(|k| {
                        let zj = g.colloc.points[j][k];
                        let y = b.inverse(zj);
                        let cum = g.colloc.psi[j][k] - s * tj - ll + g.phi.induced_unchecked(scheme, i, y)
                            - s * b.tau as f64
                            - ll;
                        g.left_eigen[k] * cum.exp() * g.density(y)
                    }));
                    -xlogx(mass)
                })
                .collect();
            sorted_sum(&mut row)
        })
        .collect();
    let mut rows = rows;
    Some(sorted_sum(&mut rows) - sorted_sum(&mut h1))
}

/// Observables on the base interval, integrated against lifted measures.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "observable", rename_all = "snake_case")]
pub enum Observable {
    /// A potential-type function of `x`.
    Potential(PotentialSpec),
    /// Indicator of the tower cell `f^level(J)`; requires `level < τ(J)`
    /// for a nonzero value.
    TowerCell { symbol: u32, level: u32 },
}

impl Observable {
    /// Parse `cell:SYMBOL:LEVEL` or any potential string.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("cell:") {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| Error::config(format!("observable `{s}`: expected cell:SYMBOL:LEVEL")))?;
            let p = |v: &str| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::config(format!("observable `{s}`: `{v}` is not a nonnegative integer")))
            };
            return Ok(Observable::TowerCell {
                symbol: p(a)?,
                level: p(b)?,
            });
        }
        Ok(Observable::Potential(PotentialSpec::parse(s)?))
    }
}

/// A Gibbs measure together with its return-time integral.
#[derive(Debug, Clone)]
pub struct LiftedMeasureHandle {
    pub base: Arc<GibbsApproximation>,
    pub q: QValue,
}

pub fn lift(g: Arc<GibbsApproximation>) -> LiftedMeasureHandle {
    let q = q_value(&g);
    LiftedMeasureHandle { base: g, q }
}

fn require_liftable(handle: &LiftedMeasureHandle) -> Result<()> {
    if handle.q.is_finite() {
        Ok(())
    } else {
        Err(Error::NotLiftable(format!(
            "the return time is not integrable (Q {}: {}); the lift is σ-finite but not finite",
            match handle.q.verdict {
                TailVerdict::Divergent => "diverges",
                _ => "is undecided",
            },
            handle.q.note
        )))
    }
}

/// `∫ φ dπ(ν) = (∫ φ̃ dν) / Q` over the materialized alphabet.
pub fn lift_integrate(handle: &LiftedMeasureHandle, observable: &Observable) -> Result<f64> {
    require_liftable(handle)?;
    let g = &handle.base;
    let q = handle.q.partial;
    match observable {
        Observable::Potential(phi) => {
            phi.require_evaluable(&g.scheme)?;
            let mut parts = g.integrate_branches(|i, _, y| phi.induced_unchecked(&g.scheme, i, y));
            let v = sorted_sum(&mut parts) / q;
            if !v.is_finite() {
                return Err(Error::numerical(format!("integral of `{phi}` is not finite")));
            }
            Ok(v)
        }
        Observable::TowerCell { symbol, level } => {
            let i = g
                .scheme
                .index_of(*symbol)
                .ok_or_else(|| Error::config(format!("symbol {symbol} is not materialized")))?;
            Ok(if *level < g.scheme.branches[i].tau {
                g.branch_masses[i] / q
            } else {
                0.0
            })
        }
    }
}

/// Fixed number of sampling shards; the result does not depend on the
/// worker count.
pub const SAMPLING_SHARDS: usize = 16;

const BURN_IN: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationFit {
    /// Fitted exponential decay rate of `|ρ(k)|`.
    pub rate: f64,
    pub r2: f64,
    pub lags_used: usize,
    /// Normalized autocorrelations `ρ(0..=lag_max)`.
    pub correlations: Vec<f64>,
    pub variance: f64,
    pub noise_floor: f64,
    pub samples: usize,
    pub degenerate: bool,
    pub flags: Vec<String>,
    pub note: String,
}

struct ShardSums {
    count: Vec<f64>,
    prod: Vec<f64>,
    head: Vec<f64>,
    tail: Vec<f64>,
}

/// Draw one backward step `y ↦ G_i y` with probability
/// `exp(φ⁺(G_i y)) h(G_i y) / (λ h(y))`.
fn backward_step(g: &GibbsApproximation, y: f64, u: f64) -> (usize, f64) {
    let s = g.normalization_s;
    let hy = g.density(y);
    let mut cum = 0.0;
    let mut last = (0, g.scheme.branches[0].inverse(y));
    for (i, b) in g.scheme.branches.iter().enumerate() {
        let z = b.inverse(y);
        let w = (g.phi.induced_unchecked(&g.scheme, i, z) - s * b.tau as f64 - g.log_lambda).exp() * g.density(z) / hy;
        if w > 0.0 {
            last = (i, z);
        }
        cum += w;
        if cum >= u {
            return (i, z);
        }
    }
    last
}

fn observable_values(
    g: &GibbsApproximation,
    obs: &Observable,
    branch: usize,
    y: f64,
    out: &mut Vec<f64>,
    limit: usize,
) -> Result<()> {
    let b = &g.scheme.branches[branch];
    let tau = b.tau as usize;
    match obs {
        Observable::TowerCell { symbol, level } => {
            for j in 0..tau {
                if out.len() >= limit {
                    break;
                }
                out.push(if b.symbol == *symbol && j as u32 == *level { 1.0 } else { 0.0 });
            }
        }
        Observable::Potential(phi) => {
            if tau == 1 {
                out.push(phi.base_value(&g.scheme, branch, y)?);
            } else {
                let f = g.scheme.one_step.as_ref().ok_or_else(|| {
                    Error::config(format!("`{}` has no one-step map to follow tower orbits", g.scheme.name))
                })?;
                for x in f.orbit(y, tau) {
                    if out.len() >= limit {
                        break;
                    }
                    out.push(phi.base_value(&g.scheme, branch, x)?);
                }
            }
        }
    }
    Ok(())
}

fn sample_shard(
    g: &GibbsApproximation,
    obs: &Observable,
    lag_max: usize,
    target: usize,
    seed: u64,
    shard: usize,
) -> Result<ShardSums> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    let mut y = g.scheme.inducing_range.mid();
    for _ in 0..BURN_IN {
        y = backward_step(g, y, rng.random::<f64>()).1;
    }
    let mut chain: Vec<(usize, f64)> = Vec::new();
    let mut len = 0usize;
    while len < target {
        let (i, z) = backward_step(g, y, rng.random::<f64>());
        chain.push((i, z));
        len += g.scheme.branches[i].tau as usize;
        y = z;
    }
    // Reversed, the backward chain is a forward orbit of the induced map.
    let mut vals = Vec::with_capacity(target);
    for &(i, z) in chain.iter().rev() {
        observable_values(g, obs, i, z, &mut vals, target)?;
        if vals.len() >= target {
            break;
        }
    }
    let t = vals.len();
    let mut sums = ShardSums {
        count: vec![0.0; lag_max + 1],
        prod: vec![0.0; lag_max + 1],
        head: vec![0.0; lag_max + 1],
        tail: vec![0.0; lag_max + 1],
    };
    for k in 0..=lag_max.min(t.saturating_sub(1)) {
        let n = t - k;
        sums.count[k] = n as f64;
        sums.prod[k] = neumaier_sum((0..n).map(|j| vals[j] * vals[j + k]));
        sums.head[k] = neumaier_sum(vals[..n].iter().copied());
        sums.tail[k] = neumaier_sum(vals[k..].iter().copied());
    }
    Ok(sums)
}

/// Empirical autocorrelations of an observable along sampled orbits of the
/// lifted measure, with an exponential fit of their decay.
///
/// Orbits come from a reversed backward Markov chain whose stationary law is
/// the induced Gibbs measure, unfolded along the tower with the one-step
/// map. Shards draw from independent ChaCha8 streams keyed by `seed`.
pub fn correlation_decay(
    handle: &LiftedMeasureHandle,
    observable: &Observable,
    lag_max: usize,
    sample_size: usize,
    seed: u64,
) -> Result<CorrelationFit> {
    require_liftable(handle)?;
    if lag_max == 0 || sample_size < 16 * (lag_max + 1) {
        return Err(Error::config("correlation sampling needs lag_max ≥ 1 and sample_size ≥ 16·(lag_max + 1)"));
    }
    let g = &handle.base;
    let target = sample_size.div_ceil(SAMPLING_SHARDS);
    let shards: Vec<Result<ShardSums>> = (0..SAMPLING_SHARDS)
        .into_par_iter()
        .map(|k| sample_shard(g, observable, lag_max, target, seed, k))
        .collect();
    let mut acc = ShardSums {
        count: vec![0.0; lag_max + 1],
        prod: vec![0.0; lag_max + 1],
        head: vec![0.0; lag_max + 1],
        tail: vec![0.0; lag_max + 1],
    };
    let mut comp: Vec<[Neumaier; 4]> = (0..=lag_max).map(|_| Default::default()).collect();
    for sh in shards {
        let sh = sh?;
        for k in 0..=lag_max {
            comp[k][0].add(sh.count[k]);
            comp[k][1].add(sh.prod[k]);
            comp[k][2].add(sh.head[k]);
            comp[k][3].add(sh.tail[k]);
        }
    }
    for (k, c) in comp.iter().enumerate() {
        acc.count[k] = c[0].value();
        acc.prod[k] = c[1].value();
        acc.head[k] = c[2].value();
        acc.tail[k] = c[3].value();
    }
    let cov: Vec<f64> = (0..=lag_max)
        .map(|k| {
            let n = acc.count[k];
            acc.prod[k] / n - (acc.head[k] / n) * (acc.tail[k] / n)
        })
        .collect();
    let samples = acc.count[0] as usize;
    let noise_floor = 3.0 / (samples as f64).sqrt();
    let mean = acc.head[0] / acc.count[0];
    let mut fit = CorrelationFit {
        rate: f64::NAN,
        r2: f64::NAN,
        lags_used: 0,
        correlations: Vec::new(),
        variance: cov[0],
        noise_floor,
        samples,
        degenerate: false,
        flags: Vec::new(),
        note: String::new(),
    };
    if !(cov[0] > 1e-12 * (1.0 + mean * mean)) {
        fit.degenerate = true;
        fit.note = "observable has zero variance along the sampled orbits".into();
        return Ok(fit);
    }
    fit.correlations = cov.iter().map(|c| c / cov[0]).collect();
    let pts: Vec<(f64, f64)> = fit.correlations[1..]
        .iter()
        .enumerate()
        .take_while(|(_, r)| r.abs() > noise_floor)
        .map(|(k, r)| ((k + 1) as f64, r.abs().ln()))
        .collect();
    fit.lags_used = pts.len();
    if pts.len() < 3 {
        fit.note = format!("only {} lags above the noise floor {noise_floor:.2e}", pts.len());
        return Ok(fit);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, b, r2) = linear_fit(&xs, &ys).expect("distinct lags");
    fit.rate = -b;
    fit.r2 = r2;
    fit.note = format!("fit over lags 1..{}", pts.len());
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pressure::{solve_s, Method, SolveConfig};
    use crate::scheme::{materialize, SchemeParams};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn scheme(name: &str, n: usize) -> InducingScheme {
        materialize(name, &SchemeParams::new(), n).unwrap()
    }

    fn normalized(sc: &InducingScheme, phi: &PotentialSpec, n: usize, depth: usize) -> GibbsApproximation {
        let mut cfg = SolveConfig::new(n);
        cfg.check_p4 = false;
        cfg.ladder = false;
        let r = solve_s(sc, phi, Method::TransferEigen, &cfg).unwrap();
        build_gibbs(sc, phi, r.s_truncated, &GibbsConfig::new(n, depth)).unwrap()
    }

    #[test]
    fn doubling_is_bernoulli() {
        let d = scheme("doubling", 2);
        for t in [-1.0, 0.3, 1.0] {
            let g = normalized(&d, &PotentialSpec::geometric(t), 2, 8);
            for l in &g.levels {
                assert_eq!(l.words.len(), 1 << l.depth);
                for w in &l.words {
                    assert!((w.mass - 0.5f64.powi(l.depth as i32)).abs() < 1e-12);
                }
            }
            assert!((g.c1 - 1.0).abs() < 1e-10 && (g.c2 - 1.0).abs() < 1e-10);
            let e = entropy(&g).unwrap();
            assert!((e.h_induced - LN2).abs() < 1e-12);
            assert!(e.variational_residual.unwrap() < 1e-12);
            assert!((e.free_energy.unwrap() - (1.0 - t) * LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn farey_geometric_masses() {
        let f = scheme("farey_induced", 60);
        let g = normalized(&f, &PotentialSpec::geometric(0.0), 60, 4);
        for n in 1..=30 {
            assert!((g.branch_masses[n - 1] - 0.5f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!((g.c1 - 1.0).abs() < 1e-8 && (g.c2 - 1.0).abs() < 1e-8);
        let q = q_value(&g);
        assert!((q.value.unwrap() - 2.0).abs() < 1e-9);
        let e = entropy(&g).unwrap();
        assert!((e.h_induced - 2.0 * LN2).abs() < 1e-9);
        assert!((e.h_block.unwrap() - 2.0 * LN2).abs() < 1e-9);
        assert!((e.h_base.unwrap() - LN2).abs() < 1e-9);
        let h = lift(Arc::new(g));
        let cell = lift_integrate(&h, &Observable::TowerCell { symbol: 1, level: 0 }).unwrap();
        assert!((cell - 0.25).abs() < 1e-12);
        let one = lift_integrate(&h, &Observable::Potential(PotentialSpec::constant(1.0))).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_masses_match_density() {
        let sc = scheme("gauss", 200);
        let g = normalized(&sc, &PotentialSpec::geometric(1.0), 200, 3);
        let exact = |n: f64| ((n + 1.0) * (n + 1.0) / (n * (n + 2.0))).log2();
        // The truncated system carries the missing tail mass.
        for n in 1..=5 {
            let m = g.branch_masses[n - 1];
            assert!((m / exact(n as f64) - 1.0).abs() < 1e-2, "n={n}: {m}");
        }
        assert!(g.c1 > 0.0 && g.c1 <= 1.0 && g.c2 >= 1.0);
        assert!(g.compatibility_defect() < 1e-12);
        let total: f64 = g.branch_masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        let e = entropy(&g).unwrap();
        assert!(e.variational_residual.unwrap() < 1e-2, "{e:?}");
        let (lo, hi) = e.integral_enclosure;
        assert!(lo <= e.integral_phi_plus && e.integral_phi_plus <= hi);
    }

    #[test]
    fn precondition_rejects_unnormalized_s() {
        let sc = scheme("gauss", 50);
        let r = build_gibbs(&sc, &PotentialSpec::geometric(1.0), 0.5, &GibbsConfig::new(50, 2));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn farey_critical_q_diverges() {
        let f = scheme("farey_induced", 2000);
        let g = normalized(&f, &PotentialSpec::geometric(1.0), 2000, 1);
        let q = q_value(&g);
        assert!(q.is_divergent(), "{q:?}");
        let h = lift(Arc::new(g));
        assert!(matches!(
            lift_integrate(&h, &Observable::Potential(PotentialSpec::constant(1.0))),
            Err(Error::NotLiftable(_))
        ));
    }

    #[test]
    fn doubling_correlations_decay_at_log_two() {
        let d = scheme("doubling", 2);
        let h = lift(Arc::new(normalized(&d, &PotentialSpec::geometric(1.0), 2, 1)));
        let x = Observable::Potential(PotentialSpec::expression("x").unwrap());
        let fit = correlation_decay(&h, &x, 12, 200_000, 7).unwrap();
        assert!(fit.rate > 0.5 * LN2 && fit.rate < 2.0 * LN2, "{fit:?}");
        let again = correlation_decay(&h, &x, 12, 200_000, 7).unwrap();
        assert_eq!(fit.correlations, again.correlations);
        let c = correlation_decay(&h, &Observable::Potential(PotentialSpec::constant(3.0)), 5, 10_000, 1).unwrap();
        assert!(c.degenerate);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn lift_integrate_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.2f64..0.8) {
            let f = scheme("farey_induced", 80);
            let h = lift(Arc::new(normalized(&f, &PotentialSpec::geometric(t), 80, 1)));
            let e1 = PotentialSpec::expression("x").unwrap();
            let e2 = PotentialSpec::expression("x*x").unwrap();
            let src = format!("({a})*x + ({b})*x*x");
            let comb = PotentialSpec::expression(&src).unwrap();
            let i1 = lift_integrate(&h, &Observable::Potential(e1)).unwrap();
            let i2 = lift_integrate(&h, &Observable::Potential(e2)).unwrap();
            let ic = lift_integrate(&h, &Observable::Potential(comb)).unwrap();
            prop_assert!((ic - a * i1 - b * i2).abs() < 1e-9);
        }
    }
}
