//! Spectral collocation of the transfer operator
//! `(L g)(x) = Σ_i exp(φ̃(G_i x) − s τ_i) g(G_i x)` on the inducing range.
//!
//! Functions are represented by their values at Chebyshev nodes of the first
//! kind and interpolated barycentrically. Each branch contributes the matrix
//! `diag(exp ψ_i) P_i` with `P_i[k][j] = ℓ_j(G_i x_k)`, so for any `s` the
//! operator is a τ-weighted sum of precomputed blocks.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::PotentialSpec;
use crate::scheme::InducingScheme;

/// Default number of collocation nodes.
pub const DEFAULT_NODES: usize = 24;

/// Iteration cap for the power method.
pub const POWER_MAX_ITER: usize = 10_000;

/// Below this exponent a block contributes nothing in double precision.
const NEGLIGIBLE_EXPONENT: f64 = -745.0;

/// Chebyshev points and barycentric weights on an interval.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ChebyshevGrid {
    pub fn new(lo: f64, hi: f64, m: usize) -> Self {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let theta = |k: usize| PI * (2 * k + 1) as f64 / (2 * m) as f64;
        let nodes = (0..m).map(|k| mid + half * theta(k).cos()).collect();
        let weights = (0..m)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * theta(k).sin())
            .collect();
        ChebyshevGrid { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all Lagrange basis polynomials at `y`.
    pub fn basis(&self, y: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&x| x == y) {
            out.fill(0.0);
            out[j] = 1.0;
            return;
        }
        let mut den = 0.0;
        for ((o, &x), &w) in out.iter_mut().zip(&self.nodes).zip(&self.weights) {
            *o = w / (y - x);
            den += *o;
        }
        for o in out.iter_mut() {
            *o /= den;
        }
    }

    /// Interpolate node values at `y`.
    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&x, &w), &v) in self.nodes.iter().zip(&self.weights).zip(values) {
            let d = y - x;
            if d == 0.0 {
                return v;
            }
            let c = w / d;
            num += c * v;
            den += c;
        }
        num / den
    }
}

/// Leading eigen-data of the collocated operator.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub log_lambda: f64,
    /// Left eigenvector, a quadrature functional with `Σ l_k = 1`.
    pub left: Vec<f64>,
    /// Eigenfunction values at the nodes with `Σ l_k r_k = 1`.
    pub right: Vec<f64>,
    pub iterations: usize,
    /// Estimate of `1 − |λ₂/λ₁|`.
    pub gap_estimate: f64,
}

/// Precomputed per-branch blocks of the collocated transfer operator.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub grid: ChebyshevGrid,
    /// `G_i(x_k)` for each branch.
    pub(crate) points: Vec<Vec<f64>>,
    /// `φ̃(G_i x_k)`.
    pub(crate) psi: Vec<Vec<f64>>,
    pub(crate) tau: Vec<f64>,
    /// `max_k ψ_ik`.
    psi_max: Vec<f64>,
    /// `exp(ψ_ik − ψmax_i) P_i[k][j]`, row-major.
    blocks: Vec<Vec<f64>>,
}

impl Collocation {
    /// Collocate the first `n` branches with `m` nodes.
    pub fn new(scheme: &InducingScheme, phi: &PotentialSpec, n: usize, m: usize) -> Result<Self> {
        scheme.require(n)?;
        if m < 2 {
            return Err(Error::config("at least two collocation nodes are needed"));
        }
        phi.require_evaluable(scheme)?;
        let r = scheme.inducing_range;
        let grid = ChebyshevGrid::new(r.lo, r.hi, m);
        let per_branch: Vec<Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let b = &scheme.branches[i];
                let pts: Vec<f64> = grid.nodes.iter().map(|&x| b.inverse(x)).collect();
                let mut psi = Vec::with_capacity(m);
                for &y in &pts {
                    let v = phi.induced_unchecked(scheme, i, y);
                    if !v.is_finite() {
                        return Err(Error::numerical(format!(
                            "potential `{phi}` is singular at x = {y} on branch {}",
                            b.symbol
                        )));
                    }
                    psi.push(v);
                }
                let pmax = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut block = vec![0.0; m * m];
                for k in 0..m {
                    let row = &mut block[k * m..(k + 1) * m];
                    grid.basis(pts[k], row);
                    let w = (psi[k] - pmax).exp();
                    row.iter_mut().for_each(|v| *v *= w);
                }
                Ok((pts, psi, pmax, block))
            })
            .collect();
        let mut out = Collocation {
            grid,
            points: Vec::with_capacity(n),
            psi: Vec::with_capacity(n),
            tau: scheme.branches[..n].iter().map(|b| b.tau as f64).collect(),
            psi_max: Vec::with_capacity(n),
            blocks: Vec::with_capacity(n),
        };
        for r in per_branch {
            let (p, s, mx, b) = r?;
            out.points.push(p);
            out.psi.push(s);
            out.psi_max.push(mx);
            out.blocks.push(b);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// The operator on the first `n` branches at shift `s`, as `(M, L')`
    /// with `L = e^M L'`.
    fn matrix(&self, s: f64, n: usize) -> (f64, Vec<f64>) {
        let m = self.nodes();
        let expo: Vec<f64> = (0..n).map(|i| self.psi_max[i] - s * self.tau[i]).collect();
        let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut mat = vec![0.0; m * m];
        for (i, &e) in expo.iter().enumerate() {
            let c = e - top;
            if c < NEGLIGIBLE_EXPONENT {
                continue;
            }
            let w = c.exp();
            for (a, b) in mat.iter_mut().zip(&self.blocks[i]) {
                *a += w * b;
            }
        }
        (top, mat)
    }

    /// `log λ` of the operator restricted to the first `n` branches.
    pub fn log_eigenvalue(&self, s: f64, n: usize) -> Result<f64> {
        let (top, mat) = self.matrix(s, n.min(self.len()));
        let p = power_iteration(&mat, self.nodes(), false)?;
        Ok(top + p.lambda.ln())
    }

    /// Leading eigenvalue with left and right eigenvectors.
    pub fn eigen(&self, s: f64, n: usize) -> Result<EigenData> {
        let m = self.nodes();
        let (top, mat) = self.matrix(s, n.min(self.len()));
        let right = power_iteration(&mat, m, false)?;
        let left = power_iteration(&mat, m, true)?;
        let mut l = left.vector;
        let ls: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= ls);
        let mut r = right.vector;
        let lr: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
        r.iter_mut().for_each(|v| *v /= lr);
        Ok(EigenData {
            log_lambda: top + right.lambda.ln(),
            left: l,
            right: r,
            iterations: right.iterations.max(left.iterations),
            gap_estimate: right.gap_estimate.min(left.gap_estimate),
        })
    }
}

struct PowerResult {
    lambda: f64,
    vector: Vec<f64>,
    iterations: usize,
    gap_estimate: f64,
}

/// Power iteration from the all-ones vector, normalized to unit sum.
fn power_iteration(mat: &[f64], m: usize, transpose: bool) -> Result<PowerResult> {
    let mut v = vec![1.0 / m as f64; m];
    let mut w = vec![0.0; m];
    let mut prev_diff = f64::INFINITY;
    let mut ratio = f64::NAN;
    for it in 1..=POWER_MAX_ITER {
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = if transpose {
                (0..m).map(|j| mat[j * m + k] * v[j]).sum()
            } else {
                mat[k * m..(k + 1) * m].iter().zip(&v).map(|(a, b)| a * b).sum()
            };
        }
        let sum: f64 = w.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::numerical(format!(
                "power iteration lost positivity at step {it} (sum {sum:.3e})"
            )));
        }
        let lambda = sum;
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (vk, wk) in v.iter_mut().zip(&w) {
            let nv = wk / sum;
            diff = diff.max((nv - *vk).abs());
            scale = scale.max(nv.abs());
            *vk = nv;
        }
        if prev_diff.is_finite() && prev_diff > 0.0 && diff > 0.0 {
            ratio = diff / prev_diff;
        }
        prev_diff = diff;
        if diff <= 1e-14 * scale {
            return Ok(PowerResult {
                lambda,
                vector: v,
                iterations: it,
                gap_estimate: if ratio.is_finite() { 1.0 - ratio.min(1.0) } else { 1.0 },
            });
        }
    }
    Err(Error::numerical(format!(
        "power iteration did not converge in {POWER_MAX_ITER} steps; spectral gap estimate {:.3e}",
        1.0 - ratio
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{materialize, SchemeParams};

    fn scheme(name: &str, n: usize) -> InducingScheme {
        materialize(name, &SchemeParams::new(), n).unwrap()
    }

    #[test]
    fn chebyshev_interpolation_is_spectral() {
        let g = ChebyshevGrid::new(0.0, 1.0, 24);
        let vals: Vec<f64> = g.nodes.iter().map(|&x| (3.0 * x).sin() / (1.0 + x)).collect();
        for y in [0.0, 0.123, 0.5, 0.999, 1.0] {
            assert!((g.interpolate(&vals, y) - (3.0 * y).sin() / (1.0 + y)).abs() < 1e-14);
        }
        let mut b = vec![0.0; 24];
        g.basis(0.37, &mut b);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn doubling_eigenvalue_is_exact() {
        let d = scheme("doubling", 2);
        for t in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let c = Collocation::new(&d, &PotentialSpec::geometric(t), 2, 24).unwrap();
            let e = c.eigen(0.0, 2).unwrap();
            assert!((e.log_lambda - (1.0 - t) * 2f64.ln()).abs() < 1e-13);
            for r in &e.right {
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn farey_rank_one_eigenvalue() {
        let f = scheme("farey_induced", 40);
        let c = Collocation::new(&f, &PotentialSpec::geometric(0.0), 40, 24).unwrap();
        let l = c.log_eigenvalue(2f64.ln(), 40).unwrap();
        assert!((l - (1.0 - 2f64.powi(-40)).ln()).abs() < 1e-14);
    }

    #[test]
    fn gauss_density_is_recovered() {
        let g = scheme("gauss", 2000);
        let c = Collocation::new(&g, &PotentialSpec::geometric(1.0), 2000, 24).unwrap();
        let e = c.eigen(0.0, 2000).unwrap();
        // The truncated operator loses mass of order 1/N.
        assert!(e.log_lambda < 0.0 && e.log_lambda > -2e-3, "{}", e.log_lambda);
        // Eigenfunction proportional to 1/(1+x).
        let ratio: Vec<f64> = c.grid.nodes.iter().zip(&e.right).map(|(x, r)| r * (1.0 + x)).collect();
        let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
        for v in ratio {
            assert!((v / mean - 1.0).abs() < 2e-3);
        }
        // Lebesgue is conformal at t = 1: the functional integrates x to 1/2.
        let q: f64 = e.left.iter().zip(&c.grid.nodes).map(|(l, x)| l * x).sum();
        assert!((q - 0.5).abs() < 2e-3);
    }

    #[test]
    fn eigenvalue_is_monotone_in_prefix() {
        let g = scheme("gauss", 400);
        let c = Collocation::new(&g, &PotentialSpec::geometric(1.0), 400, 16).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for n in [10, 25, 50, 100, 200, 400] {
            let l = c.log_eigenvalue(0.0, n).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }
}
