//! The equilibrium pipeline: normalize, build the Gibbs measure, measure its
//! Gibbs constants, entropy and return-time integral, and lift it when `Q`
//! is finite.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::measure::{
    build_gibbs, entropy, lift, lift_integrate, EntropyReport, GibbsApproximation, GibbsConfig, Observable, QValue,
};
use crate::potential::PotentialSpec;
use crate::pressure::{solve_s, Method, NormalizationResult, SolveConfig};
use crate::scheme::InducingScheme;
use crate::tail::{extrapolate_ladder, LadderFit};

#[derive(Debug, Clone)]
pub struct EquilibriumConfig {
    pub solve: SolveConfig,
    pub gibbs: GibbsConfig,
    /// Extrapolate masses and entropy along the truncation ladder.
    pub truncation_ladder: bool,
    /// Observables integrated against the lifted measure.
    pub observables: Vec<Observable>,
}

impl EquilibriumConfig {
    pub fn new(n: usize, depth: usize) -> Self {
        EquilibriumConfig {
            solve: SolveConfig::new(n),
            gibbs: GibbsConfig::new(n, depth),
            truncation_ladder: true,
            observables: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Liftable,
    /// `Q` diverges or is undecided: the lift is σ-finite but not finite.
    Nonliftable,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservableIntegral {
    pub observable: Observable,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    pub q: f64,
    pub h_base: f64,
    pub integral_phi: f64,
    pub free_energy: f64,
    pub abramov_residual: f64,
    pub integrals: Vec<ObservableIntegral>,
}

/// Values at each truncation level and their extrapolation in `N`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationCorrection {
    pub levels: Vec<usize>,
    /// Masses of the first two branches.
    pub first_masses: Vec<LadderFit>,
    pub h_induced: LadderFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub scheme: String,
    pub potential: String,
    pub truncation_n: usize,
    pub depth: usize,
    pub normalization: NormalizationResult,
    pub c1: f64,
    pub c2: f64,
    pub compatibility_defect: f64,
    pub entropy: EntropyReport,
    pub q: QValue,
    pub outcome: Outcome,
    pub lift: Option<LiftReport>,
    pub corrected: Option<TruncationCorrection>,
    #[serde(skip)]
    pub gibbs: Arc<GibbsApproximation>,
}

fn correction(
    scheme: &InducingScheme,
    phi: &PotentialSpec,
    ladder: &LadderFit,
    top: &GibbsApproximation,
    top_entropy: &EntropyReport,
    nodes: usize,
) -> Result<TruncationCorrection> {
    let k = ladder.levels.len();
    let mut masses = [Vec::with_capacity(k), Vec::with_capacity(k)];
    let mut h = Vec::with_capacity(k);
    for (&n, &s) in ladder.levels[..k - 1].iter().zip(&ladder.values) {
        let mut gc = GibbsConfig::new(n, 1);
        gc.nodes = nodes;
        let g = build_gibbs(scheme, phi, s, &gc)?;
        for (j, m) in masses.iter_mut().enumerate() {
            m.push(g.branch_masses.get(j).copied().unwrap_or(0.0));
        }
        h.push(entropy(&g)?.h_induced);
    }
    for (j, m) in masses.iter_mut().enumerate() {
        m.push(top.branch_masses.get(j).copied().unwrap_or(0.0));
    }
    h.push(top_entropy.h_induced);
    Ok(TruncationCorrection {
        levels: ladder.levels.clone(),
        first_masses: masses.iter().map(|m| extrapolate_ladder(&ladder.levels, m)).collect(),
        h_induced: extrapolate_ladder(&ladder.levels, &h),
    })
}

/// Run the full pipeline with the transfer-operator normalization.
///
/// A divergent `Q` is an outcome, not an error: the report then carries
/// `Outcome::Nonliftable` and no lift.
pub fn equilibrium(scheme: &InducingScheme, phi: &PotentialSpec, config: &EquilibriumConfig) -> Result<EquilibriumReport> {
    let n = config.solve.n;
    let normalization = solve_s(scheme, phi, Method::TransferEigen, &config.solve)?;
    let mut gc = config.gibbs.clone();
    gc.n = n;
    gc.nodes = config.solve.nodes;
    let gibbs = Arc::new(build_gibbs(scheme, phi, normalization.s_truncated, &gc)?);
    let ent = entropy(&gibbs)?;
    let corrected = match (&normalization.ladder, config.truncation_ladder) {
        (Some(l), true) => Some(correction(scheme, phi, l, &gibbs, &ent, gc.nodes)?),
        _ => None,
    };
    let handle = lift(gibbs.clone());
    let q = handle.q.clone();
    let lift_report = if q.is_finite() {
        let integrals = config
            .observables
            .iter()
            .map(|o| {
                Ok(ObservableIntegral {
                    observable: o.clone(),
                    value: lift_integrate(&handle, o)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(LiftReport {
            q: q.value_or_inf(),
            h_base: ent.h_base.unwrap_or(f64::NAN),
            integral_phi: ent.integral_phi.unwrap_or(f64::NAN),
            free_energy: ent.free_energy.unwrap_or(f64::NAN),
            abramov_residual: ent.abramov_residual.unwrap_or(f64::NAN),
            integrals,
        })
    } else {
        None
    };
    Ok(EquilibriumReport {
        scheme: scheme.name.clone(),
        potential: phi.to_string(),
        truncation_n: n,
        depth: gc.depth,
        c1: gibbs.c1,
        c2: gibbs.c2,
        compatibility_defect: gibbs.compatibility_defect(),
        outcome: if lift_report.is_some() {
            Outcome::Liftable
        } else {
            Outcome::Nonliftable
        },
        normalization,
        entropy: ent,
        q,
        lift: lift_report,
        corrected,
        gibbs,
    })
}
