//! FALP and FGLP construction over a random basis set.
//!
//! Variables are `x = (β0, β1, …, βN)`. A standard row for a sampled pair
//! `(s, a)` reads
//!
//! `(1−γ)β0 + Σ βi (φi(s) − γ E[φi(s') | s, a]) ≤ E[c(s, a)]`
//!
//! and a self-guiding row at guide state `s` enforces `V(s; β) ≥ V(s; β_prev)`,
//! stored as `−β0 − Σ βi φi(s) ≤ −V(s; β_prev) + shift`.
//!
//! `shift = v / (1−γ)` where `v ≥ 0` is the largest residual of the previous
//! weights on the new model's standard rows. In exact arithmetic `v = 0`; in
//! floating point the previous solution can miss its rows by round-off, and
//! lowering its β0 by `shift` makes it feasible again, so the model always
//! keeps a feasible point.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{FeasibilityReport, SolverBackend};
use super::model::{LpModel, RowTag};
use crate::bases::BasisSet;
use crate::error::{check_dim, Error, Result};
use crate::expectation::{engine_for, FeatureExpectation};
use crate::mdp::{ActionValue, DiscountedMdp, StateDistribution, StateVector};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfaWeights {
    pub beta0: f64,
    pub betas: Vec<f64>,
}

impl VfaWeights {
    pub fn zeros(n: usize) -> Self {
        Self {
            beta0: 0.0,
            betas: vec![0.0; n],
        }
    }

    pub fn from_vec(x: &[f64]) -> Self {
        Self {
            beta0: x[0],
            betas: x[1..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.betas.len() + 1);
        v.push(self.beta0);
        v.extend_from_slice(&self.betas);
        v
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta0.abs() + self.betas.iter().map(|b| b.abs()).sum::<f64>()
    }
}

/// V(s; β) = β0 + Σ βi φi(s).
pub fn vfa_value(bases: &BasisSet, w: &VfaWeights, s: &[f64]) -> Result<f64> {
    check_dim(bases.len(), w.len())?;
    check_dim(bases.state_dim, s.len())?;
    Ok(value_unchecked(bases, w, s))
}

pub(crate) fn value_unchecked(bases: &BasisSet, w: &VfaWeights, s: &[f64]) -> f64 {
    w.beta0
        + (0..w.len())
            .map(|i| w.betas[i] * bases.eval_entry(i, s))
            .sum::<f64>()
}

/// Sampled (s, a) pairs and the states where self-guiding rows are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSamplePlan {
    pub pairs: Vec<(StateVector, ActionValue)>,
    pub guide_states: Vec<StateVector>,
}

impl ConstraintSamplePlan {
    pub fn new(pairs: Vec<(StateVector, ActionValue)>) -> Self {
        let guide_states = distinct_states(&pairs);
        Self {
            pairs,
            guide_states,
        }
    }

    /// `count` pairs drawn uniformly from the state and action boxes.
    pub fn uniform(mdp: &dyn DiscountedMdp, count: usize, seed: u64) -> Self {
        Self::uniform_indexed(mdp, count, seed, 0)
    }

    /// As [`Self::uniform`] on constraint stream `index`.
    pub fn uniform_indexed(mdp: &dyn DiscountedMdp, count: usize, seed: u64, index: u64) -> Self {
        let mut rng = stream(seed, Purpose::Constraints, index);
        let pairs = (0..count)
            .map(|_| {
                let s = mdp.state_box().sample(&mut rng as &mut dyn RngCore);
                let a = mdp.action_box().sample(&mut rng as &mut dyn RngCore);
                (s, a)
            })
            .collect();
        Self::new(pairs)
    }

    /// Every combination of a state grid and an action grid.
    pub fn full_grid(mdp: &dyn DiscountedMdp, state_points: usize, action_points: usize) -> Self {
        let states = mdp.state_box().grid(state_points);
        let actions = mdp.action_box().grid(action_points);
        let mut pairs = Vec::with_capacity(states.len() * actions.len());
        for s in &states {
            for a in &actions {
                pairs.push((s.clone(), a.clone()));
            }
        }
        Self {
            pairs,
            guide_states: states,
        }
    }

    pub fn num_state_action(&self) -> usize {
        self.pairs.len()
    }
}

fn distinct_states(pairs: &[(StateVector, ActionValue)]) -> Vec<StateVector> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (s, _) in pairs {
        let key: Vec<u64> = s.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            out.push(s.clone());
        }
    }
    out
}

fn var_names(n: usize) -> Vec<String> {
    std::iter::once("beta0".to_string())
        .chain((1..=n).map(|i| format!("beta{i}")))
        .collect()
}

/// One FALP row per sampled pair, computed in parallel and kept in plan order.
fn standard_rows(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    engine: &dyn FeatureExpectation,
    plan: &ConstraintSamplePlan,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let gamma = mdp.discount();
    let n = bases.len();
    plan.pairs
        .par_iter()
        .map(|(s, a)| {
            if !mdp.is_feasible(s, a) {
                return Err(Error::Domain(format!(
                    "plan pair s={s:?}, a={a:?} is infeasible"
                )));
            }
            let mut next = vec![0.0; n];
            engine.expected_features(s, a, &mut next);
            let mut row = Vec::with_capacity(n + 1);
            row.push(1.0 - gamma);
            for (i, e) in next.iter().enumerate() {
                row.push(bases.eval_entry(i, s) - gamma * e);
            }
            Ok((row, mdp.expected_cost(s, a)))
        })
        .collect()
}

fn falp_objective(bases: &BasisSet, nu: &StateDistribution) -> Result<Vec<f64>> {
    let mut obj = vec![1.0];
    obj.extend(bases.mean_features(nu)?);
    Ok(obj)
}

pub fn build_falp(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    plan: &ConstraintSamplePlan,
) -> Result<LpModel> {
    let engine = engine_for(mdp, bases);
    build_falp_with(mdp, bases, engine.as_ref(), plan, mdp.relevance_dist())
}

pub fn build_falp_with(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    engine: &dyn FeatureExpectation,
    plan: &ConstraintSamplePlan,
    nu: &StateDistribution,
) -> Result<LpModel> {
    if bases.is_empty() {
        return Err(Error::Parameter("basis set is empty".into()));
    }
    if plan.pairs.is_empty() {
        return Err(Error::Parameter("constraint plan is empty".into()));
    }
    check_dim(mdp.state_dim(), bases.state_dim)?;
    let mut model = LpModel::new(falp_objective(bases, nu)?).with_names(var_names(bases.len()));
    for (row, rhs) in standard_rows(mdp, bases, engine, plan)? {
        model.push_row(&row, rhs, RowTag::Standard)?;
    }
    Ok(model)
}

pub fn build_fglp(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    plan: &ConstraintSamplePlan,
    prev: Option<&VfaWeights>,
) -> Result<LpModel> {
    let engine = engine_for(mdp, bases);
    build_fglp_with(
        mdp,
        bases,
        engine.as_ref(),
        plan,
        mdp.relevance_dist(),
        prev,
    )
}

pub fn build_fglp_with(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    engine: &dyn FeatureExpectation,
    plan: &ConstraintSamplePlan,
    nu: &StateDistribution,
    prev: Option<&VfaWeights>,
) -> Result<LpModel> {
    if let Some(p) = prev {
        if p.len() > bases.len() {
            return Err(Error::Contract(format!(
                "previous weights have {} bases but the set has only {}",
                p.len(),
                bases.len()
            )));
        }
    }
    let mut model = build_falp_with(mdp, bases, engine, plan, nu)?;
    if let Some(p) = prev {
        let prefix = bases.prefix(p.len());
        let n = bases.len();
        let shift = guide_shift(&model, p, mdp.discount());
        let rows: Vec<(Vec<f64>, f64)> = plan
            .guide_states
            .par_iter()
            .map(|s| {
                let mut row = Vec::with_capacity(n + 1);
                row.push(-1.0);
                row.extend((0..n).map(|i| -bases.eval_entry(i, s)));
                let v = value_unchecked(&prefix, p, s);
                (row, -v + shift + GUIDE_SLACK * (1.0 + v.abs()))
            })
            .collect();
        for (row, rhs) in rows {
            model.push_row(&row, rhs, RowTag::SelfGuiding)?;
        }
    }
    Ok(model)
}

/// Relative slack on self-guiding rows, at the solver's feasibility scale.
/// Without it the previous VFA sits exactly on every guide row and the
/// preconditioned simplex can lose the resulting thin feasible region.
pub const GUIDE_SLACK: f64 = 1e-9;

/// `max(0, max_i residual_i) / (1−γ)` for `prev` padded with zeros on the
/// standard rows of `model`.
pub fn guide_shift(model: &LpModel, prev: &VfaWeights, gamma: f64) -> f64 {
    let mut x = prev.to_vec();
    x.resize(model.num_vars, 0.0);
    model.max_violation(&x, RowTag::Standard).max(0.0) / (1.0 - gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedVfa {
    pub weights: VfaWeights,
    pub objective: f64,
    pub report: FeasibilityReport,
}

const REPAIR_ROUNDS: usize = 4;

/// Solves `model` and repairs standard-row round-off: every standard row
/// carries the intercept with the same coefficient `1−γ`, so lowering `β0` by
/// `max violation / (1−γ)` makes all of them hold. Self-guiding rows may
/// loosen by the same amount; the report is recomputed after the repair.
pub fn solve(model: &LpModel, backend: &dyn SolverBackend) -> Result<SolvedVfa> {
    let mut sol = backend.solve(model)?;
    let a0 = (0..model.num_rows())
        .find(|&i| model.tags[i] == RowTag::Standard)
        .map(|i| model.row(i)[0]);
    if let Some(a0) = a0.filter(|a| *a > 0.0) {
        // large weights cancel in a·x, so one shift can leave round-off behind
        for _ in 0..REPAIR_ROUNDS {
            let viol = sol.report.max_violation_standard;
            if viol <= 0.0 {
                break;
            }
            sol.x[0] -= viol / a0;
            sol.objective = model.objective_value(&sol.x);
            sol.report.max_violation_standard = model.max_violation(&sol.x, RowTag::Standard);
            sol.report.max_violation_self_guiding =
                model.max_violation(&sol.x, RowTag::SelfGuiding);
        }
    }
    Ok(SolvedVfa {
        weights: VfaWeights::from_vec(&sol.x),
        objective: sol.objective,
        report: sol.report,
    })
}
