//! Average-cost ALP over stump bias functions, separation and constraint
//! generation.
//!
//! Variables are `x = [η', β1 (J), β2 (N)]`, plus `β0` when guide rows are
//! present. The row of a pair `(s, a)` with `(T, s') = step(s, a)` is
//!
//! ```text
//! η' T + Σ β1_j (s'_j − s_j) + Σ β2_i (φ_i(s') − φ_i(s)) ≤ c(s, a)
//! ```
//!
//! and the objective is `max η'`. Since `s' − s = a − Tλ`, the row equals
//! `η̂ T + Σ β1_j a_j + … ≤ c` with `η' = η̂ + Σ β1_j λ_j`.
//!
//! Guide rows ask `u(s; β) ≥ u(s; β_prev)` with
//! `u(s; β) = β0 − Σ β1_j s_j − Σ β2_i φ_i(s)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{next_state, GjrParams};
use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::lp::{LpModel, RowTag, SolverBackend};
use crate::mdp::{ActionValue, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasApprox {
    pub eta_hat: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub intercept: f64,
}

impl BiasApprox {
    pub fn zeros(items: usize, bases: usize) -> Self {
        Self {
            eta_hat: 0.0,
            beta1: vec![0.0; items],
            beta2: vec![0.0; bases],
            intercept: 0.0,
        }
    }

    /// η(λ) = η̂ + Σ β1_j λ_j, the LP optimum η'.
    pub fn eta(&self, p: &GjrParams) -> f64 {
        self.eta_hat
            + self
                .beta1
                .iter()
                .zip(&p.lambda)
                .map(|(b, l)| b * l)
                .sum::<f64>()
    }

    /// u(s; β), using the first `beta2.len()` entries of `bases`.
    pub fn bias(&self, bases: &BasisSet, s: &[f64]) -> f64 {
        let mut u = self.intercept - self.beta1.iter().zip(s).map(|(b, v)| b * v).sum::<f64>();
        for (i, b) in self.beta2.iter().enumerate() {
            u -= b * bases.eval_entry(i, s);
        }
        u
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.eta_hat];
        v.extend(&self.beta1);
        v.extend(&self.beta2);
        v.push(self.intercept);
        v
    }

    fn check(&self, p: &GjrParams, bases: &BasisSet) -> Result<()> {
        if self.beta1.len() != p.items() || self.beta2.len() > bases.len() {
            return Err(Error::Dimension {
                expected: p.items() + bases.len(),
                got: self.beta1.len() + self.beta2.len(),
            });
        }
        Ok(())
    }
}

/// Coefficients `[T, s' − s, φ(s') − φ(s)]` and cost of a pair.
fn row_terms(p: &GjrParams, bases: &BasisSet, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (t, s2) = super::gjr_step(p, s, a)?;
    let mut row = Vec::with_capacity(1 + p.items() + bases.len());
    row.push(t);
    row.extend(s2.iter().zip(s).map(|(x, y)| x - y));
    for i in 0..bases.len() {
        row.push(bases.eval_entry(i, &s2) - bases.eval_entry(i, s));
    }
    Ok((row, p.cost_unchecked(s, a)))
}

/// Guide rows for the self-guiding variant.
#[derive(Debug, Clone, Copy)]
pub struct Guide<'a> {
    pub prev: &'a BiasApprox,
    pub states: &'a [StateVector],
}

pub fn build_avg_alp(
    p: &GjrParams,
    bases: &BasisSet,
    pairs: &[(StateVector, ActionValue)],
    guide: Option<Guide<'_>>,
) -> Result<LpModel> {
    if pairs.is_empty() {
        return Err(Error::Parameter(
            "the average-cost ALP needs at least one pair".into(),
        ));
    }
    let j = p.items();
    let n = bases.len();
    let vars = 1 + j + n + usize::from(guide.is_some());
    let mut objective = vec![0.0; vars];
    objective[0] = 1.0;
    let mut names = vec!["eta".to_string()];
    names.extend((0..j).map(|k| format!("beta1_{k}")));
    names.extend((0..n).map(|k| format!("beta2_{k}")));
    if guide.is_some() {
        names.push("beta0".into());
    }
    let mut model = LpModel::new(objective).with_names(names);
    for (s, a) in pairs {
        let (mut row, c) = row_terms(p, bases, s, a)?;
        row.resize(vars, 0.0);
        model.push_row(&row, c, RowTag::Standard)?;
    }
    if let Some(g) = guide {
        g.prev.check(p, bases)?;
        for s in g.states {
            // −β0 + Σ β1 s + Σ β2 φ(s) ≤ −u_prev(s)
            let mut row = vec![0.0; vars];
            row[1..1 + j].copy_from_slice(s);
            for i in 0..n {
                row[1 + j + i] = bases.eval_entry(i, s);
            }
            row[vars - 1] = -1.0;
            model.push_row(&row, -g.prev.bias(bases, s), RowTag::SelfGuiding)?;
        }
    }
    Ok(model)
}

/// Reads LP variables back into a [`BiasApprox`].
pub fn approx_from_lp(p: &GjrParams, bases: &BasisSet, x: &[f64], guided: bool) -> BiasApprox {
    let j = p.items();
    let n = bases.len();
    let beta1 = x[1..1 + j].to_vec();
    let beta2 = x[1 + j..1 + j + n].to_vec();
    let eta_prime = x[0];
    let eta_hat = eta_prime - beta1.iter().zip(&p.lambda).map(|(b, l)| b * l).sum::<f64>();
    BiasApprox {
        eta_hat,
        beta1,
        beta2,
        intercept: if guided { x[1 + j + n] } else { 0.0 },
    }
}

/// `c − η̂T − Σ β1_j a_j − Σ β2_i (φ_i(s') − φ_i(s))`; negative means violated.
pub fn slack(
    p: &GjrParams,
    bases: &BasisSet,
    approx: &BiasApprox,
    s: &[f64],
    a: &[f64],
) -> Result<f64> {
    approx.check(p, bases)?;
    let (t, s2) = super::gjr_step(p, s, a)?;
    Ok(slack_at(p, bases, approx, s, a, t, &s2))
}

#[inline]
fn slack_at(
    p: &GjrParams,
    bases: &BasisSet,
    approx: &BiasApprox,
    s: &[f64],
    a: &[f64],
    t: f64,
    s2: &[f64],
) -> f64 {
    let mut v = p.cost_unchecked(s, a) - approx.eta_hat * t;
    for j in 0..p.items() {
        v -= approx.beta1[j] * a[j];
    }
    for (i, b) in approx.beta2.iter().enumerate() {
        if *b != 0.0 {
            v -= b * (bases.eval_entry(i, s2) - bases.eval_entry(i, s));
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchPlan {
    /// Grid points per coordinate, before the budget cap.
    pub grid_points: usize,
    /// Largest grid size per (support, stocked-out item) branch.
    pub budget: usize,
    /// Points of each coordinate-descent line scan.
    pub line_points: usize,
    pub sweeps: usize,
    /// Violation threshold; `None` means `1e-6 (1 + |c'|)`.
    pub sep_tol: Option<f64>,
}

impl Default for SearchPlan {
    fn default() -> Self {
        Self {
            grid_points: 50,
            budget: 200_000,
            line_points: 101,
            sweeps: 20,
            sep_tol: None,
        }
    }
}

impl SearchPlan {
    pub fn tolerance(&self, p: &GjrParams) -> f64 {
        self.sep_tol.unwrap_or(1e-6 * (1.0 + p.c_fixed.abs()))
    }

    /// Grid points per coordinate for a branch with `dims` free coordinates.
    pub fn points_for(&self, dims: usize) -> usize {
        let cap = (self.budget as f64).powf(1.0 / dims.max(1) as f64).floor() as usize;
        self.grid_points.min(cap).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 || self.line_points < 2 || self.budget < 4 {
            return Err(Error::Parameter(
                "search needs at least two grid and line points".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeparationStatus {
    Violated,
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub state: StateVector,
    pub action: ActionValue,
    pub slack: f64,
    pub status: SeparationStatus,
}

pub(crate) fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// One (support, stocked-out item) branch of the search.
struct Branch {
    support: Vec<usize>,
    zero: usize,
}

impl Branch {
    /// Free coordinates: `s_j` for j ≠ zero, then `a_j` for j in support.
    fn coords(&self, items: usize) -> Vec<Coord> {
        let mut out: Vec<Coord> = (0..items)
            .filter(|j| *j != self.zero)
            .map(Coord::State)
            .collect();
        out.extend(self.support.iter().map(|j| Coord::Order(*j)));
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    State(usize),
    Order(usize),
}

fn branches(items: usize) -> Vec<Branch> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << items) {
        let support: Vec<usize> = (0..items).filter(|j| mask & (1 << j) != 0).collect();
        for &zero in &support {
            out.push(Branch {
                support: support.clone(),
                zero,
            });
        }
    }
    out
}

struct Evaluator<'a> {
    p: &'a GjrParams,
    bases: &'a BasisSet,
    approx: &'a BiasApprox,
}

impl Evaluator<'_> {
    fn eval(&self, s: &[f64], a: &[f64]) -> Option<f64> {
        if !self.p.decision_feasible(s, a) {
            return None;
        }
        let t = self.p.sojourn(s, a);
        let s2 = next_state(self.p, s, a, t);
        Some(slack_at(self.p, self.bases, self.approx, s, a, t, &s2))
    }

    fn best_on_grid(
        &self,
        branch: &Branch,
        plan: &SearchPlan,
    ) -> Option<(f64, StateVector, ActionValue)> {
        let items = self.p.items();
        let coords = branch.coords(items);
        let g = plan.points_for(coords.len());
        let axes: Vec<Vec<f64>> = coords
            .iter()
            .map(|c| match *c {
                Coord::State(j) => linspace(0.0, self.p.s_bar[j], g),
                Coord::Order(j) => linspace(0.0, self.p.s_bar[j], g)
                    .into_iter()
                    .filter(|v| *v > 0.0)
                    .collect(),
            })
            .collect();
        if axes.iter().any(|a| a.is_empty()) {
            return None;
        }
        let mut idx = vec![0usize; coords.len()];
        let mut s = vec![0.0; items];
        let mut a = vec![0.0; items];
        let mut best: Option<(f64, StateVector, ActionValue)> = None;
        loop {
            for (k, c) in coords.iter().enumerate() {
                match *c {
                    Coord::State(j) => s[j] = axes[k][idx[k]],
                    Coord::Order(j) => a[j] = axes[k][idx[k]],
                }
            }
            if let Some(v) = self.eval(&s, &a) {
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, s.clone(), a.clone()));
                }
            }
            // odometer, last coordinate fastest
            let mut k = coords.len();
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Coordinate descent on the branch coordinates from a feasible start.
    fn refine(
        &self,
        branch: &Branch,
        plan: &SearchPlan,
        start: (f64, StateVector, ActionValue),
    ) -> (f64, StateVector, ActionValue) {
        let coords = branch.coords(self.p.items());
        let (mut best, mut s, mut a) = start;
        for _ in 0..plan.sweeps {
            let mut improved = false;
            for c in &coords {
                let (lo, hi, j) = match *c {
                    Coord::State(j) => (0.0, self.p.s_bar[j] - a[j], j),
                    Coord::Order(j) => {
                        let others: f64 = a
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, v)| v)
                            .sum();
                        let hi = (self.p.s_bar[j] - s[j]).min(self.p.a_bar - others);
                        (hi.min(1e-9 * self.p.s_bar[j]), hi, j)
                    }
                };
                if !(hi > lo) {
                    continue;
                }
                let mut cands = linspace(lo, hi, plan.line_points);
                if let Coord::State(_) = c {
                    for e in &self.bases.entries {
                        if let crate::bases::Basis::Stump(b) = e {
                            if b.q_index == j + 1 {
                                for w in
                                    [b.omega - self.bases.eps, b.omega, b.omega + self.bases.eps]
                                {
                                    if w > lo && w < hi {
                                        cands.push(w);
                                    }
                                }
                            }
                        }
                    }
                }
                for v in cands {
                    let (mut s2, mut a2) = (s.clone(), a.clone());
                    match *c {
                        Coord::State(_) => s2[j] = v,
                        Coord::Order(_) => a2[j] = v,
                    }
                    if let Some(val) = self.eval(&s2, &a2) {
                        if val < best - 1e-12 {
                            best = val;
                            s = s2;
                            a = a2;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (best, s, a)
    }
}

/// The most violated pair found by support enumeration, a grid per branch
/// and coordinate-descent refinement of each branch's best grid point.
pub fn separate(
    p: &GjrParams,
    bases: &BasisSet,
    approx: &BiasApprox,
    plan: &SearchPlan,
) -> Result<SeparationResult> {
    plan.validate()?;
    approx.check(p, bases)?;
    let ev = Evaluator { p, bases, approx };
    let found: Vec<Option<(f64, StateVector, ActionValue)>> = branches(p.items())
        .par_iter()
        .map(|b| {
            ev.best_on_grid(b, plan)
                .map(|start| ev.refine(b, plan, start))
        })
        .collect();
    let mut best: Option<(f64, StateVector, ActionValue)> = None;
    for f in found.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| f.0 < b.0) {
            best = Some(f);
        }
    }
    let (slack, state, action) =
        best.ok_or_else(|| Error::Domain("no feasible decision on the search grid".into()))?;
    let status = if slack < -plan.tolerance(p) {
        SeparationStatus::Violated
    } else {
        SeparationStatus::Feasible
    };
    Ok(SeparationResult {
        state,
        action,
        slack,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutTraceRow {
    pub iteration: usize,
    pub lp_value: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub approx: BiasApprox,
    /// η(λ)
    pub lower_bound: f64,
    pub cuts: usize,
    pub pairs: Vec<(StateVector, ActionValue)>,
    /// Guide states used in the final model, including separation states.
    pub guide_states: Vec<StateVector>,
    pub trace: Vec<CutTraceRow>,
    pub max_violation_self_guiding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutConfig {
    pub cap: usize,
    pub search: SearchPlan,
}

impl Default for CutConfig {
    fn default() -> Self {
        Self {
            cap: 500,
            search: SearchPlan::default(),
        }
    }
}

/// Solve, separate and append the violated pair until none is found.
/// With `prev`, guide rows are added at `guide_states` and at every
/// separation state.
pub fn constraint_generation(
    p: &GjrParams,
    bases: &BasisSet,
    init_pairs: &[(StateVector, ActionValue)],
    backend: &dyn SolverBackend,
    prev: Option<(&BiasApprox, &[StateVector])>,
    cfg: &CutConfig,
) -> Result<CutResult> {
    if init_pairs.is_empty() {
        return Err(Error::Parameter(
            "constraint generation needs initial pairs".into(),
        ));
    }
    let mut pairs = init_pairs.to_vec();
    let mut guide_states: Vec<StateVector> = prev.map(|(_, g)| g.to_vec()).unwrap_or_default();
    let mut trace = Vec::new();
    let mut cuts = 0;
    loop {
        let guide = prev.map(|(b, _)| Guide {
            prev: b,
            states: &guide_states,
        });
        let model = build_avg_alp(p, bases, &pairs, guide)?;
        let sol = backend.solve(&model)?;
        let approx = approx_from_lp(p, bases, &sol.x, prev.is_some());
        let sep = separate(p, bases, &approx, &cfg.search)?;
        trace.push(CutTraceRow {
            iteration: trace.len() + 1,
            lp_value: sol.objective,
            slack: sep.slack,
        });
        if sep.status == SeparationStatus::Feasible {
            return Ok(CutResult {
                lower_bound: sol.x[0],
                approx,
                cuts,
                pairs,
                guide_states,
                trace,
                max_violation_self_guiding: sol.report.max_violation_self_guiding,
            });
        }
        if cuts >= cfg.cap {
            return Err(Error::CutCap {
                cap: cfg.cap,
                last_slack: sep.slack,
            });
        }
        cuts += 1;
        if prev.is_some() {
            guide_states.push(sep.state.clone());
        }
        pairs.push((sep.state, sep.action));
    }
}

/// `count` uniform feasible pairs.
pub fn sample_pairs(
    p: &GjrParams,
    count: usize,
    rng: &mut dyn rand::RngCore,
) -> Vec<(StateVector, ActionValue)> {
    (0..count)
        .map(|_| {
            let s = p.sample_state(rng);
            let a = p.sample_action(&s, rng);
            (s, a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::SimplexBackend;
    use crate::rng::{stream, Purpose};

    fn unit() -> GjrParams {
        GjrParams {
            lambda: vec![1.0, 1.0],
            s_bar: vec![4.0, 4.0],
            a_bar: 8.0,
            c_fixed: 100.0,
            c_item: vec![10.0, 20.0],
            holding: vec![0.0, 0.0],
        }
    }

    fn backend() -> SimplexBackend {
        SimplexBackend::default()
    }

    #[test]
    fn one_row_lp_gives_cost_rate() {
        let p = unit();
        let bases = BasisSet::stump(1, 2, [1.0, 4.0], 0.01).unwrap();
        // s' − s = 0, so β1 drops out and η' = c/T
        let pairs = vec![(vec![0.0, 0.0], vec![2.0, 2.0])];
        let m = build_avg_alp(&p, &bases, &pairs, None).unwrap();
        assert_eq!(m.num_vars, 3);
        let sol = backend().solve(&m).unwrap();
        assert!((sol.objective - 130.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn guide_rows_are_counted() {
        let p = unit();
        let mut bases = BasisSet::stump(1, 2, [1.0, 4.0], 0.01).unwrap();
        bases.extend(3);
        let mut rng = stream(1, Purpose::Misc, 0);
        let pairs = sample_pairs(&p, 20, &mut rng);
        let states: Vec<_> = (0..7).map(|_| p.sample_state(&mut rng)).collect();
        let prev = BiasApprox::zeros(2, 0);
        let m = build_avg_alp(
            &p,
            &bases,
            &pairs,
            Some(Guide {
                prev: &prev,
                states: &states,
            }),
        )
        .unwrap();
        assert_eq!(m.num_rows(), 27);
        assert_eq!(m.count(RowTag::SelfGuiding), 7);
        assert!(build_avg_alp(&p, &bases, &[], None).is_err());
    }

    #[test]
    fn zero_solution_is_feasible() {
        let p = unit();
        let bases = BasisSet::stump(1, 2, [1.0, 4.0], 0.01).unwrap();
        let r = separate(&p, &bases, &BiasApprox::zeros(2, 0), &SearchPlan::default()).unwrap();
        assert_eq!(r.status, SeparationStatus::Feasible);
        assert!((r.slack - 110.0).abs() < 1e-9);
    }

    #[test]
    fn reported_slack_matches_direct_evaluation() {
        let p = unit();
        let mut bases = BasisSet::stump(4, 2, [1.0, 4.0], 0.01).unwrap();
        bases.extend(6);
        let approx = BiasApprox {
            eta_hat: 40.0,
            beta1: vec![3.0, -2.0],
            beta2: vec![5.0, -4.0, 1.0, 0.5, -3.0, 2.0],
            intercept: 0.0,
        };
        let r = separate(&p, &bases, &approx, &SearchPlan::default()).unwrap();
        let direct = slack(&p, &bases, &approx, &r.state, &r.action).unwrap();
        assert!((direct - r.slack).abs() < 1e-9);
        assert!(p.in_state_space(&r.state));
    }

    #[test]
    fn converged_solution_separates_clean() {
        let p = unit();
        let mut bases = BasisSet::stump(2, 2, [1.0, 4.0], 0.01).unwrap();
        bases.extend(4);
        let mut rng = stream(2, Purpose::Constraints, 0);
        let init = sample_pairs(&p, 50, &mut rng);
        let res = constraint_generation(&p, &bases, &init, &backend(), None, &CutConfig::default())
            .unwrap();
        let again = separate(&p, &bases, &res.approx, &SearchPlan::default()).unwrap();
        assert_eq!(again.status, SeparationStatus::Feasible);
        assert!((res.lower_bound - res.approx.eta(&p)).abs() < 1e-6);
        // appended rows never raise the optimum
        for w in res.trace.windows(2) {
            assert!(w[1].lp_value <= w[0].lp_value + 1e-6);
        }
    }
}
