//! K-step greedy policy and its long-run average cost.

use serde::{Deserialize, Serialize};

use super::alp::{linspace, BiasApprox};
use super::{next_state, GjrParams};
use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::mdp::{ActionValue, StateVector};

/// Grid decisions at `s`: `a_j` on `points` values in `[0, s̄_j − s_j]`,
/// lexicographic in `(a_1, …, a_J)`. A point over the capacity is scaled
/// onto `Σa = ā`; duplicates and infeasible points are dropped.
pub fn action_grid(p: &GjrParams, s: &[f64], points: usize) -> Vec<ActionValue> {
    let axes: Vec<Vec<f64>> = (0..p.items())
        .map(|j| linspace(0.0, (p.s_bar[j] - s[j]).max(0.0), points.max(2)))
        .collect();
    let mut out: Vec<ActionValue> = Vec::new();
    let mut idx = vec![0usize; p.items()];
    'outer: loop {
        let mut a: Vec<f64> = idx.iter().enumerate().map(|(j, k)| axes[j][*k]).collect();
        let total: f64 = a.iter().sum();
        if total > p.a_bar {
            let f = p.a_bar / total;
            a.iter_mut().for_each(|v| *v *= f);
        }
        if p.decision_feasible(s, &a) && !out.contains(&a) {
            out.push(a);
        }
        let mut k = p.items();
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPlan {
    pub actions: Vec<ActionValue>,
    /// Σ (c − ηT) + u(s_K)
    pub objective: f64,
}

/// Objective of a fixed plan from `s`; errors on an infeasible step.
pub fn plan_value(
    p: &GjrParams,
    approx: &BiasApprox,
    bases: &BasisSet,
    s: &[f64],
    plan: &[ActionValue],
) -> Result<f64> {
    let eta = approx.eta(p);
    let mut s = s.to_vec();
    let mut v = 0.0;
    for a in plan {
        let (t, s2) = super::gjr_step(p, &s, a)?;
        v += p.cost_unchecked(&s, a) - eta * t;
        s = s2;
    }
    Ok(v + approx.bias(bases, &s))
}

struct Search<'a> {
    p: &'a GjrParams,
    approx: &'a BiasApprox,
    bases: &'a BasisSet,
    eta: f64,
    points: usize,
    horizon: usize,
    best: Option<GreedyPlan>,
    stack: Vec<ActionValue>,
}

impl Search<'_> {
    fn dfs(&mut self, s: &[f64], acc: f64) {
        if self.stack.len() == self.horizon {
            let v = acc + self.approx.bias(self.bases, s);
            if self.best.as_ref().is_none_or(|b| v < b.objective) {
                self.best = Some(GreedyPlan {
                    actions: self.stack.clone(),
                    objective: v,
                });
            }
            return;
        }
        for a in action_grid(self.p, s, self.points) {
            let t = self.p.sojourn(s, &a);
            let s2 = next_state(self.p, s, &a, t);
            let step = self.p.cost_unchecked(s, &a) - self.eta * t;
            self.stack.push(a);
            self.dfs(&s2, acc + step);
            self.stack.pop();
        }
    }
}

/// Minimizes Σ (c − ηT) + u(s_K) over K-step plans on [`action_grid`];
/// the first plan (depth-first, lexicographic) with the smallest objective wins.
pub fn k_step_greedy(
    p: &GjrParams,
    approx: &BiasApprox,
    bases: &BasisSet,
    s: &[f64],
    horizon: usize,
    points: usize,
) -> Result<GreedyPlan> {
    if horizon == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let mut search = Search {
        p,
        approx,
        bases,
        eta: approx.eta(p),
        points,
        horizon,
        best: None,
        stack: Vec::with_capacity(horizon),
    };
    search.dfs(s, 0.0);
    search
        .best
        .ok_or_else(|| Error::Domain(format!("no feasible {horizon}-step plan from {s:?}")))
}

/// Σ costs / Σ times along the K-step greedy trajectory from `s = 0`.
pub fn simulate_average_cost(
    p: &GjrParams,
    approx: &BiasApprox,
    bases: &BasisSet,
    stages: usize,
    horizon: usize,
    points: usize,
) -> Result<f64> {
    simulate_from(
        p,
        approx,
        bases,
        &vec![0.0; p.items()],
        stages,
        horizon,
        points,
    )
    .map(|(c, t, _)| c / t)
}

/// Total cost, total time and the visited states.
pub fn simulate_from(
    p: &GjrParams,
    approx: &BiasApprox,
    bases: &BasisSet,
    start: &[f64],
    stages: usize,
    horizon: usize,
    points: usize,
) -> Result<(f64, f64, Vec<StateVector>)> {
    if stages == 0 {
        return Err(Error::Parameter("need at least one stage".into()));
    }
    let mut s = start.to_vec();
    let (mut cost, mut time) = (0.0, 0.0);
    let mut visited = Vec::with_capacity(stages);
    for _ in 0..stages {
        let plan = k_step_greedy(p, approx, bases, &s, horizon, points)?;
        let a = &plan.actions[0];
        let (t, s2) = super::gjr_step(p, &s, a)?;
        cost += p.cost_unchecked(&s, a);
        time += t;
        visited.push(s);
        s = s2;
    }
    Ok((cost, time, visited))
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn empty() -> BasisSet {
        BasisSet::stump(1, 2, [1.0, 4.0], 0.01).unwrap()
    }

    #[test]
    fn grid_respects_feasibility() {
        let p = GjrParams {
            a_bar: 4.0,
            ..unit()
        };
        let g = action_grid(&p, &[0.0, 2.0], 5);
        assert!(g.iter().all(|a| p.decision_feasible(&[0.0, 2.0], a)));
        assert!(g.iter().all(|a| a[0] > 0.0));
        assert_eq!(g[0], vec![1.0, 0.0]);
    }

    #[test]
    fn one_step_is_myopic_with_zero_bias() {
        let p = unit();
        let z = BiasApprox::zeros(2, 0);
        let plan = k_step_greedy(&p, &z, &empty(), &[0.0, 0.0], 1, 5).unwrap();
        // both items are out, so both must be ordered: smallest amounts
        assert_eq!(plan.actions[0], vec![1.0, 1.0]);
        assert!((plan.objective - 130.0).abs() < 1e-12);
        assert!(k_step_greedy(&p, &z, &empty(), &[0.0, 0.0], 0, 5).is_err());
    }

    #[test]
    fn single_stage_is_cost_rate() {
        let p = unit();
        let approx = BiasApprox {
            eta_hat: 30.0,
            beta1: vec![0.0, 0.0],
            beta2: vec![],
            intercept: 0.0,
        };
        let plan = k_step_greedy(&p, &approx, &empty(), &[0.0, 0.0], 1, 5).unwrap();
        let a = &plan.actions[0];
        let (t, _) = super::super::gjr_step(&p, &[0.0, 0.0], a).unwrap();
        let v = simulate_average_cost(&p, &approx, &empty(), 1, 1, 5).unwrap();
        assert!((v - p.cost_unchecked(&[0.0, 0.0], a) / t).abs() < 1e-12);
    }

    #[test]
    fn two_cycle_average() {
        // with η = 30 the one-step plan fills both items to 4: T = 4, s' = 0,
        // so every stage repeats and the average is 130 / 4
        let p = unit();
        let approx = BiasApprox {
            eta_hat: 30.0,
            beta1: vec![0.0, 0.0],
            beta2: vec![],
            intercept: 0.0,
        };
        let plan = k_step_greedy(&p, &approx, &empty(), &[0.0, 0.0], 1, 5).unwrap();
        assert_eq!(plan.actions[0], vec![4.0, 4.0]);
        let v = simulate_average_cost(&p, &approx, &empty(), 50, 1, 5).unwrap();
        assert!((v - 130.0 / 4.0).abs() < 1e-12);
        // staggered two-cycle: from (0, 2) order (4, 2) lasts 4 and returns to (0, 0)
        let (c, t, _) = simulate_from(&p, &approx, &empty(), &[0.0, 2.0], 1, 1, 5).unwrap();
        assert!((c / t - 130.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn k_step_matches_plan_value() {
        let p = unit();
        let approx = BiasApprox {
            eta_hat: 20.0,
            beta1: vec![1.0, -2.0],
            beta2: vec![],
            intercept: 0.0,
        };
        let plan = k_step_greedy(&p, &approx, &empty(), &[0.0, 1.0], 2, 5).unwrap();
        let v = plan_value(&p, &approx, &empty(), &[0.0, 1.0], &plan.actions).unwrap();
        assert!((v - plan.objective).abs() < 1e-9);
    }
}
