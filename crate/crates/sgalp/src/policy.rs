//! Greedy policies, discounted rollout cost estimation and discounted
//! state-visit frequencies.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::error::{check_dim, Error, Result};
use crate::expectation::{engine_for, FeatureExpectation};
use crate::lp::builder::value_unchecked;
use crate::lp::VfaWeights;
use crate::mdp::{ActionValue, BoxBounds, DiscountedMdp, StateDistribution};
use crate::rng::{stream, Purpose};

/// A state-value function that can be queried along one-step transitions.
pub trait ValueFunction: Sync {
    fn value(&self, s: &[f64]) -> f64;
    /// E[V(s') | s, a] for each action in `actions`.
    fn expected_next_values(&self, s: &[f64], actions: &[ActionValue]) -> Vec<f64>;
    /// E[V(s)] under `dist`.
    fn mean(&self, dist: &StateDistribution) -> Result<f64>;
}

/// V(s; β) bound to an MDP's conditional-expectation engine.
pub struct LinearVfa<'a> {
    pub bases: &'a BasisSet,
    pub weights: &'a VfaWeights,
    engine: Box<dyn FeatureExpectation + 'a>,
}

impl<'a> LinearVfa<'a> {
    pub fn new(
        mdp: &'a dyn DiscountedMdp,
        bases: &'a BasisSet,
        weights: &'a VfaWeights,
    ) -> Result<Self> {
        check_dim(bases.len(), weights.len())?;
        check_dim(mdp.state_dim(), bases.state_dim)?;
        Ok(Self {
            bases,
            weights,
            engine: engine_for(mdp, bases),
        })
    }
}

impl ValueFunction for LinearVfa<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        value_unchecked(self.bases, self.weights, s)
    }

    fn expected_next_values(&self, s: &[f64], actions: &[ActionValue]) -> Vec<f64> {
        let n = self.bases.len();
        let mut buf = vec![0.0; n * actions.len()];
        self.engine.expected_features_many(s, actions, n, &mut buf);
        (0..actions.len())
            .map(|k| {
                self.weights.beta0
                    + buf[k * n..(k + 1) * n]
                        .iter()
                        .zip(&self.weights.betas)
                        .map(|(f, b)| f * b)
                        .sum::<f64>()
            })
            .collect()
    }

    fn mean(&self, dist: &StateDistribution) -> Result<f64> {
        let m = self.bases.mean_features(dist)?;
        Ok(self.weights.beta0
            + m.iter()
                .zip(&self.weights.betas)
                .map(|(f, b)| f * b)
                .sum::<f64>())
    }
}

pub trait Policy: Sync {
    fn action(&self, s: &[f64]) -> Result<ActionValue>;
}

/// Always plays the same action.
pub struct ConstantPolicy(pub ActionValue);

impl Policy for ConstantPolicy {
    fn action(&self, _s: &[f64]) -> Result<ActionValue> {
        Ok(self.0.clone())
    }
}

/// Grid minimiser of `E[c(s,a)] + γ E[V(s') | s, a]`.
pub struct GreedyPolicy<'a> {
    pub mdp: &'a dyn DiscountedMdp,
    pub value: &'a dyn ValueFunction,
    pub grid: Vec<ActionValue>,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(mdp: &'a dyn DiscountedMdp, value: &'a dyn ValueFunction, points: usize) -> Self {
        Self {
            mdp,
            value,
            grid: mdp.action_box().grid(points),
        }
    }

    /// Lookahead values of every feasible grid action, in grid order.
    pub fn lookahead(&self, s: &[f64]) -> Vec<(ActionValue, f64)> {
        let feasible: Vec<ActionValue> = self
            .grid
            .iter()
            .filter(|a| self.mdp.is_feasible(s, a))
            .cloned()
            .collect();
        if feasible.is_empty() {
            return Vec::new();
        }
        let costs = self.mdp.expected_costs(s, &feasible);
        let next = self.value.expected_next_values(s, &feasible);
        let gamma = self.mdp.discount();
        feasible
            .into_iter()
            .zip(costs.iter().zip(&next))
            .map(|(a, (c, v))| (a, c + gamma * v))
            .collect()
    }
}

/// Relative tolerance under which two lookahead values count as tied.
pub const TIE_TOL: f64 = 1e-10;

impl Policy for GreedyPolicy<'_> {
    fn action(&self, s: &[f64]) -> Result<ActionValue> {
        let values = self.lookahead(s);
        let best = values.iter().map(|(_, q)| *q).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::Domain(format!("no feasible grid action at s={s:?}")));
        }
        // the grid is lexicographic: the first action within the tie band wins
        let band = best + TIE_TOL * (1.0 + best.abs());
        Ok(values
            .into_iter()
            .find(|(_, q)| *q <= band)
            .map(|(a, _)| a)
            .expect("minimum exists"))
    }
}

pub fn greedy_action(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    w: &VfaWeights,
    s: &[f64],
    grid_points: usize,
) -> Result<ActionValue> {
    let vfa = LinearVfa::new(mdp, bases, w)?;
    GreedyPolicy::new(mdp, &vfa, grid_points).action(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub replications: usize,
    pub action_grid: usize,
    pub rollout_seed: u64,
}

impl SimConfig {
    /// ⌈ln(1e-3)/ln γ⌉ stages and 10³ replications.
    pub fn default_for(gamma: f64, action_grid: usize, rollout_seed: u64) -> Self {
        Self {
            horizon: default_horizon(gamma),
            replications: 1000,
            action_grid,
            rollout_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.action_grid < 2 {
            return Err(Error::Parameter(
                "need replications >= 1 and action_grid >= 2".into(),
            ));
        }
        Ok(())
    }
}

pub fn default_horizon(gamma: f64) -> usize {
    ((1e-3f64).ln() / gamma.ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replications: usize,
    pub horizon: usize,
    /// γ^H · c_max / (1 − γ): worst-case cost ignored by truncation.
    pub truncation_bound: f64,
}

pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Discounted cost of one rollout from a χ-sampled start.
fn rollout(
    mdp: &dyn DiscountedMdp,
    policy: &dyn Policy,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let gamma = mdp.discount();
    let mut s = mdp.initial_dist().sample(rng);
    let mut total = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        let a = policy.action(&s)?;
        let d = mdp.sample_noise(rng);
        total += disc * mdp.cost(&s, &a, d);
        s = mdp.transition(&s, &a, d);
        disc *= gamma;
    }
    Ok(total)
}

pub fn simulate_policy(
    mdp: &dyn DiscountedMdp,
    policy: &dyn Policy,
    sim: &SimConfig,
) -> Result<PolicyCostEstimate> {
    sim.validate()?;
    let costs: Vec<f64> = (0..sim.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(sim.rollout_seed, Purpose::Rollout, r as u64);
            rollout(mdp, policy, sim.horizon, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&costs);
    let gamma = mdp.discount();
    Ok(PolicyCostEstimate {
        mean,
        stderr,
        replications: sim.replications,
        horizon: sim.horizon,
        truncation_bound: gamma.powi(sim.horizon as i32) * mdp.cost_scale() / (1.0 - gamma),
    })
}

pub fn simulate_policy_cost(
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    w: &VfaWeights,
    sim: &SimConfig,
) -> Result<PolicyCostEstimate> {
    let vfa = LinearVfa::new(mdp, bases, w)?;
    let policy = GreedyPolicy::new(mdp, &vfa, sim.action_grid);
    simulate_policy(mdp, &policy, sim)
}

/// Discounted occupancy histogram on a product grid over the state box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    pub bounds: BoxBounds,
    pub bins_per_dim: usize,
    /// Unnormalised masses, cells in lexicographic order.
    pub raw: Vec<f64>,
    /// 1 + Σ_{t<H} γ^{t+1}.
    pub normalizer: f64,
}

impl VisitHistogram {
    pub fn normalized(&self) -> Vec<f64> {
        self.raw.iter().map(|m| m / self.normalizer).collect()
    }

    pub fn cell_of(&self, s: &[f64]) -> usize {
        cell_index(&self.bounds, self.bins_per_dim, s)
    }

    /// Lower corner of cell `k`.
    pub fn cell_lower(&self, k: usize) -> Vec<f64> {
        let d = self.bounds.dim();
        let mut idx = vec![0; d];
        let mut rem = k;
        for j in (0..d).rev() {
            idx[j] = rem % self.bins_per_dim;
            rem /= self.bins_per_dim;
        }
        (0..d)
            .map(|j| {
                self.bounds.lower[j]
                    + self.bounds.width(j) * idx[j] as f64 / self.bins_per_dim as f64
            })
            .collect()
    }
}

fn cell_index(b: &BoxBounds, bins: usize, s: &[f64]) -> usize {
    let mut k = 0;
    for j in 0..b.dim() {
        let w = b.width(j);
        let t = if w > 0.0 {
            (s[j] - b.lower[j]) / w
        } else {
            0.0
        };
        let i = ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        k = k * bins + i;
    }
    k
}

/// Binned χ: exact for atoms and uniform boxes, the empirical frequency for
/// sample sets.
fn binned_initial(dist: &StateDistribution, b: &BoxBounds, bins: usize) -> Vec<f64> {
    let d = b.dim();
    let cells = bins.pow(d as u32);
    let mut out = vec![0.0; cells];
    match dist {
        StateDistribution::Atom(s) => out[cell_index(b, bins, s)] = 1.0,
        StateDistribution::Uniform(u) => {
            // per-dimension overlap fractions
            let frac: Vec<Vec<f64>> = (0..d)
                .map(|j| {
                    (0..bins)
                        .map(|i| {
                            let lo = b.lower[j] + b.width(j) * i as f64 / bins as f64;
                            let hi = b.lower[j] + b.width(j) * (i + 1) as f64 / bins as f64;
                            if u.width(j) == 0.0 {
                                let x = u.lower[j];
                                let last = i + 1 == bins;
                                f64::from(x >= lo && (x < hi || (last && x <= hi)))
                            } else {
                                ((hi.min(u.upper[j]) - lo.max(u.lower[j])).max(0.0)) / u.width(j)
                            }
                        })
                        .collect()
                })
                .collect();
            for (k, o) in out.iter_mut().enumerate() {
                let mut rem = k;
                let mut p = 1.0;
                for j in (0..d).rev() {
                    p *= frac[j][rem % bins];
                    rem /= bins;
                }
                *o = p;
            }
        }
        StateDistribution::Empirical(v) => {
            for s in v {
                out[cell_index(b, bins, s)] += 1.0 / v.len() as f64;
            }
        }
    }
    out
}

/// μ(S₁) = χ(S₁) + Σ_t γ^{t+1} P(s_{t+1} ∈ S₁), with the one-step probability
/// taken exactly over the noise support and rollouts continued by sampling.
pub fn estimate_visit_frequency(
    mdp: &dyn DiscountedMdp,
    policy: &dyn Policy,
    bins: usize,
    sim: &SimConfig,
) -> Result<VisitHistogram> {
    if bins == 0 {
        return Err(Error::Parameter("bins must be at least 1".into()));
    }
    if sim.replications == 0 {
        return Err(Error::Parameter("replications must be at least 1".into()));
    }
    let b = mdp.state_box().clone();
    let gamma = mdp.discount();
    let cells = bins.pow(b.dim() as u32);
    let initial = binned_initial(mdp.initial_dist(), &b, bins);
    let per_rep: Vec<Vec<f64>> = (0..sim.replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = stream(sim.rollout_seed, Purpose::Rollout, r as u64);
            let mut mass = vec![0.0; cells];
            let mut s = mdp.initial_dist().sample(&mut rng);
            let mut disc = gamma;
            for _ in 0..sim.horizon {
                let a = policy.action(&s)?;
                for (v, p) in mdp.noise().points() {
                    let next = mdp.transition(&s, &a, v);
                    mass[cell_index(&b, bins, &next)] += disc * p;
                }
                let d = mdp.sample_noise(&mut rng);
                s = mdp.transition(&s, &a, d);
                disc *= gamma;
            }
            Ok(mass)
        })
        .collect::<Result<_>>()?;
    let reps = sim.replications as f64;
    let mut raw = initial;
    for mass in &per_rep {
        for (o, m) in raw.iter_mut().zip(mass) {
            *o += m / reps;
        }
    }
    let normalizer = 1.0 + (1..=sim.horizon).map(|t| gamma.powi(t as i32)).sum::<f64>();
    Ok(VisitHistogram {
        bounds: b,
        bins_per_dim: bins,
        raw,
        normalizer,
    })
}
