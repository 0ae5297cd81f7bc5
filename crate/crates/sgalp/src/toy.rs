//! One-dimensional test MDP with a closed-form value function.
//!
//! S = A = [0, 1]; the next state is s with probability 0.1 and a with
//! probability 0.9; c(s, a) = |s − 0.5|; γ = 0.9; χ = ν = Uniform[0, 1].
//! Noise value 0 means "stay", 1 means "move to a".

use serde::{Deserialize, Serialize};

use crate::bases::{BasisSet, FourierBasis};
use crate::error::{Error, Result};
use crate::mdp::{
    ActionValue, BoxBounds, DiscountedMdp, NoiseSupport, StateDistribution, StateVector,
};
use crate::policy::{GreedyPolicy, Policy, ValueFunction};

pub const TOY_GAMMA: f64 = 0.9;
pub const TOY_STAY: f64 = 0.1;
pub const TOY_STATE_GRID: usize = 1001;
pub const TOY_ACTION_GRID: usize = 101;
/// Column screen for toy LPs. Low-frequency cosines on `[0, 1]` span nearly
/// polynomial directions; finer screens let the LP use weights near 1e9,
/// whose evaluation round-off exceeds the guide-row tolerances.
pub const TOY_SCREEN_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMdp {
    state_box: BoxBounds,
    action_box: BoxBounds,
    noise: NoiseSupport,
    chi: StateDistribution,
}

pub fn build_toy() -> ToyMdp {
    let unit = BoxBounds::cube(1, 0.0, 1.0);
    ToyMdp {
        state_box: unit.clone(),
        action_box: unit.clone(),
        noise: NoiseSupport::Exact(vec![(0.0, TOY_STAY), (1.0, 1.0 - TOY_STAY)]),
        chi: StateDistribution::Uniform(unit),
    }
}

impl DiscountedMdp for ToyMdp {
    fn name(&self) -> String {
        "toy".into()
    }

    fn discount(&self) -> f64 {
        TOY_GAMMA
    }

    fn state_box(&self) -> &BoxBounds {
        &self.state_box
    }

    fn action_box(&self) -> &BoxBounds {
        &self.action_box
    }

    fn noise(&self) -> &NoiseSupport {
        &self.noise
    }

    fn cost(&self, s: &[f64], _a: &[f64], _noise: f64) -> f64 {
        (s[0] - 0.5).abs()
    }

    fn transition(&self, s: &[f64], a: &[f64], noise: f64) -> StateVector {
        if noise == 0.0 {
            s.to_vec()
        } else {
            a.to_vec()
        }
    }

    fn initial_dist(&self) -> &StateDistribution {
        &self.chi
    }

    fn relevance_dist(&self) -> &StateDistribution {
        &self.chi
    }

    fn cost_scale(&self) -> f64 {
        0.5
    }
}

/// V*(s) = |s − 0.5| / (1 − 0.1γ).
pub fn toy_value_function(s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("toy state {s} outside [0, 1]")));
    }
    Ok((s - 0.5).abs() / (1.0 - TOY_STAY * TOY_GAMMA))
}

/// Exact cost of always playing `a_star` from a uniform start:
/// (0.25 + (0.9γ/(1−γ))·|a* − 0.5|) / (1 − 0.1γ).
pub fn toy_constant_policy_cost(a_star: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a_star) {
        return Err(Error::Domain(format!("toy action {a_star} outside [0, 1]")));
    }
    let g = TOY_GAMMA;
    Ok((0.25 + ((1.0 - TOY_STAY) * g / (1.0 - g)) * (a_star - 0.5).abs()) / (1.0 - TOY_STAY * g))
}

/// V* as a [`ValueFunction`].
pub struct ToyOptimalValue;

impl ValueFunction for ToyOptimalValue {
    fn value(&self, s: &[f64]) -> f64 {
        (s[0] - 0.5).abs() / (1.0 - TOY_STAY * TOY_GAMMA)
    }

    fn expected_next_values(&self, s: &[f64], actions: &[ActionValue]) -> Vec<f64> {
        actions
            .iter()
            .map(|a| TOY_STAY * self.value(s) + (1.0 - TOY_STAY) * self.value(a))
            .collect()
    }

    fn mean(&self, dist: &StateDistribution) -> Result<f64> {
        match dist {
            StateDistribution::Uniform(b) if b.lower == [0.0] && b.upper == [1.0] => {
                Ok(0.25 / (1.0 - TOY_STAY * TOY_GAMMA))
            }
            StateDistribution::Atom(s) => Ok(self.value(s)),
            StateDistribution::Empirical(v) => {
                Ok(v.iter().map(|s| self.value(s)).sum::<f64>() / v.len() as f64)
            }
            StateDistribution::Uniform(_) => Err(Error::Parameter(
                "only the unit interval is supported".into(),
            )),
        }
    }
}

/// A scalar Fourier set `cos(θ s)` with the given frequencies.
pub fn toy_bases(thetas: &[f64]) -> BasisSet {
    BasisSet::from_fourier(
        1,
        thetas
            .iter()
            .map(|t| FourierBasis {
                q: 0.0,
                omega: vec![*t],
                sigma: 1.0,
            })
            .collect(),
    )
    .expect("scalar bases")
}

/// The greedy action of a toy VFA is the same at every state because the
/// lookahead reduces to min_a V(a); it is evaluated at s = 0.5.
pub fn toy_greedy_constant_action(
    mdp: &ToyMdp,
    value: &dyn ValueFunction,
    grid: usize,
) -> Result<f64> {
    let policy = GreedyPolicy::new(mdp, value, grid);
    Ok(policy.action(&[0.5])?[0])
}
