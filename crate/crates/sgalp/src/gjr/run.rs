//! The adaptive basis loop on a GJR instance.

use serde::{Deserialize, Serialize};

use super::alp::{constraint_generation, sample_pairs, BiasApprox, CutConfig};
use super::greedy::simulate_average_cost;
use super::GjrParams;
use crate::adaptive::{drive, Iterate, LoopConfig, LoopFailure, LoopTrace, ModelKind};
use crate::bases::{BasisSet, STUMP_EPS};
use crate::error::Result;
use crate::lp::SimplexBackend;
use crate::mdp::{ActionValue, StateVector};
use crate::rng::{stream, Purpose};

pub const LOOKAHEAD_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GjrRunConfig {
    pub init_pairs: usize,
    pub guide_states: usize,
    pub cut: CutConfig,
    pub sim_stages: usize,
    /// K
    pub horizon: usize,
    /// Grid points per item in the simulated policy's lookahead; `None`
    /// picks the largest count with at most [`LOOKAHEAD_BUDGET`] K-step plans.
    pub sim_points: Option<usize>,
    /// Stump threshold scale range; `None` means `[1, max s̄]`.
    pub sigma_range: Option<[f64; 2]>,
}

impl Default for GjrRunConfig {
    fn default() -> Self {
        Self {
            init_pairs: 200,
            guide_states: 5000,
            cut: CutConfig::default(),
            sim_stages: 4000,
            horizon: 4,
            sim_points: None,
            sigma_range: None,
        }
    }
}

impl GjrRunConfig {
    pub fn sim_points(&self, p: &GjrParams) -> usize {
        self.sim_points.unwrap_or_else(|| {
            let root =
                (LOOKAHEAD_BUDGET as f64).powf(1.0 / (p.items() * self.horizon.max(1)) as f64);
            (root.floor() as usize).max(2)
        })
    }

    pub fn sigma_range(&self, p: &GjrParams) -> [f64; 2] {
        self.sigma_range.unwrap_or([1.0, p.max_sbar().max(1.0)])
    }
}

/// Runs the loop with stump bases drawn from `seed`. The lower bound of an
/// iteration is η(λ), its policy cost the simulated K-step greedy average.
pub fn run_gjr(
    p: &GjrParams,
    loop_cfg: &LoopConfig,
    cfg: &GjrRunConfig,
    backend: &SimplexBackend,
    seed: u64,
) -> std::result::Result<LoopTrace, LoopFailure> {
    let mut bases = match BasisSet::stump(seed, p.items(), cfg.sigma_range(p), STUMP_EPS) {
        Ok(b) => b,
        Err(error) => {
            return Err(LoopFailure {
                error,
                partial: LoopTrace {
                    records: vec![],
                    weights: vec![],
                    stop: None,
                },
            })
        }
    };
    let mut pairs: Vec<(StateVector, ActionValue)> = sample_pairs(
        p,
        cfg.init_pairs,
        &mut stream(seed, Purpose::Constraints, 0),
    );
    let mut guides: Vec<StateVector> = {
        let mut rng = stream(seed, Purpose::Guides, 0);
        (0..cfg.guide_states)
            .map(|_| p.sample_state(&mut rng))
            .collect()
    };
    let mut prev: Option<BiasApprox> = None;
    drive(loop_cfg, None, |_, n| -> Result<Iterate> {
        bases.extend(n - bases.len());
        let guided = loop_cfg.model == ModelKind::Fglp && prev.is_some();
        let res = constraint_generation(
            p,
            &bases,
            &pairs,
            backend,
            if guided {
                prev.as_ref().map(|b| (b, guides.as_slice()))
            } else {
                None
            },
            &cfg.cut,
        )?;
        let guide_margin = match (&prev, guided) {
            (Some(old), true) => Some(
                res.guide_states
                    .iter()
                    .map(|s| res.approx.bias(&bases, s) - old.bias(&bases, s))
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        let pc = simulate_average_cost(
            p,
            &res.approx,
            &bases,
            cfg.sim_stages,
            cfg.horizon,
            cfg.sim_points(p),
        )?;
        let last_slack = res.trace.last().map_or(0.0, |r| r.slack);
        let it = Iterate {
            n,
            lp_value: res.lower_bound,
            lb: res.lower_bound,
            lb_stderr: 0.0,
            pc,
            pc_stderr: 0.0,
            weights: res.approx.to_vec(),
            max_violation_standard: (-last_slack).max(0.0),
            max_violation_self_guiding: res.max_violation_self_guiding,
            guide_margin,
            screened: 0,
            rows: res.pairs.len() + if guided { res.guide_states.len() } else { 0 },
        };
        pairs = res.pairs;
        if guided {
            guides = res.guide_states;
        }
        prev = Some(res.approx);
        Ok(it)
    })
}
