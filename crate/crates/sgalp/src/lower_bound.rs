//! Saddle-point lower bound on the optimal discounted cost.
//!
//! For a VFA V and λ ∈ (0, 1],
//!
//! `PC(π*) ≥ E_Y[y(s, a)] + λ(Λ + d ln λ)`
//!
//! where `y(s, a) = E_χ[V] + (c(s, a) + γ E[V(s') | s, a] − V(s)) / (1 − γ)`,
//! `Y ∝ exp(−y/λ)` on S×A and
//!
//! `Λ = −ln[Γ(1 + d/2) (R√π)^(−d) vol(S×A)] − L_y (R + diam)`.
//!
//! E_Y[y] is estimated with Metropolis-Hastings chains.

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::lp::VfaWeights;
use crate::mdp::{BoxBounds, DiscountedMdp};
use crate::pic::PicParams;
use crate::policy::{mean_stderr, ValueFunction};
use crate::rng::{stream, Purpose};

fn default_chains() -> usize {
    8
}
fn default_chain_length() -> usize {
    1500
}
fn default_burn_in() -> usize {
    1000
}
fn default_step_fraction() -> f64 {
    0.05
}
fn default_init_draws() -> usize {
    1000
}
fn default_init_lattice() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleConfig {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_chain_length")]
    pub chain_length: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// `None` selects `1 / (|Λ| + d)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Random-walk step as a fraction of each box width.
    #[serde(default = "default_step_fraction")]
    pub step_fraction: f64,
    /// Explicit per-dimension steps; overrides `step_fraction`.
    #[serde(default)]
    pub steps: Option<Vec<f64>>,
    /// Each chain starts at the lowest-energy point of this many uniform
    /// feasible draws; 1 is a plain uniform start.
    #[serde(default = "default_init_draws")]
    pub init_draws: usize,
    /// Points per axis of a box lattice (ends included) added to every
    /// chain's candidate starts; 0 disables. y is often smallest on the
    /// boundary, which a reflected walk from the interior rarely reaches.
    #[serde(default = "default_init_lattice")]
    pub init_lattice: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            chains: default_chains(),
            chain_length: default_chain_length(),
            burn_in: default_burn_in(),
            lambda: None,
            step_fraction: default_step_fraction(),
            steps: None,
            init_draws: default_init_draws(),
            init_lattice: default_init_lattice(),
            seed: 0,
        }
    }
}

impl SaddleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.chain_length == 0 || self.init_draws == 0 {
            return Err(Error::Parameter(
                "chains, chain_length and init_draws must be positive".into(),
            ));
        }
        if self.burn_in >= self.chain_length {
            return Err(Error::Parameter(
                "burn_in must be below chain_length".into(),
            ));
        }
        if self.init_lattice == 1 {
            return Err(Error::Parameter(
                "init_lattice must be 0 or at least 2".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::Parameter(format!("lambda {l} not in (0, 1]")));
            }
        }
        if let Some(s) = &self.steps {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Parameter("proposal steps must be positive".into()));
            }
        } else if !(self.step_fraction > 0.0 && self.step_fraction.is_finite()) {
            return Err(Error::Parameter("step_fraction must be positive".into()));
        }
        Ok(())
    }

    fn step_sizes(&self, sa_box: &BoxBounds) -> Result<Vec<f64>> {
        match &self.steps {
            Some(s) if s.len() != sa_box.dim() => Err(Error::Dimension {
                expected: sa_box.dim(),
                got: s.len(),
            }),
            Some(s) => Ok(s.clone()),
            None => Ok((0..sa_box.dim())
                .map(|j| self.step_fraction * sa_box.width(j))
                .collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub l_c: f64,
    pub l_y: f64,
    /// Λ
    pub big_lambda: f64,
    pub d_sa: usize,
    pub radius: f64,
    pub diameter: f64,
    /// Volume of S×A.
    pub volume: f64,
}

impl LipschitzConstants {
    pub fn new(
        l_c: f64,
        l_y: f64,
        d_sa: usize,
        radius: f64,
        diameter: f64,
        volume: f64,
    ) -> Result<Self> {
        if !(radius > 0.0 && volume > 0.0 && diameter.is_finite() && l_y.is_finite() && d_sa > 0) {
            return Err(Error::Parameter(
                "need R > 0, vol > 0, finite L_y and diam, d > 0".into(),
            ));
        }
        let d = d_sa as f64;
        let log_term =
            ln_gamma(1.0 + d / 2.0) - d * (radius * std::f64::consts::PI.sqrt()).ln() + volume.ln();
        let big_lambda = -log_term - l_y * (radius + diameter);
        Ok(Self {
            l_c,
            l_y,
            big_lambda,
            d_sa,
            radius,
            diameter,
            volume,
        })
    }

    /// `1 / (|Λ| + d)`; equal to `1 / (Λ + d)` whenever Λ ≥ 0.
    pub fn default_lambda(&self) -> f64 {
        (1.0 / (self.big_lambda.abs() + self.d_sa as f64)).min(1.0)
    }

    /// λ(Λ + d ln λ).
    pub fn correction(&self, lambda: f64) -> f64 {
        lambda * (self.big_lambda + self.d_sa as f64 * lambda.ln())
    }
}

/// `L_y = (4‖β‖₁ + L_c) / (1 − γ)`.
pub fn lipschitz_y(l_c: f64, beta_l1: f64, gamma: f64) -> f64 {
    (4.0 * beta_l1 + l_c) / (1.0 - gamma)
}

/// `L_c = 2(γ^L c_o ā + c_h ā + c_b s̲ + c_d ā + c_l ā)`, with the c_b term as printed.
pub fn pic_cost_lipschitz(p: &PicParams) -> f64 {
    let a = p.a_max;
    2.0 * (p.gamma.powi(p.lead as i32) * p.c_o * a
        + p.c_h * a
        + p.c_b * p.s_min
        + p.c_d * a
        + p.c_l * a)
}

/// d = 4, R = ā/2, diam = 3ā² + (s̲ − ā)², vol = (ā − s̲)ā³.
pub fn pic_constants(p: &PicParams, w: &VfaWeights) -> Result<LipschitzConstants> {
    let a = p.a_max;
    let l_c = pic_cost_lipschitz(p);
    let l_y = lipschitz_y(l_c, w.l1_norm(), p.gamma);
    LipschitzConstants::new(
        l_c,
        l_y,
        4,
        a / 2.0,
        3.0 * a * a + (p.s_min - a).powi(2),
        (a - p.s_min) * a.powi(3),
    )
}

/// Unit square S×A; |s − 0.5| is 1-Lipschitz. `value_lipschitz` bounds
/// the VFA's slope.
pub fn toy_constants(value_lipschitz: f64, gamma: f64) -> Result<LipschitzConstants> {
    let l_y = lipschitz_y(1.0, value_lipschitz, gamma);
    LipschitzConstants::new(1.0, l_y, 2, 0.5, std::f64::consts::SQRT_2, 1.0)
}

/// y(s, a) for a value function.
pub fn y_value(
    mdp: &dyn DiscountedMdp,
    value: &dyn ValueFunction,
    s: &[f64],
    a: &[f64],
) -> Result<f64> {
    if !mdp.is_feasible(s, a) {
        return Err(Error::Domain(format!("infeasible pair s={s:?}, a={a:?}")));
    }
    let mean = value.mean(mdp.initial_dist())?;
    Ok(y_unchecked(mdp, value, mean, s, a))
}

fn y_unchecked(
    mdp: &dyn DiscountedMdp,
    value: &dyn ValueFunction,
    chi_mean: f64,
    s: &[f64],
    a: &[f64],
) -> f64 {
    let gamma = mdp.discount();
    let a = vec![a.to_vec()];
    let c = mdp.expected_costs(s, &a)[0];
    let next = value.expected_next_values(s, &a)[0];
    chi_mean + (c + gamma * next - value.value(s)) / (1.0 - gamma)
}

/// Result of one Metropolis-Hastings chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain<T> {
    pub samples: Vec<T>,
    pub energies: Vec<f64>,
    pub accepted: usize,
    /// Proposals that landed in the support, accepted or not.
    pub in_support: usize,
}

/// Metropolis-Hastings with a symmetric proposal targeting `exp(−energy/λ)`.
/// `energy` returns `None` outside the support, which always rejects.
/// Acceptance is tested in log space: accept when `ln u < (y_old − y_new)/λ`.
pub fn metropolis_chain<T: Clone>(
    init: T,
    mut propose: impl FnMut(&T, &mut dyn RngCore) -> T,
    energy: impl Fn(&T) -> Option<f64>,
    lambda: f64,
    length: usize,
    rng: &mut dyn RngCore,
) -> Result<Chain<T>> {
    let mut cur_e =
        energy(&init).ok_or_else(|| Error::Domain("chain starts outside the support".into()))?;
    let mut cur = init;
    let mut out = Chain {
        samples: Vec::with_capacity(length),
        energies: Vec::with_capacity(length),
        accepted: 0,
        in_support: 0,
    };
    for _ in 0..length {
        let cand = propose(&cur, rng);
        if let Some(e) = energy(&cand) {
            out.in_support += 1;
            let u: f64 = rng.random();
            if u.ln() < (cur_e - e) / lambda {
                cur = cand;
                cur_e = e;
                out.accepted += 1;
            }
        }
        out.samples.push(cur.clone());
        out.energies.push(cur_e);
    }
    Ok(out)
}

/// Gaussian random walk reflected into the box.
pub fn reflected_step(
    bounds: &BoxBounds,
    steps: &[f64],
    x: &[f64],
    rng: &mut dyn RngCore,
) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(j, v)| {
            let z: f64 = StandardNormal.sample(rng);
            reflect(v + steps[j] * z, bounds.lower[j], bounds.upper[j])
        })
        .collect()
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    // fold onto [lo, lo + 2w) then mirror the upper half
    x = (x - lo).rem_euclid(2.0 * w);
    if x > w {
        x = 2.0 * w - x;
    }
    lo + x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundEstimate {
    pub bound: f64,
    pub stderr: f64,
    pub mean_y: f64,
    pub correction: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub acceptance: Vec<f64>,
    pub samples_used: usize,
}

/// E_Y[energy] + λ(Λ + d ln λ) over `sa_box`. Each chain starts at the best
/// of `init_draws` independent uniform draws and the `init_lattice` points:
/// with the default λ the target is nearly a point mass at the minimum of y,
/// and a random walk from a single uniform start stalls in a local minimum. Chains run in parallel; chain k uses its own
/// stream so the result does not depend on scheduling.
pub fn saddle_bound(
    sa_box: &BoxBounds,
    energy: &(dyn Fn(&[f64]) -> Option<f64> + Sync),
    cfg: &SaddleConfig,
    consts: &LipschitzConstants,
) -> Result<LowerBoundEstimate> {
    cfg.validate()?;
    if consts.d_sa != sa_box.dim() {
        return Err(Error::Dimension {
            expected: sa_box.dim(),
            got: consts.d_sa,
        });
    }
    let lambda = cfg.lambda.unwrap_or_else(|| consts.default_lambda());
    let steps = cfg.step_sizes(sa_box)?;
    let lattice: Vec<(Vec<f64>, f64)> = if cfg.init_lattice >= 2 {
        sa_box
            .grid(cfg.init_lattice)
            .into_iter()
            .filter_map(|x| energy(&x).map(|e| (x, e)))
            .collect()
    } else {
        Vec::new()
    };
    let lattice_best = lattice
        .into_iter()
        .fold(None::<(Vec<f64>, f64)>, |b, c| match b {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        });
    let chains: Vec<Chain<Vec<f64>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(cfg.seed, Purpose::Chains, k as u64);
            let mut init: Option<(Vec<f64>, f64)> = lattice_best.clone();
            let (mut found, mut tries) = (0, 0);
            while found < cfg.init_draws {
                tries += 1;
                if tries > 10_000 * cfg.init_draws {
                    return Err(Error::Diagnostic("no feasible chain start found".into()));
                }
                let x = sa_box.sample(&mut rng);
                if let Some(e) = energy(&x) {
                    found += 1;
                    if init.as_ref().is_none_or(|(_, b)| e < *b) {
                        init = Some((x, e));
                    }
                }
            }
            let init = init.expect("at least one draw").0;
            metropolis_chain(
                init,
                |x, r| reflected_step(sa_box, &steps, x, r),
                |x| energy(x),
                lambda,
                cfg.chain_length,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    // a chain parked at a local minimum rejects everything at small λ; only
    // a proposal that never reaches the support is degenerate
    if chains.iter().all(|c| c.accepted == 0 && c.in_support == 0) {
        return Err(Error::Diagnostic(
            "every Metropolis-Hastings proposal fell outside the support".into(),
        ));
    }
    let chain_means: Vec<f64> = chains
        .iter()
        .map(|c| {
            let kept = &c.energies[cfg.burn_in..];
            kept.iter().sum::<f64>() / kept.len() as f64
        })
        .collect();
    let (mean_y, stderr) = mean_stderr(&chain_means);
    let correction = consts.correction(lambda);
    Ok(LowerBoundEstimate {
        bound: mean_y + correction,
        stderr,
        mean_y,
        correction,
        lambda,
        big_lambda: consts.big_lambda,
        acceptance: chains
            .iter()
            .map(|c| c.accepted as f64 / cfg.chain_length as f64)
            .collect(),
        samples_used: cfg.chains * (cfg.chain_length - cfg.burn_in),
    })
}

/// The saddle-point bound for `value` on `mdp`.
pub fn estimate_lower_bound(
    mdp: &dyn DiscountedMdp,
    value: &dyn ValueFunction,
    cfg: &SaddleConfig,
    consts: &LipschitzConstants,
) -> Result<LowerBoundEstimate> {
    let sa_box = mdp.state_box().product(mdp.action_box());
    let ds = mdp.state_dim();
    let chi_mean = value.mean(mdp.initial_dist())?;
    let energy = |x: &[f64]| {
        let (s, a) = x.split_at(ds);
        mdp.is_feasible(s, a)
            .then(|| y_unchecked(mdp, value, chi_mean, s, a))
    };
    saddle_bound(&sa_box, &energy, cfg, consts)
}
