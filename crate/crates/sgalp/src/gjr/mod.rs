//! Generalized joint replenishment as a deterministic average-cost semi-MDP.
//!
//! J items are used at rates λ_j. A state `s ∈ [0, s̄]` has at least one
//! stocked-out item. An order `a ≥ 0` with `s + a ≤ s̄` and `Σa ≤ ā` lasts
//! `T(s, a) = min_j (s_j + a_j)/λ_j` and leads to `s' = s + a − Tλ`. The
//! cost is `c' + Σ_{j ∈ supp(a)} c''_j + Σ_j (2 s_j a_j + a_j²) h_j / (2λ_j)`.
//!
//! Decisions must order something and must restock every stocked-out item,
//! so that `T > 0`.

pub mod alp;
pub mod greedy;
pub mod run;

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{BoxBounds, SemiMdp, StateVector, BOX_TOL};

pub use alp::{
    approx_from_lp, build_avg_alp, constraint_generation, sample_pairs, separate, slack,
    BiasApprox, CutConfig, CutResult, CutTraceRow, Guide, SearchPlan, SeparationResult,
    SeparationStatus,
};
pub use greedy::{
    action_grid, k_step_greedy, plan_value, simulate_average_cost, simulate_from, GreedyPlan,
};
pub use run::{run_gjr, GjrRunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GjrParams {
    pub lambda: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub a_bar: f64,
    /// c'
    pub c_fixed: f64,
    /// c''_j
    pub c_item: Vec<f64>,
    pub holding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SbarScheme {
    Random,
    Constant,
    Discrete,
}

impl std::str::FromStr for SbarScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "constant" => Ok(Self::Constant),
            "discrete" => Ok(Self::Discrete),
            other => Err(Error::Parameter(format!("unknown s_bar scheme '{other}'"))),
        }
    }
}

pub const CAPACITY_PERCENTS: [u32; 6] = [50, 60, 67, 75, 80, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GjrSpec {
    pub items: usize,
    pub scheme: SbarScheme,
    /// z: ā is the sum of the smallest z% of the s̄_j.
    pub capacity_pct: u32,
}

impl GjrSpec {
    /// Parses `J:scheme:z`, for example `4:constant:75`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parameter(format!(
                "GJR spec '{text}' is not J:scheme:z"
            )));
        }
        let items = parts[0]
            .parse()
            .map_err(|_| Error::Parameter(format!("bad item count '{}'", parts[0])))?;
        let capacity_pct = parts[2]
            .parse()
            .map_err(|_| Error::Parameter(format!("bad capacity '{}'", parts[2])))?;
        let spec = Self {
            items,
            scheme: parts[1].parse()?,
            capacity_pct,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items < 2 {
            return Err(Error::Parameter("GJR needs at least two items".into()));
        }
        if !CAPACITY_PERCENTS.contains(&self.capacity_pct) {
            return Err(Error::Parameter(format!(
                "capacity {}% not in {CAPACITY_PERCENTS:?}",
                self.capacity_pct
            )));
        }
        Ok(())
    }
}

/// s̄ for a scheme given λ, u ∈ [0,1]^J and α ∈ {2,4,8}^J.
pub fn sbar_for_scheme(scheme: SbarScheme, lambda: &[f64], u: &[f64], alpha: &[f64]) -> Vec<f64> {
    let j = lambda.len() as f64;
    let common: f64 = lambda.iter().zip(u).map(|(l, u)| l * (u + 1.0 / j)).sum();
    match scheme {
        SbarScheme::Random => lambda
            .iter()
            .zip(u)
            .map(|(l, u)| 10.0 * l * u + l)
            .collect(),
        SbarScheme::Constant => vec![common; lambda.len()],
        SbarScheme::Discrete => alpha.iter().map(|a| a * common).collect(),
    }
}

/// Sum of the smallest `round(z·J/100)` (at least one) storage limits.
pub fn capacity_from_pct(s_bar: &[f64], pct: u32) -> f64 {
    let mut v = s_bar.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((pct as f64 * v.len() as f64 / 100.0).round() as usize).clamp(1, v.len());
    v[..k].iter().sum()
}

/// λ_j ~ U(0, 10], u_j ~ U[0, 1], α_j ~ U{2, 4, 8}, c' = 100, c''_j ~ U[0, 60], h = 0.
pub fn gjr_instance(spec: &GjrSpec, rng: &mut dyn RngCore) -> Result<GjrParams> {
    spec.validate()?;
    let n = spec.items;
    let lambda: Vec<f64> = (0..n).map(|_| 10.0 * (1.0 - rng.random::<f64>())).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let alpha: Vec<f64> = (0..n)
        .map(|_| [2.0, 4.0, 8.0][rng.random_range(0..3usize)])
        .collect();
    let c_item: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=60.0)).collect();
    let s_bar = sbar_for_scheme(spec.scheme, &lambda, &u, &alpha);
    let a_bar = capacity_from_pct(&s_bar, spec.capacity_pct);
    let p = GjrParams {
        lambda,
        s_bar,
        a_bar,
        c_fixed: 100.0,
        c_item,
        holding: vec![0.0; n],
    };
    p.validate()?;
    Ok(p)
}

impl GjrParams {
    pub fn items(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.items();
        if j < 2 {
            return Err(Error::Parameter("GJR needs at least two items".into()));
        }
        for (name, len) in [
            ("s_bar", self.s_bar.len()),
            ("c_item", self.c_item.len()),
            ("holding", self.holding.len()),
        ] {
            if len != j {
                return Err(Error::Parameter(format!(
                    "{name} has length {len}, expected {j}"
                )));
            }
        }
        if self
            .lambda
            .iter()
            .chain(&self.s_bar)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Parameter(
                "usage rates and storage limits must be positive".into(),
            ));
        }
        if !(self.a_bar > 0.0 && self.a_bar <= self.s_bar.iter().sum::<f64>() + BOX_TOL) {
            return Err(Error::Parameter("need 0 < a_bar <= sum of s_bar".into()));
        }
        if self.c_fixed < 0.0 || self.c_item.iter().chain(&self.holding).any(|c| *c < 0.0) {
            return Err(Error::Parameter("costs must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_sbar(&self) -> f64 {
        self.s_bar.iter().cloned().fold(0.0, f64::max)
    }

    pub fn in_state_space(&self, s: &[f64]) -> bool {
        s.len() == self.items()
            && s.iter()
                .zip(&self.s_bar)
                .all(|(v, b)| *v >= -BOX_TOL && *v <= b + BOX_TOL)
            && s.iter().any(|v| v.abs() <= BOX_TOL)
    }

    /// a ≥ 0, a ≠ 0, s + a ≤ s̄ and Σa ≤ ā.
    pub fn action_allowed(&self, s: &[f64], a: &[f64]) -> bool {
        a.len() == self.items()
            && a.iter().all(|v| *v >= 0.0)
            && a.iter().any(|v| *v > 0.0)
            && s.iter()
                .zip(a)
                .zip(&self.s_bar)
                .all(|((s, a), b)| s + a <= b + BOX_TOL)
            && a.iter().sum::<f64>() <= self.a_bar + BOX_TOL
    }

    #[inline]
    pub fn sojourn(&self, s: &[f64], a: &[f64]) -> f64 {
        s.iter()
            .zip(a)
            .zip(&self.lambda)
            .map(|((s, a), l)| (s + a) / l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Allowed and lasting a positive time.
    pub fn decision_feasible(&self, s: &[f64], a: &[f64]) -> bool {
        self.action_allowed(s, a) && self.sojourn(s, a) > 0.0
    }

    #[inline]
    pub fn cost_unchecked(&self, s: &[f64], a: &[f64]) -> f64 {
        let mut c = self.c_fixed;
        for j in 0..self.items() {
            if a[j] > 0.0 {
                c += self.c_item[j];
            }
            if self.holding[j] != 0.0 {
                c += (2.0 * s[j] * a[j] + a[j] * a[j]) * self.holding[j] / (2.0 * self.lambda[j]);
            }
        }
        c
    }

    pub fn state_box(&self) -> BoxBounds {
        BoxBounds {
            lower: vec![0.0; self.items()],
            upper: self.s_bar.clone(),
        }
    }

    /// Uniform state: a uniformly chosen item is stocked out, the others
    /// are uniform on [0, s̄_j].
    pub fn sample_state(&self, rng: &mut dyn RngCore) -> StateVector {
        let z = rng.random_range(0..self.items());
        (0..self.items())
            .map(|j| {
                if j == z {
                    0.0
                } else {
                    rng.random::<f64>() * self.s_bar[j]
                }
            })
            .collect()
    }

    /// A feasible decision at `s`: stocked-out items always ordered, others
    /// with probability 1/2, amounts uniform and scaled into the capacity.
    pub fn sample_action(&self, s: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let mut a: Vec<f64> = (0..self.items())
                .map(|j| {
                    let room = self.s_bar[j] - s[j];
                    let order = s[j] <= BOX_TOL || rng.random::<bool>();
                    if order && room > 0.0 {
                        room * (1.0 - rng.random::<f64>())
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = a.iter().sum();
            if total > self.a_bar {
                let f = self.a_bar / total;
                a.iter_mut().for_each(|v| *v *= f);
            }
            if self.decision_feasible(s, &a) {
                return a;
            }
        }
    }
}

/// (T, s') for a feasible decision.
pub fn gjr_step(p: &GjrParams, s: &[f64], a: &[f64]) -> Result<(f64, StateVector)> {
    if !p.action_allowed(s, a) {
        return Err(Error::Domain(format!(
            "infeasible GJR decision s={s:?}, a={a:?}"
        )));
    }
    let t = p.sojourn(s, a);
    if t <= 0.0 {
        return Err(Error::Domain(format!(
            "decision at s={s:?} leaves a stocked-out item empty"
        )));
    }
    Ok((t, next_state(p, s, a, t)))
}

#[inline]
pub(crate) fn next_state(p: &GjrParams, s: &[f64], a: &[f64], t: f64) -> StateVector {
    let mut out: Vec<f64> = (0..p.items())
        .map(|j| (s[j] + a[j] - t * p.lambda[j]).max(0.0))
        .collect();
    // the item that runs out first lands exactly on zero
    let k = (0..p.items())
        .min_by(|x, y| {
            ((s[*x] + a[*x]) / p.lambda[*x]).total_cmp(&((s[*y] + a[*y]) / p.lambda[*y]))
        })
        .expect("at least one item");
    out[k] = 0.0;
    out
}

pub fn gjr_cost(p: &GjrParams, s: &[f64], a: &[f64]) -> Result<f64> {
    if !p.action_allowed(s, a) {
        return Err(Error::Domain(format!(
            "infeasible GJR decision s={s:?}, a={a:?}"
        )));
    }
    Ok(p.cost_unchecked(s, a))
}

impl SemiMdp for GjrParams {
    fn state_box(&self) -> BoxBounds {
        GjrParams::state_box(self)
    }

    fn is_feasible(&self, s: &[f64], a: &[f64]) -> bool {
        self.decision_feasible(s, a)
    }

    fn cost(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        gjr_cost(self, s, a)
    }

    fn transition_time(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        gjr_step(self, s, a).map(|(t, _)| t)
    }

    fn transition(&self, s: &[f64], a: &[f64]) -> Result<StateVector> {
        gjr_step(self, s, a).map(|(_, s)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn step_examples() {
        let p = unit();
        let (t, s) = gjr_step(&p, &[0.0, 2.0], &[3.0, 0.0]).unwrap();
        assert_eq!((t, s), (2.0, vec![1.0, 0.0]));
        let (t, s) = gjr_step(&p, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!((t, s), (1.0, vec![0.0, 0.0]));
        let tight = GjrParams {
            a_bar: 2.0,
            ..unit()
        };
        assert!(gjr_step(&tight, &[0.0, 0.0], &[2.0, 1.0]).is_err());
        assert!(gjr_step(&p, &[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn cost_examples() {
        let p = unit();
        assert_eq!(gjr_cost(&p, &[0.0, 1.0], &[2.0, 0.0]).unwrap(), 110.0);
        assert!(gjr_cost(&p, &[0.0, 1.0], &[0.0, 0.0]).is_err());
        let h = GjrParams {
            lambda: vec![2.0, 1.0],
            holding: vec![1.0, 0.0],
            c_fixed: 0.0,
            c_item: vec![0.0, 0.0],
            ..unit()
        };
        assert!((gjr_cost(&h, &[1.0, 0.0], &[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scheme_examples() {
        let s = sbar_for_scheme(SbarScheme::Discrete, &[1.0, 1.0], &[0.5, 0.5], &[2.0, 4.0]);
        assert_eq!(s, vec![4.0, 8.0]);
        let mut rng = stream(3, Purpose::Instance, 0);
        let p = gjr_instance(
            &GjrSpec {
                items: 2,
                scheme: SbarScheme::Constant,
                capacity_pct: 100,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(p.s_bar[0], p.s_bar[1]);
        assert!((p.a_bar - p.s_bar.iter().sum::<f64>()).abs() < 1e-12);
        assert!(GjrSpec::parse("2:constant:55").is_err());
        assert!(GjrSpec::parse("1:constant:50").is_err());
        assert_eq!(GjrSpec::parse("4:discrete:75").unwrap().items, 4);
        assert_eq!(capacity_from_pct(&[3.0, 1.0, 2.0, 4.0], 50), 3.0);
    }

    #[test]
    fn next_state_has_a_stockout() {
        let mut rng = stream(9, Purpose::Misc, 0);
        let spec = GjrSpec {
            items: 4,
            scheme: SbarScheme::Random,
            capacity_pct: 75,
        };
        let p = gjr_instance(&spec, &mut rng).unwrap();
        for _ in 0..500 {
            let s = p.sample_state(&mut rng);
            assert!(p.in_state_space(&s));
            let a = p.sample_action(&s, &mut rng);
            let (t, s2) = gjr_step(&p, &s, &a).unwrap();
            assert!(t > 0.0);
            assert!(s2.iter().cloned().fold(f64::INFINITY, f64::min).abs() <= 1e-9);
            assert!(p.in_state_space(&s2));
        }
    }
}
