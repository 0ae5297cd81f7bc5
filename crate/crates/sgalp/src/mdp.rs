//! Problem contracts shared by every solver component: boxes, noise models,
//! state distributions, discounted MDPs and deterministic semi-MDPs.

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::error::{check_dim, Error, Result};
use crate::expectation::FeatureExpectation;

pub type StateVector = Vec<f64>;
pub type ActionValue = Vec<f64>;

/// Membership tolerance for closed boxes.
pub const BOX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Parameter(
                "box must have at least one coordinate".into(),
            ));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::Parameter(format!("bad interval [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - BOX_TOL && *v <= u + BOX_TOL)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                if self.width(j) == 0.0 {
                    self.lower[j]
                } else {
                    rng.random_range(self.lower[j]..=self.upper[j])
                }
            })
            .collect()
    }

    /// Equally spaced points per coordinate, endpoints included.
    pub fn axis(&self, j: usize, points: usize) -> Vec<f64> {
        if points <= 1 || self.width(j) == 0.0 {
            return vec![self.lower[j]];
        }
        let last = (points - 1) as f64;
        (0..points)
            .map(|k| {
                if k + 1 == points {
                    self.upper[j]
                } else {
                    self.lower[j] + self.width(j) * k as f64 / last
                }
            })
            .collect()
    }

    /// Full tensor grid in lexicographic order (first coordinate slowest).
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|j| self.axis(j, points)).collect();
        let mut out = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for v in axis {
                    let mut p = prefix.clone();
                    p.push(*v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    pub fn product(&self, other: &BoxBounds) -> BoxBounds {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        BoxBounds { lower, upper }
    }
}

/// Exogenous noise: either an exact finite law or a fixed sample set whose
/// points are equally weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseSupport {
    Exact(Vec<(f64, f64)>),
    Saa(Vec<f64>),
}

impl NoiseSupport {
    pub fn exact(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("empty noise support".into()));
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 || points.iter().any(|p| p.1 < 0.0) {
            return Err(Error::Parameter(format!(
                "noise probabilities sum to {total}"
            )));
        }
        Ok(Self::Exact(points))
    }

    pub fn saa(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("empty SAA sample set".into()));
        }
        Ok(Self::Saa(samples))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Exact(p) => p.len(),
            Self::Saa(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (value, probability) pairs.
    pub fn points(&self) -> Box<dyn Iterator<Item = (f64, f64)> + '_> {
        match self {
            Self::Exact(p) => Box::new(p.iter().copied()),
            Self::Saa(s) => {
                let w = 1.0 / s.len() as f64;
                Box::new(s.iter().map(move |v| (*v, w)))
            }
        }
    }

    /// Probability-weighted mean of `f` over the support. SAA sums are
    /// accumulated in sample order and divided once at the end.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        match self {
            Self::Exact(p) => p.iter().map(|(v, w)| w * f(*v)).sum(),
            Self::Saa(s) => s.iter().map(|v| f(*v)).sum::<f64>() / s.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateDistribution {
    Atom(StateVector),
    Uniform(BoxBounds),
    Empirical(Vec<StateVector>),
}

impl StateDistribution {
    pub fn sample(&self, rng: &mut dyn RngCore) -> StateVector {
        match self {
            Self::Atom(s) => s.clone(),
            Self::Uniform(b) => b.sample(rng),
            Self::Empirical(v) => v[rng.random_range(0..v.len())].clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Atom(s) => s.len(),
            Self::Uniform(b) => b.dim(),
            Self::Empirical(v) => v.first().map_or(0, |s| s.len()),
        }
    }

    /// Density with respect to Lebesgue measure, when one exists.
    pub fn density(&self, s: &[f64]) -> Option<f64> {
        match self {
            Self::Uniform(b) => Some(if b.contains(s) { 1.0 / b.volume() } else { 0.0 }),
            _ => None,
        }
    }
}

/// Discounted-cost MDP with noise passed explicitly to cost and transition.
pub trait DiscountedMdp: Sync {
    fn name(&self) -> String;
    fn discount(&self) -> f64;
    fn state_box(&self) -> &BoxBounds;
    fn action_box(&self) -> &BoxBounds;
    fn noise(&self) -> &NoiseSupport;
    fn cost(&self, s: &[f64], a: &[f64], noise: f64) -> f64;
    fn transition(&self, s: &[f64], a: &[f64], noise: f64) -> StateVector;
    fn initial_dist(&self) -> &StateDistribution;
    fn relevance_dist(&self) -> &StateDistribution;

    /// Draws noise for simulation. Defaults to sampling from `noise()`.
    fn sample_noise(&self, rng: &mut dyn RngCore) -> f64 {
        match self.noise() {
            NoiseSupport::Exact(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, w) in p {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                p[p.len() - 1].0
            }
            NoiseSupport::Saa(s) => s[rng.random_range(0..s.len())],
        }
    }

    fn state_dim(&self) -> usize {
        self.state_box().dim()
    }

    fn action_dim(&self) -> usize {
        self.action_box().dim()
    }

    fn is_feasible(&self, s: &[f64], a: &[f64]) -> bool {
        self.state_box().contains(s) && self.action_box().contains(a)
    }

    fn expected_cost(&self, s: &[f64], a: &[f64]) -> f64 {
        self.noise().expect(|d| self.cost(s, a, d))
    }

    /// Expected costs of several actions at one state.
    fn expected_costs(&self, s: &[f64], actions: &[ActionValue]) -> Vec<f64> {
        actions.iter().map(|a| self.expected_cost(s, a)).collect()
    }

    /// Largest per-stage cost magnitude, used for horizon reporting.
    fn cost_scale(&self) -> f64 {
        1.0
    }

    /// A specialised conditional-expectation engine for `bases`, if the
    /// problem has one. `None` selects the generic noise loop.
    fn feature_engine<'a>(
        &'a self,
        _bases: &'a BasisSet,
    ) -> Option<Box<dyn FeatureExpectation + 'a>> {
        None
    }
}

/// E[f(s') | s, a] under the MDP's noise support.
pub fn expected_basis_value(
    mdp: &dyn DiscountedMdp,
    s: &[f64],
    a: &[f64],
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    if !mdp.is_feasible(s, a) {
        return Err(Error::Domain(format!("infeasible pair s={s:?}, a={a:?}")));
    }
    Ok(mdp.noise().expect(|d| f(&mdp.transition(s, a, d))))
}

pub fn sample_initial_state(mdp: &dyn DiscountedMdp, rng: &mut dyn RngCore) -> StateVector {
    mdp.initial_dist().sample(rng)
}

/// Deterministic semi-MDP with action-dependent sojourn times.
pub trait SemiMdp: Sync {
    fn state_box(&self) -> BoxBounds;
    fn is_feasible(&self, s: &[f64], a: &[f64]) -> bool;
    fn cost(&self, s: &[f64], a: &[f64]) -> Result<f64>;
    fn transition_time(&self, s: &[f64], a: &[f64]) -> Result<f64>;
    fn transition(&self, s: &[f64], a: &[f64]) -> Result<StateVector>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_lexicographic() {
        let b = BoxBounds::cube(2, 0.0, 1.0);
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[1], vec![0.0, 0.5]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }

    #[test]
    fn exact_noise_must_sum_to_one() {
        assert!(NoiseSupport::exact(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(NoiseSupport::exact(vec![(0.0, 0.1), (1.0, 0.9)]).is_ok());
    }

    #[test]
    fn box_membership_uses_tolerance() {
        let b = BoxBounds::cube(1, 0.0, 1.0);
        assert!(b.contains(&[1.0 + 1e-10]));
        assert!(!b.contains(&[1.0 + 1e-6]));
    }
}
