//! Perishable inventory control with product life l = 2 and lead time L = 2.
//!
//! State `(s0, s1, p1)`: on-hand units expiring this period (negative values
//! are backlog), on-hand units expiring next period, and the outstanding
//! order. Action `a ∈ [0, ā]` is the new order. With demand D,
//!
//! `s' = (max{s1 − (D − s0)₊, s̲}, p1, a)`
//!
//! `c(s, a) = γ² c_o a + E_D[ c_h (s1 − (D − s0)₊)₊ + c_d (s0 − D)₊
//!            + c_b (D − s0 − s1)₊ + c_l (s̲ + D − s0 − s1)₊ ]`
//!
//! For general l the first component is `max{s1 − (D − s0)₊, s̲ − Σ_{i=2}^{l−1} s_i}`;
//! only l = 2 is implemented, where the sum is empty.

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bases::{Basis, BasisKind, BasisSet};
use crate::error::{Error, Result};
use crate::expectation::FeatureExpectation;
use crate::mdp::{
    ActionValue, BoxBounds, DiscountedMdp, NoiseSupport, StateDistribution, StateVector,
};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub sd: f64,
}

impl DemandSpec {
    pub const CATALOG: DemandSpec = DemandSpec {
        lower: 0.0,
        upper: 10.0,
        mean: 5.0,
        sd: 2.0,
    };

    /// Inverse-CDF draw from the normal law truncated to [lower, upper].
    pub fn quantile(&self, u: f64) -> f64 {
        let n = Normal::new(0.0, 1.0).expect("standard normal");
        let fa = n.cdf((self.lower - self.mean) / self.sd);
        let fb = n.cdf((self.upper - self.mean) / self.sd);
        let x = self.mean + self.sd * n.inverse_cdf(fa + u * (fb - fa));
        x.clamp(self.lower, self.upper)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicParams {
    pub id: Option<usize>,
    pub life: usize,
    pub lead: usize,
    pub c_o: f64,
    pub c_h: f64,
    pub c_d: f64,
    pub c_b: f64,
    pub c_l: f64,
    pub a_max: f64,
    pub s_min: f64,
    pub gamma: f64,
    pub demand: DemandSpec,
}

/// (c_o, c_h, c_d, c_b, ā, s̲, γ) for instances 1..=16.
const TABLE: [(f64, f64, f64, f64, f64, f64, f64); 16] = [
    (20.0, 2.0, 5.0, 10.0, 10.0, -10.0, 0.95),
    (20.0, 2.0, 5.0, 10.0, 10.0, -10.0, 0.99),
    (20.0, 5.0, 10.0, 8.0, 10.0, -10.0, 0.95),
    (20.0, 5.0, 10.0, 8.0, 10.0, -10.0, 0.99),
    (20.0, 2.0, 10.0, 10.0, 10.0, -10.0, 0.95),
    (20.0, 2.0, 10.0, 10.0, 10.0, -10.0, 0.99),
    (20.0, 2.0, 10.0, 10.0, 30.0, -30.0, 0.95),
    (20.0, 2.0, 10.0, 10.0, 30.0, -30.0, 0.99),
    (16.0, 5.0, 8.0, 8.0, 30.0, -30.0, 0.95),
    (16.0, 5.0, 8.0, 8.0, 30.0, -30.0, 0.99),
    (20.0, 5.0, 10.0, 8.0, 50.0, -50.0, 0.95),
    (20.0, 5.0, 10.0, 8.0, 50.0, -50.0, 0.99),
    (20.0, 2.0, 5.0, 10.0, 50.0, -50.0, 0.95),
    (20.0, 2.0, 5.0, 10.0, 50.0, -50.0, 0.99),
    (20.0, 2.0, 12.0, 6.0, 50.0, -50.0, 0.95),
    (20.0, 2.0, 12.0, 6.0, 50.0, -50.0, 0.99),
];

pub const LOST_SALES_COST: f64 = 100.0;

pub fn instance_from_table(id: usize) -> Result<PicParams> {
    if !(1..=16).contains(&id) {
        return Err(Error::Parameter(format!("instance id {id} not in 1..=16")));
    }
    let (c_o, c_h, c_d, c_b, a_max, s_min, gamma) = TABLE[id - 1];
    Ok(PicParams {
        id: Some(id),
        life: 2,
        lead: 2,
        c_o,
        c_h,
        c_d,
        c_b,
        c_l: LOST_SALES_COST,
        a_max,
        s_min,
        gamma,
        demand: DemandSpec::CATALOG,
    })
}

/// The full catalog as a JSON array.
pub fn catalog_json() -> Result<String> {
    let all: Vec<PicParams> = (1..=16).map(instance_from_table).collect::<Result<_>>()?;
    Ok(serde_json::to_string_pretty(&all)?)
}

impl PicParams {
    pub fn validate(&self) -> Result<()> {
        if self.life != 2 || self.lead != 2 {
            return Err(Error::Parameter("only l = L = 2 is supported".into()));
        }
        if !(self.s_min <= 0.0 && self.a_max >= 0.0 && self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter(
                "need s_min <= 0 <= a_max and gamma in (0,1)".into(),
            ));
        }
        for c in [self.c_o, self.c_h, self.c_d, self.c_b, self.c_l] {
            if c < 0.0 {
                return Err(Error::Parameter(
                    "per-unit costs must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn state_box(&self) -> BoxBounds {
        BoxBounds {
            lower: vec![self.s_min, 0.0, 0.0],
            upper: vec![self.a_max; 3],
        }
    }

    pub fn action_box(&self) -> BoxBounds {
        BoxBounds {
            lower: vec![0.0],
            upper: vec![self.a_max],
        }
    }

    /// Demand-dependent part of the stage cost.
    #[inline]
    pub fn demand_cost(&self, s: &[f64], d: f64) -> f64 {
        let (s0, s1) = (s[0], s[1]);
        self.c_h * (s1 - (d - s0).max(0.0)).max(0.0)
            + self.c_d * (s0 - d).max(0.0)
            + self.c_b * (d - s0 - s1).max(0.0)
            + self.c_l * (self.s_min + d - s0 - s1).max(0.0)
    }

    #[inline]
    pub fn order_cost(&self, a: f64) -> f64 {
        self.gamma.powi(self.lead as i32) * self.c_o * a
    }

    /// Rough per-stage cost ceiling over the state box.
    pub fn cost_ceiling(&self) -> f64 {
        let span = self.demand.upper + self.a_max - self.s_min;
        self.order_cost(self.a_max)
            + (self.c_h + self.c_d) * self.a_max
            + (self.c_b + self.c_l) * span
    }
}

pub fn pic_transition(p: &PicParams, s: &[f64], a: &[f64], d: f64) -> StateVector {
    vec![(s[1] - (d - s[0]).max(0.0)).max(p.s_min), s[2], a[0]]
}

/// γ^L c_o a plus the sample mean of the demand-dependent penalties.
pub fn pic_cost(p: &PicParams, s: &[f64], a: &[f64], demand_samples: &[f64]) -> Result<f64> {
    if demand_samples.is_empty() {
        return Err(Error::Parameter("no demand samples".into()));
    }
    let part: f64 = demand_samples
        .iter()
        .map(|d| p.demand_cost(s, *d))
        .sum::<f64>()
        / demand_samples.len() as f64;
    Ok(p.order_cost(a[0]) + part)
}

pub fn sample_state_action(p: &PicParams, rng: &mut dyn RngCore) -> (StateVector, ActionValue) {
    (p.state_box().sample(rng), p.action_box().sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicMdp {
    pub params: PicParams,
    state_box: BoxBounds,
    action_box: BoxBounds,
    noise: NoiseSupport,
    chi: StateDistribution,
}

pub const PIC_START: [f64; 3] = [5.0, 5.0, 5.0];

impl PicMdp {
    /// Builds the MDP with `saa_size` demand samples drawn from `seed`.
    pub fn new(params: PicParams, saa_size: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        if saa_size == 0 {
            return Err(Error::Parameter("SAA size must be positive".into()));
        }
        let mut rng = stream(seed, Purpose::Demand, 0);
        let samples: Vec<f64> = (0..saa_size)
            .map(|_| params.demand.sample(&mut rng))
            .collect();
        Self::with_samples(params, samples)
    }

    pub fn with_samples(params: PicParams, samples: Vec<f64>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            state_box: params.state_box(),
            action_box: params.action_box(),
            noise: NoiseSupport::saa(samples)?,
            chi: StateDistribution::Atom(PIC_START.to_vec()),
            params,
        })
    }

    pub fn demand_samples(&self) -> &[f64] {
        match &self.noise {
            NoiseSupport::Saa(s) => s,
            NoiseSupport::Exact(_) => unreachable!("PIC uses SAA demand"),
        }
    }
}

impl DiscountedMdp for PicMdp {
    fn name(&self) -> String {
        match self.params.id {
            Some(id) => format!("pic:{id}"),
            None => "pic:custom".into(),
        }
    }

    fn discount(&self) -> f64 {
        self.params.gamma
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

    fn cost(&self, s: &[f64], a: &[f64], d: f64) -> f64 {
        self.params.order_cost(a[0]) + self.params.demand_cost(s, d)
    }

    fn transition(&self, s: &[f64], a: &[f64], d: f64) -> StateVector {
        pic_transition(&self.params, s, a, d)
    }

    fn initial_dist(&self) -> &StateDistribution {
        &self.chi
    }

    fn relevance_dist(&self) -> &StateDistribution {
        &self.chi
    }

    /// Rollouts draw fresh demand from the truncated normal law.
    fn sample_noise(&self, rng: &mut dyn RngCore) -> f64 {
        self.params.demand.sample(rng)
    }

    fn expected_costs(&self, s: &[f64], actions: &[ActionValue]) -> Vec<f64> {
        let d = self.demand_samples();
        let part = d
            .iter()
            .map(|x| self.params.demand_cost(s, *x))
            .sum::<f64>()
            / d.len() as f64;
        actions
            .iter()
            .map(|a| self.params.order_cost(a[0]) + part)
            .collect()
    }

    fn cost_scale(&self) -> f64 {
        self.params.cost_ceiling()
    }

    fn feature_engine<'a>(
        &'a self,
        bases: &'a BasisSet,
    ) -> Option<Box<dyn FeatureExpectation + 'a>> {
        (bases.kind == BasisKind::Fourier && bases.state_dim == 3).then(|| {
            Box::new(PicFourierEngine::new(self, bases)) as Box<dyn FeatureExpectation + 'a>
        })
    }
}

/// Next-state Fourier expectations in O(N log M) per state.
///
/// The first next-state coordinate is piecewise linear in D:
/// `s1` for D ≤ s0, `s0 + s1 − D` for s0 < D < s0 + s1 − s̲, and `s̲` beyond.
/// With the demand samples sorted, E[exp(i ω0 x(D))] needs only prefix sums
/// of cos(ω0 D) and sin(ω0 D) per basis; the other two coordinates
/// (p1, a) are deterministic.
pub struct PicFourierEngine<'a> {
    bases: &'a BasisSet,
    s_min: f64,
    sorted: Vec<f64>,
    /// Per basis, M + 1 prefix sums.
    pre_cos: Vec<Vec<f64>>,
    pre_sin: Vec<Vec<f64>>,
}

impl<'a> PicFourierEngine<'a> {
    pub fn new(mdp: &PicMdp, bases: &'a BasisSet) -> Self {
        let mut sorted = mdp.demand_samples().to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut pre_cos = Vec::with_capacity(bases.len());
        let mut pre_sin = Vec::with_capacity(bases.len());
        for e in &bases.entries {
            let w0 = match e {
                Basis::Fourier(f) => f.omega[0],
                Basis::Stump(_) => unreachable!("engine is built for Fourier sets only"),
            };
            let mut c = Vec::with_capacity(sorted.len() + 1);
            let mut s = Vec::with_capacity(sorted.len() + 1);
            let (mut ac, mut asn) = (0.0, 0.0);
            c.push(0.0);
            s.push(0.0);
            for d in &sorted {
                let (sn, cs) = (w0 * d).sin_cos();
                ac += cs;
                asn += sn;
                c.push(ac);
                s.push(asn);
            }
            pre_cos.push(c);
            pre_sin.push(s);
        }
        Self {
            bases,
            s_min: mdp.params.s_min,
            sorted,
            pre_cos,
            pre_sin,
        }
    }

    /// E[exp(i ω0 x(D))] for every basis, as (re, im) pairs.
    fn first_coord_moments(&self, s: &[f64]) -> Vec<(f64, f64)> {
        let (s0, s1) = (s[0], s[1]);
        let m = self.sorted.len();
        let k1 = self.sorted.partition_point(|d| *d <= s0);
        let hi = s0 + s1 - self.s_min;
        let k2 = self.sorted.partition_point(|d| *d < hi).max(k1);
        let (n_low, n_high) = (k1 as f64, (m - k2) as f64);
        let inv_m = 1.0 / m as f64;
        self.bases
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let w0 = match e {
                    Basis::Fourier(f) => f.omega[0],
                    Basis::Stump(_) => unreachable!(),
                };
                let (sl, cl) = (w0 * s1).sin_cos();
                let (sh, ch) = (w0 * self.s_min).sin_cos();
                let (sm, cm) = (w0 * (s0 + s1)).sin_cos();
                let sc = self.pre_cos[i][k2] - self.pre_cos[i][k1];
                let ss = self.pre_sin[i][k2] - self.pre_sin[i][k1];
                // e^{iω0(s0+s1)} · Σ e^{−iω0 D} = (cm + i sm)(sc − i ss)
                let mid_re = cm * sc + sm * ss;
                let mid_im = sm * sc - cm * ss;
                (
                    (n_low * cl + mid_re + n_high * ch) * inv_m,
                    (n_low * sl + mid_im + n_high * sh) * inv_m,
                )
            })
            .collect()
    }
}

impl FeatureExpectation for PicFourierEngine<'_> {
    fn expected_features(&self, s: &[f64], a: &[f64], out: &mut [f64]) {
        self.expected_features_many(s, std::slice::from_ref(&a.to_vec()), self.bases.len(), out);
    }

    fn expected_features_many(
        &self,
        s: &[f64],
        actions: &[ActionValue],
        n: usize,
        out: &mut [f64],
    ) {
        let moments = self.first_coord_moments(s);
        for (i, e) in self.bases.entries.iter().enumerate() {
            let Basis::Fourier(f) = e else { unreachable!() };
            let (mre, mim) = moments[i];
            let base = f.q + f.omega[1] * s[2];
            for (k, a) in actions.iter().enumerate() {
                let (sp, cp) = (base + f.omega[2] * a[0]).sin_cos();
                // Re(e^{iθ} m)
                out[k * n + i] = cp * mre - sp * mim;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::sample_fourier;
    use crate::expectation::GenericExpectation;
    use crate::mdp::expected_basis_value;

    #[test]
    fn catalog_rows() {
        let p = instance_from_table(1).unwrap();
        assert_eq!(
            (p.c_o, p.c_h, p.c_d, p.c_b, p.a_max, p.s_min, p.gamma),
            (20.0, 2.0, 5.0, 10.0, 10.0, -10.0, 0.95)
        );
        let p = instance_from_table(16).unwrap();
        assert_eq!(
            (p.c_o, p.c_h, p.c_d, p.c_b, p.a_max, p.s_min, p.gamma),
            (20.0, 2.0, 12.0, 6.0, 50.0, -50.0, 0.99)
        );
        assert_eq!(p.c_l, 100.0);
        assert!(instance_from_table(0).is_err());
        assert!(instance_from_table(17).is_err());
    }

    #[test]
    fn transition_examples() {
        let p = instance_from_table(1).unwrap();
        assert_eq!(
            pic_transition(&p, &[5.0, 5.0, 5.0], &[3.0], 7.0),
            vec![3.0, 5.0, 3.0]
        );
        assert_eq!(
            pic_transition(&p, &[5.0, 5.0, 5.0], &[3.0], 0.0),
            vec![5.0, 5.0, 3.0]
        );
        assert_eq!(
            pic_transition(&p, &[-10.0, 0.0, 0.0], &[0.0], 10.0),
            vec![-10.0, 0.0, 0.0]
        );
    }

    #[test]
    fn cost_examples() {
        let p = instance_from_table(1).unwrap();
        assert!((pic_cost(&p, &[5.0, 5.0, 5.0], &[5.0], &[5.0]).unwrap() - 100.25).abs() < 1e-12);
        assert_eq!(pic_cost(&p, &[0.0, 0.0, 0.0], &[0.0], &[0.0]).unwrap(), 0.0);
        assert!((pic_cost(&p, &[0.0, 0.0, 0.0], &[0.0], &[10.0]).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn saa_expectation_example() {
        let p = instance_from_table(1).unwrap();
        let mdp = PicMdp::with_samples(p, vec![3.0, 5.0, 7.0]).unwrap();
        let e = expected_basis_value(&mdp, &[5.0, 5.0, 5.0], &[3.0], |s| s[0]).unwrap();
        assert!((e - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn start_state_is_fixed() {
        let mdp = PicMdp::new(instance_from_table(3).unwrap(), 10, 1).unwrap();
        for seed in 0..5 {
            let mut rng = stream(seed, Purpose::Misc, 0);
            assert_eq!(
                crate::mdp::sample_initial_state(&mdp, &mut rng),
                vec![5.0, 5.0, 5.0]
            );
        }
    }

    #[test]
    fn demand_draws_stay_in_range() {
        let mdp = PicMdp::new(instance_from_table(1).unwrap(), 2000, 4).unwrap();
        let d = mdp.demand_samples();
        assert!(d.iter().all(|x| (0.0..=10.0).contains(x)));
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 5.0).abs() < 0.2);
    }

    #[test]
    fn fast_engine_matches_generic() {
        for id in [1, 7, 12] {
            let p = instance_from_table(id).unwrap();
            let mdp = PicMdp::new(p.clone(), 300, 9).unwrap();
            let bases = sample_fourier(12, 3, [1.0, 20.0], 5).unwrap();
            let fast = PicFourierEngine::new(&mdp, &bases);
            let slow = GenericExpectation {
                mdp: &mdp,
                bases: &bases,
            };
            let mut rng = stream(3, Purpose::Misc, id as u64);
            for _ in 0..50 {
                let (s, a) = sample_state_action(&p, &mut rng);
                let mut x = vec![0.0; 12];
                let mut y = vec![0.0; 12];
                fast.expected_features(&s, &a, &mut x);
                slow.expected_features(&s, &a, &mut y);
                for i in 0..12 {
                    assert!(
                        (x[i] - y[i]).abs() < 1e-10,
                        "{id} {i}: {} vs {}",
                        x[i],
                        y[i]
                    );
                }
            }
        }
    }
}
