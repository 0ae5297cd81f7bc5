//! Random basis functions: Fourier features `cos(q + ω·s)` and random stumps
//! `sgn(s_q − ω)`, their seeded samplers, closed-form expectations under
//! simple state distributions, and the sampling-bound calculator.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::StateDistribution;
use crate::rng::{stream, Purpose};

/// Default band of the stump surrogate.
pub const STUMP_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierBasis {
    pub q: f64,
    pub omega: Vec<f64>,
    pub sigma: f64,
}

impl FourierBasis {
    #[inline]
    pub fn phase(&self, s: &[f64]) -> f64 {
        self.q + self.omega.iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
    }

    #[inline]
    pub fn eval_unchecked(&self, s: &[f64]) -> f64 {
        self.phase(s).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpBasis {
    /// 1-based coordinate selector.
    pub q_index: usize,
    pub omega: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Basis {
    Fourier(FourierBasis),
    Stump(StumpBasis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Stump,
}

pub fn eval_fourier(b: &FourierBasis, s: &[f64]) -> Result<f64> {
    check_dim(b.omega.len(), s.len())?;
    Ok(b.eval_unchecked(s))
}

/// Piecewise-linear surrogate of sgn(x): clamp(x/eps, -1, 1).
#[inline]
pub fn stump_surrogate(x: f64, eps: f64) -> f64 {
    if x >= eps {
        1.0
    } else if x <= -eps {
        -1.0
    } else {
        x / eps
    }
}

pub fn eval_stump(b: &StumpBasis, s: &[f64], eps: f64) -> f64 {
    stump_surrogate(s[b.q_index - 1] - b.omega, eps)
}

/// Antiderivative of the surrogate with G(0) = 0.
fn stump_antiderivative(x: f64, eps: f64) -> f64 {
    if x.abs() <= eps {
        x * x / (2.0 * eps)
    } else {
        x.abs() - eps / 2.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub kind: BasisKind,
    pub seed: u64,
    pub sigma_range: [f64; 2],
    pub state_dim: usize,
    /// Fourier sets drawn with q fixed at zero (plain `cos(ω·s)`).
    #[serde(default)]
    pub zero_phase: bool,
    /// Stump surrogate band.
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub entries: Vec<Basis>,
}

fn default_eps() -> f64 {
    STUMP_EPS
}

fn check_range(range: [f64; 2]) -> Result<()> {
    if !(range[0] > 0.0 && range[0] <= range[1] && range[1].is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma range {range:?} must satisfy 0 < lo <= hi < inf"
        )));
    }
    Ok(())
}

impl BasisSet {
    /// An empty Fourier set that draws entries from `seed`.
    pub fn fourier(
        seed: u64,
        state_dim: usize,
        sigma_range: [f64; 2],
        zero_phase: bool,
    ) -> Result<Self> {
        check_range(sigma_range)?;
        if state_dim == 0 {
            return Err(Error::Parameter("state dimension must be positive".into()));
        }
        Ok(Self {
            kind: BasisKind::Fourier,
            seed,
            sigma_range,
            state_dim,
            zero_phase,
            eps: STUMP_EPS,
            entries: Vec::new(),
        })
    }

    /// An empty stump set. The threshold scale σ is drawn once from
    /// `sigma_range` using the set's seed.
    pub fn stump(seed: u64, state_dim: usize, sigma_range: [f64; 2], eps: f64) -> Result<Self> {
        check_range(sigma_range)?;
        if state_dim == 0 || eps <= 0.0 {
            return Err(Error::Parameter(
                "stump sets need state_dim > 0 and eps > 0".into(),
            ));
        }
        Ok(Self {
            kind: BasisKind::Stump,
            seed,
            sigma_range,
            state_dim,
            zero_phase: false,
            eps,
            entries: Vec::new(),
        })
    }

    /// A Fourier set with fixed entries (no sampling).
    pub fn from_fourier(state_dim: usize, entries: Vec<FourierBasis>) -> Result<Self> {
        for e in &entries {
            check_dim(state_dim, e.omega.len())?;
        }
        let zero_phase = entries.iter().all(|e| e.q == 0.0);
        Ok(Self {
            kind: BasisKind::Fourier,
            seed: 0,
            sigma_range: [1.0, 1.0],
            state_dim,
            zero_phase,
            eps: STUMP_EPS,
            entries: entries.into_iter().map(Basis::Fourier).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The stump threshold scale used by this set.
    pub fn stump_sigma(&self) -> f64 {
        let mut rng = stream(self.seed, Purpose::StumpScale, 0);
        if self.sigma_range[0] == self.sigma_range[1] {
            self.sigma_range[0]
        } else {
            rng.random_range(self.sigma_range[0]..=self.sigma_range[1])
        }
    }

    /// Entry `index` as a pure function of (seed, kind, sigma_range, index).
    pub fn draw_entry(&self, index: usize) -> Basis {
        let mut rng = stream(self.seed, Purpose::Bases, index as u64);
        match self.kind {
            BasisKind::Fourier => {
                let [lo, hi] = self.sigma_range;
                let sigma = if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                };
                let q = rng.random_range(-PI..=PI);
                let normal = Normal::new(0.0, 1.0 / sigma).expect("positive scale");
                let omega = (0..self.state_dim)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                Basis::Fourier(FourierBasis {
                    q: if self.zero_phase { 0.0 } else { q },
                    omega,
                    sigma,
                })
            }
            BasisKind::Stump => {
                let sigma = self.stump_sigma();
                let q_index = rng.random_range(1..=self.state_dim);
                let omega = rng.random_range(-sigma..=sigma);
                Basis::Stump(StumpBasis {
                    q_index,
                    omega,
                    sigma,
                })
            }
        }
    }

    /// Appends `count` freshly drawn entries; earlier entries are untouched.
    pub fn extend(&mut self, count: usize) {
        let start = self.entries.len();
        for i in start..start + count {
            let e = self.draw_entry(i);
            self.entries.push(e);
        }
    }

    pub fn push(&mut self, basis: Basis) -> Result<()> {
        match (&basis, self.kind) {
            (Basis::Fourier(f), BasisKind::Fourier) => check_dim(self.state_dim, f.omega.len())?,
            (Basis::Stump(s), BasisKind::Stump) => {
                if s.q_index == 0 || s.q_index > self.state_dim {
                    return Err(Error::Parameter(format!(
                        "stump index {} out of range",
                        s.q_index
                    )));
                }
            }
            _ => return Err(Error::Parameter("basis kind does not match set".into())),
        }
        self.entries.push(basis);
        Ok(())
    }

    pub fn prefix(&self, n: usize) -> BasisSet {
        let mut out = self.clone();
        out.entries.truncate(n);
        out
    }

    #[inline]
    pub fn eval_entry(&self, i: usize, s: &[f64]) -> f64 {
        match &self.entries[i] {
            Basis::Fourier(f) => f.eval_unchecked(s),
            Basis::Stump(b) => eval_stump(b, s, self.eps),
        }
    }

    pub fn features_into(&self, s: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.len()) {
            *o = self.eval_entry(i, s);
        }
    }

    pub fn features(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim, s.len())?;
        let mut out = vec![0.0; self.len()];
        self.features_into(s, &mut out);
        Ok(out)
    }

    /// Mean feature vector under `dist`. Exact for atoms and uniform boxes,
    /// an average for empirical distributions.
    pub fn mean_features(&self, dist: &StateDistribution) -> Result<Vec<f64>> {
        match dist {
            StateDistribution::Atom(s) => self.features(s),
            StateDistribution::Empirical(v) => {
                if v.is_empty() {
                    return Err(Error::Parameter("empty empirical distribution".into()));
                }
                let mut acc = vec![0.0; self.len()];
                let mut buf = vec![0.0; self.len()];
                for s in v {
                    check_dim(self.state_dim, s.len())?;
                    self.features_into(s, &mut buf);
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += b;
                    }
                }
                let n = v.len() as f64;
                Ok(acc.into_iter().map(|a| a / n).collect())
            }
            StateDistribution::Uniform(b) => {
                check_dim(self.state_dim, b.dim())?;
                let mid: Vec<f64> = (0..b.dim())
                    .map(|j| 0.5 * (b.lower[j] + b.upper[j]))
                    .collect();
                let half: Vec<f64> = (0..b.dim()).map(|j| 0.5 * b.width(j)).collect();
                Ok(self
                    .entries
                    .iter()
                    .map(|e| match e {
                        Basis::Fourier(f) => {
                            let damp: f64 = f
                                .omega
                                .iter()
                                .zip(&half)
                                .map(|(w, h)| sinc(w * h))
                                .product();
                            f.phase(&mid).cos() * damp
                        }
                        Basis::Stump(st) => {
                            let j = st.q_index - 1;
                            let (lo, hi) = (b.lower[j] - st.omega, b.upper[j] - st.omega);
                            if hi - lo <= 0.0 {
                                stump_surrogate(lo, self.eps)
                            } else {
                                (stump_antiderivative(hi, self.eps)
                                    - stump_antiderivative(lo, self.eps))
                                    / (hi - lo)
                            }
                        }
                    })
                    .collect())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: BasisSet = serde_json::from_str(text)?;
        for e in &set.entries {
            if let Basis::Fourier(f) = e {
                check_dim(set.state_dim, f.omega.len())?;
            }
        }
        Ok(set)
    }
}

/// Draws `count` Fourier features for a `d_s`-dimensional state.
pub fn sample_fourier(
    count: usize,
    d_s: usize,
    sigma_range: [f64; 2],
    seed: u64,
) -> Result<BasisSet> {
    if count == 0 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    let mut set = BasisSet::fourier(seed, d_s, sigma_range, false)?;
    set.extend(count);
    Ok(set)
}

/// Draws `count` random stumps over `j` coordinates.
pub fn sample_stumps(count: usize, j: usize, sigma_range: [f64; 2], seed: u64) -> Result<BasisSet> {
    if count == 0 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    let mut set = BasisSet::stump(seed, j, sigma_range, STUMP_EPS)?;
    set.extend(count);
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub omega_const: f64,
    pub delta_const: f64,
    pub lipschitz: f64,
    pub state_diameter: f64,
}

/// sqrt(2 ln(1/δ)).
pub fn delta_constant(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!(
            "delta {delta} must lie in (0, 1]"
        )));
    }
    Ok((2.0 * (1.0 / delta).ln()).max(0.0).sqrt())
}

/// E‖θ‖² for Fourier features with q ~ U[−π, π] and σ ~ U[lo, hi]:
/// π²/3 + d·E[σ⁻²] with E[σ⁻²] = 1/(lo·hi).
pub fn fourier_mean_sq_theta(d_s: usize, sigma_range: [f64; 2]) -> Result<f64> {
    check_range(sigma_range)?;
    Ok(PI * PI / 3.0 + d_s as f64 / (sigma_range[0] * sigma_range[1]))
}

impl BoundConstants {
    pub fn new(
        state_diameter: f64,
        lipschitz: f64,
        mean_sq_theta: f64,
        delta: f64,
    ) -> Result<Self> {
        if state_diameter < 0.0 || lipschitz < 0.0 || mean_sq_theta < 0.0 {
            return Err(Error::Parameter(
                "bound constants must be non-negative".into(),
            ));
        }
        Ok(Self {
            omega_const: 4.0 * (state_diameter + 1.0) * lipschitz * mean_sq_theta.sqrt(),
            delta_const: delta_constant(delta)?,
            lipschitz,
            state_diameter,
        })
    }
}

/// ⌈ε⁻² b² ((1+γ)Ω/2 + Δ_δ)²⌉.
pub fn falp_sample_bound(
    eps: f64,
    delta: f64,
    b_norm: f64,
    constants: &BoundConstants,
    gamma: f64,
) -> Result<u64> {
    if !(eps > 0.0) || b_norm < 0.0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(
            "need eps > 0, b_norm >= 0, gamma in (0,1)".into(),
        ));
    }
    let delta_c = delta_constant(delta)?;
    let inner = (1.0 + gamma) * constants.omega_const / 2.0 + delta_c;
    let value = (b_norm * b_norm) / (eps * eps) * (inner * inner);
    if !value.is_finite() || value > u64::MAX as f64 {
        return Err(Error::Parameter(format!(
            "bound {value} does not fit in an integer"
        )));
    }
    Ok(value.ceil() as u64)
}
