//! Conditional feature expectations E[φ_i(s') | s, a] for a whole basis set.
//!
//! LP construction, greedy lookahead and the lower-bound sampler all need the
//! full vector of next-state feature means at many (s, a) pairs. Problems can
//! supply a specialised engine through [`DiscountedMdp::feature_engine`]; the
//! generic engine loops over the noise support.

use crate::bases::BasisSet;
use crate::mdp::{ActionValue, DiscountedMdp, NoiseSupport};

pub trait FeatureExpectation: Sync {
    /// Writes E[φ_i(s') | s, a] into `out[i]` for every basis in the set.
    fn expected_features(&self, s: &[f64], a: &[f64], out: &mut [f64]);

    /// Row-major `actions.len() x N` block of expectations at one state.
    fn expected_features_many(
        &self,
        s: &[f64],
        actions: &[ActionValue],
        n: usize,
        out: &mut [f64],
    ) {
        for (k, a) in actions.iter().enumerate() {
            self.expected_features(s, a, &mut out[k * n..(k + 1) * n]);
        }
    }
}

pub struct GenericExpectation<'a> {
    pub mdp: &'a dyn DiscountedMdp,
    pub bases: &'a BasisSet,
}

impl FeatureExpectation for GenericExpectation<'_> {
    fn expected_features(&self, s: &[f64], a: &[f64], out: &mut [f64]) {
        let n = self.bases.len();
        out[..n].iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; n];
        match self.mdp.noise() {
            NoiseSupport::Exact(points) => {
                for (v, p) in points {
                    let next = self.mdp.transition(s, a, *v);
                    self.bases.features_into(&next, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += p * b;
                    }
                }
            }
            NoiseSupport::Saa(samples) => {
                for v in samples {
                    let next = self.mdp.transition(s, a, *v);
                    self.bases.features_into(&next, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b;
                    }
                }
                let m = samples.len() as f64;
                out[..n].iter_mut().for_each(|o| *o /= m);
            }
        }
    }
}

/// The problem's specialised engine if it has one, else the generic loop.
pub fn engine_for<'a>(
    mdp: &'a dyn DiscountedMdp,
    bases: &'a BasisSet,
) -> Box<dyn FeatureExpectation + 'a> {
    mdp.feature_engine(bases)
        .unwrap_or_else(|| Box::new(GenericExpectation { mdp, bases }))
}
