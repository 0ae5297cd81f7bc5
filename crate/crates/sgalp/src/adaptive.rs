//! The sample-solve-evaluate loop over growing random basis sets.
//!
//! Each iteration appends `batch` bases, solves FALP or FGLP, evaluates a
//! lower bound LB and a policy cost PC, and keeps two incumbents: the weights
//! with the best LB and the weights with the best PC. The loop stops when
//! `τ* = 1 − LB(β^LB)/PC(β^UB) ≤ τ` or the basis cap is reached.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::expectation::engine_for;
use crate::lower_bound::{estimate_lower_bound, LipschitzConstants, SaddleConfig};
use crate::lp::{
    build_falp_with, build_fglp_with, solve, ConstraintSamplePlan, SolverBackend, VfaWeights,
};
use crate::mdp::DiscountedMdp;
use crate::policy::{simulate_policy, GreedyPolicy, LinearVfa, SimConfig, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Falp,
    Fglp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// B
    pub batch: usize,
    /// τ
    pub tolerance: f64,
    pub max_bases: usize,
    pub model: ModelKind,
    /// Redraw the constraint sample every iteration instead of reusing it.
    #[serde(default)]
    pub redraw_plan: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            batch: 10,
            tolerance: 0.05,
            max_bases: 200,
            model: ModelKind::Falp,
            redraw_plan: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Parameter("batch must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return Err(Error::Parameter(format!(
                "tolerance {} not in (0, 1]",
                self.tolerance
            )));
        }
        if self.max_bases < self.batch {
            return Err(Error::Parameter(
                "max_bases must be at least one batch".into(),
            ));
        }
        Ok(())
    }
}

/// Output of one solve-evaluate step, before incumbent bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub n: usize,
    /// Optimal value of the solved program.
    pub lp_value: f64,
    pub lb: f64,
    pub lb_stderr: f64,
    pub pc: f64,
    pub pc_stderr: f64,
    /// Flattened weights, kept for the incumbents and the JSON trace.
    pub weights: Vec<f64>,
    pub max_violation_standard: f64,
    pub max_violation_self_guiding: f64,
    /// min over guide states of V_new − V_prev, when guide rows were present.
    pub guide_margin: Option<f64>,
    pub screened: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n: usize,
    pub lp_value: f64,
    pub lb: f64,
    pub lb_stderr: f64,
    pub pc: f64,
    pub pc_stderr: f64,
    pub incumbent_lb: f64,
    pub incumbent_pc: f64,
    /// N of the iterations holding β^LB and β^UB.
    pub incumbent_lb_n: usize,
    pub incumbent_ub_n: usize,
    pub tau_star: f64,
    pub max_violation_standard: f64,
    pub max_violation_self_guiding: f64,
    pub guide_margin: Option<f64>,
    pub screened: usize,
    pub rows: usize,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    CapHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub records: Vec<IterationRecord>,
    pub weights: Vec<Vec<f64>>,
    pub stop: Option<StopReason>,
}

impl LoopTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn best_lb_weights(&self) -> Option<&[f64]> {
        let r = self.last()?;
        self.records
            .iter()
            .position(|x| x.n == r.incumbent_lb_n)
            .map(|i| self.weights[i].as_slice())
    }

    pub fn best_ub_weights(&self) -> Option<&[f64]> {
        let r = self.last()?;
        self.records
            .iter()
            .position(|x| x.n == r.incumbent_ub_n)
            .map(|i| self.weights[i].as_slice())
    }

    pub fn raw_pc(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pc).collect()
    }
}

/// A failed loop keeps the iterations completed before the error.
#[derive(Debug, thiserror::Error)]
#[error("loop aborted after {} iterations: {error}", partial.records.len())]
pub struct LoopFailure {
    pub error: Error,
    pub partial: LoopTrace,
}

/// Drives `step(iteration, n)` for n = B, 2B, … with incumbent tracking.
/// `available` caps N when the basis source is finite.
pub fn drive(
    cfg: &LoopConfig,
    available: Option<usize>,
    mut step: impl FnMut(usize, usize) -> Result<Iterate>,
) -> std::result::Result<LoopTrace, LoopFailure> {
    let mut trace = LoopTrace {
        records: Vec::new(),
        weights: Vec::new(),
        stop: None,
    };
    if let Err(error) = cfg.validate() {
        return Err(LoopFailure {
            error,
            partial: trace,
        });
    }
    let cap = available.map_or(cfg.max_bases, |a| a.min(cfg.max_bases));
    let mut best: Option<(f64, usize, f64, usize)> = None;
    let mut iteration = 0;
    loop {
        iteration += 1;
        let n = (iteration * cfg.batch).min(cap);
        let t0 = Instant::now();
        let it = match step(iteration, n) {
            Ok(it) => it,
            Err(error) => {
                return Err(LoopFailure {
                    error,
                    partial: trace,
                })
            }
        };
        let (lb_best, lb_n, pc_best, ub_n) = match best {
            None => (it.lb, it.n, it.pc, it.n),
            Some((lb, ln, pc, un)) => {
                let (lb, ln) = if it.lb >= lb { (it.lb, it.n) } else { (lb, ln) };
                let (pc, un) = if it.pc <= pc { (it.pc, it.n) } else { (pc, un) };
                (lb, ln, pc, un)
            }
        };
        best = Some((lb_best, lb_n, pc_best, ub_n));
        let tau_star = 1.0 - lb_best / pc_best;
        trace.records.push(IterationRecord {
            iteration,
            n: it.n,
            lp_value: it.lp_value,
            lb: it.lb,
            lb_stderr: it.lb_stderr,
            pc: it.pc,
            pc_stderr: it.pc_stderr,
            incumbent_lb: lb_best,
            incumbent_pc: pc_best,
            incumbent_lb_n: lb_n,
            incumbent_ub_n: ub_n,
            tau_star,
            max_violation_standard: it.max_violation_standard,
            max_violation_self_guiding: it.max_violation_self_guiding,
            guide_margin: it.guide_margin,
            screened: it.screened,
            rows: it.rows,
            wallclock_s: t0.elapsed().as_secs_f64(),
        });
        trace.weights.push(it.weights);
        if tau_star <= cfg.tolerance {
            trace.stop = Some(StopReason::Converged);
            return Ok(trace);
        }
        if n >= cap {
            trace.stop = Some(StopReason::CapHit);
            return Ok(trace);
        }
    }
}

/// Where the bases of iteration k come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisPlan {
    /// Random draws appended to the given (usually empty) set.
    Random(BasisSet),
    /// Prefixes of a fixed list.
    Fixed(BasisSet),
}

impl BasisPlan {
    fn available(&self) -> Option<usize> {
        match self {
            BasisPlan::Random(_) => None,
            BasisPlan::Fixed(b) => Some(b.len()),
        }
    }

    fn take(&self, n: usize) -> BasisSet {
        match self {
            BasisPlan::Random(b) => {
                let mut s = b.clone();
                if s.len() < n {
                    s.extend(n - s.len());
                }
                s.prefix(n)
            }
            BasisPlan::Fixed(b) => b.prefix(n),
        }
    }
}

/// How constraint pairs are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSource {
    Fixed(ConstraintSamplePlan),
    /// `count` uniform pairs; with `redraw_plan` each iteration uses its own stream.
    Uniform {
        count: usize,
        seed: u64,
    },
}

impl PlanSource {
    fn plan(
        &self,
        mdp: &dyn DiscountedMdp,
        iteration: usize,
        redraw: bool,
    ) -> ConstraintSamplePlan {
        match self {
            PlanSource::Fixed(p) => p.clone(),
            PlanSource::Uniform { count, seed } => {
                let index = if redraw { iteration as u64 - 1 } else { 0 };
                ConstraintSamplePlan::uniform_indexed(mdp, *count, *seed, index)
            }
        }
    }
}

pub type ConstantsFn<'a> = Box<dyn Fn(&VfaWeights) -> Result<LipschitzConstants> + Sync + 'a>;
pub type AnalyticCost<'a> = Box<dyn Fn(&dyn ValueFunction) -> Result<f64> + Sync + 'a>;

pub enum LbMethod<'a> {
    /// E_χ[V(s; β)]; valid when the constraints cover S×A densely.
    LpValue,
    Saddle {
        cfg: SaddleConfig,
        constants: ConstantsFn<'a>,
    },
}

pub enum PcMethod<'a> {
    Simulate(SimConfig),
    Analytic(AnalyticCost<'a>),
}

pub struct DiscountedSetup<'a> {
    pub mdp: &'a dyn DiscountedMdp,
    pub backend: &'a dyn SolverBackend,
    pub bases: BasisPlan,
    pub plan: PlanSource,
    pub lb: LbMethod<'a>,
    pub pc: PcMethod<'a>,
}

/// Algorithm loop for a discounted MDP.
pub fn run(
    setup: &DiscountedSetup<'_>,
    cfg: &LoopConfig,
) -> std::result::Result<LoopTrace, LoopFailure> {
    let mdp = setup.mdp;
    let mut prev: Option<(BasisSet, VfaWeights)> = None;
    let mut fixed_plan: Option<ConstraintSamplePlan> = None;
    drive(cfg, setup.bases.available(), |iteration, n| {
        let bases = setup.bases.take(n);
        let plan = if cfg.redraw_plan {
            setup.plan.plan(mdp, iteration, true)
        } else {
            fixed_plan
                .get_or_insert_with(|| setup.plan.plan(mdp, iteration, false))
                .clone()
        };
        let engine = engine_for(mdp, &bases);
        let prev_w = prev.as_ref().map(|(_, w)| w);
        let model = match cfg.model {
            ModelKind::Falp => {
                build_falp_with(mdp, &bases, engine.as_ref(), &plan, mdp.relevance_dist())?
            }
            ModelKind::Fglp => build_fglp_with(
                mdp,
                &bases,
                engine.as_ref(),
                &plan,
                mdp.relevance_dist(),
                prev_w,
            )?,
        };
        let sol = solve(&model, setup.backend)?;
        let vfa = LinearVfa::new(mdp, &bases, &sol.weights)?;
        let lp_value = vfa.mean(mdp.initial_dist())?;
        let (lb, lb_stderr) = match &setup.lb {
            LbMethod::LpValue => (lp_value, 0.0),
            LbMethod::Saddle { cfg, constants } => {
                let est = estimate_lower_bound(mdp, &vfa, cfg, &constants(&sol.weights)?)?;
                (est.bound, est.stderr)
            }
        };
        let (pc, pc_stderr) = match &setup.pc {
            PcMethod::Simulate(sim) => {
                let policy = GreedyPolicy::new(mdp, &vfa, sim.action_grid);
                let est = simulate_policy(mdp, &policy, sim)?;
                (est.mean, est.stderr)
            }
            PcMethod::Analytic(f) => (f(&vfa)?, 0.0),
        };
        let guide_margin = match (cfg.model, &prev) {
            (ModelKind::Fglp, Some((pb, pw))) => Some(monotone_margin(
                &bases,
                &sol.weights,
                pb,
                pw,
                &plan.guide_states,
            )),
            _ => None,
        };
        let it = Iterate {
            n: bases.len(),
            lp_value: sol.objective,
            lb,
            lb_stderr,
            pc,
            pc_stderr,
            weights: sol.weights.to_vec(),
            max_violation_standard: sol.report.max_violation_standard,
            max_violation_self_guiding: sol.report.max_violation_self_guiding,
            guide_margin,
            screened: sol.report.screened.len(),
            rows: model.num_rows(),
        };
        drop(vfa);
        drop(engine);
        prev = Some((bases, sol.weights));
        Ok(it)
    })
}

/// min over `states` of V(s; new) − V(s; prev).
pub fn monotone_margin(
    bases: &BasisSet,
    w: &VfaWeights,
    prev_bases: &BasisSet,
    prev: &VfaWeights,
    states: &[Vec<f64>],
) -> f64 {
    use crate::lp::builder::value_unchecked;
    states
        .iter()
        .map(|s| value_unchecked(bases, w, s) - value_unchecked(prev_bases, prev, s))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationStats {
    /// Percentage of consecutive iterations whose raw PC got worse.
    pub fluctuation_pct: f64,
    /// Mean worsening over those iterations, in cost units.
    pub fluctuation_magnitude: f64,
}

pub fn fluctuation_stats(pc: &[f64]) -> Result<FluctuationStats> {
    if pc.len() < 2 {
        return Err(Error::Parameter(
            "fluctuation statistics need at least two iterations".into(),
        ));
    }
    let worse: Vec<f64> = pc
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    let pct = 100.0 * worse.len() as f64 / (pc.len() - 1) as f64;
    let mag = if worse.is_empty() {
        0.0
    } else {
        worse.iter().sum::<f64>() / worse.len() as f64
    };
    Ok(FluctuationStats {
        fluctuation_pct: pct,
        fluctuation_magnitude: mag,
    })
}

pub const TRACE_SCHEMA: &str = "sgalp-trace-1";

const TRACE_COLUMNS: [&str; 18] = [
    "schema",
    "iteration",
    "n",
    "lp_value",
    "lb",
    "lb_stderr",
    "pc",
    "pc_stderr",
    "incumbent_lb",
    "incumbent_pc",
    "incumbent_lb_n",
    "incumbent_ub_n",
    "tau_star",
    "max_violation_standard",
    "max_violation_self_guiding",
    "guide_margin",
    "screened",
    "rows",
];

/// One row per iteration. Wall-clock time is left out so reruns match byte for byte.
pub fn write_trace_csv(records: &[IterationRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        let f = |v: f64| format!("{v:?}");
        w.write_record([
            TRACE_SCHEMA.to_string(),
            r.iteration.to_string(),
            r.n.to_string(),
            f(r.lp_value),
            f(r.lb),
            f(r.lb_stderr),
            f(r.pc),
            f(r.pc_stderr),
            f(r.incumbent_lb),
            f(r.incumbent_pc),
            r.incumbent_lb_n.to_string(),
            r.incumbent_ub_n.to_string(),
            f(r.tau_star),
            f(r.max_violation_standard),
            f(r.max_violation_self_guiding),
            r.guide_margin.map(f).unwrap_or_default(),
            r.screened.to_string(),
            r.rows.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back the columns written by [`write_trace_csv`]; wall-clock is zero.
pub fn read_trace_csv(input: impl std::io::Read) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != TRACE_COLUMNS {
        return Err(Error::Config {
            field: "trace.csv".into(),
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| Error::Config {
            field: format!("trace.csv row {} column {col}", line + 2),
            message: "unparseable value".into(),
        };
        let fl = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(TRACE_COLUMNS[i]));
        let us = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(TRACE_COLUMNS[i]));
        if &rec[0] != TRACE_SCHEMA {
            return Err(bad("schema"));
        }
        out.push(IterationRecord {
            iteration: us(1)?,
            n: us(2)?,
            lp_value: fl(3)?,
            lb: fl(4)?,
            lb_stderr: fl(5)?,
            pc: fl(6)?,
            pc_stderr: fl(7)?,
            incumbent_lb: fl(8)?,
            incumbent_pc: fl(9)?,
            incumbent_lb_n: us(10)?,
            incumbent_ub_n: us(11)?,
            tau_star: fl(12)?,
            max_violation_standard: fl(13)?,
            max_violation_self_guiding: fl(14)?,
            guide_margin: if rec[15].is_empty() {
                None
            } else {
                Some(fl(15)?)
            },
            screened: us(16)?,
            rows: us(17)?,
            wallclock_s: 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(n: usize, lb: f64, pc: f64) -> Iterate {
        Iterate {
            n,
            lp_value: lb,
            lb,
            lb_stderr: 0.0,
            pc,
            pc_stderr: 0.0,
            weights: vec![n as f64],
            max_violation_standard: 0.0,
            max_violation_self_guiding: 0.0,
            guide_margin: None,
            screened: 0,
            rows: 1,
        }
    }

    #[test]
    fn tolerance_one_stops_after_one_iteration() {
        let cfg = LoopConfig {
            batch: 1,
            tolerance: 1.0,
            max_bases: 10,
            ..Default::default()
        };
        let t = drive(&cfg, None, |_, n| Ok(fake(n, 0.1, 1.0))).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.stop, Some(StopReason::Converged));
    }

    #[test]
    fn incumbents_only_improve() {
        let lbs = [1.0, 3.0, 2.0, 4.0];
        let pcs = [10.0, 8.0, 12.0, 9.0];
        let cfg = LoopConfig {
            batch: 1,
            tolerance: 0.01,
            max_bases: 4,
            ..Default::default()
        };
        let t = drive(&cfg, None, |k, n| Ok(fake(n, lbs[k - 1], pcs[k - 1]))).unwrap();
        assert_eq!(t.stop, Some(StopReason::CapHit));
        let ilb: Vec<f64> = t.records.iter().map(|r| r.incumbent_lb).collect();
        let ipc: Vec<f64> = t.records.iter().map(|r| r.incumbent_pc).collect();
        assert_eq!(ilb, vec![1.0, 3.0, 3.0, 4.0]);
        assert_eq!(ipc, vec![10.0, 8.0, 8.0, 8.0]);
        let last = t.last().unwrap();
        assert!((last.tau_star - 0.5).abs() < 1e-15);
        assert_eq!(t.best_ub_weights().unwrap(), &[2.0]);
        assert_eq!(t.best_lb_weights().unwrap(), &[4.0]);
    }

    #[test]
    fn failure_keeps_partial_trace() {
        let cfg = LoopConfig {
            batch: 1,
            tolerance: 0.01,
            max_bases: 4,
            ..Default::default()
        };
        let e = drive(&cfg, None, |k, n| {
            if k < 3 {
                Ok(fake(n, 1.0, 2.0))
            } else {
                Err(Error::Diagnostic("boom".into()))
            }
        })
        .unwrap_err();
        assert_eq!(e.partial.records.len(), 2);
    }

    #[test]
    fn fixed_source_caps_n() {
        let cfg = LoopConfig {
            batch: 2,
            tolerance: 0.01,
            max_bases: 10,
            ..Default::default()
        };
        let t = drive(&cfg, Some(3), |_, n| Ok(fake(n, 1.0, 2.0))).unwrap();
        let ns: Vec<usize> = t.records.iter().map(|r| r.n).collect();
        assert_eq!(ns, vec![2, 3]);
    }

    #[test]
    fn fluctuation_examples() {
        let s = fluctuation_stats(&[5.0, 4.0, 3.0]).unwrap();
        assert_eq!((s.fluctuation_pct, s.fluctuation_magnitude), (0.0, 0.0));
        let s = fluctuation_stats(&[10.0, 12.0, 11.0, 13.0]).unwrap();
        assert!((s.fluctuation_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.fluctuation_magnitude, 2.0);
        assert!(fluctuation_stats(&[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig {
            batch: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LoopConfig {
            tolerance: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LoopConfig {
            tolerance: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LoopConfig::default().validate().is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = LoopConfig {
            batch: 1,
            tolerance: 0.01,
            max_bases: 3,
            ..Default::default()
        };
        let t = drive(&cfg, None, |k, n| {
            let mut it = fake(n, 0.1 * k as f64, 1.0 / 3.0);
            it.guide_margin = (k > 1).then_some(-1e-12);
            Ok(it)
        })
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t.records, &mut buf).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        for (a, b) in t.records.iter().zip(&back) {
            assert_eq!(
                IterationRecord {
                    wallclock_s: 0.0,
                    ..a.clone()
                },
                *b
            );
        }
    }
}
