//! Config-driven runs with persisted artifacts.
//!
//! A run directory holds `manifest.json`, `trace.csv`, `trace.json`,
//! `bounds.json` and plot-ready CSVs (`vfa_curve.csv` for the toy,
//! `visit_frequency.csv` for the discounted problems).
//!
//! Seed schedule: every random draw comes from `stream(seed, purpose, index)`
//! with the run's master seed. Bases use `Bases`, the constraint sample
//! `Constraints`, the PIC demand SAA `Demand`, chains `Chains`, GJR instances
//! `Instance` and guide states `Guides`. The rollout seed is
//! `derive_seed(seed, Rollout)` unless the config fixes it.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    run, write_trace_csv, BasisPlan, DiscountedSetup, LbMethod, LoopConfig, LoopFailure, LoopTrace,
    ModelKind, PcMethod, PlanSource, StopReason,
};
use crate::bases::{Basis, BasisSet};
use crate::error::{Error, Result};
use crate::gjr::{gjr_instance, run_gjr, GjrParams, GjrRunConfig, GjrSpec};
use crate::lower_bound::{pic_constants, SaddleConfig};
use crate::lp::{ConstraintSamplePlan, SimplexBackend, SolverBackend, VfaWeights};
use crate::mdp::{BoxBounds, DiscountedMdp};
use crate::pic::{instance_from_table, PicMdp, PicParams};
use crate::policy::{
    default_horizon, estimate_visit_frequency, GreedyPolicy, LinearVfa, SimConfig, ValueFunction,
};
use crate::rng::{derive_seed, stream, Purpose};
use crate::toy::{
    build_toy, toy_bases, toy_constant_policy_cost, toy_greedy_constant_action, toy_value_function,
    TOY_ACTION_GRID, TOY_SCREEN_TOL, TOY_STATE_GRID,
};

pub const MANIFEST_SCHEMA: &str = "sgalp-manifest-1";
pub const BOUNDS_SCHEMA: &str = "sgalp-bounds-1";

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Toy,
    Pic(usize),
    /// A generated instance, or `None` for the `gjr.instance` given in the config.
    Gjr(Option<GjrSpec>),
}

impl Problem {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config {
            field: "problem".into(),
            message: m,
        };
        if text == "toy" {
            return Ok(Problem::Toy);
        }
        if let Some(id) = text.strip_prefix("pic:") {
            let id: usize = id.parse().map_err(|_| bad(format!("bad PIC id '{id}'")))?;
            instance_from_table(id).map_err(|e| bad(e.to_string()))?;
            return Ok(Problem::Pic(id));
        }
        if let Some(spec) = text.strip_prefix("gjr:") {
            if spec == "custom" {
                return Ok(Problem::Gjr(None));
            }
            return GjrSpec::parse(spec)
                .map(|s| Problem::Gjr(Some(s)))
                .map_err(|e| bad(e.to_string()));
        }
        Err(bad(format!(
            "unknown problem '{text}' (expected toy, pic:<id> or gjr:<J>:<scheme>:<z>)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub batch: usize,
    pub tolerance: f64,
    pub max_bases: usize,
    pub redraw_plan: bool,
}

impl Default for LoopSection {
    fn default() -> Self {
        let d = LoopConfig::default();
        Self {
            batch: d.batch,
            tolerance: d.tolerance,
            max_bases: d.max_bases,
            redraw_plan: d.redraw_plan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// `None` means ⌈ln(1e-3)/ln γ⌉.
    pub horizon: Option<usize>,
    pub replications: usize,
    /// `None` means ā+1 for PIC and 101 for the toy.
    pub action_grid: Option<usize>,
    pub rollout_seed: Option<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: None,
            replications: 1000,
            action_grid: None,
            rollout_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    /// Fixed frequencies used as prefixes; random draws when absent.
    pub thetas: Option<Vec<f64>>,
    pub sigma_range: [f64; 2],
    /// Replaces `backend.screen_tol` on the toy.
    pub screen_tol: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            thetas: None,
            sigma_range: [0.05, 0.5],
            screen_tol: TOY_SCREEN_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicSection {
    pub saa_size: usize,
    pub constraints: usize,
    pub sigma_range: [f64; 2],
}

impl Default for PicSection {
    fn default() -> Self {
        Self {
            saa_size: 500,
            constraints: 5000,
            sigma_range: [100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GjrSection {
    /// Explicit parameters for `gjr:custom`.
    pub instance: Option<GjrParams>,
    #[serde(flatten)]
    pub run: GjrRunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisitSection {
    /// Bins per state dimension; `None` means 100 for the toy and 10 otherwise.
    pub bins: Option<usize>,
    pub horizon: usize,
    pub replications: usize,
}

impl Default for VisitSection {
    fn default() -> Self {
        Self {
            bins: None,
            horizon: 200,
            replications: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub model: ModelKind,
    #[serde(rename = "loop", default)]
    pub loop_section: LoopSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub lower_bound: Option<SaddleConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub toy: ToySection,
    #[serde(default)]
    pub pic: PicSection,
    #[serde(default)]
    pub gjr: GjrSection,
    #[serde(default)]
    pub backend: SimplexBackend,
    #[serde(default)]
    pub visit: VisitSection,
}

impl RunConfig {
    pub fn problem(&self) -> Result<Problem> {
        Problem::parse(&self.problem)
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            batch: self.loop_section.batch,
            tolerance: self.loop_section.tolerance,
            max_bases: self.loop_section.max_bases,
            model: self.model,
            redraw_plan: self.loop_section.redraw_plan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, e: Error| Error::Config {
            field: field.into(),
            message: e.to_string(),
        };
        let problem = self.problem()?;
        self.loop_config().validate().map_err(|e| cfg("loop", e))?;
        if let Some(lb) = &self.lower_bound {
            lb.validate().map_err(|e| cfg("lower_bound", e))?;
        }
        if self.sim.replications == 0 {
            return Err(Error::Config {
                field: "sim.replications".into(),
                message: "must be positive".into(),
            });
        }
        if self.sim.action_grid.is_some_and(|g| g < 2) {
            return Err(Error::Config {
                field: "sim.action_grid".into(),
                message: "must be at least 2".into(),
            });
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config {
                field: "output_dir".into(),
                message: "must not be empty".into(),
            });
        }
        match problem {
            Problem::Gjr(None) => {
                let p = self.gjr.instance.as_ref().ok_or_else(|| Error::Config {
                    field: "gjr.instance".into(),
                    message: "gjr:custom needs explicit parameters".into(),
                })?;
                p.validate().map_err(|e| cfg("gjr.instance", e))?;
                self.gjr
                    .run
                    .cut
                    .search
                    .validate()
                    .map_err(|e| cfg("gjr.cut.search", e))?;
            }
            Problem::Gjr(Some(_)) => self
                .gjr
                .run
                .cut
                .search
                .validate()
                .map_err(|e| cfg("gjr.cut.search", e))?,
            Problem::Pic(_) if self.pic.saa_size == 0 || self.pic.constraints == 0 => {
                return Err(Error::Config {
                    field: "pic".into(),
                    message: "saa_size and constraints must be positive".into(),
                })
            }
            _ => {}
        }
        Ok(())
    }
}

fn json_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    Error::Config {
        field: path,
        message: format!("line {}, column {}: {inner}", inner.line(), inner.column()),
    }
}

/// Parses a config, or the `config` member of a run manifest.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(text) {
        if map.get("schema").and_then(|v| v.as_str()) == Some(MANIFEST_SCHEMA) {
            let value = map
                .get("config")
                .cloned()
                .unwrap_or(serde_json::Value::Null);
            let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
                let path = e.path().to_string();
                Error::Config {
                    field: format!("config.{path}"),
                    message: e.into_inner().to_string(),
                }
            })?;
            cfg.validate()?;
            return Ok(cfg);
        }
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(json_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub rollout: u64,
    pub chains: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: SeedRecord,
    /// Per-basis σ for Fourier sets, the set-wide threshold scale for stumps.
    pub sigma_draws: Vec<f64>,
    pub bases: usize,
    pub constraint_pairs: usize,
    pub saa_size: Option<usize>,
    pub instance: serde_json::Value,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub schema: String,
    pub problem: String,
    pub model: ModelKind,
    pub seed: u64,
    pub stop: Option<StopReason>,
    pub iterations: usize,
    pub final_n: usize,
    pub incumbent_lb: f64,
    pub incumbent_lb_n: usize,
    pub incumbent_pc: f64,
    pub incumbent_ub_n: usize,
    pub tau_star: f64,
    pub tolerance: f64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub trace: LoopTrace,
    pub bounds: Bounds,
}

/// 0 when τ* ≤ τ, 2 on the basis cap, 1 on any error.
pub fn exit_code(outcome: &Result<RunOutcome>) -> i32 {
    match outcome {
        Ok(o) if o.bounds.stop == Some(StopReason::Converged) => 0,
        Ok(_) => 2,
        Err(_) => 1,
    }
}

/// Creates `<output_dir>/<timestamp>-<problem>-s<seed>`, adding a counter
/// when the name is taken.
pub fn create_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let slug: String = cfg
        .problem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let model = format!("{:?}", cfg.model).to_lowercase();
    let base = format!("{stamp}-{}-{model}-s{}", slug.to_lowercase(), cfg.seed);
    for k in 0.. {
        let name = if k == 0 {
            base.clone()
        } else {
            format!("{base}-{k}")
        };
        let dir = cfg.output_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn sigma_draws(bases: &BasisSet) -> Vec<f64> {
    match bases.entries.first() {
        Some(Basis::Stump(_)) => vec![bases.stump_sigma()],
        _ => bases
            .entries
            .iter()
            .filter_map(|b| match b {
                Basis::Fourier(f) => Some(f.sigma),
                Basis::Stump(_) => None,
            })
            .collect(),
    }
}

fn bounds_of(cfg: &RunConfig, trace: &LoopTrace) -> Bounds {
    let last = trace.last();
    Bounds {
        schema: BOUNDS_SCHEMA.into(),
        problem: cfg.problem.clone(),
        model: cfg.model,
        seed: cfg.seed,
        stop: trace.stop,
        iterations: trace.records.len(),
        final_n: last.map_or(0, |r| r.n),
        incumbent_lb: last.map_or(f64::NAN, |r| r.incumbent_lb),
        incumbent_lb_n: last.map_or(0, |r| r.incumbent_lb_n),
        incumbent_pc: last.map_or(f64::NAN, |r| r.incumbent_pc),
        incumbent_ub_n: last.map_or(0, |r| r.incumbent_ub_n),
        tau_star: last.map_or(f64::NAN, |r| r.tau_star),
        tolerance: cfg.loop_section.tolerance,
    }
}

fn write_trace(dir: &Path, trace: &LoopTrace) -> Result<()> {
    write_trace_csv(
        &trace.records,
        BufWriter::new(fs::File::create(dir.join("trace.csv"))?),
    )?;
    write_json(&dir.join("trace.json"), trace)
}

fn sim_config(cfg: &RunConfig, gamma: f64, default_grid: usize) -> SimConfig {
    SimConfig {
        horizon: cfg.sim.horizon.unwrap_or_else(|| default_horizon(gamma)),
        replications: cfg.sim.replications,
        action_grid: cfg.sim.action_grid.unwrap_or(default_grid),
        rollout_seed: cfg
            .sim
            .rollout_seed
            .unwrap_or_else(|| derive_seed(cfg.seed, Purpose::Rollout)),
    }
}

/// Discounted-occupancy histogram of the incumbent greedy policy.
fn write_visits(
    dir: &Path,
    cfg: &RunConfig,
    mdp: &dyn DiscountedMdp,
    bases: &BasisSet,
    weights: &[f64],
    action_grid: usize,
    default_bins: usize,
) -> Result<()> {
    let w = VfaWeights::from_vec(weights);
    let vfa = LinearVfa::new(mdp, bases, &w)?;
    let policy = GreedyPolicy::new(mdp, &vfa, action_grid);
    let sim = SimConfig {
        horizon: cfg.visit.horizon,
        replications: cfg.visit.replications,
        action_grid,
        rollout_seed: derive_seed(cfg.seed, Purpose::Rollout),
    };
    let hist =
        estimate_visit_frequency(mdp, &policy, cfg.visit.bins.unwrap_or(default_bins), &sim)?;
    let mut out = csv::Writer::from_writer(BufWriter::new(fs::File::create(
        dir.join("visit_frequency.csv"),
    )?));
    let d = hist.bounds.dim();
    let mut header = vec!["cell".to_string()];
    header.extend((0..d).map(|j| format!("lower_{j}")));
    header.push("mass".into());
    out.write_record(&header)?;
    for (k, m) in hist.normalized().iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(hist.cell_lower(k).iter().map(|v| format!("{v:?}")));
        row.push(format!("{m:?}"));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn finish_discounted(
    dir: &Path,
    cfg: &RunConfig,
    result: std::result::Result<LoopTrace, LoopFailure>,
) -> Result<LoopTrace> {
    match result {
        Ok(trace) => {
            write_trace(dir, &trace)?;
            Ok(trace)
        }
        Err(f) => {
            write_trace(dir, &f.partial)?;
            write_json(&dir.join("bounds.json"), &bounds_of(cfg, &f.partial))?;
            Err(f.error)
        }
    }
}

/// Runs a validated config, writing artifacts into a fresh run directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = create_run_dir(cfg)?;
    let seeds = SeedRecord {
        master: cfg.seed,
        rollout: cfg
            .sim
            .rollout_seed
            .unwrap_or_else(|| derive_seed(cfg.seed, Purpose::Rollout)),
        chains: cfg.lower_bound.as_ref().map_or(cfg.seed, |l| l.seed),
    };
    let loop_cfg = cfg.loop_config();
    let mut manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds,
        sigma_draws: Vec::new(),
        bases: 0,
        constraint_pairs: 0,
        saa_size: None,
        instance: serde_json::Value::Null,
        backend: cfg.backend.name(),
    };
    let trace = match cfg.problem()? {
        Problem::Toy => {
            let toy = build_toy();
            let plan = ConstraintSamplePlan::full_grid(&toy, TOY_STATE_GRID, TOY_ACTION_GRID);
            let grid = cfg.sim.action_grid.unwrap_or(TOY_ACTION_GRID);
            let basis_plan = match &cfg.toy.thetas {
                Some(t) => BasisPlan::Fixed(toy_bases(t)),
                None => {
                    BasisPlan::Random(BasisSet::fourier(cfg.seed, 1, cfg.toy.sigma_range, true)?)
                }
            };
            let backend = SimplexBackend {
                screen_tol: cfg.toy.screen_tol,
                ..cfg.backend.clone()
            };
            let setup = DiscountedSetup {
                mdp: &toy,
                backend: &backend,
                bases: basis_plan.clone(),
                plan: PlanSource::Fixed(plan.clone()),
                lb: LbMethod::LpValue,
                pc: PcMethod::Analytic(Box::new(|v: &dyn ValueFunction| {
                    toy_constant_policy_cost(toy_greedy_constant_action(&toy, v, grid)?)
                })),
            };
            let trace = finish_discounted(&dir, cfg, run(&setup, &loop_cfg))?;
            let bases = take_bases(&basis_plan, trace.last().map_or(0, |r| r.n));
            manifest.sigma_draws = sigma_draws(&bases);
            manifest.bases = bases.len();
            manifest.constraint_pairs = plan.num_state_action();
            manifest.instance = serde_json::json!({ "name": "toy", "state_grid": TOY_STATE_GRID, "action_grid": TOY_ACTION_GRID });
            write_toy_curve(&dir, &toy, &basis_plan, &trace)?;
            if let (Some(w), Some(r)) = (trace.best_ub_weights(), trace.last()) {
                write_visits(
                    &dir,
                    cfg,
                    &toy,
                    &take_bases(&basis_plan, r.incumbent_ub_n),
                    w,
                    grid,
                    100,
                )?;
            }
            trace
        }
        Problem::Pic(id) => {
            let p = instance_from_table(id)?;
            let mdp = PicMdp::new(p.clone(), cfg.pic.saa_size, cfg.seed)?;
            let sim = sim_config(cfg, p.gamma, p.a_max as usize + 1);
            let basis_plan =
                BasisPlan::Random(BasisSet::fourier(cfg.seed, 3, cfg.pic.sigma_range, false)?);
            let saddle = SaddleConfig {
                seed: seeds_chain(cfg),
                ..cfg.lower_bound.clone().unwrap_or_default()
            };
            let params: PicParams = p.clone();
            let setup = DiscountedSetup {
                mdp: &mdp,
                backend: &cfg.backend,
                bases: basis_plan.clone(),
                plan: PlanSource::Uniform {
                    count: cfg.pic.constraints,
                    seed: cfg.seed,
                },
                lb: LbMethod::Saddle {
                    cfg: saddle,
                    constants: Box::new(move |w| pic_constants(&params, w)),
                },
                pc: PcMethod::Simulate(sim.clone()),
            };
            let trace = finish_discounted(&dir, cfg, run(&setup, &loop_cfg))?;
            let bases = take_bases(&basis_plan, trace.last().map_or(0, |r| r.n));
            manifest.sigma_draws = sigma_draws(&bases);
            manifest.bases = bases.len();
            manifest.constraint_pairs = cfg.pic.constraints;
            manifest.saa_size = Some(cfg.pic.saa_size);
            manifest.instance = serde_json::to_value(&p)?;
            if let (Some(w), Some(r)) = (trace.best_ub_weights(), trace.last()) {
                write_visits(
                    &dir,
                    cfg,
                    &mdp,
                    &take_bases(&basis_plan, r.incumbent_ub_n),
                    w,
                    sim.action_grid,
                    10,
                )?;
            }
            trace
        }
        Problem::Gjr(spec) => {
            let p = match spec {
                Some(s) => gjr_instance(&s, &mut stream(cfg.seed, Purpose::Instance, 0))?,
                None => cfg.gjr.instance.clone().expect("validated"),
            };
            manifest.instance = serde_json::to_value(&p)?;
            let result = run_gjr(&p, &loop_cfg, &cfg.gjr.run, &cfg.backend, cfg.seed);
            let trace = finish_discounted(&dir, cfg, result)?;
            let mut bases = BasisSet::stump(
                cfg.seed,
                p.items(),
                cfg.gjr.run.sigma_range(&p),
                crate::bases::STUMP_EPS,
            )?;
            bases.extend(trace.last().map_or(0, |r| r.n));
            manifest.sigma_draws = sigma_draws(&bases);
            manifest.bases = bases.len();
            manifest.constraint_pairs = cfg.gjr.run.init_pairs;
            trace
        }
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let bounds = bounds_of(cfg, &trace);
    write_json(&dir.join("bounds.json"), &bounds)?;
    Ok(RunOutcome { dir, trace, bounds })
}

fn seeds_chain(cfg: &RunConfig) -> u64 {
    cfg.lower_bound.as_ref().map_or(cfg.seed, |l| l.seed)
}

fn take_bases(plan: &BasisPlan, n: usize) -> BasisSet {
    match plan {
        BasisPlan::Fixed(b) => b.prefix(n),
        BasisPlan::Random(b) => {
            let mut s = b.clone();
            s.extend(n.saturating_sub(s.len()));
            s.prefix(n)
        }
    }
}

/// V*, and the incumbent lower-bound and policy VFAs on the state grid.
fn write_toy_curve(
    dir: &Path,
    toy: &crate::toy::ToyMdp,
    plan: &BasisPlan,
    trace: &LoopTrace,
) -> Result<()> {
    let Some(last) = trace.last() else {
        return Ok(());
    };
    let curve = |n: usize, w: Option<&[f64]>| -> Result<Vec<f64>> {
        let bases = take_bases(plan, n);
        let w = VfaWeights::from_vec(w.unwrap_or(&[]));
        let vfa = LinearVfa::new(toy, &bases, &w)?;
        Ok(BoxBounds::cube(1, 0.0, 1.0)
            .grid(TOY_STATE_GRID)
            .iter()
            .map(|s| vfa.value(s))
            .collect())
    };
    let lb = curve(last.incumbent_lb_n, trace.best_lb_weights())?;
    let ub = curve(last.incumbent_ub_n, trace.best_ub_weights())?;
    let mut out =
        csv::Writer::from_writer(BufWriter::new(fs::File::create(dir.join("vfa_curve.csv"))?));
    out.write_record(["s", "v_star", "v_incumbent_lb", "v_incumbent_pc"])?;
    for (k, s) in BoxBounds::cube(1, 0.0, 1.0)
        .grid(TOY_STATE_GRID)
        .iter()
        .enumerate()
    {
        out.write_record([
            format!("{:?}", s[0]),
            format!("{:?}", toy_value_function(s[0])?),
            format!("{:?}", lb[k]),
            format!("{:?}", ub[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub problem: String,
    pub runs: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Min/median/max gap per problem, problems in first-seen order. The median
/// of an even count is the mean of the two middle values.
pub fn gap_table(entries: &[(String, f64)]) -> Result<Vec<GapRow>> {
    if entries.is_empty() {
        return Err(Error::Parameter("no runs to summarize".into()));
    }
    let mut order: Vec<String> = Vec::new();
    for (p, _) in entries {
        if !order.contains(p) {
            order.push(p.clone());
        }
    }
    Ok(order
        .into_iter()
        .map(|p| {
            let mut g: Vec<f64> = entries
                .iter()
                .filter(|(q, _)| *q == p)
                .map(|(_, v)| *v)
                .collect();
            g.sort_by(f64::total_cmp);
            let k = g.len();
            let median = if k % 2 == 1 {
                g[k / 2]
            } else {
                0.5 * (g[k / 2 - 1] + g[k / 2])
            };
            GapRow {
                problem: p,
                runs: k,
                min: g[0],
                median,
                max: g[k - 1],
            }
        })
        .collect())
}

/// Reads `bounds.json` from each run directory and renders the gap table
/// (gaps in percent) as CSV.
pub fn emit_table(run_dirs: &[PathBuf]) -> Result<String> {
    let mut entries = Vec::new();
    for d in run_dirs {
        let text = fs::read_to_string(d.join("bounds.json"))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("schema").and_then(|v| v.as_str()) != Some(BOUNDS_SCHEMA) {
            return Err(Error::Config {
                field: format!("{}/bounds.json:schema", d.display()),
                message: format!("expected {BOUNDS_SCHEMA}"),
            });
        }
        let b: Bounds = serde_json::from_value(value)?;
        entries.push((b.problem, 100.0 * b.tau_star));
    }
    let rows = gap_table(&entries)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "problem",
        "runs",
        "min_gap_pct",
        "median_gap_pct",
        "max_gap_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.problem,
            r.runs.to_string(),
            format!("{:?}", r.min),
            format!("{:?}", r.median),
            format!("{:?}", r.max),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Instance parameters for `print-instance`.
pub fn instance_json(problem: &str, seed: u64) -> Result<String> {
    let value = match Problem::parse(problem)? {
        Problem::Toy => serde_json::json!({
            "name": "toy", "gamma": crate::toy::TOY_GAMMA, "stay_probability": crate::toy::TOY_STAY,
            "state_grid": TOY_STATE_GRID, "action_grid": TOY_ACTION_GRID
        }),
        Problem::Pic(id) => serde_json::to_value(instance_from_table(id)?)?,
        Problem::Gjr(Some(spec)) => serde_json::to_value(gjr_instance(
            &spec,
            &mut stream(seed, Purpose::Instance, 0),
        )?)?,
        Problem::Gjr(None) => {
            return Err(Error::Config {
                field: "problem".into(),
                message: "gjr:custom has no generated instance".into(),
            })
        }
    };
    Ok(serde_json::to_string_pretty(&value)?)
}
