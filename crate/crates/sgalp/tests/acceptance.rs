//! Exit criteria. Each test writes one `criterion N: PASS|FAIL ...` line to
//! stderr (unbuffered, so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use sgalp::adaptive::{
    fluctuation_stats, run, BasisPlan, DiscountedSetup, LbMethod, LoopConfig, LoopTrace, ModelKind,
    PcMethod, PlanSource,
};
use sgalp::bases::{falp_sample_bound, BasisSet, BoundConstants, STUMP_EPS};
use sgalp::experiment::{parse_config, run_experiment};
use sgalp::gjr::{
    action_grid, capacity_from_pct, constraint_generation, gjr_step, k_step_greedy, sample_pairs,
    sbar_for_scheme, separate, simulate_average_cost, BiasApprox, CutConfig, GjrParams,
    GjrRunConfig, SbarScheme, SearchPlan,
};
use sgalp::lp::{build_falp, solve, ConstraintSamplePlan, SimplexBackend, VfaWeights};
use sgalp::mdp::BoxBounds;
use sgalp::policy::{
    estimate_visit_frequency, ConstantPolicy, LinearVfa, SimConfig, ValueFunction,
};
use sgalp::rng::{stream, Purpose};
use sgalp::toy::{
    build_toy, toy_bases, toy_constant_policy_cost, toy_greedy_constant_action, toy_value_function,
    ToyMdp, TOY_ACTION_GRID, TOY_SCREEN_TOL, TOY_STATE_GRID,
};

fn report(criterion: usize, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

// ---------------------------------------------------------------- toy

fn toy_loop(thetas: &[f64], model: ModelKind) -> LoopTrace {
    let toy = build_toy();
    let backend = SimplexBackend {
        screen_tol: TOY_SCREEN_TOL,
        ..Default::default()
    };
    let plan = ConstraintSamplePlan::full_grid(&toy, TOY_STATE_GRID, TOY_ACTION_GRID);
    let setup = DiscountedSetup {
        mdp: &toy,
        backend: &backend,
        bases: BasisPlan::Fixed(toy_bases(thetas)),
        plan: PlanSource::Fixed(plan),
        lb: LbMethod::LpValue,
        pc: PcMethod::Analytic(Box::new(|v: &dyn ValueFunction| {
            toy_constant_policy_cost(toy_greedy_constant_action(&toy, v, TOY_ACTION_GRID)?)
        })),
    };
    let cfg = LoopConfig {
        batch: 1,
        tolerance: 1e-9,
        max_bases: thetas.len(),
        model,
        redraw_plan: false,
    };
    run(&setup, &cfg).expect("toy loop")
}

fn toy_action(toy: &ToyMdp, thetas: &[f64], weights: &[f64]) -> f64 {
    let bases = toy_bases(thetas);
    let w = VfaWeights::from_vec(weights);
    let vfa = LinearVfa::new(toy, &bases, &w).unwrap();
    toy_greedy_constant_action(toy, &vfa, TOY_ACTION_GRID).unwrap()
}

#[test]
fn criterion_01_toy_reproduction() {
    let start = Instant::now();
    let toy = build_toy();
    let s1 = toy_loop(&[2.0, -5.0, 3.0], ModelKind::Falp);
    let s2 = toy_loop(&[2.0, -5.0, 40.0], ModelKind::Falp);
    let it2 = &s1.records[1];
    let a2 = toy_action(&toy, &[2.0, -5.0], &s1.weights[1]);
    let it3 = &s1.records[2];
    let raw3 = &s2.records[2];
    let elapsed = start.elapsed().as_secs_f64();
    let checks = [
        ("LB(2,-5) in [0.12,0.18]", in_band(it2.lb, 0.12, 0.18)),
        ("action(2,-5) in [0.50,0.53]", in_band(a2, 0.50, 0.53)),
        ("PC(2,-5) in [0.36,0.42]", in_band(it2.pc, 0.36, 0.42)),
        ("LB(+3) in [0.20,0.26]", in_band(it3.lb, 0.20, 0.26)),
        ("PC(+3) in [0.31,0.37]", in_band(it3.pc, 0.31, 0.37)),
        ("raw PC(+40) in [1.05,1.25]", in_band(raw3.pc, 1.05, 1.25)),
        (
            "incumbent PC(+40) in [0.36,0.42]",
            in_band(raw3.incumbent_pc, 0.36, 0.42),
        ),
        ("runtime < 120 s", elapsed < 120.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        1,
        failed.is_empty(),
        &format!(
            "LB={:.4} a={:.3} PC={:.4} | +3: LB={:.4} PC={:.4} | +40: raw PC={:.4} incumbent PC={:.4} | {elapsed:.1}s | failed: {failed:?}",
            it2.lb, a2, it2.pc, it3.lb, it3.pc, raw3.pc, raw3.incumbent_pc
        ),
    );
}

#[test]
fn criterion_02_toy_optimal_cost() {
    let pc = toy_constant_policy_cost(0.5).unwrap();
    let exact = (pc - 0.25 / 0.91).abs() <= 1e-12;
    let rounded = format!("{pc:.2}") == "0.27";
    report(
        2,
        exact && rounded,
        &format!("PC(0.5)={pc:.15} vs 0.25/0.91={:.15}", 0.25 / 0.91),
    );
}

#[test]
fn criterion_03_pointwise_lower_bound() {
    let toy = build_toy();
    let backend = SimplexBackend {
        screen_tol: TOY_SCREEN_TOL,
        ..Default::default()
    };
    let plan = ConstraintSamplePlan::full_grid(&toy, TOY_STATE_GRID, TOY_ACTION_GRID);
    let grid = BoxBounds::cube(1, 0.0, 1.0).grid(TOY_STATE_GRID);
    let v_star: Vec<f64> = grid
        .iter()
        .map(|s| toy_value_function(s[0]).unwrap())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let mut bases = BasisSet::fourier(seed, 1, [0.05, 0.5], true).unwrap();
        bases.extend(10);
        let sol = solve(&build_falp(&toy, &bases, &plan).unwrap(), &backend).unwrap();
        let vfa = LinearVfa::new(&toy, &bases, &sol.weights).unwrap();
        for (s, v) in grid.iter().zip(&v_star) {
            worst = worst.max(vfa.value(s) - v);
        }
    }
    report(
        3,
        worst <= 1e-6,
        &format!("max over 20 seeds x 1001 states of V - V* = {worst:.3e}"),
    );
}

#[test]
fn criterion_04_fglp_monotone_chain() {
    let toy = build_toy();
    let backend = SimplexBackend {
        screen_tol: TOY_SCREEN_TOL,
        ..Default::default()
    };
    let plan = ConstraintSamplePlan::full_grid(&toy, TOY_STATE_GRID, TOY_ACTION_GRID);
    let cfg = LoopConfig {
        batch: 2,
        tolerance: 1e-9,
        max_bases: 20,
        model: ModelKind::Fglp,
        redraw_plan: false,
    };
    let mut worst = f64::INFINITY;
    let mut iterations = 0;
    for seed in 1..=5u64 {
        let setup = DiscountedSetup {
            mdp: &toy,
            backend: &backend,
            bases: BasisPlan::Random(BasisSet::fourier(seed, 1, [0.05, 0.5], true).unwrap()),
            plan: PlanSource::Fixed(plan.clone()),
            lb: LbMethod::LpValue,
            pc: PcMethod::Analytic(Box::new(|v: &dyn ValueFunction| {
                toy_constant_policy_cost(toy_greedy_constant_action(&toy, v, TOY_ACTION_GRID)?)
            })),
        };
        let trace = run(&setup, &cfg).unwrap_or_else(|f| {
            panic!(
                "seed {seed}: {} after {} records",
                f.error,
                f.partial.records.len()
            )
        });
        iterations = iterations.max(trace.records.len());
        assert_eq!(trace.records.len(), 10, "seed {seed} stopped early");
        for r in &trace.records[1..] {
            worst = worst.min(r.guide_margin.expect("guided iteration"));
        }
    }
    report(
        4,
        worst >= -1e-6,
        &format!("min over 5 seeds x {iterations} iterations x 1001 guide states of V_n - V_n-1 = {worst:.3e}"),
    );
}

#[test]
fn criterion_05_visit_concentration() {
    let toy = build_toy();
    let trace = toy_loop(&[2.0, -5.0], ModelKind::Falp);
    let a = toy_action(&toy, &[2.0, -5.0], &trace.weights[1]);
    let sim = SimConfig {
        horizon: 200,
        replications: 1000,
        action_grid: TOY_ACTION_GRID,
        rollout_seed: 11,
    };
    let hist = estimate_visit_frequency(&toy, &ConstantPolicy(vec![a]), 100, &sim).unwrap();
    let mass = hist.normalized()[hist.cell_of(&[a])];
    report(
        5,
        mass >= 0.99,
        &format!("constant action {a:.3}: mass in its bin = {mass:.4} (need >= 0.99)"),
    );
}

// ---------------------------------------------------------------- PIC

struct PicRuns {
    seeds: Vec<u64>,
    falp: Vec<LoopTrace>,
    fglp: Vec<LoopTrace>,
    seconds: f64,
}

fn pic_run(dir: &Path, model: &str, seed: u64) -> LoopTrace {
    let text = format!(
        r#"{{"problem": "pic:1", "model": "{model}", "seed": {seed}, "output_dir": {:?},
            "loop": {{"batch": 10, "tolerance": 1e-6, "max_bases": 50}},
            "pic": {{"constraints": 5000, "saa_size": 500}}}}"#,
        dir.to_str().unwrap()
    );
    run_experiment(&parse_config(&text).unwrap())
        .expect("PIC run")
        .trace
}

fn pic_runs() -> &'static PicRuns {
    static RUNS: OnceLock<PicRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let seeds: Vec<u64> = (1..=5).collect();
        let falp = seeds
            .iter()
            .map(|s| pic_run(dir.path(), "falp", *s))
            .collect();
        let fglp = seeds
            .iter()
            .map(|s| pic_run(dir.path(), "fglp", *s))
            .collect();
        PicRuns {
            seeds,
            falp,
            fglp,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_06_lower_bound_validity() {
    let runs = pic_runs();
    let mut problems = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for (k, seed) in runs.seeds.iter().enumerate() {
        for (model, trace) in [("falp", &runs.falp[k]), ("fglp", &runs.fglp[k])] {
            for r in &trace.records {
                let se = r.lb_stderr.hypot(r.pc_stderr);
                if r.lb > r.pc + 3.0 * se {
                    problems.push(format!(
                        "{model} seed {seed} N={}: LB {:.2} > PC {:.2} + 3*{se:.2}",
                        r.n, r.lb, r.pc
                    ));
                }
            }
            if trace
                .records
                .windows(2)
                .any(|w| w[1].tau_star > w[0].tau_star)
            {
                problems.push(format!("{model} seed {seed}: incumbent gap increased"));
            }
            let gap = trace.last().unwrap().tau_star;
            worst_gap = worst_gap.max(gap);
            if gap > 0.25 {
                problems.push(format!("{model} seed {seed}: gap {gap:.3} > 0.25"));
            }
        }
    }
    if runs.seconds >= 600.0 {
        problems.push(format!("runtime {:.0}s", runs.seconds));
    }
    report(
        6,
        problems.is_empty(),
        &format!(
            "10 runs, worst final gap {:.2}%, {:.0}s | {problems:?}",
            100.0 * worst_gap,
            runs.seconds
        ),
    );
}

#[test]
fn criterion_07_fluctuation() {
    let runs = pic_runs();
    let mut wins = 0;
    let mut detail = Vec::new();
    for (k, seed) in runs.seeds.iter().enumerate() {
        let fa = fluctuation_stats(&runs.falp[k].raw_pc()).unwrap();
        let fg = fluctuation_stats(&runs.fglp[k].raw_pc()).unwrap();
        if fg.fluctuation_pct <= fa.fluctuation_pct {
            wins += 1;
        }
        detail.push(format!(
            "s{seed}: FALP {:.0}% FGLP {:.0}%",
            fa.fluctuation_pct, fg.fluctuation_pct
        ));
    }
    report(
        7,
        wins >= 4,
        &format!("FGLP <= FALP on {wins}/5 seeds ({})", detail.join(", ")),
    );
}

// ---------------------------------------------------------------- GJR

fn desk_instance() -> GjrParams {
    let lambda = vec![1.0, 1.0];
    let s_bar = sbar_for_scheme(SbarScheme::Constant, &lambda, &[0.5, 0.5], &[1.0, 1.0]);
    let a_bar = capacity_from_pct(&s_bar, 100);
    GjrParams {
        lambda,
        s_bar,
        a_bar,
        c_fixed: 100.0,
        c_item: vec![10.0, 30.0],
        holding: vec![0.0, 0.0],
    }
}

struct GjrSolved {
    p: GjrParams,
    bases: BasisSet,
    approx: BiasApprox,
    eta: f64,
    cuts: usize,
}

fn gjr_solved() -> &'static GjrSolved {
    static SOLVED: OnceLock<GjrSolved> = OnceLock::new();
    SOLVED.get_or_init(|| {
        let p = desk_instance();
        let seed = 7;
        let mut bases =
            BasisSet::stump(seed, 2, GjrRunConfig::default().sigma_range(&p), STUMP_EPS).unwrap();
        bases.extend(10);
        let init = sample_pairs(&p, 200, &mut stream(seed, Purpose::Constraints, 0));
        let res = constraint_generation(
            &p,
            &bases,
            &init,
            &SimplexBackend::default(),
            None,
            &CutConfig::default(),
        )
        .unwrap();
        GjrSolved {
            eta: res.approx.eta(&p),
            approx: res.approx,
            bases,
            cuts: res.cuts,
            p,
        }
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Smallest slack c − η T − u(s) + u(s') over a grid with 50 points per free
/// coordinate: for each stocked-out item z and each ordered support S ∋ z,
/// the other item's level on [0, s̄] and each ordered amount on (0, room].
fn grid_oracle(p: &GjrParams, bases: &BasisSet, approx: &BiasApprox) -> f64 {
    let eta = approx.eta(p);
    let mut best = f64::INFINITY;
    for z in 0..2 {
        let other = 1 - z;
        for level in linspace(0.0, p.s_bar[other], 50) {
            let mut s = vec![0.0; 2];
            s[other] = level;
            for support in [vec![z], vec![0, 1]] {
                let axes: Vec<Vec<f64>> = (0..2)
                    .map(|j| {
                        if support.contains(&j) {
                            linspace(0.0, p.s_bar[j] - s[j], 51)[1..].to_vec()
                        } else {
                            vec![0.0]
                        }
                    })
                    .collect();
                for a0 in &axes[0] {
                    for a1 in &axes[1] {
                        let a = [*a0, *a1];
                        if !p.decision_feasible(&s, &a) {
                            continue;
                        }
                        let (t, s2) = gjr_step(p, &s, &a).unwrap();
                        let slack = p.cost_unchecked(&s, &a) - eta * t - approx.bias(bases, &s)
                            + approx.bias(bases, &s2);
                        best = best.min(slack);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn criterion_08_gjr_validity() {
    let start = Instant::now();
    let g = gjr_solved();
    let points = GjrRunConfig::default().sim_points(&g.p);
    let sim = simulate_average_cost(&g.p, &g.approx, &g.bases, 4000, 4, points).unwrap();
    let mut rng = stream(19, Purpose::Misc, 0);
    let mut approxes = vec![g.approx.clone(), BiasApprox::zeros(2, g.bases.len())];
    for _ in 0..3 {
        approxes.push(BiasApprox {
            eta_hat: rng.random_range(0.0..60.0),
            beta1: (0..2).map(|_| rng.random_range(-20.0..20.0)).collect(),
            beta2: (0..g.bases.len())
                .map(|_| rng.random_range(-20.0..20.0))
                .collect(),
            intercept: 0.0,
        });
    }
    let mut worst_excess = f64::NEG_INFINITY;
    for approx in &approxes {
        let found = separate(&g.p, &g.bases, approx, &SearchPlan::default()).unwrap();
        let oracle = grid_oracle(&g.p, &g.bases, approx);
        worst_excess = worst_excess.max(found.slack - oracle);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = g.cuts <= 500 && g.eta <= sim + 1e-3 && worst_excess <= 1e-6 && elapsed < 300.0;
    report(
        8,
        pass,
        &format!(
            "cuts={} eta={:.6} sim(4000, K=4, {points} pts)={sim:.6} max(separate - grid oracle)={worst_excess:.3e} {elapsed:.1}s",
            g.cuts, g.eta
        ),
    );
}

#[test]
fn criterion_09_k_step_oracle() {
    let g = gjr_solved();
    let eta = g.approx.eta(&g.p);
    let mut rng = stream(23, Purpose::Misc, 0);
    let mut mismatches = 0;
    for _ in 0..20 {
        let s = g.p.sample_state(&mut rng);
        let got = k_step_greedy(&g.p, &g.approx, &g.bases, &s, 2, 21).unwrap();
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for a1 in action_grid(&g.p, &s, 21) {
            let (t1, s1) = gjr_step(&g.p, &s, &a1).unwrap();
            let step1 = g.p.cost_unchecked(&s, &a1) - eta * t1;
            for a2 in action_grid(&g.p, &s1, 21) {
                let (t2, s2) = gjr_step(&g.p, &s1, &a2).unwrap();
                let v = (0.0 + step1)
                    + (g.p.cost_unchecked(&s1, &a2) - eta * t2)
                    + g.approx.bias(&g.bases, &s2);
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, vec![a1.clone(), a2]));
                }
            }
        }
        let (v, plan) = best.expect("a feasible plan");
        if v != got.objective || plan != got.actions {
            mismatches += 1;
        }
    }
    report(
        9,
        mismatches == 0,
        &format!("{mismatches}/20 states differ from exhaustive enumeration (K=2, 21 points)"),
    );
}

// ---------------------------------------------------------------- plumbing

#[test]
fn criterion_10_determinism() {
    let configs = [
        r#"{"problem": "toy", "model": "fglp", "seed": 4, "loop": {"batch": 2, "tolerance": 1e-6, "max_bases": 6}}"#,
        r#"{"problem": "pic:1", "model": "fglp", "seed": 4, "loop": {"batch": 5, "tolerance": 1e-6, "max_bases": 15},
            "pic": {"constraints": 1000, "saa_size": 100}, "sim": {"replications": 100}}"#,
        r#"{"problem": "gjr:custom", "model": "fglp", "seed": 4, "loop": {"batch": 3, "tolerance": 1e-6, "max_bases": 9},
            "gjr": {"instance": {"lambda": [1, 1], "s_bar": [2, 2], "a_bar": 4, "c_fixed": 100, "c_item": [10, 30],
                    "holding": [0, 0]}, "sim_stages": 300}}"#,
    ];
    let mut differing = Vec::new();
    for text in configs {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let mut value: serde_json::Value = serde_json::from_str(text).unwrap();
            value["output_dir"] = serde_json::Value::String(dir.path().to_str().unwrap().into());
            let cfg = parse_config(&value.to_string()).unwrap();
            let out = match run_experiment(&cfg) {
                Ok(o) => o,
                Err(e) => panic!("{}: {e}", cfg.problem),
            };
            outputs.push(std::fs::read(out.dir.join("trace.csv")).unwrap());
        }
        if outputs[0] != outputs[1] {
            differing.push(
                serde_json::from_str::<serde_json::Value>(text).unwrap()["problem"].to_string(),
            );
        }
    }
    report(
        10,
        differing.is_empty(),
        &format!("toy, pic:1, gjr:custom re-run twice; differing trace.csv: {differing:?}"),
    );
}

#[test]
fn criterion_11_sample_bound() {
    let mut rng = stream(31, Purpose::Misc, 0);
    let mut mismatches = 0;
    for _ in 0..100 {
        let eps = rng.random_range(0.05..2.0);
        let b = rng.random_range(0.0..3.0);
        let gamma = rng.random_range(0.5..0.99);
        let diam = rng.random_range(0.1..20.0);
        let lip = rng.random_range(0.1..5.0);
        let msq = rng.random_range(0.1..30.0);
        let consts = BoundConstants::new(diam, lip, msq, 1.0).unwrap();
        let got = falp_sample_bound(eps, 1.0, b, &consts, gamma).unwrap();
        let omega = 4.0 * (diam + 1.0) * lip * f64::sqrt(msq);
        let half = (1.0 + gamma) * omega / 2.0;
        let expected = (b * b * half * half / (eps * eps)).ceil() as u64;
        if got != expected {
            mismatches += 1;
        }
    }
    report(
        11,
        mismatches == 0,
        &format!("{mismatches}/100 tuples differ from direct arithmetic"),
    );
}
