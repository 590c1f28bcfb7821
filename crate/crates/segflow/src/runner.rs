//! Config-driven experiment commands: train, sample, joint, ablate,
//! diagnose. Every command is deterministic per (config, seed) down to
//! the bytes it writes; seeds run concurrently (bounded by the
//! `SEGFLOW_THREADS` env var) into per-seed paths, with aggregates
//! assembled in seed order by the coordinator.

use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, TargetSpec, Tolerances};
use crate::core::{
    fmt_float, AlphaDensity, AlphaPoint, Condition, State, TimeGrid, TrajectoryLog,
};
use crate::diagnostics::{
    kl_proxy, norm_derivative_residual, plausibility, run_kl_probe, KlProbeConfig,
};
use crate::error::{Error, Result};
use crate::fields::{mc_velocity_oracle, GaussianMixtureTarget, GmmField, VelocityField};
use crate::trainer::{self, conditional_variance_floor, FlowSample, MlpField};
use crate::transport::{run_joint, sample_base, Estimator, Variant};

/// CLI-level options applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct CmdOptions {
    pub seed_override: Option<u64>,
    pub out_override: Option<PathBuf>,
    pub dry_run: bool,
}

fn out_dir(cfg: &ExperimentConfig, opts: &CmdOptions) -> PathBuf {
    opts.out_override
        .clone()
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn effective_seeds(cfg: &ExperimentConfig, opts: &CmdOptions) -> Vec<u64> {
    match opts.seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    }
}

/// Initial latent x ~ N(0, I) for a seed. Drawn on a dedicated RNG
/// stream so it never collides with the transport's own draws.
pub fn init_state(dim: usize, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    State::new((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .expect("normal draws are finite")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn thread_budget(n_tasks: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("SEGFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available);
    cap.min(n_tasks).max(1)
}

/// Print a resolved-config line and return true when running dry.
fn handle_dry_run(cfg: &ExperimentConfig, opts: &CmdOptions, command: &str) -> bool {
    if opts.dry_run {
        println!("dry-run: {command} validated; resolved config follows");
        println!("{}", cfg.to_json());
        true
    } else {
        false
    }
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub final_loss: Option<f64>,
    pub floor: Option<f64>,
}

/// Train the MLP field and write the checkpoint plus a per-step loss CSV.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &CmdOptions) -> Result<TrainOutcome> {
    let train_spec = cfg.train.as_ref().ok_or_else(|| {
        Error::Config("config has no 'train' section; cmd_train needs one".into())
    })?;
    let target = cfg.mixture()?;
    let seed = opts.seed_override.unwrap_or(cfg.seeds[0]);
    let tc = train_spec.resolve(&cfg.conditions, cfg.t_min, seed);
    let out = out_dir(cfg, opts);
    if handle_dry_run(cfg, opts, "train") {
        return Ok(TrainOutcome {
            checkpoint: out.join("checkpoint.bin"),
            final_loss: None,
            floor: None,
        });
    }

    let (field, losses) = trainer::train(target, &tc)?;
    let ckpt = out.join("checkpoint.bin");
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    field.save_checkpoint(&ckpt)?;

    let mut csv = String::from("step,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", fmt_float(*loss)));
    }
    write_file(&out.join("loss_curve.csv"), &csv)?;

    let floor = conditional_variance_floor(target, &tc.conditions, cfg.t_min, 50_000, seed ^ 0x5eed)?;
    let final_loss = losses.last().copied();
    match final_loss {
        Some(l) => println!(
            "train: {} steps, final loss {l:.6} (analytic floor {floor:.6})",
            losses.len()
        ),
        None => println!("train: 0 steps, field left at initialization (analytic floor {floor:.6})"),
    }
    Ok(TrainOutcome {
        checkpoint: ckpt,
        final_loss,
        floor: Some(floor),
    })
}

/// Integrate the base sampler (no segment coupling) for condition `a`.
pub fn cmd_sample(cfg: &ExperimentConfig, opts: &CmdOptions) -> Result<Value> {
    let field = cfg.resolve_field()?;
    let out = out_dir(cfg, opts);
    if handle_dry_run(cfg, opts, "sample") {
        return Ok(Value::Null);
    }
    let grid = TimeGrid::uniform(cfg.transport.steps)?;
    let seeds = effective_seeds(cfg, opts);
    let results = run_seeds(&seeds, |seed| {
        let x0 = init_state(field.dim(), seed);
        let states = sample_base(field.as_ref(), &cfg.conditions.a, &grid, &x0)?;
        let mut csv = String::from("step,t");
        for i in 0..field.dim() {
            csv.push_str(&format!(",x_{i}"));
        }
        csv.push('\n');
        for (i, s) in states.iter().enumerate() {
            csv.push_str(&i.to_string());
            csv.push(',');
            csv.push_str(&fmt_float(grid.times()[i]));
            for v in s.values() {
                csv.push(',');
                csv.push_str(&fmt_float(*v));
            }
            csv.push('\n');
        }
        write_file(&out.join(format!("seed_{seed}")).join("base_trajectory.csv"), &csv)?;
        Ok(json!({ "seed": seed, "final": states.last().unwrap().values() }))
    });
    let summary = collect_summary(results)?;
    let value = json!({ "command": "sample", "seeds": summary });
    write_json(&out.join("sample_summary.json"), &value)?;
    Ok(value)
}

/// Per-seed joint transport: trajectory CSV + summary JSON each, plus an
/// aggregate over seeds.
pub fn cmd_joint(cfg: &ExperimentConfig, opts: &CmdOptions) -> Result<Value> {
    let field = cfg.resolve_field()?;
    let out = out_dir(cfg, opts);
    if handle_dry_run(cfg, opts, "joint") {
        return Ok(Value::Null);
    }
    let seeds = effective_seeds(cfg, opts);
    let results = run_seeds(&seeds, |seed| {
        let tc = cfg.transport.resolve(seed)?;
        let x0 = init_state(field.dim(), seed);
        let log = run_joint(field.as_ref(), &cfg.conditions.a, &cfg.conditions.b, &tc, &x0)?;
        let seed_dir = out.join(format!("seed_{seed}"));
        write_file(&seed_dir.join("trajectory.csv"), &log.to_csv())?;
        let mut summary = log.summary();
        summary["seed"] = json!(seed);
        summary["variant"] = json!(tc.variant.to_string());
        summary["non_monotone_schedule"] = json!(tc.weights.is_non_monotone());
        write_json(&seed_dir.join("summary.json"), &summary)?;
        Ok(json!({
            "seed": seed,
            "final_norm": log.final_norm(),
            "final_a": log.final_a().values(),
            "final_b": log.final_b().values(),
        }))
    });

    let mut norms = Vec::new();
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(v) => {
                norms.push(v["final_norm"].as_f64().unwrap());
                per_seed.push(v);
            }
            Err(e) => failures.push(json!({ "seed": seed, "error": e.to_string() })),
        }
    }
    if per_seed.is_empty() {
        return Err(Error::Config(format!(
            "all {} seed(s) failed; first failure: {}",
            seeds.len(),
            failures[0]["error"]
        )));
    }
    let aggregate = json!({
        "command": "joint",
        "variant": cfg.transport.variant.to_string(),
        "final_norm_mean": mean(&norms),
        "final_norm_std": std_dev(&norms),
        "seeds": per_seed,
        "failures": failures,
    });
    write_json(&out.join("aggregate.json"), &aggregate)?;
    Ok(aggregate)
}

/// Run setups A–D on identical seeds and targets; emit the comparison
/// table as CSV and JSON.
pub fn cmd_ablate(cfg: &ExperimentConfig, opts: &CmdOptions) -> Result<Value> {
    let target = cfg.mixture()?.clone();
    let field = GmmField::with_t_min(target.clone(), cfg.t_min);
    let out = out_dir(cfg, opts);
    if handle_dry_run(cfg, opts, "ablate") {
        return Ok(Value::Null);
    }
    let seeds = effective_seeds(cfg, opts);
    let c_mid = Condition::lerp(&cfg.conditions.a, &cfg.conditions.b, 0.5);
    let variants = [Variant::A, Variant::B, Variant::C, Variant::D];

    // Common α grid so per-variant point sets are comparable.
    let compare_points = AlphaDensity::uniform().grid(cfg.transport.k.max(2))?;

    struct SeedRow {
        final_norm: f64,
        midpoint_nll: f64,
        points: Vec<(AlphaPoint, State)>,
    }

    let results = run_seeds(&seeds, |seed| {
        let x0 = init_state(target.dim(), seed);
        let mut rows = Vec::new();
        for variant in variants {
            let mut spec = cfg.transport.clone();
            spec.variant = variant;
            let tc = spec.resolve(seed)?;
            let log = run_joint(&field, &cfg.conditions.a, &cfg.conditions.b, &tc, &x0)?;
            let seg = crate::core::Segment::new(log.final_a().clone(), log.final_b().clone())?;
            let midpoint = seg.midpoint();
            let nll = plausibility(&target, &c_mid, &midpoint)?;
            let points: Result<Vec<(AlphaPoint, State)>> = compare_points
                .iter()
                .map(|p| Ok((*p, seg.point(p.alpha)?)))
                .collect();
            rows.push(SeedRow {
                final_norm: log.final_norm(),
                midpoint_nll: nll,
                points: points?,
            });
        }
        Ok(rows)
    });

    let mut csv = String::from("variant,seed,final_norm,midpoint_nll,kl_proxy_vs_a\n");
    let mut per_variant: Vec<Vec<(u64, f64, f64, f64)>> = vec![Vec::new(); variants.len()];
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rows) => {
                for (vi, row) in rows.iter().enumerate() {
                    // Proxy distance of this setup's final point set from
                    // setup A's, σ = 1.
                    let proxy = kl_proxy(&rows[0].points, &row.points, 1.0)?;
                    per_variant[vi].push((seed, row.final_norm, row.midpoint_nll, proxy));
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        variants[vi],
                        seed,
                        fmt_float(row.final_norm),
                        fmt_float(row.midpoint_nll),
                        fmt_float(proxy),
                    ));
                }
            }
            Err(e) => failures.push(json!({ "seed": seed, "error": e.to_string() })),
        }
    }
    if per_variant[0].is_empty() {
        return Err(Error::Config(format!(
            "all {} seed(s) failed; first failure: {}",
            seeds.len(),
            failures[0]["error"]
        )));
    }

    let mut variant_stats = Vec::new();
    for (vi, rows) in per_variant.iter().enumerate() {
        let norms: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let nlls: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let proxies: Vec<f64> = rows.iter().map(|r| r.3).collect();
        variant_stats.push(json!({
            "variant": variants[vi].to_string(),
            "final_norm_mean": mean(&norms),
            "final_norm_std": std_dev(&norms),
            "midpoint_nll_mean": mean(&nlls),
            "midpoint_nll_std": std_dev(&nlls),
            "kl_proxy_vs_a_mean": mean(&proxies),
        }));
    }
    // Per-seed direction statistic: does the full setup beat the
    // hard-cutoff one on midpoint plausibility?
    let a_rows = &per_variant[0];
    let d_rows = &per_variant[3];
    let wins = a_rows
        .iter()
        .zip(d_rows)
        .filter(|(a, d)| a.2 < d.2)
        .count();
    let a_beats_d = wins as f64 / a_rows.len() as f64;

    write_file(&out.join("ablation.csv"), &csv)?;
    let report = json!({
        "command": "ablate",
        "variants": variant_stats,
        "a_beats_d_on_midpoint_nll": a_beats_d,
        "seeds_used": a_rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        "failures": failures,
    });
    write_json(&out.join("ablation.json"), &report)?;
    Ok(report)
}

struct Check {
    name: &'static str,
    parameters: Value,
    values: Value,
    pass: bool,
}

/// Run the built-in verification ladder and write a pass/fail report.
/// Any failed check surfaces as [`Error::DiagnosticsFailed`] after the
/// report is written.
pub fn cmd_diagnose(cfg: &ExperimentConfig, opts: &CmdOptions) -> Result<Value> {
    let field = cfg.resolve_field()?;
    let out = out_dir(cfg, opts);
    if handle_dry_run(cfg, opts, "diagnose") {
        return Ok(Value::Null);
    }
    let tol = &cfg.tolerances;
    let mut checks = vec![
        gradcheck_check(tol),
        oracle_check(cfg, tol),
        residual_check(cfg, field.as_ref(), tol),
        kl_check(tol),
    ];
    if let Some(path) = &cfg.trajectory_csv {
        // Re-run the log diagnostics on a previously written trajectory.
        let values = diagnose_trajectory_csv(path)?;
        checks.push(Check {
            name: "trajectory_csv_residuals",
            parameters: json!({ "path": path.display().to_string() }),
            pass: values["max_residual"].as_f64().is_some_and(f64::is_finite),
            values,
        });
    }

    let failed = checks.iter().filter(|c| !c.pass).count();
    let report = json!({
        "command": "diagnose",
        "checks": checks.iter().map(|c| json!({
            "check": c.name,
            "parameters": c.parameters,
            "values": c.values,
            "pass": c.pass,
        })).collect::<Vec<_>>(),
        "pass": failed == 0,
    });
    write_json(&out.join("diagnostics.json"), &report)?;
    for c in &checks {
        println!("diagnose: {:30} {}", c.name, if c.pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(Error::DiagnosticsFailed(failed));
    }
    Ok(report)
}

fn gradcheck_check(tol: &Tolerances) -> Check {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    for trial in 0..3u64 {
        let d = 1 + (trial as usize) % 2;
        let field = match MlpField::init_with_rng(d, 0, &[6, 5], &mut rng) {
            Ok(f) => f,
            Err(_) => {
                return Check {
                    name: "gradcheck",
                    parameters: json!({}),
                    values: json!({"error": "init failed"}),
                    pass: false,
                }
            }
        };
        let batch: Vec<FlowSample> = (0..4)
            .map(|_| FlowSample {
                x0: (0..d).map(|_| rng.random::<f64>() - 0.5).collect(),
                eps: (0..d).map(|_| rng.random::<f64>() - 0.5).collect(),
                t: 0.2 + 0.6 * rng.random::<f64>(),
                c: Condition::zeros(0),
            })
            .collect();
        worst = worst.max(max_gradcheck_error(&field, &batch));
    }
    Check {
        name: "gradcheck",
        parameters: json!({ "networks": 3, "tolerance_rel": tol.gradcheck_rel }),
        values: json!({ "max_rel_error": worst }),
        pass: worst < tol.gradcheck_rel,
    }
}

/// Max relative error between analytic and central finite-difference
/// gradients over every parameter of the network.
pub fn max_gradcheck_error(field: &MlpField, batch: &[FlowSample]) -> f64 {
    let (_, grads) = match trainer::grad(field, batch) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..field.layers().len() {
        let n_w = field.layers()[l].weights.len();
        let n_b = field.layers()[l].biases.len();
        for idx in 0..n_w + n_b {
            let mut plus = field.clone();
            let mut minus = field.clone();
            apply_param_delta(&mut plus, l, idx, n_w, h);
            apply_param_delta(&mut minus, l, idx, n_w, -h);
            let numeric = (trainer::fm_loss(&plus, batch).unwrap()
                - trainer::fm_loss(&minus, batch).unwrap())
                / (2.0 * h);
            let analytic = if idx < n_w {
                grads[l].weights[idx]
            } else {
                grads[l].biases[idx - n_w]
            };
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2);
            worst = worst.max(err);
        }
    }
    worst
}

fn apply_param_delta(field: &mut MlpField, layer: usize, idx: usize, n_w: usize, delta: f64) {
    let l = &mut field.layers_mut()[layer];
    if idx < n_w {
        l.weights[idx] += delta;
    } else {
        l.biases[idx - n_w] += delta;
    }
}

fn benchmark_mixture() -> GaussianMixtureTarget {
    GaussianMixtureTarget::new(
        vec![0.5, 0.5],
        vec![vec![2.0, 0.0], vec![-2.0, 0.0]],
        vec![vec![0.4, 0.4], vec![0.4, 0.4]],
        vec![vec![1.5], vec![0.0]],
    )
    .expect("benchmark mixture is valid")
}

fn oracle_check(cfg: &ExperimentConfig, tol: &Tolerances) -> Check {
    let (target, cond) = match &cfg.target {
        TargetSpec::Mixture(m) => (m.clone(), cfg.conditions.a.clone()),
        TargetSpec::Checkpoint(_) => (benchmark_mixture(), Condition::new(vec![0.4]).unwrap()),
    };
    let n_probes = 10usize;
    let n = 100_000;
    let h = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(2001);
    let mut passed = 0usize;
    let mut attempted = 0usize;
    for probe in 0..n_probes {
        let t = 0.25 + 0.65 * rng.random::<f64>();
        // Probe where the noised density actually lives.
        let x0 = match target.sample_x0(&cond, &mut rng) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let xt: Vec<f64> = x0
            .iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (1.0 - t) * v + t * e
            })
            .collect();
        let x = match State::new(xt) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let exact = match target.velocity(&x, t, &cond, cfg.t_min) {
            Ok(v) => v,
            Err(_) => continue,
        };
        attempted += 1;
        match mc_velocity_oracle(&target, &x, t, &cond, n, h, 3000 + probe as u64) {
            Ok(est) => {
                let ok = exact.iter().enumerate().all(|(k, v)| {
                    (est.velocity[k] - v).abs()
                        <= (tol.oracle_stderr_mult * est.stderr[k]).max(tol.oracle_rel * v.abs())
                });
                if ok {
                    passed += 1;
                }
            }
            Err(_) => {}
        }
    }
    let fraction = if attempted == 0 {
        0.0
    } else {
        passed as f64 / attempted as f64
    };
    Check {
        name: "field_oracle_agreement",
        parameters: json!({
            "probes": n_probes, "samples": n, "bandwidth": h,
            "stderr_mult": tol.oracle_stderr_mult, "rel": tol.oracle_rel,
            "min_pass_fraction": tol.oracle_pass_fraction,
        }),
        values: json!({ "passed": passed, "attempted": attempted, "fraction": fraction }),
        pass: attempted > 0 && fraction >= tol.oracle_pass_fraction,
    }
}

fn residual_check(cfg: &ExperimentConfig, field: &dyn VelocityField, tol: &Tolerances) -> Check {
    // Eq-of-motion consistency: the max norm-derivative residual must
    // shrink linearly in dt, measured between the configured grid and its
    // twice-refined version.
    let run_at = |steps: usize| -> Result<f64> {
        let mut spec = cfg.transport.clone();
        spec.variant = Variant::A;
        spec.steps = steps;
        spec.estimator = Estimator::Grid;
        let tc = spec.resolve(cfg.seeds[0])?;
        let x0 = init_state(field.dim(), cfg.seeds[0]);
        let log = run_joint(field, &cfg.conditions.a, &cfg.conditions.b, &tc, &x0)?;
        let report = norm_derivative_residual(&log)?;
        if report.is_empty() {
            return Err(Error::Config("all steps degenerate in residual check".into()));
        }
        Ok(report.max_abs)
    };
    let n = cfg.transport.steps.max(8);
    match (run_at(n), run_at(2 * n)) {
        (Ok(coarse), Ok(fine)) => {
            // Near-collinear endpoint motion drives the residual to
            // rounding level, where the slope is meaningless noise.
            let at_machine_precision = coarse < 1e-12 && fine < 1e-12;
            let slope = (coarse / fine).log2();
            let pass =
                at_machine_precision || (slope - 1.0).abs() <= tol.residual_slope_band;
            Check {
                name: "norm_residual_convergence",
                parameters: json!({ "steps": [n, 2 * n], "slope_band": tol.residual_slope_band }),
                values: json!({
                    "max_residual_coarse": coarse, "max_residual_fine": fine,
                    "slope": slope, "at_machine_precision": at_machine_precision,
                }),
                pass,
            }
        }
        (a, b) => Check {
            name: "norm_residual_convergence",
            parameters: json!({ "steps": [n, 2 * n] }),
            values: json!({ "error": format!("{:?} / {:?}", a.err().map(|e| e.to_string()), b.err().map(|e| e.to_string())) }),
            pass: false,
        },
    }
}

fn kl_check(tol: &Tolerances) -> Check {
    let probe = KlProbeConfig::default();
    match run_kl_probe(&probe) {
        Ok(r) => {
            // Exact σ-invariance of proxy·σ².
            let pts = |shift: f64| -> Vec<(AlphaPoint, State)> {
                vec![
                    (
                        AlphaPoint { alpha: 0.0, weight: 0.5 },
                        State::new(vec![shift]).unwrap(),
                    ),
                    (
                        AlphaPoint { alpha: 1.0, weight: 0.5 },
                        State::new(vec![1.0 - shift]).unwrap(),
                    ),
                ]
            };
            let a = pts(0.0);
            let b = pts(0.05);
            let scaled: Vec<f64> = [1e-3, 1e-2, 1e-1]
                .iter()
                .map(|s| kl_proxy(&a, &b, *s).unwrap() * s * s)
                .collect();
            let invariant = scaled
                .iter()
                .all(|v| (v - scaled[0]).abs() <= 1e-12 * scaled[0].abs().max(1.0));
            let in_band = r.ratio >= tol.kl_ratio_low && r.ratio <= tol.kl_ratio_high;
            Check {
                name: "kl_leading_order",
                parameters: json!({
                    "sigma": probe.sigma, "resolution": probe.resolution,
                    "perturbation": probe.perturbation,
                    "ratio_band": [tol.kl_ratio_low, tol.kl_ratio_high],
                }),
                values: json!({
                    "proxy": r.proxy, "numerical": r.numerical, "ratio": r.ratio,
                    "sigma_invariant": invariant,
                }),
                pass: in_band && invariant,
            }
        }
        Err(e) => Check {
            name: "kl_leading_order",
            parameters: json!({}),
            values: json!({ "error": e.to_string() }),
            pass: false,
        },
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    Some(
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
            .sqrt(),
    )
}

fn collect_summary(results: Vec<(u64, Result<Value>)>) -> Result<Vec<Value>> {
    let mut ok = Vec::new();
    let mut first_err = None;
    for (_, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if ok.is_empty() {
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    Ok(ok)
}

/// Dispatch seeds across the thread budget; results come back in seed
/// order regardless of scheduling.
fn run_seeds<T, F>(seeds: &[u64], f: F) -> Vec<(u64, Result<T>)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let threads = thread_budget(seeds.len());
    if threads <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| (s, f(s))).collect();
    }
    let (tx, rx) = mpsc::channel::<(usize, Result<T>)>();
    std::thread::scope(|scope| {
        for worker in 0..threads {
            let tx = tx.clone();
            let f = &f;
            scope.spawn(move || {
                let mut i = worker;
                while i < seeds.len() {
                    let _ = tx.send((i, f(seeds[i])));
                    i += threads;
                }
            });
        }
        drop(tx);
    });
    let mut slots: Vec<Option<Result<T>>> = (0..seeds.len()).map(|_| None).collect();
    for (i, r) in rx {
        slots[i] = Some(r);
    }
    seeds
        .iter()
        .zip(slots)
        .map(|(&s, r)| (s, r.expect("worker reported a result")))
        .collect()
}

/// Reload a trajectory CSV and re-run the log-based diagnostics on it.
pub fn diagnose_trajectory_csv(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read trajectory {}: {e}", path.display())))?;
    let log = TrajectoryLog::from_csv(&text)?;
    let report = norm_derivative_residual(&log)?;
    Ok(json!({
        "trajectory": path.display().to_string(),
        "steps": log.records().len(),
        "max_residual": report.max_abs,
        "skipped": report.skipped,
    }))
}
