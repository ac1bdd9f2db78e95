//! Implementations behind the CLI subcommands: train, eval, energy, compare.
//! Errors are classified so the binary can map them to exit codes
//! (1 usage, 2 config, 3 runtime).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{streams, ExperimentConfig, TaskKind, TrainingKind};
use crate::energy::{energy_report, EnergyConfig, EnergyReport, ModelRates, OpCosts};
use crate::policy::{load_checkpoint, ModelKind, Policy};
use crate::ppo::{
    evaluate_recorded, measure_rates, train, EvalReport, HistoryPoint, TrainArtifacts, TrainError,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 1,
            CommandError::Config(_) => 2,
            CommandError::Runtime(_) => 3,
        }
    }
}

impl From<TrainError> for CommandError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => CommandError::Config(c.to_string()),
            other => CommandError::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CommandError> {
    ExperimentConfig::load(path).map_err(|e| CommandError::Config(e.to_string()))
}

/// `train`: run the full training loop from a config file.
pub fn cmd_train(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<TrainArtifacts, CommandError> {
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.experiment.seed = s;
    }
    if let Some(dir) = out_dir {
        config.experiment.out_dir = dir.to_path_buf();
    }
    let dir = config.experiment.out_dir.clone();
    let artifacts = train(&config, &dir)?;
    println!("training complete: {} updates", artifacts.history.len());
    println!("metrics: {}", artifacts.metrics_path.display());
    println!("checkpoint: {}", artifacts.checkpoint_path.display());
    if let Some(eval) = &artifacts.final_eval {
        println!(
            "final eval: success_rate={:.2} reach_rate={:.2} mean_reward={:.3}",
            eval.success_rate, eval.reach_rate, eval.mean_reward
        );
    }
    Ok(artifacts)
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    step: usize,
    env: usize,
    d: f64,
    d_lf: f64,
    d_rf: f64,
    d_align: f64,
    d_mid: f64,
    dx: f64,
    dy: f64,
    z_lf: f64,
    z_rf: f64,
    z_mid: f64,
    z_cube: f64,
    gap: f64,
    gap_target: f64,
    eps_xy: f64,
    verticality: f64,
    grasped: bool,
    r_prox_align: f64,
    r_grip_geom: f64,
    r_task: f64,
    r_pose: f64,
    p_pose: f64,
    reward: f64,
}

/// `eval`: deterministic episodes from a checkpoint; writes a per-episode
/// CSV (and optionally a per-step trajectory dump).
pub fn cmd_eval(
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    config_path: Option<&Path>,
    out_dir: Option<&Path>,
    dump_trajectories: bool,
) -> Result<EvalReport, CommandError> {
    if episodes == 0 {
        return Err(CommandError::Usage("eval needs at least one episode".into()));
    }
    let policy = load_checkpoint(checkpoint)
        .map_err(|e| CommandError::Runtime(format!("cannot load {}: {e}", checkpoint.display())))?;
    let mut config = match config_path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    config.experiment.seed = seed;
    config.experiment.model = policy.kind;
    if policy.spec.obs_dim == 1 {
        config.experiment.task = TaskKind::ToyQuadratic;
    }

    let mut trajectory: Vec<TrajectoryRow> = Vec::new();
    let weight_update = config.curriculum.stage_boundary; // report under stage-II weights
    let report = evaluate_recorded(
        &policy,
        &config,
        episodes,
        seed,
        streams::EVAL_BASE,
        weight_update,
        &mut |step, env, geom, breakdown| {
            if dump_trajectories {
                trajectory.push(TrajectoryRow {
                    step,
                    env,
                    d: geom.d,
                    d_lf: geom.d_lf,
                    d_rf: geom.d_rf,
                    d_align: geom.d_align,
                    d_mid: geom.d_mid,
                    dx: geom.dx,
                    dy: geom.dy,
                    z_lf: geom.z_lf,
                    z_rf: geom.z_rf,
                    z_mid: geom.z_mid,
                    z_cube: geom.z_cube,
                    gap: geom.gap,
                    gap_target: geom.gap_target,
                    eps_xy: geom.eps_xy,
                    verticality: geom.verticality,
                    grasped: geom.grasped,
                    r_prox_align: breakdown.prox_align,
                    r_grip_geom: breakdown.grip_geom,
                    r_task: breakdown.task,
                    r_pose: breakdown.pose,
                    p_pose: breakdown.pose_penalty,
                    reward: breakdown.total(),
                });
            }
        },
    )?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| CommandError::Runtime(e.to_string()))?;
        let episodes_path = dir.join("eval_episodes.csv");
        let mut w = csv::Writer::from_path(&episodes_path)
            .map_err(|e| CommandError::Runtime(e.to_string()))?;
        for rec in &report.episodes {
            w.serialize(rec).map_err(|e| CommandError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;
        if dump_trajectories {
            let path = dir.join("eval_trajectories.csv");
            let mut w =
                csv::Writer::from_path(&path).map_err(|e| CommandError::Runtime(e.to_string()))?;
            for row in &trajectory {
                w.serialize(row).map_err(|e| CommandError::Runtime(e.to_string()))?;
            }
            w.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;
        }
    }

    println!(
        "eval over {episodes} episodes: success_rate={:.3} reach_rate={:.3} mean_reward={:.4}",
        report.success_rate, report.reach_rate, report.mean_reward
    );
    Ok(report)
}

/// Inputs of the energy command: either explicit rates or two checkpoints
/// to measure live.
#[derive(Debug, Clone, Default)]
pub struct EnergyArgs {
    pub snn_checkpoint: Option<PathBuf>,
    pub ann_checkpoint: Option<PathBuf>,
    pub spike_rate: Option<f64>,
    pub membrane_rate: Option<f64>,
    pub input_rate: Option<f64>,
    pub output_rate: Option<f64>,
    pub batch: Option<usize>,
    pub steps: Option<usize>,
    pub dims: Option<(usize, usize, usize)>,
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EnergyCsvRow {
    model: &'static str,
    rate_1: f64,
    rate_2: f64,
    batch: usize,
    steps: usize,
    n0: usize,
    n1: usize,
    n2: usize,
    energy_mj: f64,
    saving: f64,
}

/// `energy`: analytical report from explicit rates or measured checkpoints.
pub fn cmd_energy(args: &EnergyArgs) -> Result<EnergyReport, CommandError> {
    let explicit = [args.spike_rate, args.membrane_rate, args.input_rate, args.output_rate];
    let (snn_cfg, ann_cfg) = if explicit.iter().all(Option::is_some) {
        let (n0, n1, n2) = args.dims.unwrap_or((18, 256, 7));
        let batch = args.batch.unwrap_or(8192);
        let steps = args.steps.unwrap_or(500);
        let snn = EnergyConfig {
            batch,
            steps,
            n0,
            n1,
            n2,
            rates: ModelRates::Snn {
                spike_rate: args.spike_rate.unwrap(),
                membrane_rate: args.membrane_rate.unwrap(),
            },
        };
        let ann = EnergyConfig {
            rates: ModelRates::Ann {
                input_rate: args.input_rate.unwrap(),
                output_rate: args.output_rate.unwrap(),
            },
            ..snn
        };
        (snn, ann)
    } else if let (Some(snn_path), Some(ann_path)) = (&args.snn_checkpoint, &args.ann_checkpoint) {
        let config = match &args.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::default(),
        };
        let batch = args.batch.unwrap_or(config.env.num_envs);
        let steps = args.steps.unwrap_or(config.network.audit_steps);
        let snn_policy = load_policy_of_kind(snn_path, ModelKind::Snn)?;
        let ann_policy = load_policy_of_kind(ann_path, ModelKind::Ann)?;
        let snn_rates = measure_rates(&snn_policy, &config, batch)?;
        let ann_rates = measure_rates(&ann_policy, &config, batch)?;
        let spec = snn_policy.spec;
        let snn = EnergyConfig {
            batch,
            steps,
            n0: spec.obs_dim,
            n1: spec.hidden_dim,
            n2: spec.action_dim,
            rates: snn_rates,
        };
        let ann = EnergyConfig { rates: ann_rates, ..snn };
        (snn, ann)
    } else {
        return Err(CommandError::Usage(
            "energy needs either all four explicit rates (--spike-rate, --membrane-rate, \
             --input-rate, --output-rate) or both --checkpoint and --ann-checkpoint"
                .into(),
        ));
    };

    let report = energy_report(&snn_cfg, &ann_cfg, &OpCosts::default())
        .map_err(|e| CommandError::Runtime(e.to_string()))?;

    let (r, r_mem) = match snn_cfg.rates {
        ModelRates::Snn { spike_rate, membrane_rate } => (spike_rate, membrane_rate),
        _ => unreachable!(),
    };
    let (r_in, r_out) = match ann_cfg.rates {
        ModelRates::Ann { input_rate, output_rate } => (input_rate, output_rate),
        _ => unreachable!(),
    };

    println!("model  r(r_in)  r_mem(r_out)      B     T    N0    N1  N2   E (mJ)");
    println!(
        "SNN    {r:>7.4}  {r_mem:>12.4}  {:>6} {:>5} {:>5} {:>5} {:>3} {:>8.2}",
        snn_cfg.batch, snn_cfg.steps, snn_cfg.n0, snn_cfg.n1, snn_cfg.n2, report.snn_mj
    );
    println!(
        "ANN    {r_in:>7.4}  {r_out:>12.4}  {:>6} {:>5} {:>5} {:>5} {:>3} {:>8.2}",
        ann_cfg.batch, ann_cfg.steps, ann_cfg.n0, ann_cfg.n1, ann_cfg.n2, report.ann_mj
    );
    println!("energy saving: {:.2}%", report.saving * 100.0);

    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| CommandError::Runtime(e.to_string()))?;
    let csv_path = out_dir.join("energy.csv");
    let mut w =
        csv::Writer::from_path(&csv_path).map_err(|e| CommandError::Runtime(e.to_string()))?;
    for (model, r1, r2, cfg, e_mj) in [
        ("snn", r, r_mem, &snn_cfg, report.snn_mj),
        ("ann", r_in, r_out, &ann_cfg, report.ann_mj),
    ] {
        w.serialize(EnergyCsvRow {
            model,
            rate_1: r1,
            rate_2: r2,
            batch: cfg.batch,
            steps: cfg.steps,
            n0: cfg.n0,
            n1: cfg.n1,
            n2: cfg.n2,
            energy_mj: (e_mj * 100.0).round() / 100.0,
            saving: (report.saving * 1e4).round() / 1e4,
        })
        .map_err(|e| CommandError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;
    Ok(report)
}

fn load_policy_of_kind(path: &Path, kind: ModelKind) -> Result<Policy, CommandError> {
    let policy = load_checkpoint(path)
        .map_err(|e| CommandError::Runtime(format!("cannot load {}: {e}", path.display())))?;
    if policy.kind != kind {
        return Err(CommandError::Usage(format!(
            "{} holds a {:?} policy, expected {:?}",
            path.display(),
            policy.kind,
            kind
        )));
    }
    Ok(policy)
}

pub const COMPARE_ARMS: [(&str, ModelKind, TrainingKind); 4] = [
    ("snn-crl", ModelKind::Snn, TrainingKind::Crl),
    ("snn-vanilla", ModelKind::Snn, TrainingKind::Vanilla),
    ("ann-crl", ModelKind::Ann, TrainingKind::Crl),
    ("ann-vanilla", ModelKind::Ann, TrainingKind::Vanilla),
];

#[derive(Debug, Serialize)]
struct CurveRow {
    arm: String,
    seed: u64,
    update: u64,
    env_steps: u64,
    mean_reward: f64,
    success_rate: f64,
    reach_rate: f64,
}

#[derive(Debug, Serialize)]
struct AggregateRow {
    arm: String,
    update: u64,
    env_steps: u64,
    reward_mean: f64,
    reward_std: f64,
    success_mean: f64,
    success_std: f64,
    reach_mean: f64,
    reach_std: f64,
}

#[derive(Debug, Serialize, Clone)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub final_reward_mean: f64,
    pub peak_success_rate: f64,
    pub peak_reach_rate: f64,
    pub status: String,
}

pub struct CompareOutcome {
    pub summary: Vec<ArmSummary>,
    pub curves_path: PathBuf,
    pub aggregate_path: PathBuf,
    pub summary_path: PathBuf,
}

/// `compare`: run the four arms (model x training kind) over shared seeds
/// and emit aligned curves plus a per-arm summary. A failing arm is recorded
/// and the others continue.
pub fn cmd_compare(
    config_path: &Path,
    seeds: usize,
    out_dir: Option<&Path>,
) -> Result<CompareOutcome, CommandError> {
    if seeds == 0 {
        return Err(CommandError::Usage("compare needs at least one seed".into()));
    }
    let base = load_config(config_path)?;
    let root = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base.experiment.out_dir.join("compare"));
    fs::create_dir_all(&root).map_err(|e| CommandError::Runtime(e.to_string()))?;

    let mut jobs = Vec::new();
    for (arm, model, training) in COMPARE_ARMS {
        for k in 0..seeds as u64 {
            let mut cfg = base.clone();
            cfg.experiment.model = model;
            cfg.experiment.training = training;
            cfg.experiment.seed = base.experiment.seed + k;
            let dir = root.join(arm).join(format!("seed{}", cfg.experiment.seed));
            jobs.push((arm.to_string(), cfg.experiment.seed, cfg, dir));
        }
    }

    use rayon::prelude::*;
    let results: Vec<(String, u64, Result<TrainArtifacts, TrainError>)> = jobs
        .into_par_iter()
        .map(|(arm, seed, cfg, dir)| {
            let res = train(&cfg, &dir);
            (arm, seed, res)
        })
        .collect();

    let curves_path = root.join("compare_curves.csv");
    let aggregate_path = root.join("compare_aggregate.csv");
    let summary_path = root.join("compare_summary.csv");
    let mut curves =
        csv::Writer::from_path(&curves_path).map_err(|e| CommandError::Runtime(e.to_string()))?;
    let mut aggregate = csv::Writer::from_path(&aggregate_path)
        .map_err(|e| CommandError::Runtime(e.to_string()))?;
    let mut summary_w =
        csv::Writer::from_path(&summary_path).map_err(|e| CommandError::Runtime(e.to_string()))?;

    let mut summary = Vec::new();
    for (arm, _, _) in COMPARE_ARMS {
        let arm_results: Vec<_> =
            results.iter().filter(|(a, _, _)| a == arm).collect();
        let ok: Vec<(u64, &TrainArtifacts)> = arm_results
            .iter()
            .filter_map(|(_, s, r)| r.as_ref().ok().map(|a| (*s, a)))
            .collect();
        let failed: Vec<(u64, String)> = arm_results
            .iter()
            .filter_map(|(_, s, r)| r.as_ref().err().map(|e| (*s, e.to_string())))
            .collect();

        for (seed, artifacts) in &ok {
            for p in &artifacts.history {
                curves
                    .serialize(CurveRow {
                        arm: arm.to_string(),
                        seed: *seed,
                        update: p.update,
                        env_steps: p.env_steps,
                        mean_reward: p.mean_reward,
                        success_rate: p.success_rate,
                        reach_rate: p.reach_rate,
                    })
                    .map_err(|e| CommandError::Runtime(e.to_string()))?;
            }
        }

        if !ok.is_empty() {
            let updates = ok.iter().map(|(_, a)| a.history.len()).min().unwrap_or(0);
            for u in 0..updates {
                let rows: Vec<&HistoryPoint> = ok.iter().map(|(_, a)| &a.history[u]).collect();
                let mean_of = |f: &dyn Fn(&HistoryPoint) -> f64| {
                    rows.iter().map(|p| f(p)).sum::<f64>() / rows.len() as f64
                };
                let std_of = |f: &dyn Fn(&HistoryPoint) -> f64, mean: f64| {
                    (rows.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>() / rows.len() as f64)
                        .sqrt()
                };
                let rm = mean_of(&|p| p.mean_reward);
                let sm = mean_of(&|p| p.success_rate);
                let gm = mean_of(&|p| p.reach_rate);
                aggregate
                    .serialize(AggregateRow {
                        arm: arm.to_string(),
                        update: rows[0].update,
                        env_steps: rows[0].env_steps,
                        reward_mean: rm,
                        reward_std: std_of(&|p| p.mean_reward, rm),
                        success_mean: sm,
                        success_std: std_of(&|p| p.success_rate, sm),
                        reach_mean: gm,
                        reach_std: std_of(&|p| p.reach_rate, gm),
                    })
                    .map_err(|e| CommandError::Runtime(e.to_string()))?;
            }
        }

        let final_reward_mean = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|(_, a)| a.history.last().map(|p| p.mean_reward).unwrap_or(f64::NAN)).sum::<f64>()
                / ok.len() as f64
        };
        let peak_success_rate = ok
            .iter()
            .flat_map(|(_, a)| a.history.iter().map(|p| p.success_rate))
            .fold(0.0f64, f64::max);
        let peak_reach_rate = ok
            .iter()
            .flat_map(|(_, a)| a.history.iter().map(|p| p.reach_rate))
            .fold(0.0f64, f64::max);
        let status = if failed.is_empty() {
            "ok".to_string()
        } else {
            format!(
                "{} failed: {}",
                failed.len(),
                failed.iter().map(|(s, e)| format!("seed{s}: {e}")).collect::<Vec<_>>().join("; ")
            )
        };
        let row = ArmSummary {
            arm: arm.to_string(),
            seeds_ok: ok.len(),
            seeds_failed: failed.len(),
            final_reward_mean,
            peak_success_rate,
            peak_reach_rate,
            status,
        };
        summary_w.serialize(&row).map_err(|e| CommandError::Runtime(e.to_string()))?;
        summary.push(row);
    }
    curves.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;
    aggregate.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;
    summary_w.flush().map_err(|e| CommandError::Runtime(e.to_string()))?;

    for row in &summary {
        println!(
            "{:<12} seeds_ok={} final_reward={:.4} peak_success={:.3} peak_reach={:.3} [{}]",
            row.arm, row.seeds_ok, row.final_reward_mean, row.peak_success_rate,
            row.peak_reach_rate, row.status
        );
    }
    Ok(CompareOutcome { summary, curves_path, aggregate_path, summary_path })
}
