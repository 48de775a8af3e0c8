//! `regrasp` — operator surface for the grasp-learning pipeline.
//!
//! One subcommand per stage: `gen-demos` → `train-classifier` /
//! `pretrain` → `finetune` → `eval`, plus `plot` for static charts from
//! the emitted CSVs. Every command writes its artifacts into a fresh
//! timestamped directory under `--out`, including the resolved config and
//! seed record that reproduce it.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod runs;
mod svg;

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use regrasp_core::classifier::ClassifierModel;
use regrasp_core::config::{RewardKind, RunConfig};
use regrasp_core::episodes::{read_episode_file_path, write_episode_file_path};
use regrasp_core::harness::RewardSource;
use regrasp_core::learner::Objective;
use regrasp_core::metrics::{
    read_episodes_csv, read_eval_csv, read_metrics_csv, write_episodes_csv, write_eval_csv,
    write_metrics_csv, EpisodeRow, MetricsRow,
};
use regrasp_core::net::{read_params, write_params, ParamVector};
use regrasp_core::pipeline::{self, FinetuneMode};

/// Operator error that should exit with the usage code (1), not the
/// runtime code (2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "regrasp",
    about = "Planar grasp learning: scripted demos, success-detector training, behavior cloning, and regularized RL fine-tuning"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file; missing keys take the documented defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; every stage derives its randomness from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parent directory for the timestamped run directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Distributed,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Oracle,
    Classifier,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Alg1,
    Eq2,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect scripted-expert demonstration episodes
    GenDemos(GenDemos),
    /// Train the binary success detector on demo + failure frames
    TrainClassifier(TrainClassifier),
    /// Behavior-cloning pretraining on the demonstrations
    Pretrain(Pretrain),
    /// Regularized RL fine-tuning from a pretrained actor
    Finetune(Finetune),
    /// Evaluate an actor snapshot against ground-truth success
    Eval(Eval),
    /// Render training/eval charts from emitted CSVs
    Plot(Plot),
}

#[derive(Args)]
struct GenDemos {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainClassifier {
    #[command(flatten)]
    common: Common,
    /// Demonstration episode file from gen-demos
    #[arg(long)]
    demos: PathBuf,
}

#[derive(Args)]
struct Pretrain {
    #[command(flatten)]
    common: Common,
    /// Demonstration episode file from gen-demos
    #[arg(long)]
    demos: PathBuf,
}

#[derive(Args)]
struct Finetune {
    #[command(flatten)]
    common: Common,
    /// Demonstration episode file from gen-demos
    #[arg(long)]
    demos: PathBuf,
    /// Pretrained actor snapshot from pretrain
    #[arg(long)]
    actor: PathBuf,
    /// Detector model from train-classifier (required with classifier reward)
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Execution mode: fused single process, or actor/learner over TCP
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    /// Override the config's rl.reward
    #[arg(long, value_enum)]
    reward: Option<RewardArg>,
    /// Override the config's rl.objective
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Override the config's rl.beta (0 disables the imitation term)
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct Eval {
    #[command(flatten)]
    common: Common,
    /// Actor snapshot to evaluate
    #[arg(long)]
    actor: PathBuf,
}

#[derive(Args)]
struct Plot {
    /// Parent directory for the timestamped run directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// metrics.csv from a fine-tune run
    #[arg(long)]
    metrics: PathBuf,
    /// episodes.csv from the same run (adds the rolling success rate)
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// eval.csv files to compare as SR/CT bars (repeatable)
    #[arg(long = "eval")]
    evals: Vec<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<UsageError>().is_some() {
            1
        } else {
            2
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::GenDemos(a) => gen_demos(a),
        Cmd::TrainClassifier(a) => train_classifier(a),
        Cmd::Pretrain(a) => pretrain(a),
        Cmd::Finetune(a) => finetune(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Plot(a) => plot(a),
    }
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::from_path(path)
            .map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn load_actor(path: &Path) -> anyhow::Result<ParamVector> {
    let mut f = File::open(path)
        .with_context(|| format!("opening actor snapshot {}", path.display()))?;
    Ok(read_params(&mut f).with_context(|| format!("reading {}", path.display()))?)
}

fn gen_demos(a: GenDemos) -> anyhow::Result<()> {
    let cfg = load_config(&a.common)?;
    let dir = runs::create_run_dir(&a.common.out, "gen-demos")?;
    runs::write_run_inputs(&dir, &cfg, a.common.seed)?;
    let demos = pipeline::collect_demo_set(&cfg, a.common.seed)?;
    let path = dir.join("demos.rgep");
    write_episode_file_path(&path, &demos)?;
    let steps: usize = demos.iter().map(|e| e.len()).sum();
    println!(
        "collected {} demonstration episodes ({steps} transitions) -> {}",
        demos.len(),
        path.display()
    );
    Ok(())
}

fn train_classifier(a: TrainClassifier) -> anyhow::Result<()> {
    let cfg = load_config(&a.common)?;
    let demos = read_episode_file_path(&a.demos)
        .with_context(|| format!("reading demos {}", a.demos.display()))?;
    let dir = runs::create_run_dir(&a.common.out, "train-classifier")?;
    runs::write_run_inputs(&dir, &cfg, a.common.seed)?;
    let failures = pipeline::collect_failure_set(&cfg, a.common.seed)?;
    let (model, report) = pipeline::train_reward_classifier(&cfg, &demos, &failures, a.common.seed)?;
    let model_path = dir.join("classifier.rgcl");
    model.write_to_path(&model_path)?;
    let mut text = String::new();
    let _ = writeln!(text, "train_frames = {}", report.n_train);
    let _ = writeln!(text, "test_frames = {}", report.n_test);
    let _ = writeln!(text, "held_out_accuracy = {:.4}", report.accuracy);
    let _ = writeln!(text, "false_positive_rate = {:.4}", report.false_positive_rate);
    let _ = writeln!(text, "false_negative_rate = {:.4}", report.false_negative_rate);
    let _ = writeln!(text, "final_train_loss = {:.6}", report.final_train_loss);
    std::fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    println!("detector -> {}", model_path.display());
    Ok(())
}

fn pretrain(a: Pretrain) -> anyhow::Result<()> {
    let cfg = load_config(&a.common)?;
    let demos = read_episode_file_path(&a.demos)
        .with_context(|| format!("reading demos {}", a.demos.display()))?;
    let dir = runs::create_run_dir(&a.common.out, "pretrain")?;
    runs::write_run_inputs(&dir, &cfg, a.common.seed)?;
    let out = pipeline::pretrain_actor(&cfg, &demos, a.common.seed)?;
    let actor_path = dir.join("bc_actor.rgnp");
    let mut f = File::create(&actor_path)?;
    write_params(&mut f, &out.params)?;
    let mut curve = String::from("epoch,loss\n");
    for (epoch, loss) in out.loss_curve.iter().enumerate() {
        let _ = writeln!(curve, "{epoch},{loss}");
    }
    std::fs::write(dir.join("bc_loss.csv"), curve)?;
    println!(
        "behavior cloning: {} epochs, final loss {:.6} -> {}",
        out.loss_curve.len(),
        out.loss_curve.last().copied().unwrap_or(f64::NAN),
        actor_path.display()
    );
    Ok(())
}

fn finetune(a: Finetune) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(r) = a.reward {
        cfg.rl.reward = match r {
            RewardArg::Oracle => RewardKind::Oracle,
            RewardArg::Classifier => RewardKind::Classifier,
        };
    }
    if let Some(o) = a.objective {
        cfg.rl.hp.objective = match o {
            ObjectiveArg::Alg1 => Objective::Alg1,
            ObjectiveArg::Eq2 => Objective::Eq2,
        };
    }
    if let Some(beta) = a.beta {
        if beta < 0.0 {
            return Err(usage(format!("--beta must be >= 0, got {beta}")));
        }
        cfg.rl.hp.beta = beta;
    }

    let reward = match cfg.rl.reward {
        RewardKind::Oracle => RewardSource::Oracle,
        RewardKind::Classifier => {
            let path = a.classifier.as_ref().ok_or_else(|| {
                usage("classifier reward needs --classifier MODEL_FILE (or set rl.reward = oracle)")
            })?;
            RewardSource::Classifier(
                ClassifierModel::read_from_path(path)
                    .with_context(|| format!("reading detector {}", path.display()))?,
            )
        }
    };
    let demos = read_episode_file_path(&a.demos)
        .with_context(|| format!("reading demos {}", a.demos.display()))?;
    let actor = load_actor(&a.actor)?;

    let dir = runs::create_run_dir(&a.common.out, "finetune")?;
    runs::write_run_inputs(&dir, &cfg, a.common.seed)?;
    let (mode, checkpoint) = match a.mode {
        ModeArg::Single => (FinetuneMode::Single, Some(dir.join("checkpoint.rgck"))),
        ModeArg::Distributed => (FinetuneMode::AsyncDistributed, None),
    };
    let outcome = pipeline::finetune(
        &cfg,
        actor,
        &demos,
        reward,
        mode,
        a.common.seed,
        checkpoint.as_deref(),
    )?;

    write_metrics_csv(&dir.join("metrics.csv"), &outcome.metrics)?;
    write_episodes_csv(&dir.join("episodes.csv"), &outcome.episode_rows)?;
    let actor_path = dir.join("final_actor.rgnp");
    let mut f = File::create(&actor_path)?;
    write_params(&mut f, &outcome.final_actor)?;

    let recent = outcome.episode_rows.iter().rev().take(20).collect::<Vec<_>>();
    let recent_sr = if recent.is_empty() {
        0.0
    } else {
        recent.iter().filter(|r| r.success).count() as f64 / recent.len() as f64
    };
    println!(
        "fine-tune done: {} env steps, {} episodes, {} updates, final lambda {:.4}, success rate over last {} episodes {:.0}%",
        outcome.env_steps,
        outcome.episodes_done,
        outcome.update_count,
        outcome.last_lambda,
        recent.len(),
        100.0 * recent_sr
    );
    if let Some(stats) = &outcome.async_stats {
        let mut text = String::new();
        let _ = writeln!(text, "transitions_sent = {}", stats.transitions_sent);
        let _ = writeln!(text, "transitions_ingested = {}", stats.transitions_ingested);
        let _ = writeln!(text, "dropped_frames = {}", stats.drop_count);
        let _ = writeln!(text, "reconnects = {}", stats.reconnects);
        let _ = writeln!(text, "snapshots_installed = {}", stats.snapshots_installed);
        let _ = writeln!(text, "tick_p50_ms = {:.3}", stats.tick_p50_ms);
        let _ = writeln!(text, "tick_p95_ms = {:.3}", stats.tick_p95_ms);
        std::fs::write(dir.join("async_stats.txt"), &text)?;
        print!("{text}");
    }
    println!("artifacts -> {}", dir.display());
    Ok(())
}

fn eval(a: Eval) -> anyhow::Result<()> {
    let cfg = load_config(&a.common)?;
    let actor = load_actor(&a.actor)?;
    let dir = runs::create_run_dir(&a.common.out, "eval")?;
    runs::write_run_inputs(&dir, &cfg, a.common.seed)?;
    let report = pipeline::evaluate(&cfg, &actor, a.common.seed)?;
    write_eval_csv(&dir.join("eval.csv"), &report.rows)?;
    match report.mean_ct {
        Some(ct) => println!(
            "eval: {}/{} successes ({:.1}%), mean completion time {:.1} steps",
            report.successes,
            report.trials,
            100.0 * report.success_rate,
            ct
        ),
        None => println!(
            "eval: 0/{} successes (0.0%), completion time n/a",
            report.trials
        ),
    }
    println!("per-trial results -> {}", dir.join("eval.csv").display());
    Ok(())
}

/// Rolling success rate over the trailing `window` episodes, located on
/// the update axis via each episode's cumulative env-step count.
fn rolling_sr_series(
    episodes: &[EpisodeRow],
    metrics: &[MetricsRow],
    window: usize,
) -> Vec<(f64, f64)> {
    let mut points = Vec::with_capacity(episodes.len());
    let mut hits = 0usize;
    for (i, ep) in episodes.iter().enumerate() {
        if ep.success {
            hits += 1;
        }
        if i >= window && episodes[i - window].success {
            hits -= 1;
        }
        let denom = window.min(i + 1);
        // last update whose data predates this episode's end
        let update = match metrics.binary_search_by(|m| m.env_steps.cmp(&ep.env_steps)) {
            Ok(idx) => metrics[idx].update_count,
            Err(0) => 0,
            Err(idx) => metrics[idx - 1].update_count,
        };
        points.push((update as f64, hits as f64 / denom as f64));
    }
    points
}

fn decimate(points: Vec<(f64, f64)>, max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points {
        return points;
    }
    let stride = points.len().div_ceil(max_points);
    let last = *points.last().expect("nonempty");
    let mut kept: Vec<(f64, f64)> = points.into_iter().step_by(stride).collect();
    if kept.last() != Some(&last) {
        kept.push(last);
    }
    kept
}

fn plot(a: Plot) -> anyhow::Result<()> {
    let metrics = read_metrics_csv(&a.metrics)
        .with_context(|| format!("reading {}", a.metrics.display()))?;
    let dir = runs::create_run_dir(&a.out, "plot")?;

    let mut series = vec![svg::Series {
        label: "imitation weight λ".into(),
        color: svg::PALETTE[0],
        points: decimate(
            metrics
                .iter()
                .map(|m| (m.update_count as f64, m.lambda))
                .collect(),
            2000,
        ),
    }];
    if let Some(path) = &a.episodes {
        let episodes =
            read_episodes_csv(path).with_context(|| format!("reading {}", path.display()))?;
        series.push(svg::Series {
            label: "rolling success rate".into(),
            color: svg::PALETTE[1],
            points: decimate(rolling_sr_series(&episodes, &metrics, 20), 2000),
        });
    }
    let training_path = dir.join("training.svg");
    std::fs::write(
        &training_path,
        svg::line_chart(
            "Imitation weight and success rate during fine-tuning",
            "learner updates",
            "value",
            &series,
        ),
    )?;
    println!("training chart -> {}", training_path.display());

    if !a.evals.is_empty() {
        let mut sr_entries = Vec::new();
        let mut ct_entries = Vec::new();
        for path in &a.evals {
            let rows =
                read_eval_csv(path).with_context(|| format!("reading {}", path.display()))?;
            let label = path
                .parent()
                .and_then(Path::file_name)
                .or_else(|| path.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let n = rows.len().max(1);
            let successes = rows.iter().filter(|r| r.success).count();
            sr_entries.push((label.clone(), 100.0 * successes as f64 / n as f64));
            if successes > 0 {
                let ct_sum: f64 = rows
                    .iter()
                    .filter(|r| r.success)
                    .map(|r| r.steps_to_success as f64)
                    .sum();
                ct_entries.push((label, ct_sum / successes as f64));
            }
        }
        let sr_path = dir.join("eval_success_rate.svg");
        std::fs::write(
            &sr_path,
            svg::bar_chart("Evaluation success rate", "SR (%)", &sr_entries, Some(100.0)),
        )?;
        println!("success-rate chart -> {}", sr_path.display());
        if !ct_entries.is_empty() {
            let ct_path = dir.join("eval_completion_time.svg");
            std::fs::write(
                &ct_path,
                svg::bar_chart(
                    "Mean completion time over successful trials",
                    "CT (steps)",
                    &ct_entries,
                    None,
                ),
            )?;
            println!("completion-time chart -> {}", ct_path.display());
        }
    }
    Ok(())
}
