mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agrpose::config::RunConfig;
use agrpose::eval::{report_rows, write_csv};
use agrpose::gradsuite::{run_suite, SuiteOptions, DEFAULT_EPS};
use agrpose::io::write_json;
use agrpose::model::Model;
use agrpose::protocol::{protocol_dir, protocol_rows, run_protocol, ProtocolName};
use agrpose::synth::{generate_sample, read_dataset, read_manifest, write_dataset, DatasetInfo, Manifest};
use agrpose::train::{evaluate, load_checkpoint, read_losses_csv, train, TrainOutput};
use agrpose::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, resolve, split_overrides, Override};

/// Absolute multi-person 3D pose estimation from synthetic abstract geometry.
///
/// Any config field can be set with `--path.to.field=VALUE` (JSON values, e.g.
/// `--train.lr=1e-4` or `--synth.people=[1,2]`).
#[derive(Debug, Parser)]
#[command(name = "agrpose", version)]
struct Cli {
    /// Maximum concurrent training cells for `ablate`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Force sequential execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Base profile: desk or full.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// JSON file merged over the profile.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic AGR dataset.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Training set (synth.count, synth.seed) or held-out set (eval.test_count, eval.test_seed).
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
    },
    /// Train the depth, root and pose networks on a dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Run directory for config, checkpoints and reports.
        #[arg(long)]
        run: PathBuf,
        /// Continue from the latest checkpoint using the run's stored config.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a trained run on a dataset.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint epoch (default: latest).
        #[arg(long)]
        epoch: Option<usize>,
        /// Replace predictions with the ground truth.
        #[arg(long)]
        gt_oracle: bool,
        /// Test tag written to the CSV report.
        #[arg(long, default_value = "test")]
        tag: String,
    },
    /// Run a generalization protocol: projection, cross_view, random_view or cross_pose.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        protocol: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every layer and loss gradient in f64.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Perturb the analytic gradient of one check (harness self-test).
        #[arg(long, hide = true)]
        corrupt_backward: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Numerical(_) | Error::NonFiniteGradient(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = Cli::parse_from(args);
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli, overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli, mut overrides: Vec<Override>) -> Result<ExitCode> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(t) = threads {
        overrides.push(Override {
            path: vec!["ablate".into(), "threads".into()],
            value: t.into(),
        });
    }
    match cli.command {
        Command::Synth { cfg, out, split } => {
            let run = resolve(&cfg.profile, cfg.config.as_deref(), &overrides)?;
            cmd_synth(&run, &out, split)?;
        }
        Command::Train { cfg, data, run, resume } => {
            let stored = run.join("config.json");
            let file = if resume { Some(stored.as_path()) } else { cfg.config.as_deref() };
            let config = resolve(&cfg.profile, file, &overrides)?;
            cmd_train(&config, &data, &run, resume)?;
        }
        Command::Eval {
            run,
            data,
            epoch,
            gt_oracle,
            tag,
        } => {
            let mut config = resolve("desk", Some(&run.join("config.json")), &overrides)?;
            config.eval.gt_oracle |= gt_oracle;
            cmd_eval(&config, &run, &data, epoch, &tag)?;
        }
        Command::Ablate { cfg, protocol, out } => {
            let name: ProtocolName = protocol.parse()?;
            let config = resolve(&cfg.profile, cfg.config.as_deref(), &overrides)?;
            cmd_ablate(&config, name, &out)?;
        }
        Command::Gradcheck { eps, corrupt_backward } => {
            return cmd_gradcheck(eps, corrupt_backward);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn cmd_synth(run: &RunConfig, out: &Path, split: Split) -> Result<()> {
    let synth = match split {
        Split::Train => run.synth.clone(),
        Split::Test => run.test_synth(),
    };
    let started = Instant::now();
    let skeleton = synth.skeleton();
    let samples = (0..synth.count as u64)
        .map(|i| generate_sample(&synth, &skeleton, i))
        .collect::<Result<Vec<_>>>()?;
    let info = DatasetInfo {
        seed: synth.seed,
        config_hash: config_hash(&synth),
        config: serde_json::to_value(&synth).expect("config serializes"),
        skeleton,
    };
    let manifest = write_dataset(out, &info, &samples)?;
    log::info!(
        "wrote {} scenes ({} people) to {} in {:.1}s",
        manifest.count,
        manifest.total_people,
        out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    config_hash: String,
    dataset: PathBuf,
    dataset_config_hash: String,
    dataset_count: usize,
    epochs_completed: usize,
}

/// Rejects datasets whose skeleton or image size disagree with the run configuration.
fn check_dataset(run: &RunConfig, manifest: &Manifest, dir: &Path) -> Result<()> {
    let data_error = |msg: String| Error::Format {
        path: dir.join("manifest.json"),
        msg,
    };
    if manifest.info.skeleton != run.synth.skeleton() {
        return Err(data_error("dataset skeleton differs from the run configuration".into()));
    }
    let cfg = &manifest.info.config;
    let size = (cfg.get("image_w").and_then(|v| v.as_u64()), cfg.get("image_h").and_then(|v| v.as_u64()));
    if size != (Some(run.synth.image_w as u64), Some(run.synth.image_h as u64)) {
        return Err(data_error(format!(
            "dataset image size {size:?} differs from run {}x{}",
            run.synth.image_w, run.synth.image_h
        )));
    }
    Ok(())
}

fn latest_epoch(checkpoints: &Path) -> Result<Option<usize>> {
    if !checkpoints.exists() {
        return Ok(None);
    }
    let entries = fs::read_dir(checkpoints).map_err(|e| Error::Io {
        path: checkpoints.into(),
        source: e,
    })?;
    let mut best = None;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(n) = name.strip_prefix("epoch_").and_then(|s| s.parse::<usize>().ok()) {
            if entry.path().join("index.json").exists() {
                best = best.max(Some(n));
            }
        }
    }
    Ok(best)
}

fn cmd_train(run: &RunConfig, data: &Path, run_dir: &Path, resume: bool) -> Result<()> {
    let dataset = read_dataset::<f32>(data)?;
    check_dataset(run, &dataset.manifest, data)?;
    create_dir(run_dir)?;
    let out = TrainOutput::under(run_dir);
    let (mut model, start, previous) = match (resume, latest_epoch(&out.checkpoints)?) {
        (true, Some(epoch)) => {
            let (model, saved) = load_checkpoint::<f32>(&out.epoch_dir(epoch))?;
            let previous = if out.losses_csv.exists() {
                read_losses_csv(&out.losses_csv)?
            } else {
                Vec::new()
            };
            log::info!("resuming after epoch {saved}");
            (model, saved, previous)
        }
        (true, None) => {
            return Err(Error::Format {
                path: out.checkpoints.clone(),
                msg: "no checkpoint to resume from".into(),
            })
        }
        (false, _) => (Model::init(run)?, 0, Vec::new()),
    };
    write_json(&run_dir.join("config.json"), run)?;
    let started = Instant::now();
    train(run, &mut model, &dataset.samples, start, Some(&out), &previous)?;
    log::info!("trained to epoch {} in {:.1}s", run.train.epochs.max(start), started.elapsed().as_secs_f64());
    let manifest = RunManifest {
        config_hash: config_hash(run),
        dataset: data.to_path_buf(),
        dataset_config_hash: dataset.manifest.info.config_hash.clone(),
        dataset_count: dataset.manifest.count,
        epochs_completed: run.train.epochs.max(start),
    };
    write_json(&run_dir.join("manifest.json"), &manifest)
}

fn cmd_eval(run: &RunConfig, run_dir: &Path, data: &Path, epoch: Option<usize>, tag: &str) -> Result<()> {
    let checkpoints = run_dir.join("checkpoints");
    let epoch = match epoch {
        Some(e) => e,
        None => latest_epoch(&checkpoints)?.ok_or_else(|| Error::Format {
            path: checkpoints.clone(),
            msg: "no checkpoints".into(),
        })?,
    };
    let (model, _) = load_checkpoint::<f32>(&checkpoints.join(format!("epoch_{epoch:03}")))?;
    let manifest = read_manifest(data)?;
    if manifest.info.skeleton != model.skeleton {
        return Err(Error::Format {
            path: data.join("manifest.json"),
            msg: "dataset skeleton differs from the checkpoint".into(),
        });
    }
    let dataset = read_dataset::<f32>(data)?;
    let report = evaluate(run, &model, &dataset.samples)?;
    let reports = run_dir.join("reports");
    create_dir(&reports)?;
    write_json(&reports.join("metrics.json"), &report)?;
    write_csv(&reports.join("metrics.csv"), &report_rows("eval", &format!("epoch_{epoch:03}"), "run", tag, &report))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn cmd_ablate(run: &RunConfig, name: ProtocolName, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_json(&out.join("config.json"), run)?;
    let started = Instant::now();
    let reports = run_protocol(name, run, Some(&protocol_dir(out, name)))?;
    write_json(&out.join(format!("{name}.json")), &reports)?;
    write_csv(&out.join(format!("{name}.csv")), &protocol_rows(name, &reports))?;
    for r in &reports {
        println!(
            "{name} {} {} -> {}: mrpe_z {}",
            r.cell_id,
            r.train_tag,
            r.test_tag,
            r.report.mrpe_z.map_or("n/a".into(), |v| format!("{v:.1}"))
        );
    }
    log::info!("{name} finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_gradcheck(eps: f64, corrupt: Option<String>) -> Result<ExitCode> {
    let opts = SuiteOptions {
        eps,
        corrupt,
        ..SuiteOptions::default()
    };
    let started = Instant::now();
    let results = run_suite(&opts)?;
    for r in &results {
        println!(
            "{:<30} max_rel_err {:.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} checks, {failed} failed, tolerance {:e}, eps {:e}, {:.1}s",
        results.len(),
        opts.tolerance,
        eps,
        started.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(4) })
}
