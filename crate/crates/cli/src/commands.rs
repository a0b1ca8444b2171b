//! Verb implementations. Every artifact is written to a file; stdout
//! only carries summaries.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use fairmargin::train::{evaluate as evaluate_model, method_name, render_trace, run_ablation, run_experiment, train_model};
use fairmargin::{Cohort, EvalReport, MlpParams};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ReportFormat};
use crate::OUT_ENV;

/// Error with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Self::Usage(e) | Self::Runtime(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

type Outcome = Result<(), Failure>;

fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| output_root().join(command))
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).usage()
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn render_report(report: &EvalReport, format: ReportFormat) -> anyhow::Result<String> {
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Toml => toml::to_string_pretty(report)?,
    })
}

fn read_report(path: &Path) -> anyhow::Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read baseline report {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(anyhow::Error::from)
    } else {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.with_context(|| format!("invalid baseline report {}", path.display()))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    cohort: &Cohort,
    artifacts: serde_json::Value,
) -> anyhow::Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "command": command,
        "created_unix": created,
        "cohort_fingerprint": cohort.fingerprint,
        "config": cfg,
        "artifacts": artifacts,
    });
    write(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn prepare(path: &Path, seeds: Option<Vec<u64>>) -> Result<(ExperimentConfig, Cohort), Failure> {
    let mut cfg = load(path)?;
    if let Some(seeds) = seeds {
        cfg.train.seeds = seeds;
    }
    cfg.validate().usage()?;
    let cohort = cfg.cohort().usage()?;
    Ok((cfg, cohort))
}

pub fn gen_data(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Outcome {
    let cfg = load(config)?;
    let mut cohort_cfg = cfg
        .cohort
        .clone()
        .ok_or_else(|| anyhow!("gen-data needs a `[cohort]` section"))
        .usage()?;
    if let Some(seed) = seed {
        cohort_cfg.seed = seed;
    }
    cohort_cfg.validate().usage()?;
    let cohort = fairmargin::generate(&cohort_cfg).usage()?;
    let path = out.unwrap_or_else(|| output_root().join("cohort.csv"));
    write(&path, &cohort.to_csv_string())?;
    println!("wrote {} (fingerprint {})", path.display(), cohort.fingerprint);
    print!("{}", cohort.summary());
    Ok(())
}

#[derive(Serialize)]
struct RunArtifacts {
    seed: u64,
    method: String,
    checkpoint: String,
    trace: String,
    report: String,
    table: String,
}

pub fn train(config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>) -> Outcome {
    let (cfg, cohort) = prepare(config, seeds)?;
    let dir = out_dir(out, &cfg, "train");
    let method = method_name(&cfg.train.fairness);
    let ext = cfg.report_format.extension();
    let mut artifacts = Vec::new();
    for &seed in &cfg.train.seeds {
        let run = train_model(&cohort, &cfg.train, seed).with_context(|| format!("training failed for seed {seed}"))?;
        let rel = format!("{method}/seed-{seed}");
        let entry = RunArtifacts {
            seed,
            method: method.to_string(),
            checkpoint: format!("{rel}/checkpoint.txt"),
            trace: format!("{rel}/trace.csv"),
            report: format!("{rel}/report.{ext}"),
            table: format!("{rel}/report.csv"),
        };
        write(&dir.join(&entry.checkpoint), &run.params.to_checkpoint_string())?;
        write(&dir.join(&entry.trace), &render_trace(&run.trace))?;
        write(&dir.join(&entry.report), &render_report(&run.report, cfg.report_format)?)?;
        write(&dir.join(&entry.table), &run.report.to_table_csv())?;
        println!(
            "seed {seed}: {method} macro AUC {} joint EOdds {} joint EOM {}",
            fmt3(run.report.macro_auc),
            fmt3(run.report.joint.eodds),
            fmt3(run.report.joint.eom)
        );
        artifacts.push(entry);
    }
    write_manifest(
        &dir,
        "train",
        &cfg,
        &cohort,
        serde_json::to_value(&artifacts).map_err(anyhow::Error::from)?,
    )?;
    println!("wrote {}", dir.join("manifest.json").display());
    Ok(())
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.3}"))
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub dataset: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub method: String,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn evaluate(args: EvaluateArgs) -> Outcome {
    let params = MlpParams::load(&args.checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", args.checkpoint.display()))
        .usage()?;
    let (cfg, cohort) = match (&args.config, &args.dataset) {
        (Some(path), _) => {
            let cfg = load(path)?;
            cfg.validate().usage()?;
            let cohort = cfg.cohort().usage()?;
            (cfg, cohort)
        }
        (None, Some(path)) => {
            let cfg = ExperimentConfig {
                dataset: Some(path.clone()),
                ..ExperimentConfig::default()
            };
            let cohort = cfg.cohort().usage()?;
            (cfg, cohort)
        }
        (None, None) => return Err(Failure::Usage(anyhow!("pass --dataset or --config"))),
    };
    if params.num_classes() != cohort.num_classes {
        return Err(Failure::Usage(anyhow!(
            "class count mismatch: checkpoint has K={}, dataset has K={}",
            params.num_classes(),
            cohort.num_classes
        )));
    }
    if params.input_dim() != cohort.feature_dim {
        return Err(Failure::Usage(anyhow!(
            "feature dimension mismatch: checkpoint expects {}, dataset has {}",
            params.input_dim(),
            cohort.feature_dim
        )));
    }
    let baseline = args.baseline.as_deref().map(read_report).transpose().usage()?;
    let format = match args.format.as_deref() {
        Some("toml") => ReportFormat::Toml,
        Some(_) => ReportFormat::Json,
        None => cfg.report_format,
    };
    let (_, report) = evaluate_model(&params, &cohort, &args.method, baseline.as_ref()).context("evaluation failed")?;
    let dir = args.out.unwrap_or_else(|| out_dir(None, &cfg, "evaluate"));
    let report_path = dir.join(format!("report.{}", format.extension()));
    write(&report_path, &render_report(&report, format)?)?;
    write(&dir.join("report.csv"), &report.to_table_csv())?;
    println!(
        "{}: macro AUC {} ΔAUC {} joint EOdds {} joint EOM {}",
        report.method,
        fmt3(report.macro_auc),
        fmt3(report.delta_auc),
        fmt3(report.joint.eodds),
        fmt3(report.joint.eom)
    );
    println!("wrote {}", report_path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Protocol {
    Experiment,
    Ablation,
}

pub fn compare(protocol: Protocol, config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>, jobs: Option<usize>) -> Outcome {
    let (cfg, cohort) = prepare(config, seeds)?;
    let jobs = jobs.or(cfg.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(Failure::Usage(anyhow!("--jobs must be at least 1")));
    }
    if cfg.train.seeds.len() < 2 {
        return Err(Failure::Usage(anyhow!("`train.seeds` needs at least two seeds")));
    }
    let (command, result) = match protocol {
        Protocol::Experiment => ("experiment", run_experiment(&cohort, &cfg.train, &cfg.train.seeds, jobs)),
        Protocol::Ablation => ("ablate", run_ablation(&cohort, &cfg.train, &cfg.train.seeds, jobs)),
    };
    let comparison = result.with_context(|| format!("{command} failed"))?;
    let dir = out_dir(out, &cfg, command);
    let table = comparison.render_table();
    write(&dir.join("per_seed.csv"), &comparison.per_seed_csv())?;
    write(&dir.join("summary.csv"), &comparison.summary_csv())?;
    write(&dir.join("table.txt"), &table)?;
    let artifacts = json!({
        "per_seed": "per_seed.csv",
        "summary": "summary.csv",
        "table": "table.txt",
        "arms": comparison.arms.iter().map(|a| &a.arm.name).collect::<Vec<_>>(),
        "seeds": cfg.train.seeds,
        "jobs": jobs,
    });
    write_manifest(&dir, command, &cfg, &cohort, artifacts)?;
    print!("{table}");
    println!("wrote {}", dir.display());
    Ok(())
}
