//! Deterministic training with Adam, validation-based operating points,
//! and the multi-seed baseline-vs-regularized and ablation protocols.
//!
//! A run seed feeds three independent streams: parameter init, and one
//! shuffle stream per epoch. Arms that share a seed therefore see the
//! same initial weights and the same batch order.

use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, Tape, Tensor};
use crate::data::{batches, streams, Cohort, Split};
use crate::fairloss::{total_loss, BatchView, FairLossConfig, FairLossError};
use crate::metrics::{auc, build_report, EvalReport, FairnessCell, Metric, MetricsError, OperatingPoint, PredictionSet};
use crate::model::{format_f64, init_mlp, MlpConfig, MlpParams, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}: bce={bce}, eo_plus={eo_plus}, eo_minus={eo_minus}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        bce: f64,
        eo_plus: f64,
        eo_minus: f64,
    },
    #[error("split `{}` is empty", .0.as_str())]
    EmptySplit(Split),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<TrainError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    FairLoss(#[from] FairLossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction, no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    learning_rate: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, learning_rate: f64, sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            cfg,
            learning_rate,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![32, 16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    pub fairness: FairLossConfig,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            hidden_dims: default_hidden(),
            fairness: FairLossConfig::default(),
            seeds: (0..6).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("train.batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("train.learning_rate must be positive".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(TrainError::InvalidConfig("train.hidden_dims entries must be positive".into()));
        }
        self.fairness.validate()?;
        Ok(())
    }

    pub fn with_fairness(&self, fairness: FairLossConfig) -> Self {
        Self {
            fairness,
            ..self.clone()
        }
    }

    pub fn model_config(&self, cohort: &Cohort, seed: u64) -> MlpConfig {
        MlpConfig {
            input_dim: cohort.feature_dim,
            hidden_dims: self.hidden_dims.clone(),
            num_classes: cohort.num_classes,
            activation: Default::default(),
            init_seed: streams::rng(seed, streams::INIT).next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    pub train_eo_plus: f64,
    pub train_eo_minus: f64,
    pub val_bce: f64,
    pub val_auc: Option<f64>,
}

pub const TRACE_HEADER: &str = "epoch,train_loss,train_bce,train_eo_plus,train_eo_minus,val_bce,val_auc";

pub fn render_trace(trace: &[EpochTrace]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        let auc = t.val_auc.map_or_else(|| "NA".into(), format_f64);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.epoch,
            format_f64(t.train_loss),
            format_f64(t.train_bce),
            format_f64(t.train_eo_plus),
            format_f64(t.train_eo_minus),
            format_f64(t.val_bce),
            auc
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub params: MlpParams,
    pub trace: Vec<EpochTrace>,
    pub operating_point: OperatingPoint,
    pub report: EvalReport,
}

/// `"baseline"` for zero λ, otherwise `"regularized"`.
pub fn method_name(fairness: &FairLossConfig) -> &'static str {
    if fairness.is_baseline() {
        "baseline"
    } else {
        "regularized"
    }
}

/// Sigmoid scores of `split` as a prediction set.
pub fn predictions(params: &MlpParams, cohort: &Cohort, split: Split) -> Result<PredictionSet, TrainError> {
    let rows = cohort.indices(split);
    if rows.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    let logits = params.predict_logits(&cohort.features(&rows))?;
    let scores = logits.data().iter().map(|&l| sigmoid(l)).collect();
    Ok(PredictionSet::new(
        cohort.num_classes,
        scores,
        cohort.labels(&rows).into_data(),
        cohort.catalog().subset(&rows),
    )?)
}

/// Threshold on the validation split, report on the test split.
pub fn evaluate(
    params: &MlpParams,
    cohort: &Cohort,
    method: &str,
    baseline: Option<&EvalReport>,
) -> Result<(OperatingPoint, EvalReport), TrainError> {
    let op = OperatingPoint::select(&predictions(params, cohort, Split::Val)?)?;
    let test = predictions(params, cohort, Split::Test)?;
    let report = build_report(method, &test, &op, baseline);
    Ok((op, report))
}

fn validation_metrics(params: &MlpParams, cohort: &Cohort, rows: &[usize]) -> Result<(f64, Option<f64>), TrainError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(cohort.features(rows));
    let logits = params.forward(&mut tape, &bound, x)?;
    let labels = cohort.labels(rows);
    let bce = tape
        .bce_with_logits(logits, &labels)
        .map_err(|e| TrainError::Model(e.into()))?;
    let bce = tape.value(bce).item();
    let k = cohort.num_classes;
    let values = tape.value(logits).data();
    let aucs: Vec<f64> = (0..k)
        .filter_map(|c| {
            let s: Vec<f64> = values.iter().skip(c).step_by(k).copied().collect();
            let y: Vec<bool> = labels.data().iter().skip(c).step_by(k).map(|&v| v == 1.0).collect();
            auc(&s, &y).ok()
        })
        .collect();
    let mean = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok((bce, mean))
}

/// Trains one model and evaluates it at the validation Youden point.
pub fn train_model(cohort: &Cohort, cfg: &TrainConfig, seed: u64) -> Result<RunResult, TrainError> {
    cfg.validate()?;
    let train_rows = cohort.indices(Split::Train);
    let val_rows = cohort.indices(Split::Val);
    for (split, rows) in [(Split::Train, &train_rows), (Split::Val, &val_rows)] {
        if rows.is_empty() {
            return Err(TrainError::EmptySplit(split));
        }
    }
    if cohort.indices(Split::Test).is_empty() {
        return Err(TrainError::EmptySplit(Split::Test));
    }

    let mut params = init_mlp(&cfg.model_config(cohort, seed))?;
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate, params.tensors().map(Tensor::len));
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut bce_sum, mut plus_sum, mut minus_sum) = (0.0, 0.0, 0.0, 0.0);
        let epoch_batches = batches(&train_rows, cfg.batch_size, seed, epoch as u64);
        for (b, rows) in epoch_batches.iter().enumerate() {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.constant(cohort.features(rows));
            let logits = params.forward(&mut tape, &bound, x)?;
            let view = BatchView::new(&tape, logits, cohort.labels(rows), cohort.catalog().masks(rows))?;
            let terms = total_loss(&mut tape, &view, &cfg.fairness)?;
            let loss = tape.value(terms.total).item();
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    bce: terms.bce,
                    eo_plus: terms.eo_plus,
                    eo_minus: terms.eo_minus,
                });
            }
            let grads = tape.backward(terms.total).map_err(|e| TrainError::Model(e.into()))?;
            let grads: Vec<Tensor> = bound
                .vars()
                .zip(params.tensors())
                .map(|(v, t)| grads.get_or_zeros(v, t.shape()))
                .collect();
            adam.step(params.tensors_mut(), &grads);
            loss_sum += loss;
            bce_sum += terms.bce;
            plus_sum += terms.eo_plus;
            minus_sum += terms.eo_minus;
        }
        let n = epoch_batches.len() as f64;
        let (val_bce, val_auc) = validation_metrics(&params, cohort, &val_rows)?;
        trace.push(EpochTrace {
            epoch,
            train_loss: loss_sum / n,
            train_bce: bce_sum / n,
            train_eo_plus: plus_sum / n,
            train_eo_minus: minus_sum / n,
            val_bce,
            val_auc,
        });
    }

    let (operating_point, report) = evaluate(&params, cohort, method_name(&cfg.fairness), None)?;
    Ok(RunResult {
        seed,
        params,
        trace,
        operating_point,
        report,
    })
}

/// One configuration compared across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub fairness: FairLossConfig,
}

impl Arm {
    pub fn new(name: &str, fairness: FairLossConfig) -> Self {
        Self {
            name: name.to_string(),
            fairness,
        }
    }
}

/// Baseline plus the configured regularized arm.
pub fn experiment_arms(fairness: &FairLossConfig) -> Vec<Arm> {
    vec![
        Arm::new(
            "baseline",
            FairLossConfig {
                lambda_plus: 0.0,
                lambda_minus: 0.0,
                ..*fairness
            },
        ),
        Arm::new("regularized", *fairness),
    ]
}

/// Baseline reference plus EO⁺-only, EO⁻-only, and both-term arms.
pub fn ablation_arms(fairness: &FairLossConfig) -> Vec<Arm> {
    vec![
        Arm::new(
            "baseline",
            FairLossConfig {
                lambda_plus: 0.0,
                lambda_minus: 0.0,
                ..*fairness
            },
        ),
        Arm::new(
            "eo_plus_only",
            FairLossConfig {
                lambda_minus: 0.0,
                ..*fairness
            },
        ),
        Arm::new(
            "eo_minus_only",
            FairLossConfig {
                lambda_plus: 0.0,
                ..*fairness
            },
        ),
        Arm::new("both", *fairness),
    ]
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    /// Sorted by seed; `report.delta_auc` is relative to the baseline arm
    /// of the same seed.
    pub runs: Vec<SeedRun>,
}

/// Per-arm, per-seed reports of an experiment or ablation.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub attributes: Vec<String>,
    pub arms: Vec<ArmResult>,
}

/// Trains every `(arm, seed)` pair on up to `jobs` threads. The first
/// arm is the reference for ΔAUC.
pub fn run_arms(cohort: &Cohort, cfg: &TrainConfig, arms: &[Arm], seeds: &[u64], jobs: usize) -> Result<Comparison, TrainError> {
    if seeds.len() < 2 {
        return Err(TrainError::InvalidConfig("experiments need at least two seeds".into()));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let tasks: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let run = |&(a, seed): &(usize, u64)| {
        let arm_cfg = cfg.with_fairness(arms[a].fairness);
        train_model(cohort, &arm_cfg, seed)
            .map(|r| r.report)
            .map_err(|e| TrainError::Seed {
                seed,
                source: Box::new(e),
            })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let reports: Vec<EvalReport> = pool.install(|| tasks.par_iter().map(run).collect::<Result<_, _>>())?;

    let mut arm_results: Vec<ArmResult> = arms
        .iter()
        .map(|arm| ArmResult {
            arm: arm.clone(),
            runs: Vec::with_capacity(seeds.len()),
        })
        .collect();
    for (&(a, seed), mut report) in tasks.iter().zip(reports) {
        report.method = arms[a].name.clone();
        arm_results[a].runs.push(SeedRun { seed, report });
    }
    let reference: Vec<EvalReport> = arm_results[0].runs.iter().map(|r| r.report.clone()).collect();
    for arm in &mut arm_results {
        for (run, base) in arm.runs.iter_mut().zip(&reference) {
            run.report = run.report.clone().with_baseline(base);
        }
    }
    Ok(Comparison {
        attributes: cohort.schema.iter().map(|(n, _)| n.clone()).collect(),
        arms: arm_results,
    })
}

pub fn run_experiment(cohort: &Cohort, cfg: &TrainConfig, seeds: &[u64], jobs: usize) -> Result<Comparison, TrainError> {
    run_arms(cohort, cfg, &experiment_arms(&cfg.fairness), seeds, jobs)
}

pub fn run_ablation(cohort: &Cohort, cfg: &TrainConfig, seeds: &[u64], jobs: usize) -> Result<Comparison, TrainError> {
    run_arms(cohort, cfg, &ablation_arms(&cfg.fairness), seeds, jobs)
}

/// Mean and standard error (`sample sd / √n`) of the present values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> Option<MeanSe> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanSe { mean, se, n })
}

fn cell<'a>(report: &'a EvalReport, attribute: &str) -> Option<&'a FairnessCell> {
    if attribute == "joint" {
        return Some(&report.joint);
    }
    report
        .attributes
        .iter()
        .find(|a| a.attribute == attribute)
        .map(|a| &a.macro_avg)
}

impl ArmResult {
    /// Per-seed values of a macro-averaged metric (`attribute` may be `"joint"`).
    pub fn values(&self, attribute: &str, metric: Metric) -> Vec<Option<f64>> {
        self.runs
            .iter()
            .map(|r| cell(&r.report, attribute).and_then(|c| c.get(metric)))
            .collect()
    }

    pub fn delta_auc(&self) -> Vec<Option<f64>> {
        self.runs.iter().map(|r| r.report.delta_auc).collect()
    }

    pub fn summary(&self, attribute: &str, metric: Metric) -> Option<MeanSe> {
        mean_se(&self.values(attribute, metric).into_iter().flatten().collect::<Vec<_>>())
    }
}

impl Comparison {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm.name == name)
    }

    fn columns(&self) -> Vec<String> {
        self.attributes
            .iter()
            .cloned()
            .chain(std::iter::once("joint".to_string()))
            .collect()
    }

    /// `method,seed,attribute,class,metric,value` for every seed.
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("method,seed,attribute,class,metric,value\n");
        for arm in &self.arms {
            for run in &arm.runs {
                for row in run.report.table_rows() {
                    let value = row.value.map_or_else(|| "NA".into(), format_f64);
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        arm.arm.name, run.seed, row.attribute, row.class, row.metric, value
                    )
                    .unwrap();
                }
            }
        }
        out
    }

    /// `method,attribute,class,metric,mean,se,n` over seeds.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,attribute,class,metric,mean,se,n\n");
        let fmt = |s: Option<MeanSe>| match s {
            Some(s) => format!("{},{},{}", format_f64(s.mean), format_f64(s.se), s.n),
            None => "NA,NA,0".to_string(),
        };
        for arm in &self.arms {
            for attribute in self.columns() {
                for metric in Metric::ALL {
                    writeln!(
                        out,
                        "{},{attribute},macro,{},{}",
                        arm.arm.name,
                        metric.name(),
                        fmt(arm.summary(&attribute, metric))
                    )
                    .unwrap();
                }
            }
            let auc: Vec<f64> = arm.runs.iter().filter_map(|r| r.report.macro_auc).collect();
            writeln!(out, "{},overall,macro,auc,{}", arm.arm.name, fmt(mean_se(&auc))).unwrap();
            let delta: Vec<f64> = arm.delta_auc().into_iter().flatten().collect();
            writeln!(out, "{},overall,macro,delta_auc,{}", arm.arm.name, fmt(mean_se(&delta))).unwrap();
        }
        out
    }

    /// Text table: one row per arm; EOdds and EOM per attribute plus
    /// joint, then ΔAUC, each as `mean ± s.e.`.
    pub fn render_table(&self) -> String {
        let cols = self.columns();
        let mut header = vec!["Method".to_string()];
        header.extend(cols.iter().map(|c| format!("EOdds {}", title(c))));
        header.extend(cols.iter().map(|c| format!("EOM {}", title(c))));
        header.push("ΔAUC".into());
        let mut rows = vec![header];
        for (i, arm) in self.arms.iter().enumerate() {
            let mut row = vec![arm.arm.name.clone()];
            for metric in [Metric::Eodds, Metric::Eom] {
                row.extend(cols.iter().map(|c| pm(arm.summary(c, metric))));
            }
            row.push(if i == 0 {
                "---".into()
            } else {
                pm(mean_se(&arm.delta_auc().into_iter().flatten().collect::<Vec<_>>()))
            });
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            writeln!(out, "{}", cells.join(" | ").trim_end()).unwrap();
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                writeln!(out, "{}", rule.join("-+-")).unwrap();
            }
        }
        out
    }
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
}

fn pm(s: Option<MeanSe>) -> String {
    s.map_or_else(|| "NA".into(), |s| format!("{:.3} ± {:.3}", s.mean, s.se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_two_step_oracle() {
        // f(w) = w², w0 = 1, lr 0.1; hand-derived:
        // step 1: g=2, m=0.2, v=0.004, m̂=2, v̂=4, w=1-0.1*2/(2+1e-8)
        let mut w = Tensor::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::default(), 0.1, [1]);
        let g1 = 2.0 * w.item();
        adam.step([&mut w], &[Tensor::scalar(g1)]);
        let w1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((w.item() - w1).abs() < 1e-12);
        // step 2: g=2w1, m=0.9*0.2+0.1*g, v=0.999*0.004+0.001*g²
        let g2 = 2.0 * w1;
        adam.step([&mut w], &[Tensor::scalar(g2)]);
        let m = 0.9 * 0.2 + 0.1 * g2;
        let v = 0.999 * 0.004 + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.998_001);
        let w2 = w1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((w.item() - w2).abs() < 1e-12, "{} vs {w2}", w.item());
    }

    #[test]
    fn standard_error_definition() {
        let s = mean_se(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.se - sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_se(&[]), None);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ablation_arm_lambdas() {
        let arms = ablation_arms(&FairLossConfig::with_lambdas(0.5, 0.5));
        let l: Vec<(f64, f64)> = arms
            .iter()
            .map(|a| (a.fairness.lambda_plus, a.fairness.lambda_minus))
            .collect();
        assert_eq!(l, vec![(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]);
    }
}
