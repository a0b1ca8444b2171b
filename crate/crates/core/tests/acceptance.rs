//! Acceptance checks. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p fairmargin --test acceptance`.

use std::time::{Duration, Instant};

use fairmargin::autodiff::{Tape, Tensor};
use fairmargin::data::{batches, Split};
use fairmargin::fairloss::{total_loss, BatchView, FairLossConfig};
use fairmargin::metrics::{auc, eodds, eom, threshold_candidates, youden_j, youden_threshold, GroupRate, Metric};
use fairmargin::model::{init_mlp, MlpConfig, MlpParams};
use fairmargin::train::{run_ablation, run_experiment, train_model, Adam, ArmResult, Comparison};
use fairmargin::{generate, CohortConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
/// Entries with |gradient| below this are compared absolutely.
const FD_REL_FLOOR: f64 = 1e-6;
const LSE_TOL: f64 = 1e-12;
const AUC_TOL: f64 = 1e-12;
const RATE_TOL: f64 = 1e-12;
const MARGIN_TOL: f64 = 1e-10;
const MAX_DELTA_AUC_DROP: f64 = -0.03;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    let timing = match budget {
        Some(b) => {
            if elapsed > b {
                out.pass = false;
            }
            format!("{:.1} s (budget {} s)", elapsed.as_secs_f64(), b.as_secs())
        }
        None => format!("{:.1} s", elapsed.as_secs_f64()),
    };
    let tag = if out.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id} {name}: {}; {timing}", out.detail);
    out.pass
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Random batch: features, labels with both classes present per head,
/// and masks for a 2-valued and a 3-valued attribute.
struct RandomBatch {
    x: Tensor,
    y: Tensor,
    masks: Vec<Vec<bool>>,
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, d: usize, k: usize) -> RandomBatch {
    let x = Tensor::matrix(b, d, (0..b * d).map(|_| standard_normal(rng)).collect()).unwrap();
    let mut y = vec![0.0; b * k];
    for (i, v) in y.iter_mut().enumerate() {
        let row = i / k;
        *v = match row {
            0 => 1.0,
            1 => 0.0,
            _ => f64::from(u8::from(rng.random_bool(0.5))),
        };
    }
    let a0: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
    let a1: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
    let mut masks = Vec::new();
    for g in 0..2 {
        masks.push(a0.iter().map(|&v| v == g).collect());
    }
    for g in 0..3 {
        masks.push(a1.iter().map(|&v| v == g).collect());
    }
    RandomBatch {
        x,
        y: Tensor::matrix(b, k, y).unwrap(),
        masks,
    }
}

fn loss_and_grads(params: &MlpParams, batch: &RandomBatch, cfg: &FairLossConfig) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(batch.x.clone());
    let logits = params.forward(&mut tape, &bound, x).unwrap();
    let view = BatchView::new(&tape, logits, batch.y.clone(), batch.masks.clone()).unwrap();
    let terms = total_loss(&mut tape, &view, cfg).unwrap();
    let grads = tape.backward(terms.total).unwrap();
    let g = bound
        .vars()
        .zip(params.tensors())
        .map(|(v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    (tape.value(terms.total).item(), g)
}

fn criterion_gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let (d, k) = (4, 2);
        let b = rng.random_range(8..=16);
        let batch = random_batch(&mut rng, b, d, k);
        let params = init_mlp(&MlpConfig {
            input_dim: d,
            hidden_dims: vec![5],
            num_classes: k,
            activation: Default::default(),
            init_seed: trial,
        })
        .unwrap();
        let scale = 2.0;
        let mut params = params;
        for t in params.tensors_mut() {
            for w in t.data_mut() {
                *w = *w * scale + 0.1 * standard_normal(&mut rng);
            }
        }
        let cfg = FairLossConfig::with_lambdas(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let (_, analytic) = loss_and_grads(&params, &batch, &cfg);
        for (p, grad) in analytic.iter().enumerate() {
            for j in 0..grad.len() {
                let mut plus = params.clone();
                plus.tensors_mut().nth(p).unwrap().data_mut()[j] += FD_STEP;
                let mut minus = params.clone();
                minus.tensors_mut().nth(p).unwrap().data_mut()[j] -= FD_STEP;
                let numeric = (loss_and_grads(&plus, &batch, &cfg).0 - loss_and_grads(&minus, &batch, &cfg).0) / (2.0 * FD_STEP);
                let a = grad.data()[j];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_REL_FLOOR);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    Outcome {
        pass: worst < FD_REL_TOL,
        detail: format!("50 batches, {checked} entries, max rel err {worst:.2e} (tol {FD_REL_TOL:.0e}, h {FD_STEP:.0e})"),
    }
}

fn criterion_lse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    let mut worst_duality: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let spread = 10f64.powf(rng.random_range(-2.0..3.0));
        let values: Vec<f64> = (0..n).map(|_| spread * standard_normal(&mut rng)).collect();
        let mask = vec![true; n];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(values.clone()));
        let neg_x = tape.constant(Tensor::vector(values.iter().map(|v| -v).collect()));
        let lmax = tape.lse_max(x, &mask).unwrap();
        let lmin = tape.lse_min(x, &mask).unwrap();
        let lmax_neg = tape.lse_max(neg_x, &mask).unwrap();
        let (lmax, lmin, lmax_neg) = (tape.value(lmax).item(), tape.value(lmin).item(), tape.value(lmax_neg).item());
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let ln_n = (n as f64).ln();
        let tol = LSE_TOL * max.abs().max(min.abs()).max(1.0);
        let ok = max <= lmax + tol && lmax <= max + ln_n + tol && min - ln_n <= lmin + tol && lmin <= min + tol;
        violations += usize::from(!ok);
        worst_duality = worst_duality.max((lmin + lmax_neg).abs());
    }
    Outcome {
        pass: violations == 0 && worst_duality <= LSE_TOL,
        detail: format!("1000 vectors, {violations} bound violations, max |lse_min(x) + lse_max(-x)| = {worst_duality:.1e} (tol {LSE_TOL:.0e})"),
    }
}

fn criterion_reduction() -> Outcome {
    let cohort = generate(&CohortConfig {
        n_samples: 1200,
        ..CohortConfig::biased()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        fairness: FairLossConfig::baseline(),
        ..TrainConfig::default()
    };
    let seed = 3;
    let trained = train_model(&cohort, &cfg, seed).unwrap();

    // Plain BCE loop sharing only init, batching and the optimizer.
    let mut params = init_mlp(&cfg.model_config(&cohort, seed)).unwrap();
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate, params.tensors().map(Tensor::len));
    let rows = cohort.indices(Split::Train);
    let mut epoch_bce = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let epoch_batches = batches(&rows, cfg.batch_size, seed, epoch as u64);
        for b in &epoch_batches {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.constant(cohort.features(b));
            let logits = params.forward(&mut tape, &bound, x).unwrap();
            let loss = tape.bce_with_logits(logits, &cohort.labels(b)).unwrap();
            sum += tape.value(loss).item();
            let grads = tape.backward(loss).unwrap();
            let grads: Vec<Tensor> = bound
                .vars()
                .zip(params.tensors())
                .map(|(v, t)| grads.get_or_zeros(v, t.shape()))
                .collect();
            adam.step(params.tensors_mut(), &grads);
        }
        epoch_bce.push(sum / epoch_batches.len() as f64);
    }

    let bits = |p: &MlpParams| -> Vec<u64> { p.tensors().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect() };
    let same_params = bits(&params) == bits(&trained.params);
    let same_trace = trained
        .trace
        .iter()
        .zip(&epoch_bce)
        .all(|(t, &b)| t.train_bce.to_bits() == b.to_bits() && t.train_loss.to_bits() == b.to_bits());
    Outcome {
        pass: same_params && same_trace,
        detail: format!(
            "5 epochs, {} parameters bitwise equal: {same_params}, per-epoch loss bitwise equal: {same_trace}",
            params.num_parameters()
        ),
    }
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut doubled = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        p += 1;
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    n += labels.iter().filter(|&&y| !y).count() as u64;
    doubled as f64 / (2 * p * n) as f64
}

fn rate(tp: usize, fn_: usize, fp: usize, tn: usize) -> GroupRate {
    GroupRate {
        group: String::new(),
        tp,
        fn_,
        fp,
        tn,
    }
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut auc_err: f64 = 0.0;
    let mut youden_mismatch = 0usize;
    for set in 0..100 {
        let n = rng.random_range(2..=200);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let coarse = set % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if coarse {
                    (s * 20.0).round() / 20.0
                } else {
                    s
                }
            })
            .collect();
        auc_err = auc_err.max((auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs());

        // Exhaustive scan: best J first, lowest threshold on ties.
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for t in threshold_candidates(&scores) {
            let j = youden_j(&scores, &labels, t);
            if j > best.0 {
                best = (j, t);
            }
        }
        let chosen = youden_threshold(&scores, &labels).unwrap();
        if chosen.to_bits() != best.1.to_bits() {
            youden_mismatch += 1;
        }
    }

    // TPR {0.8, 0.6}, FPR {0.2, 0.1}.
    let table = [rate(8, 2, 2, 8), rate(6, 4, 1, 9)];
    let eodds_value = eodds(&table).unwrap();
    let eom_value = eom(&table).unwrap();
    let eom_direct = 0.5 * (0.6 / 0.8 + 0.8 / 0.9);
    let equal = [rate(7, 3, 2, 8), rate(14, 6, 4, 16), rate(21, 9, 6, 24)];
    let equal_eodds = eodds(&equal).unwrap();

    let pass = auc_err <= AUC_TOL
        && youden_mismatch == 0
        && (eodds_value - 0.375).abs() <= RATE_TOL
        && (eom_value - eom_direct).abs() <= RATE_TOL
        && equal_eodds.abs() <= RATE_TOL;
    Outcome {
        pass,
        detail: format!(
            "AUC max err {auc_err:.1e} over 100 sets; Youden mismatches {youden_mismatch}/100; \
             EOdds = {eodds_value}, EOM err {:.1e}, equal-rate EOdds = {equal_eodds}",
            (eom_value - eom_direct).abs()
        ),
    }
}

/// Scalar reference for one K=1 batch.
fn margin_reference(logits: &[f64], labels: &[f64], groups: &[usize], lp: f64, lm: f64) -> f64 {
    let n = logits.len() as f64;
    let bce: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| {
            let p = 1.0 / (1.0 + (-l).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n;
    let sig = |l: f64| 1.0 / (1.0 + (-l).exp());
    let n_groups = groups.iter().max().unwrap() + 1;
    let mean_in = |g: usize, y: f64| {
        let v: Vec<f64> = (0..logits.len())
            .filter(|&i| groups[i] == g && labels[i] == y)
            .map(|i| sig(logits[i]))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let pick = |y: f64, lower: bool| {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..n_groups {
            if let Some(m) = mean_in(g, y) {
                let better = best.is_none_or(|(_, b)| if lower { m < b } else { m > b });
                if better {
                    best = Some((g, m));
                }
            }
        }
        best.map(|b| b.0)
    };
    let log_sum = |pred: &dyn Fn(usize) -> bool, sign: f64| -> Option<f64> {
        let terms: Vec<f64> = (0..logits.len())
            .filter(|&i| pred(i))
            .map(|i| (sign * logits[i]).exp())
            .collect();
        (!terms.is_empty()).then(|| terms.iter().sum::<f64>().ln())
    };
    let hinge = |m: Option<f64>| m.map_or(0.0, |m: f64| m.max(0.0));
    let eo_plus = pick(1.0, true).and_then(|g| {
        let neg = log_sum(&|i| labels[i] == 0.0, 1.0)?;
        let pos = log_sum(&|i| labels[i] == 1.0 && groups[i] == g, -1.0)?;
        Some(neg + pos)
    });
    let eo_minus = pick(0.0, false).and_then(|g| {
        let neg = log_sum(&|i| labels[i] == 0.0 && groups[i] == g, 1.0)?;
        let pos = log_sum(&|i| labels[i] == 1.0, -1.0)?;
        Some(neg + pos)
    });
    bce + lp * hinge(eo_plus) + lm * hinge(eo_minus)
}

fn library_total(logits: &[f64], labels: &[f64], groups: &[usize], lp: f64, lm: f64) -> f64 {
    let n = logits.len();
    let mut tape = Tape::new();
    let l = tape.param(Tensor::matrix(n, 1, logits.to_vec()).unwrap());
    let n_groups = groups.iter().max().unwrap() + 1;
    let masks = (0..n_groups).map(|g| groups.iter().map(|&x| x == g).collect()).collect();
    let view = BatchView::new(&tape, l, Tensor::matrix(n, 1, labels.to_vec()).unwrap(), masks).unwrap();
    let terms = total_loss(&mut tape, &view, &FairLossConfig::with_lambdas(lp, lm)).unwrap();
    tape.value(terms.total).item()
}

fn criterion_margin_oracle() -> Outcome {
    let groups = [0, 0, 1, 1];
    let cases: [(&str, [f64; 4], [f64; 4]); 3] = [
        ("mixed", [1.0, -0.5, 0.3, 2.0], [1.0, 0.0, 1.0, 0.0]),
        ("one negative", [0.4, -1.2, 0.9, 1.5], [1.0, 1.0, 1.0, 0.0]),
        ("empty pools", [0.7, -0.2, 1.1, -0.8], [1.0, 1.0, 1.0, 1.0]),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, logits, labels) in cases {
        let reference = margin_reference(&logits, &labels, &groups, 0.5, 0.5);
        let got = library_total(&logits, &labels, &groups, 0.5, 0.5);
        worst = worst.max((reference - got).abs());
        parts.push(format!("{name} {got:.12}"));
    }
    // With no negatives both terms vanish and the loss is plain BCE.
    let (logits, labels) = (cases[2].1, cases[2].2);
    let empty_is_bce = (library_total(&logits, &labels, &groups, 0.5, 0.5) - library_total(&logits, &labels, &groups, 0.0, 0.0))
        .abs()
        <= MARGIN_TOL;
    Outcome {
        pass: worst <= MARGIN_TOL && empty_is_bce,
        detail: format!(
            "{}; max err {worst:.1e} (tol {MARGIN_TOL:.0e}); empty pool -> BCE only: {empty_is_bce}",
            parts.join(", ")
        ),
    }
}

fn default_setup() -> (fairmargin::Cohort, TrainConfig, Vec<u64>, usize) {
    let cohort = generate(&CohortConfig::biased()).unwrap();
    let cfg = TrainConfig::default();
    let seeds = cfg.seeds.clone();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    (cohort, cfg, seeds, jobs)
}

fn count(arm: &ArmResult, base: &ArmResult, metric: Metric, better: fn(f64, f64) -> bool) -> usize {
    arm.values("joint", metric)
        .iter()
        .zip(base.values("joint", metric))
        .filter(|(a, b)| matches!((a, b), (Some(a), Some(b)) if better(*a, *b)))
        .count()
}

fn criterion_experiment(experiment: &Comparison) -> Outcome {
    let base = experiment.arm("baseline").unwrap();
    let reg = experiment.arm("regularized").unwrap();
    let n = reg.runs.len();
    let eodds_wins = count(reg, base, Metric::Eodds, |a, b| a < b);
    let eom_wins = count(reg, base, Metric::Eom, |a, b| a > b);
    let deltas: Vec<f64> = reg.delta_auc().into_iter().flatten().collect();
    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Outcome {
        pass: n == 6 && eodds_wins >= 5 && eom_wins >= 5 && mean_delta >= MAX_DELTA_AUC_DROP,
        detail: format!(
            "joint EOdds lower in {eodds_wins}/{n} seeds (need 5), joint EOM higher in {eom_wins}/{n} (need 5), \
             mean dAUC {mean_delta:.4} (need >= {MAX_DELTA_AUC_DROP})"
        ),
    }
}

fn criterion_ablation(ablation: &Comparison, experiment: &Comparison) -> Outcome {
    let base = ablation.arm("baseline").unwrap();
    let plus = ablation.arm("eo_plus_only").unwrap();
    let minus = ablation.arm("eo_minus_only").unwrap();
    let both = ablation.arm("both").unwrap();
    let tpr_wins = count(plus, base, Metric::TprRatio, |a, b| a > b);
    let fpr_wins = count(minus, base, Metric::FprRatio, |a, b| a > b);
    let mean = |a: &ArmResult| a.summary("joint", Metric::Eodds).unwrap().mean;
    let (m_both, m_plus, m_minus) = (mean(both), mean(plus), mean(minus));
    let reg = experiment.arm("regularized").unwrap();
    let same_as_experiment =
        Metric::ALL.iter().all(|&m| both.values("joint", m) == reg.values("joint", m)) && both.delta_auc() == reg.delta_auc();
    Outcome {
        pass: tpr_wins >= 4 && fpr_wins >= 4 && m_both <= m_plus && m_both <= m_minus && same_as_experiment,
        detail: format!(
            "EO+ only raises joint TPR ratio in {tpr_wins}/6 (need 4), EO- only raises joint FPR ratio in {fpr_wins}/6 (need 4), \
             mean joint EOdds both {m_both:.4} vs EO+ {m_plus:.4} / EO- {m_minus:.4}; both arm equals experiment arm: {same_as_experiment}"
        ),
    }
}

fn tables(c: &Comparison) -> [String; 3] {
    [c.per_seed_csv(), c.summary_csv(), c.render_table()]
}

fn main() {
    let mut all = true;
    all &= run(1, "gradient check", Some(Duration::from_secs(30)), criterion_gradients);
    all &= run(2, "LSE bounds and duality", Some(Duration::from_secs(5)), criterion_lse);
    all &= run(3, "reduction to baseline", None, criterion_reduction);
    all &= run(4, "metric oracles", None, criterion_metrics);
    all &= run(5, "margin-loss oracle", None, criterion_margin_oracle);

    let (cohort, cfg, seeds, jobs) = default_setup();
    let mut experiment = None;
    all &= run(6, "directional fairness", Some(Duration::from_secs(15 * 60)), || {
        let c = run_experiment(&cohort, &cfg, &seeds, jobs).unwrap();
        let out = criterion_experiment(&c);
        println!("{}", c.render_table());
        experiment = Some(c);
        out
    });
    let experiment = experiment.unwrap();
    all &= run(7, "ablation structure", Some(Duration::from_secs(20 * 60)), || {
        let c = run_ablation(&cohort, &cfg, &seeds, jobs).unwrap();
        let out = criterion_ablation(&c, &experiment);
        println!("{}", c.render_table());
        out
    });
    all &= run(8, "determinism", None, || {
        let rerun_jobs = if jobs == 1 { 3 } else { 1 };
        let again = run_experiment(&cohort, &cfg, &seeds, rerun_jobs).unwrap();
        let same = tables(&again) == tables(&experiment);
        Outcome {
            pass: same,
            detail: format!(
                "rerun with jobs={rerun_jobs} vs jobs={jobs}: per-seed, summary and rendered tables byte-identical: {same}"
            ),
        }
    });

    if !all {
        std::process::exit(1);
    }
}
