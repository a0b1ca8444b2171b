//! Threshold-free AUC and operating-point fairness metrics.
//!
//! Per subgroup `g` of an attribute, at a per-class threshold `t`
//! (predict positive when `score ≥ t`):
//!
//! ```text
//! EOdds = 1 − ½ (min TPR / max TPR + min FPR / max FPR)     lower is better
//! EOM   = ½ (min TPR / max TPR + min TNR / max TNR)         higher is better
//! ```
//!
//! Groups whose rate has a zero denominator are left out of the min and
//! max. A ratio `0/0` (every present rate is zero) counts as parity and
//! evaluates to 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairloss::SubgroupCatalog;
use crate::model::format_f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("class {class}: labels contain only one class")]
    DegenerateLabels { class: usize },
    #[error("fewer than two subgroups with defined {rate}")]
    InsufficientGroups { rate: &'static str },
    #[error("prediction set: {0}")]
    Shape(String),
}

/// Scores and labels for one split, with the samples' subgroup memberships.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    num_classes: usize,
    /// `N × K` row-major probabilities.
    scores: Vec<f64>,
    /// `N × K` row-major labels in {0, 1}.
    labels: Vec<f64>,
    catalog: SubgroupCatalog,
}

impl PredictionSet {
    pub fn new(num_classes: usize, scores: Vec<f64>, labels: Vec<f64>, catalog: SubgroupCatalog) -> Result<Self, MetricsError> {
        if num_classes == 0 || scores.len() != labels.len() || scores.len() != catalog.num_samples() * num_classes {
            return Err(MetricsError::Shape(format!(
                "{} scores, {} labels, {} samples × {num_classes} classes",
                scores.len(),
                labels.len(),
                catalog.num_samples()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(MetricsError::Shape(format!("non-finite score {s}")));
        }
        if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(MetricsError::Shape(format!("label {y} is not 0 or 1")));
        }
        Ok(Self {
            num_classes,
            scores,
            labels,
            catalog,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.catalog.num_samples()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn catalog(&self) -> &SubgroupCatalog {
        &self.catalog
    }

    pub fn class_scores(&self, class: usize) -> Vec<f64> {
        self.scores.iter().skip(class).step_by(self.num_classes).copied().collect()
    }

    pub fn class_labels(&self, class: usize) -> Vec<bool> {
        self.labels
            .iter()
            .skip(class)
            .step_by(self.num_classes)
            .map(|&y| y == 1.0)
            .collect()
    }
}

/// Per-class decision thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub thresholds: Vec<f64>,
}

impl OperatingPoint {
    /// Youden-optimal threshold for every class of a validation split.
    pub fn select(validation: &PredictionSet) -> Result<Self, MetricsError> {
        let thresholds = (0..validation.num_classes())
            .map(|k| youden_threshold(&validation.class_scores(k), &validation.class_labels(k)).map_err(|e| relabel(e, k)))
            .collect::<Result<_, _>>()?;
        Ok(Self { thresholds })
    }
}

fn relabel(e: MetricsError, class: usize) -> MetricsError {
    match e {
        MetricsError::DegenerateLabels { .. } => MetricsError::DegenerateLabels { class },
        other => other,
    }
}

/// Mann–Whitney AUC with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels { class: 0 });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sums of ranks are integers or half-integers; keep them doubled so
    // the statistic is exact in integer arithmetic.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, midrank (i+1+j)/2
        let doubled_midrank = (i + 1 + j) as u128;
        let positives = order[i..j].iter().filter(|&&idx| labels[idx]).count() as u128;
        doubled_rank_sum += doubled_midrank * positives;
        i = j;
    }
    let n_pos = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

/// Candidate thresholds: 0, midpoints between consecutive distinct
/// sorted scores, and 1, in ascending order.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(0.0);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(1.0);
    out
}

/// `TPR − FPR` when predicting positive for `score ≥ threshold`.
pub fn youden_j(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        let hit = s >= threshold;
        if y {
            pos += 1;
            tp += hit as usize;
        } else {
            neg += 1;
            fp += hit as usize;
        }
    }
    tp as f64 / pos as f64 - fp as f64 / neg as f64
}

/// Threshold maximizing Youden's J over [`threshold_candidates`]; the
/// lowest candidate wins ties.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::DegenerateLabels { class: 0 });
    }
    let candidates = threshold_candidates(scores);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep ascending thresholds; `cursor` counts samples with score < t.
    let (mut below_pos, mut below_neg, mut cursor) = (0usize, 0usize, 0usize);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &t in &candidates {
        while cursor < order.len() && scores[order[cursor]] < t {
            if labels[order[cursor]] {
                below_pos += 1;
            } else {
                below_neg += 1;
            }
            cursor += 1;
        }
        let j = (pos - below_pos) as f64 / pos as f64 - (neg - below_neg) as f64 / neg as f64;
        if j > best.0 {
            best = (j, t);
        }
    }
    Ok(best.1)
}

/// Confusion counts and rates of one subgroup for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub group: String,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl GroupRate {
    pub fn support_pos(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn support_neg(&self) -> usize {
        self.fp + self.tn
    }

    pub fn tpr(&self) -> Option<f64> {
        let d = self.support_pos();
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        let d = self.support_neg();
        (d > 0).then(|| self.fp as f64 / d as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        let d = self.support_neg();
        (d > 0).then(|| self.tn as f64 / d as f64)
    }
}

/// Per-class, per-subgroup confusion counts for one attribute.
/// Returns `rates[class][group_within_attribute]`.
pub fn group_rates(preds: &PredictionSet, op: &OperatingPoint, attribute: usize) -> Vec<Vec<GroupRate>> {
    let catalog = preds.catalog();
    let range = catalog.attribute_groups(attribute);
    (0..preds.num_classes())
        .map(|k| {
            let mut rates: Vec<GroupRate> = catalog.groups()[range.clone()]
                .iter()
                .map(|g| GroupRate {
                    group: g.value.clone(),
                    tp: 0,
                    fn_: 0,
                    fp: 0,
                    tn: 0,
                })
                .collect();
            let t = op.thresholds[k];
            for i in 0..preds.len() {
                let g = catalog.groups_of(i)[attribute] - range.start;
                let predicted = preds.scores[i * preds.num_classes + k] >= t;
                let actual = preds.labels[i * preds.num_classes + k] == 1.0;
                let r = &mut rates[g];
                match (actual, predicted) {
                    (true, true) => r.tp += 1,
                    (true, false) => r.fn_ += 1,
                    (false, true) => r.fp += 1,
                    (false, false) => r.tn += 1,
                }
            }
            rates
        })
        .collect()
}

/// `min / max` over present values; `0/0` is parity.
fn worst_to_best(values: impl Iterator<Item = Option<f64>>, rate: &'static str) -> Result<f64, MetricsError> {
    let present: Vec<f64> = values.flatten().collect();
    if present.len() < 2 {
        return Err(MetricsError::InsufficientGroups { rate });
    }
    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
    let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if max == 0.0 { 1.0 } else { min / max })
}

pub fn tpr_ratio(rates: &[GroupRate]) -> Result<f64, MetricsError> {
    worst_to_best(rates.iter().map(GroupRate::tpr), "TPR")
}

pub fn fpr_ratio(rates: &[GroupRate]) -> Result<f64, MetricsError> {
    worst_to_best(rates.iter().map(GroupRate::fpr), "FPR")
}

pub fn tnr_ratio(rates: &[GroupRate]) -> Result<f64, MetricsError> {
    worst_to_best(rates.iter().map(GroupRate::tnr), "TNR")
}

/// Equalized-odds disparity from worst-to-best ratios.
pub fn eodds_from_ratios(tpr_ratio: f64, fpr_ratio: f64) -> f64 {
    1.0 - 0.5 * (tpr_ratio + fpr_ratio)
}

/// Equality of opportunity over the two outcomes of a binary head.
pub fn eom_from_ratios(tpr_ratio: f64, tnr_ratio: f64) -> f64 {
    0.5 * (tpr_ratio + tnr_ratio)
}

pub fn eodds(rates: &[GroupRate]) -> Result<f64, MetricsError> {
    Ok(eodds_from_ratios(tpr_ratio(rates)?, fpr_ratio(rates)?))
}

pub fn eom(rates: &[GroupRate]) -> Result<f64, MetricsError> {
    Ok(eom_from_ratios(tpr_ratio(rates)?, tnr_ratio(rates)?))
}

/// Fairness metrics of one attribute for one class, or their macro average.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessCell {
    pub eodds: Option<f64>,
    pub eom: Option<f64>,
    pub tpr_ratio: Option<f64>,
    pub fpr_ratio: Option<f64>,
}

impl FairnessCell {
    fn from_rates(rates: &[GroupRate]) -> Self {
        let tpr = tpr_ratio(rates).ok();
        let fpr = fpr_ratio(rates).ok();
        let tnr = tnr_ratio(rates).ok();
        Self {
            eodds: tpr.zip(fpr).map(|(t, f)| eodds_from_ratios(t, f)),
            eom: tpr.zip(tnr).map(|(t, n)| eom_from_ratios(t, n)),
            tpr_ratio: tpr,
            fpr_ratio: fpr,
        }
    }

    fn mean_of(cells: &[&FairnessCell]) -> Self {
        Self {
            eodds: mean_present(cells.iter().map(|c| c.eodds)),
            eom: mean_present(cells.iter().map(|c| c.eom)),
            tpr_ratio: mean_present(cells.iter().map(|c| c.tpr_ratio)),
            fpr_ratio: mean_present(cells.iter().map(|c| c.fpr_ratio)),
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Eodds => self.eodds,
            Metric::Eom => self.eom,
            Metric::TprRatio => self.tpr_ratio,
            Metric::FprRatio => self.fpr_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Eodds,
    Eom,
    TprRatio,
    FprRatio,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Eodds, Metric::Eom, Metric::TprRatio, Metric::FprRatio];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Eodds => "eodds",
            Metric::Eom => "eom",
            Metric::TprRatio => "tpr_ratio",
            Metric::FprRatio => "fpr_ratio",
        }
    }
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFairness {
    pub class: usize,
    #[serde(flatten)]
    pub metrics: FairnessCell,
    pub groups: Vec<GroupRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub attribute: String,
    /// Macro average over classes.
    pub macro_avg: FairnessCell,
    pub classes: Vec<ClassFairness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub class: usize,
    pub auc: Option<f64>,
}

/// Test-split evaluation at a validation-selected operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub thresholds: Vec<f64>,
    pub class_auc: Vec<ClassAuc>,
    pub macro_auc: Option<f64>,
    pub delta_auc: Option<f64>,
    pub attributes: Vec<AttributeReport>,
    /// Mean of the per-attribute macro values.
    pub joint: FairnessCell,
    /// Cells left out because of empty subgroups or single-class labels.
    pub notes: Vec<String>,
}

/// Assembles the report. `op` must come from the validation split.
pub fn build_report(method: &str, test: &PredictionSet, op: &OperatingPoint, baseline: Option<&EvalReport>) -> EvalReport {
    let mut notes = Vec::new();
    let class_auc: Vec<ClassAuc> = (0..test.num_classes())
        .map(|k| {
            let auc = auc(&test.class_scores(k), &test.class_labels(k)).ok();
            if auc.is_none() {
                notes.push(format!("class {k}: AUC undefined (single-class labels)"));
            }
            ClassAuc { class: k, auc }
        })
        .collect();
    let macro_auc = mean_present(class_auc.iter().map(|c| c.auc));

    let catalog = test.catalog();
    let attributes: Vec<AttributeReport> = catalog
        .attributes()
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let classes: Vec<ClassFairness> = group_rates(test, op, a)
                .into_iter()
                .enumerate()
                .map(|(k, groups)| {
                    for g in &groups {
                        if g.support_pos() == 0 {
                            notes.push(format!("{name}={} class {k}: no positives, TPR excluded", g.group));
                        }
                        if g.support_neg() == 0 {
                            notes.push(format!("{name}={} class {k}: no negatives, FPR excluded", g.group));
                        }
                    }
                    let metrics = FairnessCell::from_rates(&groups);
                    if metrics.eodds.is_none() {
                        notes.push(format!("{name} class {k}: fewer than two groups with defined rates"));
                    }
                    ClassFairness {
                        class: k,
                        metrics,
                        groups,
                    }
                })
                .collect();
            let macro_avg = FairnessCell::mean_of(&classes.iter().map(|c| &c.metrics).collect::<Vec<_>>());
            AttributeReport {
                attribute: name.clone(),
                macro_avg,
                classes,
            }
        })
        .collect();
    let joint = FairnessCell::mean_of(&attributes.iter().map(|a| &a.macro_avg).collect::<Vec<_>>());
    let delta_auc = baseline.and_then(|b| Some(macro_auc? - b.macro_auc?));

    EvalReport {
        method: method.to_string(),
        thresholds: op.thresholds.clone(),
        class_auc,
        macro_auc,
        delta_auc,
        attributes,
        joint,
        notes,
    }
}

impl EvalReport {
    pub fn with_baseline(mut self, baseline: &EvalReport) -> Self {
        self.delta_auc = self.macro_auc.zip(baseline.macro_auc).map(|(a, b)| a - b);
        self
    }

    /// Rows of the flat metric table.
    pub fn table_rows(&self) -> Vec<TableRow> {
        let mut rows = Vec::new();
        let mut push = |attribute: &str, class: String, metric: &str, value: Option<f64>| {
            rows.push(TableRow {
                method: self.method.clone(),
                attribute: attribute.to_string(),
                class,
                metric: metric.to_string(),
                value,
            });
        };
        for a in &self.attributes {
            for c in &a.classes {
                for m in Metric::ALL {
                    push(&a.attribute, c.class.to_string(), m.name(), c.metrics.get(m));
                }
            }
            for m in Metric::ALL {
                push(&a.attribute, "macro".into(), m.name(), a.macro_avg.get(m));
            }
        }
        for m in Metric::ALL {
            push("joint", "macro".into(), m.name(), self.joint.get(m));
        }
        for c in &self.class_auc {
            push("overall", c.class.to_string(), "auc", c.auc);
        }
        push("overall", "macro".into(), "auc", self.macro_auc);
        push("overall", "macro".into(), "delta_auc", self.delta_auc);
        rows
    }

    pub fn to_table_csv(&self) -> String {
        render_table(&self.table_rows())
    }
}

/// One row of the flat `(method, attribute, class, metric, value)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub attribute: String,
    pub class: String,
    pub metric: String,
    pub value: Option<f64>,
}

pub const TABLE_HEADER: &str = "method,attribute,class,metric,value";

/// CSV text with [`TABLE_HEADER`]; absent values are written as `NA`.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let value = r.value.map_or_else(|| "NA".to_string(), format_f64);
        out.push_str(&format!("{},{},{},{},{}\n", r.method, r.attribute, r.class, r.metric, value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(tp: usize, fn_: usize, fp: usize, tn: usize) -> GroupRate {
        GroupRate {
            group: String::new(),
            tp,
            fn_,
            fp,
            tn,
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(MetricsError::DegenerateLabels { class: 0 })
        );
    }

    #[test]
    fn youden_examples() {
        assert_eq!(youden_threshold(&[0.2, 0.8], &[false, true]).unwrap(), 0.5);
        // Inverted scores: J ≤ 0 everywhere, maximum 0 first reached at t = 0.
        let t = youden_threshold(&[0.1, 0.2, 0.7, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(t, 0.0);
        assert!(youden_threshold(&[0.1], &[true]).is_err());
    }

    #[test]
    fn candidates_are_midpoints() {
        assert_eq!(
            threshold_candidates(&[0.6, 0.2, 0.2, 0.4]),
            vec![0.0, 0.30000000000000004, 0.5, 1.0]
        );
    }

    #[test]
    fn counting_oracle_rates() {
        let a = rate(2, 1, 1, 1);
        let b = rate(1, 1, 0, 1);
        assert_eq!(a.tpr(), Some(2.0 / 3.0));
        assert_eq!(b.tpr(), Some(0.5));
        assert_eq!(a.fpr(), Some(0.5));
        assert_eq!(b.fpr(), Some(0.0));
        assert_eq!(rate(0, 0, 1, 2).tpr(), None);
    }

    #[test]
    fn eodds_examples() {
        // TPRs {0.8, 0.6}, FPRs {0.2, 0.1}
        let rates = [rate(8, 2, 2, 8), rate(6, 4, 1, 9)];
        assert!((eodds(&rates).unwrap() - 0.375).abs() < 1e-12);
        let equal = [rate(3, 1, 1, 3), rate(6, 2, 2, 6)];
        assert_eq!(eodds(&equal).unwrap(), 0.0);
        // TPRs {1.0, 0.5}, FPRs equal
        let rates = [rate(4, 0, 1, 3), rate(2, 2, 1, 3)];
        assert!((eodds(&rates).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(
            eodds(&[rate(1, 1, 1, 1)]),
            Err(MetricsError::InsufficientGroups { rate: "TPR" })
        );
    }

    #[test]
    fn zero_fpr_everywhere_is_parity() {
        let rates = [rate(3, 1, 0, 5), rate(3, 1, 0, 2)];
        assert_eq!(fpr_ratio(&rates).unwrap(), 1.0);
        assert_eq!(eodds(&rates).unwrap(), 0.0);
    }

    #[test]
    fn eom_examples() {
        // TPRs {0.9, 0.6}, TNRs {0.8, 0.8}
        let rates = [rate(9, 1, 2, 8), rate(6, 4, 2, 8)];
        assert!((eom(&rates).unwrap() - (0.5 * (0.6 / 0.9 + 1.0))).abs() < 1e-12);
        assert!((eom(&rates).unwrap() - 0.833_333_333_333_333_4).abs() < 1e-12);
        let perfect = [rate(5, 0, 0, 5), rate(2, 0, 0, 7)];
        assert_eq!(eom(&perfect).unwrap(), 1.0);
        let zero_tpr = [rate(0, 5, 1, 4), rate(4, 1, 2, 3)];
        let tnr = (3.0 / 5.0) / (4.0 / 5.0);
        assert!((eom(&zero_tpr).unwrap() - 0.5 * tnr).abs() < 1e-12);
    }

    #[test]
    fn empty_groups_excluded() {
        let rates = [rate(2, 2, 1, 1), rate(0, 0, 1, 3), rate(1, 3, 0, 0)];
        // TPR from groups 0 and 2, FPR from groups 0 and 1
        assert_eq!(tpr_ratio(&rates).unwrap(), 0.5);
        assert_eq!(fpr_ratio(&rates).unwrap(), 0.5);
    }
}
