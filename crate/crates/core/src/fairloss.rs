//! Worst-group equalized-odds margin losses.
//!
//! For every class head and every mini-batch:
//!
//! 1. Compute the mean predicted probability of positives
//!    (`μ⁺_g`) and of negatives (`μ⁻_g`) inside every subgroup `g`.
//! 2. Pick `g⁺ = argmin μ⁺_g` (most under-diagnosed) and
//!    `g⁻ = argmax μ⁻_g` (most over-diagnosed); ties go to the lower
//!    group index.
//! 3. Form the smooth margins
//!
//!    ```text
//!    EO⁺ = log Σ_{y=0} e^{ℓ}        + log Σ_{y=1, i∈g⁺} e^{−ℓ}
//!    EO⁻ = log Σ_{y=0, i∈g⁻} e^{ℓ}  + log Σ_{y=1} e^{−ℓ}
//!    ```
//!
//!    and hinge them at zero.
//!
//! The training objective is `mean_k BCE_k + λ⁺·mean_k L⁺_k + λ⁻·mean_k L⁻_k`.
//! A term whose sample pools are empty in a batch contributes zero. Group
//! selection is a hard, non-differentiable choice; gradients flow only
//! through the margins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, AutodiffError, Tape, Tensor, Var};

#[derive(Debug, Error, PartialEq)]
pub enum FairLossError {
    #[error("{term} margin for class {class}: empty sample pool")]
    EmptyPool { term: &'static str, class: usize },
    #[error("invalid fairness config: {0}")]
    InvalidConfig(String),
    #[error("batch view: {0}")]
    BatchShape(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub attribute: String,
    pub value: String,
}

/// The unified set of attribute–value subgroups and each sample's
/// memberships. Sample `i` belongs to exactly one group per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupCatalog {
    attributes: Vec<String>,
    groups: Vec<Subgroup>,
    /// First group index of each attribute.
    offsets: Vec<usize>,
    /// `membership[i][a]` is the group index of sample `i` for attribute `a`.
    membership: Vec<Vec<usize>>,
}

impl SubgroupCatalog {
    /// `schema` lists each attribute with its ordered value labels;
    /// `assignments[i][a]` is the value index of sample `i` for attribute `a`.
    pub fn new(schema: &[(String, Vec<String>)], assignments: &[Vec<usize>]) -> Result<Self, FairLossError> {
        let mut groups = Vec::new();
        let mut offsets = Vec::with_capacity(schema.len());
        for (name, values) in schema {
            offsets.push(groups.len());
            groups.extend(values.iter().map(|v| Subgroup {
                attribute: name.clone(),
                value: v.clone(),
            }));
        }
        let membership = assignments
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != schema.len() {
                    return Err(FairLossError::BatchShape(format!(
                        "sample {i} has {} attribute values, schema has {}",
                        row.len(),
                        schema.len()
                    )));
                }
                row.iter()
                    .enumerate()
                    .map(|(a, &v)| {
                        if v < schema[a].1.len() {
                            Ok(offsets[a] + v)
                        } else {
                            Err(FairLossError::BatchShape(format!(
                                "sample {i}: value index {v} out of range for attribute `{}`",
                                schema[a].0
                            )))
                        }
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<usize>>, _>>()?;
        Ok(Self {
            attributes: schema.iter().map(|(n, _)| n.clone()).collect(),
            groups,
            offsets,
            membership,
        })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn groups(&self) -> &[Subgroup] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_samples(&self) -> usize {
        self.membership.len()
    }

    /// Group indices of sample `i`, one per attribute.
    pub fn groups_of(&self, sample: usize) -> &[usize] {
        &self.membership[sample]
    }

    /// Group indices belonging to attribute `a`.
    pub fn attribute_groups(&self, attribute: usize) -> std::ops::Range<usize> {
        let start = self.offsets[attribute];
        let end = self.offsets.get(attribute + 1).copied().unwrap_or(self.groups.len());
        start..end
    }

    /// `G` boolean masks over the given sample rows.
    pub fn masks(&self, rows: &[usize]) -> Vec<Vec<bool>> {
        let mut masks = vec![vec![false; rows.len()]; self.groups.len()];
        for (b, &i) in rows.iter().enumerate() {
            for &g in &self.membership[i] {
                masks[g][b] = true;
            }
        }
        masks
    }

    /// Catalog restricted to the given sample rows, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            attributes: self.attributes.clone(),
            groups: self.groups.clone(),
            offsets: self.offsets.clone(),
            membership: rows.iter().map(|&i| self.membership[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairLossConfig {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Minimum pool size for a group to be eligible as worst.
    pub min_group_count: usize,
}

impl Default for FairLossConfig {
    fn default() -> Self {
        Self {
            lambda_plus: 0.5,
            lambda_minus: 0.5,
            min_group_count: 1,
        }
    }
}

impl FairLossConfig {
    pub fn baseline() -> Self {
        Self {
            lambda_plus: 0.0,
            lambda_minus: 0.0,
            ..Self::default()
        }
    }

    pub fn with_lambdas(lambda_plus: f64, lambda_minus: f64) -> Self {
        Self {
            lambda_plus,
            lambda_minus,
            ..Self::default()
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.lambda_plus == 0.0 && self.lambda_minus == 0.0
    }

    pub fn validate(&self) -> Result<(), FairLossError> {
        for (name, v) in [("lambda_plus", self.lambda_plus), ("lambda_minus", self.lambda_minus)] {
            if !v.is_finite() || v < 0.0 {
                return Err(FairLossError::InvalidConfig(format!(
                    "train.fairness.{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.min_group_count == 0 {
            return Err(FairLossError::InvalidConfig(
                "train.fairness.min_group_count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Logits of one mini-batch with labels and subgroup masks.
#[derive(Debug, Clone)]
pub struct BatchView {
    /// `[B × K]` logits recorded on the tape.
    pub logits: Var,
    /// `[B × K]` labels in {0, 1}.
    pub labels: Tensor,
    /// One length-`B` mask per subgroup.
    pub group_masks: Vec<Vec<bool>>,
}

impl BatchView {
    pub fn new(tape: &Tape, logits: Var, labels: Tensor, group_masks: Vec<Vec<bool>>) -> Result<Self, FairLossError> {
        let shape = tape.value(logits).shape();
        if shape.len() != 2 || shape != labels.shape() {
            return Err(FairLossError::BatchShape(format!(
                "logits {:?} vs labels {:?}",
                shape,
                labels.shape()
            )));
        }
        let rows = shape[0];
        if let Some(m) = group_masks.iter().find(|m| m.len() != rows) {
            return Err(FairLossError::BatchShape(format!(
                "group mask of length {} for batch of {rows}",
                m.len()
            )));
        }
        Ok(Self {
            logits,
            labels,
            group_masks,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.labels.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.shape()[1]
    }

    fn label(&self, row: usize, class: usize) -> f64 {
        self.labels.get2(row, class)
    }

    /// Flat `[B × K]` mask selecting `(i, class)` with the given label,
    /// optionally restricted to a group.
    fn pool_mask(&self, class: usize, label: f64, group: Option<usize>) -> Vec<bool> {
        let (b, k) = (self.batch_size(), self.num_classes());
        let mut mask = vec![false; b * k];
        for i in 0..b {
            let in_group = group.is_none_or(|g| self.group_masks[g][i]);
            mask[i * k + class] = in_group && self.label(i, class) == label;
        }
        mask
    }
}

/// Per-group mean probabilities for one class; `None` where the pool is
/// smaller than the configured minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMeans {
    pub plus: Vec<Option<f64>>,
    pub minus: Vec<Option<f64>>,
}

pub fn group_means(tape: &Tape, batch: &BatchView, class: usize, min_group_count: usize) -> GroupMeans {
    let logits = tape.value(batch.logits);
    let min_count = min_group_count.max(1);
    let probs: Vec<f64> = (0..batch.batch_size()).map(|i| sigmoid(logits.get2(i, class))).collect();
    let mean_where = |mask: &[bool], label: f64| {
        let (sum, count) = probs
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask[i] && batch.label(i, class) == label)
            .fold((0.0, 0usize), |(s, c), (_, &p)| (s + p, c + 1));
        (count >= min_count).then(|| sum / count as f64)
    };
    GroupMeans {
        plus: batch.group_masks.iter().map(|m| mean_where(m, 1.0)).collect(),
        minus: batch.group_masks.iter().map(|m| mean_where(m, 0.0)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorstGroups {
    /// Group with the lowest positive mean.
    pub plus: Option<usize>,
    /// Group with the highest negative mean.
    pub minus: Option<usize>,
}

pub fn select_worst_groups(means: &GroupMeans) -> WorstGroups {
    let extreme = |values: &[Option<f64>], better: fn(f64, f64) -> bool| {
        let mut best: Option<(usize, f64)> = None;
        for (g, v) in values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| better(v, b)) {
                    best = Some((g, v));
                }
            }
        }
        best.map(|(g, _)| g)
    };
    WorstGroups {
        plus: extreme(&means.plus, |v, b| v < b),
        minus: extreme(&means.minus, |v, b| v > b),
    }
}

/// `log Σ_{y=0} e^{ℓ} + log Σ_{y=1, i∈g} e^{−ℓ}` for class `class`.
pub fn margin_eo_plus(tape: &mut Tape, batch: &BatchView, class: usize, group: usize) -> Result<Var, FairLossError> {
    let empty = FairLossError::EmptyPool { term: "EO+", class };
    let negatives = batch.pool_mask(class, 0.0, None);
    let group_positives = batch.pool_mask(class, 1.0, Some(group));
    if !negatives.contains(&true) || !group_positives.contains(&true) {
        return Err(empty);
    }
    let hi = tape.lse_max(batch.logits, &negatives)?;
    let lo = tape.lse_min(batch.logits, &group_positives)?;
    Ok(tape.sub(hi, lo)?)
}

/// `log Σ_{y=0, i∈g} e^{ℓ} + log Σ_{y=1} e^{−ℓ}` for class `class`.
pub fn margin_eo_minus(tape: &mut Tape, batch: &BatchView, class: usize, group: usize) -> Result<Var, FairLossError> {
    let empty = FairLossError::EmptyPool { term: "EO-", class };
    let group_negatives = batch.pool_mask(class, 0.0, Some(group));
    let positives = batch.pool_mask(class, 1.0, None);
    if !group_negatives.contains(&true) || !positives.contains(&true) {
        return Err(empty);
    }
    let hi = tape.lse_max(batch.logits, &group_negatives)?;
    let lo = tape.lse_min(batch.logits, &positives)?;
    Ok(tape.sub(hi, lo)?)
}

/// Scalar loss node plus the forward values of each component.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Var,
    pub bce: f64,
    /// `mean_k` of the EO⁺ hinge terms (before λ).
    pub eo_plus: f64,
    /// `mean_k` of the EO⁻ hinge terms (before λ).
    pub eo_minus: f64,
    /// Worst groups chosen per class.
    pub worst: Vec<WorstGroups>,
}

/// Full objective. Terms with zero λ are not recorded at all, so a
/// baseline config yields exactly the BCE graph.
pub fn total_loss(tape: &mut Tape, batch: &BatchView, cfg: &FairLossConfig) -> Result<LossTerms, FairLossError> {
    let classes = batch.num_classes();
    let bce = tape.bce_with_logits(batch.logits, &batch.labels)?;
    let bce_value = tape.value(bce).item();
    let mut total = bce;
    let mut worst = Vec::with_capacity(classes);
    let mut plus_terms = Vec::new();
    let mut minus_terms = Vec::new();

    if !cfg.is_baseline() {
        for k in 0..classes {
            let means = group_means(tape, batch, k, cfg.min_group_count);
            let chosen = select_worst_groups(&means);
            worst.push(chosen);
            if cfg.lambda_plus > 0.0 {
                if let Some(g) = chosen.plus {
                    match margin_eo_plus(tape, batch, k, g) {
                        Ok(m) => plus_terms.push(tape.hinge(m)),
                        Err(FairLossError::EmptyPool { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            if cfg.lambda_minus > 0.0 {
                if let Some(g) = chosen.minus {
                    match margin_eo_minus(tape, batch, k, g) {
                        Ok(m) => minus_terms.push(tape.hinge(m)),
                        Err(FairLossError::EmptyPool { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }

    let mut add_term = |tape: &mut Tape, terms: &[Var], lambda: f64| -> Result<f64, FairLossError> {
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(0.0);
        };
        let mut sum = first;
        for &t in rest {
            sum = tape.add(sum, t)?;
        }
        let mean = tape.scale(sum, 1.0 / classes as f64);
        let mean_value = tape.value(mean).item();
        let weighted = tape.scale(mean, lambda);
        total = tape.add(total, weighted)?;
        Ok(mean_value)
    };
    let eo_plus = add_term(tape, &plus_terms, cfg.lambda_plus)?;
    let eo_minus = add_term(tape, &minus_terms, cfg.lambda_minus)?;

    Ok(LossTerms {
        total,
        bce: bce_value,
        eo_plus,
        eo_minus,
        worst,
    })
}
