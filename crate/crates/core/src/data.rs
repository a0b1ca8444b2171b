//! Synthetic multi-attribute cohorts with controllable subgroup bias,
//! CSV I/O, stratified splitting, and seeded mini-batching.
//!
//! Every sample draws one value per attribute from the configured
//! marginals and one Bernoulli label per class. Features are
//!
//! ```text
//! x = Σ_k y_k · signal · e_k  +  Σ_attr shift_g · b_g  +  (Π_attr noise_g) · ε
//! ```
//!
//! where `e_k` is the k-th coordinate axis, `ε ~ N(0, I)`, and `b_g` is a
//! unit direction per subgroup whose cosine with the mean class direction
//! is `bias_alignment`. A positive `shift_g` raises the group's scores on
//! every class (over-diagnosis); a larger `noise_g` blurs its class
//! separation (under-diagnosis of weak positives).
//!
//! # CSV layout
//!
//! ```text
//! # fairmargin-cohort fingerprint=<16 hex digits>
//! # schema age=<60|60+;race=White|Black|Asian;sex=Female|Male
//! id,f0,…,f{d−1},y0,…,y{K−1},age,race,sex,split
//! ```
//!
//! Features use 17 significant digits, labels are `0`/`1`, and `split`
//! is one of `train`, `val`, `test`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::fairloss::SubgroupCatalog;
use crate::model::format_f64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid cohort config `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown value `{value}` for attribute `{attribute}`")]
    UnknownValue { line: usize, attribute: String, value: String },
    #[error("split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> DataError {
    DataError::InvalidConfig {
        field: field.into(),
        message: message.into(),
    }
}

/// Independent RNG streams derived from one run seed.
pub mod streams {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const GENERATE: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    /// Epoch `e` shuffles on stream `SHUFFLE + e`.
    pub const SHUFFLE: u64 = 1 << 32;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeValue {
    pub label: String,
    pub probability: f64,
    /// Signed feature shift along the group's bias direction.
    #[serde(default)]
    pub shift: f64,
    /// Noise-scale multiplier.
    #[serde(default = "one")]
    pub noise: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub values: Vec<AttributeValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Missing fields take their values from [`CohortConfig::biased`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_samples: usize,
    pub feature_dim: usize,
    /// Per-class prevalence; its length is the number of classes.
    pub prevalence: Vec<f64>,
    /// Class separation along each class axis.
    pub signal: f64,
    /// Cosine between each subgroup bias direction and the mean class axis.
    pub bias_alignment: f64,
    pub attributes: Vec<AttributeSpec>,
    pub split: SplitFractions,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self::biased()
    }
}

fn value(label: &str, probability: f64, shift: f64, noise: f64) -> AttributeValue {
    AttributeValue {
        label: label.to_string(),
        probability,
        shift,
        noise,
    }
}

impl CohortConfig {
    /// Default biased cohort: two age bins, three race values, two sex
    /// values (seven subgroups), two class heads, n = 10000.
    pub fn biased() -> Self {
        Self {
            n_samples: 10_000,
            feature_dim: 12,
            prevalence: vec![0.5, 0.3],
            signal: 2.0,
            bias_alignment: 0.7,
            attributes: vec![
                AttributeSpec {
                    name: "age".into(),
                    values: vec![value("<60", 0.46, -0.52, 1.0), value("60+", 0.54, 0.65, 1.0)],
                },
                AttributeSpec {
                    name: "race".into(),
                    values: vec![
                        value("White", 0.34, 0.52, 1.0),
                        value("Black", 0.33, -0.78, 1.6),
                        value("Asian", 0.33, 0.0, 1.0),
                    ],
                },
                AttributeSpec {
                    name: "sex".into(),
                    values: vec![value("Female", 0.55, -0.39, 1.2), value("Male", 0.45, 0.39, 1.0)],
                },
            ],
            split: SplitFractions::default(),
            seed: 2024,
        }
    }

    /// Same schema with every shift 0 and every noise multiplier 1.
    pub fn unbiased() -> Self {
        let mut cfg = Self::biased();
        for a in &mut cfg.attributes {
            for v in &mut a.values {
                v.shift = 0.0;
                v.noise = 1.0;
            }
        }
        cfg
    }

    pub fn num_classes(&self) -> usize {
        self.prevalence.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_samples == 0 {
            return Err(invalid("cohort.n_samples", "must be positive"));
        }
        if self.prevalence.is_empty() {
            return Err(invalid("cohort.prevalence", "needs at least one class"));
        }
        if self.feature_dim < self.prevalence.len() {
            return Err(invalid(
                "cohort.feature_dim",
                format!("must be at least the number of classes ({})", self.prevalence.len()),
            ));
        }
        if self.feature_dim < 2 && self.bias_alignment.abs() < 1.0 {
            return Err(invalid("cohort.feature_dim", "needs a second axis for off-signal bias"));
        }
        for (k, &p) in self.prevalence.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(invalid(format!("cohort.prevalence[{k}]"), format!("{p} is not in (0, 1)")));
            }
        }
        if !(self.signal.is_finite() && self.signal >= 0.0) {
            return Err(invalid("cohort.signal", "must be finite and non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.bias_alignment) {
            return Err(invalid("cohort.bias_alignment", "must lie in [-1, 1]"));
        }
        if self.attributes.is_empty() {
            return Err(invalid("cohort.attributes", "needs at least one attribute"));
        }
        let mut names = std::collections::HashSet::new();
        for attr in &self.attributes {
            let field = format!("cohort.attributes.{}", attr.name);
            if attr.name.is_empty()
                || !is_plain_label(&attr.name)
                || attr.name.starts_with(['f', 'y']) && attr.name[1..].parse::<usize>().is_ok()
            {
                return Err(invalid(&field, "attribute name must be a plain label"));
            }
            if matches!(attr.name.as_str(), "id" | "split") || !names.insert(attr.name.as_str()) {
                return Err(invalid(&field, "attribute name is reserved or duplicated"));
            }
            if attr.values.is_empty() {
                return Err(invalid(&field, "needs at least one value"));
            }
            let mut labels = std::collections::HashSet::new();
            for v in &attr.values {
                if v.label.is_empty() || !is_plain_label(&v.label) || !labels.insert(v.label.as_str()) {
                    return Err(invalid(&field, format!("bad or duplicate value label `{}`", v.label)));
                }
                if !(v.probability.is_finite() && v.probability >= 0.0) {
                    return Err(invalid(
                        format!("{field}.{}.probability", v.label),
                        format!("{} is not a probability", v.probability),
                    ));
                }
                if !v.shift.is_finite() {
                    return Err(invalid(format!("{field}.{}.shift", v.label), "must be finite"));
                }
                if !(v.noise.is_finite() && v.noise > 0.0) {
                    return Err(invalid(format!("{field}.{}.noise", v.label), "must be positive"));
                }
            }
            let total: f64 = attr.values.iter().map(|v| v.probability).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(
                    format!("{field}.probability"),
                    format!("probabilities of attribute `{}` sum to {total}, expected 1", attr.name),
                ));
            }
        }
        let s = self.split;
        for (name, f) in [("train", s.train), ("val", s.val), ("test", s.test)] {
            if !(f.is_finite() && f > 0.0) {
                return Err(invalid(format!("cohort.split.{name}"), "fraction must be positive"));
            }
        }
        if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return Err(invalid("cohort.split", "fractions must sum to 1"));
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn schema(&self) -> Vec<(String, Vec<String>)> {
        self.attributes
            .iter()
            .map(|a| (a.name.clone(), a.values.iter().map(|v| v.label.clone()).collect()))
            .collect()
    }
}

fn is_plain_label(s: &str) -> bool {
    !s.chars()
        .any(|c| c.is_whitespace() || matches!(c, ',' | ';' | '|' | '=' | '#' | '"'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    /// Value index per attribute.
    pub attributes: Vec<usize>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub fingerprint: String,
    pub schema: Vec<(String, Vec<String>)>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
    catalog: SubgroupCatalog,
}

impl Cohort {
    fn assemble(
        fingerprint: String,
        schema: Vec<(String, Vec<String>)>,
        feature_dim: usize,
        num_classes: usize,
        samples: Vec<Sample>,
    ) -> Self {
        let assignments: Vec<Vec<usize>> = samples.iter().map(|s| s.attributes.clone()).collect();
        let catalog = SubgroupCatalog::new(&schema, &assignments).expect("attribute indices come from the schema");
        Self {
            fingerprint,
            schema,
            feature_dim,
            num_classes,
            samples,
            catalog,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn catalog(&self) -> &SubgroupCatalog {
        &self.catalog
    }

    /// Sample indices tagged with `split`, in cohort order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// `[rows × feature_dim]` feature matrix.
    pub fn features(&self, rows: &[usize]) -> Tensor {
        let data = rows.iter().flat_map(|&i| self.samples[i].features.iter().copied()).collect();
        Tensor::matrix(rows.len(), self.feature_dim, data).expect("non-empty rows")
    }

    /// `[rows × K]` label matrix.
    pub fn labels(&self, rows: &[usize]) -> Tensor {
        let data = rows
            .iter()
            .flat_map(|&i| self.samples[i].labels.iter().map(|&y| y as f64))
            .collect();
        Tensor::matrix(rows.len(), self.num_classes, data).expect("non-empty rows")
    }

    /// Samples per subgroup and positives per class, for summaries.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let n = self.len();
        writeln!(
            s,
            "samples: {n}  features: {}  classes: {}",
            self.feature_dim, self.num_classes
        )
        .unwrap();
        for split in [Split::Train, Split::Val, Split::Test] {
            writeln!(s, "split {}: {}", split.as_str(), self.indices(split).len()).unwrap();
        }
        for k in 0..self.num_classes {
            let pos = self.samples.iter().filter(|x| x.labels[k] == 1).count();
            writeln!(s, "class {k} prevalence: {:.4}", pos as f64 / n as f64).unwrap();
        }
        for (a, (name, values)) in self.schema.iter().enumerate() {
            for (v, label) in values.iter().enumerate() {
                let count = self.samples.iter().filter(|x| x.attributes[a] == v).count();
                writeln!(s, "{name}={label}: {count}").unwrap();
            }
        }
        s
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# fairmargin-cohort fingerprint={}", self.fingerprint).unwrap();
        let schema: Vec<String> = self
            .schema
            .iter()
            .map(|(name, values)| format!("{name}={}", values.join("|")))
            .collect();
        writeln!(out, "# schema {}", schema.join(";")).unwrap();
        let mut header = vec!["id".to_string()];
        header.extend((0..self.feature_dim).map(|j| format!("f{j}")));
        header.extend((0..self.num_classes).map(|k| format!("y{k}")));
        header.extend(self.schema.iter().map(|(n, _)| n.clone()));
        header.push("split".into());
        writeln!(out, "{}", header.join(",")).unwrap();
        for s in &self.samples {
            let mut row = vec![s.id.to_string()];
            row.extend(s.features.iter().map(|&v| format_f64(v)));
            row.extend(s.labels.iter().map(u8::to_string));
            row.extend(s.attributes.iter().enumerate().map(|(a, &v)| self.schema[a].1[v].clone()));
            row.push(s.split.as_str().into());
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DataError> {
        let mut lines = text.splitn(3, '\n');
        let parse_err = |line: usize, message: String| DataError::Parse { line, message };
        let first = lines.next().unwrap_or_default();
        let fingerprint = first
            .strip_prefix("# fairmargin-cohort fingerprint=")
            .ok_or_else(|| parse_err(1, "missing `# fairmargin-cohort` comment line".into()))?
            .trim()
            .to_string();
        let second = lines.next().unwrap_or_default();
        let schema_text = second
            .strip_prefix("# schema ")
            .ok_or_else(|| parse_err(2, "missing `# schema` comment line".into()))?;
        let schema = schema_text
            .trim()
            .split(';')
            .map(|part| {
                let (name, values) = part
                    .split_once('=')
                    .ok_or_else(|| parse_err(2, format!("bad schema entry `{part}`")))?;
                Ok((name.to_string(), values.split('|').map(str::to_string).collect()))
            })
            .collect::<Result<Vec<(String, Vec<String>)>, DataError>>()?;
        let body = lines.next().unwrap_or_default();
        const COMMENT_LINES: usize = 2;

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(body.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| parse_err(COMMENT_LINES + 1, e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let feature_dim = cols.iter().filter(|c| is_indexed(c, 'f')).count();
        let num_classes = cols.iter().filter(|c| is_indexed(c, 'y')).count();
        let mut expected = vec!["id".to_string()];
        expected.extend((0..feature_dim).map(|j| format!("f{j}")));
        expected.extend((0..num_classes).map(|k| format!("y{k}")));
        expected.extend(schema.iter().map(|(n, _)| n.clone()));
        expected.push("split".into());
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() || feature_dim == 0 || num_classes == 0 {
            return Err(parse_err(
                COMMENT_LINES + 1,
                format!("header `{}` does not match expected `{}`", cols.join(","), expected.join(",")),
            ));
        }

        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(COMMENT_LINES + line, e.to_string())
            })?;
            let line = COMMENT_LINES + record.position().map_or(0, |p| p.line() as usize);
            if record.len() != expected.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", expected.len(), record.len()),
                ));
            }
            let id = record[0]
                .parse()
                .map_err(|_| parse_err(line, format!("bad id `{}`", &record[0])))?;
            let features = (1..=feature_dim)
                .map(|j| {
                    record[j]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line, format!("bad feature `{}` in column {}", &record[j], cols[j])))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let labels = (0..num_classes)
                .map(|k| match &record[1 + feature_dim + k] {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(parse_err(line, format!("label `{other}` in column y{k} is not 0 or 1"))),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            let base = 1 + feature_dim + num_classes;
            let attributes = schema
                .iter()
                .enumerate()
                .map(|(a, (name, values))| {
                    let raw = &record[base + a];
                    values.iter().position(|v| v == raw).ok_or_else(|| DataError::UnknownValue {
                        line,
                        attribute: name.clone(),
                        value: raw.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let raw_split = &record[base + schema.len()];
            let split = Split::parse(raw_split).ok_or_else(|| parse_err(line, format!("unknown split `{raw_split}`")))?;
            samples.push(Sample {
                id,
                features,
                labels,
                attributes,
                split,
            });
        }
        Ok(Self::assemble(fingerprint, schema, feature_dim, num_classes, samples))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self, DataError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

fn is_indexed(col: &str, prefix: char) -> bool {
    col.strip_prefix(prefix)
        .is_some_and(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()))
}

fn draw_categorical(rng: &mut ChaCha8Rng, values: &[AttributeValue]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v.probability;
        if u < acc {
            return i;
        }
    }
    // Rounding slack lands on the last value with non-zero probability.
    values.iter().rposition(|v| v.probability > 0.0).unwrap_or(values.len() - 1)
}

/// Unit bias direction per subgroup, in catalog order.
fn bias_directions(cfg: &CohortConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = cfg.feature_dim;
    let k = cfg.num_classes();
    let mut mean_axis = vec![0.0; d];
    for v in mean_axis.iter_mut().take(k) {
        *v = 1.0 / (k as f64).sqrt();
    }
    let alpha = cfg.bias_alignment;
    let ortho = (1.0 - alpha * alpha).max(0.0).sqrt();
    let groups: usize = cfg.attributes.iter().map(|a| a.values.len()).sum();
    (0..groups)
        .map(|_| {
            // Random direction with the mean-axis component removed.
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let dot: f64 = v.iter().zip(&mean_axis).map(|(a, b)| a * b).sum();
            for (x, m) in v.iter_mut().zip(&mean_axis) {
                *x -= dot * m;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().zip(&mean_axis).map(|(x, m)| alpha * m + ortho * x / norm).collect()
        })
        .collect()
}

/// Draws a cohort and tags it with a stratified split.
pub fn generate(cfg: &CohortConfig) -> Result<Cohort, DataError> {
    cfg.validate()?;
    let mut rng = streams::rng(cfg.seed, streams::GENERATE);
    let directions = bias_directions(cfg, &mut rng);
    let offsets: Vec<usize> = cfg
        .attributes
        .iter()
        .scan(0, |acc, a| {
            let start = *acc;
            *acc += a.values.len();
            Some(start)
        })
        .collect();
    let k = cfg.num_classes();
    let d = cfg.feature_dim;
    let samples = (0..cfg.n_samples)
        .map(|id| {
            let attributes: Vec<usize> = cfg.attributes.iter().map(|a| draw_categorical(&mut rng, &a.values)).collect();
            let labels: Vec<u8> = cfg.prevalence.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
            let mut features = vec![0.0; d];
            for (c, &y) in labels.iter().enumerate().take(k) {
                features[c] += cfg.signal * y as f64;
            }
            let mut noise = 1.0;
            for (a, &v) in attributes.iter().enumerate() {
                let spec = &cfg.attributes[a].values[v];
                noise *= spec.noise;
                for (f, b) in features.iter_mut().zip(&directions[offsets[a] + v]) {
                    *f += spec.shift * b;
                }
            }
            for f in features.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *f += noise * e;
            }
            Sample {
                id,
                features,
                labels,
                attributes,
                split: Split::Train,
            }
        })
        .collect();
    let cohort = Cohort::assemble(cfg.fingerprint(), cfg.schema(), d, k, samples);
    split(cohort, cfg.split, cfg.seed)
}

/// Split sizes by rounding, with the test split taking the remainder.
fn split_sizes(n: usize, f: SplitFractions) -> Result<[usize; 3], DataError> {
    let train = (f.train * n as f64).round() as usize;
    let val = (f.val * n as f64).round() as usize;
    let test = n.saturating_sub(train + val);
    for (name, size) in [("train", train), ("val", val), ("test", test)] {
        if size == 0 {
            return Err(DataError::EmptySplit(name));
        }
    }
    Ok([train, val, test])
}

/// Largest-remainder apportionment of `total` proportionally to `sizes`.
fn apportion(total: usize, sizes: [usize; 3]) -> [usize; 3] {
    let n: usize = sizes.iter().sum();
    let mut out = [0usize; 3];
    let mut remainders = [(0.0, 0usize); 3];
    for i in 0..3 {
        let exact = total as f64 * sizes[i] as f64 / n as f64;
        out[i] = exact.floor() as usize;
        remainders[i] = (exact - exact.floor(), i);
    }
    let mut left = total - out.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Stratified on head 0 so each split keeps the overall prevalence.
pub fn split(mut cohort: Cohort, fractions: SplitFractions, seed: u64) -> Result<Cohort, DataError> {
    let sizes = split_sizes(cohort.len(), fractions)?;
    let mut positives: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.samples[i].labels[0] == 1).collect();
    let mut negatives: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.samples[i].labels[0] == 0).collect();
    let pos_counts = apportion(positives.len(), sizes);
    let mut rng = streams::rng(seed, streams::SPLIT);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let tags = [Split::Train, Split::Val, Split::Test];
    let (mut p, mut q) = (0, 0);
    for s in 0..3 {
        let neg_count = sizes[s] - pos_counts[s];
        for &i in &positives[p..p + pos_counts[s]] {
            cohort.samples[i].split = tags[s];
        }
        for &i in &negatives[q..q + neg_count] {
            cohort.samples[i].split = tags[s];
        }
        p += pos_counts[s];
        q += neg_count;
    }
    Ok(cohort)
}

/// Shuffled mini-batches of `rows` for one epoch; the last batch may be
/// short.
pub fn batches(rows: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order = rows.to_vec();
    let mut rng = streams::rng(seed, streams::SHUFFLE + epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
