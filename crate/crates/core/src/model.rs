//! Multi-label MLP producing one logit per class head.
//!
//! Layers are `affine → relu → … → affine`; the final layer has no
//! activation so the outputs are logits.
//!
//! # Checkpoint format
//!
//! Checkpoints are plain text, one record per line:
//!
//! ```text
//! fairmargin-checkpoint 1
//! input_dim 4
//! hidden_dims 3
//! num_classes 2
//! activation relu
//! init_seed 7
//! layer 0 weight 4 3
//! <12 whitespace-separated values>
//! layer 0 bias 3
//! <3 values>
//! layer 1 weight 3 2
//! ...
//! ```
//!
//! `hidden_dims` is followed by zero or more integers. Weight matrices are
//! `fan_in × fan_out` in row-major order. Values are written with 17
//! significant digits so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config field `{0}` must be positive")]
    ZeroDimension(&'static str),
    #[error("input has {got} columns, model expects {expected}")]
    InputMismatch { expected: usize, got: usize },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

impl MlpConfig {
    /// Default desk-scale architecture: two hidden layers of 32 and 16.
    pub fn desk_scale(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![32, 16],
            num_classes,
            activation: Activation::Relu,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::ZeroDimension("input_dim"));
        }
        if self.num_classes == 0 {
            return Err(ModelError::ZeroDimension("num_classes"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(ModelError::ZeroDimension("hidden_dims"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.num_classes)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_in × fan_out`
    pub weight: Tensor,
    /// `fan_out`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub config: MlpConfig,
    pub layers: Vec<Linear>,
}

/// Parameter handles of an [`MlpParams`] registered on one tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Parameter vars in the same flat order as [`MlpParams::tensors`].
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(config: &MlpConfig) -> Result<MlpParams, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let layers = config
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            Linear {
                weight: Tensor::matrix(fan_in, fan_out, data).expect("positive dims"),
                bias: Tensor::zeros(&[fan_out]),
            }
        })
        .collect();
    Ok(MlpParams {
        config: config.clone(),
        layers,
    })
}

impl MlpParams {
    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Registers every weight and bias as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
            .collect();
        BoundMlp { layers }
    }

    /// Records the forward pass for `x: [B × input_dim]`, returning
    /// logits `[B × K]`.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundMlp, x: Var) -> Result<Var, ModelError> {
        let cols = tape.value(x).dims2().1;
        if tape.value(x).shape().len() != 2 || cols != self.input_dim() {
            return Err(ModelError::InputMismatch {
                expected: self.input_dim(),
                got: cols,
            });
        }
        let mut h = x;
        let last = bound.layers.len() - 1;
        for (i, &(w, b)) in bound.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if i < last {
                h = match self.config.activation {
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Ok(h)
    }

    /// Logits for a feature matrix, evaluated on a scratch tape.
    pub fn predict_logits(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let input = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, input)?;
        Ok(tape.value(out).clone())
    }

    pub fn to_checkpoint_string(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        writeln!(s, "fairmargin-checkpoint 1").unwrap();
        writeln!(s, "input_dim {}", c.input_dim).unwrap();
        let hidden: Vec<String> = c.hidden_dims.iter().map(usize::to_string).collect();
        writeln!(s, "hidden_dims {}", hidden.join(" ").trim_end()).unwrap();
        writeln!(s, "num_classes {}", c.num_classes).unwrap();
        writeln!(s, "activation {}", c.activation.as_str()).unwrap();
        writeln!(s, "init_seed {}", c.init_seed).unwrap();
        for (i, layer) in self.layers.iter().enumerate() {
            let (r, cols) = layer.weight.dims2();
            writeln!(s, "layer {i} weight {r} {cols}").unwrap();
            writeln!(s, "{}", join_values(layer.weight.data())).unwrap();
            writeln!(s, "layer {i} bias {}", layer.bias.len()).unwrap();
            writeln!(s, "{}", join_values(layer.bias.data())).unwrap();
        }
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, ModelError> {
        let mut lines = CheckpointLines::new(text);
        let magic = lines.next_line()?;
        if magic.1 != "fairmargin-checkpoint 1" {
            return Err(lines.error(magic.0, format!("unrecognized header `{}`", magic.1)));
        }
        let input_dim = lines.keyed_usize("input_dim")?;
        let hidden_dims = lines.keyed_list("hidden_dims")?;
        let num_classes = lines.keyed_usize("num_classes")?;
        let (line, act) = lines.keyed("activation")?;
        let activation = match act {
            "relu" => Activation::Relu,
            other => return Err(lines.error(line, format!("unknown activation `{other}`"))),
        };
        let (line, seed) = lines.keyed("init_seed")?;
        let init_seed = seed
            .parse()
            .map_err(|_| lines.error(line, format!("bad init_seed `{seed}`")))?;
        let config = MlpConfig {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
            init_seed,
        };
        config.validate().map_err(|e| lines.error(line, e.to_string()))?;

        let mut layers = Vec::new();
        for (i, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
            let weight = lines.tensor(&format!("layer {i} weight {fan_in} {fan_out}"), vec![fan_in, fan_out])?;
            let bias = lines.tensor(&format!("layer {i} bias {fan_out}"), vec![fan_out])?;
            layers.push(Linear { weight, bias });
        }
        if let Some((line, extra)) = lines.peek() {
            return Err(lines.error(line, format!("unexpected trailing content `{extra}`")));
        }
        Ok(Self { config, layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_values(values: &[f64]) -> String {
    values.iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(" ")
}

struct CheckpointLines<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> CheckpointLines<'a> {
    fn new(text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self {
            lines: iter.peekable(),
            last_line: 0,
        }
    }

    fn error(&self, line: usize, message: String) -> ModelError {
        ModelError::Checkpoint { line, message }
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        self.lines.peek().copied()
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), ModelError> {
        match self.lines.next() {
            Some(item) => {
                self.last_line = item.0;
                Ok(item)
            }
            None => Err(self.error(self.last_line + 1, "unexpected end of checkpoint".into())),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), ModelError> {
        let (line, text) = self.next_line()?;
        let rest = text
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| self.error(line, format!("expected `{key}`, found `{text}`")))?;
        Ok((line, rest.trim()))
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize, ModelError> {
        let (line, v) = self.keyed(key)?;
        v.parse().map_err(|_| self.error(line, format!("bad {key} `{v}`")))
    }

    fn keyed_list(&mut self, key: &str) -> Result<Vec<usize>, ModelError> {
        let (line, v) = self.keyed(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|_| self.error(line, format!("bad {key} entry `{t}`"))))
            .collect()
    }

    fn tensor(&mut self, header: &str, shape: Vec<usize>) -> Result<Tensor, ModelError> {
        let (line, text) = self.next_line()?;
        if text != header {
            return Err(self.error(line, format!("expected `{header}`, found `{text}`")));
        }
        let (line, text) = self.next_line()?;
        let values = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.error(line, format!("bad value `{t}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(self.error(line, format!("expected {expected} values, found {}", values.len())));
        }
        Ok(Tensor::new(shape, values)?)
    }
}
