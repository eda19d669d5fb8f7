//! Multilayer perceptron classifier trained with hand-written backprop and Adam.
//!
//! Layers are affine maps `z = a W^T + b` with ReLU between them and a softmax
//! on the output. All training objectives go through [`loss_and_grad`], which
//! evaluates a [`LossSpec`] with the functions in [`crate::losses`] and
//! returns exact analytic gradients.
//!
//! # Checkpoint format
//!
//! [`write_checkpoint`] emits line-oriented UTF-8 text:
//!
//! ```text
//! calibfair-mlp 1
//! dims <d> <h1> ... <C>
//! weight <layer> <rows> <cols>
//! <cols space-separated values>      (one line per row)
//! bias <layer> <len>
//! <len space-separated values>
//! ...                                (weight/bias pairs for every layer)
//! end
//! ```
//!
//! Values use the shortest decimal form that parses back to the same float,
//! so a save/load cycle is lossless.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{self, GroupWeights};
use crate::metrics::PredictionRecord;
use crate::scalar::Scalar;
use crate::data::Dataset;

const CHECKPOINT_MAGIC: &str = "calibfair-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layer_dims: Vec<usize>,
    /// `weights[l]` has shape `(layer_dims[l + 1], layer_dims[l])`.
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
}

/// Parameter-shaped container for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("layer_dims", "need input and output dimensions"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::invalid("layer_dims", "every dimension must be >= 1"));
    }
    Ok(())
}

impl<T: Scalar> MlpModel<T> {
    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                let z: f64 = rng.sample(StandardNormal);
                T::lit(z * std)
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a model from explicit parameters, checking shapes and finiteness.
    pub fn from_parts(layer_dims: Vec<usize>, weights: Vec<Array2<T>>, biases: Vec<Array1<T>>) -> Result<Self> {
        check_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Shape(format!(
                "{} weight and {} bias tensors for {layers} layers",
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in layer_dims.windows(2).enumerate() {
            if weights[l].dim() != (pair[1], pair[0]) || biases[l].len() != pair[1] {
                return Err(Error::Shape(format!("layer {l} does not match dims {pair:?}")));
            }
        }
        let model = MlpModel {
            layer_dims,
            weights,
            biases,
        };
        if !model.is_finite() {
            return Err(Error::invalid("parameters", "non-finite value"));
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<T>] {
        &mut self.biases
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Returns the post-activation output of every layer; the last entry holds
    /// the logits.
    fn forward_cached(&self, features: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        if features.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut outputs: Vec<Array2<T>> = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = if l == 0 { features } else { outputs[l - 1].view() };
            let mut z = input.dot(&w.t());
            z += b;
            if l != last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            outputs.push(z);
        }
        Ok(outputs)
    }
}

pub fn init_mlp<T: Scalar>(layer_dims: &[usize], seed: u64) -> Result<MlpModel<T>> {
    MlpModel::init(layer_dims, seed)
}

/// Logits for a batch of rows.
pub fn forward<T: Scalar>(model: &MlpModel<T>, features: ArrayView2<T>) -> Result<Array2<T>> {
    Ok(model.forward_cached(features)?.pop().expect("at least one layer"))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("logits", "non-finite value"));
    }
    let top = logits.iter().fold(T::neg_infinity(), |m, &z| m.max(z));
    let exps: Vec<T> = logits.iter().map(|&z| (z - top).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Result<Array2<T>> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let p = softmax(row.as_slice().expect("standard layout"))?;
        row.iter_mut().zip(p).for_each(|(dst, v)| *dst = v);
    }
    Ok(probs)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Training objective for one mini-batch. Per-sample fields (`groups`,
/// `weights`) are aligned with the batch rows.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec<T: Scalar> {
    CrossEntropy,
    Focal {
        gamma: T,
    },
    /// Unweighted mean over represented groups of per-group mean focal loss.
    GroupWiseFocal {
        gamma: T,
        groups: Vec<usize>,
        k: usize,
    },
    WeightedCrossEntropy {
        weights: Vec<T>,
    },
    /// Per-group focal (`gamma = 0` gives cross-entropy) weighted by a frozen
    /// GroupDRO distribution.
    GroupDro {
        gamma: T,
        groups: Vec<usize>,
        weights: GroupWeights<T>,
    },
}

/// Loss family tag, used by callers that only need to name the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal,
    GroupWiseFocal,
    WeightedCrossEntropy,
    GroupDro,
}

impl<T: Scalar> LossSpec<T> {
    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::CrossEntropy => LossKind::CrossEntropy,
            LossSpec::Focal { .. } => LossKind::Focal,
            LossSpec::GroupWiseFocal { .. } => LossKind::GroupWiseFocal,
            LossSpec::WeightedCrossEntropy { .. } => LossKind::WeightedCrossEntropy,
            LossSpec::GroupDro { .. } => LossKind::GroupDro,
        }
    }

    pub fn gamma(&self) -> T {
        match self {
            LossSpec::CrossEntropy | LossSpec::WeightedCrossEntropy { .. } => T::zero(),
            LossSpec::Focal { gamma }
            | LossSpec::GroupWiseFocal { gamma, .. }
            | LossSpec::GroupDro { gamma, .. } => *gamma,
        }
    }

    /// Checks the spec against a batch of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        let gamma = self.gamma();
        if !(gamma >= T::zero()) || !gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("{gamma} must be >= 0")));
        }
        let check_groups = |groups: &[usize], k: usize| -> Result<()> {
            if groups.len() != n {
                return Err(Error::Shape(format!("{} group ids for {n} samples", groups.len())));
            }
            if let Some(&g) = groups.iter().find(|&&g| g >= k) {
                return Err(Error::invalid("group ids", format!("id {g} >= K = {k}")));
            }
            Ok(())
        };
        match self {
            LossSpec::CrossEntropy | LossSpec::Focal { .. } => Ok(()),
            LossSpec::GroupWiseFocal { groups, k, .. } => check_groups(groups, *k),
            LossSpec::GroupDro { groups, weights, .. } => check_groups(groups, weights.len()),
            LossSpec::WeightedCrossEntropy { weights } => {
                if weights.len() != n {
                    return Err(Error::Shape(format!("{} weights for {n} samples", weights.len())));
                }
                if weights.iter().any(|w| !(*w >= T::zero())) {
                    return Err(Error::invalid("weights", "must be >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Loss value from the true-class probabilities of a batch.
    pub fn evaluate(&self, p_true: &[T]) -> Result<T> {
        match self {
            LossSpec::CrossEntropy => losses::mean_focal(p_true, T::zero()),
            LossSpec::Focal { gamma } => losses::mean_focal(p_true, *gamma),
            LossSpec::GroupWiseFocal { gamma, groups, k } => {
                losses::group_wise_focal(p_true, groups, *k, *gamma)
            }
            LossSpec::WeightedCrossEntropy { weights } => losses::weighted_cross_entropy(p_true, weights),
            LossSpec::GroupDro { gamma, groups, weights } => {
                losses::groupdro_objective(p_true, groups, *gamma, weights)
            }
        }
    }

    /// Coefficient of each sample's per-sample loss in the batch objective.
    fn sample_coefficients(&self, n: usize) -> Result<Vec<T>> {
        let grouped = |groups: &[usize], group_mass: &dyn Fn(usize) -> T, k: usize| {
            let mut counts = vec![0usize; k];
            for &g in groups {
                counts[g] += 1;
            }
            let present_mass: T = (0..k).filter(|&g| counts[g] > 0).map(group_mass).sum();
            groups
                .iter()
                .map(|&g| group_mass(g) / (present_mass * T::from_count(counts[g])))
                .collect::<Vec<T>>()
        };
        Ok(match self {
            LossSpec::CrossEntropy | LossSpec::Focal { .. } => vec![T::one() / T::from_count(n); n],
            LossSpec::GroupWiseFocal { groups, k, .. } => grouped(groups, &|_| T::one(), *k),
            LossSpec::GroupDro { groups, weights, .. } => {
                let q = weights.q();
                grouped(groups, &|g| q[g], q.len())
            }
            LossSpec::WeightedCrossEntropy { weights } => {
                let total: T = weights.iter().copied().sum();
                weights.iter().map(|&w| w / total).collect()
            }
        })
    }
}

/// Batch loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad<T: Scalar>(
    model: &MlpModel<T>,
    features: ArrayView2<T>,
    labels: &[usize],
    spec: &LossSpec<T>,
) -> Result<(T, Gradients<T>)> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("loss over an empty batch"));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let classes = model.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid("labels", format!("label {y} >= {classes} classes")));
    }
    spec.validate(n)?;

    let mut outputs = model.forward_cached(features)?;
    let logits = outputs.pop().expect("at least one layer");
    let probs = softmax_rows(&logits)?;
    let p_true: Vec<T> = labels.iter().enumerate().map(|(i, &y)| probs[[i, y]]).collect();
    let loss = spec.evaluate(&p_true)?;
    let coeff = spec.sample_coefficients(n)?;
    let gamma = spec.gamma();

    // d loss / d logits = c_i * s_i * (onehot - p)
    let mut delta = probs;
    for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
        let rest: T = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != labels[i])
            .map(|(_, &p)| p)
            .sum();
        let scale = coeff[i] * losses::focal_log_slope(p_true[i], rest, gamma);
        row.mapv_inplace(|p| -p * scale);
        row[labels[i]] += scale;
    }

    let mut grads = Gradients::zeros_like(model);
    for l in (0..model.weights.len()).rev() {
        let input = if l == 0 { features } else { outputs[l - 1].view() };
        grads.weights[l] = delta.t().dot(&input);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l]);
            Zip::from(&mut back)
                .and(&outputs[l - 1])
                .for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
            delta = back;
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamConfig<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            lr: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

impl<T: Scalar> AdamConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero()) || !self.lr.is_finite() {
            return Err(Error::invalid("lr", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b >= T::zero() && b < T::one()) {
                return Err(Error::invalid(name, "must lie in [0, 1)"));
            }
        }
        if !(self.eps > T::zero()) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        Ok(())
    }
}

/// Moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig<T>,
    m: Gradients<T>,
    v: Gradients<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &MlpModel<T>, config: AdamConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

fn same_shapes<T>(a: &Gradients<T>, b: &Gradients<T>) -> bool {
    a.weights.len() == b.weights.len()
        && a.biases.len() == b.biases.len()
        && a.weights.iter().zip(&b.weights).all(|(x, y)| x.dim() == y.dim())
        && a.biases.iter().zip(&b.biases).all(|(x, y)| x.dim() == y.dim())
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(model: &mut MlpModel<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    if !same_shapes(grads, &state.m) || state.m.weights.len() != model.weights.len() {
        return Err(Error::Shape("gradients, optimizer state and model disagree".into()));
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = T::one() - beta1.powi(t);
    let c2 = T::one() - beta2.powi(t);

    let update = |param: &mut T, g: T, m: &mut T, v: &mut T| {
        *m = beta1 * *m + (T::one() - beta1) * g;
        *v = beta2 * *v + (T::one() - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for l in 0..model.weights.len() {
        Zip::from(&mut model.weights[l])
            .and(&grads.weights[l])
            .and(&mut state.m.weights[l])
            .and(&mut state.v.weights[l])
            .for_each(|p, &g, m, v| update(p, g, m, v));
        Zip::from(&mut model.biases[l])
            .and(&grads.biases[l])
            .and(&mut state.m.biases[l])
            .and(&mut state.v.biases[l])
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

const PREDICT_CHUNK: usize = 1024;

/// Prediction records for `indices`, in the same order.
pub fn predict<T: Scalar>(model: &MlpModel<T>, dataset: &Dataset<T>, indices: &[usize]) -> Result<Vec<PredictionRecord<T>>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::invalid("indices", format!("{bad} >= dataset size {}", dataset.len())));
    }
    if model.num_classes() != dataset.num_classes() {
        return Err(Error::Shape(format!(
            "model has {} outputs, dataset {} classes",
            model.num_classes(),
            dataset.num_classes()
        )));
    }
    let mut records = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(PREDICT_CHUNK) {
        let x = dataset.gather_features(chunk);
        let probs = softmax_rows(&forward(model, x.view())?)?;
        for (row, &i) in probs.rows().into_iter().zip(chunk) {
            records.push(PredictionRecord::from_probs(row.to_vec(), dataset.labels()[i]));
        }
    }
    Ok(records)
}

fn write_row<T: Scalar, W: Write>(w: &mut W, values: impl Iterator<Item = T>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    writeln!(w)
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &MlpModel<T>, mut w: W) -> Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    write!(w, "dims")?;
    for d in &model.layer_dims {
        write!(w, " {d}")?;
    }
    writeln!(w)?;
    for (l, (weight, bias)) in model.weights.iter().zip(&model.biases).enumerate() {
        writeln!(w, "weight {l} {} {}", weight.nrows(), weight.ncols())?;
        for row in weight.rows() {
            write_row(&mut w, row.iter().copied())?;
        }
        writeln!(w, "bias {l} {}", bias.len())?;
        write_row(&mut w, bias.iter().copied())?;
    }
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: BufRead>(reader: R, source: &std::path::Path) -> Result<MlpModel<T>> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        column: 1,
        message,
    };
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?.trim_end().to_string())),
            None => Err(err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let parse_usize = |n: usize, tok: Option<&str>| -> Result<usize> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| err(n, "expected a non-negative integer".into()))
    };

    let (n, header) = next("header")?;
    let expected = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    if header != expected {
        return Err(err(n, format!("expected {expected:?}, found {header:?}")));
    }
    let (n, dims_line) = next("dims")?;
    let mut toks = dims_line.split_whitespace();
    if toks.next() != Some("dims") {
        return Err(err(n, "expected dims line".into()));
    }
    let dims = toks
        .map(|t| t.parse::<usize>().map_err(|_| err(n, format!("bad dimension {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    check_dims(&dims).map_err(|e| err(n, e.to_string()))?;

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let parse_values = |n: usize, line: &str, expect: usize| -> Result<Vec<T>> {
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| err(n, format!("bad value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expect {
            return Err(err(n, format!("expected {expect} values, found {}", vals.len())));
        }
        Ok(vals)
    };
    for l in 0..dims.len() - 1 {
        let (n, head) = next("weight header")?;
        let mut t = head.split_whitespace();
        if t.next() != Some("weight") || parse_usize(n, t.next())? != l {
            return Err(err(n, format!("expected weight header for layer {l}")));
        }
        let rows = parse_usize(n, t.next())?;
        let cols = parse_usize(n, t.next())?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = next("weight row")?;
            data.extend(parse_values(n, &line, cols)?);
        }
        weights.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| err(n, e.to_string()))?);

        let (n, head) = next("bias header")?;
        let mut t = head.split_whitespace();
        if t.next() != Some("bias") || parse_usize(n, t.next())? != l {
            return Err(err(n, format!("expected bias header for layer {l}")));
        }
        let len = parse_usize(n, t.next())?;
        let (n, line) = next("bias values")?;
        biases.push(Array1::from(parse_values(n, &line, len)?));
    }
    let (n, tail) = next("end")?;
    if tail != "end" {
        return Err(err(n, "expected end marker".into()));
    }
    MlpModel::from_parts(dims, weights, biases)
}

pub fn save_checkpoint<T: Scalar>(model: &MlpModel<T>, path: impl AsRef<std::path::Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(file))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<std::path::Path>) -> Result<MlpModel<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file), path)
}
