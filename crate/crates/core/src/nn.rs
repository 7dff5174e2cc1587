//! Dense residual blocks with hand-written forward and backward passes, and
//! the softmax cross-entropy loss.
//!
//! A block is two affine layers with a relu between them:
//! `branch(x) = relu(x·w1ᵀ + b1)·w2ᵀ + b2`. Residual blocks add the identity
//! shortcut, `y = x + branch(x)`; the input and output blocks change width and
//! therefore return the branch alone.

use crate::error::{Error, Result};
use crate::tensor::{randn, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Input,
    Residual,
    Output,
}

impl BlockKind {
    pub fn code(self) -> u8 {
        match self {
            BlockKind::Input => 0,
            BlockKind::Residual => 1,
            BlockKind::Output => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BlockKind::Input),
            1 => Some(BlockKind::Residual),
            2 => Some(BlockKind::Output),
            _ => None,
        }
    }
}

/// Parameters of one block: `w1: hidden×in`, `b1: hidden`, `w2: out×hidden`, `b2: out`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    kind: BlockKind,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Gradients of the loss with respect to each tensor of a [`BlockParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub input: Tensor,
    pub pre_activation: Tensor,
    pub hidden: Tensor,
    pub output: Tensor,
}

fn check_vector(t: &Tensor, len: usize, name: &str) -> Result<()> {
    if t.shape() != [len] {
        return Err(Error::ShapeMismatch(format!(
            "{name}: expected [{len}], got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn matrix_dims(t: &Tensor, name: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::ShapeMismatch(format!(
            "{name}: expected a matrix, got {:?}",
            t.shape()
        ))),
    }
}

impl BlockParams {
    pub fn new(kind: BlockKind, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let (hidden, input) = matrix_dims(&w1, "w1")?;
        let (output, hidden2) = matrix_dims(&w2, "w2")?;
        if hidden != hidden2 {
            return Err(Error::ShapeMismatch(format!(
                "w1 produces {hidden} features but w2 consumes {hidden2}"
            )));
        }
        check_vector(&b1, hidden, "b1")?;
        check_vector(&b2, output, "b2")?;
        if kind == BlockKind::Residual && input != output {
            return Err(Error::ShapeMismatch(format!(
                "residual block maps {input} -> {output}; the shortcut needs equal widths"
            )));
        }
        Ok(Self {
            kind,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// He initialization: weights `~ Normal(0, 2/fan_in)`, biases zero, drawing
    /// `w1` then `w2`. A residual block's `w2` starts at zero instead, so the
    /// block starts as the identity map and stacked branches cannot blow up
    /// the activations of a normalization-free stack.
    pub fn init(
        kind: BlockKind,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w1 = randn(&[hidden, input], (2.0 / input as f64).sqrt(), rng)?;
        let w2 = match kind {
            BlockKind::Residual => Tensor::zeros(&[output, hidden]),
            BlockKind::Input | BlockKind::Output => {
                randn(&[output, hidden], (2.0 / hidden as f64).sqrt(), rng)?
            }
        };
        Self::new(
            kind,
            w1,
            Tensor::zeros(&[hidden]),
            w2,
            Tensor::zeros(&[output]),
        )
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bit_eq(&self, other: &BlockParams) -> bool {
        self.kind == other.kind
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.bit_eq(b))
    }

    /// Same kind and tensor shapes.
    pub fn is_congruent(&self, other: &BlockParams) -> bool {
        self.kind == other.kind
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// `p -= lr * g` for every tensor.
    pub fn apply_gradient(&mut self, grads: &BlockGrads, lr: f64) -> Result<()> {
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            p.sub_scaled_assign(lr, g)?;
        }
        Ok(())
    }
}

impl BlockGrads {
    pub fn zeros_like(p: &BlockParams) -> Self {
        Self {
            w1: Tensor::zeros(p.w1.shape()),
            b1: Tensor::zeros(p.b1.shape()),
            w2: Tensor::zeros(p.w2.shape()),
            b2: Tensor::zeros(p.b2.shape()),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

pub fn block_forward(p: &BlockParams, x: &Tensor) -> Result<(Tensor, BlockCache)> {
    let (_, cols) = matrix_dims(x, "block input")?;
    if cols != p.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "block expects {} input features, got {cols}",
            p.input_dim()
        )));
    }
    let pre_activation = x.matmul(&p.w1.transpose()?)?.add_row_vector(&p.b1)?;
    let hidden = pre_activation.relu();
    let branch = hidden.matmul(&p.w2.transpose()?)?.add_row_vector(&p.b2)?;
    let output = match p.kind {
        BlockKind::Residual => x.add(&branch)?,
        BlockKind::Input | BlockKind::Output => branch,
    };
    let cache = BlockCache {
        input: x.clone(),
        pre_activation,
        hidden,
        output: output.clone(),
    };
    Ok((output, cache))
}

pub fn block_backward(
    p: &BlockParams,
    cache: &BlockCache,
    dy: &Tensor,
) -> Result<(Tensor, BlockGrads)> {
    if dy.shape() != cache.output.shape() {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?} vs block output {:?}",
            dy.shape(),
            cache.output.shape()
        )));
    }
    let batch = cache.input.rows();
    if cache.input.shape() != [batch, p.input_dim()]
        || cache.hidden.shape() != [batch, p.hidden_dim()]
        || cache.pre_activation.shape() != [batch, p.hidden_dim()]
        || cache.output.shape() != [batch, p.output_dim()]
    {
        return Err(Error::ShapeMismatch(
            "cache does not belong to this block".into(),
        ));
    }

    let w2 = dy.matmul_tn(&cache.hidden)?;
    let b2 = dy.sum_rows()?;
    let d_hidden = dy.matmul(&p.w2)?;
    let d_pre = d_hidden.mul(&cache.pre_activation.relu_grad())?;
    let w1 = d_pre.matmul_tn(&cache.input)?;
    let b1 = d_pre.sum_rows()?;
    let d_branch_in = d_pre.matmul(&p.w1)?;
    let dx = match p.kind {
        BlockKind::Residual => dy.add(&d_branch_in)?,
        BlockKind::Input | BlockKind::Output => d_branch_in,
    };
    Ok((dx, BlockGrads { w1, b1, w2, b2 }))
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (batch, classes) = matrix_dims(logits, "logits")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{batch} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: classes,
        });
    }
    Ok((batch, classes))
}

/// Batch-mean softmax cross-entropy and its gradient `(softmax − onehot) / batch`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, classes) = check_labels(logits, labels)?;
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = &mut grad[i * classes..(i + 1) * classes];
        let mut sum = 0.0;
        for (gj, &z) in g.iter_mut().zip(row) {
            *gj = (z - max).exp();
            sum += *gj;
        }
        total += sum.ln() - (row[label] - max);
        for gj in g.iter_mut() {
            *gj /= sum * batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
    }
    Ok((
        total / batch as f64,
        Tensor::new(vec![batch, classes], grad)?,
    ))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Number of rows whose argmax equals the label.
pub fn correct_count(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    check_labels(logits, labels)?;
    Ok(labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(logits.row(i)) == l)
        .count())
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(correct_count(logits, labels)? as f64 / labels.len() as f64)
}
