//! Block stacks: whole-network forward/backward, plain SGD, and 1-based
//! parameter access used by the predictor-corrector copy loops.

use crate::error::{Error, Result};
use crate::nn::{block_backward, block_forward, BlockCache, BlockGrads, BlockKind, BlockParams};
use crate::tensor::{Rng, Tensor};

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC,
};

/// An ordered stack `B_1..B_L`: one input block, `L − 2` residual blocks of
/// uniform width, one output block.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    blocks: Vec<BlockParams>,
    input_dim: usize,
    width: usize,
    num_classes: usize,
}

impl Network {
    /// He-initialized network; draws parameters block by block from the bottom.
    pub fn new(
        input_dim: usize,
        width: usize,
        num_classes: usize,
        depth: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if depth < 3 {
            return Err(Error::BadDepth(depth));
        }
        if input_dim == 0 || width == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument(
                "network dimensions must be positive".into(),
            ));
        }
        let mut blocks = Vec::with_capacity(depth);
        blocks.push(BlockParams::init(
            BlockKind::Input,
            input_dim,
            width,
            width,
            rng,
        )?);
        for _ in 1..depth - 1 {
            blocks.push(BlockParams::init(
                BlockKind::Residual,
                width,
                width,
                width,
                rng,
            )?);
        }
        blocks.push(BlockParams::init(
            BlockKind::Output,
            width,
            width,
            num_classes,
            rng,
        )?);
        Self::from_blocks(blocks)
    }

    /// Assembles a network from explicit blocks, checking the stack invariants.
    pub fn from_blocks(blocks: Vec<BlockParams>) -> Result<Self> {
        let depth = blocks.len();
        if depth < 3 {
            return Err(Error::BadDepth(depth));
        }
        let first = &blocks[0];
        let last = &blocks[depth - 1];
        if first.kind() != BlockKind::Input || last.kind() != BlockKind::Output {
            return Err(Error::InvalidArgument(
                "stack must start with an input block and end with an output block".into(),
            ));
        }
        let input_dim = first.input_dim();
        let width = first.output_dim();
        let num_classes = last.output_dim();
        for (i, b) in blocks.iter().enumerate() {
            let l = i + 1;
            let interior = l != 1 && l != depth;
            if interior && b.kind() != BlockKind::Residual {
                return Err(Error::InvalidArgument(format!(
                    "block {l} is {:?}, interior blocks must be residual",
                    b.kind()
                )));
            }
            let expected_in = if l == 1 { input_dim } else { width };
            let expected_out = if l == depth { num_classes } else { width };
            if b.input_dim() != expected_in || b.output_dim() != expected_out {
                return Err(Error::ShapeMismatch(format!(
                    "block {l} maps {} -> {}, expected {expected_in} -> {expected_out}",
                    b.input_dim(),
                    b.output_dim()
                )));
            }
        }
        Ok(Self {
            blocks,
            input_dim,
            width,
            num_classes,
        })
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn blocks(&self) -> &[BlockParams] {
        &self.blocks
    }

    pub fn kinds(&self) -> Vec<BlockKind> {
        self.blocks.iter().map(BlockParams::kind).collect()
    }

    fn slot(&self, l: usize) -> Result<usize> {
        if l == 0 || l > self.depth() {
            return Err(Error::IndexOutOfRange {
                index: l,
                depth: self.depth(),
            });
        }
        Ok(l - 1)
    }

    /// Borrow block `l` (1-based).
    pub fn block(&self, l: usize) -> Result<&BlockParams> {
        Ok(&self.blocks[self.slot(l)?])
    }

    /// Deep copy of block `l` (1-based).
    pub fn get_params(&self, l: usize) -> Result<BlockParams> {
        self.block(l).cloned()
    }

    /// Replaces block `l` (1-based) with a copy of `p`, which must match its kind and shapes.
    pub fn set_params(&mut self, l: usize, p: &BlockParams) -> Result<()> {
        let i = self.slot(l)?;
        if !self.blocks[i].is_congruent(p) {
            return Err(Error::ShapeMismatch(format!(
                "block {l} cannot take parameters of a different kind or shape"
            )));
        }
        self.blocks[i] = p.clone();
        Ok(())
    }

    pub(crate) fn insert_block(&mut self, l: usize, p: BlockParams) {
        self.blocks.insert(l - 1, p);
    }

    pub fn bit_eq(&self, other: &Network) -> bool {
        self.depth() == other.depth()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.bit_eq(b))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(BlockParams::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| b.tensors())
            .map(Tensor::len)
            .sum()
    }

    /// Applies blocks `1..=L` in order and keeps every block's cache.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<BlockCache>)> {
        if x.shape().len() != 2 || x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} input features, got shape {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let mut caches = Vec::with_capacity(self.depth());
        let mut act = x.clone();
        for b in &self.blocks {
            let (y, cache) = block_forward(b, &act)?;
            caches.push(cache);
            act = y;
        }
        Ok((act, caches))
    }

    /// Forward pass without retaining caches.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagates `dlogits` through the stack, returning one gradient per block in index order.
    pub fn backward(&self, caches: &[BlockCache], dlogits: &Tensor) -> Result<Vec<BlockGrads>> {
        if caches.len() != self.depth() {
            return Err(Error::ShapeMismatch(format!(
                "{} caches for {} blocks",
                caches.len(),
                self.depth()
            )));
        }
        let mut grads = Vec::with_capacity(self.depth());
        let mut upstream = dlogits.clone();
        for (b, cache) in self.blocks.iter().zip(caches).rev() {
            let (dx, g) = block_backward(b, cache, &upstream)?;
            grads.push(g);
            upstream = dx;
        }
        grads.reverse();
        Ok(grads)
    }

    /// Plain SGD step `p ← p − lr·g`. Shapes are validated before anything is written.
    pub fn sgd_update(&mut self, grads: &[BlockGrads], lr: f64) -> Result<()> {
        if grads.len() != self.depth() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradients for {} blocks",
                grads.len(),
                self.depth()
            )));
        }
        for (b, g) in self.blocks.iter().zip(grads) {
            if b.tensors()
                .iter()
                .zip(g.tensors())
                .any(|(p, d)| p.shape() != d.shape())
            {
                return Err(Error::ShapeMismatch(
                    "gradient not congruent with block".into(),
                ));
            }
        }
        for (b, g) in self.blocks.iter_mut().zip(grads) {
            b.apply_gradient(g, lr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_xent;
    use crate::tensor::randn;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn loss(net: &Network, x: &Tensor, labels: &[usize]) -> f64 {
        softmax_xent(&net.predict(x).unwrap(), labels).unwrap().0
    }

    #[test]
    fn minimal_stack_kinds() {
        let net = Network::new(2, 4, 3, 3, &mut Rng::new(0)).unwrap();
        assert_eq!(
            net.kinds(),
            vec![BlockKind::Input, BlockKind::Residual, BlockKind::Output]
        );
    }

    #[test]
    fn depth_two_rejected() {
        assert!(matches!(
            Network::new(2, 4, 3, 2, &mut Rng::new(0)),
            Err(Error::BadDepth(2))
        ));
    }

    #[test]
    fn construction_is_seed_deterministic() {
        let a = Network::new(5, 8, 3, 6, &mut Rng::new(11)).unwrap();
        let b = Network::new(5, 8, 3, 6, &mut Rng::new(11)).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn zero_interior_acts_like_depth_three() {
        let mut rng = Rng::new(4);
        let mut deep = Network::new(3, 5, 2, 6, &mut rng).unwrap();
        for l in 2..=5 {
            let mut p = deep.get_params(l).unwrap();
            for t in p.tensors_mut() {
                t.data_mut().fill(0.0);
            }
            deep.set_params(l, &p).unwrap();
        }
        let shallow = Network::from_blocks(vec![
            deep.get_params(1).unwrap(),
            deep.get_params(2).unwrap(),
            deep.get_params(6).unwrap(),
        ])
        .unwrap();
        let x = randn(&[4, 3], 1.0, &mut rng).unwrap();
        assert!(deep
            .predict(&x)
            .unwrap()
            .bit_eq(&shallow.predict(&x).unwrap()));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::new(3, 4, 2, 3, &mut Rng::new(0)).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[2, 4])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_dlogits_gives_zero_grads() {
        let mut rng = Rng::new(5);
        let net = Network::new(3, 4, 2, 4, &mut rng).unwrap();
        let x = randn(&[3, 3], 1.0, &mut rng).unwrap();
        let (_, caches) = net.forward(&x).unwrap();
        let grads = net.backward(&caches, &Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(grads.len(), 4);
        assert!(grads
            .iter()
            .flat_map(|g| g.tensors())
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stale_caches_rejected() {
        let mut rng = Rng::new(6);
        let net = Network::new(3, 4, 2, 4, &mut rng).unwrap();
        let other = Network::new(3, 6, 2, 4, &mut rng).unwrap();
        let (_, caches) = other.forward(&Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(
            net.backward(&caches, &Tensor::zeros(&[2, 2])),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(net.backward(&caches[..2], &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn zero_lr_leaves_network_unchanged() {
        let mut rng = Rng::new(7);
        let mut net = Network::new(3, 4, 2, 4, &mut rng).unwrap();
        let before = net.clone();
        let x = randn(&[5, 3], 1.0, &mut rng).unwrap();
        let (logits, caches) = net.forward(&x).unwrap();
        let (_, d) = softmax_xent(&logits, &[0, 1, 1, 0, 1]).unwrap();
        let grads = net.backward(&caches, &d).unwrap();
        net.sgd_update(&grads, 0.0).unwrap();
        assert!(net.bit_eq(&before));
    }

    #[test]
    fn sgd_arithmetic() {
        let p = BlockParams::new(
            BlockKind::Residual,
            Tensor::full(&[1, 1], 1.0),
            Tensor::zeros(&[1]),
            Tensor::zeros(&[1, 1]),
            Tensor::zeros(&[1]),
        )
        .unwrap();
        let mut g = BlockGrads::zeros_like(&p);
        g.w1 = Tensor::full(&[1, 1], 2.0);
        let mut q = p.clone();
        q.apply_gradient(&g, 0.1).unwrap();
        assert!((q.w1.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_decreases_batch_loss() {
        let mut rng = Rng::new(2718);
        let mut net = Network::new(5, 8, 3, 4, &mut rng).unwrap();
        let x = randn(&[16, 5], 1.0, &mut rng).unwrap();
        let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
        let before = loss(&net, &x, &labels);
        let (logits, caches) = net.forward(&x).unwrap();
        let (_, d) = softmax_xent(&logits, &labels).unwrap();
        let grads = net.backward(&caches, &d).unwrap();
        net.sgd_update(&grads, 1e-3).unwrap();
        assert!(loss(&net, &x, &labels) < before);
    }

    #[test]
    fn sgd_rejects_misaligned_grads() {
        let mut net = Network::new(3, 4, 2, 4, &mut Rng::new(0)).unwrap();
        let grads: Vec<_> = net
            .blocks()
            .iter()
            .take(3)
            .map(BlockGrads::zeros_like)
            .collect();
        assert!(net.sgd_update(&grads, 0.1).is_err());
    }

    #[test]
    fn params_round_trip_and_no_aliasing() {
        let mut net = Network::new(3, 4, 2, 5, &mut Rng::new(8)).unwrap();
        let before = net.clone();
        let p = net.get_params(3).unwrap();
        net.set_params(3, &p).unwrap();
        assert!(net.bit_eq(&before));

        let mut copy = net.get_params(2).unwrap();
        copy.w1.data_mut()[0] += 1.0;
        assert!(net.bit_eq(&before));

        net.set_params(2, &copy).unwrap();
        copy.w1.data_mut()[0] += 1.0;
        assert!(net.block(2).unwrap().w1.data()[0] != copy.w1.data()[0]);
    }

    #[test]
    fn params_index_errors() {
        let mut net = Network::new(3, 4, 2, 4, &mut Rng::new(8)).unwrap();
        assert!(matches!(
            net.get_params(0),
            Err(Error::IndexOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            net.get_params(5),
            Err(Error::IndexOutOfRange { .. })
        ));
        let input = net.get_params(1).unwrap();
        assert!(matches!(
            net.set_params(2, &input),
            Err(Error::ShapeMismatch(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn forward_is_row_independent(seed: u64, batch in 2usize..6) {
            let mut rng = Rng::new(seed);
            let net = Network::new(3, 5, 4, 4, &mut rng).unwrap();
            let x = randn(&[batch, 3], 1.0, &mut rng).unwrap();
            let perm: Vec<usize> = (0..batch).rev().collect();
            let logits = net.predict(&x).unwrap();
            let permuted = net.predict(&x.select_rows(&perm).unwrap()).unwrap();
            prop_assert!(permuted.bit_eq(&logits.select_rows(&perm).unwrap()));

            let single = net.predict(&x.select_rows(&[0]).unwrap()).unwrap();
            let dup = net.predict(&x.select_rows(&[0, 0]).unwrap()).unwrap();
            prop_assert_eq!(dup.row(0), single.row(0));
            prop_assert_eq!(dup.row(1), single.row(0));
        }
    }
}
