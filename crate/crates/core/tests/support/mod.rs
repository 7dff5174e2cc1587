//! Central finite-difference oracle for whole-network gradients. It only
//! touches the public forward pass and the loss, never the backward code.

#![allow(dead_code)]

use pctrain_core::nn::softmax_xent;
use pctrain_core::tensor::randn;
use pctrain_core::{Network, Rng, Tensor};

pub const FD_EPS: f64 = 1e-5;

pub fn loss(net: &Network, x: &Tensor, labels: &[usize]) -> f64 {
    softmax_xent(&net.predict(x).unwrap(), labels).unwrap().0
}

/// `|a − n| / max(1, |a|, |n|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Numeric gradient of the batch loss with respect to every parameter,
/// indexed `[block][tensor][element]`.
pub fn numeric_gradients(net: &Network, x: &Tensor, labels: &[usize]) -> Vec<[Vec<f64>; 4]> {
    let mut out = Vec::with_capacity(net.depth());
    for l in 1..=net.depth() {
        let base = net.get_params(l).unwrap();
        let mut per_tensor: [Vec<f64>; 4] = Default::default();
        for (t, slot) in per_tensor.iter_mut().enumerate() {
            for i in 0..base.tensors()[t].len() {
                let mut probe = net.clone();
                let mut p = base.clone();
                p.tensors_mut()[t].data_mut()[i] += FD_EPS;
                probe.set_params(l, &p).unwrap();
                let plus = loss(&probe, x, labels);
                p.tensors_mut()[t].data_mut()[i] -= 2.0 * FD_EPS;
                probe.set_params(l, &p).unwrap();
                let minus = loss(&probe, x, labels);
                slot.push((plus - minus) / (2.0 * FD_EPS));
            }
        }
        out.push(per_tensor);
    }
    out
}

/// Largest relative error between backprop and the finite-difference oracle.
pub fn max_gradient_error(net: &Network, x: &Tensor, labels: &[usize]) -> f64 {
    let (logits, caches) = net.forward(x).unwrap();
    let (_, dlogits) = softmax_xent(&logits, labels).unwrap();
    let analytic = net.backward(&caches, &dlogits).unwrap();
    let numeric = numeric_gradients(net, x, labels);
    let mut worst: f64 = 0.0;
    for (g, n) in analytic.iter().zip(&numeric) {
        for (t, tensor) in g.tensors().iter().enumerate() {
            for (a, b) in tensor.data().iter().zip(&n[t]) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
    }
    worst
}

/// A network whose every parameter, including the residual `w2` that
/// initialization zeroes, is drawn at random.
pub fn random_network(
    input_dim: usize,
    width: usize,
    classes: usize,
    depth: usize,
    rng: &mut Rng,
) -> Network {
    let mut net = Network::new(input_dim, width, classes, depth, rng).unwrap();
    for l in 1..=depth {
        let mut p = net.get_params(l).unwrap();
        for t in p.tensors_mut() {
            let fresh = randn(t.shape(), 0.5, rng).unwrap();
            t.data_mut().copy_from_slice(fresh.data());
        }
        net.set_params(l, &p).unwrap();
    }
    net
}

pub fn random_batch(
    batch: usize,
    input_dim: usize,
    classes: usize,
    rng: &mut Rng,
) -> (Tensor, Vec<usize>) {
    let x = randn(&[batch, input_dim], 1.0, rng).unwrap();
    let labels = (0..batch)
        .map(|_| (rng.next_u64() % classes as u64) as usize)
        .collect();
    (x, labels)
}
