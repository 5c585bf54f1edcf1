//! Small frozen classifier supplying `p(y|x)` and penultimate features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::dataset::{SyntheticDataset, NUM_CLASSES};
use crate::graph::{ConvSpec, GraphIR, IrBuilder, NodeId, NodeOp, PoolSpec, Role, Shape};
use crate::tensor::{adam_step, AdamConfig, AdamState, Mode, Model, NumericFault, Tensor, Want};

pub const FEATURE_DIM: usize = 64;
pub const MIN_ACCURACY: f64 = 0.95;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProbeError {
    #[error("probe reached only {accuracy:.3} held-out accuracy (need {MIN_ACCURACY})")]
    TooInaccurate { accuracy: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericFault),
}

#[derive(Debug, Clone)]
pub struct Probe {
    model: Model<f32>,
    feature_node: NodeId,
    pub accuracy: f64,
}

/// conv3×3(16) → ReLU → avgpool2 → conv3×3(32) → ReLU → avgpool2 →
/// conv3×3(64) → ReLU → global average pool (features) → linear(K).
pub fn probe_graph(size: usize) -> (GraphIR, NodeId) {
    let mut b = IrBuilder::new(Role::Classifier);
    let x = b.input("image", Shape::map(3, size, size));
    let mut cur = x;
    let mut ch = 3;
    for (i, out) in [16, 32, FEATURE_DIM].into_iter().enumerate() {
        cur = b.push(NodeOp::Conv(ConvSpec::same(ch, out, 3, 3)), vec![cur], format!("conv{}", i + 1)).unwrap();
        cur = b.push(NodeOp::Relu, vec![cur], format!("relu{}", i + 1)).unwrap();
        if i < 2 {
            cur = b.push(NodeOp::AvgPool(PoolSpec::halving()), vec![cur], format!("pool{}", i + 1)).unwrap();
        }
        ch = out;
    }
    let feat = b.push(NodeOp::GlobalAvgPool, vec![cur], "features").unwrap();
    let logits = b
        .push(
            NodeOp::Linear {
                in_features: FEATURE_DIM,
                out_features: NUM_CLASSES,
            },
            vec![feat],
            "logits",
        )
        .unwrap();
    (b.finish(logits), feat)
}

/// Row-wise softmax of an `n × k` logit matrix.
pub fn softmax_rows(logits: &[f32], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let mx = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
        let e: Vec<f64> = row.iter().map(|&v| (v as f64 - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    out
}

impl Probe {
    /// Trains with softmax cross-entropy and Adam until the held-out
    /// accuracy reaches [`MIN_ACCURACY`] or `max_epochs` pass.
    pub fn train(train: &SyntheticDataset, test: &SyntheticDataset, seed: u64, max_epochs: usize) -> Result<Self, ProbeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ir, feature_node) = probe_graph(train.size);
        let mut model: Model<f32> = Model::new(ir, &mut rng);
        let cfg = AdamConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut state = AdamState::default();
        let batch = 64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut probe = Self {
            model: model.clone(),
            feature_node,
            accuracy: 0.0,
        };
        for epoch in 0..max_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let x = train.gather(chunk);
                let pass = model.forward(&[&x], Mode::Train)?;
                let probs = softmax_rows(pass.output().data(), NUM_CLASSES);
                let n = chunk.len() as f64;
                let grad: Vec<f32> = probs
                    .chunks(NUM_CLASSES)
                    .zip(chunk)
                    .flat_map(|(row, &i)| {
                        let label = train.labels[i];
                        row.iter()
                            .enumerate()
                            .map(move |(c, &p)| ((p - if c == label { 1.0 } else { 0.0 }) / n) as f32)
                    })
                    .collect();
                let g = model.backward(&pass, &Tensor::from_vec(&[chunk.len(), NUM_CLASSES], grad), Want::PARAMS);
                adam_step(&mut model.store.params, &g.params, &mut state, &cfg)?;
            }
            probe.model = model.clone();
            probe.accuracy = probe.accuracy_on(test)?;
            log::debug!("probe epoch {epoch}: held-out accuracy {:.4}", probe.accuracy);
            if probe.accuracy >= MIN_ACCURACY && epoch >= 1 {
                return Ok(probe);
            }
        }
        if probe.accuracy >= MIN_ACCURACY {
            Ok(probe)
        } else {
            Err(ProbeError::TooInaccurate { accuracy: probe.accuracy })
        }
    }

    pub fn accuracy_on(&self, data: &SyntheticDataset) -> Result<f64, NumericFault> {
        let (probs, _) = self.predict(&data.images)?;
        let correct = probs
            .chunks(NUM_CLASSES)
            .zip(&data.labels)
            .filter(|(row, &l)| {
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                best == l
            })
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// Class probabilities (`n × K`) and features (`n × F`), in chunks.
    pub fn predict(&self, images: &Tensor<f32>) -> Result<(Vec<f64>, Vec<f64>), NumericFault> {
        let n = images.batch();
        let mut probs = Vec::with_capacity(n * NUM_CLASSES);
        let mut feats = Vec::with_capacity(n * FEATURE_DIM);
        for start in (0..n).step_by(250) {
            let x = images.slice_batch(start, (start + 250).min(n));
            let pass = self.model.forward_pure(&[&x], Mode::Eval)?;
            probs.extend(softmax_rows(pass.output().data(), NUM_CLASSES));
            feats.extend(pass.value(self.feature_node).data().iter().map(|&v| v as f64));
        }
        Ok((probs, feats))
    }

    /// The frozen network.
    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// SHA-256 over parameters and running statistics in id order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let store = &self.model.store;
        for (id, t) in &store.params {
            h.update((id.node as u64).to_le_bytes());
            h.update((id.slot as u64).to_le_bytes());
            for &v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        for (node, rs) in &store.running {
            h.update((*node as u64).to_le_bytes());
            for &v in rs.mean.iter().chain(&rs.var) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
