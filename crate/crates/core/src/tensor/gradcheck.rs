//! Finite-difference gradient checking for whole graphs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::exec::{Mode, Model, Want};
use super::Tensor;

pub const FD_STEP: f64 = 1e-3;

/// Worst norm-wise relative error over all parameter and input tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor with the largest error, e.g. `param 3:0` or `input 0`.
    pub worst: String,
    pub checked: usize,
}

/// Distinct, evenly spaced values in `(-1, 1)` in shuffled order. Gaps
/// between values are far larger than the finite-difference step, so max
/// pooling never flips its winner and ReLU never crosses its kink.
pub fn grid_input(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v)
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Compares backward against central differences of `L = Σ r · output`
/// for a fixed random `r`, perturbing every parameter and input scalar.
pub fn check_model(model: &Model<f64>, inputs: &[Tensor<f64>], mode: Mode, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let pass = model.forward_pure(&refs, mode).expect("finite forward");
    let r: Vec<f64> = (0..pass.output().len()).map(|_| rng.sample(StandardNormal)).collect();
    let r = Tensor::from_vec(pass.output().shape(), r);
    let grads = model.backward(&pass, &r, Want::ALL);
    let loss = |m: &Model<f64>, xs: &[Tensor<f64>]| -> f64 {
        let refs: Vec<&Tensor<f64>> = xs.iter().collect();
        m.forward_pure(&refs, mode).expect("finite forward").output().dot(&r)
    };

    let mut worst = (0.0f64, String::from("none"));
    let mut checked = 0;
    let mut m = model.clone();
    for (id, analytic) in &grads.params {
        let n = analytic.len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = m.store.params[id].data()[i];
            m.store.params.get_mut(id).unwrap().data_mut()[i] = orig + FD_STEP;
            let up = loss(&m, inputs);
            m.store.params.get_mut(id).unwrap().data_mut()[i] = orig - FD_STEP;
            let down = loss(&m, inputs);
            m.store.params.get_mut(id).unwrap().data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        checked += n;
        let e = rel_error(analytic.data(), &numeric);
        if e > worst.0 || worst.1 == "none" {
            worst = (e, format!("param {}:{} ({})", id.node, id.slot, model.ir.nodes[id.node].label));
        }
    }
    let mut xs = inputs.to_vec();
    for (k, analytic) in grads.inputs.iter().enumerate() {
        let analytic = analytic.as_ref().expect("input gradient requested");
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_STEP;
            let up = loss(model, &xs);
            xs[k].data_mut()[i] = orig - FD_STEP;
            let down = loss(model, &xs);
            xs[k].data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        checked += analytic.len();
        let e = rel_error(analytic.data(), &numeric);
        if e > worst.0 || worst.1 == "none" {
            worst = (e, format!("input {k}"));
        }
    }
    GradCheck {
        max_rel_error: worst.0,
        worst: worst.1,
        checked,
    }
}

/// One graph of the op-level gradient-check suite.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub model: Model<f64>,
    pub mode: Mode,
}

fn single_op_graph(
    spec: crate::search_space::OpSpec,
    mode: crate::graph::Resample,
    recipe: crate::graph::Recipe,
    width: usize,
) -> crate::graph::GraphIR {
    use crate::graph::{lower_op, IrBuilder, Role, Shape};
    let mut b = IrBuilder::new(Role::Module);
    let x = b.input("x", Shape::map(width, 5, 5));
    let y = lower_op(&mut b, spec, mode, x, width, recipe, "op").expect("op lowers");
    b.finish(y)
}

/// Graphs covering every opcode of every alphabet in all three resampling
/// modes, both pre-activation recipes, and the scaffold-only ops
/// (linear, reshape, tanh, batch norm, global sum pool, spectral norm).
pub fn suite(seed: u64) -> Vec<SuiteCase> {
    use crate::graph::{ConvSpec, IrBuilder, NodeOp, Recipe, Resample, Role, Shape};
    use crate::search_space::{alphabet_of, ModuleKind};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let width = 3;
    for kind in ModuleKind::SEGMENTS {
        for op in alphabet_of(kind) {
            for mode in [Resample::Same, Resample::Up, Resample::Down] {
                let ir = single_op_graph(op.spec(), mode, Recipe::Plain, width);
                cases.push(SuiteCase {
                    name: format!("{}:{}[{:?}]", kind.name(), op.name(), mode),
                    model: Model::new(ir, &mut rng),
                    mode: Mode::Train,
                });
            }
        }
    }
    for recipe in [Recipe::BnReluConv, Recipe::ReluConv] {
        let spec = alphabet_of(ModuleKind::Normal)[2].spec();
        let ir = single_op_graph(spec, Resample::Same, recipe, width);
        cases.push(SuiteCase {
            name: format!("recipe {recipe:?}"),
            model: Model::new(ir, &mut rng),
            mode: Mode::Train,
        });
    }

    // Generator-style head: linear → reshape → BN → conv → tanh.
    let mut b = IrBuilder::new(Role::Generator);
    let z = b.input("z", Shape::flat(4));
    let l = b.push(NodeOp::Linear { in_features: 4, out_features: 2 * 3 * 3 }, vec![z], "linear").unwrap();
    let r = b.push(NodeOp::Reshape { c: 2, h: 3, w: 3 }, vec![l], "reshape").unwrap();
    let n = b.push(NodeOp::BatchNorm { channels: 2 }, vec![r], "bn").unwrap();
    let c = b.push(NodeOp::Conv(ConvSpec::same(2, 3, 3, 3)), vec![n], "conv").unwrap();
    let t = b.push(NodeOp::Tanh, vec![c], "tanh").unwrap();
    cases.push(SuiteCase {
        name: "generator head".into(),
        model: Model::new(b.finish(t), &mut rng),
        mode: Mode::Train,
    });

    // Spectrally normalized discriminator head: conv → sum pool → linear.
    let mut b = IrBuilder::new(Role::Discriminator);
    let x = b.input("x", Shape::map(2, 5, 5));
    let c = b.push(NodeOp::Conv(ConvSpec::same(2, 3, 3, 3)), vec![x], "conv").unwrap();
    let p = b.push(NodeOp::GlobalSumPool, vec![c], "pool").unwrap();
    let l = b.push(NodeOp::Linear { in_features: 3, out_features: 1 }, vec![p], "linear").unwrap();
    cases.push(SuiteCase {
        name: "spectral-norm head".into(),
        model: Model::new(b.finish(l), &mut rng),
        mode: Mode::Train,
    });
    cases
}

/// Runs [`check_model`] on every suite case with grid inputs of batch 2.
pub fn run_suite(seed: u64) -> Vec<(String, GradCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    suite(seed)
        .into_iter()
        .map(|case| {
            let inputs: Vec<Tensor<f64>> = case
                .model
                .ir
                .inputs
                .iter()
                .map(|&i| grid_input(&case.model.ir.nodes[i].shape.with_batch(2), &mut rng))
                .collect();
            let r = check_model(&case.model, &inputs, case.mode, seed);
            (case.name, r)
        })
        .collect()
}
