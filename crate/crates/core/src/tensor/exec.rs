//! Executes a [`GraphIR`]: forward pass with a recorded tape, reverse-mode
//! backward pass, parameter storage and initialization.

use std::collections::BTreeMap;

use rand::Rng;

use super::kernels::{self, BnCache, Conv2dGeom, PoolGeom};
use super::optim::SpectralState;
use super::{gemm, MatRef, NumericFault, Scalar, Tensor};
use crate::graph::{GraphIR, Node, NodeId, NodeOp, ParamId, Shape};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for BN; running averages are updated.
    Train,
    /// Running averages for BN.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Trainable tensors plus BN running statistics and spectral-norm vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub params: BTreeMap<ParamId, Tensor<T>>,
    pub running: BTreeMap<NodeId, RunningStats<T>>,
    pub spectral: BTreeMap<NodeId, SpectralState<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn param(&self, id: ParamId) -> &Tensor<T> {
        &self.params[&id]
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        ParamStore {
            params: self.params.iter().map(|(k, t)| (*k, t.cast())).collect(),
            running: self
                .running
                .iter()
                .map(|(k, r)| (*k, RunningStats { mean: cv(&r.mean), var: cv(&r.var) }))
                .collect(),
            spectral: self
                .spectral
                .iter()
                .map(|(k, s)| (*k, SpectralState { u: cv(&s.u), v: cv(&s.v) }))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }
}

fn weight_matrix_dims(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

/// He-uniform weights (`U(±√(6/fan_in))`), zero biases, BN `γ = 1, β = 0`.
/// Spectrally normalized weights get a power-iteration state that has
/// already taken one step.
pub fn he_uniform_init<T: Scalar>(ir: &GraphIR, rng: &mut impl Rng) -> ParamStore<T> {
    let mut params = BTreeMap::new();
    let mut running = BTreeMap::new();
    let mut spectral = BTreeMap::new();
    for node in &ir.nodes {
        let shapes = node.op.param_shapes();
        let fan_in = match &node.op {
            NodeOp::Conv(c) => c.in_ch / c.groups * c.kernel.0 * c.kernel.1,
            NodeOp::ConvTranspose(c) => (c.in_ch * c.kernel * c.kernel / (c.stride * c.stride)).max(1),
            NodeOp::Linear { in_features, .. } => *in_features,
            NodeOp::BatchNorm { channels } => {
                let c = *channels;
                params.insert(ParamId { node: node.id, slot: 0 }, Tensor::full(&[c], T::one()));
                params.insert(ParamId { node: node.id, slot: 1 }, Tensor::zeros(&[c]));
                running.insert(
                    node.id,
                    RunningStats {
                        mean: vec![T::zero(); c],
                        var: vec![T::one(); c],
                    },
                );
                continue;
            }
            _ => continue,
        };
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<T> = (0..shapes[0].iter().product::<usize>())
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        let w = Tensor::from_vec(&shapes[0], w);
        if node.spectral_norm {
            let (r, c) = weight_matrix_dims(&shapes[0]);
            let mut st = SpectralState::new(r, c, rng);
            st.iterate(w.data());
            spectral.insert(node.id, st);
        }
        params.insert(ParamId { node: node.id, slot: 0 }, w);
        if let Some(bs) = shapes.get(1) {
            params.insert(ParamId { node: node.id, slot: 1 }, Tensor::zeros(bs));
        }
    }
    ParamStore {
        params,
        running,
        spectral,
    }
}

#[derive(Debug, Clone)]
enum Cache<T> {
    None,
    Argmax(Vec<u32>),
    Bn { cache: BnCache<T>, mean: Vec<T>, var: Vec<T> },
    /// `W / σ̂` and `σ̂` for a spectrally normalized weight.
    Spectral { weight: Vec<T>, sigma: T },
}

/// Node values and per-node caches from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    values: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
    mode: Mode,
    batch: usize,
    output: NodeId,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.values[self.output]
    }

    pub fn into_output(mut self) -> Tensor<T> {
        self.values.swap_remove(self.output)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub params: BTreeMap<ParamId, Tensor<T>>,
    /// Indexed like `GraphIR::inputs`; `None` unless requested.
    pub inputs: Vec<Option<Tensor<T>>>,
}

/// What a backward pass should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub inputs: bool,
}

impl Want {
    pub const PARAMS: Want = Want { params: true, inputs: false };
    pub const INPUTS: Want = Want { params: false, inputs: true };
    pub const ALL: Want = Want { params: true, inputs: true };
}

/// A graph with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub ir: GraphIR,
    pub store: ParamStore<T>,
}

fn map_dims(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Map { c, h, w } => (c, h, w),
        Shape::Flat { features } => (features, 1, 1),
    }
}

impl<T: Scalar> Model<T> {
    pub fn new(ir: GraphIR, rng: &mut impl Rng) -> Self {
        let store = he_uniform_init(&ir, rng);
        Self { ir, store }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            ir: self.ir.clone(),
            store: self.store.cast(),
        }
    }

    /// One power iteration for every spectrally normalized weight.
    pub fn power_iterate(&mut self) {
        for (&node, st) in self.store.spectral.iter_mut() {
            st.iterate(self.store.params[&ParamId { node, slot: 0 }].data());
        }
    }

    /// Forward pass; in train mode BN running averages are updated.
    pub fn forward(&mut self, inputs: &[&Tensor<T>], mode: Mode) -> Result<ForwardPass<T>, NumericFault> {
        let pass = self.forward_pure(inputs, mode)?;
        if mode == Mode::Train {
            let m = T::of(BN_MOMENTUM);
            let count = pass.batch as f64;
            for (id, cache) in pass.caches.iter().enumerate() {
                if let Cache::Bn { mean, var, .. } = cache {
                    let n = count * map_dims(self.ir.nodes[id].shape).1 as f64 * map_dims(self.ir.nodes[id].shape).2 as f64;
                    let unbias = if n > 1.0 { T::of(n / (n - 1.0)) } else { T::one() };
                    let rs = self.store.running.get_mut(&id).expect("BN running stats");
                    for c in 0..mean.len() {
                        rs.mean[c] = m * rs.mean[c] + (T::one() - m) * mean[c];
                        rs.var[c] = m * rs.var[c] + (T::one() - m) * var[c] * unbias;
                    }
                }
            }
        }
        Ok(pass)
    }

    /// Eval-mode forward returning only the output.
    pub fn infer(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>, NumericFault> {
        Ok(self.forward_pure(inputs, Mode::Eval)?.into_output())
    }

    /// Forward pass that leaves the model untouched.
    pub fn forward_pure(&self, inputs: &[&Tensor<T>], mode: Mode) -> Result<ForwardPass<T>, NumericFault> {
        assert_eq!(inputs.len(), self.ir.inputs.len(), "wrong number of graph inputs");
        let batch = inputs[0].batch();
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.ir.nodes.len());
        let mut caches = Vec::with_capacity(self.ir.nodes.len());
        for node in &self.ir.nodes {
            let (out, cache) = if let NodeOp::Input { .. } = node.op {
                let k = self.ir.inputs.iter().position(|&i| i == node.id).expect("registered input");
                let t = inputs[k];
                assert_eq!(t.shape(), node.shape.with_batch(batch).as_slice(), "input {} has the wrong shape", node.label);
                ((*t).clone(), Cache::None)
            } else {
                let xs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &values[i]).collect();
                self.eval_node(node, &xs, batch, mode)
            };
            if !out.is_finite() {
                return Err(NumericFault::NonFiniteNode {
                    node: node.id,
                    label: node.label.clone(),
                });
            }
            values.push(out);
            caches.push(cache);
        }
        Ok(ForwardPass {
            values,
            caches,
            mode,
            batch,
            output: self.ir.output,
        })
    }

    fn weight_for(&self, node: &Node) -> (&[T], Cache<T>) {
        let w = self.store.param(ParamId { node: node.id, slot: 0 });
        if node.spectral_norm {
            let st = &self.store.spectral[&node.id];
            let sigma = st.sigma(w.data());
            let weight = w.data().iter().map(|&x| x / sigma).collect();
            (w.data(), Cache::Spectral { weight, sigma })
        } else {
            (w.data(), Cache::None)
        }
    }

    fn bias(&self, node: &Node, has_bias: bool) -> Option<&[T]> {
        has_bias.then(|| self.store.param(ParamId { node: node.id, slot: 1 }).data())
    }

    fn eval_node(&self, node: &Node, xs: &[&Tensor<T>], batch: usize, mode: Mode) -> (Tensor<T>, Cache<T>) {
        let out_shape = node.shape.with_batch(batch);
        let in_shape = || self.ir.nodes[node.inputs[0]].shape;
        let x = xs.first().map(|t| t.data());
        let done = |data: Vec<T>, cache| (Tensor::from_vec(&out_shape, data), cache);
        match &node.op {
            NodeOp::Input { .. } => unreachable!("handled by forward"),
            NodeOp::Conv(spec) => {
                let (_, h, w) = map_dims(in_shape());
                let g = Conv2dGeom::from_spec(spec, h, w);
                let (raw, cache) = self.weight_for(node);
                let wt = match &cache {
                    Cache::Spectral { weight, .. } => weight.as_slice(),
                    _ => raw,
                };
                let y = kernels::conv2d_forward(x.unwrap(), batch, wt, self.bias(node, spec.bias), &g);
                done(y, cache)
            }
            NodeOp::ConvTranspose(spec) => {
                let (_, h, w) = map_dims(in_shape());
                let (raw, cache) = self.weight_for(node);
                let wt = match &cache {
                    Cache::Spectral { weight, .. } => weight.as_slice(),
                    _ => raw,
                };
                let y = kernels::conv_transpose2d_forward(x.unwrap(), batch, wt, self.bias(node, spec.bias), spec, h, w);
                done(y, cache)
            }
            NodeOp::MaxPool(spec) => {
                let (c, h, w) = map_dims(in_shape());
                let (y, arg) = kernels::max_pool_forward(x.unwrap(), batch * c, &PoolGeom::new(spec, h, w));
                done(y, Cache::Argmax(arg))
            }
            NodeOp::AvgPool(spec) => {
                let (c, h, w) = map_dims(in_shape());
                done(kernels::avg_pool_forward(x.unwrap(), batch * c, &PoolGeom::new(spec, h, w)), Cache::None)
            }
            NodeOp::Upsample => {
                let (c, h, w) = map_dims(in_shape());
                done(kernels::upsample2x_forward(x.unwrap(), batch * c, h, w), Cache::None)
            }
            NodeOp::BatchNorm { channels } => {
                let (c, h, w) = map_dims(in_shape());
                debug_assert_eq!(c, *channels);
                let gamma = self.store.param(ParamId { node: node.id, slot: 0 }).data();
                let beta = self.store.param(ParamId { node: node.id, slot: 1 }).data();
                let eps = T::of(BN_EPS);
                match mode {
                    Mode::Train => {
                        let (mean, var) = kernels::batch_stats(x.unwrap(), batch, c, h * w);
                        let (y, cache) = kernels::batch_norm_apply(x.unwrap(), batch, c, h * w, &mean, &var, gamma, beta, eps);
                        done(y, Cache::Bn { cache, mean, var })
                    }
                    Mode::Eval => {
                        let rs = &self.store.running[&node.id];
                        let (y, cache) = kernels::batch_norm_apply(x.unwrap(), batch, c, h * w, &rs.mean, &rs.var, gamma, beta, eps);
                        done(
                            y,
                            Cache::Bn {
                                cache,
                                mean: Vec::new(),
                                var: Vec::new(),
                            },
                        )
                    }
                }
            }
            NodeOp::Relu => done(x.unwrap().iter().map(|&v| v.max(T::zero())).collect(), Cache::None),
            NodeOp::Tanh => done(x.unwrap().iter().map(|&v| v.tanh()).collect(), Cache::None),
            NodeOp::Linear {
                in_features,
                out_features,
            } => {
                let (raw, cache) = self.weight_for(node);
                let wt = match &cache {
                    Cache::Spectral { weight, .. } => weight.as_slice(),
                    _ => raw,
                };
                let bias = self.bias(node, true).unwrap();
                let mut y: Vec<T> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
                gemm(
                    T::one(),
                    MatRef::row_major(x.unwrap(), batch, *in_features),
                    MatRef::row_major(wt, *out_features, *in_features).t(),
                    T::one(),
                    &mut y,
                );
                done(y, cache)
            }
            NodeOp::Reshape { .. } => done(x.unwrap().to_vec(), Cache::None),
            NodeOp::Sum => {
                let mut y = xs[0].data().to_vec();
                for t in &xs[1..] {
                    for (a, &b) in y.iter_mut().zip(t.data()) {
                        *a += b;
                    }
                }
                done(y, Cache::None)
            }
            NodeOp::Concat => {
                let per_out = node.shape.numel();
                let mut y = Vec::with_capacity(batch * per_out);
                for b in 0..batch {
                    for t in xs {
                        let per = t.len() / batch;
                        y.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
                    }
                }
                done(y, Cache::None)
            }
            NodeOp::GlobalSumPool | NodeOp::GlobalAvgPool => {
                let (c, h, w) = map_dims(in_shape());
                let n = h * w;
                let scale = if matches!(node.op, NodeOp::GlobalAvgPool) {
                    T::one() / T::of(n as f64)
                } else {
                    T::one()
                };
                let y = x.unwrap().chunks(n).map(|p| p.iter().copied().sum::<T>() * scale).collect();
                debug_assert_eq!(batch * c, x.unwrap().len() / n);
                done(y, Cache::None)
            }
        }
    }

    /// Reverse-mode gradients of `Σ out_grad · output`.
    pub fn backward(&self, pass: &ForwardPass<T>, out_grad: &Tensor<T>, want: Want) -> Grads<T> {
        assert_eq!(
            out_grad.shape(),
            pass.output().shape(),
            "output gradient shape does not match the output"
        );
        let nodes = &self.ir.nodes;
        let batch = pass.batch;
        // A node's output gradient is needed if anything upstream of it
        // (itself included) wants a gradient.
        let mut rg = vec![false; nodes.len()];
        for n in nodes {
            rg[n.id] = match n.op {
                NodeOp::Input { .. } => want.inputs,
                _ => (want.params && !n.op.param_shapes().is_empty()) || n.inputs.iter().any(|&i| rg[i]),
            };
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[self.ir.output] = Some(out_grad.clone());
        let mut pgrads = BTreeMap::new();

        for node in nodes.iter().rev() {
            if !rg[node.id] {
                continue;
            }
            let Some(dy) = grads[node.id].take() else { continue };
            if let NodeOp::Input { .. } = node.op {
                grads[node.id] = Some(dy);
                continue;
            }
            let need: Vec<bool> = node.inputs.iter().map(|&i| rg[i]).collect();
            let xs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &pass.values[i]).collect();
            let dxs = self.backward_node(node, &xs, &pass.values[node.id], &pass.caches[node.id], &dy, batch, &need, want.params, &mut pgrads);
            for ((&i, dx), &nd) in node.inputs.iter().zip(dxs).zip(&need) {
                if !nd {
                    continue;
                }
                let dx = dx.expect("gradient for a required input");
                match &mut grads[i] {
                    Some(g) => g.add_assign(&dx),
                    slot @ None => *slot = Some(dx),
                }
            }
        }
        let inputs = self
            .ir
            .inputs
            .iter()
            .map(|&i| if want.inputs { grads[i].take() } else { None })
            .collect();
        Grads { params: pgrads, inputs }
    }

    /// Turns a gradient with respect to `W / σ̂` into one with respect to `W`
    /// (u and v held fixed).
    fn spectral_chain(&self, node: &Node, g_eff: Vec<T>, cache: &Cache<T>) -> Vec<T> {
        let Cache::Spectral { weight, sigma } = cache else {
            return g_eff;
        };
        let st = &self.store.spectral[&node.id];
        let coef = g_eff.iter().zip(weight).map(|(&a, &b)| a * b).sum::<T>() / *sigma;
        let cols = st.v.len();
        g_eff
            .iter()
            .enumerate()
            .map(|(k, &g)| g / *sigma - coef * st.u[k / cols] * st.v[k % cols])
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_node(
        &self,
        node: &Node,
        xs: &[&Tensor<T>],
        y: &Tensor<T>,
        cache: &Cache<T>,
        dy: &Tensor<T>,
        batch: usize,
        need: &[bool],
        want_params: bool,
        pgrads: &mut BTreeMap<ParamId, Tensor<T>>,
    ) -> Vec<Option<Tensor<T>>> {
        let in_shape = |k: usize| xs[k].shape().to_vec();
        let mk = |k: usize, data: Vec<T>| Some(Tensor::from_vec(&in_shape(k), data));
        let pid = |slot| ParamId { node: node.id, slot };
        let shapes = node.op.param_shapes();
        let effective = |cache: &Cache<T>| -> Vec<T> {
            match cache {
                Cache::Spectral { weight, .. } => weight.clone(),
                _ => self.store.param(pid(0)).data().to_vec(),
            }
        };
        let d = dy.data();
        match &node.op {
            NodeOp::Input { .. } => unreachable!(),
            NodeOp::Conv(spec) => {
                let (_, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                let g = Conv2dGeom::from_spec(spec, h, w);
                if want_params {
                    let dw = kernels::conv2d_backward_weight(xs[0].data(), d, batch, &g);
                    pgrads.insert(pid(0), Tensor::from_vec(&shapes[0], self.spectral_chain(node, dw, cache)));
                    if spec.bias {
                        pgrads.insert(pid(1), Tensor::from_vec(&shapes[1], kernels::channel_sums(d, batch, g.c_out, g.oh * g.ow)));
                    }
                }
                if need[0] {
                    let wt = effective(cache);
                    return vec![mk(0, kernels::conv2d_backward_data(d, batch, &wt, &g))];
                }
                vec![None]
            }
            NodeOp::ConvTranspose(spec) => {
                let (_, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                if want_params {
                    let dw = kernels::conv_transpose2d_backward_weight(xs[0].data(), d, batch, spec, h, w);
                    pgrads.insert(pid(0), Tensor::from_vec(&shapes[0], self.spectral_chain(node, dw, cache)));
                    if spec.bias {
                        let (_, oh, ow) = map_dims(node.shape);
                        pgrads.insert(pid(1), Tensor::from_vec(&shapes[1], kernels::channel_sums(d, batch, spec.out_ch, oh * ow)));
                    }
                }
                if need[0] {
                    let wt = effective(cache);
                    return vec![mk(0, kernels::conv_transpose2d_backward_data(d, batch, &wt, spec, h, w))];
                }
                vec![None]
            }
            NodeOp::MaxPool(spec) => {
                let (c, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                let Cache::Argmax(arg) = cache else { unreachable!() };
                vec![mk(0, kernels::max_pool_backward(d, arg, batch * c, &PoolGeom::new(spec, h, w)))]
            }
            NodeOp::AvgPool(spec) => {
                let (c, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                vec![mk(0, kernels::avg_pool_backward(d, batch * c, &PoolGeom::new(spec, h, w)))]
            }
            NodeOp::Upsample => {
                let (c, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                vec![mk(0, kernels::upsample2x_backward(d, batch * c, h, w))]
            }
            NodeOp::BatchNorm { .. } => {
                let (c, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                let Cache::Bn { cache, mean, .. } = cache else { unreachable!() };
                let gamma = self.store.param(pid(0)).data();
                if mean.is_empty() {
                    // Eval mode: a fixed affine map per channel.
                    let n = h * w;
                    let dx = d
                        .iter()
                        .enumerate()
                        .map(|(i, &g)| g * gamma[(i / n) % c] * cache.inv_std[(i / n) % c])
                        .collect();
                    if want_params {
                        let mut dg = vec![T::zero(); c];
                        let mut db = vec![T::zero(); c];
                        for (i, &g) in d.iter().enumerate() {
                            dg[(i / n) % c] += g * cache.xhat[i];
                            db[(i / n) % c] += g;
                        }
                        pgrads.insert(pid(0), Tensor::from_vec(&[c], dg));
                        pgrads.insert(pid(1), Tensor::from_vec(&[c], db));
                    }
                    return vec![mk(0, dx)];
                }
                let (dx, dg, db) = kernels::batch_norm_backward(d, batch, c, h * w, gamma, cache);
                if want_params {
                    pgrads.insert(pid(0), Tensor::from_vec(&[c], dg));
                    pgrads.insert(pid(1), Tensor::from_vec(&[c], db));
                }
                vec![mk(0, dx)]
            }
            NodeOp::Relu => {
                let dx = d
                    .iter()
                    .zip(xs[0].data())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                vec![mk(0, dx)]
            }
            NodeOp::Tanh => {
                let dx = d.iter().zip(y.data()).map(|(&g, &t)| g * (T::one() - t * t)).collect();
                vec![mk(0, dx)]
            }
            NodeOp::Linear {
                in_features,
                out_features,
            } => {
                let (fi, fo) = (*in_features, *out_features);
                if want_params {
                    let mut dw = vec![T::zero(); fo * fi];
                    gemm(
                        T::one(),
                        MatRef::row_major(d, batch, fo).t(),
                        MatRef::row_major(xs[0].data(), batch, fi),
                        T::zero(),
                        &mut dw,
                    );
                    pgrads.insert(pid(0), Tensor::from_vec(&shapes[0], self.spectral_chain(node, dw, cache)));
                    pgrads.insert(pid(1), Tensor::from_vec(&[fo], kernels::channel_sums(d, batch, fo, 1)));
                }
                if need[0] {
                    let wt = effective(cache);
                    let mut dx = vec![T::zero(); batch * fi];
                    gemm(
                        T::one(),
                        MatRef::row_major(d, batch, fo),
                        MatRef::row_major(&wt, fo, fi),
                        T::zero(),
                        &mut dx,
                    );
                    return vec![mk(0, dx)];
                }
                vec![None]
            }
            NodeOp::Reshape { .. } => vec![mk(0, d.to_vec())],
            NodeOp::Sum => need.iter().enumerate().map(|(k, &n)| if n { mk(k, d.to_vec()) } else { None }).collect(),
            NodeOp::Concat => {
                let per_out = node.shape.numel();
                let mut offset = 0;
                let mut out = Vec::with_capacity(xs.len());
                for (k, t) in xs.iter().enumerate() {
                    let per = t.len() / batch;
                    if need[k] {
                        let mut dx = Vec::with_capacity(t.len());
                        for b in 0..batch {
                            dx.extend_from_slice(&d[b * per_out + offset..b * per_out + offset + per]);
                        }
                        out.push(mk(k, dx));
                    } else {
                        out.push(None);
                    }
                    offset += per;
                }
                out
            }
            NodeOp::GlobalSumPool | NodeOp::GlobalAvgPool => {
                let (_, h, w) = map_dims(self.ir.nodes[node.inputs[0]].shape);
                let n = h * w;
                let scale = if matches!(node.op, NodeOp::GlobalAvgPool) {
                    T::one() / T::of(n as f64)
                } else {
                    T::one()
                };
                let dx = d.iter().flat_map(|&g| std::iter::repeat_n(g * scale, n)).collect();
                vec![mk(0, dx)]
            }
        }
    }
}
