//! Decoding a module program into a cell DAG.
//!
//! Tensor numbering inside a module: `t0` is the module input `x0 = h_i`,
//! `t1 = o0(h_{i-1})` is the skip tensor, and `t{k+1}` is the output of op
//! `o_k`. Adjacency vector `a_{k-1}` selects the inputs of `o_k`; an all-zero
//! vector selects `t0`. Tensors never consumed by a later op are
//! concatenated and projected back to the module width with a 1×1 conv.

use std::fmt::{self, Write as _};

use serde::Serialize;

use super::ir::{BuildError, ConvSpec, ConvTransposeSpec, GraphIR, IrBuilder, NodeId, NodeOp, PoolSpec, Role, Shape};
use crate::search_space::{validate, AdjacencyVector, ConvKind, ModuleKind, ModuleProgram, OpCode, OpSpec};

/// How an op's spatial resolution relates to its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Same,
    Up,
    Down,
}

impl Resample {
    fn tag(self) -> &'static str {
        match self {
            Resample::Same => "same",
            Resample::Up => "up",
            Resample::Down => "down",
        }
    }
}

/// Pre-activation applied in front of every convolutional op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recipe {
    /// Generator: BN - ReLU - Conv.
    BnReluConv,
    /// Discriminator: ReLU - Conv.
    ReluConv,
    Plain,
}

/// One decoded operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpNode {
    pub slot: usize,
    pub opcode: String,
    pub realization: Resample,
    /// Tensor indices summed to form the input. Empty for `o0`, which reads `h_{i-1}`.
    pub inputs: Vec<usize>,
    /// Subset of `inputs` aligned with a parameter-free resample before the sum.
    pub aligned: Vec<usize>,
    /// Input was chosen by the all-zero adjacency rule.
    pub zero_vector: bool,
    pub output: usize,
}

/// Module-level view of a decoded program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleDag {
    pub kind: ModuleKind,
    pub preceded_by: Option<ModuleKind>,
    pub ops: Vec<OpNode>,
    /// Tensors concatenated into the output, ascending.
    pub leaves: Vec<usize>,
    /// Leaves passed through a parameter-free resample before the concat.
    pub aligned_leaves: Vec<usize>,
}

impl fmt::Display for ModuleDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pre = self.preceded_by.map(|k| k.name()).unwrap_or("none");
        writeln!(f, "module {} (preceded_by: {pre})", self.kind)?;
        for op in &self.ops {
            let args = if op.inputs.is_empty() {
                "prev".to_string()
            } else {
                op.inputs
                    .iter()
                    .map(|t| {
                        if op.aligned.contains(t) {
                            format!("{}(t{t})", align_name(self.kind))
                        } else {
                            format!("t{t}")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" + ")
            };
            let note = if op.zero_vector { "  # zero vector -> t0" } else { "" };
            writeln!(
                f,
                "  t{} = {}[{}]({args}){note}",
                op.output,
                op.opcode,
                op.realization.tag()
            )?;
        }
        let leaves = self
            .leaves
            .iter()
            .map(|t| {
                if self.aligned_leaves.contains(t) {
                    format!("{}(t{t})", align_name(self.kind))
                } else {
                    format!("t{t}")
                }
            })
            .collect::<Vec<_>>()
            .join(", ");
        writeln!(f, "  out = conv1x1(concat({leaves}))")
    }
}

fn align_name(kind: ModuleKind) -> &'static str {
    match kind {
        ModuleKind::Up => "nn_up",
        ModuleKind::Down => "avgpool2",
        ModuleKind::Normal => "id",
    }
}

/// Resolution used when realizing `o0` after a module of kind `preceded_by`.
fn first_op_mode(preceded_by: Option<ModuleKind>) -> Resample {
    match preceded_by {
        Some(ModuleKind::Up) => Resample::Up,
        Some(ModuleKind::Down) => Resample::Down,
        _ => Resample::Same,
    }
}

/// Decodes an operation/adjacency sequence of any length `k+1` ops and `k`
/// vectors. [`decode_program`] is the entry point for full 11-action programs.
pub fn decode_cell(
    kind: ModuleKind,
    ops: &[OpCode],
    adjacency: &[AdjacencyVector],
    preceded_by: Option<ModuleKind>,
) -> Result<ModuleDag, BuildError> {
    if ops.is_empty() || adjacency.len() + 1 != ops.len() {
        return Err(BuildError::InvalidProgram(format!(
            "{} operations and {} adjacency vectors do not alternate",
            ops.len(),
            adjacency.len()
        )));
    }
    if let Some(op) = ops.iter().find(|o| o.alphabet != kind || !o.is_in_range()) {
        return Err(BuildError::InvalidProgram(format!("opcode {op:?} does not belong to the {kind} alphabet")));
    }
    let n_tensors = ops.len() + 1;

    // Steps 2-4: inputs of o_k (k >= 1).
    let mut selections: Vec<(Vec<usize>, bool)> = Vec::with_capacity(adjacency.len());
    for (slot, a) in adjacency.iter().enumerate() {
        let available = slot + 2;
        let sel: Vec<usize> = a.selected().collect();
        if let Some(&bad) = sel.iter().find(|&&j| j >= available) {
            return Err(BuildError::InvalidProgram(format!(
                "a{slot} selects tensor {bad}, which does not exist yet"
            )));
        }
        if sel.is_empty() {
            selections.push((vec![0], true));
        } else {
            selections.push((sel, false));
        }
    }

    // Step 5: tensors never used as an input. x0 counts as used when chosen by the zero-vector rule.
    let mut used = vec![false; n_tensors];
    for (sel, _) in &selections {
        for &j in sel {
            used[j] = true;
        }
    }
    let leaves: Vec<usize> = (0..n_tensors).filter(|&t| !used[t]).collect();
    let is_leaf = |t: usize| !used[t];

    let mut nodes = Vec::with_capacity(ops.len());
    let mut aligned_leaves = Vec::new();

    // o0 reads h_{i-1}.
    let mut first_mode = first_op_mode(preceded_by);
    if kind == ModuleKind::Down && is_leaf(1) {
        if first_mode == Resample::Same {
            first_mode = Resample::Down;
        } else {
            aligned_leaves.push(1);
        }
    }
    if kind == ModuleKind::Up && is_leaf(1) {
        aligned_leaves.push(1);
    }
    nodes.push(OpNode {
        slot: 0,
        opcode: ops[0].name(),
        realization: first_mode,
        inputs: vec![],
        aligned: vec![],
        zero_vector: false,
        output: 1,
    });

    // Up modules track which tensors are still at the input resolution.
    let mut low_res = vec![false; n_tensors];
    low_res[0] = true;
    low_res[1] = true;

    for (k, (sel, zero_vector)) in selections.into_iter().enumerate() {
        let slot = k + 1;
        let output = slot + 1;
        let (realization, aligned) = match kind {
            ModuleKind::Up => {
                let low: Vec<usize> = sel.iter().copied().filter(|&t| low_res[t]).collect();
                if low.len() == sel.len() {
                    (Resample::Up, vec![])
                } else {
                    (Resample::Same, low)
                }
            }
            ModuleKind::Down => {
                if is_leaf(output) {
                    (Resample::Down, vec![])
                } else {
                    (Resample::Same, vec![])
                }
            }
            ModuleKind::Normal => (Resample::Same, vec![]),
        };
        nodes.push(OpNode {
            slot,
            opcode: ops[slot].name(),
            realization,
            inputs: sel,
            aligned,
            zero_vector,
            output,
        });
    }

    if kind == ModuleKind::Up && is_leaf(0) {
        aligned_leaves.push(0);
    }
    if kind == ModuleKind::Down && is_leaf(0) {
        aligned_leaves.push(0);
    }
    aligned_leaves.sort_unstable();

    Ok(ModuleDag {
        kind,
        preceded_by,
        ops: nodes,
        leaves,
        aligned_leaves,
    })
}

pub fn decode_program(program: &ModuleProgram, preceded_by: Option<ModuleKind>) -> Result<ModuleDag, BuildError> {
    let violations = validate(program);
    if !violations.is_empty() {
        let joined = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(BuildError::InvalidProgram(joined));
    }
    decode_cell(program.kind, &program.ops(), &program.adjacency(), preceded_by)
}

/// Spatial size of `h_{i-1}` given the module input size and the previous module's kind.
pub fn prev_input_size(size: (usize, usize), preceded_by: Option<ModuleKind>) -> (usize, usize) {
    match preceded_by {
        Some(ModuleKind::Up) => (size.0 / 2, size.1 / 2),
        Some(ModuleKind::Down) => (size.0 * 2, size.1 * 2),
        _ => size,
    }
}

/// Appends the primitive nodes of a decoded module to `b`. Returns the
/// module output node.
pub fn lower_module(
    b: &mut IrBuilder,
    dag: &ModuleDag,
    ops: &[OpCode],
    prev: NodeId,
    cur: NodeId,
    width: usize,
    recipe: Recipe,
    prefix: &str,
) -> Result<NodeId, BuildError> {
    let n_tensors = dag.ops.len() + 1;
    let mut tensors: Vec<Option<NodeId>> = vec![None; n_tensors];
    tensors[0] = Some(cur);
    let align = |b: &mut IrBuilder, node: NodeId, label: String| -> Result<NodeId, BuildError> {
        match dag.kind {
            ModuleKind::Up => b.push(NodeOp::Upsample, vec![node], label),
            ModuleKind::Down => b.push(NodeOp::AvgPool(PoolSpec::halving()), vec![node], label),
            ModuleKind::Normal => Ok(node),
        }
    };
    for op in &dag.ops {
        let tag = format!("{prefix}o{}:{}", op.slot, op.opcode);
        let input = if op.inputs.is_empty() {
            prev
        } else {
            let mut parts = Vec::with_capacity(op.inputs.len());
            for &t in &op.inputs {
                let node = tensors[t].expect("inputs precede consumers");
                if op.aligned.contains(&t) {
                    parts.push(align(b, node, format!("{tag}/align_t{t}"))?);
                } else {
                    parts.push(node);
                }
            }
            if parts.len() == 1 {
                parts[0]
            } else {
                b.push(NodeOp::Sum, parts, format!("{tag}/sum"))?
            }
        };
        let out = lower_op(b, ops[op.slot].spec(), op.realization, input, width, recipe, &tag)?;
        tensors[op.output] = Some(out);
    }
    let mut cat_inputs = Vec::with_capacity(dag.leaves.len());
    for &t in &dag.leaves {
        let node = tensors[t].expect("all tensors built");
        if dag.aligned_leaves.contains(&t) {
            cat_inputs.push(align(b, node, format!("{prefix}align_leaf_t{t}"))?);
        } else {
            cat_inputs.push(node);
        }
    }
    let cat = b.push(NodeOp::Concat, cat_inputs, format!("{prefix}concat"))?;
    let in_ch = b.shape(cat).channels();
    let x = pre_activation(b, cat, recipe, &format!("{prefix}restore"))?;
    b.push(NodeOp::Conv(ConvSpec::same(in_ch, width, 1, 1)), vec![x], format!("{prefix}restore/conv1x1"))
}

fn pre_activation(b: &mut IrBuilder, x: NodeId, recipe: Recipe, tag: &str) -> Result<NodeId, BuildError> {
    match recipe {
        Recipe::Plain => Ok(x),
        Recipe::ReluConv => b.push(NodeOp::Relu, vec![x], format!("{tag}/relu")),
        Recipe::BnReluConv => {
            let channels = b.shape(x).channels();
            let n = b.push(NodeOp::BatchNorm { channels }, vec![x], format!("{tag}/bn"))?;
            b.push(NodeOp::Relu, vec![n], format!("{tag}/relu"))
        }
    }
}

/// The convolution(s) of a conv kind, `width` to `width` channels. Only the
/// last conv of a composite carries a bias; there is no activation between
/// the halves of a factorized or separable pair.
fn push_conv(b: &mut IrBuilder, conv: ConvKind, x: NodeId, width: usize, tag: &str) -> Result<NodeId, BuildError> {
    match conv {
        ConvKind::Conv1x1 => b.push(NodeOp::Conv(ConvSpec::same(width, width, 1, 1)), vec![x], format!("{tag}/conv1x1")),
        ConvKind::Conv3x3 => b.push(NodeOp::Conv(ConvSpec::same(width, width, 3, 3)), vec![x], format!("{tag}/conv3x3")),
        ConvKind::Dilated3x3 => {
            let spec = ConvSpec {
                dilation: 2,
                padding: (2, 2),
                ..ConvSpec::same(width, width, 3, 3)
            };
            b.push(NodeOp::Conv(spec), vec![x], format!("{tag}/dil_conv3x3"))
        }
        ConvKind::Separable(k) => {
            let dw = ConvSpec {
                groups: width,
                bias: false,
                ..ConvSpec::same(width, width, k, k)
            };
            let d = b.push(NodeOp::Conv(dw), vec![x], format!("{tag}/depthwise{k}x{k}"))?;
            b.push(NodeOp::Conv(ConvSpec::same(width, width, 1, 1)), vec![d], format!("{tag}/pointwise"))
        }
        ConvKind::Factorized(k) => {
            let first = ConvSpec {
                bias: false,
                ..ConvSpec::same(width, width, 1, k)
            };
            let r = b.push(NodeOp::Conv(first), vec![x], format!("{tag}/conv1x{k}"))?;
            b.push(NodeOp::Conv(ConvSpec::same(width, width, k, 1)), vec![r], format!("{tag}/conv{k}x1"))
        }
    }
}

/// Lowers one opcode under a realization into primitive nodes.
pub fn lower_op(
    b: &mut IrBuilder,
    spec: OpSpec,
    mode: Resample,
    x: NodeId,
    width: usize,
    recipe: Recipe,
    tag: &str,
) -> Result<NodeId, BuildError> {
    let up = |b: &mut IrBuilder, x: NodeId| b.push(NodeOp::Upsample, vec![x], format!("{tag}/nn_up"));
    let down = |b: &mut IrBuilder, x: NodeId| b.push(NodeOp::AvgPool(PoolSpec::halving()), vec![x], format!("{tag}/avgpool2"));

    // Parameter-free ops: resample around the pooling/identity.
    let pool = |b: &mut IrBuilder, x: NodeId, op: Option<NodeOp>| -> Result<NodeId, BuildError> {
        let x = if mode == Resample::Up { up(b, x)? } else { x };
        let x = match op {
            Some(op) => {
                let name = op.kind_name();
                b.push(op, vec![x], format!("{tag}/{name}"))?
            }
            None => x,
        };
        if mode == Resample::Down {
            down(b, x)
        } else {
            Ok(x)
        }
    };

    match spec {
        OpSpec::Identity => pool(b, x, None),
        OpSpec::MaxPool(k) => pool(b, x, Some(NodeOp::MaxPool(PoolSpec::same(k)))),
        OpSpec::AvgPool(k) => pool(b, x, Some(NodeOp::AvgPool(PoolSpec::same(k)))),
        OpSpec::Transposed(k) => {
            let x = pre_activation(b, x, recipe, tag)?;
            match mode {
                Resample::Up => b.push(
                    NodeOp::ConvTranspose(ConvTransposeSpec::doubling(width, width, k)),
                    vec![x],
                    format!("{tag}/tconv{k}x{k}"),
                ),
                Resample::Same => b.push(NodeOp::Conv(ConvSpec::same(width, width, k, k)), vec![x], format!("{tag}/conv{k}x{k}")),
                Resample::Down => {
                    let c = b.push(NodeOp::Conv(ConvSpec::same(width, width, k, k)), vec![x], format!("{tag}/conv{k}x{k}"))?;
                    down(b, c)
                }
            }
        }
        OpSpec::PoolThenConv(c) if mode == Resample::Down => {
            let x = pre_activation(b, x, recipe, tag)?;
            let p = down(b, x)?;
            push_conv(b, c, p, width, tag)
        }
        OpSpec::Conv(c) | OpSpec::NearestThen(c) | OpSpec::ConvThenPool(c) | OpSpec::PoolThenConv(c) => {
            let x = pre_activation(b, x, recipe, tag)?;
            let x = if mode == Resample::Up { up(b, x)? } else { x };
            let y = push_conv(b, c, x, width, tag)?;
            if mode == Resample::Down {
                down(b, y)
            } else {
                Ok(y)
            }
        }
    }
}

/// Context in which a module is decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleContext {
    pub preceded_by: Option<ModuleKind>,
    pub width: usize,
    /// Spatial size of the module input `x0`.
    pub input_size: (usize, usize),
    pub recipe: Recipe,
}

impl ModuleContext {
    pub fn new(preceded_by: Option<ModuleKind>, width: usize, input_size: (usize, usize)) -> Self {
        Self {
            preceded_by,
            width,
            input_size,
            recipe: Recipe::Plain,
        }
    }
}

/// Decodes a program into a standalone module graph with inputs `prev`
/// (`h_{i-1}`) and `cur` (`h_i`).
pub fn build_module(program: &ModuleProgram, ctx: ModuleContext) -> Result<GraphIR, BuildError> {
    let dag = decode_program(program, ctx.preceded_by)?;
    build_from_dag(&dag, &program.ops(), ctx)
}

/// As [`build_module`] for an arbitrary-length cell sequence.
pub fn build_cell(
    kind: ModuleKind,
    ops: &[OpCode],
    adjacency: &[AdjacencyVector],
    ctx: ModuleContext,
) -> Result<(ModuleDag, GraphIR), BuildError> {
    let dag = decode_cell(kind, ops, adjacency, ctx.preceded_by)?;
    let ir = build_from_dag(&dag, ops, ctx)?;
    Ok((dag, ir))
}

fn build_from_dag(dag: &ModuleDag, ops: &[OpCode], ctx: ModuleContext) -> Result<GraphIR, BuildError> {
    let mut b = IrBuilder::new(Role::Module);
    let (ph, pw) = prev_input_size(ctx.input_size, ctx.preceded_by);
    let prev = b.input("prev", Shape::map(ctx.width, ph, pw));
    let cur = b.input("input", Shape::map(ctx.width, ctx.input_size.0, ctx.input_size.1));
    let out = lower_module(&mut b, dag, ops, prev, cur, ctx.width, ctx.recipe, "")?;
    Ok(b.finish(out))
}

/// Human-readable rendering of a module: the cell view followed by primitive nodes.
pub fn render_module(dag: &ModuleDag, ir: &GraphIR) -> String {
    let mut s = dag.to_string();
    for n in &ir.nodes {
        let inputs = n.inputs.iter().map(|i| format!("%{i}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "    %{} = {}({inputs}) -> {}  [{}]", n.id, n.op.kind_name(), n.shape, n.label);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::random_genome;

    fn normal(name: &str) -> OpCode {
        OpCode::from_name(ModuleKind::Normal, name).unwrap()
    }

    #[test]
    fn reference_cell_topology() {
        let ops = [normal("conv1x1"), normal("maxpool3x3"), normal("sep3x3"), normal("avgpool7x7")];
        let adj = [0b00001, 0b00000, 0b01010].map(AdjacencyVector::from_mask);
        let dag = decode_cell(ModuleKind::Normal, &ops, &adj, None).unwrap();
        assert_eq!(dag.ops[1].inputs, vec![0]);
        assert!(!dag.ops[1].zero_vector);
        assert_eq!(dag.ops[2].inputs, vec![0]);
        assert!(dag.ops[2].zero_vector);
        assert_eq!(dag.ops[3].inputs, vec![1, 3]);
        assert_eq!(dag.leaves, vec![2, 4]);
    }

    #[test]
    fn all_zero_vectors_make_a_fan() {
        let p = ModuleProgram::from_indices(ModuleKind::Normal, [1, 2, 3, 4, 5, 6], [0; 5]);
        let dag = decode_program(&p, None).unwrap();
        for op in &dag.ops[1..] {
            assert_eq!(op.inputs, vec![0]);
            assert!(op.zero_vector);
        }
        assert_eq!(dag.leaves, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn up_module_doubles_resolution() {
        for s in 0..200 {
            let g = random_genome(s);
            for pre in [None, Some(ModuleKind::Up)] {
                let ir = build_module(&g.up, ModuleContext::new(pre, 8, (4, 4))).unwrap();
                assert_eq!(ir.output_shape(), Shape::map(8, 8, 8), "seed {s}");
            }
        }
    }

    #[test]
    fn down_module_halves_resolution() {
        for s in 0..200 {
            let g = random_genome(s);
            for pre in [None, Some(ModuleKind::Down)] {
                let ir = build_module(&g.down, ModuleContext::new(pre, 8, (8, 8))).unwrap();
                assert_eq!(ir.output_shape(), Shape::map(8, 4, 4), "seed {s}");
            }
        }
    }

    #[test]
    fn normal_module_preserves_resolution() {
        for s in 0..200 {
            let g = random_genome(s);
            for pre in [None, Some(ModuleKind::Normal), Some(ModuleKind::Down), Some(ModuleKind::Up)] {
                let ir = build_module(&g.normal, ModuleContext::new(pre, 8, (4, 4))).unwrap();
                assert_eq!(ir.output_shape(), Shape::map(8, 4, 4), "seed {s}");
            }
        }
    }

    #[test]
    fn final_node_restores_width() {
        let g = random_genome(2);
        let ir = build_module(&g.normal, ModuleContext::new(None, 16, (8, 8))).unwrap();
        match &ir.node(ir.output).op {
            NodeOp::Conv(c) => assert_eq!((c.kernel, c.out_ch), ((1, 1), 16)),
            op => panic!("unexpected final op {op:?}"),
        }
    }

    #[test]
    fn mismatched_context_is_a_build_error() {
        // An up module whose h_{i-1} has the same size but is realized as a down op.
        let g = random_genome(4);
        let dag = decode_program(&g.up, Some(ModuleKind::Down)).unwrap();
        let mut b = IrBuilder::new(Role::Module);
        let prev = b.input("prev", Shape::map(8, 4, 4));
        let cur = b.input("input", Shape::map(8, 4, 4));
        let err = lower_module(&mut b, &dag, &g.up.ops(), prev, cur, 8, Recipe::Plain, "").unwrap_err();
        assert!(matches!(err, BuildError::ShapeMismatch { .. } | BuildError::BadInput { .. }), "{err}");
    }

    #[test]
    fn separable_param_count() {
        let mut b = IrBuilder::new(Role::Module);
        let x = b.input("x", Shape::map(16, 8, 8));
        let before = b.shape(x);
        let y = push_conv(&mut b, ConvKind::Separable(3), x, 16, "t").unwrap();
        let ir = b.finish(y);
        assert_eq!(before, ir.output_shape());
        assert_eq!(super::super::ir::count_params(&ir), 3 * 3 * 16 + 16 * 16 + 16);
    }

    #[test]
    fn identity_has_no_params() {
        let mut b = IrBuilder::new(Role::Module);
        let x = b.input("x", Shape::map(16, 8, 8));
        let y = lower_op(&mut b, OpSpec::Identity, Resample::Same, x, 16, Recipe::BnReluConv, "t").unwrap();
        assert_eq!(x, y);
        assert_eq!(super::super::ir::count_params(&b.finish(y)), 0);
    }
}
