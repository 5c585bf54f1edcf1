use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub type NodeId = usize;

/// Per-sample tensor shape; the batch dimension is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum Shape {
    Map { c: usize, h: usize, w: usize },
    Flat { features: usize },
}

impl Shape {
    pub fn map(c: usize, h: usize, w: usize) -> Self {
        Shape::Map { c, h, w }
    }

    pub fn flat(features: usize) -> Self {
        Shape::Flat { features }
    }

    pub fn numel(&self) -> usize {
        match *self {
            Shape::Map { c, h, w } => c * h * w,
            Shape::Flat { features } => features,
        }
    }

    /// Dimensions including a leading batch dimension.
    pub fn with_batch(&self, batch: usize) -> Vec<usize> {
        match *self {
            Shape::Map { c, h, w } => vec![batch, c, h, w],
            Shape::Flat { features } => vec![batch, features],
        }
    }

    pub fn channels(&self) -> usize {
        match *self {
            Shape::Map { c, .. } => c,
            Shape::Flat { features } => features,
        }
    }

    pub fn spatial(&self) -> Option<(usize, usize)> {
        match *self {
            Shape::Map { h, w, .. } => Some((h, w)),
            Shape::Flat { .. } => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Map { c, h, w } => write!(f, "{c}x{h}x{w}"),
            Shape::Flat { features } => write!(f, "{features}"),
        }
    }
}

/// Convolution geometry. Weight layout is `[out, in / groups, kh, kw]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub dilation: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Stride-1 "same" convolution.
    pub fn same(in_ch: usize, out_ch: usize, kh: usize, kw: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: (kh, kw),
            stride: 1,
            padding: (kh / 2, kw / 2),
            dilation: 1,
            groups: 1,
            bias: true,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let eh = self.dilation * (kh - 1) + 1;
        let ew = self.dilation * (kw - 1) + 1;
        let ph = h + 2 * self.padding.0;
        let pw = w + 2 * self.padding.1;
        if ph < eh || pw < ew {
            return None;
        }
        Some(((ph - eh) / self.stride + 1, (pw - ew) / self.stride + 1))
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch / self.groups, self.kernel.0, self.kernel.1]
    }
}

/// Transposed convolution. Weight layout is `[in, out, k, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ConvTransposeSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    pub bias: bool,
}

impl ConvTransposeSpec {
    /// Stride-2 transposed conv that exactly doubles the spatial size.
    pub fn doubling(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 2,
            padding: (kernel - 1) / 2,
            output_padding: 1,
            bias: true,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let f = |x: usize| ((x - 1) * self.stride + self.kernel + self.output_padding).checked_sub(2 * self.padding);
        Some((f(h)?, f(w)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn same(kernel: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }

    /// 2×2 window, stride 2.
    pub fn halving() -> Self {
        Self {
            kernel: 2,
            stride: 2,
            padding: 0,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let f = |x: usize| (x + 2 * self.padding).checked_sub(self.kernel).map(|v| v / self.stride + 1);
        Some((f(h)?, f(w)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeOp {
    Input { name: String },
    Conv(ConvSpec),
    ConvTranspose(ConvTransposeSpec),
    MaxPool(PoolSpec),
    AvgPool(PoolSpec),
    /// Nearest-neighbor 2× interpolation.
    Upsample,
    BatchNorm { channels: usize },
    Relu,
    Tanh,
    Linear { in_features: usize, out_features: usize },
    Reshape { c: usize, h: usize, w: usize },
    Sum,
    Concat,
    GlobalSumPool,
    GlobalAvgPool,
}

impl NodeOp {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NodeOp::Input { .. } => "input",
            NodeOp::Conv(_) => "conv",
            NodeOp::ConvTranspose(_) => "conv_transpose",
            NodeOp::MaxPool(_) => "max_pool",
            NodeOp::AvgPool(_) => "avg_pool",
            NodeOp::Upsample => "upsample",
            NodeOp::BatchNorm { .. } => "batch_norm",
            NodeOp::Relu => "relu",
            NodeOp::Tanh => "tanh",
            NodeOp::Linear { .. } => "linear",
            NodeOp::Reshape { .. } => "reshape",
            NodeOp::Sum => "sum",
            NodeOp::Concat => "concat",
            NodeOp::GlobalSumPool => "global_sum_pool",
            NodeOp::GlobalAvgPool => "global_avg_pool",
        }
    }

    /// Shapes of the trainable tensors this node owns, in slot order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            NodeOp::Conv(c) => {
                let mut v = vec![c.weight_shape().to_vec()];
                if c.bias {
                    v.push(vec![c.out_ch]);
                }
                v
            }
            NodeOp::ConvTranspose(c) => {
                let mut v = vec![vec![c.in_ch, c.out_ch, c.kernel, c.kernel]];
                if c.bias {
                    v.push(vec![c.out_ch]);
                }
                v
            }
            NodeOp::BatchNorm { channels } => vec![vec![*channels], vec![*channels]],
            NodeOp::Linear {
                in_features,
                out_features,
            } => vec![vec![*out_features, *in_features], vec![*out_features]],
            _ => Vec::new(),
        }
    }

    /// Exact parameter count:
    /// conv `kh·kw·(in/groups)·out (+out)`, transposed conv `k·k·in·out (+out)`,
    /// batch norm `2·c` (affine pair), linear `in·out + out`, everything else 0.
    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Identifies one trainable tensor: the owning node and its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ParamId {
    pub node: NodeId,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: NodeId,
    pub op: NodeOp,
    pub inputs: Vec<NodeId>,
    pub shape: Shape,
    /// Where the node came from, e.g. `up1/o3:sep5x5`.
    pub label: String,
    /// Weight is divided by its spectral norm before use.
    pub spectral_norm: bool,
}

impl Node {
    pub fn param_ids(&self) -> Vec<ParamId> {
        (0..self.op.param_shapes().len())
            .map(|slot| ParamId { node: self.id, slot })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
    Module,
    Classifier,
}

/// A shape-annotated DAG. Nodes are stored in topological order: every
/// input id is smaller than the consuming node's id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphIR {
    pub role: Role,
    pub nodes: Vec<Node>,
    pub inputs: Vec<NodeId>,
    pub output: NodeId,
}

impl GraphIR {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn output_shape(&self) -> Shape {
        self.nodes[self.output].shape
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.nodes.iter().flat_map(|n| n.param_ids()).collect()
    }

    pub fn param_shape(&self, id: ParamId) -> Vec<usize> {
        self.nodes[id.node].op.param_shapes()[id.slot].clone()
    }

    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.id == i && n.inputs.iter().all(|&j| j < i))
    }

    /// Node ids from which the output is reachable.
    pub fn live_nodes(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        live[self.output] = true;
        for i in (0..self.nodes.len()).rev() {
            if live[i] {
                for &j in &self.nodes[i].inputs {
                    live[j] = true;
                }
            }
        }
        live
    }

    /// Ignores labels and parameter ownership; compares ops, edges and shapes.
    pub fn same_structure(&self, other: &GraphIR) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.output == other.output
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.op == b.op && a.inputs == b.inputs && a.shape == b.shape)
    }

    /// Machine-readable dump: nodes, edges, shapes and parameter count.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "id": n.id,
                    "label": n.label,
                    "op": n.op,
                    "inputs": n.inputs,
                    "shape": n.shape.to_string(),
                    "params": n.op.param_count(),
                    "spectral_norm": n.spectral_norm,
                })
            })
            .collect();
        serde_json::json!({
            "role": self.role,
            "inputs": self.inputs,
            "output": self.output,
            "param_count": count_params(self),
            "nodes": nodes,
        })
    }
}

/// Exact number of trainable scalars (see [`NodeOp::param_count`]).
pub fn count_params(ir: &GraphIR) -> usize {
    ir.nodes.iter().map(|n| n.op.param_count()).sum()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("shape mismatch at {label}: inputs have shapes [{shapes}]")]
    ShapeMismatch { label: String, shapes: String },
    #[error("{label}: {op} cannot be applied to a {shape} tensor")]
    BadInput { label: String, op: &'static str, shape: Shape },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
}

/// Incremental IR construction with eager shape inference.
#[derive(Debug)]
pub struct IrBuilder {
    role: Role,
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
    spectral_norm: bool,
}

impl IrBuilder {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            nodes: Vec::new(),
            inputs: Vec::new(),
            spectral_norm: role == Role::Discriminator,
        }
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    pub fn input(&mut self, name: &str, shape: Shape) -> NodeId {
        let id = self.push_raw(NodeOp::Input { name: name.into() }, vec![], shape, name.into());
        self.inputs.push(id);
        id
    }

    fn push_raw(&mut self, op: NodeOp, inputs: Vec<NodeId>, shape: Shape, label: String) -> NodeId {
        let id = self.nodes.len();
        let spectral_norm = self.spectral_norm && matches!(op, NodeOp::Conv(_) | NodeOp::ConvTranspose(_) | NodeOp::Linear { .. });
        self.nodes.push(Node {
            id,
            op,
            inputs,
            shape,
            label,
            spectral_norm,
        });
        id
    }

    /// Adds a node, inferring its output shape from its inputs.
    pub fn push(&mut self, op: NodeOp, inputs: Vec<NodeId>, label: impl Into<String>) -> Result<NodeId, BuildError> {
        let label = label.into();
        let shapes: Vec<Shape> = inputs.iter().map(|&i| self.nodes[i].shape).collect();
        let shape = infer_shape(&op, &shapes, &label)?;
        Ok(self.push_raw(op, inputs, shape, label))
    }

    pub fn finish(self, output: NodeId) -> GraphIR {
        GraphIR {
            role: self.role,
            nodes: self.nodes,
            inputs: self.inputs,
            output,
        }
    }
}

fn infer_shape(op: &NodeOp, shapes: &[Shape], label: &str) -> Result<Shape, BuildError> {
    let bad = |shape: Shape| BuildError::BadInput {
        label: label.to_string(),
        op: op.kind_name(),
        shape,
    };
    let map_input = || -> Result<(usize, usize, usize), BuildError> {
        match shapes.first() {
            Some(&Shape::Map { c, h, w }) => Ok((c, h, w)),
            Some(&s) => Err(bad(s)),
            None => Err(bad(Shape::flat(0))),
        }
    };
    let mismatch = || BuildError::ShapeMismatch {
        label: label.to_string(),
        shapes: shapes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
    };
    Ok(match op {
        NodeOp::Input { .. } => unreachable!("inputs are added with IrBuilder::input"),
        NodeOp::Conv(c) => {
            let (ch, h, w) = map_input()?;
            if ch != c.in_ch || c.in_ch % c.groups != 0 || c.out_ch % c.groups != 0 {
                return Err(bad(shapes[0]));
            }
            let (oh, ow) = c.out_size(h, w).ok_or_else(|| bad(shapes[0]))?;
            Shape::map(c.out_ch, oh, ow)
        }
        NodeOp::ConvTranspose(c) => {
            let (ch, h, w) = map_input()?;
            if ch != c.in_ch {
                return Err(bad(shapes[0]));
            }
            let (oh, ow) = c.out_size(h, w).ok_or_else(|| bad(shapes[0]))?;
            Shape::map(c.out_ch, oh, ow)
        }
        NodeOp::MaxPool(p) | NodeOp::AvgPool(p) => {
            let (ch, h, w) = map_input()?;
            let (oh, ow) = p.out_size(h, w).ok_or_else(|| bad(shapes[0]))?;
            Shape::map(ch, oh, ow)
        }
        NodeOp::Upsample => {
            let (ch, h, w) = map_input()?;
            Shape::map(ch, 2 * h, 2 * w)
        }
        NodeOp::BatchNorm { channels } => {
            let (ch, h, w) = map_input()?;
            if ch != *channels {
                return Err(bad(shapes[0]));
            }
            Shape::map(ch, h, w)
        }
        NodeOp::Relu | NodeOp::Tanh => shapes[0],
        NodeOp::Linear {
            in_features,
            out_features,
        } => match shapes[0] {
            Shape::Flat { features } if features == *in_features => Shape::flat(*out_features),
            s => return Err(bad(s)),
        },
        NodeOp::Reshape { c, h, w } => {
            if shapes[0].numel() != c * h * w {
                return Err(bad(shapes[0]));
            }
            Shape::map(*c, *h, *w)
        }
        NodeOp::Sum => {
            if shapes.is_empty() || shapes.iter().any(|s| *s != shapes[0]) {
                return Err(mismatch());
            }
            shapes[0]
        }
        NodeOp::Concat => {
            let mut total = 0;
            let first = shapes.first().and_then(|s| s.spatial()).ok_or_else(mismatch)?;
            for s in shapes {
                if s.spatial() != Some(first) {
                    return Err(mismatch());
                }
                total += s.channels();
            }
            Shape::map(total, first.0, first.1)
        }
        NodeOp::GlobalSumPool | NodeOp::GlobalAvgPool => {
            let (ch, _, _) = map_input()?;
            Shape::flat(ch)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv3x3_param_count() {
        let op = NodeOp::Conv(ConvSpec::same(16, 16, 3, 3));
        assert_eq!(op.param_count(), 2320);
    }

    #[test]
    fn doubling_transposed_conv_sizes() {
        for k in [3, 5, 7] {
            let t = ConvTransposeSpec::doubling(4, 4, k);
            assert_eq!(t.out_size(4, 4), Some((8, 8)));
            assert_eq!(t.out_size(5, 5), Some((10, 10)));
        }
    }

    #[test]
    fn sum_mismatch_names_node() {
        let mut b = IrBuilder::new(Role::Module);
        let x = b.input("x", Shape::map(4, 8, 8));
        let y = b.input("y", Shape::map(4, 4, 4));
        let err = b.push(NodeOp::Sum, vec![x, y], "o2:sum").unwrap_err();
        assert_eq!(
            err,
            BuildError::ShapeMismatch {
                label: "o2:sum".into(),
                shapes: "4x8x8, 4x4x4".into()
            }
        );
    }

    #[test]
    fn concat_adds_channels() {
        let mut b = IrBuilder::new(Role::Module);
        let x = b.input("x", Shape::map(4, 8, 8));
        let y = b.input("y", Shape::map(3, 8, 8));
        let c = b.push(NodeOp::Concat, vec![x, y], "cat").unwrap();
        assert_eq!(b.shape(c), Shape::map(7, 8, 8));
    }
}
