//! Generator and discriminator scaffolds around the decoded modules.

use serde::{Deserialize, Serialize};

use super::ir::{BuildError, ConvSpec, GraphIR, IrBuilder, NodeOp, Role, Shape};
use super::module::{decode_program, lower_module, Recipe};
use crate::search_space::{Genome, ModuleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub width: usize,
    pub n_up_modules: usize,
    pub z_dim: usize,
    pub base_size: usize,
    pub image_channels: usize,
}

impl GeneratorConfig {
    /// 128 channels, three up-sampling modules, 4×4 base: 32×32 output.
    pub fn full() -> Self {
        Self {
            width: 128,
            n_up_modules: 3,
            z_dim: 128,
            base_size: 4,
            image_channels: 3,
        }
    }

    /// Width 16, two up-sampling modules: 16×16 output.
    pub fn desk() -> Self {
        Self {
            width: 16,
            n_up_modules: 2,
            z_dim: 32,
            base_size: 4,
            image_channels: 3,
        }
    }

    pub fn output_size(&self) -> usize {
        self.base_size << self.n_up_modules
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub width: usize,
    pub n_down_modules: usize,
    pub n_normal_modules: usize,
    pub image_size: usize,
    pub image_channels: usize,
}

impl DiscriminatorConfig {
    pub fn full() -> Self {
        Self {
            width: 128,
            n_down_modules: 2,
            n_normal_modules: 2,
            image_size: 32,
            image_channels: 3,
        }
    }

    pub fn desk() -> Self {
        Self {
            width: 16,
            n_down_modules: 2,
            n_normal_modules: 2,
            image_size: 16,
            image_channels: 3,
        }
    }
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Linear stem, `n_up_modules` copies of the up-sampling module (same
/// topology, separate parameters), BN-ReLU-Conv3×3 to image channels, tanh.
pub fn assemble_generator(genome: &Genome, cfg: &GeneratorConfig) -> Result<GraphIR, BuildError> {
    let mut b = IrBuilder::new(Role::Generator);
    let w = cfg.width;
    let s = cfg.base_size;
    let z = b.input("z", Shape::flat(cfg.z_dim));
    let lin = b.push(
        NodeOp::Linear {
            in_features: cfg.z_dim,
            out_features: s * s * w,
        },
        vec![z],
        "stem/linear",
    )?;
    let stem = b.push(NodeOp::Reshape { c: w, h: s, w: s }, vec![lin], "stem/reshape")?;

    let ops = genome.up.ops();
    let mut prev = stem;
    let mut cur = stem;
    let mut preceded_by = None;
    for i in 0..cfg.n_up_modules {
        let dag = decode_program(&genome.up, preceded_by)?;
        let out = lower_module(&mut b, &dag, &ops, prev, cur, w, Recipe::BnReluConv, &format!("up{}/", i + 1))?;
        prev = cur;
        cur = out;
        preceded_by = Some(ModuleKind::Up);
    }
    let bn = b.push(NodeOp::BatchNorm { channels: w }, vec![cur], "head/bn")?;
    let relu = b.push(NodeOp::Relu, vec![bn], "head/relu")?;
    let conv = b.push(
        NodeOp::Conv(ConvSpec::same(w, cfg.image_channels, 3, 3)),
        vec![relu],
        "head/conv3x3",
    )?;
    let out = b.push(NodeOp::Tanh, vec![conv], "head/tanh")?;
    Ok(b.finish(out))
}

/// Conv3×3 stem, down-sampling modules, normal modules, ReLU, global sum
/// pooling and a linear layer to one logit. Every weight is spectrally normalized.
pub fn assemble_discriminator(genome: &Genome, cfg: &DiscriminatorConfig) -> Result<GraphIR, BuildError> {
    let mut b = IrBuilder::new(Role::Discriminator);
    let w = cfg.width;
    let x = b.input("image", Shape::map(cfg.image_channels, cfg.image_size, cfg.image_size));
    let stem = b.push(NodeOp::Conv(ConvSpec::same(cfg.image_channels, w, 3, 3)), vec![x], "stem/conv3x3")?;

    let mut prev = stem;
    let mut cur = stem;
    let mut preceded_by = None;
    let stages = std::iter::repeat_n(ModuleKind::Down, cfg.n_down_modules)
        .chain(std::iter::repeat_n(ModuleKind::Normal, cfg.n_normal_modules));
    let mut counts = [0usize; 3];
    for kind in stages {
        let program = genome.program(kind);
        let dag = decode_program(program, preceded_by)?;
        counts[kind.segment_index()] += 1;
        let prefix = format!("{}{}/", kind.name(), counts[kind.segment_index()]);
        let out = lower_module(&mut b, &dag, &program.ops(), prev, cur, w, Recipe::ReluConv, &prefix)?;
        prev = cur;
        cur = out;
        preceded_by = Some(kind);
    }
    let relu = b.push(NodeOp::Relu, vec![cur], "head/relu")?;
    let pool = b.push(NodeOp::GlobalSumPool, vec![relu], "head/global_sum_pool")?;
    let logit = b.push(
        NodeOp::Linear {
            in_features: w,
            out_features: 1,
        },
        vec![pool],
        "head/linear",
    )?;
    Ok(b.finish(logit))
}
