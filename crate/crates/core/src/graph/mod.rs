//! Decoding genomes into shape-annotated computation graphs.

mod ir;
mod meta;
mod module;

pub use ir::{
    count_params, BuildError, ConvSpec, ConvTransposeSpec, GraphIR, IrBuilder, Node, NodeId, NodeOp, ParamId,
    PoolSpec, Role, Shape,
};
pub use meta::{assemble_discriminator, assemble_generator, DiscriminatorConfig, GeneratorConfig};
pub use module::{
    build_cell, build_module, decode_cell, decode_program, lower_module, lower_op, prev_input_size, render_module, ModuleContext,
    ModuleDag, OpNode, Recipe, Resample,
};
