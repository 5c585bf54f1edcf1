//! Operation alphabets and the genome encoding.
//!
//! A genome is three module programs (up-sampling, down-sampling, normal),
//! each an alternating sequence of 6 operations and 5 adjacency vectors.
//! Genomes serialize to one JSON object per line so they can be appended to
//! logs and read back exactly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of operations in a module program.
pub const OPS_PER_MODULE: usize = 6;
/// Number of adjacency vectors in a module program.
pub const ADJ_PER_MODULE: usize = OPS_PER_MODULE - 1;
/// Total actions in a module program.
pub const ACTIONS_PER_MODULE: usize = OPS_PER_MODULE + ADJ_PER_MODULE;
/// Fixed width of every adjacency vector.
pub const ADJ_WIDTH: usize = 5;

/// The three module kinds. Also names the alphabet a module draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Up,
    Down,
    Normal,
}

impl ModuleKind {
    /// Segment order used by the controller and the genome record.
    pub const SEGMENTS: [ModuleKind; 3] = [ModuleKind::Up, ModuleKind::Down, ModuleKind::Normal];

    pub fn alphabet_len(self) -> usize {
        match self {
            ModuleKind::Normal => 16,
            ModuleKind::Up => 12,
            ModuleKind::Down => 18,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::Up => "up",
            ModuleKind::Down => "down",
            ModuleKind::Normal => "normal",
        }
    }

    pub fn segment_index(self) -> usize {
        match self {
            ModuleKind::Up => 0,
            ModuleKind::Down => 1,
            ModuleKind::Normal => 2,
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The nine convolutional entries of the normal alphabet. These are the
/// building blocks reused by the up- and down-sampling alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvKind {
    Conv1x1,
    Conv3x3,
    Dilated3x3,
    /// Depthwise-separable, kernel size k.
    Separable(usize),
    /// 1×k then k×1.
    Factorized(usize),
}

impl ConvKind {
    pub const ALL: [ConvKind; 9] = [
        ConvKind::Conv1x1,
        ConvKind::Conv3x3,
        ConvKind::Dilated3x3,
        ConvKind::Separable(3),
        ConvKind::Separable(5),
        ConvKind::Separable(7),
        ConvKind::Factorized(3),
        ConvKind::Factorized(5),
        ConvKind::Factorized(7),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvKind::Conv1x1 => "conv1x1",
            ConvKind::Conv3x3 => "conv3x3",
            ConvKind::Dilated3x3 => "dil_conv3x3",
            ConvKind::Separable(3) => "sep3x3",
            ConvKind::Separable(5) => "sep5x5",
            ConvKind::Separable(7) => "sep7x7",
            ConvKind::Factorized(3) => "conv1x3_3x1",
            ConvKind::Factorized(5) => "conv1x5_5x1",
            ConvKind::Factorized(7) => "conv1x7_7x1",
            _ => unreachable!("unsupported conv kernel"),
        }
    }
}

/// Semantic meaning of an opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpSpec {
    Identity,
    Conv(ConvKind),
    MaxPool(usize),
    AvgPool(usize),
    /// Stride-2 transposed convolution with a k×k kernel.
    Transposed(usize),
    /// Nearest-neighbor 2× interpolation, then a convolution.
    NearestThen(ConvKind),
    /// Convolution, then stride-2 average pooling.
    ConvThenPool(ConvKind),
    /// Stride-2 average pooling, then a convolution.
    PoolThenConv(ConvKind),
}

impl OpSpec {
    pub fn name(&self) -> String {
        match *self {
            OpSpec::Identity => "identity".into(),
            OpSpec::Conv(c) => c.name().into(),
            OpSpec::MaxPool(k) => format!("maxpool{k}x{k}"),
            OpSpec::AvgPool(k) => format!("avgpool{k}x{k}"),
            OpSpec::Transposed(k) => format!("tconv{k}x{k}"),
            OpSpec::NearestThen(c) => format!("nn_up+{}", c.name()),
            OpSpec::ConvThenPool(c) => format!("{}+avgpool2", c.name()),
            OpSpec::PoolThenConv(c) => format!("avgpool2+{}", c.name()),
        }
    }

    /// The convolution inside this op, if any.
    pub fn conv(&self) -> Option<ConvKind> {
        match *self {
            OpSpec::Conv(c) | OpSpec::NearestThen(c) | OpSpec::ConvThenPool(c) | OpSpec::PoolThenConv(c) => {
                Some(c)
            }
            _ => None,
        }
    }
}

fn normal_spec(index: usize) -> Option<OpSpec> {
    Some(match index {
        0 => OpSpec::Identity,
        1..=9 => OpSpec::Conv(ConvKind::ALL[index - 1]),
        10 => OpSpec::MaxPool(3),
        11 => OpSpec::MaxPool(5),
        12 => OpSpec::MaxPool(7),
        13 => OpSpec::AvgPool(3),
        14 => OpSpec::AvgPool(5),
        15 => OpSpec::AvgPool(7),
        _ => return None,
    })
}

fn up_spec(index: usize) -> Option<OpSpec> {
    Some(match index {
        0 => OpSpec::Transposed(3),
        1 => OpSpec::Transposed(5),
        2 => OpSpec::Transposed(7),
        3..=11 => OpSpec::NearestThen(ConvKind::ALL[index - 3]),
        _ => return None,
    })
}

fn down_spec(index: usize) -> Option<OpSpec> {
    Some(match index {
        0..=8 => OpSpec::ConvThenPool(ConvKind::ALL[index]),
        9..=17 => OpSpec::PoolThenConv(ConvKind::ALL[index - 9]),
        _ => return None,
    })
}

/// An operation identifier within one of the three alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpCode {
    pub alphabet: ModuleKind,
    pub index: u8,
}

impl OpCode {
    pub const fn new(alphabet: ModuleKind, index: u8) -> Self {
        Self { alphabet, index }
    }

    pub fn is_in_range(&self) -> bool {
        (self.index as usize) < self.alphabet.alphabet_len()
    }

    /// Panics if the index is out of range for its alphabet.
    pub fn spec(&self) -> OpSpec {
        self.try_spec()
            .unwrap_or_else(|| panic!("opcode index {} out of range for {} alphabet", self.index, self.alphabet))
    }

    pub fn try_spec(&self) -> Option<OpSpec> {
        let i = self.index as usize;
        match self.alphabet {
            ModuleKind::Normal => normal_spec(i),
            ModuleKind::Up => up_spec(i),
            ModuleKind::Down => down_spec(i),
        }
    }

    pub fn name(&self) -> String {
        self.try_spec()
            .map(|s| s.name())
            .unwrap_or_else(|| format!("<{}:{}>", self.alphabet, self.index))
    }

    pub fn from_name(alphabet: ModuleKind, name: &str) -> Option<Self> {
        alphabet_of(alphabet).into_iter().find(|op| op.name() == name)
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The fixed, ordered alphabet for a module kind.
pub fn alphabet_of(kind: ModuleKind) -> Vec<OpCode> {
    (0..kind.alphabet_len()).map(|i| OpCode::new(kind, i as u8)).collect()
}

/// Bit vector selecting existing tensors of a module. Bit `j` refers to
/// tensor `j`: 0 is the module input, 1 is the skip tensor produced by the
/// first op, 2.. are outputs of later ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AdjacencyVector(u8);

impl AdjacencyVector {
    pub const ZERO: AdjacencyVector = AdjacencyVector(0);

    pub fn from_bits(bits: [bool; ADJ_WIDTH]) -> Self {
        let mut v = 0u8;
        for (j, &b) in bits.iter().enumerate() {
            if b {
                v |= 1 << j;
            }
        }
        AdjacencyVector(v)
    }

    pub fn from_mask(mask: u8) -> Self {
        AdjacencyVector(mask & ((1 << ADJ_WIDTH) - 1))
    }

    pub fn mask(&self) -> u8 {
        self.0
    }

    pub fn get(&self, j: usize) -> bool {
        j < ADJ_WIDTH && self.0 & (1 << j) != 0
    }

    pub fn bits(&self) -> [bool; ADJ_WIDTH] {
        std::array::from_fn(|j| self.get(j))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    pub fn count(&self) -> usize {
        self.0.count_ones() as usize
    }

    /// Indices of set bits, ascending.
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        (0..ADJ_WIDTH).filter(move |&j| self.get(j))
    }
}

/// Number of tensors that exist when adjacency vector `slot` is sampled
/// (the vector selects inputs for op `slot + 1`).
pub fn tensors_available(slot: usize) -> usize {
    slot + 2
}

/// Whether bit `bit` of adjacency vector `slot` may be set.
pub fn bit_allowed(slot: usize, bit: usize) -> bool {
    bit < ADJ_WIDTH && bit < tensors_available(slot)
}

/// One controller action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Op(OpCode),
    Adj(AdjacencyVector),
}

/// The action sequence programming one module.
///
/// Construction does not validate; run [`validate`] (or use
/// [`ModuleProgram::from_parts`]) before decoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModuleProgram {
    pub kind: ModuleKind,
    pub actions: Vec<Action>,
}

impl ModuleProgram {
    pub fn new(kind: ModuleKind, actions: Vec<Action>) -> Self {
        Self { kind, actions }
    }

    /// Interleaves operations and adjacency vectors, `o0 a0 o1 ... a4 o5`.
    pub fn from_parts(
        kind: ModuleKind,
        ops: [OpCode; OPS_PER_MODULE],
        adjacency: [AdjacencyVector; ADJ_PER_MODULE],
    ) -> Self {
        let mut actions = Vec::with_capacity(ACTIONS_PER_MODULE);
        for i in 0..OPS_PER_MODULE {
            actions.push(Action::Op(ops[i]));
            if i < ADJ_PER_MODULE {
                actions.push(Action::Adj(adjacency[i]));
            }
        }
        Self { kind, actions }
    }

    /// Convenience constructor from alphabet indices and bit masks.
    pub fn from_indices(kind: ModuleKind, ops: [u8; OPS_PER_MODULE], adjacency: [u8; ADJ_PER_MODULE]) -> Self {
        Self::from_parts(
            kind,
            ops.map(|i| OpCode::new(kind, i)),
            adjacency.map(AdjacencyVector::from_mask),
        )
    }

    pub fn ops(&self) -> Vec<OpCode> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Op(o) => Some(*o),
                Action::Adj(_) => None,
            })
            .collect()
    }

    pub fn adjacency(&self) -> Vec<AdjacencyVector> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Adj(v) => Some(*v),
                Action::Op(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Length { expected: usize, found: usize },
    /// Position holds an adjacency vector where an operation belongs, or vice versa.
    Alternation { position: usize, expected_op: bool },
    OpcodeRange { position: usize, alphabet: ModuleKind, index: u8 },
    WrongAlphabet { position: usize, expected: ModuleKind, found: ModuleKind },
    ForwardReference { position: usize, slot: usize, bit: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, found } => write!(f, "length: expected {expected} actions, found {found}"),
            Violation::Alternation { position, expected_op } => write!(
                f,
                "alternation: position {position} should be {}",
                if *expected_op { "an operation" } else { "an adjacency vector" }
            ),
            Violation::OpcodeRange { position, alphabet, index } => {
                write!(f, "opcode range: index {index} at position {position} is outside the {alphabet} alphabet")
            }
            Violation::WrongAlphabet { position, expected, found } => {
                write!(f, "alphabet: position {position} uses a {found} opcode in a {expected} module")
            }
            Violation::ForwardReference { position, slot, bit } => write!(
                f,
                "forward reference: adjacency vector a{slot} (position {position}) selects tensor {bit}, which does not exist yet"
            ),
        }
    }
}

/// Returns every violation in `program`; an empty list means the program is well formed.
pub fn validate(program: &ModuleProgram) -> Vec<Violation> {
    let mut out = Vec::new();
    if program.actions.len() != ACTIONS_PER_MODULE {
        out.push(Violation::Length {
            expected: ACTIONS_PER_MODULE,
            found: program.actions.len(),
        });
    }
    for (position, action) in program.actions.iter().enumerate() {
        let expected_op = position % 2 == 0;
        match (action, expected_op) {
            (Action::Op(op), true) => {
                if op.alphabet != program.kind {
                    out.push(Violation::WrongAlphabet {
                        position,
                        expected: program.kind,
                        found: op.alphabet,
                    });
                } else if !op.is_in_range() {
                    out.push(Violation::OpcodeRange {
                        position,
                        alphabet: op.alphabet,
                        index: op.index,
                    });
                }
            }
            (Action::Adj(v), false) => {
                let slot = position / 2;
                for bit in v.selected() {
                    if !bit_allowed(slot, bit) {
                        out.push(Violation::ForwardReference { position, slot, bit });
                    }
                }
            }
            _ => out.push(Violation::Alternation { position, expected_op }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Sampled,
    Random,
    Manual,
}

/// One candidate architecture: programs for the generator's up-sampling
/// module and the discriminator's down-sampling and normal modules.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub up: ModuleProgram,
    pub down: ModuleProgram,
    pub normal: ModuleProgram,
    pub provenance: Provenance,
    id: String,
}

impl Genome {
    pub fn new(up: ModuleProgram, down: ModuleProgram, normal: ModuleProgram, provenance: Provenance) -> Self {
        let id = genome_id(&up, &down, &normal);
        Self {
            up,
            down,
            normal,
            provenance,
            id,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn program(&self, kind: ModuleKind) -> &ModuleProgram {
        match kind {
            ModuleKind::Up => &self.up,
            ModuleKind::Down => &self.down,
            ModuleKind::Normal => &self.normal,
        }
    }

    pub fn programs(&self) -> [&ModuleProgram; 3] {
        [&self.up, &self.down, &self.normal]
    }

    /// Violations of all three programs, each tagged with its segment.
    pub fn validate(&self) -> Vec<(ModuleKind, Violation)> {
        let mut out = Vec::new();
        for (kind, p) in ModuleKind::SEGMENTS.iter().zip(self.programs()) {
            if p.kind != *kind {
                out.push((
                    *kind,
                    Violation::WrongAlphabet {
                        position: 0,
                        expected: *kind,
                        found: p.kind,
                    },
                ));
            }
            out.extend(validate(p).into_iter().map(|v| (*kind, v)));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Order-sensitive hash of the three action sequences.
fn genome_id(up: &ModuleProgram, down: &ModuleProgram, normal: &ModuleProgram) -> String {
    let mut hasher = Sha256::new();
    for p in [up, down, normal] {
        hasher.update([0xF0 | p.kind.segment_index() as u8, p.actions.len() as u8]);
        for a in &p.actions {
            match a {
                Action::Op(op) => hasher.update([0x01, op.alphabet.segment_index() as u8, op.index]),
                Action::Adj(v) => hasher.update([0x02, v.mask()]),
            }
        }
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Samples one program: uniform opcode per slot, fair-coin adjacency bits
/// with forward references masked off.
pub fn random_program<R: Rng + ?Sized>(kind: ModuleKind, rng: &mut R) -> ModuleProgram {
    let n = kind.alphabet_len();
    let mut actions = Vec::with_capacity(ACTIONS_PER_MODULE);
    for i in 0..OPS_PER_MODULE {
        actions.push(Action::Op(OpCode::new(kind, rng.random_range(0..n) as u8)));
        if i < ADJ_PER_MODULE {
            let mut bits = [false; ADJ_WIDTH];
            for (j, b) in bits.iter_mut().enumerate() {
                let coin = rng.random_bool(0.5);
                *b = coin && bit_allowed(i, j);
            }
            actions.push(Action::Adj(AdjacencyVector::from_bits(bits)));
        }
    }
    ModuleProgram::new(kind, actions)
}

pub fn random_genome_with<R: Rng + ?Sized>(rng: &mut R) -> Genome {
    let up = random_program(ModuleKind::Up, rng);
    let down = random_program(ModuleKind::Down, rng);
    let normal = random_program(ModuleKind::Normal, rng);
    Genome::new(up, down, normal, Provenance::Random)
}

/// Deterministic random genome for the random-search baseline.
pub fn random_genome(seed: u64) -> Genome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_genome_with(&mut rng)
}

// ---------------------------------------------------------------------------
// Record format
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed record at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{segment} program, action {position}: unknown {alphabet} operation {name:?}")]
    UnknownOp {
        segment: ModuleKind,
        position: usize,
        alphabet: ModuleKind,
        name: String,
    },
    #[error("{segment} program, action {position}: opcode index {index} out of range for the {alphabet} alphabet (size {size})")]
    Range {
        segment: ModuleKind,
        position: usize,
        alphabet: ModuleKind,
        index: u64,
        size: usize,
    },
    #[error("{segment} program, action {position}: {message}")]
    Item {
        segment: ModuleKind,
        position: usize,
        message: String,
    },
    #[error("invalid {segment} program: {violations}")]
    Invalid { segment: ModuleKind, violations: String },
    #[error("record id {found} does not match computed id {expected}")]
    IdMismatch { expected: String, found: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeRecord {
    id: String,
    up: Vec<serde_json::Value>,
    down: Vec<serde_json::Value>,
    normal: Vec<serde_json::Value>,
    provenance: Provenance,
}

fn program_items(p: &ModuleProgram) -> Vec<serde_json::Value> {
    p.actions
        .iter()
        .map(|a| match a {
            Action::Op(op) => serde_json::Value::String(op.name()),
            Action::Adj(v) => serde_json::Value::Array(
                v.bits().iter().map(|&b| serde_json::Value::from(b as u8)).collect(),
            ),
        })
        .collect()
}

fn parse_program(segment: ModuleKind, items: &[serde_json::Value]) -> Result<ModuleProgram, RecordError> {
    let mut actions = Vec::with_capacity(items.len());
    for (position, item) in items.iter().enumerate() {
        let action = match item {
            serde_json::Value::String(name) => Action::Op(OpCode::from_name(segment, name).ok_or_else(|| {
                RecordError::UnknownOp {
                    segment,
                    position,
                    alphabet: segment,
                    name: name.clone(),
                }
            })?),
            serde_json::Value::Number(n) => {
                let index = n.as_u64().ok_or_else(|| RecordError::Item {
                    segment,
                    position,
                    message: format!("opcode index {n} is not a non-negative integer"),
                })?;
                let size = segment.alphabet_len();
                if index >= size as u64 {
                    return Err(RecordError::Range {
                        segment,
                        position,
                        alphabet: segment,
                        index,
                        size,
                    });
                }
                Action::Op(OpCode::new(segment, index as u8))
            }
            serde_json::Value::Array(bits) => {
                if bits.len() != ADJ_WIDTH {
                    return Err(RecordError::Item {
                        segment,
                        position,
                        message: format!("adjacency vector has {} bits, expected {ADJ_WIDTH}", bits.len()),
                    });
                }
                let mut out = [false; ADJ_WIDTH];
                for (j, b) in bits.iter().enumerate() {
                    out[j] = match b.as_u64() {
                        Some(0) => false,
                        Some(1) => true,
                        _ => {
                            return Err(RecordError::Item {
                                segment,
                                position,
                                message: format!("adjacency bit {j} must be 0 or 1, found {b}"),
                            })
                        }
                    };
                }
                Action::Adj(AdjacencyVector::from_bits(out))
            }
            other => {
                return Err(RecordError::Item {
                    segment,
                    position,
                    message: format!("expected an operation name or a bit array, found {other}"),
                })
            }
        };
        actions.push(action);
    }
    let program = ModuleProgram::new(segment, actions);
    let violations = validate(&program);
    if !violations.is_empty() {
        let joined = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(RecordError::Invalid {
            segment,
            violations: joined,
        });
    }
    Ok(program)
}

impl Genome {
    /// One-line JSON record.
    pub fn to_record(&self) -> String {
        let rec = GenomeRecord {
            id: self.id.clone(),
            up: program_items(&self.up),
            down: program_items(&self.down),
            normal: program_items(&self.normal),
            provenance: self.provenance,
        };
        serde_json::to_string(&rec).expect("genome record serializes")
    }

    pub fn from_record(text: &str) -> Result<Self, RecordError> {
        let rec: GenomeRecord = serde_json::from_str(text.trim()).map_err(|e| RecordError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let up = parse_program(ModuleKind::Up, &rec.up)?;
        let down = parse_program(ModuleKind::Down, &rec.down)?;
        let normal = parse_program(ModuleKind::Normal, &rec.normal)?;
        let genome = Genome::new(up, down, normal, rec.provenance);
        if genome.id != rec.id {
            return Err(RecordError::IdMismatch {
                expected: genome.id,
                found: rec.id,
            });
        }
        Ok(genome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_sizes_and_order() {
        let normal = alphabet_of(ModuleKind::Normal);
        assert_eq!(normal.len(), 16);
        assert_eq!(normal[0].spec(), OpSpec::Identity);
        assert_eq!(alphabet_of(ModuleKind::Up).len(), 12);
        assert_eq!(alphabet_of(ModuleKind::Down).len(), 18);
        assert_eq!(alphabet_of(ModuleKind::Normal), normal);
    }

    #[test]
    fn frozen_op_names() {
        let names = |k| alphabet_of(k).iter().map(|o| o.name()).collect::<Vec<_>>();
        assert_eq!(
            names(ModuleKind::Normal),
            [
                "identity", "conv1x1", "conv3x3", "dil_conv3x3", "sep3x3", "sep5x5", "sep7x7", "conv1x3_3x1",
                "conv1x5_5x1", "conv1x7_7x1", "maxpool3x3", "maxpool5x5", "maxpool7x7", "avgpool3x3", "avgpool5x5",
                "avgpool7x7"
            ]
        );
        assert_eq!(
            names(ModuleKind::Up),
            [
                "tconv3x3",
                "tconv5x5",
                "tconv7x7",
                "nn_up+conv1x1",
                "nn_up+conv3x3",
                "nn_up+dil_conv3x3",
                "nn_up+sep3x3",
                "nn_up+sep5x5",
                "nn_up+sep7x7",
                "nn_up+conv1x3_3x1",
                "nn_up+conv1x5_5x1",
                "nn_up+conv1x7_7x1"
            ]
        );
        let down = names(ModuleKind::Down);
        assert_eq!(down[0], "conv1x1+avgpool2");
        assert_eq!(down[8], "conv1x7_7x1+avgpool2");
        assert_eq!(down[9], "avgpool2+conv1x1");
        assert_eq!(down[15], "avgpool2+conv1x3_3x1");
        assert_eq!(down[17], "avgpool2+conv1x7_7x1");
    }

    #[test]
    fn well_formed_program_is_ok() {
        let p = ModuleProgram::from_indices(ModuleKind::Normal, [1, 10, 4, 15, 0, 2], [0b1, 0, 0b1010, 0b11111, 0b10000]);
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn short_program_reports_length() {
        let mut p = ModuleProgram::from_indices(ModuleKind::Normal, [0; 6], [0; 5]);
        p.actions.truncate(9);
        let v = validate(&p);
        assert!(v.iter().any(|v| matches!(v, Violation::Length { found: 9, .. })));
        assert!(v[0].to_string().starts_with("length"));
    }

    #[test]
    fn forward_reference_detected() {
        let p = ModuleProgram::from_indices(ModuleKind::Normal, [0; 6], [0b01000, 0, 0, 0, 0]);
        let v = validate(&p);
        assert_eq!(v, vec![Violation::ForwardReference { position: 1, slot: 0, bit: 3 }]);
        assert!(v[0].to_string().starts_with("forward reference"));
    }

    #[test]
    fn reports_all_violations() {
        let mut p = ModuleProgram::from_indices(ModuleKind::Up, [0, 1, 2, 3, 4, 12], [0b100, 0, 0, 0, 0]);
        p.actions.swap(2, 3);
        let v = validate(&p);
        assert!(v.len() >= 4, "{v:?}");
        assert!(v.iter().any(|v| matches!(v, Violation::OpcodeRange { index: 12, .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::ForwardReference { bit: 2, .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::Alternation { .. })));
    }

    #[test]
    fn random_genome_is_deterministic_and_valid() {
        assert_eq!(random_genome(7), random_genome(7));
        assert_ne!(random_genome(7).id(), random_genome(8).id());
        for s in 0..1000 {
            let g = random_genome(s);
            assert!(g.is_valid(), "{:?}", g.validate());
        }
    }

    #[test]
    fn random_normal_ops_are_uniform() {
        let mut counts = [0usize; 16];
        for s in 0..1000 {
            for op in random_genome(s).normal.ops() {
                counts[op.index as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let expected = total as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square 0.99 quantile with 15 degrees of freedom
        assert!(chi2 < 30.578, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn record_round_trip() {
        for s in 0..50 {
            let g = random_genome(s);
            let line = g.to_record();
            assert!(!line.contains('\n'));
            assert_eq!(Genome::from_record(&line).unwrap(), g);
        }
    }

    #[test]
    fn truncated_record_is_syntax_error() {
        let line = random_genome(3).to_record();
        let err = Genome::from_record(&line[..line.len() / 2]).unwrap_err();
        assert!(matches!(err, RecordError::Syntax { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index_names_alphabet() {
        let line = random_genome(3).to_record();
        let mut v: serde_json::Value = serde_json::from_str(&line).unwrap();
        v["up"][4] = serde_json::json!(12);
        let err = Genome::from_record(&v.to_string()).unwrap_err();
        match &err {
            RecordError::Range {
                alphabet,
                index,
                position,
                ..
            } => {
                assert_eq!((*alphabet, *index, *position), (ModuleKind::Up, 12, 4));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(err.to_string().contains("up alphabet"));
    }

    #[test]
    fn numeric_index_in_range_accepted() {
        let g = random_genome(5);
        let mut v: serde_json::Value = serde_json::from_str(&g.to_record()).unwrap();
        let name = g.up.ops()[0].index;
        v["up"][0] = serde_json::json!(name);
        assert_eq!(Genome::from_record(&v.to_string()).unwrap(), g);
    }

    #[test]
    fn tampered_id_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&random_genome(1).to_record()).unwrap();
        v["id"] = serde_json::json!("0000000000000000");
        assert!(matches!(
            Genome::from_record(&v.to_string()),
            Err(RecordError::IdMismatch { .. })
        ));
    }

    #[test]
    fn id_depends_only_on_actions() {
        let g = random_genome(11);
        let manual = Genome::new(g.up.clone(), g.down.clone(), g.normal.clone(), Provenance::Manual);
        assert_eq!(manual.id(), g.id());
    }
}
