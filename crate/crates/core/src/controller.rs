//! Two-layer LSTM policy over genomes.
//!
//! One unrolled sequence of 33 actions covers the up, down and normal
//! segments in that order. Within a segment the controller alternates
//! between an operation (clipped-logit softmax over the segment alphabet)
//! and an adjacency vector (independent clipped-logit Bernoullis, masked
//! bits forced to 0). The sampled action is fed back through the segment's
//! own embedding table or adjacency projection; each segment starts from a
//! learned start embedding. All math is `f64` and the backward pass is
//! hand-derived.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{
    bit_allowed, Action, AdjacencyVector, Genome, ModuleKind, ModuleProgram, OpCode, Provenance, ADJ_WIDTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub hidden: usize,
    pub op_temperature: f64,
    pub op_clip: f64,
    pub adj_temperature: f64,
    pub adj_clip: f64,
    pub init_range: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            op_temperature: 5.0,
            op_clip: 2.5,
            adj_temperature: 1.0,
            adj_clip: 1.0,
            init_range: 0.08,
        }
    }
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    h: usize,
    /// Per layer: input weights `4h × h`, recurrent weights `4h × h`, bias `4h`.
    lstm: [(Range<usize>, Range<usize>, Range<usize>); 2],
    seg: [SegmentLayout; 3],
    adj_head_w: Range<usize>,
    adj_head_b: Range<usize>,
    total: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct SegmentLayout {
    n_ops: usize,
    sos: Range<usize>,
    /// `n_ops × h`
    op_emb: Range<usize>,
    /// `h × 5`
    adj_proj: Range<usize>,
    /// `n_ops × h`
    op_head_w: Range<usize>,
    op_head_b: Range<usize>,
}

impl Layout {
    fn new(h: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let lstm = [
            (take(4 * h * h), take(4 * h * h), take(4 * h)),
            (take(4 * h * h), take(4 * h * h), take(4 * h)),
        ];
        let seg = ModuleKind::SEGMENTS.map(|k| {
            let n = k.alphabet_len();
            SegmentLayout {
                n_ops: n,
                sos: take(h),
                op_emb: take(n * h),
                adj_proj: take(h * ADJ_WIDTH),
                op_head_w: take(n * h),
                op_head_b: take(n),
            }
        });
        let adj_head_w = take(ADJ_WIDTH * h);
        let adj_head_b = take(ADJ_WIDTH);
        Self {
            h,
            lstm,
            seg,
            adj_head_w,
            adj_head_b,
            total: at,
        }
    }
}

/// Controller parameters as one flat vector plus the config that fixes
/// its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub config: ControllerConfig,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControllerError {
    #[error("genome rejected: {0}")]
    InvalidGenome(String),
    #[error("parameter vector has {found} entries, layout needs {expected}")]
    Layout { expected: usize, found: usize },
}

/// Per-action log-probabilities and entropies of one genome.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub genome: Genome,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub total_log_prob: f64,
    pub total_entropy: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] += w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += wᵀ g` for `w` of shape `rows × cols`.
fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr != 0.0 {
            for (o, &wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *o += gr * wv;
            }
        }
    }
}

/// `dw += g xᵀ`
fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            for (d, &xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *d += gr * xv;
            }
        }
    }
}

/// Where a step's layer-1 input comes from.
#[derive(Debug, Clone, Copy)]
enum Feed {
    Start(usize),
    Op(usize, usize),
    Adj(usize, AdjacencyVector),
}

#[derive(Debug, Clone)]
struct LayerCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `i, f, g, o`, each of length h.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Decision {
    /// Segment, raw logits, chosen index.
    Op { seg: usize, raw: Vec<f64>, choice: usize },
    /// Slot (for masking), raw logits, chosen vector.
    Adj { slot: usize, raw: Vec<f64>, choice: AdjacencyVector },
}

#[derive(Debug, Clone)]
struct StepCache {
    feed: Feed,
    layers: [LayerCache; 2],
    h2: Vec<f64>,
    decision: Decision,
}

/// Distribution at one step, handed to the action chooser.
pub enum StepDist<'a> {
    Op { probs: &'a [f64] },
    Adj { probs: &'a [f64; ADJ_WIDTH], slot: usize },
}

struct Unrolled {
    steps: Vec<StepCache>,
    trace_lp: Vec<f64>,
    trace_ent: Vec<f64>,
    programs: Vec<ModuleProgram>,
}

impl ControllerParams {
    /// All weights i.i.d. uniform in `±init_range`.
    pub fn init(config: ControllerConfig, seed: u64) -> Self {
        let layout = Layout::new(config.hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = config.init_range;
        let theta = (0..layout.total).map(|_| rng.random_range(-r..=r)).collect();
        Self { config, theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn check_layout(&self) -> Result<(), ControllerError> {
        let expected = Layout::new(self.config.hidden).total;
        if expected != self.theta.len() {
            return Err(ControllerError::Layout {
                expected,
                found: self.theta.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// Clipped logits for the op heads.
    fn op_logits(&self, raw: &[f64]) -> Vec<f64> {
        let (t, c) = (self.config.op_temperature, self.config.op_clip);
        raw.iter().map(|&z| c * (z / t).tanh()).collect()
    }

    fn adj_logits(&self, raw: &[f64]) -> Vec<f64> {
        let (t, c) = (self.config.adj_temperature, self.config.adj_clip);
        raw.iter().map(|&z| c * (z / t).tanh()).collect()
    }

    fn lstm_step(&self, layer: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64], layout: &Layout) -> (LayerCache, Vec<f64>, Vec<f64>) {
        let h = layout.h;
        let (wr, ur, br) = &layout.lstm[layer];
        let mut z = self.theta[br.clone()].to_vec();
        matvec_acc(&self.theta[wr.clone()], 4 * h, h, x, &mut z);
        matvec_acc(&self.theta[ur.clone()], 4 * h, h, h_prev, &mut z);
        let mut gates = z;
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if (2 * h..3 * h).contains(&k) { g.tanh() } else { sigmoid(*g) };
        }
        let mut c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        for j in 0..h {
            c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            tanh_c[j] = c[j].tanh();
            hn[j] = gates[3 * h + j] * tanh_c[j];
        }
        let cache = LayerCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            tanh_c,
        };
        (cache, hn, c)
    }

    fn feed_vector(&self, feed: Feed, layout: &Layout) -> Vec<f64> {
        let h = layout.h;
        match feed {
            Feed::Start(s) => self.theta[layout.seg[s].sos.clone()].to_vec(),
            Feed::Op(s, k) => {
                let r = &layout.seg[s].op_emb;
                self.theta[r.start + k * h..r.start + (k + 1) * h].to_vec()
            }
            Feed::Adj(s, v) => {
                let bits: Vec<f64> = (0..ADJ_WIDTH).map(|j| if v.get(j) { 1.0 } else { 0.0 }).collect();
                let mut out = vec![0.0; h];
                matvec_acc(&self.theta[layout.seg[s].adj_proj.clone()], h, ADJ_WIDTH, &bits, &mut out);
                out
            }
        }
    }

    /// Runs the 33-step sequence; `choose` picks each action given its
    /// distribution. Sampling and teacher-forced scoring both go through here.
    fn unroll(&self, mut choose: impl FnMut(usize, usize, StepDist<'_>) -> Result<Action, ControllerError>) -> Result<Unrolled, ControllerError> {
        self.check_layout()?;
        let layout = Layout::new(self.config.hidden);
        let h = layout.h;
        let (mut h1, mut c1, mut h2, mut c2) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        let mut steps = Vec::with_capacity(33);
        let (mut trace_lp, mut trace_ent) = (Vec::new(), Vec::new());
        let mut programs = Vec::with_capacity(3);
        for (s, kind) in ModuleKind::SEGMENTS.into_iter().enumerate() {
            let sl = &layout.seg[s];
            let mut feed = Feed::Start(s);
            let mut actions = Vec::with_capacity(11);
            for pos in 0..11 {
                let x = self.feed_vector(feed, &layout);
                let (l1, nh1, nc1) = self.lstm_step(0, &x, &h1, &c1, &layout);
                let (l2, nh2, nc2) = self.lstm_step(1, &nh1, &h2, &c2, &layout);
                (h1, c1, h2, c2) = (nh1, nc1, nh2, nc2);
                let (decision, action, lp, ent, next_feed) = if pos % 2 == 0 {
                    let mut raw = self.theta[sl.op_head_b.clone()].to_vec();
                    matvec_acc(&self.theta[sl.op_head_w.clone()], sl.n_ops, h, &h2, &mut raw);
                    let logits = self.op_logits(&raw);
                    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
                    let logp: Vec<f64> = logits.iter().map(|l| l - lse).collect();
                    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                    let action = choose(s, pos, StepDist::Op { probs: &probs })?;
                    let Action::Op(op) = action else {
                        return Err(ControllerError::InvalidGenome(format!("{kind} position {pos}: expected an operation")));
                    };
                    if op.alphabet != kind || !op.is_in_range() {
                        return Err(ControllerError::InvalidGenome(format!("{kind} position {pos}: operation {} not in the {kind} alphabet", op.name())));
                    }
                    let k = op.index as usize;
                    let ent = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
                    (Decision::Op { seg: s, raw, choice: k }, action, logp[k], ent, Feed::Op(s, k))
                } else {
                    let slot = pos / 2;
                    let mut raw = self.theta[layout.adj_head_b.clone()].to_vec();
                    matvec_acc(&self.theta[layout.adj_head_w.clone()], ADJ_WIDTH, h, &h2, &mut raw);
                    let q = self.adj_logits(&raw);
                    let mut probs = [0.0; ADJ_WIDTH];
                    for j in 0..ADJ_WIDTH {
                        probs[j] = if bit_allowed(slot, j) { sigmoid(q[j]) } else { 0.0 };
                    }
                    let action = choose(s, pos, StepDist::Adj { probs: &probs, slot })?;
                    let Action::Adj(v) = action else {
                        return Err(ControllerError::InvalidGenome(format!("{kind} position {pos}: expected an adjacency vector")));
                    };
                    let (mut lp, mut ent) = (0.0, 0.0);
                    for j in 0..ADJ_WIDTH {
                        if !bit_allowed(slot, j) {
                            if v.get(j) {
                                return Err(ControllerError::InvalidGenome(format!(
                                    "{kind} adjacency vector {slot}: bit {j} is masked but set"
                                )));
                            }
                            continue;
                        }
                        let (lp1, lp0) = (log_sigmoid(q[j]), log_sigmoid(-q[j]));
                        lp += if v.get(j) { lp1 } else { lp0 };
                        let p = probs[j];
                        ent -= p * lp1 + (1.0 - p) * lp0;
                    }
                    (Decision::Adj { slot, raw, choice: v }, action, lp, ent, Feed::Adj(s, v))
                };
                steps.push(StepCache {
                    feed,
                    layers: [l1, l2],
                    h2: h2.clone(),
                    decision,
                });
                trace_lp.push(lp);
                trace_ent.push(ent);
                actions.push(action);
                feed = next_feed;
            }
            programs.push(ModuleProgram::new(kind, actions));
        }
        Ok(Unrolled {
            steps,
            trace_lp,
            trace_ent,
            programs,
        })
    }

    fn trace_of(unrolled: &Unrolled, genome: Genome) -> SampleTrace {
        SampleTrace {
            genome,
            total_log_prob: unrolled.trace_lp.iter().sum(),
            total_entropy: unrolled.trace_ent.iter().sum(),
            log_probs: unrolled.trace_lp.clone(),
            entropies: unrolled.trace_ent.clone(),
        }
    }

    fn genome_of(mut programs: Vec<ModuleProgram>, provenance: Provenance) -> Genome {
        let normal = programs.pop().expect("three segments");
        let down = programs.pop().expect("three segments");
        let up = programs.pop().expect("three segments");
        Genome::new(up, down, normal, provenance)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> SampleTrace {
        let unrolled = self
            .unroll(|s, _, dist| {
                let kind = ModuleKind::SEGMENTS[s];
                Ok(match dist {
                    StepDist::Op { probs } => {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut k = probs.len() - 1;
                        for (i, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                k = i;
                                break;
                            }
                        }
                        Action::Op(OpCode::new(kind, k as u8))
                    }
                    StepDist::Adj { probs, slot } => {
                        let mut mask = 0u8;
                        for (j, &p) in probs.iter().enumerate() {
                            let u: f64 = rng.random();
                            if bit_allowed(slot, j) && u < p {
                                mask |= 1 << j;
                            }
                        }
                        Action::Adj(AdjacencyVector::from_mask(mask))
                    }
                })
            })
            .expect("sampling with a valid layout cannot fail");
        let genome = Self::genome_of(unrolled.programs.clone(), Provenance::Sampled);
        Self::trace_of(&unrolled, genome)
    }

    fn teacher(genome: &Genome) -> Result<Vec<Action>, ControllerError> {
        if let Some((kind, v)) = genome.validate().first() {
            return Err(ControllerError::InvalidGenome(format!("{kind} module: {v}")));
        }
        Ok(genome.programs().iter().flat_map(|p| p.actions.iter().copied()).collect())
    }

    /// Teacher-forced per-action and total log-probability (and entropy).
    pub fn log_prob(&self, genome: &Genome) -> Result<SampleTrace, ControllerError> {
        let actions = Self::teacher(genome)?;
        let unrolled = self.unroll(|s, pos, _| Ok(actions[s * 11 + pos]))?;
        Ok(Self::trace_of(&unrolled, genome.clone()))
    }

    /// Sum of per-action entropies along `trace`'s genome.
    pub fn policy_entropy(&self, trace: &SampleTrace) -> Result<f64, ControllerError> {
        Ok(self.log_prob(&trace.genome)?.total_entropy)
    }

    /// Gradient of `a · log Pr(genome) + b · H(genome)` with respect to
    /// every parameter, where `H` is the summed per-action entropy.
    pub fn gradient(&self, genome: &Genome, coef_log_prob: f64, coef_entropy: f64) -> Result<(Vec<f64>, SampleTrace), ControllerError> {
        let actions = Self::teacher(genome)?;
        let un = self.unroll(|s, pos, _| Ok(actions[s * 11 + pos]))?;
        let layout = Layout::new(self.config.hidden);
        let h = layout.h;
        let mut grad = vec![0.0; self.theta.len()];
        let (mut dh1, mut dc1, mut dh2, mut dc2) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);

        for step in un.steps.iter().rev() {
            // Head gradients: d objective / d raw logits.
            match &step.decision {
                Decision::Op { seg, raw, choice } => {
                    let sl = &layout.seg[*seg];
                    let (t, c) = (self.config.op_temperature, self.config.op_clip);
                    let logits = self.op_logits(raw);
                    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
                    let logp: Vec<f64> = logits.iter().map(|l| l - lse).collect();
                    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                    let ent = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
                    let draw: Vec<f64> = (0..raw.len())
                        .map(|k| {
                            let onehot = if k == *choice { 1.0 } else { 0.0 };
                            let dl = coef_log_prob * (onehot - p[k]) + coef_entropy * (-p[k] * (logp[k] + ent));
                            let th = (raw[k] / t).tanh();
                            dl * (c / t) * (1.0 - th * th)
                        })
                        .collect();
                    outer_acc(&mut grad[sl.op_head_w.clone()], &draw, &step.h2);
                    for (g, d) in grad[sl.op_head_b.clone()].iter_mut().zip(&draw) {
                        *g += d;
                    }
                    matvec_t_acc(&self.theta[sl.op_head_w.clone()], sl.n_ops, h, &draw, &mut dh2);
                }
                Decision::Adj { slot, raw, choice } => {
                    let (t, c) = (self.config.adj_temperature, self.config.adj_clip);
                    let q = self.adj_logits(raw);
                    let draw: Vec<f64> = (0..ADJ_WIDTH)
                        .map(|j| {
                            if !bit_allowed(*slot, j) {
                                return 0.0;
                            }
                            let p = sigmoid(q[j]);
                            let y = if choice.get(j) { 1.0 } else { 0.0 };
                            let dq = coef_log_prob * (y - p) + coef_entropy * (-q[j] * p * (1.0 - p));
                            let th = (raw[j] / t).tanh();
                            dq * (c / t) * (1.0 - th * th)
                        })
                        .collect();
                    outer_acc(&mut grad[layout.adj_head_w.clone()], &draw, &step.h2);
                    for (g, d) in grad[layout.adj_head_b.clone()].iter_mut().zip(&draw) {
                        *g += d;
                    }
                    matvec_t_acc(&self.theta[layout.adj_head_w.clone()], ADJ_WIDTH, h, &draw, &mut dh2);
                }
            }
            // Layer 2, then layer 1 (whose output fed layer 2).
            let (dx2, dh2_prev, dc2_prev) = self.lstm_backward(1, &step.layers[1], &dh2, &dc2, &layout, &mut grad);
            for (a, b) in dh1.iter_mut().zip(&dx2) {
                *a += b;
            }
            let (dx1, dh1_prev, dc1_prev) = self.lstm_backward(0, &step.layers[0], &dh1, &dc1, &layout, &mut grad);
            (dh1, dc1, dh2, dc2) = (dh1_prev, dc1_prev, dh2_prev, dc2_prev);
            match step.feed {
                Feed::Start(s) => {
                    for (g, d) in grad[layout.seg[s].sos.clone()].iter_mut().zip(&dx1) {
                        *g += d;
                    }
                }
                Feed::Op(s, k) => {
                    let r = &layout.seg[s].op_emb;
                    for (g, d) in grad[r.start + k * h..r.start + (k + 1) * h].iter_mut().zip(&dx1) {
                        *g += d;
                    }
                }
                Feed::Adj(s, v) => {
                    let bits: Vec<f64> = (0..ADJ_WIDTH).map(|j| if v.get(j) { 1.0 } else { 0.0 }).collect();
                    outer_acc(&mut grad[layout.seg[s].adj_proj.clone()], &dx1, &bits);
                }
            }
        }
        let genome = genome.clone();
        Ok((grad, Self::trace_of(&un, genome)))
    }

    /// Backward through one LSTM cell. Accumulates weight gradients and
    /// returns gradients for the input, previous hidden and previous cell.
    fn lstm_backward(
        &self,
        layer: usize,
        cache: &LayerCache,
        dh: &[f64],
        dc_next: &[f64],
        layout: &Layout,
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = layout.h;
        let g = &cache.gates;
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tanh_c[j];
            let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        let (wr, ur, br) = &layout.lstm[layer];
        outer_acc(&mut grad[wr.clone()], &dz, &cache.x);
        outer_acc(&mut grad[ur.clone()], &dz, &cache.h_prev);
        for (a, b) in grad[br.clone()].iter_mut().zip(&dz) {
            *a += b;
        }
        let mut dx = vec![0.0; h];
        matvec_t_acc(&self.theta[wr.clone()], 4 * h, h, &dz, &mut dx);
        let mut dh_prev = vec![0.0; h];
        matvec_t_acc(&self.theta[ur.clone()], 4 * h, h, &dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }

    /// Per-op-slot probability tables along the teacher-forced sequence of
    /// `genome`: `[segment][slot][opcode]`.
    pub fn op_probabilities(&self, genome: &Genome) -> Result<Vec<Vec<Vec<f64>>>, ControllerError> {
        let actions = Self::teacher(genome)?;
        let mut out = vec![Vec::new(); 3];
        self.unroll(|s, pos, dist| {
            if let StepDist::Op { probs } = dist {
                out[s].push(probs.to_vec());
            }
            Ok(actions[s * 11 + pos])
        })?;
        Ok(out)
    }

    /// Lowest possible op-slot entropy for an alphabet of `n` under the
    /// clipped-logit family: one logit at `+C`, the rest at `−C`.
    pub fn op_entropy_floor(&self, n: usize) -> f64 {
        let c = self.config.op_clip;
        let z = (c).exp() + (n as f64 - 1.0) * (-c).exp();
        let p_hi = c.exp() / z;
        let p_lo = (-c).exp() / z;
        -(p_hi * p_hi.ln() + (n as f64 - 1.0) * p_lo * p_lo.ln())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("controller params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
