//! Deterministic genome scorer with a planted optimum, for exercising the
//! search loop without training networks.

use super::gan::EvalReport;
use crate::graph::decode_program;
use crate::search::shape_reward;
use crate::search_space::{random_genome, Genome, ModuleKind, ADJ_WIDTH, OPS_PER_MODULE};

/// Seed of the genome whose features are the planted optimum.
pub const PLANTED_SEED: u64 = 2019;

/// Per segment: normalized opcode histogram, mean adjacency in-degree over
/// the vector width, and the fraction of op outputs concatenated at the
/// module output. Every group lies in `[0, 1]`.
pub fn features(genome: &Genome) -> Vec<f64> {
    let mut f = Vec::with_capacity(46 + 6);
    for kind in ModuleKind::SEGMENTS {
        let program = genome.program(kind);
        let mut hist = vec![0.0; kind.alphabet_len()];
        for op in program.ops() {
            hist[op.index as usize] += 1.0 / OPS_PER_MODULE as f64;
        }
        f.extend(hist);
        let adj = program.adjacency();
        f.push(adj.iter().map(|a| a.count() as f64).sum::<f64>() / (adj.len() * ADJ_WIDTH) as f64);
        let leaves = decode_program(program, None).map(|d| d.leaves.len()).unwrap_or(0);
        f.push(leaves as f64 / OPS_PER_MODULE as f64);
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub target: Vec<f64>,
    pub lambda: f64,
    pub is_max: f64,
}

impl Surrogate {
    pub fn new(is_max: f64, lambda: f64) -> Self {
        Self {
            target: features(&random_genome(PLANTED_SEED)),
            lambda,
            is_max,
        }
    }

    /// `IS_max − λ ‖features − target‖₁`, clamped to `[1, IS_max]`.
    pub fn score(&self, genome: &Genome) -> f64 {
        let dist: f64 = features(genome).iter().zip(&self.target).map(|(a, b)| (a - b).abs()).sum();
        (self.is_max - self.lambda * dist).clamp(1.0, self.is_max)
    }

    pub fn evaluate(&self, genome: &Genome, is_bounds: (f64, f64)) -> EvalReport {
        let is = self.score(genome);
        EvalReport {
            genome_id: genome.id().to_string(),
            is_mean: is,
            is_std: 0.0,
            fid: None,
            reward: shape_reward(is, is_bounds.0, is_bounds.1),
            param_count: 0,
            steps_trained: 0,
            diverged: false,
            wall_time: 0.0,
        }
    }
}

impl Default for Surrogate {
    /// `IS_max = 11.24`, `λ = 0.5`.
    fn default() -> Self {
        Self::new(11.24, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{bit_allowed, ModuleProgram, Provenance, ADJ_PER_MODULE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planted_genome_scores_the_maximum() {
        let s = Surrogate::default();
        assert_eq!(s.score(&random_genome(PLANTED_SEED)), 11.24);
    }

    #[test]
    fn scores_stay_in_range() {
        let s = Surrogate::default();
        for seed in 0..200 {
            let v = s.score(&random_genome(seed));
            assert!((1.0..=11.24).contains(&v));
        }
    }

    fn mutate(g: &Genome, rng: &mut impl Rng) -> Genome {
        let kind = ModuleKind::SEGMENTS[rng.random_range(0..3)];
        let p = g.program(kind);
        let mut ops: [u8; OPS_PER_MODULE] = p.ops().iter().map(|o| o.index).collect::<Vec<_>>().try_into().unwrap();
        let mut adj: [u8; ADJ_PER_MODULE] = p.adjacency().iter().map(|a| a.mask()).collect::<Vec<_>>().try_into().unwrap();
        if rng.random_bool(0.5) {
            ops[rng.random_range(0..OPS_PER_MODULE)] = rng.random_range(0..kind.alphabet_len()) as u8;
        } else {
            let slot = rng.random_range(0..ADJ_PER_MODULE);
            let bits: Vec<usize> = (0..ADJ_WIDTH).filter(|&b| bit_allowed(slot, b)).collect();
            adj[slot] ^= 1 << bits[rng.random_range(0..bits.len())];
        }
        let mut programs = [g.up.clone(), g.down.clone(), g.normal.clone()];
        programs[kind.segment_index()] = ModuleProgram::from_indices(kind, ops, adj);
        let [up, down, normal] = programs;
        Genome::new(up, down, normal, Provenance::Manual)
    }

    #[test]
    fn hill_climbing_beats_the_random_population() {
        let s = Surrogate::default();
        let population: f64 = (0..500).map(|i| s.score(&random_genome(50_000 + i))).sum::<f64>() / 500.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let restarts = 10;
        let mut climbed = 0.0;
        for r in 0..restarts {
            let mut g = random_genome(90_000 + r);
            let mut best = s.score(&g);
            for _ in 0..100 {
                let cand = mutate(&g, &mut rng);
                let v = s.score(&cand);
                if v >= best {
                    g = cand;
                    best = v;
                }
            }
            climbed += best / restarts as f64;
        }
        assert!(climbed - population >= 1.0, "hill climb {climbed:.3} vs population {population:.3}");
    }
}
