//! Per-batch operation frequencies of sampled genomes.

use crate::search_space::{Genome, ModuleKind};

/// Empirical opcode frequencies of one batch, indexed by
/// `ModuleKind::segment_index` and then by opcode index.
#[derive(Debug, Clone, PartialEq)]
pub struct OpFrequencies {
    pub batch: usize,
    pub segments: [Vec<f64>; 3],
}

impl OpFrequencies {
    pub fn segment(&self, kind: ModuleKind) -> &[f64] {
        &self.segments[kind.segment_index()]
    }
}

/// One row per batch; within a segment the frequencies sum to 1. Empty
/// batches are skipped.
pub fn op_distribution_history(batches: &[Vec<Genome>]) -> Vec<OpFrequencies> {
    batches
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(batch, genomes)| {
            let segments = ModuleKind::SEGMENTS.map(|kind| {
                let mut counts = vec![0usize; kind.alphabet_len()];
                for g in genomes {
                    for op in g.program(kind).ops() {
                        counts[op.index as usize] += 1;
                    }
                }
                let total: usize = counts.iter().sum();
                counts.iter().map(|&c| c as f64 / total as f64).collect()
            });
            OpFrequencies { batch, segments }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{random_genome, random_genome_with, ModuleProgram, OpCode, Provenance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_up_segment_has_unit_frequency() {
        let conv3 = OpCode::from_name(ModuleKind::Up, "nn_up+conv3x3").expect("alphabet has nn_up+conv3x3");
        let batch: Vec<Genome> = (0..10)
            .map(|s| {
                let g = random_genome(s);
                let mut ops = [0u8; 6];
                ops.fill(conv3.index);
                let masks: Vec<u8> = g.up.adjacency().iter().map(|a| a.mask()).collect();
                let up = ModuleProgram::from_indices(ModuleKind::Up, ops, masks.try_into().unwrap());
                Genome::new(up, g.down, g.normal, Provenance::Manual)
            })
            .collect();
        let h = op_distribution_history(&[batch]);
        assert_eq!(h[0].segment(ModuleKind::Up)[conv3.index as usize], 1.0);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batches: Vec<Vec<Genome>> = (0..4).map(|_| (0..10).map(|_| random_genome_with(&mut rng)).collect()).collect();
        for row in op_distribution_history(&batches) {
            for seg in &row.segments {
                assert!((seg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_genomes_give_flat_normal_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n_genomes = 2000;
        let batch: Vec<Genome> = (0..n_genomes).map(|_| random_genome_with(&mut rng)).collect();
        let row = &op_distribution_history(&[batch])[0];
        let freq = row.segment(ModuleKind::Normal);
        assert_eq!(freq.len(), 16);
        let n = (n_genomes * 6) as f64;
        let p = 1.0 / 16.0;
        let sigma = (p * (1.0 - p) / n).sqrt();
        for &f in freq {
            assert!((f - p).abs() <= 3.0 * sigma, "{f} vs {p} ± {}", 3.0 * sigma);
        }
    }
}
