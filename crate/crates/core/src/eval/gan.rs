//! Micro-GAN training and scoring of one genome.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{SyntheticDataset, NUM_CLASSES};
use super::metrics::{proxy_fid, proxy_inception_score, MetricError};
use super::probe::{Probe, ProbeError, FEATURE_DIM};
use crate::graph::{assemble_discriminator, assemble_generator, count_params, BuildError, DiscriminatorConfig, GeneratorConfig};
use crate::search::shape_reward;
use crate::search_space::Genome;
use crate::tensor::{adam_step, hinge_losses, AdamConfig, AdamState, Mode, Model, NumericFault, Tensor, Want};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Generator updates.
    pub steps: usize,
    /// Discriminator updates per generator update.
    pub n_critic: usize,
    /// Generated samples per generator update.
    pub batch_g: usize,
    /// Generated samples per discriminator update.
    pub batch_d: usize,
    /// Real samples per discriminator update.
    pub batch_real: usize,
    pub adam: AdamConfig,
    pub n_eval: usize,
    pub n_groups: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl GanConfig {
    /// Width 16, 16×16 images, 500 generator updates, 5:1, batches 16/8/8.
    pub fn desk() -> Self {
        Self {
            generator: GeneratorConfig::desk(),
            discriminator: DiscriminatorConfig::desk(),
            steps: 500,
            n_critic: 5,
            batch_g: 16,
            batch_d: 8,
            batch_real: 8,
            adam: AdamConfig::default(),
            n_eval: 2000,
            n_groups: 10,
        }
    }
}

/// Immutable inputs shared by every evaluation: training images, a held-out
/// split, the probe, and real-data statistics.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub train: SyntheticDataset,
    pub heldout: SyntheticDataset,
    pub probe: Probe,
    /// Probe features of the held-out split (`n × F`).
    pub real_features: Vec<f64>,
    /// Proxy IS of the held-out split: the upper reward bound.
    pub real_is: f64,
}

impl EvalContext {
    /// 400 training and 250 held-out images per class at `size × size`.
    pub fn build(size: usize, seed: u64) -> Result<Self, ProbeError> {
        Self::build_with(400, 250, size, seed)
    }

    pub fn build_with(per_class_train: usize, per_class_heldout: usize, size: usize, seed: u64) -> Result<Self, ProbeError> {
        let train = SyntheticDataset::generate(per_class_train, size, seed);
        let heldout = SyntheticDataset::generate(per_class_heldout, size, seed.wrapping_add(1));
        let probe = Probe::train(&train, &heldout, seed.wrapping_add(2), 15)?;
        let (probs, real_features) = probe.predict(&heldout.images)?;
        let (real_is, _) = proxy_inception_score(&probs, NUM_CLASSES, 10).map_err(|e| NumericFault::NonFinite { what: e.to_string() })?;
        Ok(Self {
            train,
            heldout,
            probe,
            real_features,
            real_is,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub genome_id: String,
    pub is_mean: f64,
    pub is_std: f64,
    /// `None` for evaluators without a feature space (the surrogate) and
    /// for diverged runs.
    pub fid: Option<f64>,
    pub reward: f64,
    pub param_count: usize,
    pub steps_trained: usize,
    pub diverged: bool,
    pub wall_time: f64,
}

fn normal_batch(rng: &mut impl Rng, n: usize, d: usize) -> Tensor<f32> {
    Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
}

struct Trainer {
    g: Model<f32>,
    d: Model<f32>,
    g_opt: AdamState<f32>,
    d_opt: AdamState<f32>,
}

impl Trainer {
    fn d_step(&mut self, cfg: &GanConfig, data: &SyntheticDataset, rng: &mut impl Rng) -> Result<(), NumericFault> {
        let z = normal_batch(rng, cfg.batch_d, cfg.generator.z_dim);
        let fake = self.g.forward(&[&z], Mode::Train)?.into_output();
        let real = data.sample_batch(cfg.batch_real, rng);
        self.d.power_iterate();
        let both = Tensor::cat_batch(&[&real, &fake]);
        let pass = self.d.forward(&[&both], Mode::Train)?;
        let logits = pass.output().data();
        let (lr, lf) = logits.split_at(cfg.batch_real);
        let h = hinge_losses(lr, lf, &[]);
        if !h.d_loss.is_finite() {
            return Err(NumericFault::NonFinite { what: "discriminator loss".into() });
        }
        let grad: Vec<f32> = h.d_grad_real.iter().chain(&h.d_grad_fake).copied().collect();
        let grads = self.d.backward(&pass, &Tensor::from_vec(&[grad.len(), 1], grad), Want::PARAMS);
        adam_step(&mut self.d.store.params, &grads.params, &mut self.d_opt, &cfg.adam)
    }

    fn g_step(&mut self, cfg: &GanConfig, rng: &mut impl Rng) -> Result<(), NumericFault> {
        let z = normal_batch(rng, cfg.batch_g, cfg.generator.z_dim);
        let gp = self.g.forward(&[&z], Mode::Train)?;
        let dp = self.d.forward(&[gp.output()], Mode::Train)?;
        let h = hinge_losses(&[], &[], dp.output().data());
        if !h.g_loss.is_finite() {
            return Err(NumericFault::NonFinite { what: "generator loss".into() });
        }
        let dgrad = Tensor::from_vec(&[cfg.batch_g, 1], h.g_grad_fake);
        let dx = self.d.backward(&dp, &dgrad, Want::INPUTS).inputs.swap_remove(0).expect("input gradient");
        let grads = self.g.backward(&gp, &dx, Want::PARAMS);
        adam_step(&mut self.g.store.params, &grads.params, &mut self.g_opt, &cfg.adam)
    }
}

/// Generates `n` images from `g` in eval mode.
pub fn generate(g: &Model<f32>, n: usize, z_dim: usize, rng: &mut impl Rng) -> Result<Tensor<f32>, NumericFault> {
    let mut parts = Vec::new();
    let mut done = 0;
    while done < n {
        let m = (n - done).min(250);
        let z = normal_batch(rng, m, z_dim);
        parts.push(g.infer(&[&z])?);
        done += m;
    }
    Ok(Tensor::cat_batch(&parts.iter().collect::<Vec<_>>()))
}

/// Scores generated images: proxy IS (mean, std) and FID against the
/// held-out real features.
pub fn score_images(images: &Tensor<f32>, ctx: &EvalContext, n_groups: usize) -> Result<(f64, f64, f64), MetricError> {
    let (probs, feats) = ctx.probe.predict(images).map_err(|_| MetricError::NonFinite("probe output"))?;
    let (is_mean, is_std) = proxy_inception_score(&probs, NUM_CLASSES, n_groups)?;
    let fid = proxy_fid(&ctx.real_features, &feats, FEATURE_DIM)?;
    Ok((is_mean, is_std, fid))
}

fn is_constant(images: &Tensor<f32>) -> bool {
    let per = images.len() / images.batch();
    let first = &images.data()[..per];
    images.data().chunks(per).all(|img| img.iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-6))
}

/// Trains G and D built from `genome` for `cfg.steps` generator updates and
/// scores `cfg.n_eval` generated images. Numeric trouble is reported as
/// divergence (reward 0), never as an error.
pub fn train_micro_gan(
    genome: &Genome,
    cfg: &GanConfig,
    ctx: &EvalContext,
    seed: u64,
    is_bounds: (f64, f64),
) -> Result<EvalReport, BuildError> {
    let start = Instant::now();
    let g_ir = assemble_generator(genome, &cfg.generator)?;
    let d_ir = assemble_discriminator(genome, &cfg.discriminator)?;
    let param_count = count_params(&g_ir) + count_params(&d_ir);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trainer {
        g: Model::new(g_ir, &mut rng),
        d: Model::new(d_ir, &mut rng),
        g_opt: AdamState::default(),
        d_opt: AdamState::default(),
    };
    let mut fault = None;
    let mut steps_trained = 0;
    'outer: for _ in 0..cfg.steps {
        for _ in 0..cfg.n_critic {
            if let Err(e) = t.d_step(cfg, &ctx.train, &mut rng) {
                fault = Some(e);
                break 'outer;
            }
        }
        if let Err(e) = t.g_step(cfg, &mut rng) {
            fault = Some(e);
            break;
        }
        steps_trained += 1;
    }
    let mut report = EvalReport {
        genome_id: genome.id().to_string(),
        is_mean: 1.0,
        is_std: 0.0,
        fid: None,
        reward: 0.0,
        param_count,
        steps_trained,
        diverged: true,
        wall_time: 0.0,
    };
    if let Some(e) = fault {
        log::info!("genome {} diverged after {steps_trained} steps: {e}", genome.id());
    } else {
        match generate(&t.g, cfg.n_eval, cfg.generator.z_dim, &mut rng) {
            Ok(images) if !is_constant(&images) => match score_images(&images, ctx, cfg.n_groups) {
                Ok((m, s, fid)) => {
                    report.is_mean = m;
                    report.is_std = s;
                    report.fid = Some(fid);
                    report.diverged = false;
                    report.reward = shape_reward(m, is_bounds.0, is_bounds.1);
                }
                Err(e) => log::info!("genome {}: scoring failed: {e}", genome.id()),
            },
            Ok(_) => log::info!("genome {}: generator output is constant", genome.id()),
            Err(e) => log::info!("genome {}: sampling failed: {e}", genome.id()),
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}
