//! Genome scoring: a synthetic dataset, a probe classifier, proxy IS/FID,
//! the micro-GAN trainer and the surrogate scorer.

pub mod dataset;
pub mod gan;
pub mod metrics;
pub mod probe;
pub mod surrogate;

pub use dataset::{SyntheticDataset, NUM_CLASSES};
pub use gan::{generate, score_images, train_micro_gan, EvalContext, EvalReport, GanConfig};
pub use metrics::{fid_from_moments, proxy_fid, proxy_inception_score, MetricError};
pub use probe::{Probe, ProbeError, FEATURE_DIM};
pub use surrogate::{features, Surrogate, PLANTED_SEED};
