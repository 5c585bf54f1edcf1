//! Procedural image classes standing in for a natural-image dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 8;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "horizontal_gradient",
    "vertical_gradient",
    "checkerboard",
    "horizontal_stripes",
    "vertical_stripes",
    "blob",
    "ring",
    "diagonal_stripes",
];

/// Class-balanced labelled images in `[-1, 1]`, shape `(n, 3, size, size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub size: usize,
    pub seed: u64,
}

/// Pattern intensity in `[0, 1]` at every pixel for class `class`.
fn pattern(class: usize, size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let s = size as f64;
    let mut t = vec![0.0; size * size];
    let flip = rng.random_bool(0.5);
    let phase = rng.random_range(0..8usize);
    match class {
        0 | 1 => {
            for y in 0..size {
                for x in 0..size {
                    let v = if class == 0 { x } else { y } as f64 / (s - 1.0);
                    t[y * size + x] = if flip { 1.0 - v } else { v };
                }
            }
        }
        2 => {
            let cell = [2usize, 4][rng.random_range(0..2usize)];
            let (px, py) = (rng.random_range(0..cell), rng.random_range(0..cell));
            for y in 0..size {
                for x in 0..size {
                    t[y * size + x] = (((x + px) / cell + (y + py) / cell) % 2) as f64;
                }
            }
        }
        3 | 4 | 7 => {
            let thick = rng.random_range(2..=3usize);
            for y in 0..size {
                for x in 0..size {
                    let coord = match class {
                        3 => y,
                        4 => x,
                        _ if flip => x + y,
                        _ => x + size - y,
                    };
                    t[y * size + x] = (((coord + phase) / thick) % 2) as f64;
                }
            }
        }
        5 | 6 => {
            let cx = rng.random_range(0.3 * s..0.7 * s);
            let cy = rng.random_range(0.3 * s..0.7 * s);
            let sigma = rng.random_range(0.12 * s..0.2 * s);
            let radius = rng.random_range(0.2 * s..0.35 * s);
            for y in 0..size {
                for x in 0..size {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    t[y * size + x] = if class == 5 {
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    } else {
                        (-(d - radius).powi(2) / 2.0).exp()
                    };
                }
            }
        }
        _ => unreachable!("class index out of range"),
    }
    t
}

fn color_pair(rng: &mut impl Rng) -> ([f64; 3], [f64; 3]) {
    loop {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if d >= 1.0 {
            return (a, b);
        }
    }
}

/// One image of class `class`: foreground/background colors blended by the
/// class pattern, plus a little pixel noise.
pub fn render(class: usize, size: usize, rng: &mut impl Rng) -> Vec<f32> {
    let t = pattern(class, size, rng);
    let (fg, bg) = color_pair(rng);
    let mut img = vec![0.0f32; 3 * size * size];
    for c in 0..3 {
        for (i, &v) in t.iter().enumerate() {
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.03;
            img[c * size * size + i] = (bg[c] + (fg[c] - bg[c]) * v + noise).clamp(-1.0, 1.0) as f32;
        }
    }
    img
}

impl SyntheticDataset {
    /// `per_class` images of each class, interleaved by class.
    pub fn generate(per_class: usize, size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * NUM_CLASSES;
        let mut data = Vec::with_capacity(n * 3 * size * size);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % NUM_CLASSES;
            data.extend(render(class, size, &mut rng));
            labels.push(class);
        }
        Self {
            images: Tensor::from_vec(&[n, 3, size, size], data),
            labels,
            size,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images at `indices`, stacked into one batch.
    pub fn gather(&self, indices: &[usize]) -> Tensor<f32> {
        let per = 3 * self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        Tensor::from_vec(&[indices.len(), 3, self.size, self.size], data)
    }

    /// A uniformly drawn batch (with replacement).
    pub fn sample_batch(&self, n: usize, rng: &mut impl Rng) -> Tensor<f32> {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        self.gather(&idx)
    }

    /// SHA-256 over labels and image bytes, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for &l in &self.labels {
            h.update((l as u32).to_le_bytes());
        }
        for &v in self.images.data() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
