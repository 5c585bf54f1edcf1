//! Adam and spectral normalization.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NumericFault, Scalar, Tensor};
use crate::graph::ParamId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState<T> {
    pub m: BTreeMap<ParamId, Vec<T>>,
    pub v: BTreeMap<ParamId, Vec<T>>,
    pub step: u64,
}

/// One bias-corrected Adam step over every parameter that has a gradient.
/// Parameters are left untouched if any update would be non-finite.
pub fn adam_step<T: Scalar>(
    params: &mut BTreeMap<ParamId, Tensor<T>>,
    grads: &BTreeMap<ParamId, Tensor<T>>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<(), NumericFault> {
    for (id, g) in grads {
        if !g.is_finite() {
            return Err(NumericFault::NonFinite {
                what: format!("gradient for parameter {}:{}", id.node, id.slot),
            });
        }
    }
    let t = state.step + 1;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let bc1 = T::of(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::of(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    let mut updates = Vec::with_capacity(grads.len());
    for (id, g) in grads {
        let p = params.get(id).expect("gradient for unknown parameter");
        assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
        let mut m = state.m.get(id).cloned().unwrap_or_else(|| vec![T::zero(); g.len()]);
        let mut v = state.v.get(id).cloned().unwrap_or_else(|| vec![T::zero(); g.len()]);
        let mut next = p.data().to_vec();
        for i in 0..g.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            next[i] -= lr * mh / (vh.sqrt() + eps);
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(NumericFault::NonFinite {
                what: format!("Adam update for parameter {}:{}", id.node, id.slot),
            });
        }
        updates.push((*id, next, m, v));
    }
    for (id, next, m, v) in updates {
        params.get_mut(&id).expect("checked above").data_mut().copy_from_slice(&next);
        state.m.insert(id, m);
        state.v.insert(id, v);
    }
    state.step = t;
    Ok(())
}

/// Power-iteration vectors for one weight viewed as a `rows × cols` matrix
/// (rows = leading dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let n = x.iter().map(|&a| a * a).sum::<T>().sqrt();
    let n = n.max(T::of(1e-12));
    for a in x {
        *a /= n;
    }
}

impl<T: Scalar> SpectralState<T> {
    pub fn new(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut u: Vec<T> = (0..rows).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect();
        normalize(&mut u);
        Self {
            u,
            v: vec![T::zero(); cols],
        }
    }

    /// `v ← Wᵀu / ‖·‖`, `u ← Wv / ‖·‖`.
    pub fn iterate(&mut self, w: &[T]) {
        let (rows, cols) = (self.u.len(), self.v.len());
        debug_assert_eq!(w.len(), rows * cols);
        for c in 0..cols {
            self.v[c] = T::zero();
        }
        for r in 0..rows {
            let ur = self.u[r];
            for (vc, &wv) in self.v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *vc += ur * wv;
            }
        }
        normalize(&mut self.v);
        for r in 0..rows {
            self.u[r] = w[r * cols..(r + 1) * cols].iter().zip(&self.v).map(|(&a, &b)| a * b).sum();
        }
        normalize(&mut self.u);
    }

    /// `σ̂ = uᵀ W v`.
    pub fn sigma(&self, w: &[T]) -> T {
        let cols = self.v.len();
        self.u
            .iter()
            .enumerate()
            .map(|(r, &ur)| ur * w[r * cols..(r + 1) * cols].iter().zip(&self.v).map(|(&a, &b)| a * b).sum::<T>())
            .sum()
    }
}

/// Runs `n_power_iters` power iterations and returns `weight / σ̂`.
pub fn spectral_normalize<T: Scalar>(weight: &Tensor<T>, state: &mut SpectralState<T>, n_power_iters: usize) -> Tensor<T> {
    for _ in 0..n_power_iters {
        state.iterate(weight.data());
    }
    let sigma = state.sigma(weight.data());
    weight.map(|x| x / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pid(node: usize) -> ParamId {
        ParamId { node, slot: 0 }
    }

    fn one_param(values: &[f64]) -> BTreeMap<ParamId, Tensor<f64>> {
        BTreeMap::from([(pid(0), Tensor::from_f64(&[values.len()], values))])
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = one_param(&[0.5, -1.0]);
        let before = p.clone();
        let g = one_param(&[0.0, 0.0]);
        let mut st = AdamState::default();
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = one_param(&[0.0, 0.0, 0.0]);
        let g = one_param(&[3.0, -0.01, 1e3]);
        let mut st = AdamState::default();
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        // beta1 = 0: m̂ = g, v̂ = g², step = lr·g/(|g|+eps).
        for (&x, &gi) in p[&pid(0)].data().iter().zip(g[&pid(0)].data()) {
            let expect = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((x - expect).abs() < 1e-15);
            assert!((x.abs() - cfg.lr).abs() < 1e-9);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let g = one_param(&[0.3, -0.2]);
        let mut st = AdamState::default();
        let mut p = one_param(&[1.0, 2.0]);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        let (mut p1, mut s1) = (p.clone(), st.clone());
        let (mut p2, mut s2) = (p.clone(), st.clone());
        adam_step(&mut p1, &g, &mut s1, &AdamConfig::default()).unwrap();
        adam_step(&mut p2, &g, &mut s2, &AdamConfig::default()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn non_finite_gradient_is_a_fault() {
        let mut p = one_param(&[1.0]);
        let g = one_param(&[f64::NAN]);
        let err = adam_step(&mut p, &g, &mut AdamState::default(), &AdamConfig::default());
        assert!(err.is_err());
        assert_eq!(p, one_param(&[1.0]));
    }

    fn top_singular(w: &[f64], rows: usize, cols: usize) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(rows, cols, w);
        m.singular_values().max()
    }

    #[test]
    fn diagonal_converges_to_unit_norm() {
        let w = Tensor::from_f64(&[2, 2], &[3.0, 0.0, 0.0, 1.0]);
        let mut st = SpectralState::<f64>::new(2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let n = spectral_normalize(&w, &mut st, 50);
        assert!((top_singular(n.data(), 2, 2) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_is_unchanged() {
        let (c, s) = (0.6f64, 0.8f64);
        let w = Tensor::from_f64(&[2, 2], &[c, -s, s, c]);
        let mut st = SpectralState::<f64>::new(2, 2, &mut ChaCha8Rng::seed_from_u64(2));
        let n = spectral_normalize(&w, &mut st, 50);
        for (a, b) in n.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_one_is_scaled_by_its_norm() {
        // u vᵀ with ‖u‖‖v‖ = 5.
        let u = [3.0, 4.0];
        let v = [0.6, 0.0, 0.8];
        let data: Vec<f64> = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let w = Tensor::from_f64(&[2, 3], &data);
        assert!((top_singular(&data, 2, 3) - 5.0).abs() < 1e-12);
        let mut st = SpectralState::<f64>::new(2, 3, &mut ChaCha8Rng::seed_from_u64(3));
        let n = spectral_normalize(&w, &mut st, 50);
        for (a, b) in n.data().iter().zip(w.data()) {
            assert!((a - b / 5.0).abs() < 1e-6);
        }
    }
}
