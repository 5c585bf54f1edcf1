//! Hinge adversarial losses.

use super::Scalar;

/// Loss values and their gradients with respect to each logit.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeLosses<T> {
    pub d_loss: T,
    pub g_loss: T,
    pub d_grad_real: Vec<T>,
    pub d_grad_fake: Vec<T>,
    pub g_grad_fake: Vec<T>,
}

/// `L_D = mean relu(1 − D(x)) + mean relu(1 + D(G(z)))`, `L_G = −mean D(G(z))`.
/// At the hinge the subgradient 0 is used.
pub fn hinge_losses<T: Scalar>(d_real: &[T], d_fake_for_d: &[T], d_fake_for_g: &[T]) -> HingeLosses<T> {
    let one = T::one();
    let mean = |xs: &[T], f: &dyn Fn(T) -> T| {
        if xs.is_empty() {
            T::zero()
        } else {
            xs.iter().map(|&x| f(x)).sum::<T>() / T::of(xs.len() as f64)
        }
    };
    let nr = T::of(d_real.len().max(1) as f64);
    let nf = T::of(d_fake_for_d.len().max(1) as f64);
    let ng = T::of(d_fake_for_g.len().max(1) as f64);
    HingeLosses {
        d_loss: mean(d_real, &|x| (one - x).max(T::zero())) + mean(d_fake_for_d, &|x| (one + x).max(T::zero())),
        g_loss: -mean(d_fake_for_g, &|x| x),
        d_grad_real: d_real.iter().map(|&x| if x < one { -one / nr } else { T::zero() }).collect(),
        d_grad_fake: d_fake_for_d.iter().map(|&x| if x > -one { one / nf } else { T::zero() }).collect(),
        g_grad_fake: d_fake_for_g.iter().map(|_| -one / ng).collect(),
    }
}
