//! Raw kernels on NCHW slices. Convolutions use im2col + GEMM; the
//! transposed convolution is the adjoint of a strided convolution and
//! reuses the same machinery.

use super::{gemm, MatRef, Scalar};
use crate::graph::{ConvSpec, ConvTransposeSpec, PoolSpec};
use crate::par;

/// Geometry of a 2-D convolution over a `c_in × h × w` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ph: usize,
    pub pw: usize,
    pub dil: usize,
    pub groups: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Conv2dGeom {
    pub fn from_spec(spec: &ConvSpec, h: usize, w: usize) -> Self {
        let (oh, ow) = spec.out_size(h, w).expect("conv output size");
        Self {
            c_in: spec.in_ch,
            h,
            w,
            c_out: spec.out_ch,
            kh: spec.kernel.0,
            kw: spec.kernel.1,
            stride: spec.stride,
            ph: spec.padding.0,
            pw: spec.padding.1,
            dil: spec.dilation,
            groups: spec.groups,
            oh,
            ow,
        }
    }

    /// The strided convolution whose adjoint is `spec` applied to an `h × w` input.
    pub fn adjoint_of_transpose(spec: &ConvTransposeSpec, h: usize, w: usize) -> Self {
        let (oh, ow) = spec.out_size(h, w).expect("transposed conv output size");
        let g = Self {
            c_in: spec.out_ch,
            h: oh,
            w: ow,
            c_out: spec.in_ch,
            kh: spec.kernel,
            kw: spec.kernel,
            stride: spec.stride,
            ph: spec.padding,
            pw: spec.padding,
            dil: 1,
            groups: 1,
            oh: h,
            ow: w,
        };
        debug_assert_eq!((oh + 2 * spec.padding - spec.kernel) / spec.stride + 1, h);
        g
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    /// Columns per output position for one group.
    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn n_out(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.c_out * self.n_out()
    }

    #[inline]
    fn src(&self, o: usize, k: usize, pad: usize, size: usize) -> Option<usize> {
        let pos = (o * self.stride + k * self.dil) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }
}

/// One sample, one group: `cols` is `(oh·ow) × k` row-major.
fn im2col<T: Scalar>(x: &[T], g: &Conv2dGeom, group: usize, cols: &mut [T]) {
    let (kh, kw, cg) = (g.kh, g.kw, g.cin_g());
    let k = g.k();
    let plane = g.h * g.w;
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &mut cols[(oy * g.ow + ox) * k..(oy * g.ow + ox + 1) * k];
            let mut idx = 0;
            for c in 0..cg {
                let xp = &x[(group * cg + c) * plane..(group * cg + c + 1) * plane];
                for ky in 0..kh {
                    match g.src(oy, ky, g.ph, g.h) {
                        Some(iy) => {
                            for kx in 0..kw {
                                row[idx] = match g.src(ox, kx, g.pw, g.w) {
                                    Some(ix) => xp[iy * g.w + ix],
                                    None => T::zero(),
                                };
                                idx += 1;
                            }
                        }
                        None => {
                            for v in &mut row[idx..idx + kw] {
                                *v = T::zero();
                            }
                            idx += kw;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` into the sample's input gradient.
fn col2im<T: Scalar>(cols: &[T], g: &Conv2dGeom, group: usize, dx: &mut [T]) {
    let (kh, kw, cg) = (g.kh, g.kw, g.cin_g());
    let k = g.k();
    let plane = g.h * g.w;
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &cols[(oy * g.ow + ox) * k..(oy * g.ow + ox + 1) * k];
            let mut idx = 0;
            for c in 0..cg {
                let base = (group * cg + c) * plane;
                for ky in 0..kh {
                    match g.src(oy, ky, g.ph, g.h) {
                        Some(iy) => {
                            for kx in 0..kw {
                                if let Some(ix) = g.src(ox, kx, g.pw, g.w) {
                                    dx[base + iy * g.w + ix] += row[idx];
                                }
                                idx += 1;
                            }
                        }
                        None => idx += kw,
                    }
                }
            }
        }
    }
}

fn build_cols<T: Scalar>(x: &[T], batch: usize, g: &Conv2dGeom, group: usize) -> Vec<T> {
    let n = g.n_out();
    let k = g.k();
    let mut cols = vec![T::zero(); batch * n * k];
    let in_len = g.in_len();
    par::for_each_chunk_mut(&mut cols, n * k, |b, chunk| {
        im2col(&x[b * in_len..(b + 1) * in_len], g, group, chunk);
    });
    cols
}

/// `(B, c_out, n)` slice of channels `c0..c0+cg` gathered into `cg × (B·n)`.
fn gather_channels<T: Scalar>(src: &[T], batch: usize, c_total: usize, c0: usize, cg: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cg * batch * n];
    for c in 0..cg {
        for b in 0..batch {
            let s = (b * c_total + c0 + c) * n;
            let d = c * batch * n + b * n;
            out[d..d + n].copy_from_slice(&src[s..s + n]);
        }
    }
    out
}

/// Convolution forward: `x` is `(batch, c_in, h, w)`, weight `(c_out, c_in/groups, kh, kw)`.
pub fn conv2d_forward<T: Scalar>(x: &[T], batch: usize, weight: &[T], bias: Option<&[T]>, g: &Conv2dGeom) -> Vec<T> {
    assert_eq!(x.len(), batch * g.in_len(), "conv input size");
    let n = g.n_out();
    let k = g.k();
    let cog = g.cout_g();
    let mut out = vec![T::zero(); batch * g.out_len()];
    let mut tmp = vec![T::zero(); cog * batch * n];
    for group in 0..g.groups {
        let cols = build_cols(x, batch, g, group);
        let wg = &weight[group * cog * k..(group + 1) * cog * k];
        gemm(
            T::one(),
            MatRef::row_major(wg, cog, k),
            MatRef::row_major(&cols, batch * n, k).t(),
            T::zero(),
            &mut tmp,
        );
        for co in 0..cog {
            let c = group * cog + co;
            let bv = bias.map_or(T::zero(), |b| b[c]);
            for b in 0..batch {
                let s = co * batch * n + b * n;
                let d = (b * g.c_out + c) * n;
                for (o, &v) in out[d..d + n].iter_mut().zip(&tmp[s..s + n]) {
                    *o = v + bv;
                }
            }
        }
    }
    out
}

/// Gradient with respect to the convolution input.
pub fn conv2d_backward_data<T: Scalar>(dout: &[T], batch: usize, weight: &[T], g: &Conv2dGeom) -> Vec<T> {
    let n = g.n_out();
    let k = g.k();
    let cog = g.cout_g();
    let in_len = g.in_len();
    let mut dx = vec![T::zero(); batch * in_len];
    let mut dcols = vec![T::zero(); batch * n * k];
    for group in 0..g.groups {
        let dt = gather_channels(dout, batch, g.c_out, group * cog, cog, n);
        let wg = &weight[group * cog * k..(group + 1) * cog * k];
        gemm(
            T::one(),
            MatRef::row_major(&dt, cog, batch * n).t(),
            MatRef::row_major(wg, cog, k),
            T::zero(),
            &mut dcols,
        );
        let dcols = &dcols;
        par::for_each_chunk_mut(&mut dx, in_len, |b, chunk| {
            col2im(&dcols[b * n * k..(b + 1) * n * k], g, group, chunk);
        });
    }
    dx
}

/// Gradient with respect to the convolution weight.
pub fn conv2d_backward_weight<T: Scalar>(x: &[T], dout: &[T], batch: usize, g: &Conv2dGeom) -> Vec<T> {
    let n = g.n_out();
    let k = g.k();
    let cog = g.cout_g();
    let mut dw = vec![T::zero(); g.c_out * k];
    for group in 0..g.groups {
        let cols = build_cols(x, batch, g, group);
        let dt = gather_channels(dout, batch, g.c_out, group * cog, cog, n);
        gemm(
            T::one(),
            MatRef::row_major(&dt, cog, batch * n),
            MatRef::row_major(&cols, batch * n, k),
            T::zero(),
            &mut dw[group * cog * k..(group + 1) * cog * k],
        );
    }
    dw
}

/// Per-channel sums of a `(batch, c, n)` tensor.
pub fn channel_sums<T: Scalar>(x: &[T], batch: usize, c: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c];
    for b in 0..batch {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += x[(b * c + ch) * n..(b * c + ch + 1) * n].iter().copied().sum::<T>();
        }
    }
    out
}

/// Transposed convolution forward: `x` is `(batch, in, h, w)`, weight `(in, out, k, k)`.
pub fn conv_transpose2d_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    weight: &[T],
    bias: Option<&[T]>,
    spec: &ConvTransposeSpec,
    h: usize,
    w: usize,
) -> Vec<T> {
    let g = Conv2dGeom::adjoint_of_transpose(spec, h, w);
    let mut y = conv2d_backward_data(x, batch, weight, &g);
    if let Some(bias) = bias {
        let n = g.h * g.w;
        for b in 0..batch {
            for (c, &bv) in bias.iter().enumerate() {
                for v in &mut y[(b * g.c_in + c) * n..(b * g.c_in + c + 1) * n] {
                    *v += bv;
                }
            }
        }
    }
    y
}

pub fn conv_transpose2d_backward_data<T: Scalar>(
    dy: &[T],
    batch: usize,
    weight: &[T],
    spec: &ConvTransposeSpec,
    h: usize,
    w: usize,
) -> Vec<T> {
    let g = Conv2dGeom::adjoint_of_transpose(spec, h, w);
    conv2d_forward(dy, batch, weight, None, &g)
}

pub fn conv_transpose2d_backward_weight<T: Scalar>(
    x: &[T],
    dy: &[T],
    batch: usize,
    spec: &ConvTransposeSpec,
    h: usize,
    w: usize,
) -> Vec<T> {
    let g = Conv2dGeom::adjoint_of_transpose(spec, h, w);
    conv2d_backward_weight(dy, x, batch, &g)
}

/// Pooling geometry for one plane.
#[derive(Debug, Clone, Copy)]
pub struct PoolGeom {
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolGeom {
    pub fn new(spec: &PoolSpec, h: usize, w: usize) -> Self {
        let (oh, ow) = spec.out_size(h, w).expect("pool output size");
        Self {
            h,
            w,
            oh,
            ow,
            k: spec.kernel,
            stride: spec.stride,
            pad: spec.padding,
        }
    }

    #[inline]
    fn range(&self, o: usize, size: usize) -> (usize, usize) {
        let start = (o * self.stride) as isize - self.pad as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + self.k as isize) as usize).min(size);
        (lo, hi)
    }
}

/// Max pooling over `planes` planes. Ties resolve to the first element in
/// row-major window order. Returns outputs and the winning input offsets.
pub fn max_pool_forward<T: Scalar>(x: &[T], planes: usize, g: &PoolGeom) -> (Vec<T>, Vec<u32>) {
    let (ip, op) = (g.h * g.w, g.oh * g.ow);
    let mut out = vec![T::zero(); planes * op];
    let mut arg = vec![0u32; planes * op];
    for p in 0..planes {
        let xp = &x[p * ip..(p + 1) * ip];
        for oy in 0..g.oh {
            let (y0, y1) = g.range(oy, g.h);
            for ox in 0..g.ow {
                let (x0, x1) = g.range(ox, g.w);
                let mut best = T::neg_infinity();
                let mut best_i = y0 * g.w + x0;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let v = xp[iy * g.w + ix];
                        if v > best {
                            best = v;
                            best_i = iy * g.w + ix;
                        }
                    }
                }
                out[p * op + oy * g.ow + ox] = best;
                arg[p * op + oy * g.ow + ox] = best_i as u32;
            }
        }
    }
    (out, arg)
}

pub fn max_pool_backward<T: Scalar>(dout: &[T], arg: &[u32], planes: usize, g: &PoolGeom) -> Vec<T> {
    let (ip, op) = (g.h * g.w, g.oh * g.ow);
    let mut dx = vec![T::zero(); planes * ip];
    for p in 0..planes {
        for o in 0..op {
            dx[p * ip + arg[p * op + o] as usize] += dout[p * op + o];
        }
    }
    dx
}

/// Average pooling; padded positions are excluded from the divisor.
pub fn avg_pool_forward<T: Scalar>(x: &[T], planes: usize, g: &PoolGeom) -> Vec<T> {
    let (ip, op) = (g.h * g.w, g.oh * g.ow);
    let mut out = vec![T::zero(); planes * op];
    par::for_each_chunk_mut(&mut out, op, |p, o| {
        let xp = &x[p * ip..(p + 1) * ip];
        for oy in 0..g.oh {
            let (y0, y1) = g.range(oy, g.h);
            for ox in 0..g.ow {
                let (x0, x1) = g.range(ox, g.w);
                let mut s = T::zero();
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        s += xp[iy * g.w + ix];
                    }
                }
                o[oy * g.ow + ox] = s / T::of(((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    });
    out
}

pub fn avg_pool_backward<T: Scalar>(dout: &[T], planes: usize, g: &PoolGeom) -> Vec<T> {
    let (ip, op) = (g.h * g.w, g.oh * g.ow);
    let mut dx = vec![T::zero(); planes * ip];
    par::for_each_chunk_mut(&mut dx, ip, |p, d| {
        let dp = &dout[p * op..(p + 1) * op];
        for oy in 0..g.oh {
            let (y0, y1) = g.range(oy, g.h);
            for ox in 0..g.ow {
                let (x0, x1) = g.range(ox, g.w);
                let share = dp[oy * g.ow + ox] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        d[iy * g.w + ix] += share;
                    }
                }
            }
        }
    });
    dx
}

/// Nearest-neighbor 2× upsampling of `planes` planes of size `h × w`.
pub fn upsample2x_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ow, op) = (2 * w, 4 * h * w);
    let mut out = vec![T::zero(); planes * op];
    for p in 0..planes {
        for y in 0..2 * h {
            for xo in 0..ow {
                out[p * op + y * ow + xo] = x[p * h * w + (y / 2) * w + xo / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Scalar>(dout: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ow, op) = (2 * w, 4 * h * w);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for y in 0..2 * h {
            for xo in 0..ow {
                dx[p * h * w + (y / 2) * w + xo / 2] += dout[p * op + y * ow + xo];
            }
        }
    }
    dx
}

/// Saved state of a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel batch statistics: (mean, biased variance).
pub fn batch_stats<T: Scalar>(x: &[T], batch: usize, c: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let count = T::of((batch * n) as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for b in 0..batch {
            s += x[(b * c + ch) * n..(b * c + ch + 1) * n].iter().copied().sum::<T>();
        }
        let m = s / count;
        let mut v = T::zero();
        for b in 0..batch {
            for &xv in &x[(b * c + ch) * n..(b * c + ch + 1) * n] {
                v += (xv - m) * (xv - m);
            }
        }
        mean[ch] = m;
        var[ch] = v / count;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta` with the given statistics.
pub fn batch_norm_apply<T: Scalar>(
    x: &[T],
    batch: usize,
    c: usize,
    n: usize,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, BnCache<T>) {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let r = (b * c + ch) * n..(b * c + ch + 1) * n;
            for i in r {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                y[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    (y, BnCache { xhat, inv_std })
}

/// Training-mode batch norm backward. Returns (dx, dgamma, dbeta).
pub fn batch_norm_backward<T: Scalar>(
    dy: &[T],
    batch: usize,
    c: usize,
    n: usize,
    gamma: &[T],
    cache: &BnCache<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let count = T::of((batch * n) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..batch {
        for ch in 0..c {
            for i in (b * c + ch) * n..(b * c + ch + 1) * n {
                dgamma[ch] += dy[i] * cache.xhat[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..batch {
        for ch in 0..c {
            let scale = gamma[ch] * cache.inv_std[ch] / count;
            for i in (b * c + ch) * n..(b * c + ch + 1) * n {
                dx[i] = scale * (count * dy[i] - dbeta[ch] - cache.xhat[i] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::reference;

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn check_conv(spec: ConvSpec, h: usize, w: usize, batch: usize) {
        let g = Conv2dGeom::from_spec(&spec, h, w);
        let x = lcg(batch * g.in_len(), 1);
        let wt = lcg(spec.weight_shape().iter().product(), 2);
        let bias = lcg(spec.out_ch, 3);
        let fast = conv2d_forward(&x, batch, &wt, Some(&bias), &g);
        let slow = reference::conv2d(&x, batch, &wt, Some(&bias), &g);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{spec:?}: {a} vs {b}");
        }
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        check_conv(ConvSpec::same(3, 4, 3, 3), 5, 6, 2);
        check_conv(ConvSpec::same(4, 4, 1, 5), 5, 5, 2);
        check_conv(
            ConvSpec {
                dilation: 2,
                padding: (2, 2),
                ..ConvSpec::same(2, 3, 3, 3)
            },
            7,
            5,
            3,
        );
        check_conv(
            ConvSpec {
                groups: 4,
                bias: false,
                ..ConvSpec::same(4, 4, 7, 7)
            },
            6,
            6,
            2,
        );
        check_conv(
            ConvSpec {
                stride: 2,
                ..ConvSpec::same(2, 2, 3, 3)
            },
            8,
            8,
            1,
        );
    }

    #[test]
    fn transposed_conv_matches_direct_scatter() {
        for k in [3, 5, 7] {
            let spec = ConvTransposeSpec::doubling(3, 2, k);
            let (h, w) = (4, 5);
            let x = lcg(2 * 3 * h * w, 4);
            let wt = lcg(3 * 2 * k * k, 5);
            let bias = lcg(2, 6);
            let fast = conv_transpose2d_forward(&x, 2, &wt, Some(&bias), &spec, h, w);
            let slow = reference::conv_transpose2d(&x, 2, &wt, Some(&bias), &spec, h, w);
            assert_eq!(fast.len(), 2 * 2 * 8 * 10);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilated_impulse_response() {
        // A centered impulse through a dilation-2 3x3 kernel lands kernel
        // taps at offsets of +-2.
        let spec = ConvSpec {
            dilation: 2,
            padding: (2, 2),
            bias: false,
            ..ConvSpec::same(1, 1, 3, 3)
        };
        let g = Conv2dGeom::from_spec(&spec, 7, 7);
        let mut x = vec![0.0f64; 49];
        x[3 * 7 + 3] = 1.0;
        let wt: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let y = conv2d_forward(&x, 1, &wt, None, &g);
        for ky in 0..3 {
            for kx in 0..3 {
                let oy = 3 + 2 - 2 * ky;
                let ox = 3 + 2 - 2 * kx;
                assert_eq!(y[oy * 7 + ox], wt[ky * 3 + kx]);
            }
        }
        assert_eq!(y.iter().filter(|v| **v != 0.0).count(), 9);
    }

    #[test]
    fn nearest_upsample_replicates_blocks() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y = upsample2x_forward(&x, 1, 2, 2);
        assert_eq!(
            y,
            vec![1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
    }

    #[test]
    fn max_pool_ties_route_to_first() {
        let x = [1.0f64; 9];
        let g = PoolGeom::new(&PoolSpec::same(3), 3, 3);
        let (_, arg) = max_pool_forward(&x, 1, &g);
        assert_eq!(arg[4], 0);
        assert_eq!(arg[8], 4);
    }

    #[test]
    fn batch_norm_normalizes() {
        let (batch, c, n) = (8, 3, 25);
        let x: Vec<f64> = lcg(batch * c * n, 9).iter().map(|v| 3.0 * v + 1.5).collect();
        let (mean, var) = batch_stats(&x, batch, c, n);
        let (y, _) = batch_norm_apply(&x, batch, c, n, &mean, &var, &[1.0; 3], &[0.0; 3], 1e-5);
        let (m2, v2) = batch_stats(&y, batch, c, n);
        for ch in 0..c {
            assert!(m2[ch].abs() < 1e-5);
            assert!((v2[ch] - 1.0).abs() < 1e-3);
        }
    }
}
