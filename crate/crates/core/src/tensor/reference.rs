//! Slow direct-loop implementations used as test oracles for the
//! im2col kernels.

use super::kernels::Conv2dGeom;
use super::Scalar;
use crate::graph::ConvTransposeSpec;

/// Direct convolution: one multiply-add per (output, kernel tap).
pub fn conv2d<T: Scalar>(x: &[T], batch: usize, weight: &[T], bias: Option<&[T]>, g: &Conv2dGeom) -> Vec<T> {
    let cin_g = g.c_in / g.groups;
    let cout_g = g.c_out / g.groups;
    let mut out = vec![T::zero(); batch * g.c_out * g.oh * g.ow];
    for b in 0..batch {
        for co in 0..g.c_out {
            let group = co / cout_g;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = bias.map_or(T::zero(), |bb| bb[co]);
                    for ci in 0..cin_g {
                        let c = group * cin_g + ci;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let iy = (oy * g.stride + ky * g.dil) as isize - g.ph as isize;
                                let ix = (ox * g.stride + kx * g.dil) as isize - g.pw as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                let xv = x[((b * g.c_in + c) * g.h + iy as usize) * g.w + ix as usize];
                                let wv = weight[((co * cin_g + ci) * g.kh + ky) * g.kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * g.c_out + co) * g.oh + oy) * g.ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Direct transposed convolution: every input pixel scatters its kernel
/// footprint into the output.
pub fn conv_transpose2d<T: Scalar>(
    x: &[T],
    batch: usize,
    weight: &[T],
    bias: Option<&[T]>,
    spec: &ConvTransposeSpec,
    h: usize,
    w: usize,
) -> Vec<T> {
    let (oh, ow) = spec.out_size(h, w).expect("transposed conv output size");
    let k = spec.kernel;
    let mut out = vec![T::zero(); batch * spec.out_ch * oh * ow];
    for b in 0..batch {
        for co in 0..spec.out_ch {
            let bv = bias.map_or(T::zero(), |bb| bb[co]);
            for v in &mut out[(b * spec.out_ch + co) * oh * ow..(b * spec.out_ch + co + 1) * oh * ow] {
                *v = bv;
            }
        }
        for ci in 0..spec.in_ch {
            for iy in 0..h {
                for ix in 0..w {
                    let xv = x[((b * spec.in_ch + ci) * h + iy) * w + ix];
                    for co in 0..spec.out_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (iy * spec.stride + ky) as isize - spec.padding as isize;
                                let ox = (ix * spec.stride + kx) as isize - spec.padding as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let wv = weight[((ci * spec.out_ch + co) * k + ky) * k + kx];
                                out[((b * spec.out_ch + co) * oh + oy as usize) * ow + ox as usize] += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
