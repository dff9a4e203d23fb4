//! Differentiable primitives: convolution, activations, and tensor plumbing.

use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

fn out_size(size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - kernel) / stride + 1
}

/// Unfolds one item `C x H x W` into `(C k k) x (Ho Wo)` patch columns.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [T],
) {
    let ho = out_size(h, k, stride, pad);
    let wo = out_size(w, k, stride, pad);
    let hw_out = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - pad
                        let shift = kx as isize - pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((w as isize - shift).min(wo as isize)).max(lo as isize) as usize;
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        if hi > lo {
                            let s0 = (lo as isize + shift) as usize;
                            line[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    } else {
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *v = if ix >= 0 && ix < w as isize {
                                src[ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back onto the image.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    x: &mut [T],
) {
    let ho = out_size(h, k, stride, pad);
    let wo = out_size(w, k, stride, pad);
    let hw_out = ho * wo;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let line = &src[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        let shift = kx as isize - pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((w as isize - shift).min(wo as isize)).max(lo as isize) as usize;
                        if hi > lo {
                            let d0 = (lo as isize + shift) as usize;
                            for (d, &v) in dst[d0..d0 + (hi - lo)].iter_mut().zip(&line[lo..hi]) {
                                *d += v;
                            }
                        }
                        continue;
                    }
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// 2D convolution with square kernels and `same`-style padding `k / 2`.
/// Weight dims are `[C_out, C_in, k, k]`, bias dims `[1, C_out, 1, 1]`.
pub fn conv2d<T: Real>(tape: &mut Tape<T>, x: Var, weight: Var, bias: Var, stride: usize) -> Var {
    let xv = tape.value(x);
    let wv = tape.value(weight);
    let [n, c, h, w] = xv.dims();
    let [cout, cin, k, k2] = wv.dims();
    assert_eq!(cin, c, "conv2d: input has {c} channels, weight expects {cin}");
    assert_eq!(k, k2, "conv2d: square kernels only");
    assert_eq!(tape.value(bias).len(), cout, "conv2d: bias size");
    let pad = k / 2;
    let ho = out_size(h, k, stride, pad);
    let wo = out_size(w, k, stride, pad);
    let ck = c * k * k;
    let hw = ho * wo;
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    let mut cols = vec![T::zero(); ck * hw];
    let bv = tape.value(bias).data().to_vec();
    for ni in 0..n {
        im2col(xv.item(ni), c, h, w, k, stride, pad, &mut cols);
        let dst = &mut out.data_mut()[ni * cout * hw..(ni + 1) * cout * hw];
        for (co, chunk) in dst.chunks_mut(hw).enumerate() {
            chunk.fill(bv[co]);
        }
        T::gemm(
            cout,
            ck,
            hw,
            T::one(),
            wv.data(),
            (ck as isize, 1),
            &cols,
            (hw as isize, 1),
            T::one(),
            dst,
            (hw as isize, 1),
        );
    }
    tape.op(out, &[x, weight, bias], move |ctx| {
        let (xv, wv) = (ctx.inputs[0], ctx.inputs[1]);
        let g = ctx.grad;
        let mut dx = ctx.needs[0].then(|| Tensor::zeros(xv.dims()));
        let mut dw = ctx.needs[1].then(|| Tensor::zeros(wv.dims()));
        let mut db = ctx.needs[2].then(|| Tensor::zeros([1, cout, 1, 1]));
        let mut cols = vec![T::zero(); ck * hw];
        for ni in 0..n {
            let gi = &g.data()[ni * cout * hw..(ni + 1) * cout * hw];
            if let Some(db) = db.as_mut() {
                for (co, chunk) in gi.chunks(hw).enumerate() {
                    db.data_mut()[co] += chunk.iter().copied().sum();
                }
            }
            if let Some(dw) = dw.as_mut() {
                im2col(xv.item(ni), c, h, w, k, stride, pad, &mut cols);
                T::gemm(
                    cout,
                    hw,
                    ck,
                    T::one(),
                    gi,
                    (hw as isize, 1),
                    &cols,
                    (1, hw as isize),
                    T::one(),
                    dw.data_mut(),
                    (ck as isize, 1),
                );
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(
                    ck,
                    cout,
                    hw,
                    T::one(),
                    wv.data(),
                    (1, ck as isize),
                    gi,
                    (hw as isize, 1),
                    T::zero(),
                    &mut cols,
                    (hw as isize, 1),
                );
                let il = c * h * w;
                col2im(&cols, c, h, w, k, stride, pad, &mut dx.data_mut()[ni * il..(ni + 1) * il]);
            }
        }
        vec![dx, dw, db]
    })
}

pub fn leaky_relu<T: Real>(tape: &mut Tape<T>, x: Var, slope: f64) -> Var {
    let s = T::of(slope);
    let out = tape.value(x).map(|v| if v > T::zero() { v } else { v * s });
    tape.op(out, &[x], move |ctx| {
        vec![Some(ctx.inputs[0].zip_map(ctx.grad, |v, g| if v > T::zero() { g } else { g * s }))]
    })
}

pub fn add<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let out = tape.value(a).zip_map(tape.value(b), |x, y| x + y);
    tape.op(out, &[a, b], |ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())])
}

pub fn sub<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let out = tape.value(a).zip_map(tape.value(b), |x, y| x - y);
    tape.op(out, &[a, b], |ctx| {
        vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]
    })
}

pub fn mul<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let out = tape.value(a).zip_map(tape.value(b), |x, y| x * y);
    tape.op(out, &[a, b], |ctx| {
        vec![
            ctx.needs[0].then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g * y)),
            ctx.needs[1].then(|| ctx.grad.zip_map(ctx.inputs[0], |g, x| g * x)),
        ]
    })
}

pub fn scale<T: Real>(tape: &mut Tape<T>, x: Var, factor: f64) -> Var {
    let f = T::of(factor);
    let out = tape.value(x).map(|v| v * f);
    tape.op(out, &[x], move |ctx| vec![Some(ctx.grad.map(|g| g * f))])
}

pub fn exp<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let out = tape.value(x).map(|v| v.exp());
    tape.op(out, &[x], |ctx| vec![Some(ctx.grad.zip_map(ctx.output, |g, y| g * y))])
}

/// `ln(x + offset)`.
pub fn ln_offset<T: Real>(tape: &mut Tape<T>, x: Var, offset: f64) -> Var {
    let o = T::of(offset);
    let out = tape.value(x).map(|v| (v + o).ln());
    tape.op(out, &[x], move |ctx| {
        vec![Some(ctx.grad.zip_map(ctx.inputs[0], |g, v| g / (v + o)))]
    })
}

/// Sum of all elements as a `[1, 1, 1, 1]` scalar.
pub fn sum_all<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let out = Tensor::scalar(tape.value(x).sum());
    let dims = tape.value(x).dims();
    tape.op(out, &[x], move |ctx| vec![Some(Tensor::full(dims, ctx.grad.data()[0]))])
}

/// Concatenation along the channel axis.
pub fn concat<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Var {
    assert!(!parts.is_empty(), "concat of nothing");
    let [n, _, h, w] = tape.value(parts[0]).dims();
    let channels: Vec<usize> = parts
        .iter()
        .map(|&p| {
            let d = tape.value(p).dims();
            assert_eq!((d[0], d[2], d[3]), (n, h, w), "concat: mismatched dims {d:?}");
            d[1]
        })
        .collect();
    let total: usize = channels.iter().sum();
    let plane = h * w;
    let mut out = Tensor::zeros([n, total, h, w]);
    for ni in 0..n {
        let mut offset = 0;
        for (&p, &cp) in parts.iter().zip(&channels) {
            let src = tape.value(p).item(ni);
            let start = (ni * total + offset) * plane;
            out.data_mut()[start..start + cp * plane].copy_from_slice(src);
            offset += cp;
        }
    }
    tape.op(out, parts, move |ctx| {
        let mut grads = Vec::with_capacity(channels.len());
        let mut offset = 0;
        for (idx, &cp) in channels.iter().enumerate() {
            if !ctx.needs[idx] {
                grads.push(None);
                offset += cp;
                continue;
            }
            let mut g = Tensor::zeros([n, cp, h, w]);
            for ni in 0..n {
                let start = (ni * total + offset) * plane;
                g.data_mut()[ni * cp * plane..(ni + 1) * cp * plane]
                    .copy_from_slice(&ctx.grad.data()[start..start + cp * plane]);
            }
            grads.push(Some(g));
            offset += cp;
        }
        grads
    })
}

/// Channels `start .. start + len`.
pub fn narrow<T: Real>(tape: &mut Tape<T>, x: Var, start: usize, len: usize) -> Var {
    let [n, c, h, w] = tape.value(x).dims();
    assert!(start + len <= c, "narrow out of range");
    let plane = h * w;
    let mut out = Tensor::zeros([n, len, h, w]);
    for ni in 0..n {
        let src = &tape.value(x).data()[(ni * c + start) * plane..(ni * c + start + len) * plane];
        out.data_mut()[ni * len * plane..(ni + 1) * len * plane].copy_from_slice(src);
    }
    tape.op(out, &[x], move |ctx| {
        let mut g = Tensor::zeros([n, c, h, w]);
        for ni in 0..n {
            g.data_mut()[(ni * c + start) * plane..(ni * c + start + len) * plane]
                .copy_from_slice(&ctx.grad.data()[ni * len * plane..(ni + 1) * len * plane]);
        }
        vec![Some(g)]
    })
}

/// Nearest-neighbor upsampling by 2 in both spatial axes.
pub fn upsample2<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let out = upsample_nearest(tape.value(x), 2);
    let dims = tape.value(x).dims();
    tape.op(out, &[x], move |ctx| {
        let [n, c, h, w] = dims;
        let g = ctx.grad;
        let mut dx = Tensor::zeros(dims);
        for ni in 0..n {
            for ci in 0..c {
                let gp = g.channel(ni, ci);
                let dp = dx.channel_mut(ni, ci);
                for y in 0..2 * h {
                    for xx in 0..2 * w {
                        dp[(y / 2) * w + xx / 2] += gp[y * 2 * w + xx];
                    }
                }
            }
        }
        vec![Some(dx)]
    })
}

/// Plain nearest-neighbor upsampling by an integer factor.
pub fn upsample_nearest<T: Real>(x: &Tensor<T>, factor: usize) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.channel(ni, ci);
            let dst = out.channel_mut(ni, ci);
            for y in 0..ho {
                for xx in 0..wo {
                    dst[y * wo + xx] = src[(y / factor) * w + xx / factor];
                }
            }
        }
    }
    out
}

/// Nearest-neighbor downsampling by an integer factor: coarse pixel `i`
/// reads fine pixel `i * factor + factor / 2`.
pub fn downsample_nearest<T: Real>(x: &Tensor<T>, factor: usize) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let (ho, wo) = (h / factor, w / factor);
    let off = factor / 2;
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.channel(ni, ci);
            let dst = out.channel_mut(ni, ci);
            for y in 0..ho {
                for xx in 0..wo {
                    dst[y * wo + xx] = src[(y * factor + off) * w + xx * factor + off];
                }
            }
        }
    }
    out
}
