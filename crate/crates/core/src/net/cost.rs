//! Normalization layers and cost volumes.

use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DINL_EPSILON: f64 = 1e-5;
pub const SPLIT_NORM_EPSILON: f64 = 1e-8;

/// Per-image, per-channel standardization over the spatial axes.
pub fn dinl_op<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let xv = tape.value(x);
    let [n, c, _, _] = xv.dims();
    let plane = xv.plane();
    let count = T::of(plane as f64);
    let eps = T::of(DINL_EPSILON);
    let mut out = Tensor::zeros(xv.dims());
    let mut inv_std = vec![T::zero(); n * c];
    for ni in 0..n {
        for ci in 0..c {
            let src = xv.channel(ni, ci);
            let mean = src.iter().copied().sum::<T>() / count;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let is = T::one() / (var + eps).sqrt();
            inv_std[ni * c + ci] = is;
            for (o, &v) in out.channel_mut(ni, ci).iter_mut().zip(src) {
                *o = (v - mean) * is;
            }
        }
    }
    tape.op(out, &[x], move |ctx| {
        let y = ctx.output;
        let g = ctx.grad;
        let mut dx = Tensor::zeros(y.dims());
        for ni in 0..n {
            for ci in 0..c {
                let (yc, gc) = (y.channel(ni, ci), g.channel(ni, ci));
                let mean_g = gc.iter().copied().sum::<T>() / count;
                let mean_gy = gc.iter().zip(yc).map(|(&a, &b)| a * b).sum::<T>() / count;
                let is = inv_std[ni * c + ci];
                for ((d, &gv), &yv) in dx.channel_mut(ni, ci).iter_mut().zip(gc).zip(yc) {
                    *d = is * (gv - mean_g - yv * mean_gy);
                }
            }
        }
        vec![Some(dx)]
    })
}

pub fn check_groups(channels: usize, k: usize) -> Result<()> {
    if k == 0 || channels % k != 0 {
        return Err(Error::Config(format!(
            "{channels} channels cannot be split into {k} equal groups"
        )));
    }
    Ok(())
}

/// Splits the channels into `k` contiguous groups and scales each per-pixel
/// group vector to unit L2 norm.
pub fn split_normalize_op<T: Real>(tape: &mut Tape<T>, x: Var, k: usize) -> Result<Var> {
    let xv = tape.value(x);
    let [n, c, _, _] = xv.dims();
    check_groups(c, k)?;
    let plane = xv.plane();
    let gsize = c / k;
    let eps = T::of(SPLIT_NORM_EPSILON);
    let mut out = Tensor::zeros(xv.dims());
    let mut norms = vec![T::zero(); n * k * plane];
    for ni in 0..n {
        let src = xv.item(ni);
        for gi in 0..k {
            let norm = &mut norms[(ni * k + gi) * plane..(ni * k + gi + 1) * plane];
            for ci in gi * gsize..(gi + 1) * gsize {
                for (acc, &v) in norm.iter_mut().zip(&src[ci * plane..(ci + 1) * plane]) {
                    *acc += v * v;
                }
            }
            for v in norm.iter_mut() {
                *v = v.sqrt().max(eps);
            }
            for ci in gi * gsize..(gi + 1) * gsize {
                let dst = out.channel_mut(ni, ci);
                for ((o, &v), &nv) in dst.iter_mut().zip(&src[ci * plane..(ci + 1) * plane]).zip(norm.iter()) {
                    *o = v / nv;
                }
            }
        }
    }
    Ok(tape.op(out, &[x], move |ctx| {
        let y = ctx.output;
        let g = ctx.grad;
        let mut dx = Tensor::zeros(y.dims());
        let mut dots = vec![T::zero(); plane];
        for ni in 0..n {
            for gi in 0..k {
                let norm = &norms[(ni * k + gi) * plane..(ni * k + gi + 1) * plane];
                dots.fill(T::zero());
                for ci in gi * gsize..(gi + 1) * gsize {
                    for ((d, &yv), &gv) in dots.iter_mut().zip(y.channel(ni, ci)).zip(g.channel(ni, ci)) {
                        *d += yv * gv;
                    }
                }
                for ci in gi * gsize..(gi + 1) * gsize {
                    let (yc, gc) = (y.channel(ni, ci), g.channel(ni, ci));
                    let dc = dx.channel_mut(ni, ci);
                    for p in 0..plane {
                        // Below epsilon the op is a plain scaling.
                        dc[p] = if norm[p] > eps {
                            (gc[p] - yc[p] * dots[p]) / norm[p]
                        } else {
                            gc[p] / eps
                        };
                    }
                }
            }
        }
        vec![Some(dx)]
    }))
}

/// Number of SNCV channels for a radius.
pub fn sncv_channels(radius: usize) -> usize {
    (2 * radius + 1) * (2 * radius + 1)
}

/// Visits the overlapping row/column spans for offset `(dy, dx)`:
/// `f(y, x_lo, x_hi)` with neighbor at `(y + dy, x + dx)`.
fn overlap(h: usize, w: usize, dy: isize, dx: isize, mut f: impl FnMut(usize, usize, usize)) {
    let y_lo = (-dy).max(0) as usize;
    let y_hi = (h as isize - dy).min(h as isize).max(0) as usize;
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
    if x_lo >= x_hi {
        return;
    }
    for y in y_lo..y_hi {
        f(y, x_lo, x_hi);
    }
}

/// Spatial neighborhood cost volume. Channel `(dy + r) * (2r + 1) + (dx + r)`
/// holds `dot(f(y, x), f(y + dy, x + dx)) / C`, zero where the neighbor is
/// outside the image.
pub fn sncv_op<T: Real>(tape: &mut Tape<T>, x: Var, radius: usize) -> Var {
    let xv = tape.value(x);
    let [n, c, h, w] = xv.dims();
    let side = 2 * radius + 1;
    let inv_c = T::one() / T::of(c.max(1) as f64);
    let r = radius as isize;
    let mut out = Tensor::zeros([n, side * side, h, w]);
    for ni in 0..n {
        for oy in 0..side {
            for ox in 0..side {
                let (dy, dx) = (oy as isize - r, ox as isize - r);
                let o = oy * side + ox;
                let mut acc = vec![T::zero(); h * w];
                for ci in 0..c {
                    let src = xv.channel(ni, ci);
                    overlap(h, w, dy, dx, |y, lo, hi| {
                        let ny = (y as isize + dy) as usize;
                        let nlo = (lo as isize + dx) as usize;
                        let a = &mut acc[y * w + lo..y * w + hi];
                        let c = &src[y * w + lo..y * w + hi];
                        let nb = &src[ny * w + nlo..ny * w + nlo + (hi - lo)];
                        for ((a, &c), &nb) in a.iter_mut().zip(c).zip(nb) {
                            *a += c * nb;
                        }
                    });
                }
                for (d, a) in out.channel_mut(ni, o).iter_mut().zip(acc) {
                    *d = a * inv_c;
                }
            }
        }
    }
    tape.op(out, &[x], move |ctx| {
        let xv = ctx.inputs[0];
        let g = ctx.grad;
        let mut dxt = Tensor::zeros(xv.dims());
        for ni in 0..n {
            for oy in 0..side {
                for ox in 0..side {
                    let (dy, dx) = (oy as isize - r, ox as isize - r);
                    let gc = g.channel(ni, oy * side + ox);
                    for ci in 0..c {
                        let src = xv.channel(ni, ci);
                        let dst = dxt.channel_mut(ni, ci);
                        overlap(h, w, dy, dx, |y, lo, hi| {
                            let ny = (y as isize + dy) as usize;
                            let nlo = (lo as isize + dx) as usize;
                            let len = hi - lo;
                            let (c0, n0) = (y * w + lo, ny * w + nlo);
                            for k in 0..len {
                                let gv = gc[c0 + k] * inv_c;
                                dst[c0 + k] += gv * src[n0 + k];
                                dst[n0 + k] += gv * src[c0 + k];
                            }
                        });
                    }
                }
            }
        }
        vec![Some(dxt)]
    })
}

/// Per-pixel `dot(a, b) / C` as a single channel.
pub fn channel_dot_op<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let (av, bv) = (tape.value(a), tape.value(b));
    assert_eq!(av.dims(), bv.dims(), "channel_dot: mismatched dims");
    let [n, c, h, w] = av.dims();
    let inv_c = T::one() / T::of(c.max(1) as f64);
    let mut out = Tensor::zeros([n, 1, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            let (ac, bc) = (av.channel(ni, ci), bv.channel(ni, ci));
            for ((o, &x), &y) in out.channel_mut(ni, 0).iter_mut().zip(ac).zip(bc) {
                *o += x * y * inv_c;
            }
        }
    }
    tape.op(out, &[a, b], move |ctx| {
        let (av, bv, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let spread = |other: &Tensor<T>| {
            let mut d = Tensor::zeros([n, c, h, w]);
            for ni in 0..n {
                let gc = g.channel(ni, 0);
                for ci in 0..c {
                    for ((o, &x), &gv) in d.channel_mut(ni, ci).iter_mut().zip(other.channel(ni, ci)).zip(gc) {
                        *o = x * gv * inv_c;
                    }
                }
            }
            d
        };
        vec![ctx.needs[0].then(|| spread(bv)), ctx.needs[1].then(|| spread(av))]
    })
}

fn eval_unary<T: Real>(x: &Tensor<T>, f: impl FnOnce(&mut Tape<T>, Var) -> Var) -> Tensor<T> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = f(&mut tape, v);
    tape.value(out).clone()
}

pub fn dinl<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    eval_unary(x, dinl_op)
}

pub fn split_normalize<T: Real>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    check_groups(x.c(), k)?;
    Ok(eval_unary(x, |t, v| split_normalize_op(t, v, k).expect("groups checked")))
}

pub fn sncv<T: Real>(x: &Tensor<T>, radius: usize) -> Tensor<T> {
    eval_unary(x, |t, v| sncv_op(t, v, radius))
}
