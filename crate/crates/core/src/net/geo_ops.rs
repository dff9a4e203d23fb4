//! Differentiable wrappers around the parallax and reprojection geometry.

use super::ops::{concat, scale};
use super::cost::channel_dot_op;
use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::geometry::warp::bilinear_tap;
use crate::geometry::{
    CameraIntrinsics, DenominatorReading, MotionTransform, ParallaxField, ReprojectionField,
};

/// Coordinate written for pixels whose reprojection is undefined; it lies
/// far outside any image so sampling treats it as out of bounds.
pub const INVALID_COORD: f64 = -1.0e6;

/// Precomputed per-item geometry for one pyramid level. `motion` maps
/// current-frame coordinates into the previous frame.
#[derive(Debug, Clone)]
pub struct LevelGeometry {
    pub motions: Vec<MotionTransform>,
    pub intrs: Vec<CameraIntrinsics>,
    pub max_depth: f64,
    parallax: Vec<ParallaxField>,
    reprojection: Vec<ReprojectionField>,
}

impl LevelGeometry {
    /// One motion and one camera (all of the same image size) per item.
    pub fn new(
        motions: &[MotionTransform],
        intrs: &[CameraIntrinsics],
        max_depth: f64,
        reading: DenominatorReading,
    ) -> Self {
        assert_eq!(motions.len(), intrs.len(), "one camera per motion");
        assert!(
            intrs.windows(2).all(|p| (p[0].width, p[0].height) == (p[1].width, p[1].height)),
            "cameras in a batch must share the image size"
        );
        LevelGeometry {
            motions: motions.to_vec(),
            intrs: intrs.to_vec(),
            max_depth,
            parallax: motions
                .iter()
                .zip(intrs)
                .map(|(m, k)| ParallaxField::new(m, k, reading))
                .collect(),
            reprojection: motions
                .iter()
                .zip(intrs)
                .map(|(m, k)| ReprojectionField::new(m, k))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    fn check<T: Real>(&self, t: &Tensor<T>, channels: usize) {
        let [n, c, h, w] = t.dims();
        assert_eq!(n, self.len(), "geometry holds {} items, tensor {n}", self.len());
        assert_eq!(c, channels, "expected {channels} channels, found {c}");
        if let Some(k) = self.intrs.first() {
            assert_eq!((h, w), (k.height, k.width), "tensor and intrinsics disagree");
        }
    }
}

/// Depth from parallax; degenerate pixels give `max_depth` and no gradient.
pub fn depth_from_parallax_op<T: Real>(tape: &mut Tape<T>, rho: Var, geo: &LevelGeometry) -> Var {
    let rv = tape.value(rho);
    geo.check(rv, 1);
    let plane = rv.plane();
    let mut out = Tensor::zeros(rv.dims());
    let mut deriv = Tensor::zeros(rv.dims());
    for (ni, field) in geo.parallax.iter().enumerate() {
        for p in 0..plane {
            let (z, dz, _) = field.depth_with_grad(p, rv.data()[ni * plane + p].as_f64(), geo.max_depth);
            out.data_mut()[ni * plane + p] = T::of(z);
            deriv.data_mut()[ni * plane + p] = T::of(dz);
        }
    }
    tape.op(out, &[rho], move |ctx| vec![Some(ctx.grad.zip_map(&deriv, |g, d| g * d))])
}

/// Parallax from depth; non-positive depths and degenerate pixels give 0.
pub fn parallax_from_depth_op<T: Real>(tape: &mut Tape<T>, z: Var, geo: &LevelGeometry) -> Var {
    let zv = tape.value(z);
    geo.check(zv, 1);
    let plane = zv.plane();
    let mut out = Tensor::zeros(zv.dims());
    let mut deriv = Tensor::zeros(zv.dims());
    for (ni, field) in geo.parallax.iter().enumerate() {
        for p in 0..plane {
            let depth = zv.data()[ni * plane + p].as_f64();
            if !(depth > 0.0) {
                continue;
            }
            if let Some((rho, drho)) = field.parallax_with_grad(p, depth) {
                out.data_mut()[ni * plane + p] = T::of(rho);
                deriv.data_mut()[ni * plane + p] = T::of(drho);
            }
        }
    }
    tape.op(out, &[z], move |ctx| vec![Some(ctx.grad.zip_map(&deriv, |g, d| g * d))])
}

/// Previous-frame pixel coordinates `(qi, qj)` of every current pixel at
/// depth `z`, as two channels.
pub fn reproject_op<T: Real>(tape: &mut Tape<T>, z: Var, geo: &LevelGeometry) -> Var {
    let zv = tape.value(z);
    geo.check(zv, 1);
    let [n, _, h, w] = zv.dims();
    let plane = h * w;
    let mut out = Tensor::zeros([n, 2, h, w]);
    let mut deriv = Tensor::zeros([n, 2, h, w]);
    for (ni, field) in geo.reprojection.iter().enumerate() {
        for p in 0..plane {
            let depth = zv.data()[ni * plane + p].as_f64();
            let (qi, qj, di, dj) = field
                .reproject_with_grad(p, depth)
                .unwrap_or((INVALID_COORD, INVALID_COORD, 0.0, 0.0));
            let base = ni * 2 * plane + p;
            out.data_mut()[base] = T::of(qi);
            out.data_mut()[base + plane] = T::of(qj);
            deriv.data_mut()[base] = T::of(di);
            deriv.data_mut()[base + plane] = T::of(dj);
        }
    }
    tape.op(out, &[z], move |ctx| {
        let mut dz = Tensor::zeros([n, 1, h, w]);
        for ni in 0..n {
            let dst = dz.channel_mut(ni, 0);
            for c in 0..2 {
                let (g, d) = (ctx.grad.channel(ni, c), deriv.channel(ni, c));
                for p in 0..plane {
                    dst[p] += g[p] * d[p];
                }
            }
        }
        vec![Some(dz)]
    })
}

struct Tap<T> {
    idx: [usize; 4],
    weights: [T; 4],
    /// Weight derivatives in `qi` and `qj`.
    dwi: [T; 4],
    dwj: [T; 4],
}

fn tap<T: Real>(qi: T, qj: T, w: usize, h: usize) -> Option<Tap<T>> {
    let (i0, j0, fi, fj) = bilinear_tap(qi.as_f64(), qj.as_f64(), w, h)?;
    let i1 = (i0 + 1).min(w - 1);
    let j1 = (j0 + 1).min(h - 1);
    let (fi, fj) = (T::of(fi), T::of(fj));
    let one = T::one();
    Some(Tap {
        idx: [j0 * w + i0, j0 * w + i1, j1 * w + i0, j1 * w + i1],
        weights: [(one - fi) * (one - fj), fi * (one - fj), (one - fi) * fj, fi * fj],
        dwi: [-(one - fj), one - fj, -fj, fj],
        dwj: [-(one - fi), -fi, one - fi, fi],
    })
}

/// Bilinear sampling of `src` at per-pixel coordinates `coords` (two
/// channels). Out-of-bounds samples are 0 with no gradient.
pub fn bilinear_sample_op<T: Real>(tape: &mut Tape<T>, src: Var, coords: Var) -> Var {
    let (sv, cv) = (tape.value(src), tape.value(coords));
    let [n, c, h, w] = sv.dims();
    assert_eq!(cv.dims(), [n, 2, h, w], "bilinear_sample: coordinate dims");
    let plane = h * w;
    let mut out = Tensor::zeros(sv.dims());
    for ni in 0..n {
        let (ci_, cj_) = (cv.channel(ni, 0), cv.channel(ni, 1));
        for p in 0..plane {
            let Some(t) = tap(ci_[p], cj_[p], w, h) else { continue };
            for ch in 0..c {
                let s = sv.channel(ni, ch);
                let v = (0..4).map(|k| s[t.idx[k]] * t.weights[k]).sum::<T>();
                out.data_mut()[(ni * c + ch) * plane + p] = v;
            }
        }
    }
    tape.op(out, &[src, coords], move |ctx| {
        let (sv, cv, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let mut dsrc = ctx.needs[0].then(|| Tensor::zeros(sv.dims()));
        let mut dcoord = ctx.needs[1].then(|| Tensor::zeros(cv.dims()));
        for ni in 0..n {
            for p in 0..plane {
                let Some(t) = tap(cv.channel(ni, 0)[p], cv.channel(ni, 1)[p], w, h) else {
                    continue;
                };
                let (mut gi, mut gj) = (T::zero(), T::zero());
                for ch in 0..c {
                    let gv = g.channel(ni, ch)[p];
                    if let Some(ds) = dsrc.as_mut() {
                        let dst = ds.channel_mut(ni, ch);
                        for k in 0..4 {
                            dst[t.idx[k]] += gv * t.weights[k];
                        }
                    }
                    let s = sv.channel(ni, ch);
                    for k in 0..4 {
                        gi += gv * s[t.idx[k]] * t.dwi[k];
                        gj += gv * s[t.idx[k]] * t.dwj[k];
                    }
                }
                if let Some(dc) = dcoord.as_mut() {
                    dc.channel_mut(ni, 0)[p] = gi;
                    dc.channel_mut(ni, 1)[p] = gj;
                }
            }
        }
        vec![dsrc, dcoord]
    })
}

/// Depth in the current frame of the previous-frame point seen at pixel
/// `coords` with depth `z_prev`. Pixels with no valid previous depth give 0.
pub fn depth_into_current_op<T: Real>(
    tape: &mut Tape<T>,
    z_prev: Var,
    coords: Var,
    geo: &LevelGeometry,
) -> Var {
    let (zv, cv) = (tape.value(z_prev), tape.value(coords));
    geo.check(zv, 1);
    let [n, _, h, w] = zv.dims();
    let plane = h * w;
    // Current-frame z of a previous-frame point x is m . (x - t) with m the
    // third row of the inverse rotation.
    let rows: Vec<([f64; 3], f64)> = geo
        .motions
        .iter()
        .map(|mt| {
            let r = mt.rotation;
            let m = [r[(0, 2)], r[(1, 2)], r[(2, 2)]];
            let t = mt.translation;
            (m, m[0] * t.x + m[1] * t.y + m[2] * t.z)
        })
        .collect();
    let mut out = Tensor::zeros([n, 1, h, w]);
    let mut dz = Tensor::zeros([n, 1, h, w]);
    let mut dq = Tensor::zeros([n, 2, h, w]);
    for (ni, &(m, mt)) in rows.iter().enumerate() {
        let intr = &geo.intrs[ni];
        for p in 0..plane {
            let zp = zv.data()[ni * plane + p].as_f64();
            let qi = cv.channel(ni, 0)[p].as_f64();
            let qj = cv.channel(ni, 1)[p].as_f64();
            if !(zp > 0.0) || qi <= INVALID_COORD / 2.0 {
                continue;
            }
            let ray = [(qi - intr.cx) / intr.fx, (qj - intr.cy) / intr.fy, 1.0];
            let proj = m[0] * ray[0] + m[1] * ray[1] + m[2];
            let zt = zp * proj - mt;
            if !(zt > 0.0) {
                continue;
            }
            out.data_mut()[ni * plane + p] = T::of(zt);
            dz.data_mut()[ni * plane + p] = T::of(proj);
            dq.channel_mut(ni, 0)[p] = T::of(zp * m[0] / intr.fx);
            dq.channel_mut(ni, 1)[p] = T::of(zp * m[1] / intr.fy);
        }
    }
    tape.op(out, &[z_prev, coords], move |ctx| {
        let g = ctx.grad;
        let dzp = ctx.needs[0].then(|| g.zip_map(&dz, |a, b| a * b));
        let dc = ctx.needs[1].then(|| {
            let mut d = Tensor::zeros([n, 2, h, w]);
            for ni in 0..n {
                let gc = g.channel(ni, 0);
                for c in 0..2 {
                    let src = dq.channel(ni, c);
                    for (o, (&a, &b)) in d.channel_mut(ni, c).iter_mut().zip(gc.iter().zip(src)) {
                        *o = a * b;
                    }
                }
            }
            d
        });
        vec![dzp, dc]
    })
}

/// Multiplicative factor of candidate `k` out of `count`, centered on 1.
pub fn candidate_factor(k: usize, count: usize, step: f64) -> f64 {
    step.powi(k as i32 - (count / 2) as i32)
}

/// Parallax sweeping cost volume: for each candidate parallax the previous
/// features are warped into the current frame and correlated with the
/// current features.
pub fn pscv_op<T: Real>(
    tape: &mut Tape<T>,
    f_t: Var,
    f_prev: Var,
    rho_est: Var,
    geo: &LevelGeometry,
    candidates: usize,
    step: f64,
) -> Var {
    let costs: Vec<Var> = (0..candidates)
        .map(|k| {
            let rho = scale(tape, rho_est, candidate_factor(k, candidates, step));
            let z = depth_from_parallax_op(tape, rho, geo);
            let q = reproject_op(tape, z, geo);
            let warped = bilinear_sample_op(tape, f_prev, q);
            channel_dot_op(tape, f_t, warped)
        })
        .collect();
    concat(tape, &costs)
}

/// Plain PSCV evaluation. The flag is set when some item's motion has no
/// translation, in which case every candidate maps to the same depth and
/// that item's volume is uniform across candidates.
pub fn pscv<T: Real>(
    f_t: &Tensor<T>,
    f_prev: &Tensor<T>,
    rho_est: &Tensor<T>,
    geo: &LevelGeometry,
    candidates: usize,
    step: f64,
) -> (Tensor<T>, bool) {
    let mut tape = Tape::new();
    let (a, b, r) = (
        tape.constant(f_t.clone()),
        tape.constant(f_prev.clone()),
        tape.constant(rho_est.clone()),
    );
    let out = pscv_op(&mut tape, a, b, r, geo, candidates, step);
    let degenerate = geo.motions.iter().any(|m| !m.has_translation());
    (tape.value(out).clone(), degenerate)
}
