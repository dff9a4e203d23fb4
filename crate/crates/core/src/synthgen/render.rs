//! Ray casting against the triangulated terrain and analytic primitives.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};

use super::scene::{HeightFunction, Primitive, SceneSpec, Shape, TerrainSpec};
use crate::classes::Class;
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, DepthMap, Pose};

/// Nearest intersection along a ray: parameter, unit normal, class, color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: Vector3<f64>,
    pub class: u8,
    pub color: [u8; 3],
}

/// Ray-box intersection in the box frame (slab method). Returns the entry
/// parameter (or exit when the origin is inside) and the face normal.
pub fn intersect_box(origin: &Vector3<f64>, dir: &Vector3<f64>, half: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let t1 = (-half[a] - origin[a]) / dir[a];
        let t2 = (half[a] - origin[a]) / dir[a];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > t_near {
            t_near = lo;
            near_axis = a;
        }
        if hi < t_far {
            t_far = hi;
            far_axis = a;
        }
    }
    if t_near > t_far || t_far <= 0.0 {
        return None;
    }
    let (t, axis) = if t_near > 0.0 { (t_near, near_axis) } else { (t_far, far_axis) };
    let mut n = Vector3::zeros();
    n[axis] = if t_near > 0.0 { -dir[axis].signum() } else { dir[axis].signum() };
    Some((t, n))
}

pub fn intersect_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, radius: f64) -> Option<(f64, Vector3<f64>)> {
    let a = dir.dot(dir);
    let b = origin.dot(dir);
    let c = origin.dot(origin) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / a;
    let t1 = (-b + sq) / a;
    let t = if t0 > 0.0 { t0 } else if t1 > 0.0 { t1 } else { return None };
    Some((t, (origin + dir * t) / radius))
}

/// Cone with base disk of radius `r` at local z = 0 and apex at z = `h`.
pub fn intersect_cone(origin: &Vector3<f64>, dir: &Vector3<f64>, r: f64, h: f64) -> Option<(f64, Vector3<f64>)> {
    let k = r / h;
    let k2 = k * k;
    // x^2 + y^2 = k^2 (h - z)^2 for 0 <= z <= h.
    let hz = h - origin.z;
    let a = dir.x * dir.x + dir.y * dir.y - k2 * dir.z * dir.z;
    let b = origin.x * dir.x + origin.y * dir.y + k2 * hz * dir.z;
    let c = origin.x * origin.x + origin.y * origin.y - k2 * hz * hz;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, n: Vector3<f64>| {
        if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };
    let lateral = |t: f64| {
        let p = origin + dir * t;
        if p.z >= 0.0 && p.z <= h {
            let radial = (p.x * p.x + p.y * p.y).sqrt();
            let n = if radial > 0.0 {
                Vector3::new(p.x / radial, p.y / radial, k).normalize()
            } else {
                Vector3::z()
            };
            Some((t, n))
        } else {
            None
        }
    };
    if a.abs() > 1e-14 {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if let Some((t, n)) = lateral(t) {
                    consider(t, n);
                }
            }
        }
    } else if b.abs() > 1e-14 {
        if let Some((t, n)) = lateral(-c / (2.0 * b)) {
            consider(t, n);
        }
    }
    if dir.z.abs() > 1e-300 {
        let t = -origin.z / dir.z;
        let p = origin + dir * t;
        if p.x * p.x + p.y * p.y <= r * r {
            consider(t, -Vector3::z());
        }
    }
    best
}

/// Rectangle `|x| <= sx / 2, |y| <= sy / 2` in the local z = 0 plane.
pub fn intersect_patch(origin: &Vector3<f64>, dir: &Vector3<f64>, sx: f64, sy: f64) -> Option<(f64, Vector3<f64>)> {
    if dir.z.abs() < 1e-300 {
        return None;
    }
    let t = -origin.z / dir.z;
    if t <= 0.0 {
        return None;
    }
    let p = origin + dir * t;
    if p.x.abs() <= 0.5 * sx && p.y.abs() <= 0.5 * sy {
        Some((t, Vector3::new(0.0, 0.0, -dir.z.signum())))
    } else {
        None
    }
}

/// Möller-Trumbore; returns the parameter and the unnormalized normal.
fn intersect_triangle(o: &Vector3<f64>, d: &Vector3<f64>, v0: &Vector3<f64>, v1: &Vector3<f64>, v2: &Vector3<f64>) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - v0;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

struct Terrain {
    spec: TerrainSpec,
    cells: usize,
    heights: Vec<f64>,
    z_min: f64,
    z_max: f64,
}

impl Terrain {
    fn new(spec: &TerrainSpec, seed: u64) -> Self {
        let f = HeightFunction::new(spec, seed);
        let cells = (2.0 * spec.half_extent / spec.spacing).ceil() as usize;
        let mut heights = Vec::with_capacity((cells + 1) * (cells + 1));
        for iy in 0..=cells {
            for ix in 0..=cells {
                let (x, y) = (-spec.half_extent + ix as f64 * spec.spacing, -spec.half_extent + iy as f64 * spec.spacing);
                heights.push(f.height(x, y));
            }
        }
        let z_min = heights.iter().copied().fold(f64::INFINITY, f64::min);
        let z_max = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Terrain { spec: spec.clone(), cells, heights, z_min, z_max }
    }

    fn vertex(&self, ix: usize, iy: usize) -> Vector3<f64> {
        Vector3::new(
            -self.spec.half_extent + ix as f64 * self.spec.spacing,
            -self.spec.half_extent + iy as f64 * self.spec.spacing,
            self.heights[iy * (self.cells + 1) + ix],
        )
    }

    fn cell_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>, ix: usize, iy: usize) -> Option<(f64, Vector3<f64>)> {
        let v00 = self.vertex(ix, iy);
        let v10 = self.vertex(ix + 1, iy);
        let v01 = self.vertex(ix, iy + 1);
        let v11 = self.vertex(ix + 1, iy + 1);
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for (a, b, c) in [(&v00, &v10, &v11), (&v00, &v11, &v01)] {
            if let Some(t) = intersect_triangle(o, d, a, b, c) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    let mut n = (b - a).cross(&(c - a)).normalize();
                    if n.z < 0.0 {
                        n = -n;
                    }
                    best = Some((t, n));
                }
            }
        }
        best
    }

    /// Grid traversal in the xy plane, clipped to the terrain's height band.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let lo = Vector3::new(-self.spec.half_extent, -self.spec.half_extent, self.z_min - 1e-6);
        let span = self.cells as f64 * self.spec.spacing;
        let hi = Vector3::new(lo.x + span, lo.y + span, self.z_max + 1e-6);
        let mut t0: f64 = 0.0;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if d[a].abs() < 1e-300 {
                if o[a] < lo[a] || o[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let ta = (lo[a] - o[a]) / d[a];
            let tb = (hi[a] - o[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if t0 > t1 {
            return None;
        }
        let s = self.spec.spacing;
        let start = o + d * t0;
        let clampi = |v: f64| ((v / s).floor().max(0.0) as usize).min(self.cells - 1);
        let mut ix = clampi(start.x - lo.x);
        let mut iy = clampi(start.y - lo.y);
        let step_x: isize = if d.x > 0.0 { 1 } else { -1 };
        let step_y: isize = if d.y > 0.0 { 1 } else { -1 };
        let next_boundary = |i: usize, step: isize, origin: f64, dir: f64, base: f64| {
            if dir.abs() < 1e-300 {
                return f64::INFINITY;
            }
            let edge = base + (i as f64 + if step > 0 { 1.0 } else { 0.0 }) * s;
            (edge - origin) / dir
        };
        let mut t_max_x = next_boundary(ix, step_x, o.x, d.x, lo.x);
        let mut t_max_y = next_boundary(iy, step_y, o.y, d.y, lo.y);
        let t_delta_x = if d.x.abs() < 1e-300 { f64::INFINITY } else { s / d.x.abs() };
        let t_delta_y = if d.y.abs() < 1e-300 { f64::INFINITY } else { s / d.y.abs() };
        loop {
            let cell_exit = t_max_x.min(t_max_y).min(t1);
            // A cell's triangles lie inside its footprint, so the first cell
            // with a hit holds the nearest one.
            if let Some(hit) = self.cell_hit(o, d, ix, iy) {
                return Some(hit);
            }
            if cell_exit >= t1 {
                return None;
            }
            if t_max_x < t_max_y {
                let nx = ix as isize + step_x;
                if nx < 0 || nx >= self.cells as isize {
                    return None;
                }
                ix = nx as usize;
                t_max_x += t_delta_x;
            } else {
                let ny = iy as isize + step_y;
                if ny < 0 || ny >= self.cells as isize {
                    return None;
                }
                iy = ny as usize;
                t_max_y += t_delta_y;
            }
        }
    }
}

struct PreparedPrimitive {
    prim: Primitive,
    /// World-to-local rotation.
    inv_rot: Matrix3<f64>,
    rot: Matrix3<f64>,
    center: Vector3<f64>,
    bound: f64,
}

/// A scene prepared for repeated ray casting.
pub struct Renderer {
    spec: SceneSpec,
    terrain: Option<Terrain>,
    prims: Vec<PreparedPrimitive>,
    sun: Vector3<f64>,
}

impl Renderer {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let prims = spec
            .primitives
            .iter()
            .map(|p| {
                let rot = p.pose.rotation();
                let bound = match p.shape {
                    Shape::Box => 0.5 * p.size.norm(),
                    Shape::Sphere => p.size.x,
                    Shape::Cone => (p.size.x * p.size.x + p.size.z * p.size.z).sqrt(),
                    Shape::PlanePatch => 0.5 * (p.size.x * p.size.x + p.size.y * p.size.y).sqrt(),
                };
                PreparedPrimitive { prim: p.clone(), inv_rot: rot.transpose(), rot, center: p.pose.position, bound }
            })
            .collect();
        Ok(Renderer {
            spec: spec.clone(),
            terrain: spec.terrain.as_ref().map(|t| Terrain::new(t, spec.seed)),
            prims,
            sun: spec.sun_direction.normalize(),
        })
    }

    /// Nearest hit along `origin + t * dir`, `t > 0`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let dd = dir.dot(dir);
        for pp in &self.prims {
            // Bounding-sphere rejection.
            let oc = pp.center - origin;
            let tc = oc.dot(dir) / dd;
            let closest = (oc - dir * tc).norm();
            if closest > pp.bound + 1e-9 {
                continue;
            }
            let lo = pp.inv_rot * (origin - pp.center);
            let ld = pp.inv_rot * dir;
            let p = &pp.prim;
            let hit = match p.shape {
                Shape::Box => intersect_box(&lo, &ld, &(p.size * 0.5)),
                Shape::Sphere => intersect_sphere(&lo, &ld, p.size.x),
                Shape::Cone => intersect_cone(&lo, &ld, p.size.x, p.size.z),
                Shape::PlanePatch => intersect_patch(&lo, &ld, p.size.x, p.size.y),
            };
            if let Some((t, n)) = hit {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, normal: pp.rot * n, class: p.class, color: p.color });
                }
            }
        }
        if let (Some(terrain), Some(tspec)) = (&self.terrain, &self.spec.terrain) {
            if let Some((t, n)) = terrain.intersect(origin, dir) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, normal: n, class: tspec.class, color: tspec.color });
                }
            }
        }
        best
    }

    fn shade(&self, hit: &Hit) -> [u8; 3] {
        let lambert = hit.normal.dot(&self.sun).abs();
        let f = self.spec.ambient + (1.0 - self.spec.ambient) * lambert;
        hit.color.map(|c| (c as f64 * f).round().clamp(0.0, 255.0) as u8)
    }

    /// Renders one frame. Depth is the optical-axis distance of the nearest
    /// hit; rays that miss, or hit at `max_depth` or beyond, are sky.
    pub fn render(&self, pose: &Pose, intr: &CameraIntrinsics, max_depth: f64) -> Result<RenderedFrame> {
        pose.validate()?;
        intr.validate()?;
        let rot = pose.rotation();
        let (w, h) = (intr.width, intr.height);
        let mut rgb = Array3::zeros((h, w, 3));
        let mut depth = Array2::from_elem((h, w), max_depth);
        let mut seg = Array2::from_elem((h, w), Class::Sky.index());
        for j in 0..h {
            for i in 0..w {
                // Camera-frame ray with unit z, so the hit parameter is the
                // optical-axis depth.
                let dir = rot * intr.ray(i as f64, j as f64);
                let color = match self.cast(&pose.position, &dir) {
                    Some(hit) if hit.t < max_depth => {
                        depth[[j, i]] = hit.t;
                        seg[[j, i]] = hit.class;
                        self.shade(&hit)
                    }
                    _ => self.spec.sky_color,
                };
                for c in 0..3 {
                    rgb[[j, i, c]] = color[c];
                }
            }
        }
        Ok(RenderedFrame { rgb, depth: DepthMap::new(depth, max_depth)?, seg })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub rgb: Array3<u8>,
    pub depth: DepthMap,
    pub seg: Array2<u8>,
}
