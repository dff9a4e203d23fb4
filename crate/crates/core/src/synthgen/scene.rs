use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{Class, DEFAULT_PALETTE, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// Centered at the pose; `size` holds the full extents.
    Box,
    /// Centered at the pose; radius `size.x`.
    Sphere,
    /// Base centered at the pose, apex along local +z; base radius `size.x`,
    /// height `size.z`.
    Cone,
    /// Rectangle centered at the pose with normal along local +z; extents
    /// `size.x` by `size.y`.
    PlanePatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: Pose,
    pub size: Vector3<f64>,
    pub class: u8,
    pub color: [u8; 3],
}

/// Sum of planar sinusoids sampled on a square grid and triangulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    /// Peak height of the largest wave, meters.
    pub amplitude: f64,
    /// Spatial frequency of the largest wave, cycles per meter.
    pub frequency: f64,
    /// Grid covers `[-half_extent, half_extent]^2` around the origin.
    pub half_extent: f64,
    /// Grid spacing, meters.
    pub spacing: f64,
    pub class: u8,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub terrain: Option<TerrainSpec>,
    pub primitives: Vec<Primitive>,
    pub sky_color: [u8; 3],
    pub class_palette: [[u8; 3]; NUM_CLASSES],
    /// Direction towards the sun, world frame.
    pub sun_direction: Vector3<f64>,
    pub ambient: f64,
}

impl SceneSpec {
    pub fn empty(seed: u64) -> Self {
        SceneSpec {
            seed,
            terrain: None,
            primitives: Vec::new(),
            sky_color: DEFAULT_PALETTE[Class::Sky as usize],
            class_palette: DEFAULT_PALETTE,
            sun_direction: Vector3::new(0.4, 0.3, 1.0).normalize(),
            ambient: 0.35,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.primitives.iter().enumerate() {
            if p.class as usize >= NUM_CLASSES {
                return Err(Error::Config(format!("primitive {k} has class {} outside [0, 8]", p.class)));
            }
            if !p.size.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!("primitive {k} needs positive sizes")));
            }
            p.pose.validate()?;
        }
        if let Some(t) = &self.terrain {
            if t.class as usize >= NUM_CLASSES {
                return Err(Error::Config(format!("terrain class {} outside [0, 8]", t.class)));
            }
            if !(t.spacing > 0.0) || !(t.half_extent > t.spacing) || !(t.amplitude >= 0.0) {
                return Err(Error::Config("terrain needs spacing > 0 and an extent wider than one cell".into()));
            }
        }
        if !(self.sun_direction.norm() > 0.0) || !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::Config("sun direction must be nonzero and ambient in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Wave components of the terrain height function, derived from the seed.
#[derive(Debug, Clone)]
pub struct HeightFunction {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl HeightFunction {
    pub fn new(spec: &TerrainSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e77_a1b5);
        let waves = (0..4)
            .map(|octave| {
                let scale = 0.5f64.powi(octave);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU * spec.frequency / scale;
                (spec.amplitude * scale, k * angle.cos(), k * angle.sin(), phase)
            })
            .collect();
        HeightFunction { waves }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|&(a, kx, ky, ph)| a * (kx * x + ky * y + ph).sin()).sum()
    }

    /// Bound on `|height|`.
    pub fn bound(&self) -> f64 {
        self.waves.iter().map(|w| w.0.abs()).sum()
    }
}

/// Rotation about the world z axis.
pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).into_inner()
}

/// Procedural scene families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    Rural,
    Urban,
    Coastal,
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], spread: i32) -> [u8; 3] {
    base.map(|c| (c as i32 + rng.random_range(-spread..=spread)).clamp(0, 255) as u8)
}

impl SceneSpec {
    /// A terrain with scattered objects; the camera region of interest is
    /// `[-half_extent, half_extent]^2`.
    pub fn procedural(seed: u64, kind: SceneKind, half_extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = SceneSpec::empty(seed);
        let pal = scene.class_palette;
        let terrain = TerrainSpec {
            amplitude: match kind {
                SceneKind::Rural => 3.0,
                SceneKind::Urban => 1.0,
                SceneKind::Coastal => 2.0,
            },
            frequency: 1.0 / 60.0,
            half_extent: half_extent + 40.0,
            spacing: 2.0,
            class: Class::Land.index(),
            color: pal[Class::Land as usize],
        };
        let heights = HeightFunction::new(&terrain, seed);
        let ground = |x: f64, y: f64| heights.height(x, y);
        let mut prims = Vec::new();
        let area = (2.0 * half_extent).powi(2);
        let density = |per_hectare: f64| (area / 10_000.0 * per_hectare).round() as usize;
        let place = |rng: &mut ChaCha8Rng| {
            (rng.random_range(-half_extent..half_extent), rng.random_range(-half_extent..half_extent))
        };

        if kind == SceneKind::Coastal {
            // Sea covering the low side of the region.
            let level = ground(0.0, 0.0) - 0.5;
            prims.push(Primitive {
                shape: Shape::PlanePatch,
                pose: Pose::from_rotation(Vector3::new(-half_extent * 0.6, 0.0, level), &Matrix3::identity()),
                size: Vector3::new(half_extent * 1.6, 2.0 * half_extent + 80.0, 1.0),
                class: Class::Water.index(),
                color: pal[Class::Water as usize],
            });
        } else {
            let n_ponds = density(0.3).max(1);
            for _ in 0..n_ponds {
                let (x, y) = place(&mut rng);
                let s = rng.random_range(10.0..25.0);
                prims.push(Primitive {
                    shape: Shape::PlanePatch,
                    pose: Pose::from_rotation(Vector3::new(x, y, ground(x, y) + 0.6), &yaw_rotation(rng.random_range(0.0..3.2))),
                    size: Vector3::new(s, s * rng.random_range(0.5..1.0), 1.0),
                    class: Class::Water.index(),
                    color: jitter(&mut rng, pal[Class::Water as usize], 10),
                });
            }
        }

        // Roads: long slabs following the ground.
        let n_roads = match kind {
            SceneKind::Urban => 4,
            _ => 2,
        };
        for r in 0..n_roads {
            let yaw = if r % 2 == 0 { 0.0 } else { std::f64::consts::FRAC_PI_2 } + rng.random_range(-0.2..0.2);
            let (x, y) = place(&mut rng);
            let len = 2.0 * half_extent + 60.0;
            let width = rng.random_range(6.0..10.0);
            let (lo, hi) = slab_range(&ground, x, y, yaw, len, width);
            prims.push(Primitive {
                shape: Shape::Box,
                pose: Pose::from_rotation(Vector3::new(x, y, 0.5 * (lo - 1.0 + hi + 0.3)), &yaw_rotation(yaw)),
                size: Vector3::new(len, width, hi + 0.3 - (lo - 1.0)),
                class: Class::Road.index(),
                color: jitter(&mut rng, pal[Class::Road as usize], 8),
            });
        }

        let (buildings, trees, rocks, vehicles, others) = match kind {
            SceneKind::Rural => (1.5, 14.0, 3.0, 1.0, 0.5),
            SceneKind::Urban => (10.0, 4.0, 0.5, 4.0, 1.5),
            SceneKind::Coastal => (2.0, 6.0, 5.0, 1.0, 0.5),
        };
        for _ in 0..density(buildings) {
            let (x, y) = place(&mut rng);
            let size = Vector3::new(rng.random_range(6.0..16.0), rng.random_range(6.0..16.0), rng.random_range(4.0..15.0));
            let yaw = rng.random_range(0.0..3.2);
            let (lo, _) = slab_range(&ground, x, y, yaw, size.x, size.y);
            let base = lo - 0.5;
            prims.push(Primitive {
                shape: Shape::Box,
                pose: Pose::from_rotation(Vector3::new(x, y, base + 0.5 * size.z), &yaw_rotation(yaw)),
                size,
                class: Class::Building.index(),
                color: jitter(&mut rng, pal[Class::Building as usize], 25),
            });
        }
        for _ in 0..density(trees) {
            let (x, y) = place(&mut rng);
            let z = ground(x, y);
            let color = jitter(&mut rng, pal[Class::Trees as usize], 20);
            if rng.random_bool(0.5) {
                let r = rng.random_range(1.5..3.5);
                prims.push(Primitive {
                    shape: Shape::Cone,
                    pose: Pose::from_rotation(Vector3::new(x, y, z - 0.5), &Matrix3::identity()),
                    size: Vector3::new(r, r, rng.random_range(5.0..11.0)),
                    class: Class::Trees.index(),
                    color,
                });
            } else {
                let r = rng.random_range(2.0..4.0);
                prims.push(Primitive {
                    shape: Shape::Sphere,
                    pose: Pose::from_rotation(Vector3::new(x, y, z + r * 0.8), &Matrix3::identity()),
                    size: Vector3::new(r, r, r),
                    class: Class::Trees.index(),
                    color,
                });
            }
        }
        for _ in 0..density(rocks) {
            let (x, y) = place(&mut rng);
            let r = rng.random_range(0.8..2.5);
            prims.push(Primitive {
                shape: Shape::Sphere,
                pose: Pose::from_rotation(Vector3::new(x, y, ground(x, y)), &Matrix3::identity()),
                size: Vector3::new(r, r, r),
                class: Class::Rocks.index(),
                color: jitter(&mut rng, pal[Class::Rocks as usize], 20),
            });
        }
        for _ in 0..density(vehicles) {
            let (x, y) = place(&mut rng);
            let size = Vector3::new(4.5, 2.0, 1.6);
            let yaw = rng.random_range(0.0..3.2);
            let (lo, _) = slab_range(&ground, x, y, yaw, size.x, size.y);
            prims.push(Primitive {
                shape: Shape::Box,
                pose: Pose::from_rotation(Vector3::new(x, y, lo + 0.5 * size.z), &yaw_rotation(yaw)),
                size,
                class: Class::Vehicle.index(),
                color: jitter(&mut rng, pal[Class::Vehicle as usize], 30),
            });
        }
        for _ in 0..density(others) {
            let (x, y) = place(&mut rng);
            let size = Vector3::new(rng.random_range(1.0..3.0), rng.random_range(1.0..3.0), rng.random_range(2.0..6.0));
            let (lo, _) = slab_range(&ground, x, y, 0.0, size.x, size.y);
            prims.push(Primitive {
                shape: Shape::Box,
                pose: Pose::from_rotation(Vector3::new(x, y, lo + 0.5 * size.z), &Matrix3::identity()),
                size,
                class: Class::Others.index(),
                color: jitter(&mut rng, pal[Class::Others as usize], 20),
            });
        }
        scene.terrain = Some(terrain);
        scene.primitives = prims;
        scene
    }
}

/// Lowest and highest ground height under a yawed rectangle footprint.
fn slab_range(ground: &impl Fn(f64, f64) -> f64, x: f64, y: f64, yaw: f64, len: f64, width: f64) -> (f64, f64) {
    let (c, s) = (yaw.cos(), yaw.sin());
    let steps = ((len.max(width) / 2.0).ceil() as usize).max(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..=steps {
        for b in 0..=2 {
            let u = (a as f64 / steps as f64 - 0.5) * len;
            let v = (b as f64 / 2.0 - 0.5) * width;
            let h = ground(x + c * u - s * v, y + s * u + c * v);
            lo = lo.min(h);
            hi = hi.max(h);
        }
    }
    (lo, hi)
}
