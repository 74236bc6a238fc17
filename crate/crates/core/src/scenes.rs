//! Synthetic multi-view datasets of star-shaped analytic targets.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EnsError, Result};
use crate::geometry::{icosphere, Mesh, Vec3};
use crate::render::{Camera, FloatImage};

pub const DATASET_VERSION: u32 = 1;
/// Ray-surface bisection tolerance in scene units.
pub const HIT_TOLERANCE: f64 = 1e-7;
const MARCH_STEP: f64 = 2e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetShape {
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// `radius + amplitude * Re((x + iy)^l)` over unit directions.
    BumpySphere { radius: f64, amplitude: f64, frequency: u32 },
    RoundedBox { half_extents: [f64; 3], radius: f64 },
}

impl TargetShape {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Ellipsoid { a, b, c } => *a > 0.0 && *b > 0.0 && *c > 0.0,
            Self::BumpySphere { radius, amplitude, .. } => *radius > 0.0 && amplitude.abs() < *radius,
            Self::RoundedBox { half_extents, radius } => {
                *radius >= 0.0 && half_extents.iter().all(|&h| h > 0.0 && h >= *radius)
            }
        };
        if !ok {
            return Err(EnsError::Argument(format!("invalid shape parameters: {self:?}")));
        }
        if self.max_radius() > 1.0 + 1e-12 {
            return Err(EnsError::Argument(format!(
                "shape reaches radius {:.4}; targets must fit in the unit ball",
                self.max_radius()
            )));
        }
        Ok(())
    }

    /// Rounded-box signed distance; negative inside.
    fn box_sdf(half: &[f64; 3], radius: f64, p: &Vec3) -> f64 {
        let q = Vec3::new(p.x.abs() - half[0] + radius, p.y.abs() - half[1] + radius, p.z.abs() - half[2] + radius);
        let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
        outside + q.x.max(q.y).max(q.z).min(0.0) - radius
    }

    /// Surface radius along unit direction `d`.
    pub fn radial(&self, d: &Vec3) -> f64 {
        match self {
            Self::Ellipsoid { a, b, c } => 1.0 / ((d.x / a).powi(2) + (d.y / b).powi(2) + (d.z / c).powi(2)).sqrt(),
            Self::BumpySphere {
                radius,
                amplitude,
                frequency,
            } => {
                let (mut re, mut im) = (1.0, 0.0);
                for _ in 0..*frequency {
                    (re, im) = (re * d.x - im * d.y, re * d.y + im * d.x);
                }
                radius + amplitude * re
            }
            Self::RoundedBox { half_extents, radius } => {
                let (mut lo, mut hi) = (0.0, self.max_radius() * 1.01);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if Self::box_sdf(half_extents, *radius, &(d * mid)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn max_radius(&self) -> f64 {
        match self {
            Self::Ellipsoid { a, b, c } => a.max(*b).max(*c),
            Self::BumpySphere { radius, amplitude, .. } => radius + amplitude.abs(),
            Self::RoundedBox { half_extents, radius } => {
                Vec3::new(half_extents[0] - radius, half_extents[1] - radius, half_extents[2] - radius).norm() + radius
            }
        }
    }

    /// Negative inside, zero on the surface.
    pub fn implicit(&self, p: &Vec3) -> f64 {
        let n = p.norm();
        if n == 0.0 {
            return -self.radial(&Vec3::z());
        }
        n - self.radial(&(p / n))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.implicit(p) < 0.0
    }

    /// Outward unit normal at a surface point.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = Vec3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            g[k] = (self.implicit(&(p + e)) - self.implicit(&(p - e))) / (2.0 * h);
        }
        g.normalize()
    }

    /// Icosphere connectivity with vertices moved onto the surface.
    pub fn mesh(&self, level: u32) -> Result<Mesh> {
        let mut m = icosphere(level)?;
        for v in &mut m.vertices {
            *v *= self.radial(v);
        }
        Ok(m)
    }

    /// Area-uniform surface samples by rejection on the radial parameterization.
    pub fn sample_surface(&self, count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
        let dir = |rng: &mut dyn rand::RngCore| loop {
            let v = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        };
        let weight = |d: &Vec3| {
            let r = self.radial(d);
            let p = d * r;
            r * r / self.normal(&p).dot(d).max(1e-6)
        };
        let probe = icosphere(4).expect("fixed level");
        let w_max = probe.vertices.iter().map(|d| weight(d)).fold(0.0, f64::max) * 1.25;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let d = dir(rng);
            if rng.random::<f64>() * w_max < weight(&d) {
                out.push(d * self.radial(&d));
            }
        }
        out
    }

    /// Distance along a unit ray to the first surface crossing.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let bound = self.max_radius() + 1e-6;
        let b = origin.dot(dir);
        let c = origin.norm_squared() - bound * bound;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let (t0, t1) = (-b - disc.sqrt(), -b + disc.sqrt());
        let mut prev = t0.max(0.0);
        if self.implicit(&(origin + dir * prev)) < 0.0 {
            return Some(prev);
        }
        let mut t = prev;
        while t < t1 {
            t = (t + MARCH_STEP).min(t1);
            if self.implicit(&(origin + dir * t)) < 0.0 {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > HIT_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    if self.implicit(&(origin + dir * mid)) < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            prev = t;
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Light {
    /// Direction from the surface toward the light.
    pub direction: [f64; 3],
    pub intensity: f64,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            direction: [0.4, -0.6, 0.7],
            intensity: 1.0,
        }
    }
}

impl Light {
    pub fn unit(&self) -> Vec3 {
        Vec3::from(self.direction).normalize()
    }
}

/// Band-limited trigonometric color field over directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Albedo {
    pub frequency: f64,
    pub contrast: f64,
}

impl Default for Albedo {
    fn default() -> Self {
        Self {
            frequency: 2.0,
            contrast: 0.3,
        }
    }
}

impl Albedo {
    pub const HIGH_FREQUENCY: Albedo = Albedo {
        frequency: 8.0,
        contrast: 0.3,
    };

    pub fn color(&self, d: &Vec3) -> [f64; 3] {
        let f = self.frequency;
        let phases = [0.0, 2.1, 4.2];
        let mut out = [0.0; 3];
        for (k, ph) in phases.iter().enumerate() {
            let s = (f * d.x + ph).sin() * (f * d.y - 0.5 * ph).cos() + 0.5 * (f * d.z + 1.7 * ph).sin();
            out[k] = 0.5 + self.contrast * s / 1.5;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub views: usize,
    pub radius: f64,
    pub elevations_deg: Vec<f64>,
    pub resolution: usize,
    /// Focal length as a multiple of the resolution.
    pub focal_scale: f64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            views: 24,
            radius: 3.0,
            elevations_deg: vec![-35.0, 0.0, 35.0],
            resolution: 128,
            focal_scale: 1.2,
        }
    }
}

/// Cameras on elevation rings around the z axis, all aimed at the origin.
///
/// Views are split evenly over the rings, earlier rings taking the remainder.
pub fn camera_ring(spec: &RingSpec) -> Result<Vec<Camera>> {
    if spec.views < 6 || spec.elevations_deg.is_empty() || spec.elevations_deg.len() > spec.views {
        return Err(EnsError::Argument(format!(
            "camera ring needs at least 6 views and one view per ring, got {} views on {} rings",
            spec.views,
            spec.elevations_deg.len()
        )));
    }
    if !(spec.radius > 1.0) {
        return Err(EnsError::Argument("cameras must sit outside the unit ball".into()));
    }
    let rings = spec.elevations_deg.len();
    let focal = spec.focal_scale * spec.resolution as f64;
    let mut cams = Vec::with_capacity(spec.views);
    for (k, elev) in spec.elevations_deg.iter().enumerate() {
        let count = spec.views / rings + usize::from(k < spec.views % rings);
        let e = elev.to_radians();
        let offset = if k % 2 == 1 { 0.5 } else { 0.0 };
        for i in 0..count {
            let a = std::f64::consts::TAU * (i as f64 + offset) / count as f64;
            let eye = Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin()) * spec.radius;
            let up = if e.cos().abs() < 1e-6 { Vec3::y() } else { Vec3::z() };
            cams.push(Camera::look_at(eye, Vec3::zeros(), up, focal, spec.resolution, spec.resolution)?);
        }
    }
    Ok(cams)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub version: u32,
    pub shape: TargetShape,
    pub light: Light,
    pub albedo: Albedo,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub images: Vec<FloatImage>,
    pub masks: Vec<FloatImage>,
    pub cameras: Vec<Camera>,
    pub gt_points: Vec<Vec3>,
    pub meta: SceneMeta,
}

pub const GT_POINTS: usize = 20_000;

fn render_view(shape: &TargetShape, cam: &Camera, light: &Light, albedo: &Albedo) -> (FloatImage, FloatImage) {
    let (w, h) = (cam.width, cam.height);
    let o = cam.center();
    let l = light.unit();
    let pixels: Vec<Option<[f64; 3]>> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let d = cam.pixel_ray(p % w, p / w);
            shape.intersect(&o, &d).map(|t| {
                let x = o + d * t;
                let n = shape.normal(&x);
                let shade = light.intensity * n.dot(&l).max(0.0);
                albedo.color(&x.normalize()).map(|c| c * shade)
            })
        })
        .collect();
    let mut img = FloatImage::new(w, h, 3);
    let mut mask = FloatImage::new(w, h, 1);
    for (p, v) in pixels.iter().enumerate() {
        if let Some(c) = v {
            mask.data[p] = 1.0;
            for k in 0..3 {
                img.data[3 * p + k] = c[k] as f32;
            }
        }
    }
    (img, mask)
}

/// Ray-cast every view of `shape` at pixel centers with Lambertian shading.
pub fn render_ground_truth(
    shape: &TargetShape,
    cameras: &[Camera],
    light: &Light,
    albedo: &Albedo,
    seed: u64,
) -> Result<SceneDataset> {
    shape.validate()?;
    let views: Vec<(FloatImage, FloatImage)> = cameras.iter().map(|c| render_view(shape, c, light, albedo)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt_points = shape.sample_surface(GT_POINTS, &mut rng);
    let (images, masks) = views.into_iter().unzip();
    Ok(SceneDataset {
        images,
        masks,
        cameras: cameras.to_vec(),
        gt_points,
        meta: SceneMeta {
            version: DATASET_VERSION,
            shape: shape.clone(),
            light: light.clone(),
            albedo: albedo.clone(),
            seed,
        },
    })
}

impl SceneDataset {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for sub in ["images", "masks"] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| EnsError::io(&d, e))?;
        }
        for (i, (img, mask)) in self.images.iter().zip(&self.masks).enumerate() {
            img.save(&dir.join(format!("images/view_{i:03}.f32")))?;
            img.save_png(&dir.join(format!("images/view_{i:03}.png")))?;
            mask.save(&dir.join(format!("masks/view_{i:03}.f32")))?;
        }
        write_json(&dir.join("cameras.json"), &self.cameras)?;
        write_json(&dir.join("meta.json"), &self.meta)?;
        let pts = FloatImage::from_data(
            self.gt_points.len(),
            1,
            3,
            self.gt_points.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
        )?;
        pts.save(&dir.join("gt_points.f32"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cameras: Vec<Camera> = read_json(&dir.join("cameras.json"))?;
        let meta: SceneMeta = read_json(&dir.join("meta.json"))?;
        if meta.version != DATASET_VERSION {
            return Err(EnsError::Versioning(format!(
                "{}: dataset version {}, expected {DATASET_VERSION}",
                dir.display(),
                meta.version
            )));
        }
        let mut images = Vec::with_capacity(cameras.len());
        let mut masks = Vec::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            let ip = dir.join(format!("images/view_{i:03}.f32"));
            let mp = dir.join(format!("masks/view_{i:03}.f32"));
            let img = FloatImage::load(&ip)?;
            let mask = FloatImage::load(&mp)?;
            if (img.width, img.height, img.channels) != (cam.width, cam.height, 3) {
                return Err(EnsError::format(&ip, "image does not match camera resolution"));
            }
            if (mask.width, mask.height, mask.channels) != (cam.width, cam.height, 1) {
                return Err(EnsError::format(&mp, "mask does not match camera resolution"));
            }
            images.push(img);
            masks.push(mask);
        }
        let gp = dir.join("gt_points.f32");
        let gt_points = if gp.exists() {
            let pts = FloatImage::load(&gp)?;
            if pts.channels != 3 {
                return Err(EnsError::format(&gp, "ground-truth points need three channels"));
            }
            pts.data.chunks_exact(3).map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect()
        } else {
            log::warn!("{} is missing; geometric metrics are unavailable", gp.display());
            Vec::new()
        };
        Ok(Self {
            images,
            masks,
            cameras,
            gt_points,
            meta,
        })
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EnsError::format(path, &e.to_string()))?;
    fs::write(path, text).map_err(|e| EnsError::io(path, e))
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| EnsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| EnsError::format(path, &e.to_string()))
}
