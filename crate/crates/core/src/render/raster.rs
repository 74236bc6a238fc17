use nalgebra::Vector2;
use rayon::prelude::*;

use super::camera::Camera;
use crate::geometry::Vec3;

pub const NO_FACE: u32 = u32::MAX;

/// Rows per rasterization tile.
const TILE_ROWS: usize = 8;

/// Hard visibility per pixel: nearest front face and its perspective-correct barycentrics.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl GBuffer {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn covered(&self, p: usize) -> bool {
        self.face[p] != NO_FACE
    }

    pub fn covered_pixels(&self) -> Vec<usize> {
        (0..self.pixel_count()).filter(|&p| self.covered(p)).collect()
    }

    pub fn coverage(&self) -> Vec<f64> {
        self.face.iter().map(|&f| if f == NO_FACE { 0.0 } else { 1.0 }).collect()
    }

    /// Nothing of the mesh landed on the image.
    pub fn is_empty(&self) -> bool {
        self.face.iter().all(|&f| f == NO_FACE)
    }
}

/// Per-face orientation toward the camera center: `true` when the outward normal faces it.
pub fn front_facing(vertices: &[Vec3], tris: &[[usize; 3]], center: &Vec3) -> Vec<bool> {
    tris.iter()
        .map(|t| {
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            (b - a).cross(&(c - a)).dot(&(a - center)) < 0.0
        })
        .collect()
}

struct ScreenFace {
    uv: [Vector2<f64>; 3],
    inv_depth: [f64; 3],
    inv_area: f64,
    cols: (usize, usize),
    rows: (usize, usize),
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then(|| (first as usize, last as usize))
}

fn screen_face(cam: &Camera, vertices: &[Vec3], t: &[usize; 3], front: bool) -> Option<ScreenFace> {
    if !front {
        return None;
    }
    let mut uv = [Vector2::zeros(); 3];
    let mut inv_depth = [0.0; 3];
    for k in 0..3 {
        let (p, d) = cam.project(&vertices[t[k]])?;
        uv[k] = p;
        inv_depth[k] = 1.0 / d;
    }
    let area = edge(&uv[0], &uv[1], &uv[2]);
    if !(area.abs() > 1e-14) {
        return None;
    }
    let (mut lo, mut hi) = (uv[0], uv[0]);
    for p in &uv[1..] {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Some(ScreenFace {
        uv,
        inv_depth,
        inv_area: 1.0 / area,
        cols: pixel_span(lo.x, hi.x, cam.width)?,
        rows: pixel_span(lo.y, hi.y, cam.height)?,
    })
}

/// Z-buffered rasterization of front faces at pixel centers.
///
/// Ties in depth resolve to the lower face index.
pub fn rasterize(cam: &Camera, vertices: &[Vec3], tris: &[[usize; 3]]) -> GBuffer {
    let (w, h) = (cam.width, cam.height);
    let front = front_facing(vertices, tris, &cam.center());
    let faces: Vec<Option<ScreenFace>> = tris
        .par_iter()
        .zip(front.par_iter())
        .map(|(t, &f)| screen_face(cam, vertices, t, f))
        .collect();
    let mut face = vec![NO_FACE; w * h];
    let mut bary = vec![[0.0; 3]; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    face.par_chunks_mut(TILE_ROWS * w)
        .zip(bary.par_chunks_mut(TILE_ROWS * w))
        .zip(depth.par_chunks_mut(TILE_ROWS * w))
        .enumerate()
        .for_each(|(tile, ((face, bary), depth))| {
            let row0 = tile * TILE_ROWS;
            let row1 = row0 + face.len() / w;
            for (fi, sf) in faces.iter().enumerate() {
                let Some(sf) = sf else { continue };
                let (r0, r1) = (sf.rows.0.max(row0), (sf.rows.1 + 1).min(row1));
                for j in r0..r1 {
                    for i in sf.cols.0..=sf.cols.1 {
                        let p = Vector2::new(i as f64 + 0.5, j as f64 + 0.5);
                        let w0 = edge(&sf.uv[1], &sf.uv[2], &p) * sf.inv_area;
                        let w1 = edge(&sf.uv[2], &sf.uv[0], &p) * sf.inv_area;
                        let w2 = 1.0 - w0 - w1;
                        if w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12 {
                            continue;
                        }
                        let q = [w0 * sf.inv_depth[0], w1 * sf.inv_depth[1], w2 * sf.inv_depth[2]];
                        let s = q[0] + q[1] + q[2];
                        let z = 1.0 / s;
                        let k = (j - row0) * w + i;
                        if z < depth[k] {
                            depth[k] = z;
                            face[k] = fi as u32;
                            bary[k] = [q[0] / s, q[1] / s, q[2] / s];
                        }
                    }
                }
            }
        });
    GBuffer {
        width: w,
        height: h,
        face,
        bary,
        depth,
    }
}
