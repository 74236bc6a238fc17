use std::num::NonZero;

use ens_autodiff::{Graph, Scalar, Tensor, Var};
use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::interp::project_graph;
use super::raster::{front_facing, GBuffer};
use crate::error::{EnsError, Result};
use crate::geometry::{Topology, Vec3};

/// Candidate segments examined per pixel.
const CANDIDATES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskParams {
    /// Sigmoid slope per pixel.
    pub sharpness: f64,
    /// Pixels closer than this to the silhouette get a soft value; others keep hard coverage.
    pub band: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            sharpness: 30.0,
            band: 3.0,
        }
    }
}

/// Soft silhouette of one view: a constant image plus differentiable values on band pixels.
#[derive(Clone, Debug)]
pub struct SoftMask {
    pub width: usize,
    pub height: usize,
    /// Hard coverage outside the band, zero on band pixels.
    pub base: Vec<f64>,
    pub band_pixels: Vec<usize>,
    /// `band_pixels.len() x 1`, or `None` when the band is empty.
    pub values: Option<Var>,
}

impl SoftMask {
    /// Full `HW x 1` mask on the tape.
    pub fn image<T: Scalar>(&self, g: &mut Graph<T>) -> Result<Var> {
        let n = self.width * self.height;
        let base = g.constant(Tensor::from_fn(n, 1, |r, _| T::c(self.base[r])));
        match self.values {
            Some(v) => {
                let s = g.scatter_add(v, &self.band_pixels, n)?;
                Ok(g.add(base, s)?)
            }
            None => Ok(base),
        }
    }

    pub fn to_vec<T: Scalar>(&self, g: &Graph<T>) -> Vec<f64> {
        let mut out = self.base.clone();
        if let Some(v) = self.values {
            let t = g.value(v);
            for (r, &p) in self.band_pixels.iter().enumerate() {
                out[p] = t.get(r, 0).f64();
            }
        }
        out
    }
}

/// Edges between a front and a back face (or open edges of a front face), as vertex pairs.
pub fn silhouette_edges(vertices: &[Vec3], tris: &[[usize; 3]], topo: &Topology, center: &Vec3) -> Vec<[usize; 2]> {
    let front = front_facing(vertices, tris, center);
    topo.edges
        .iter()
        .zip(&topo.edge_faces)
        .filter(|(_, &(l, r))| match r {
            Some(r) => front[l] != front[r],
            None => front[l],
        })
        .map(|(e, _)| *e)
        .collect()
}

fn boundary_pixels(cover: &[bool], w: usize, h: usize) -> Vec<bool> {
    let at = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < w && (j as usize) < h && cover[j as usize * w + i as usize];
    (0..w * h)
        .map(|p| {
            let (i, j) = ((p % w) as isize, (p / w) as isize);
            let c = cover[p];
            [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(di, dj)| at(i + di, j + dj) != c)
        })
        .collect()
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let l = ab.norm_squared();
    let t = if l > 0.0 { ((p - a).dot(&ab) / l).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Soft silhouette `sigmoid(k s d)` where `d` is the pixel-center distance to the nearest
/// projected silhouette edge lying along the hard coverage boundary and `s` is `+1` on covered
/// pixels. The nearest-edge choice is a hard decision; `d` is differentiable in the vertices.
pub fn soft_mask<T: Scalar>(
    g: &mut Graph<T>,
    cam: &Camera,
    vertices: Var,
    positions: &[Vec3],
    tris: &[[usize; 3]],
    topo: &Topology,
    gbuf: &GBuffer,
    params: &MaskParams,
) -> Result<SoftMask> {
    if !(params.sharpness > 0.0) || !(params.band >= 0.0) {
        return Err(EnsError::Argument("mask sharpness must be positive and band non-negative".into()));
    }
    let (w, h) = (gbuf.width, gbuf.height);
    let cover: Vec<bool> = (0..w * h).map(|p| gbuf.covered(p)).collect();
    let base: Vec<f64> = cover.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    let boundary = boundary_pixels(&cover, w, h);
    let near_boundary = |uv: &Vector2<f64>| {
        let (ci, cj) = (uv.x.floor() as isize, uv.y.floor() as isize);
        (-2..=2).any(|dj| {
            (-2..=2).any(|di| {
                let (i, j) = (ci + di, cj + dj);
                i >= 0 && j >= 0 && (i as usize) < w && (j as usize) < h && boundary[j as usize * w + i as usize]
            })
        })
    };

    let mut segs: Vec<([usize; 2], [Vector2<f64>; 2])> = Vec::new();
    for e in silhouette_edges(positions, tris, topo, &cam.center()) {
        let (Some((a, _)), Some((b, _))) = (cam.project(&positions[e[0]]), cam.project(&positions[e[1]])) else {
            continue;
        };
        if near_boundary(&((a + b) * 0.5)) || near_boundary(&a) || near_boundary(&b) {
            segs.push((e, [a, b]));
        }
    }
    let empty = SoftMask {
        width: w,
        height: h,
        base: base.clone(),
        band_pixels: Vec::new(),
        values: None,
    };
    if segs.is_empty() {
        return Ok(empty);
    }
    let mids: Vec<[f64; 2]> = segs.iter().map(|(_, [a, b])| [(a.x + b.x) / 2.0, (a.y + b.y) / 2.0]).collect();
    let tree: ImmutableKdTree<f64, u64, 2, 32> = ImmutableKdTree::new_from_slice(&mids);
    let want = NonZero::new(CANDIDATES.min(segs.len())).expect("non-empty");
    let nearest: Vec<Option<(usize, f64)>> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let q = Vector2::new((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
            let mut best: Option<(usize, f64)> = None;
            for nn in tree.nearest_n::<SquaredEuclidean>(&[q.x, q.y], want) {
                let s = nn.item as usize;
                let d = segment_distance(&q, &segs[s].1[0], &segs[s].1[1]);
                if best.is_none_or(|(bs, bd)| d < bd || (d == bd && s < bs)) {
                    best = Some((s, d));
                }
            }
            best.filter(|&(_, d)| d <= params.band)
        })
        .collect();

    let mut band_pixels = Vec::new();
    let mut seg_of = Vec::new();
    let mut base = base;
    for (p, n) in nearest.iter().enumerate() {
        if let Some((s, _)) = n {
            band_pixels.push(p);
            seg_of.push(*s);
            base[p] = 0.0;
        }
    }
    if band_pixels.is_empty() {
        return Ok(empty);
    }
    let n = band_pixels.len();
    let ia: Vec<usize> = seg_of.iter().map(|&s| segs[s].0[0]).collect();
    let ib: Vec<usize> = seg_of.iter().map(|&s| segs[s].0[1]).collect();
    let va = g.gather(vertices, &ia)?;
    let vb = g.gather(vertices, &ib)?;
    let a = project_graph(g, cam, va)?;
    let b = project_graph(g, cam, vb)?;
    let q = g.constant(Tensor::from_fn(n, 2, |r, c| {
        let p = band_pixels[r];
        T::c(if c == 0 { (p % w) as f64 + 0.5 } else { (p / w) as f64 + 0.5 })
    }));
    let ab = g.sub(b, a)?;
    let aq = g.sub(q, a)?;
    let num = g.dot(aq, ab)?;
    let den = g.dot(ab, ab)?;
    let den = g.add_scalar(den, T::c(1e-12));
    let t = g.div(num, den)?;
    let t = g.clamp(t, T::zero(), T::one());
    let along = g.mul(ab, t)?;
    let closest = g.add(a, along)?;
    let diff = g.sub(q, closest)?;
    let sq = g.dot(diff, diff)?;
    let sq = g.add_scalar(sq, T::c(1e-18));
    let dist = g.sqrt(sq);
    let sign = g.constant(Tensor::from_fn(n, 1, |r, _| {
        T::c(if cover[band_pixels[r]] { params.sharpness } else { -params.sharpness })
    }));
    let logits = g.mul(dist, sign)?;
    let values = g.sigmoid(logits);
    Ok(SoftMask {
        width: w,
        height: h,
        base,
        band_pixels,
        values: Some(values),
    })
}
