use ens_autodiff::{Graph, Scalar, Tensor, Var};

use super::camera::Camera;
use super::raster::{GBuffer, NO_FACE};
use crate::error::{EnsError, Result};
use crate::geometry::Vec3;

fn row3<T: Scalar>(v: &Vec3) -> Tensor<T> {
    Tensor::from_fn(1, 3, |_, c| T::c(v[c]))
}

/// Pixel coordinates `n x 2` of world points `n x 3` on the tape.
pub fn project_graph<T: Scalar>(g: &mut Graph<T>, cam: &Camera, points: Var) -> Result<Var> {
    let rt = Tensor::from_fn(3, 3, |i, j| T::c(cam.r[(j, i)]));
    let rt = g.constant(rt);
    let t = g.constant(row3(&cam.t));
    let q = g.matmul(points, rt)?;
    let q = g.add(q, t)?;
    let xy = g.slice_cols(q, 0, 2)?;
    let z = g.slice_cols(q, 2, 3)?;
    let n = g.div(xy, z)?;
    let k = &cam.k;
    let kt = g.constant(Tensor::from_fn(2, 2, |i, j| T::c(k[(j, i)])));
    let uv = g.matmul(n, kt)?;
    let c = g.constant(Tensor::from_fn(1, 2, |_, j| T::c(k[(j, 2)])));
    Ok(g.add(uv, c)?)
}

/// Corner indices of the faces listed in `faces`, one list per corner.
pub fn corner_indices(tris: &[[usize; 3]], faces: &[usize]) -> [Vec<usize>; 3] {
    [0, 1, 2].map(|k| faces.iter().map(|&f| tris[f][k]).collect())
}

/// `sum_k bary[:, k] * corner_k`.
pub fn blend<T: Scalar>(g: &mut Graph<T>, bary: Var, corners: [Var; 3]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (k, c) in corners.into_iter().enumerate() {
        let w = g.slice_cols(bary, k, k + 1)?;
        let term = g.mul(c, w)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("three corners"))
}

/// Pixels selected for differentiable shading, with their hard visibility decisions.
#[derive(Clone, Debug)]
pub struct PixelSet {
    pub pixels: Vec<usize>,
    pub faces: Vec<usize>,
    pub rays: Vec<Vec3>,
}

impl PixelSet {
    pub fn new(gbuf: &GBuffer, cam: &Camera, pixels: &[usize]) -> Result<Self> {
        let mut faces = Vec::with_capacity(pixels.len());
        let mut rays = Vec::with_capacity(pixels.len());
        for &p in pixels {
            if p >= gbuf.pixel_count() || gbuf.face[p] == NO_FACE {
                return Err(EnsError::Argument(format!("pixel {p} is not covered")));
            }
            faces.push(gbuf.face[p] as usize);
            rays.push(cam.pixel_ray(p % gbuf.width, p / gbuf.width));
        }
        Ok(Self {
            pixels: pixels.to_vec(),
            faces,
            rays,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Perspective-correct barycentrics `n x 3` of each pixel ray against its face plane.
///
/// With corners relative to the camera center, `l_a ~ d . (B x C)` and cyclic, normalized to sum one.
pub fn perspective_barycentrics<T: Scalar>(
    g: &mut Graph<T>,
    cam: &Camera,
    vertices: Var,
    tris: &[[usize; 3]],
    set: &PixelSet,
) -> Result<Var> {
    let idx = corner_indices(tris, &set.faces);
    let o = g.constant(row3(&cam.center()));
    let mut rel = Vec::with_capacity(3);
    for ids in &idx {
        let v = g.gather(vertices, ids)?;
        rel.push(g.sub(v, o)?);
    }
    let d = g.constant(Tensor::from_fn(set.len(), 3, |r, c| T::c(set.rays[r][c])));
    let mut w = Vec::with_capacity(3);
    for k in 0..3 {
        let cr = g.cross(rel[(k + 1) % 3], rel[(k + 2) % 3])?;
        w.push(g.dot(d, cr)?);
    }
    let all = g.concat(&w)?;
    let s = g.row_sum(all);
    Ok(g.div(all, s)?)
}

/// Unnormalized face normals `F x 3`; the length is twice the face area.
pub fn face_cross<T: Scalar>(g: &mut Graph<T>, vertices: Var, tris: &[[usize; 3]]) -> Result<Var> {
    let all: Vec<usize> = (0..tris.len()).collect();
    let [a, b, c] = corner_indices(tris, &all);
    let (a, b, c) = (g.gather(vertices, &a)?, g.gather(vertices, &b)?, g.gather(vertices, &c)?);
    let e1 = g.sub(b, a)?;
    let e2 = g.sub(c, a)?;
    Ok(g.cross(e1, e2)?)
}

/// Area-weighted unit vertex normals from [`face_cross`].
pub fn vertex_normals_graph<T: Scalar>(
    g: &mut Graph<T>,
    face_cross: Var,
    tris: &[[usize; 3]],
    vertex_count: usize,
) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for k in 0..3 {
        let idx: Vec<usize> = tris.iter().map(|t| t[k]).collect();
        let s = g.scatter_add(face_cross, &idx, vertex_count)?;
        acc = Some(match acc {
            Some(a) => g.add(a, s)?,
            None => s,
        });
    }
    Ok(g.normalize_rows(acc.expect("three corners")))
}

/// Gather the corner rows of per-vertex `attr` for a pixel set and blend them.
pub fn interpolate<T: Scalar>(
    g: &mut Graph<T>,
    attr: Var,
    bary: Var,
    tris: &[[usize; 3]],
    set: &PixelSet,
) -> Result<Var> {
    let idx = corner_indices(tris, &set.faces);
    let corners = [
        g.gather(attr, &idx[0])?,
        g.gather(attr, &idx[1])?,
        g.gather(attr, &idx[2])?,
    ];
    blend(g, bary, corners)
}
