use ens_autodiff::{Graph, Scalar, Tensor};

use crate::error::Result;
use crate::fields::DeformationModel;
use crate::geometry::Mesh;
use crate::render::{
    face_cross, interpolate, perspective_barycentrics, rasterize, vertex_normals_graph, Camera, FloatImage, PixelSet,
    ShaderPair,
};

/// Full-resolution renders of a trained model from one camera.
pub struct RenderedView {
    /// Feature-shader color.
    pub base: FloatImage,
    /// Geometry-shader color.
    pub full: FloatImage,
    /// Unit normals mapped to `[0, 1]`.
    pub normals: FloatImage,
    /// Hard coverage.
    pub mask: FloatImage,
}

const CHUNK: usize = 8192;

fn write_rows<T: Scalar>(img: &mut FloatImage, pixels: &[usize], t: &Tensor<T>, f: impl Fn(f64) -> f64) {
    for (r, &p) in pixels.iter().enumerate() {
        for (dst, v) in img.pixel_mut(p).iter_mut().zip(t.row(r)) {
            *dst = f(v.f64()) as f32;
        }
    }
}

/// Render `model` deforming `domain` with `shaders`; uncovered pixels stay black.
pub fn render_view<T: Scalar>(
    model: &DeformationModel<T>,
    shaders: &ShaderPair<T>,
    domain: &Mesh,
    cam: &Camera,
) -> Result<RenderedView> {
    let tris = domain.triangles();
    let deformed = model.deform_full(&domain.vertices)?;
    let gbuf = rasterize(cam, &deformed.positions, &tris);
    let (w, h) = (cam.width, cam.height);
    let mut out = RenderedView {
        base: FloatImage::new(w, h, 3),
        full: FloatImage::new(w, h, 3),
        normals: FloatImage::new(w, h, 3),
        mask: FloatImage::from_data(w, h, 1, gbuf.coverage().iter().map(|&v| v as f32).collect())?,
    };
    let covered = gbuf.covered_pixels();
    if covered.is_empty() {
        return Ok(out);
    }
    let positions = Tensor::from_fn(deformed.positions.len(), 3, |r, c| T::c(deformed.positions[r][c]));
    for chunk in covered.chunks(CHUNK) {
        let mut g = Graph::new();
        let x_all = g.constant(positions.clone());
        let z_all = g.constant(deformed.features.clone());
        let fc = face_cross(&mut g, x_all, &tris)?;
        let n_all = vertex_normals_graph(&mut g, fc, &tris, deformed.positions.len())?;
        let set = PixelSet::new(&gbuf, cam, chunk)?;
        let bary = perspective_barycentrics(&mut g, cam, x_all, &tris, &set)?;
        let x = interpolate(&mut g, x_all, bary, &tris, &set)?;
        let n = interpolate(&mut g, n_all, bary, &tris, &set)?;
        let n = g.normalize_rows(n);
        let z = interpolate(&mut g, z_all, bary, &tris, &set)?;
        let sh = shaders.forward(&mut g, x, n, z, &cam.center())?;
        write_rows(&mut out.base, chunk, g.value(sh.base), |v| v);
        write_rows(&mut out.full, chunk, g.value(sh.full), |v| v);
        write_rows(&mut out.normals, chunk, g.value(n), |v| 0.5 * (v + 1.0));
    }
    Ok(out)
}
