use super::eigen::SpectralBasis;
use crate::error::{EnsError, Result};
use crate::geometry::{Faces, Mesh, PointTree, Vec3};

/// Barycentric position of a point inside one face of the domain mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barycentric {
    pub verts: [usize; 3],
    pub weights: [f64; 3],
}

/// Finds the face of an on-sphere triangle mesh whose planar triangle is hit by
/// the ray from the origin through a query point.
pub struct PointLocator {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    tree: PointTree,
    mesh_id: u64,
}

const INSIDE_TOL: f64 = 1e-12;

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let Faces::Tri(faces) = &mesh.faces else {
            return Err(EnsError::Argument("point location needs a triangle mesh".into()));
        };
        let mut vertex_faces = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        Ok(Self {
            vertices: mesh.vertices.clone(),
            faces: faces.clone(),
            vertex_faces,
            tree: PointTree::new(&mesh.vertices)?,
            mesh_id: mesh.id(),
        })
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    /// Central-projection barycentrics of `p` in face `f`; `None` when the face looks away.
    fn weights(&self, f: usize, p: &Vec3) -> Option<[f64; 3]> {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        let w = [p.dot(&b.cross(&c)), p.dot(&c.cross(&a)), p.dot(&a.cross(&b))];
        let s = w[0] + w[1] + w[2];
        (s > 0.0).then(|| w.map(|x| x / s))
    }

    fn best_of(&self, p: &Vec3, faces: impl Iterator<Item = usize>) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for f in faces {
            if let Some(w) = self.weights(f, p) {
                let worst = w[0].min(w[1]).min(w[2]);
                if best.is_none_or(|(_, _, m)| worst > m) {
                    best = Some((f, w, worst));
                }
            }
        }
        best.filter(|b| b.2 >= -INSIDE_TOL).map(|(f, w, _)| (f, w))
    }

    pub fn locate(&self, p: &Vec3) -> Barycentric {
        let (v, dist) = self.tree.nearest(p);
        if dist <= 1e-12 {
            let f = self.faces[self.vertex_faces[v][0]];
            let k = f.iter().position(|&x| x == v).expect("vertex in its face");
            let mut weights = [0.0; 3];
            weights[k] = 1.0;
            return Barycentric { verts: f, weights };
        }
        if let Some((f, w)) = self.best_of(p, self.vertex_faces[v].iter().copied()) {
            return Barycentric { verts: self.faces[f], weights: w };
        }
        let mut ring2: Vec<usize> = self.vertex_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .flat_map(|u| self.vertex_faces[u].iter().copied())
            .collect();
        ring2.sort_unstable();
        ring2.dedup();
        if let Some((f, w)) = self.best_of(p, ring2.into_iter()) {
            return Barycentric { verts: self.faces[f], weights: w };
        }
        log::warn!("point {p:?} not found near vertex {v}; falling back to a full face scan");
        let mut best = (0, [1.0 / 3.0; 3], f64::NEG_INFINITY);
        for f in 0..self.faces.len() {
            if let Some(w) = self.weights(f, p) {
                let worst = w[0].min(w[1]).min(w[2]);
                if worst > best.2 {
                    best = (f, w, worst);
                }
            }
        }
        let mut w = best.1.map(|x| x.max(0.0));
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        Barycentric {
            verts: self.faces[best.0],
            weights: w,
        }
    }

    /// Locate every point; points must be unit length within `1e-6`.
    pub fn locate_all(&self, points: &[Vec3]) -> Result<Vec<Barycentric>> {
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| (p.norm() - 1.0).abs() > 1e-6) {
            return Err(EnsError::Argument(format!(
                "point {i} has norm {} but must lie on the unit sphere",
                p.norm()
            )));
        }
        Ok(points.iter().map(|p| self.locate(p)).collect())
    }
}

/// Rows of `values` (an `n x d` row-major table) blended by `bary`.
pub fn blend_rows(values: &[f64], d: usize, bary: &[Barycentric]) -> Vec<f64> {
    let mut out = vec![0.0; bary.len() * d];
    for (row, b) in out.chunks_mut(d).zip(bary) {
        for (&v, &w) in b.verts.iter().zip(&b.weights) {
            if w == 0.0 {
                continue;
            }
            let src = &values[v * d..(v + 1) * d];
            row.iter_mut().zip(src).for_each(|(o, s)| *o += w * s);
        }
    }
    out
}

/// Eigenfunction values at arbitrary on-sphere points, `points.len() x d` row-major.
pub fn interpolate_to_points(basis: &SpectralBasis, locator: &PointLocator, points: &[Vec3]) -> Result<Vec<f64>> {
    if basis.mesh_id != locator.mesh_id {
        return Err(EnsError::Config(format!(
            "basis computed on mesh {:016x} but locator built on mesh {:016x}",
            basis.mesh_id, locator.mesh_id
        )));
    }
    let bary = locator.locate_all(points)?;
    Ok(blend_rows(&basis.functions, basis.dim(), &bary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;
    use crate::spectral::{eigenbasis_dense, LaplacianPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Mesh, SpectralBasis, PointLocator) {
        let m = icosphere(2).unwrap();
        let lap = LaplacianPair::cotan(&m).unwrap();
        let b = eigenbasis_dense(&lap, m.id(), 16).unwrap();
        let loc = PointLocator::new(&m).unwrap();
        (m, b, loc)
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() > 0.1 && p.norm() < 1.0 {
                return p.normalize();
            }
        }
    }

    #[test]
    fn vertex_lookup_is_exact() {
        let (m, b, loc) = setup();
        let vals = interpolate_to_points(&b, &loc, &m.vertices).unwrap();
        for v in 0..m.vertex_count() {
            assert_eq!(&vals[v * 16..(v + 1) * 16], b.row(v));
        }
    }

    #[test]
    fn projected_edge_midpoint_averages_endpoints() {
        let (m, b, loc) = setup();
        for &[i, j] in m.edges().iter().take(50) {
            let p = ((m.vertices[i] + m.vertices[j]) * 0.5).normalize();
            let vals = interpolate_to_points(&b, &loc, &[p]).unwrap();
            for k in 0..16 {
                let expect = 0.5 * (b.row(i)[k] + b.row(j)[k]);
                assert!((vals[k] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_function_and_partition_of_unity() {
        let (_, b, loc) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..500).map(|_| random_unit(&mut rng)).collect();
        let bary = loc.locate_all(&pts).unwrap();
        for w in &bary {
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.weights.iter().all(|&x| x >= -1e-12));
        }
        let vals = interpolate_to_points(&b, &loc, &pts).unwrap();
        let c = b.row(0)[0];
        for r in 0..pts.len() {
            assert!((vals[r * 16] - c).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_off_sphere_points_and_foreign_basis() {
        let (_, mut b, loc) = setup();
        assert!(interpolate_to_points(&b, &loc, &[Vec3::new(0.0, 0.0, 1.1)]).is_err());
        b.mesh_id ^= 1;
        assert!(matches!(interpolate_to_points(&b, &loc, &[Vec3::z()]), Err(EnsError::Config(_))));
    }
}
