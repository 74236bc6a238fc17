use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, Vec3};

/// Faces whose doubled area falls below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-300;

/// Unit face normals. Quads use the Newell normal. Degenerate faces get a zero normal.
pub fn face_normals(mesh: &Mesh) -> Vec<Vec3> {
    mesh.faces
        .iter()
        .map(|f| {
            let n = polygon_area_vector(&mesh.vertices, f);
            let len = n.norm();
            if len > DEGENERATE_AREA {
                n / len
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

/// Indices of zero-area faces.
pub fn degenerate_faces(mesh: &Mesh) -> Vec<usize> {
    mesh.faces
        .iter()
        .enumerate()
        .filter(|(_, f)| polygon_area_vector(&mesh.vertices, f).norm() <= DEGENERATE_AREA)
        .map(|(i, _)| i)
        .collect()
}

/// Area-weighted unit vertex normals; isolated vertices get zero.
pub fn vertex_normals(mesh: &Mesh) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for f in mesh.faces.iter() {
        let n = polygon_area_vector(&mesh.vertices, f);
        for &v in f {
            acc[v] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > DEGENERATE_AREA {
                n / len
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

/// Twice the vector area of a planar-ish polygon (Newell).
fn polygon_area_vector(v: &[Vec3], f: &[usize]) -> Vec3 {
    if f.len() == 3 {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        return (b - a).cross(&(c - a));
    }
    let mut n = Vec3::zeros();
    for k in 0..f.len() {
        n += v[f[k]].cross(&v[f[(k + 1) % f.len()]]);
    }
    n
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleQuality {
    pub inradius: f64,
    pub circumradius: f64,
    /// `2r/R`, in `[0, 1]`, equal to 1 for equilateral triangles.
    pub normalized_icr: f64,
}

pub fn triangle_icr(p0: Vec3, p1: Vec3, p2: Vec3) -> TriangleQuality {
    let a = (p1 - p2).norm();
    let b = (p2 - p0).norm();
    let c = (p0 - p1).norm();
    let area = 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();
    let s = 0.5 * (a + b + c);
    if area <= 0.0 || s <= 0.0 || !area.is_finite() {
        return TriangleQuality {
            inradius: 0.0,
            circumradius: f64::INFINITY,
            normalized_icr: 0.0,
        };
    }
    let r = area / s;
    let big_r = a * b * c / (4.0 * area);
    TriangleQuality {
        inradius: r,
        circumradius: big_r,
        normalized_icr: (2.0 * r / big_r).clamp(0.0, 1.0),
    }
}

/// Normalized ICR of every triangle (quads are split first).
pub fn mesh_icr(mesh: &Mesh) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|&[a, b, c]| triangle_icr(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]).normalized_icr)
        .collect()
}

/// Summary of a mesh's ICR distribution; fractions are in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcrStats {
    pub mean: f64,
    pub pct_below_010: f64,
    pub pct_below_025: f64,
    pub pct_below_090: f64,
    pub triangles: usize,
}

impl IcrStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let pct = |t: f64| 100.0 * values.iter().filter(|&&v| v < t).count() as f64 / n;
        Self {
            mean: values.iter().sum::<f64>() / n,
            pct_below_010: pct(0.10),
            pct_below_025: pct(0.25),
            pct_below_090: pct(0.90),
            triangles: values.len(),
        }
    }

    pub fn of_mesh(mesh: &Mesh) -> Self {
        Self::from_values(&mesh_icr(mesh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;

    #[test]
    fn sphere_vertex_normals_are_radial() {
        let m = icosphere(3).unwrap();
        for (n, p) in vertex_normals(&m).iter().zip(&m.vertices) {
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert!(n.dot(p) > 0.999);
        }
    }

    #[test]
    fn split_square_normals() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()];
        let m = Mesh::tri(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        for n in face_normals(&m) {
            assert!((n - Vec3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn random_triangle_normal_is_orthogonal() {
        let (a, b, c) = (Vec3::new(0.3, -1.2, 0.7), Vec3::new(2.1, 0.4, -0.5), Vec3::new(-0.9, 0.8, 1.6));
        let m = Mesh::tri(vec![a, b, c], vec![[0, 1, 2]]).unwrap();
        let n = face_normals(&m)[0];
        assert!(n.dot(&(b - a)).abs() < 1e-12);
        assert!(n.dot(&(c - a)).abs() < 1e-12);
        assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face_is_flagged() {
        let m = Mesh::tri(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert_eq!(face_normals(&m)[0], Vec3::zeros());
        assert_eq!(degenerate_faces(&m), vec![0]);
    }

    #[test]
    fn icr_reference_triangles() {
        let eq = triangle_icr(Vec3::zeros(), Vec3::x(), Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0));
        assert!((eq.normalized_icr - 1.0).abs() < 1e-12);
        let right = triangle_icr(Vec3::zeros(), Vec3::x(), Vec3::y());
        let r = (2.0 - 2f64.sqrt()) / 2.0;
        let big_r = 2f64.sqrt() / 2.0;
        assert!((right.inradius - r).abs() < 1e-12);
        assert!((right.circumradius - big_r).abs() < 1e-12);
        assert!((right.normalized_icr - 2.0 * r / big_r).abs() < 1e-12);
        assert!((right.normalized_icr - 0.828_427_124_7).abs() < 1e-9);
        let flat = triangle_icr(Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0);
        assert_eq!(flat.normalized_icr, 0.0);
    }

    #[test]
    fn stats_thresholds() {
        let s = IcrStats::from_values(&[0.05, 0.2, 0.5, 0.95]);
        assert_eq!(s.pct_below_010, 25.0);
        assert_eq!(s.pct_below_025, 50.0);
        assert_eq!(s.pct_below_090, 75.0);
        assert!((s.mean - 0.425).abs() < 1e-15);
    }
}
