use std::collections::HashMap;

use super::mesh::{Faces, Mesh, Topology, Vec3};
use crate::error::{EnsError, Result};

/// Largest icosphere level accepted by [`icosphere`].
pub const ICOSPHERE_MAX_LEVEL: u32 = 8;

/// Largest per-face grid count accepted by [`quad_sphere`].
pub const QUAD_SPHERE_MAX_RES: usize = 1024;

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

/// Unit icosahedron from the golden-ratio rectangles, outward oriented.
pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|p| Vec3::new(p[0], p[1], p[2]).normalize()).collect();
    Mesh {
        vertices,
        faces: Faces::Tri(ICOSAHEDRON_FACES.to_vec()),
    }
}

/// Icosahedron subdivided `level` times with every new vertex projected to the unit sphere.
pub fn icosphere(level: u32) -> Result<Mesh> {
    if level > ICOSPHERE_MAX_LEVEL {
        return Err(EnsError::Capacity(format!(
            "icosphere level {level} exceeds cap {ICOSPHERE_MAX_LEVEL}"
        )));
    }
    let mut mesh = icosahedron();
    for _ in 0..level {
        mesh = subdivide(&mesh, true)?;
    }
    Ok(mesh)
}

/// 1-to-4 midpoint split. New vertices are appended in the order their edges
/// are first met while walking faces; old vertices keep their indices.
pub fn subdivide(mesh: &Mesh, project_to_sphere: bool) -> Result<Mesh> {
    let Faces::Tri(faces) = &mesh.faces else {
        return Err(EnsError::Topology("subdivide requires a triangle mesh".into()));
    };
    Topology::build_closed(faces)?;
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
        *midpoint.entry([a.min(b), a.max(b)]).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]) * 0.5);
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    if project_to_sphere {
        for v in &mut vertices {
            *v = v.normalize();
        }
    }
    Ok(Mesh {
        vertices,
        faces: Faces::Tri(out),
    })
}

/// Cubed sphere with an `n x n` quad grid per cube face, equiangular spacing.
pub fn quad_sphere(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(EnsError::Argument("quad_sphere needs n >= 1".into()));
    }
    if n > QUAD_SPHERE_MAX_RES {
        return Err(EnsError::Capacity(format!("quad_sphere n = {n} exceeds cap {QUAD_SPHERE_MAX_RES}")));
    }
    // (normal axis, sign, u axis, v axis) with u x v pointing outward
    const CUBE: [(usize, bool, usize, usize); 6] = [
        (0, true, 1, 2),
        (0, false, 2, 1),
        (1, true, 2, 0),
        (1, false, 0, 2),
        (2, true, 0, 1),
        (2, false, 1, 0),
    ];
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::with_capacity(6 * n * n + 2);
    let mut lattice = |p: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            let c = |k: usize| (std::f64::consts::FRAC_PI_4 * (2.0 * p[k] as f64 / n as f64 - 1.0)).tan();
            vertices.push(Vec3::new(c(0), c(1), c(2)).normalize());
            vertices.len() - 1
        })
    };
    let mut faces = Vec::with_capacity(6 * n * n);
    for &(axis, positive, u, v) in &CUBE {
        let at = |i: usize, j: usize| {
            let mut p = [0; 3];
            p[axis] = if positive { n } else { 0 };
            p[u] = i;
            p[v] = j;
            p
        };
        for j in 0..n {
            for i in 0..n {
                let q = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                faces.push(q.map(|p| lattice(p, &mut vertices)));
            }
        }
    }
    Ok(Mesh {
        vertices,
        faces: Faces::Quad(faces),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &Mesh) -> f64 {
        m.triangles()
            .iter()
            .map(|&[a, b, c]| m.vertices[a].dot(&m.vertices[b].cross(&m.vertices[c])) / 6.0)
            .sum()
    }

    #[test]
    fn icosphere_counts() {
        for (level, v, f) in [(0, 12, 20), (1, 42, 80), (4, 2562, 5120)] {
            let m = icosphere(level).unwrap();
            assert_eq!(m.vertex_count(), v);
            assert_eq!(m.face_count(), f);
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.is_closed_and_oriented());
            assert!(signed_volume(&m) > 0.0);
            assert!(m.vertices.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn icosphere_level_seven() {
        let m = icosphere(7).unwrap();
        assert_eq!(m.vertex_count(), 163_842);
        assert_eq!(m.vertex_count(), 10 * 4usize.pow(7) + 2);
    }

    #[test]
    fn level_four_subdivided_three_times() {
        let mut m = icosphere(4).unwrap();
        for _ in 0..3 {
            m = subdivide(&m, true).unwrap();
        }
        assert_eq!(m.vertex_count(), 163_842);
    }

    #[test]
    fn icosphere_cap() {
        assert!(matches!(icosphere(ICOSPHERE_MAX_LEVEL + 1), Err(EnsError::Capacity(_))));
    }

    #[test]
    fn icosphere_is_deterministic() {
        assert_eq!(icosphere(3).unwrap().id(), icosphere(3).unwrap().id());
    }

    #[test]
    fn subdivide_tetrahedron() {
        let v = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        let m = Mesh::tri(v.clone(), vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap();
        let s = subdivide(&m, false).unwrap();
        assert_eq!((s.vertex_count(), s.face_count()), (10, 16));
        assert_eq!(&s.vertices[..4], &v[..]);
        assert!(s.is_closed_and_oriented());
    }

    #[test]
    fn subdivide_icosahedron_by_enumeration() {
        let ico = icosahedron();
        let s = subdivide(&ico, true).unwrap();
        // distinct midpoints enumerated independently of the subdivision code
        let mut mids: Vec<Vec3> = Vec::new();
        for f in ico.triangles() {
            for k in 0..3 {
                let p = ((ico.vertices[f[k]] + ico.vertices[f[(k + 1) % 3]]) * 0.5).normalize();
                if !mids.iter().any(|q| (q - p).norm() < 1e-12) {
                    mids.push(p);
                }
            }
        }
        assert_eq!(12 + mids.len(), 42);
        assert_eq!((s.vertex_count(), s.face_count()), (42, 80));
    }

    #[test]
    fn subdivide_rejects_open_mesh() {
        let m = Mesh::tri(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(subdivide(&m, false), Err(EnsError::Topology(_))));
    }

    #[test]
    fn quad_sphere_counts() {
        for n in [1usize, 2, 16, 50] {
            let m = quad_sphere(n).unwrap();
            assert_eq!(m.vertex_count(), 6 * n * n + 2);
            assert_eq!(m.face_count(), 6 * n * n);
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.is_closed_and_oriented());
            assert!(signed_volume(&m) > 0.0);
        }
        assert_eq!(quad_sphere(16).unwrap().vertex_count(), 1538);
        assert_eq!(quad_sphere(50).unwrap().vertex_count(), 15_002);
        assert!(quad_sphere(0).is_err());
    }
}
