use std::collections::HashMap;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{EnsError, Result};

pub type Vec3 = Vector3<f64>;

/// Face list of a mesh: all triangles or all quads.
#[derive(Clone, Debug, PartialEq)]
pub enum Faces {
    Tri(Vec<[usize; 3]>),
    Quad(Vec<[usize; 4]>),
}

impl Faces {
    pub fn len(&self) -> usize {
        match self {
            Faces::Tri(f) => f.len(),
            Faces::Quad(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        match self {
            Faces::Tri(_) => 3,
            Faces::Quad(_) => 4,
        }
    }

    /// Vertex indices of face `i` in cyclic order.
    pub fn face(&self, i: usize) -> &[usize] {
        match self {
            Faces::Tri(f) => &f[i],
            Faces::Quad(f) => &f[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |i| self.face(i))
    }
}

/// Indexed polygon surface.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Faces,
}

impl Mesh {
    /// Validates index range and rejects faces with repeated indices.
    pub fn new(vertices: Vec<Vec3>, faces: Faces) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(EnsError::Argument(format!(
                    "face {fi} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            for a in 0..f.len() {
                for b in a + 1..f.len() {
                    if f[a] == f[b] {
                        return Err(EnsError::Argument(format!("face {fi} repeats vertex {}", f[a])));
                    }
                }
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn tri(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::new(vertices, Faces::Tri(faces))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_triangle_mesh(&self) -> bool {
        matches!(self.faces, Faces::Tri(_))
    }

    /// Triangle list; quads `(a, b, c, d)` split into `(a, b, c)` and `(a, c, d)`.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        match &self.faces {
            Faces::Tri(f) => f.clone(),
            Faces::Quad(f) => f
                .iter()
                .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
                .collect(),
        }
    }

    /// Same vertices with quads split into triangles.
    pub fn triangulated(&self) -> Mesh {
        Mesh {
            vertices: self.vertices.clone(),
            faces: Faces::Tri(self.triangles()),
        }
    }

    /// Unique undirected polygon edges `(i, j)` with `i < j`, in first-seen order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut edges = Vec::new();
        for f in self.faces.iter() {
            for k in 0..f.len() {
                let (a, b) = (f[k], f[(k + 1) % f.len()]);
                let key = [a.min(b), a.max(b)];
                if seen.insert(key, ()).is_none() {
                    edges.push(key);
                }
            }
        }
        edges
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edges().len() as i64 + self.face_count() as i64
    }

    /// Every edge has exactly two incident faces traversing it in opposite directions.
    pub fn is_closed_and_oriented(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in self.faces.iter() {
            for k in 0..f.len() {
                *directed.entry((f[k], f[(k + 1) % f.len()])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Stable identifier of geometry and connectivity, used to bind caches to meshes.
    pub fn id(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_bits().to_le_bytes());
            }
        }
        h.update((self.faces.arity() as u64).to_le_bytes());
        for f in self.faces.iter() {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// Mean length of polygon edges.
    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .sum::<f64>()
            / edges.len() as f64
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles()
            .iter()
            .map(|&[a, b, c]| {
                let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                0.5 * (q - p).cross(&(r - p)).norm()
            })
            .sum()
    }
}

/// Edge list plus incident faces of a triangle mesh.
///
/// The left face of edge `(i, j)`, `i < j`, is the face that traverses
/// `i -> j` in its cyclic order; the right face traverses `j -> i`. Boundary
/// edges have no right face.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    pub edge_faces: Vec<(usize, Option<usize>)>,
}

impl Topology {
    /// Fails on edges with more than two incident faces or inconsistent orientation.
    pub fn build(faces: &[[usize; 3]]) -> Result<Self> {
        let mut index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut left: Vec<Option<usize>> = Vec::new();
        let mut right: Vec<Option<usize>> = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    left.push(None);
                    right.push(None);
                    edges.len() - 1
                });
                let slot = if a < b { &mut left[e] } else { &mut right[e] };
                if slot.is_some() {
                    return Err(EnsError::Topology(format!(
                        "edge ({}, {}) is traversed twice in the same direction or has more than two faces",
                        key[0], key[1]
                    )));
                }
                *slot = Some(fi);
            }
        }
        let mut edge_faces = Vec::with_capacity(edges.len());
        for (e, key) in edges.iter().enumerate() {
            match (left[e], right[e]) {
                (Some(l), r) => edge_faces.push((l, r)),
                (None, Some(r)) => edge_faces.push((r, None)),
                (None, None) => unreachable!("edge {key:?} without faces"),
            }
        }
        Ok(Self { edges, edge_faces })
    }

    /// Same as [`Topology::build`] but also requires every edge to have two faces.
    pub fn build_closed(faces: &[[usize; 3]]) -> Result<Self> {
        let t = Self::build(faces)?;
        if let Some((e, _)) = t.edge_faces.iter().enumerate().find(|(_, (_, r))| r.is_none()) {
            return Err(EnsError::Topology(format!(
                "edge ({}, {}) has one incident face",
                t.edges[e][0], t.edges[e][1]
            )));
        }
        Ok(t)
    }

    /// Edges with a face on both sides.
    pub fn interior_pairs(&self) -> impl Iterator<Item = (usize, [usize; 2])> + '_ {
        self.edge_faces
            .iter()
            .enumerate()
            .filter_map(|(e, &(l, r))| r.map(|r| (e, [l, r])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> Mesh {
        let v = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        Mesh::tri(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::zeros(); 3];
        assert!(Mesh::tri(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::tri(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn tetrahedron_counts() {
        let m = tetrahedron();
        assert_eq!(m.edges().len(), 6);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_closed_and_oriented());
    }

    #[test]
    fn left_face_traverses_increasing_direction() {
        let m = tetrahedron();
        let faces = m.triangles();
        let t = Topology::build_closed(&faces).unwrap();
        for (e, &[i, j]) in t.edges.iter().enumerate() {
            let (l, r) = t.edge_faces[e];
            let fl = faces[l];
            let fr = faces[r.unwrap()];
            let has = |f: [usize; 3], a: usize, b: usize| (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
            assert!(has(fl, i, j));
            assert!(has(fr, j, i));
        }
    }

    #[test]
    fn open_and_non_manifold_meshes() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::x()];
        let open = [[0, 1, 2]];
        assert!(Topology::build(&open).is_ok());
        assert!(Topology::build_closed(&open).is_err());
        let fan = [[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(matches!(Topology::build(&fan), Err(EnsError::Topology(_))));
        let _ = v;
    }

    #[test]
    fn id_depends_on_content() {
        let a = tetrahedron();
        let mut b = a.clone();
        assert_eq!(a.id(), b.id());
        b.vertices[0].x += 1e-12;
        assert_ne!(a.id(), b.id());
    }
}
