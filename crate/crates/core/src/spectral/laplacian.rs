use crate::error::{EnsError, Result};
use crate::geometry::{Faces, Mesh, Topology, Vec3};

/// Cotan stiffness `W` in CSR form plus the lumped mixed-Voronoi mass diagonal `A`.
///
/// Off-diagonal `W_ij = -(cot a_ij + cot b_ij) / 2`; the diagonal makes every row sum to zero,
/// so `W` is positive semi-definite.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPair {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub mass: Vec<f64>,
}

fn cot(u: Vec3, v: Vec3) -> f64 {
    let s = u.cross(&v).norm();
    if s <= 0.0 {
        0.0
    } else {
        u.dot(&v) / s
    }
}

impl LaplacianPair {
    pub fn cotan(mesh: &Mesh) -> Result<Self> {
        let Faces::Tri(faces) = &mesh.faces else {
            return Err(EnsError::Topology("cotan Laplacian needs a triangle mesh".into()));
        };
        Topology::build_closed(faces)?;
        let n = mesh.vertex_count();
        if let Some(i) = mesh.vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(EnsError::Numeric(format!("vertex {i} is not finite")));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut mass = vec![0.0; n];
        for &[i, j, k] in faces {
            let (pi, pj, pk) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
            let area = 0.5 * (pj - pi).cross(&(pk - pi)).norm();
            if area <= 0.0 {
                continue;
            }
            // cotangent of the angle at each corner
            let ci = cot(pj - pi, pk - pi);
            let cj = cot(pk - pj, pi - pj);
            let ck = cot(pi - pk, pj - pk);
            for (a, b, c) in [(j, k, ci), (k, i, cj), (i, j, ck)] {
                rows[a].push((b, -0.5 * c));
                rows[b].push((a, -0.5 * c));
            }
            let obtuse = [(pj - pi).dot(&(pk - pi)) < 0.0, (pk - pj).dot(&(pi - pj)) < 0.0, (pi - pk).dot(&(pj - pk)) < 0.0];
            if obtuse.iter().any(|&o| o) {
                for (v, o) in [i, j, k].into_iter().zip(obtuse) {
                    mass[v] += if o { area / 2.0 } else { area / 4.0 };
                }
            } else {
                let (lij, ljk, lki) = ((pj - pi).norm_squared(), (pk - pj).norm_squared(), (pi - pk).norm_squared());
                mass[i] += (lij * ck + lki * cj) / 8.0;
                mass[j] += (lij * ck + ljk * ci) / 8.0;
                mass[k] += (ljk * ci + lki * cj) / 8.0;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let start = col_idx.len();
            let mut diag = 0.0;
            let mut diag_slot = None;
            for &(c, v) in row.iter() {
                if col_idx.len() > start && *col_idx.last().expect("non-empty") == c {
                    *values.last_mut().expect("non-empty") += v;
                } else {
                    if diag_slot.is_none() && c > r {
                        diag_slot = Some(col_idx.len());
                        col_idx.push(r);
                        values.push(0.0);
                    }
                    col_idx.push(c);
                    values.push(v);
                }
                diag -= v;
            }
            let slot = match diag_slot {
                Some(s) => s,
                None => {
                    col_idx.push(r);
                    values.push(0.0);
                    col_idx.len() - 1
                }
            };
            values[slot] = diag;
            row_ptr.push(col_idx.len());
        }
        if mass.iter().any(|&m| m <= 0.0 || !m.is_finite()) {
            return Err(EnsError::Numeric("mass matrix has a non-positive entry".into()));
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            mass,
        })
    }

    /// Entry `W_ij` (zero outside the sparsity pattern).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j)
            .map_or(0.0, |k| self.values[self.row_ptr[i] + k])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// `y = W x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, w)| w * x[j]).sum()).collect()
    }

    /// Frobenius norm of `W`.
    pub fn stiffness_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Lower-triangle triplets of `W + shift * A`.
    pub fn shifted_lower_triplets(&self, shift: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz() / 2 + self.n);
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                if j > i {
                    continue;
                }
                let v = if i == j { w + shift * self.mass[i] } else { w };
                out.push((i, j, v));
            }
        }
        out
    }
}
