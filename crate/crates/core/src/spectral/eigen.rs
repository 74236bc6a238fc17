use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::laplacian::LaplacianPair;
use crate::error::{EnsError, Result};

/// Lowest generalized eigenpairs `W phi = lambda A phi`, eigenfunctions stored
/// per vertex as an `n x d` row-major table.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    pub functions: Vec<f64>,
    pub vertex_count: usize,
    pub mesh_id: u64,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Values of every eigenfunction at vertex `v`.
    pub fn row(&self, v: usize) -> &[f64] {
        let d = self.dim();
        &self.functions[v * d..(v + 1) * d]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.vertex_count).map(|v| self.row(v)[i]).collect()
    }

    /// Columns `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<SpectralBasis> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.dim()) {
            return Err(EnsError::Argument(format!("eigenfunction {bad} outside basis of {}", self.dim())));
        }
        let mut functions = Vec::with_capacity(self.vertex_count * indices.len());
        for v in 0..self.vertex_count {
            let row = self.row(v);
            functions.extend(indices.iter().map(|&i| row[i]));
        }
        Ok(SpectralBasis {
            eigenvalues: indices.iter().map(|&i| self.eigenvalues[i]).collect(),
            functions,
            vertex_count: self.vertex_count,
            mesh_id: self.mesh_id,
        })
    }

    /// `phi_i^T A phi_j`.
    pub fn mass_inner(&self, lap: &LaplacianPair, i: usize, j: usize) -> f64 {
        (0..self.vertex_count)
            .map(|v| self.row(v)[i] * lap.mass[v] * self.row(v)[j])
            .sum()
    }

    /// `|W phi_i - lambda_i A phi_i|`.
    pub fn residual(&self, lap: &LaplacianPair, i: usize) -> f64 {
        let phi = self.column(i);
        let w = lap.apply(&phi);
        w.iter()
            .zip(&phi)
            .zip(&lap.mass)
            .map(|((w, p), a)| (w - self.eigenvalues[i] * a * p).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn check_request(lap: &LaplacianPair, d: usize) -> Result<()> {
    if d == 0 || d > lap.n {
        return Err(EnsError::Argument(format!(
            "requested {d} eigenpairs from a {}-vertex mesh",
            lap.n
        )));
    }
    if lap.values.iter().chain(&lap.mass).any(|v| !v.is_finite()) {
        return Err(EnsError::Numeric("Laplacian has non-finite entries".into()));
    }
    Ok(())
}

/// Flip `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn assemble(lap: &LaplacianPair, mesh_id: u64, mut values: Vec<f64>, columns: Vec<Vec<f64>>) -> SpectralBasis {
    let floor = 1e-10 * lap.stiffness_norm();
    for l in &mut values {
        if *l < 0.0 && *l > -floor {
            *l = 0.0;
        }
    }
    let d = columns.len();
    let n = lap.n;
    let mut functions = vec![0.0; n * d];
    for (i, mut col) in columns.into_iter().enumerate() {
        fix_sign(&mut col);
        for v in 0..n {
            functions[v * d + i] = col[v];
        }
    }
    SpectralBasis {
        eigenvalues: values,
        functions,
        vertex_count: n,
        mesh_id,
    }
}

/// Dense route: eigendecomposition of `A^{-1/2} W A^{-1/2}`, then `phi = A^{-1/2} y`.
pub fn eigenbasis_dense(lap: &LaplacianPair, mesh_id: u64, d: usize) -> Result<SpectralBasis> {
    check_request(lap, d)?;
    let n = lap.n;
    let inv_sqrt: Vec<f64> = lap.mass.iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, w) in lap.row(i) {
            m[(i, j)] = w * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| EnsError::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<f64> = (0..d).map(|k| s[k]).collect();
    let columns = (0..d)
        .map(|k| (0..n).map(|v| u[(v, k)] * inv_sqrt[v]).collect())
        .collect();
    Ok(assemble(lap, mesh_id, values, columns))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseEigenOptions {
    /// Subspace width; at least `d + 8` is used.
    pub block: usize,
    /// Positive shift making `W + shift A` definite.
    pub shift: f64,
    /// Stop when every residual is below `tol * |W|`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SparseEigenOptions {
    fn default() -> Self {
        Self {
            block: 0,
            shift: 1e-2,
            tol: 1e-9,
            max_iter: 300,
            seed: 0x5eed,
        }
    }
}

/// Gram-Schmidt in the `A` inner product, run twice for stability.
fn mass_orthonormalize(cols: &mut [Vec<f64>], mass: &[f64]) -> Result<()> {
    for _ in 0..2 {
        for j in 0..cols.len() {
            let (done, rest) = cols.split_at_mut(j);
            let c = &mut rest[0];
            for q in done.iter() {
                let dot: f64 = q.iter().zip(c.iter()).zip(mass).map(|((a, b), m)| a * b * m).sum();
                c.iter_mut().zip(q).for_each(|(x, qv)| *x -= dot * qv);
            }
            let norm = c.iter().zip(mass).map(|(x, m)| x * x * m).sum::<f64>().sqrt();
            if !(norm > 1e-300) {
                return Err(EnsError::Numeric("subspace collapsed during orthonormalization".into()));
            }
            c.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(())
}

/// Sparse route: shift-invert block subspace iteration with Rayleigh-Ritz
/// extraction, backed by a sparse Cholesky factorization of `W + shift A`.
pub fn eigenbasis_sparse(
    lap: &LaplacianPair,
    mesh_id: u64,
    d: usize,
    opts: SparseEigenOptions,
) -> Result<SpectralBasis> {
    check_request(lap, d)?;
    let n = lap.n;
    let b = opts.block.max(d + 8).min(n);
    let triplets: Vec<Triplet<usize, usize, f64>> = lap
        .shifted_lower_triplets(opts.shift)
        .into_iter()
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let k = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| EnsError::Numeric(format!("sparse assembly failed: {e:?}")))?;
    let llt = k
        .sp_cholesky(Side::Lower)
        .map_err(|e| EnsError::Numeric(format!("sparse Cholesky failed: {e:?}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    mass_orthonormalize(&mut x, &lap.mass)?;
    let norm_w = lap.stiffness_norm();
    let mut theta = vec![0.0; b];
    for iter in 0..opts.max_iter {
        let mut rhs = Mat::<f64>::from_fn(n, b, |i, j| lap.mass[i] * x[j][i]);
        llt.solve_in_place(rhs.as_mut());
        let mut y: Vec<Vec<f64>> = (0..b).map(|j| (0..n).map(|i| rhs[(i, j)]).collect()).collect();
        mass_orthonormalize(&mut y, &lap.mass)?;
        let wy: Vec<Vec<f64>> = y.iter().map(|c| lap.apply(c)).collect();
        let h = Mat::<f64>::from_fn(b, b, |r, c| y[r].iter().zip(&wy[c]).map(|(p, q)| p * q).sum());
        let h = Mat::<f64>::from_fn(b, b, |r, c| 0.5 * (h[(r, c)] + h[(c, r)]));
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| EnsError::Numeric(format!("Ritz eigendecomposition failed: {e:?}")))?;
        let q = evd.U();
        for (j, t) in theta.iter_mut().enumerate() {
            *t = evd.S()[j];
        }
        x = (0..b)
            .map(|j| {
                let mut col = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let c = q[(r, j)];
                    col.iter_mut().zip(yr).for_each(|(o, v)| *o += c * v);
                }
                col
            })
            .collect();
        let worst = (0..d)
            .map(|j| {
                let w = lap.apply(&x[j]);
                w.iter()
                    .zip(&x[j])
                    .zip(&lap.mass)
                    .map(|((w, p), a)| (w - theta[j] * a * p).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        log::debug!("subspace iteration {iter}: worst residual {worst:e}");
        if worst <= opts.tol * norm_w {
            x.truncate(d);
            return Ok(assemble(lap, mesh_id, theta[..d].to_vec(), x));
        }
    }
    Err(EnsError::Numeric(format!(
        "subspace iteration did not converge in {} iterations",
        opts.max_iter
    )))
}

/// Vertex count above which [`eigenbasis`] switches to the sparse route.
pub const DENSE_LIMIT: usize = 4000;

/// Lowest `d` eigenpairs, dense for small meshes and sparse otherwise.
pub fn eigenbasis(lap: &LaplacianPair, mesh_id: u64, d: usize) -> Result<SpectralBasis> {
    if lap.n <= DENSE_LIMIT {
        eigenbasis_dense(lap, mesh_id, d)
    } else {
        eigenbasis_sparse(lap, mesh_id, d, SparseEigenOptions::default())
    }
}
