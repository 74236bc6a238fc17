//! Positional encodings: random Fourier features, eigenfunction lookups and octave encodings.

use ens_autodiff::{Graph, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EnsError, Result};
use crate::geometry::Vec3;
use crate::spectral::{blend_rows, Barycentric, SpectralBasis};

/// Frequencies `b_i ~ N(0, sigma^2 I)` for `d/2` sinusoid pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct RffMatrix {
    pub freqs: Vec<[f64; 3]>,
    pub sigma: f64,
    pub seed: u64,
}

impl RffMatrix {
    /// `width` must be even; it is the encoded width, twice the number of frequencies.
    pub fn new(width: usize, sigma: f64, seed: u64) -> Result<Self> {
        if width == 0 || width % 2 != 0 {
            return Err(EnsError::Config(format!("RFF width {width} must be positive and even")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EnsError::Config(format!("RFF sigma {sigma} must be positive")));
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| EnsError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs = (0..width / 2)
            .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        Ok(Self { freqs, sigma, seed })
    }

    pub fn width(&self) -> usize {
        2 * self.freqs.len()
    }

    /// Spectral norm of `B`, via power iteration on `B^T B`.
    pub fn spectral_norm(&self) -> f64 {
        let mut btb = [[0.0; 3]; 3];
        for b in &self.freqs {
            for r in 0..3 {
                for c in 0..3 {
                    btb[r][c] += b[r] * b[c];
                }
            }
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| btb[r][c]);
        m.symmetric_eigenvalues().max().max(0.0).sqrt()
    }

    /// Interleaved `[cos b_1.x, sin b_1.x, cos b_2.x, ...]` per point.
    pub fn encode<T: Scalar>(&self, points: &[Vec3]) -> Tensor<T> {
        let w = self.width();
        let mut data = Vec::with_capacity(points.len() * w);
        for p in points {
            for b in &self.freqs {
                let t = b[0] * p.x + b[1] * p.y + b[2] * p.z;
                data.push(T::c(t.cos()));
                data.push(T::c(t.sin()));
            }
        }
        Tensor::new(points.len(), w, data).expect("width")
    }
}

/// How eigenfunction values enter the intrinsic block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntrinsicScaling {
    #[default]
    Raw,
    /// `phi_i / sqrt(lambda_i)`; the constant function keeps its raw value.
    InvSqrtEigenvalue,
}

/// Selected eigenfunctions of the domain mesh with a per-column scale.
#[derive(Clone, Debug)]
pub struct IntrinsicEncoder {
    pub basis: SpectralBasis,
    pub scaling: IntrinsicScaling,
    scales: Vec<f64>,
}

impl IntrinsicEncoder {
    pub fn new(basis: SpectralBasis, scaling: IntrinsicScaling) -> Self {
        let floor = 1e-8;
        let scales = basis
            .eigenvalues
            .iter()
            .map(|&l| match scaling {
                IntrinsicScaling::Raw => 1.0,
                IntrinsicScaling::InvSqrtEigenvalue if l > floor => 1.0 / l.sqrt(),
                IntrinsicScaling::InvSqrtEigenvalue => 1.0,
            })
            .collect();
        Self { basis, scaling, scales }
    }

    pub fn width(&self) -> usize {
        self.basis.dim()
    }

    pub fn mesh_id(&self) -> u64 {
        self.basis.mesh_id
    }

    fn finish<T: Scalar>(&self, rows: usize, mut values: Vec<f64>) -> Tensor<T> {
        let d = self.width();
        if self.scaling != IntrinsicScaling::Raw {
            for row in values.chunks_mut(d) {
                row.iter_mut().zip(&self.scales).for_each(|(v, s)| *v *= s);
            }
        }
        Tensor::new(rows, d, values.into_iter().map(T::c).collect()).expect("width")
    }

    /// Exact rows for vertices of the basis mesh.
    pub fn encode_vertices<T: Scalar>(&self, ids: &[usize]) -> Result<Tensor<T>> {
        if let Some(&bad) = ids.iter().find(|&&v| v >= self.basis.vertex_count) {
            return Err(EnsError::Argument(format!(
                "vertex {bad} outside basis mesh of {} vertices",
                self.basis.vertex_count
            )));
        }
        let mut values = Vec::with_capacity(ids.len() * self.width());
        for &v in ids {
            values.extend_from_slice(self.basis.row(v));
        }
        Ok(self.finish(ids.len(), values))
    }

    /// Barycentric blend of vertex rows.
    pub fn encode_barycentric<T: Scalar>(&self, bary: &[Barycentric]) -> Tensor<T> {
        let values = blend_rows(&self.basis.functions, self.width(), bary);
        self.finish(bary.len(), values)
    }
}

/// `[gamma_I | gamma_E]` with optional zeroing of either block.
#[derive(Clone, Debug)]
pub struct HybridEncoder {
    pub intrinsic_width: usize,
    pub rff: RffMatrix,
    pub zero_intrinsic: bool,
    pub zero_extrinsic: bool,
}

impl HybridEncoder {
    pub fn width(&self) -> usize {
        self.intrinsic_width + self.rff.width()
    }

    /// Concatenate precomputed intrinsic rows with RFF features of `extrinsic_points`.
    pub fn encode<T: Scalar>(&self, intrinsic: &Tensor<T>, extrinsic_points: &[Vec3]) -> Result<Tensor<T>> {
        if intrinsic.cols() != self.intrinsic_width {
            return Err(EnsError::Config(format!(
                "intrinsic block has {} columns, encoder expects {}",
                intrinsic.cols(),
                self.intrinsic_width
            )));
        }
        if intrinsic.rows() != extrinsic_points.len() {
            return Err(EnsError::Argument(format!(
                "{} intrinsic rows for {} points",
                intrinsic.rows(),
                extrinsic_points.len()
            )));
        }
        let mut gi = intrinsic.clone();
        if self.zero_intrinsic {
            gi.fill(T::zero());
        }
        let mut ge = self.rff.encode::<T>(extrinsic_points);
        if self.zero_extrinsic {
            ge.fill(T::zero());
        }
        Ok(Tensor::hcat(&[&gi, &ge])?)
    }
}

/// `[cos(2^k pi v), sin(2^k pi v)]` per octave `k`, each block ordered xyz.
pub fn octave_encode<T: Scalar>(v: &Tensor<T>, octaves: usize) -> Result<Tensor<T>> {
    if v.cols() != 3 {
        return Err(EnsError::Argument(format!("octave encoding needs 3 columns, got {}", v.cols())));
    }
    let w = 6 * octaves;
    Ok(Tensor::from_fn(v.rows(), w, |r, c| {
        let k = c / 6;
        let axis = c % 3;
        let t = v.get(r, axis) * T::c((1u64 << k) as f64 * std::f64::consts::PI);
        if c % 6 < 3 {
            t.cos()
        } else {
            t.sin()
        }
    }))
}

/// Differentiable counterpart of [`octave_encode`].
pub fn octave_encode_graph<T: Scalar>(g: &mut Graph<T>, v: Var, octaves: usize) -> Result<Var> {
    if g.shape(v)[1] != 3 {
        return Err(EnsError::Argument("octave encoding needs 3 columns".into()));
    }
    let mut parts = Vec::with_capacity(2 * octaves);
    for k in 0..octaves {
        let t = g.scale(v, T::c((1u64 << k) as f64 * std::f64::consts::PI));
        parts.push(g.cos(t));
        parts.push(g.sin(t));
    }
    Ok(g.concat(&parts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;
    use crate::spectral::{eigenbasis_dense, LaplacianPair};
    use rand::Rng;

    #[test]
    fn rff_at_origin_alternates() {
        let rff = RffMatrix::new(16, 0.5, 1).unwrap();
        let e = rff.encode::<f64>(&[Vec3::zeros()]);
        for (i, v) in e.data().iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn rff_pairs_have_unit_norm_and_seed_determinism() {
        let rff = RffMatrix::new(256, 4.0, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let e = rff.encode::<f64>(&pts);
        for r in 0..pts.len() {
            let row = e.row(r);
            assert!(row.iter().all(|v| v.abs() <= 1.0));
            let s: f64 = row.iter().map(|v| v * v).sum();
            assert!((s - 128.0).abs() < 1e-12);
        }
        assert_eq!(RffMatrix::new(256, 4.0, 9).unwrap(), rff);
        assert_ne!(RffMatrix::new(256, 4.0, 10).unwrap().freqs, rff.freqs);
        assert!(RffMatrix::new(7, 1.0, 0).is_err());
    }

    #[test]
    fn rff_frequency_scale_follows_sigma() {
        for sigma in [0.5, 4.0] {
            let rff = RffMatrix::new(20000, sigma, 2).unwrap();
            let var = rff.freqs.iter().flat_map(|b| b.iter()).map(|x| x * x).sum::<f64>() / (3.0 * 10000.0);
            assert!((var.sqrt() - sigma).abs() < 0.03 * sigma);
        }
    }

    #[test]
    fn octave_widths_and_zero_vector() {
        let z = Tensor::<f64>::zeros(2, 3);
        let e4 = octave_encode(&z, 4).unwrap();
        assert_eq!(e4.cols(), 24);
        assert_eq!(octave_encode(&z, 3).unwrap().cols(), 18);
        for c in 0..24 {
            assert_eq!(e4.get(0, c), if c % 6 < 3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn octave_graph_matches_plain() {
        let v = Tensor::<f64>::from_rows(&[[0.3, -0.7, 0.1], [0.9, 0.2, -0.4]]);
        let mut g = Graph::new();
        let x = g.constant(v.clone());
        let y = octave_encode_graph(&mut g, x, 4).unwrap();
        let plain = octave_encode(&v, 4).unwrap();
        for (a, b) in g.value(y).data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hybrid_layout_and_zeroing() {
        let m = icosphere(2).unwrap();
        let lap = LaplacianPair::cotan(&m).unwrap();
        let basis = eigenbasis_dense(&lap, m.id(), 20).unwrap();
        let intr = IntrinsicEncoder::new(basis.clone(), IntrinsicScaling::Raw);
        let ids: Vec<usize> = (0..m.vertex_count()).collect();
        let gi = intr.encode_vertices::<f64>(&ids).unwrap();
        let rff = RffMatrix::new(32, 4.0, 5).unwrap();
        let mut hy = HybridEncoder {
            intrinsic_width: 20,
            rff: rff.clone(),
            zero_intrinsic: false,
            zero_extrinsic: false,
        };
        let h = hy.encode(&gi, &m.vertices).unwrap();
        assert_eq!(h.cols(), 52);
        let ge = rff.encode::<f64>(&m.vertices);
        for v in 0..m.vertex_count() {
            assert_eq!(&h.row(v)[..20], basis.row(v));
            assert_eq!(&h.row(v)[20..], ge.row(v));
        }
        hy.zero_intrinsic = true;
        let h = hy.encode(&gi, &m.vertices).unwrap();
        assert!(h.row(3)[..20].iter().all(|&x| x == 0.0));
        assert_eq!(&h.row(3)[20..], ge.row(3));
        let widths = HybridEncoder {
            intrinsic_width: 200,
            rff: RffMatrix::new(256, 4.0, 0).unwrap(),
            zero_intrinsic: false,
            zero_extrinsic: false,
        };
        assert_eq!(widths.width(), 456);
    }

    #[test]
    fn eigenvalue_scaling_switch() {
        let m = icosphere(1).unwrap();
        let lap = LaplacianPair::cotan(&m).unwrap();
        let basis = eigenbasis_dense(&lap, m.id(), 6).unwrap();
        let enc = IntrinsicEncoder::new(basis.clone(), IntrinsicScaling::InvSqrtEigenvalue);
        let row = enc.encode_vertices::<f64>(&[4]).unwrap();
        assert_eq!(row.get(0, 0), basis.row(4)[0]);
        let expect = basis.row(4)[3] / basis.eigenvalues[3].sqrt();
        assert!((row.get(0, 3) - expect).abs() < 1e-15);
    }
}
