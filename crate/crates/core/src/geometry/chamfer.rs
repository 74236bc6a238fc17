use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use super::mesh::{Mesh, Vec3};
use crate::error::{EnsError, Result};

type Tree = ImmutableKdTree<f64, u64, 3, 32>;

/// Nearest-neighbour index over a fixed point set.
pub struct PointTree {
    tree: Tree,
    len: usize,
}

impl PointTree {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(EnsError::Argument("nearest-neighbour index over an empty point set".into()));
        }
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Ok(Self {
            tree: Tree::new_from_slice(&raw),
            len: points.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Euclidean distance to the closest indexed point.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.tree.nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z]).distance.sqrt()
    }

    /// Index and Euclidean distance of the closest indexed point.
    pub fn nearest(&self, p: &Vec3) -> (usize, f64) {
        let nn = self.tree.nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z]);
        (nn.item as usize, nn.distance.sqrt())
    }

    /// Mean nearest distance from each query point; summed in input order.
    pub fn mean_distance(&self, query: &[Vec3]) -> f64 {
        let d: Vec<f64> = query.par_iter().map(|p| self.distance(p)).collect();
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Symmetric Chamfer-L1: `(mean_p min_q |p-q| + mean_q min_p |q-p|) / 2`.
pub fn chamfer_l1(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(EnsError::Argument(format!(
            "chamfer_l1 needs non-empty sets, got {} and {} points",
            p.len(),
            q.len()
        )));
    }
    let tp = PointTree::new(p)?;
    let tq = PointTree::new(q)?;
    Ok(0.5 * (tq.mean_distance(p) + tp.mean_distance(q)))
}

/// Chamfer-L1 against a prebuilt index of the reference set.
pub fn chamfer_l1_indexed(p: &[Vec3], q: &[Vec3], q_tree: &PointTree) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(EnsError::Argument("chamfer_l1 needs non-empty sets".into()));
    }
    let tp = PointTree::new(p)?;
    Ok(0.5 * (q_tree.mean_distance(p) + tp.mean_distance(q)))
}

/// Uniform samples on the surface, area-weighted over triangles.
pub fn sample_surface(mesh: &Mesh, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec3>> {
    let tris = mesh.triangles();
    let areas: Vec<f64> = tris
        .iter()
        .map(|&[a, b, c]| {
            let (p, q, r) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            0.5 * (q - p).cross(&(r - p)).norm()
        })
        .collect();
    let pick = WeightedIndex::new(&areas)
        .map_err(|e| EnsError::Argument(format!("cannot sample surface: {e}")))?;
    Ok((0..count)
        .map(|_| {
            let [a, b, c] = tris[pick.sample(rng)];
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let su = u.sqrt();
            let (w0, w1, w2) = (1.0 - su, su * (1.0 - v), su * v);
            mesh.vertices[a] * w0 + mesh.vertices[b] * w1 + mesh.vertices[c] * w2
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute(p: &[Vec3], q: &[Vec3]) -> f64 {
        let one = |a: &[Vec3], b: &[Vec3]| {
            a.iter()
                .map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / a.len() as f64
        };
        0.5 * (one(p, q) + one(q, p))
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identical_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = cloud(&mut rng, 50);
        assert_eq!(chamfer_l1(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn single_pair() {
        let d = chamfer_l1(&[Vec3::zeros()], &[Vec3::x()]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jittered_twins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let q: Vec<Vec3> = p.iter().map(|x| x + Vec3::new(0.1, 0.0, 0.0)).collect();
        let d = chamfer_l1(&p, &q).unwrap();
        assert!((d - brute(&p, &q)).abs() < 1e-12);
        assert!((d - 0.1).abs() < 1e-9, "{d}");
    }

    #[test]
    fn matches_brute_force_with_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = cloud(&mut rng, 200);
        p.extend(std::iter::repeat_n(Vec3::new(0.5, 0.5, 0.5), 40));
        let q = cloud(&mut rng, 150);
        let d = chamfer_l1(&p, &q).unwrap();
        assert!((d - brute(&p, &q)).abs() < 1e-12);
        assert!((d - chamfer_l1(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(chamfer_l1(&[], &[Vec3::x()]), Err(EnsError::Argument(_))));
    }

    #[test]
    fn samples_lie_on_sphere_mesh() {
        let m = crate::geometry::icosphere(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_surface(&m, 500, &mut rng).unwrap();
        assert!(s.iter().all(|p| p.norm() <= 1.0 + 1e-12 && p.norm() > 0.9));
    }
}
