use ens_autodiff::{Graph, Scalar, Tensor, Var};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EnsError, Result};
use crate::geometry::{face_normals, mesh_icr, Mesh, Topology, Vec3, DEGENERATE_AREA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub color: f64,
    pub mask: f64,
    pub normal: f64,
    pub geometry: f64,
    pub icr: f64,
    pub icr_enabled: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            color: 1.0,
            mask: 2.0,
            normal: 0.01,
            geometry: 0.1,
            icr: 5e-3,
            icr_enabled: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("color", self.color),
            ("mask", self.mask),
            ("normal", self.normal),
            ("geometry", self.geometry),
            ("icr", self.icr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnsError::Config(format!("loss weight {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-step loss values before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub color: f64,
    pub mask: f64,
    pub normal: f64,
    pub icr: f64,
}

impl LossComponents {
    pub fn total(&self, w: &LossWeights) -> f64 {
        let icr = if w.icr_enabled { w.icr * self.icr } else { 0.0 };
        w.color * self.color + w.mask * self.mask + w.normal * self.normal + icr
    }

    /// Name of the first non-finite component.
    pub fn non_finite(&self) -> Option<&'static str> {
        [("L_c", self.color), ("L_m", self.mask), ("L_n", self.normal), ("L_ICR", self.icr)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }
}

/// Interior edges whose two faces are both non-degenerate.
pub fn normal_pairs(topo: &Topology, positions: &[Vec3], tris: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let ok: Vec<bool> = tris
        .iter()
        .map(|t| {
            let (a, b, c) = (positions[t[0]], positions[t[1]], positions[t[2]]);
            (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
        })
        .collect();
    topo.interior_pairs().filter(|(_, [l, r])| ok[*l] && ok[*r]).map(|(_, p)| p).collect()
}

/// Mean over edges of `(1 - n_l . n_r)^2`, from unnormalized face normals.
pub fn loss_normal_graph<T: Scalar>(g: &mut Graph<T>, face_cross: Var, pairs: &[[usize; 2]]) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(g.scalar(T::zero()));
    }
    let n = g.normalize_rows(face_cross);
    let l: Vec<usize> = pairs.iter().map(|p| p[0]).collect();
    let r: Vec<usize> = pairs.iter().map(|p| p[1]).collect();
    let nl = g.gather(n, &l)?;
    let nr = g.gather(n, &r)?;
    let d = g.dot(nl, nr)?;
    let d = g.neg(d);
    let d = g.add_scalar(d, T::one());
    let d = g.square(d);
    Ok(g.mean(d))
}

pub fn loss_normal(mesh: &Mesh) -> Result<f64> {
    let tris = mesh.triangles();
    let topo = Topology::build(&tris)?;
    let tri_mesh = mesh.triangulated();
    let normals = face_normals(&tri_mesh);
    let pairs = normal_pairs(&topo, &mesh.vertices, &tris);
    if pairs.is_empty() {
        return Ok(0.0);
    }
    Ok(pairs.iter().map(|[l, r]| (1.0 - normals[*l].dot(&normals[*r])).powi(2)).sum::<f64>() / pairs.len() as f64)
}

/// Mean over triangles of `1 - 2r/R`, with `2r/R = 2|e1 x e2|^2 / (s a b c)` and `s` the semiperimeter.
pub fn loss_icr_graph<T: Scalar>(g: &mut Graph<T>, vertices: Var, tris: &[[usize; 3]]) -> Result<Var> {
    let idx: [Vec<usize>; 3] = [0, 1, 2].map(|k| tris.iter().map(|t| t[k]).collect());
    let p: Vec<Var> = idx.iter().map(|i| g.gather(vertices, i)).collect::<std::result::Result<_, _>>()?;
    let e = [g.sub(p[1], p[2])?, g.sub(p[2], p[0])?, g.sub(p[0], p[1])?];
    let mut lens = Vec::with_capacity(3);
    for &ek in &e {
        let sq = g.dot(ek, ek)?;
        let sq = g.add_scalar(sq, T::c(1e-30));
        lens.push(g.sqrt(sq));
    }
    let cross = g.cross(e[2], e[1])?;
    let c2 = g.dot(cross, cross)?;
    let perim = g.add(lens[0], lens[1])?;
    let perim = g.add(perim, lens[2])?;
    let prod = g.mul(lens[0], lens[1])?;
    let prod = g.mul(prod, lens[2])?;
    let den = g.mul(perim, prod)?;
    let den = g.add_scalar(den, T::c(1e-30));
    let ratio = g.div(c2, den)?;
    // perimeter = 2s, so 2|x|^2/(s abc) = 4|x|^2/(perimeter abc)
    let icr = g.scale(ratio, T::c(4.0));
    let one_minus = g.neg(icr);
    let one_minus = g.add_scalar(one_minus, T::one());
    Ok(g.mean(one_minus))
}

pub fn loss_icr(mesh: &Mesh) -> f64 {
    let v = mesh_icr(mesh);
    v.iter().map(|x| 1.0 - x).sum::<f64>() / v.len().max(1) as f64
}

/// `mean |gt - pred|` over all entries; `gt` is a constant.
pub fn mean_abs_error<T: Scalar>(g: &mut Graph<T>, gt: &Tensor<T>, pred: Var) -> Result<Var> {
    let gt = g.constant(gt.clone());
    let d = g.sub(gt, pred)?;
    let d = g.abs(d);
    Ok(g.mean(d))
}

/// `mean |I - I_z| + lambda_g mean |I - I|` over sampled pixels, per-channel L1.
pub fn loss_photometric<T: Scalar>(g: &mut Graph<T>, gt: &Tensor<T>, base: Var, full: Var, lambda_g: f64) -> Result<Var> {
    if gt.rows() == 0 {
        return Err(EnsError::Argument("photometric loss over an empty pixel set".into()));
    }
    let a = mean_abs_error(g, gt, base)?;
    if lambda_g == 0.0 {
        return Ok(a);
    }
    let b = mean_abs_error(g, gt, full)?;
    let b = g.scale(b, T::c(lambda_g));
    Ok(g.add(a, b)?)
}

/// Uniform sample without replacement of `fraction` of the pixels where both masks exceed 0.5,
/// falling back to the union when they do not overlap. `None` when both masks are empty.
pub fn sample_pixels(gt: &[f64], pred: &[f64], fraction: f64, rng: &mut impl Rng) -> Result<Option<Vec<usize>>> {
    if gt.len() != pred.len() {
        return Err(EnsError::Argument("sample_pixels: mask sizes differ".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EnsError::Argument(format!("pixel fraction {fraction} outside (0, 1]")));
    }
    let mut pool: Vec<usize> = (0..gt.len()).filter(|&p| gt[p] > 0.5 && pred[p] > 0.5).collect();
    if pool.is_empty() {
        pool = (0..gt.len()).filter(|&p| gt[p] > 0.5 || pred[p] > 0.5).collect();
        if pool.is_empty() {
            return Ok(None);
        }
        log::debug!("masks do not overlap; sampling from their union");
    }
    let count = ((fraction * pool.len() as f64).round() as usize).clamp(1, pool.len());
    let mut picked: Vec<usize> = sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    Ok(Some(picked))
}
