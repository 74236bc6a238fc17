use ens_autodiff::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::view::render_view;
use crate::error::Result;
use crate::fields::DeformationModel;
use crate::geometry::{chamfer_l1, sample_surface, IcrStats, Mesh, Vec3};
use crate::render::{psnr, ShaderPair};
use crate::scenes::SceneDataset;

/// Surface samples drawn from a reconstruction for Chamfer distance.
pub const CHAMFER_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Absent when the dataset carries no ground-truth points.
    pub chamfer_l1: Option<f64>,
    pub icr: IcrStats,
    /// Feature-shader PSNR per view over the full frame; empty for bare meshes.
    pub psnr: Vec<f64>,
    pub mean_psnr: Option<f64>,
}

/// Chamfer-L1 between area-uniform samples of `mesh` and `reference`.
pub fn mesh_chamfer(mesh: &Mesh, reference: &[Vec3], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = sample_surface(mesh, CHAMFER_SAMPLES, &mut rng)?;
    chamfer_l1(&samples, reference)
}

/// Geometric metrics of a bare mesh.
pub fn evaluate_mesh(mesh: &Mesh, dataset: &SceneDataset, seed: u64) -> Result<EvalReport> {
    let chamfer_l1 = if dataset.gt_points.is_empty() {
        log::warn!("no ground-truth points; Chamfer distance skipped");
        None
    } else {
        Some(mesh_chamfer(mesh, &dataset.gt_points, seed)?)
    };
    Ok(EvalReport {
        chamfer_l1,
        icr: IcrStats::of_mesh(mesh),
        psnr: Vec::new(),
        mean_psnr: None,
    })
}

/// Geometry and appearance metrics of a model extracted on `domain`.
pub fn evaluate<T: Scalar>(
    model: &DeformationModel<T>,
    shaders: &ShaderPair<T>,
    domain: &Mesh,
    dataset: &SceneDataset,
    seed: u64,
) -> Result<EvalReport> {
    let mesh = model.extract_mesh(domain)?;
    let mut report = evaluate_mesh(&mesh, dataset, seed)?;
    let mut values = Vec::with_capacity(dataset.len());
    for (cam, img) in dataset.cameras.iter().zip(&dataset.images) {
        let view = render_view(model, shaders, domain, cam)?;
        values.push(psnr(&view.base, img, None)?);
    }
    if !values.is_empty() {
        report.mean_psnr = Some(values.iter().sum::<f64>() / values.len() as f64);
    }
    report.psnr = values;
    Ok(report)
}
