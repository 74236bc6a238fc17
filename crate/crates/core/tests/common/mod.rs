#![allow(dead_code)]

use std::sync::Arc;

use ens_core::fields::SpectralContext;
use ens_core::scenes::{camera_ring, render_ground_truth, Albedo, Light, RingSpec, SceneDataset, TargetShape};
use ens_core::train::TrainConfig;

pub fn ellipsoid_scene(views: usize, res: usize) -> Arc<SceneDataset> {
    let shape = TargetShape::Ellipsoid { a: 0.9, b: 0.6, c: 0.6 };
    let cams = camera_ring(&RingSpec {
        views,
        resolution: res,
        ..RingSpec::default()
    })
    .unwrap();
    Arc::new(render_ground_truth(&shape, &cams, &Light::default(), &Albedo::default(), 0).unwrap())
}

pub fn spectral(cfg: &TrainConfig) -> Option<Arc<SpectralContext>> {
    let m = cfg.resolved().model;
    m.needs_basis().then(|| Arc::new(SpectralContext::build(&m, None).unwrap()))
}
