//! Cameras, hard rasterization, differentiable interpolation, soft silhouettes and neural shading.

mod camera;
mod image;
mod interp;
mod mask;
mod raster;
mod shade;

pub use camera::{Camera, CameraRecord, MIN_DEPTH};
pub use image::{psnr, FloatImage};
pub use interp::{
    blend, corner_indices, face_cross, interpolate, perspective_barycentrics, project_graph, vertex_normals_graph,
    PixelSet,
};
pub use mask::{silhouette_edges, soft_mask, MaskParams, SoftMask};
pub use raster::{front_facing, rasterize, GBuffer, NO_FACE};
pub use shade::{view_directions, ShadeVars, ShaderConfig, ShaderPair};
