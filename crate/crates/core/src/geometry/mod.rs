//! Meshes on the sphere domain, quality metrics and point-set distances.

mod chamfer;
mod mesh;
mod obj;
mod quality;
mod sphere;

pub use chamfer::{chamfer_l1, chamfer_l1_indexed, sample_surface, PointTree};
pub use mesh::{Faces, Mesh, Topology, Vec3};
pub use obj::{export_obj, import_obj, parse_obj};
pub use quality::{
    degenerate_faces, face_normals, mesh_icr, triangle_icr, vertex_normals, IcrStats, TriangleQuality,
    DEGENERATE_AREA,
};
pub use sphere::{icosahedron, icosphere, quad_sphere, subdivide, ICOSPHERE_MAX_LEVEL, QUAD_SPHERE_MAX_RES};
