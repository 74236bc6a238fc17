//! Cotan Laplacian, generalized eigenbasis of the domain mesh and point interpolation.

mod cache;
mod eigen;
mod interp;
mod laplacian;
mod select;

pub use cache::{cache_path, cached_eigenbasis, decode_basis, encode_basis, load_basis, save_basis};
pub use eigen::{eigenbasis, eigenbasis_dense, eigenbasis_sparse, SparseEigenOptions, SpectralBasis, DENSE_LIMIT};
pub use interp::{blend_rows, interpolate_to_points, Barycentric, PointLocator};
pub use laplacian::LaplacianPair;
pub use select::{select_eigenfunctions, EigenPolicy};
