pub mod encode;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod render;
pub mod scenes;
pub mod spectral;
pub mod train;

pub use error::{EnsError, Result};
