use std::fs;
use std::path::{Path, PathBuf};

use super::eigen::{eigenbasis, SpectralBasis};
use super::laplacian::LaplacianPair;
use crate::error::{EnsError, Result};
use crate::geometry::Mesh;

const MAGIC: &[u8; 8] = b"ENSEIGEN";
const VERSION: u32 = 1;

pub fn encode_basis(b: &SpectralBasis) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 8 * (b.eigenvalues.len() + b.functions.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&b.mesh_id.to_le_bytes());
    out.extend_from_slice(&(b.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(b.vertex_count as u64).to_le_bytes());
    for v in b.eigenvalues.iter().chain(&b.functions) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_basis(bytes: &[u8], path: &Path) -> Result<SpectralBasis> {
    let bad = |msg: &str| EnsError::format(path, msg);
    if bytes.len() < 36 || &bytes[..8] != MAGIC {
        return Err(bad("not an eigenbasis cache"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != VERSION {
        return Err(EnsError::Versioning(format!(
            "{}: cache version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let mesh_id = u64_at(12);
    let d = u64_at(20) as usize;
    let n = u64_at(28) as usize;
    let count = d.checked_mul(n + 1).ok_or_else(|| bad("header overflow"))?;
    if bytes.len() != 36 + 8 * count {
        return Err(bad("payload size does not match header"));
    }
    let floats: Vec<f64> = bytes[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(SpectralBasis {
        eigenvalues: floats[..d].to_vec(),
        functions: floats[d..].to_vec(),
        vertex_count: n,
        mesh_id,
    })
}

pub fn save_basis(b: &SpectralBasis, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| EnsError::io(dir, e))?;
    }
    fs::write(path, encode_basis(b)).map_err(|e| EnsError::io(path, e))
}

pub fn load_basis(path: &Path) -> Result<SpectralBasis> {
    let bytes = fs::read(path).map_err(|e| EnsError::io(path, e))?;
    decode_basis(&bytes, path)
}

/// Cache file name for a `(mesh, d)` pair.
pub fn cache_path(dir: &Path, mesh_id: u64, d: usize) -> PathBuf {
    dir.join(format!("eigen_{mesh_id:016x}_{d}.bin"))
}

/// Load the basis from `dir` when a valid entry exists, otherwise compute and store it.
pub fn cached_eigenbasis(mesh: &Mesh, d: usize, dir: Option<&Path>) -> Result<SpectralBasis> {
    let id = mesh.id();
    if let Some(dir) = dir {
        let path = cache_path(dir, id, d);
        if path.exists() {
            match load_basis(&path) {
                Ok(b) if b.mesh_id == id && b.dim() == d && b.vertex_count == mesh.vertex_count() => {
                    log::debug!("eigenbasis cache hit {}", path.display());
                    return Ok(b);
                }
                Ok(_) => log::warn!("eigenbasis cache {} does not match mesh; recomputing", path.display()),
                Err(e) => log::warn!("ignoring unreadable eigenbasis cache: {e}"),
            }
        }
    }
    let lap = LaplacianPair::cotan(mesh)?;
    let basis = eigenbasis(&lap, id, d)?;
    if let Some(dir) = dir {
        save_basis(&basis, &cache_path(dir, id, d))?;
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let m = icosphere(1).unwrap();
        let b = cached_eigenbasis(&m, 9, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), m.id(), 9);
        assert!(path.exists());
        let back = load_basis(&path).unwrap();
        assert_eq!(back, b);
        assert_eq!(cached_eigenbasis(&m, 9, Some(dir.path())).unwrap(), b);
    }

    #[test]
    fn mismatched_cache_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let m = icosphere(1).unwrap();
        let mut fake = cached_eigenbasis(&m, 9, None).unwrap();
        fake.mesh_id ^= 0xff;
        fake.eigenvalues[3] = 99.0;
        save_basis(&fake, &cache_path(dir.path(), m.id(), 9)).unwrap();
        let b = cached_eigenbasis(&m, 9, Some(dir.path())).unwrap();
        assert_eq!(b.mesh_id, m.id());
        assert!(b.eigenvalues[3] < 10.0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = Path::new("x.bin");
        assert!(decode_basis(b"garbage", p).is_err());
        let mut bytes = encode_basis(&cached_eigenbasis(&icosphere(0).unwrap(), 4, None).unwrap());
        bytes.pop();
        assert!(matches!(decode_basis(&bytes, p), Err(EnsError::Format { .. })));
    }
}
