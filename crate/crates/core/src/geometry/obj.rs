use std::fs;
use std::io::Write;
use std::path::Path;

use super::mesh::{Faces, Mesh, Vec3};
use crate::error::{EnsError, Result};

/// Write `v`/`f` records with 1-based indices.
pub fn export_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| EnsError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| EnsError::io(path, e);
    for v in &mesh.vertices {
        writeln!(w, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z).map_err(io)?;
    }
    for f in mesh.faces.iter() {
        write!(w, "f").map_err(io)?;
        for &i in f {
            write!(w, " {}", i + 1).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn import_obj(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|e| EnsError::io(path, e))?;
    parse_obj(&text, path)
}

/// Parse OBJ text. Only `v` and `f` are interpreted; `f` tokens may carry `/vt/vn` suffixes.
pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, msg: String| EnsError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut vertices = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<usize>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(line_no, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(err(line_no, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| err(line_no, format!("bad face index '{t}'")))?;
                    if i < 1 {
                        return Err(err(line_no, format!("face index {i} must be positive")));
                    }
                    idx.push(i as usize - 1);
                }
                if idx.len() != 3 && idx.len() != 4 {
                    return Err(err(line_no, format!("faces must have 3 or 4 vertices, got {}", idx.len())));
                }
                raw_faces.push((line_no, idx));
            }
            _ => {}
        }
    }
    for (line_no, f) in &raw_faces {
        if let Some(&i) = f.iter().find(|&&i| i >= vertices.len()) {
            return Err(err(
                *line_no,
                format!("face index {} out of range ({} vertices)", i + 1, vertices.len()),
            ));
        }
    }
    let arity = raw_faces.first().map_or(3, |(_, f)| f.len());
    if let Some((line_no, _)) = raw_faces.iter().find(|(_, f)| f.len() != arity) {
        return Err(err(*line_no, "mixed triangle and quad faces".into()));
    }
    let faces = if arity == 3 {
        Faces::Tri(raw_faces.into_iter().map(|(_, f)| [f[0], f[1], f[2]]).collect())
    } else {
        Faces::Quad(raw_faces.into_iter().map(|(_, f)| [f[0], f[1], f[2], f[3]]).collect())
    };
    Mesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, quad_sphere};

    #[test]
    fn icosphere_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ico.obj");
        let m = icosphere(0).unwrap();
        export_obj(&m, &path).unwrap();
        let back = import_obj(&path).unwrap();
        assert_eq!(back.faces, m.faces);
        let err = m
            .vertices
            .iter()
            .zip(&back.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn quad_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.obj");
        let m = quad_sphere(3).unwrap();
        export_obj(&m, &path).unwrap();
        let back = import_obj(&path).unwrap();
        assert!(matches!(back.faces, Faces::Quad(_)));
        assert_eq!(back.faces, m.faces);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\n# comment\nf 1 2 4\n";
        match parse_obj(text, Path::new("x.obj")) {
            Err(EnsError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_records() {
        let p = Path::new("x.obj");
        assert!(matches!(parse_obj("v 0 zero 0\n", p), Err(EnsError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2\n", p), Err(EnsError::Parse { line: 3, .. })));
        let ok = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n", p).unwrap();
        assert_eq!(ok.faces, Faces::Tri(vec![[0, 1, 2]]));
    }
}
