//! Wavefront OBJ subset: `v x y z`, `f i j k` (1-based) and `#` comments.
//!
//! Normal and texture-coordinate records (and grouping/material statements)
//! are skipped on read; face corners written as `i/t/n` keep only `i`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

const SKIPPED: &[&str] = &["vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib"];

pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces: Vec<([i64; 3], usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        match key {
            "v" => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(parse_err(line_no, "vertex needs 3 coordinates"));
                }
                let mut p = [0.0; 3];
                for (k, tok) in coords[..3].iter().enumerate() {
                    p[k] = tok
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| parse_err(line_no, format!("bad coordinate `{tok}`")))?;
                }
                vertices.push(p);
            }
            "f" => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(Error::NonTriangleFace {
                        line: line_no,
                        count: corners.len(),
                    });
                }
                let mut f = [0i64; 3];
                for (k, c) in corners.iter().enumerate() {
                    let head = c.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad face index `{c}`")))?;
                    // negative indices are relative to the vertices read so far
                    f[k] = if i < 0 {
                        vertices.len() as i64 + i + 1
                    } else {
                        i
                    };
                }
                faces.push((f, line_no));
            }
            k if SKIPPED.contains(&k) => {}
            other => return Err(parse_err(line_no, format!("unsupported record `{other}`"))),
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let n = vertices.len();
    let mut tri = Vec::with_capacity(faces.len());
    for (f, line) in faces {
        let mut out = [0usize; 3];
        for k in 0..3 {
            if f[k] < 1 || f[k] > n as i64 {
                return Err(Error::IndexOutOfRange {
                    line,
                    index: f[k],
                    count: n,
                });
            }
            out[k] = (f[k] - 1) as usize;
        }
        if out[0] == out[1] || out[1] == out[2] || out[0] == out[2] {
            return Err(parse_err(line, "degenerate face (repeated vertex)"));
        }
        tri.push(out);
    }
    Mesh::new(vertices, tri)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_obj(&text).map_err(|e| e.in_file(path))
}

/// Serializes with shortest round-trip float formatting, so reloading is exact.
pub fn write_obj(mesh: &Mesh, mut out: impl Write) -> Result<()> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let file = fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_obj(mesh, &mut w)?;
    w.flush().map_err(|e| Error::from(e).in_file(path))?;
    Ok(())
}
