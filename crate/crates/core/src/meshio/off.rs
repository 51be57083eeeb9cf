use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse an OFF mesh. Accepts the `OFF<nv> <nf> <ne>` header variant where the
/// counts are glued onto the keyword, `#` comments, and polygon faces (fan
/// triangulated). Trailing per-face color values are ignored.
pub fn parse_off(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(1, format!("not UTF-8: {e}")))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let last_line = text.lines().count().max(1);

    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(header_line, "missing OFF header"))?
        .trim();
    let (counts_line, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(last_line, "truncated: missing counts"))?
    } else {
        (header_line, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(counts_line, format!("bad counts `{counts}`")))?;
    if counts.len() < 2 {
        return Err(parse_err(counts_line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(last_line, "truncated: missing vertices"))?;
        let xyz: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, format!("bad vertex `{l}`")))?;
        if xyz.len() != 3 || !xyz.iter().all(|v| v.is_finite()) {
            return Err(parse_err(ln, format!("bad vertex `{l}`")));
        }
        vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(last_line, "truncated: missing faces"))?;
        let mut toks = l.split_whitespace();
        let k: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, format!("bad face `{l}`")))?;
        if k < 3 {
            return Err(parse_err(ln, format!("face with {k} vertices")));
        }
        let idx: Vec<usize> = toks
            .take(k)
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, format!("bad face index in `{l}`")))?;
        if idx.len() != k {
            return Err(parse_err(ln, format!("face lists {} of {k} indices", idx.len())));
        }
        if let Some(bad) = idx.iter().find(|&&i| i >= nv) {
            return Err(parse_err(ln, format!("face index {bad} out of range ({nv} vertices)")));
        }
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn serialize_off(mesh: &Mesh) -> String {
    let mut out = format!("OFF\n{} {} 0\n", mesh.vertices.len(), mesh.faces.len());
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}
