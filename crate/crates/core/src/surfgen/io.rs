use std::io::Write;
use std::path::Path;

use super::{SurfaceError, SurfaceMesh};
use crate::geometry::Point;

pub fn write_off(mesh: &SurfaceMesh, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_triangles())?;
    for p in &mesh.vertices {
        writeln!(out, "{:.12e} {:.12e} {:.12e}", p.x, p.y, p.z)?;
    }
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Parse an OFF file with triangular faces; `#` starts a comment.
pub fn parse_off(text: &str) -> Result<SurfaceMesh, SurfaceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: &str| SurfaceError::Format { line, message: message.to_string() };
    let (l, head) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let mut counts_line = None;
    if head != "OFF" {
        // The header keyword may share a line with the counts.
        match head.strip_prefix("OFF") {
            Some(rest) if !rest.trim().is_empty() => counts_line = Some((l, rest.trim())),
            _ => return Err(err(l, "expected OFF header")),
        }
    }
    let (l, counts) = match counts_line {
        Some(c) => c,
        None => lines.next().ok_or_else(|| err(l + 1, "missing counts"))?,
    };
    let c: Vec<usize> = counts
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| err(l, "bad count")))
        .collect::<Result<_, _>>()?;
    if c.len() < 2 {
        return Err(err(l, "expected vertex and face counts"));
    }
    let (nv, nf) = (c[0], c[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| err(0, "unexpected end of vertices"))?;
        let x: Vec<f64> =
            s.split_whitespace().take(3).map(|t| t.parse().map_err(|_| err(l, "bad coordinate"))).collect::<Result<_, _>>()?;
        if x.len() != 3 {
            return Err(err(l, "expected three coordinates"));
        }
        vertices.push(Point::new(x[0], x[1], x[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| err(0, "unexpected end of faces"))?;
        let f: Vec<usize> =
            s.split_whitespace().map(|t| t.parse().map_err(|_| err(l, "bad index"))).collect::<Result<_, _>>()?;
        if f.len() < 4 || f[0] != 3 {
            return Err(err(l, "only triangular faces are supported"));
        }
        if f[1..4].iter().any(|&v| v >= nv) {
            return Err(err(l, "vertex index out of range"));
        }
        triangles.push([f[1] as u32, f[2] as u32, f[3] as u32]);
    }
    Ok(SurfaceMesh::new(vertices, triangles))
}

pub fn read_off(path: impl AsRef<Path>) -> crate::Result<SurfaceMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
    Ok(parse_off(&text)?)
}

#[cfg(test)]
mod tests {
    use super::super::testmeshes::icosphere;
    use super::*;

    #[test]
    fn round_trip() {
        let s = icosphere(1);
        let mut buf = Vec::new();
        write_off(&s, &mut buf).unwrap();
        let back = parse_off(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.triangles, s.triangles);
        for (a, b) in back.vertices.iter().zip(&s.vertices) {
            assert!((a - b).norm() < 1e-11);
        }
    }

    #[test]
    fn errors_carry_lines() {
        let bad = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n";
        match parse_off(bad) {
            Err(SurfaceError::Format { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        assert!(parse_off("PLY\n").is_err());
        let ok = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        assert_eq!(parse_off(ok).unwrap().num_triangles(), 1);
    }
}
