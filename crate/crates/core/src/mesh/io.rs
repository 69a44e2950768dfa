//! Legacy ASCII VTK export and a plain node/element text format.
//!
//! Node/element format (0-based indices, `#` starts a comment line):
//!
//! ```text
//! <num_vertices>
//! x y z            (one line per vertex)
//! <num_tets>
//! a b c d region   (region: 1 = molecular, 2 = solvent)
//! ```

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{MeshError, Region, SurfaceProjection, Tet, TetMesh};
use crate::geometry::Point;

/// A named scalar field attached to points or cells.
#[derive(Debug, Clone, Copy)]
pub struct VtkField<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Write an unstructured grid (cell type 10) with region tags as cell data.
pub fn write_vtk(
    mesh: &TetMesh,
    out: &mut impl Write,
    point_data: &[VtkField<'_>],
    cell_data: &[VtkField<'_>],
) -> io::Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\npbe-afem mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
    }
    let nt = mesh.num_tets();
    let _ = writeln!(s, "CELLS {} {}", nt, nt * 5);
    for t in 0..nt {
        let v = oriented(mesh, t);
        let _ = writeln!(s, "4 {} {} {} {}", v[0], v[1], v[2], v[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("10\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS region int 1\nLOOKUP_TABLE default");
    for t in mesh.tets() {
        let _ = writeln!(s, "{}", t.region.code());
    }
    for f in cell_data {
        check_len(f, nt)?;
        scalars(&mut s, f);
    }
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.num_vertices());
        for f in point_data {
            check_len(f, mesh.num_vertices())?;
            scalars(&mut s, f);
        }
    }
    out.write_all(s.as_bytes())
}

fn check_len(f: &VtkField<'_>, n: usize) -> io::Result<()> {
    if f.values.len() != n {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("field '{}' has {} values, expected {n}", f.name, f.values.len()),
        ));
    }
    Ok(())
}

fn scalars(s: &mut String, f: &VtkField<'_>) {
    let name: String = f.name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in f.values {
        let _ = writeln!(s, "{v:.17e}");
    }
}

/// Vertex order with positive signed volume, as viewers expect.
fn oriented(mesh: &TetMesh, t: usize) -> [u32; 4] {
    let mut v = mesh.tets()[t].vertices;
    if mesh.signed_volume(t) < 0.0 {
        v.swap(2, 3);
    }
    v
}

pub fn write_node_ele(mesh: &TetMesh, out: &mut impl Write) -> io::Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# pbe-afem node/element mesh\n{}", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "{}", mesh.num_tets());
    for t in mesh.tets() {
        let v = t.vertices;
        let _ = writeln!(s, "{} {} {} {} {}", v[0], v[1], v[2], v[3], t.region.code());
    }
    out.write_all(s.as_bytes())
}

/// Parse the node/element format. Each tet is reordered so that its longest
/// edge is the initial refinement edge.
pub fn read_node_ele(
    text: &str,
    interface_projection: Option<SurfaceProjection>,
    boundary_projection: Option<SurfaceProjection>,
) -> Result<TetMesh, MeshError> {
    let mut it = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, message: String| MeshError::Format { line, message };
    let (ln, l) = it.next().ok_or_else(|| err(0, "missing vertex count".into()))?;
    let nv = l.parse::<usize>().map_err(|e| err(ln, format!("bad vertex count '{l}': {e}")))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it.next().ok_or_else(|| err(0, "truncated vertex list".into()))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(ln, format!("bad coordinate: {e}")))?;
        if c.len() != 3 {
            return Err(err(ln, format!("expected 3 coordinates, found {}", c.len())));
        }
        vertices.push(Point::new(c[0], c[1], c[2]));
    }
    let (ln, l) = it.next().ok_or_else(|| err(0, "missing tet count".into()))?;
    let nt = l.parse::<usize>().map_err(|e| err(ln, format!("bad tet count '{l}': {e}")))?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = it.next().ok_or_else(|| err(0, "truncated tet list".into()))?;
        let f: Vec<i64> = l
            .split_whitespace()
            .map(|x| x.parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(ln, format!("bad tet record: {e}")))?;
        if f.len() != 5 {
            return Err(err(ln, format!("expected 4 indices and a region tag, found {} fields", f.len())));
        }
        if f[..4].iter().any(|&v| v < 0 || v as usize >= nv) {
            return Err(err(ln, "vertex index out of range".into()));
        }
        let region = Region::from_code(f[4]).ok_or_else(|| err(ln, format!("unknown region tag {}", f[4])))?;
        let v = [f[0] as u32, f[1] as u32, f[2] as u32, f[3] as u32];
        tets.push(Tet { vertices: longest_edge_first(&vertices, v), region, generation: 0 });
    }
    TetMesh::from_parts(vertices, tets, interface_projection, boundary_projection)
}

/// Put the longest edge at slots (0, 3), the refinement edge of generation 0.
fn longest_edge_first(p: &[Point], v: [u32; 4]) -> [u32; 4] {
    let mut best = (0, 1);
    let mut len = -1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let l = (p[v[i] as usize] - p[v[j] as usize]).norm_squared();
            if l > len {
                len = l;
                best = (i, j);
            }
        }
    }
    let rest: Vec<u32> = (0..4).filter(|&k| k != best.0 && k != best.1).map(|k| v[k]).collect();
    [v[best.0], rest[0], rest[1], v[best.1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_ball_mesh, build_box_mesh, refine, MarkedSet};

    #[test]
    fn node_ele_roundtrip() {
        let m = build_ball_mesh(5.0, 1.0, 1).unwrap();
        let mut buf = Vec::new();
        write_node_ele(&m, &mut buf).unwrap();
        let r = read_node_ele(std::str::from_utf8(&buf).unwrap(), None, None).unwrap();
        assert_eq!(r.num_vertices(), m.num_vertices());
        assert_eq!(r.num_tets(), m.num_tets());
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.count_region(Region::Molecular), m.count_region(Region::Molecular));
        r.audit().unwrap();
    }

    #[test]
    fn imported_mesh_refines() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let mut buf = Vec::new();
        write_node_ele(&m, &mut buf).unwrap();
        let r = read_node_ele(std::str::from_utf8(&buf).unwrap(), None, None).unwrap();
        let f = refine(&r, &MarkedSet::all(&r), 1).unwrap();
        f.audit().unwrap();
    }

    #[test]
    fn node_ele_errors_name_lines() {
        let text = "2\n0 0 0\n1 1 x\n";
        match read_node_ele(text, None, None) {
            Err(MeshError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1\n0 1 2 3 7\n";
        assert!(read_node_ele(text, None, None).is_err());
    }

    #[test]
    fn vtk_layout() {
        let m = build_box_mesh([1.0; 3], [1, 1, 1]).unwrap();
        let u: Vec<f64> = (0..m.num_vertices()).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_vtk(&m, &mut buf, &[VtkField { name: "u", values: &u }], &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# vtk DataFile Version 3.0"));
        assert!(s.contains("POINTS 8 double"));
        assert!(s.contains("CELLS 6 30"));
        assert!(s.contains("POINT_DATA 8"));
        assert!(s.contains("SCALARS u double 1"));
        let bad = [1.0];
        assert!(write_vtk(&m, &mut Vec::new(), &[VtkField { name: "u", values: &bad }], &[]).is_err());
    }
}
