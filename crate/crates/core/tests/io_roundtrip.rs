use pbe_afem::afem::{self, AfemOptions};
use pbe_afem::mesh::{build_ball_mesh, read_node_ele, refine, write_node_ele, write_vtk, MarkedSet, SurfaceProjection, VtkField};
use pbe_afem::molio::{parse_pqr, BornIon};
use pbe_afem::surfgen::{self, GridSpec};
use pbe_afem::Point;
use proptest::prelude::*;

#[test]
fn node_ele_round_trip_preserves_the_solution() {
    let m = refine(&build_ball_mesh(5.0, 1.0, 1).unwrap(), &MarkedSet::from_indices(vec![0, 7, 100]), 2).unwrap();
    let mut buf = Vec::new();
    write_node_ele(&m, &mut buf).unwrap();
    let back = read_node_ele(
        std::str::from_utf8(&buf).unwrap(),
        Some(SurfaceProjection::sphere(1.0)),
        Some(SurfaceProjection::sphere(5.0)),
    )
    .unwrap();
    back.audit().unwrap();
    assert_eq!(back.vertices(), m.vertices());
    assert_eq!(back.num_tets(), m.num_tets());
    assert!((back.total_volume() - m.total_volume()).abs() < 1e-12);

    let cs = BornIon::reference().charge_system();
    let a = afem::solve_on(m, &cs, &AfemOptions::default(), None).unwrap();
    let b = afem::solve_on(back, &cs, &AfemOptions::default(), None).unwrap();
    let diff = a.solution.values.iter().zip(&b.solution.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn vtk_has_consistent_sections() {
    let m = build_ball_mesh(5.0, 1.0, 1).unwrap();
    let u: Vec<f64> = (0..m.num_vertices()).map(|i| i as f64).collect();
    let eta: Vec<f64> = vec![1.0; m.num_tets()];
    let mut buf = Vec::new();
    write_vtk(&m, &mut buf, &[VtkField { name: "u", values: &u }], &[VtkField { name: "eta2", values: &eta }]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains(&format!("POINTS {} double", m.num_vertices())));
    assert!(text.contains(&format!("CELLS {} {}", m.num_tets(), 5 * m.num_tets())));
    assert!(text.contains(&format!("CELL_TYPES {}", m.num_tets())));
    assert!(text.contains("SCALARS u double") && text.contains("SCALARS eta2 double"));
    // Every cell is written with positive orientation.
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.iter().position(|l| l.starts_with("CELLS")).unwrap() + 1;
    for l in &lines[start..start + m.num_tets()] {
        let v: Vec<usize> = l.split_whitespace().skip(1).map(|s| s.parse().unwrap()).collect();
        let p: Vec<Point> = v.iter().map(|&i| m.vertex(i as u32)).collect();
        let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0]));
        assert!(vol > 0.0);
    }
}

#[test]
fn off_round_trip_of_a_molecular_surface() {
    let atoms = [(Point::new(0.0, 0.0, 0.0), 1.2), (Point::new(1.3, 0.2, 0.0), 1.0)];
    let spec = GridSpec::around(&atoms, 0.2, 1.5).unwrap();
    let s = surfgen::marching_cubes(&surfgen::gaussian_density(&atoms, -0.5, &spec).unwrap(), 1.0).unwrap();
    let mut buf = Vec::new();
    surfgen::write_off(&s, &mut buf).unwrap();
    let back = surfgen::parse_off(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.triangles, s.triangles);
    assert!(back.is_watertight());
    assert!((back.signed_volume() - s.signed_volume()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pqr_round_trip(
        atoms in prop::collection::vec(
            ((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), -2.0f64..2.0, 0.1f64..3.0, any::<bool>()),
            1..20,
        )
    ) {
        let mut text = String::from("REMARK generated\n");
        for (i, ((x, y, z), q, r, chain)) in atoms.iter().enumerate() {
            let c = if *chain { " A" } else { "" };
            text.push_str(&format!("ATOM {} CA ALA{c} {} {x} {y} {z} {q} {r}\n", i + 1, i / 3 + 1));
        }
        let s = parse_pqr(&text).unwrap();
        prop_assert_eq!(s.atoms.len(), atoms.len());
        let back = parse_pqr(&s.to_pqr_string()).unwrap();
        prop_assert_eq!(back, s);
    }
}
