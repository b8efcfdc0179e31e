use energyfem::element::ElementKind;
use energyfem::mesh::*;
use energyfem::Error;
use proptest::prelude::*;

const TWO_TRIS: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
3
1 2 2 0 1 1 2 3
2 2 2 0 1 1 3 4
3 1 2 0 2 1 2
$EndElements
";

#[test]
fn gmsh_two_triangles() {
    let m = parse_gmsh22(TWO_TRIS).unwrap();
    assert_eq!(m.dim, 2);
    assert_eq!(m.n_nodes(), 4);
    let tri = m.block(ElementKind::Tri3).unwrap();
    assert_eq!(tri.connectivity, vec![0, 1, 2, 0, 2, 3]);
    assert_eq!(
        m.block(ElementKind::Line2).unwrap().connectivity,
        vec![0, 1]
    );
}

#[test]
fn gmsh_rejects_second_order_tets() {
    let text = TWO_TRIS.replace("2 2 2 0 1 1 3 4", "2 11 2 0 1 1 3 4 1 2 3 4 1 2 3 4");
    assert!(matches!(
        parse_gmsh22(&text),
        Err(Error::UnsupportedElement(_))
    ));
}

#[test]
fn gmsh_reports_line_of_bad_input() {
    let text = TWO_TRIS.replace("3 1 1 0", "3 1 x 0");
    match parse_gmsh22(&text) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(parse_gmsh22("garbage"), Err(Error::Parse { .. })));
}

#[test]
fn gmsh_to_json_round_trip() {
    let m = parse_gmsh22(TWO_TRIS).unwrap();
    let back = Mesh::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(m, back);
    let again = parse_gmsh22(&m.to_gmsh22()).unwrap();
    assert_eq!(m, again);
}

#[test]
fn load_from_files() {
    let dir = std::env::temp_dir().join(format!("energyfem-mesh-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let msh = dir.join("two.msh");
    std::fs::write(&msh, TWO_TRIS).unwrap();
    let a = load_mesh(&msh).unwrap();
    let js = dir.join("two.json");
    std::fs::write(&js, a.to_json().unwrap()).unwrap();
    assert_eq!(load_mesh(&js).unwrap(), a);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn inverted_and_collinear_elements_are_rejected() {
    let mut m = parse_gmsh22(TWO_TRIS).unwrap();
    m.blocks[0].connectivity.swap(1, 2);
    assert!(matches!(
        m.validate(),
        Err(Error::DegenerateElement { elem: 0, .. })
    ));
    let flat = Mesh {
        dim: 2,
        coords: vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0],
        blocks: vec![Block {
            kind: ElementKind::Tri3,
            connectivity: vec![0, 1, 2],
        }],
    };
    assert!(matches!(
        flat.validate(),
        Err(Error::DegenerateElement { .. })
    ));
    let bad = Mesh {
        dim: 2,
        coords: vec![0.0; 6],
        blocks: vec![Block {
            kind: ElementKind::Tri3,
            connectivity: vec![0, 1, 7],
        }],
    };
    assert!(matches!(bad.validate(), Err(Error::IndexOutOfRange(_))));
}

#[test]
fn grid_numbering_is_row_major() {
    let m = structured_grid(&[2, 1], &[[0.0, 2.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    assert_eq!(m.node(4), &[1.0, 1.0]);
    // Lower-left to upper-right diagonal.
    assert_eq!(m.blocks[0].element(0), &[0, 1, 4]);
    assert_eq!(m.blocks[0].element(1), &[0, 4, 3]);
}

#[test]
fn paired_nodes_on_unit_square() {
    let m = structured_grid(&[4, 3], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let pairs = paired_nodes(&m, &[1.0, 0.0], None).unwrap();
    assert_eq!(pairs.len(), 4);
    for &(a, b) in &pairs {
        assert_eq!(m.node(a)[0], 0.0);
        assert_eq!(m.node(b)[0], 1.0);
        assert_eq!(m.node(a)[1], m.node(b)[1]);
    }
    let back = paired_nodes(&m, &[-1.0, 0.0], None).unwrap();
    let mut swapped: Vec<(usize, usize)> = back.iter().map(|&(a, b)| (b, a)).collect();
    swapped.sort();
    assert_eq!(swapped, pairs);
    assert!(matches!(
        paired_nodes(&m, &[0.5, 0.0], None),
        Err(Error::UnmatchedNode { .. })
    ));
}

#[test]
fn paired_nodes_on_skewed_cell() {
    let mut m = structured_grid(&[6, 6], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let a2 = [-0.5, 3f64.sqrt() / 2.0];
    for p in m.coords.chunks_mut(2) {
        let (s, t) = (p[0], p[1]);
        p[0] = s + t * a2[0];
        p[1] = t * a2[1];
    }
    m.validate().unwrap();
    assert_eq!(paired_nodes(&m, &[1.0, 0.0], None).unwrap().len(), 7);
    assert_eq!(paired_nodes(&m, &a2, None).unwrap().len(), 7);
}

#[test]
fn locate_points_in_grid() {
    let m = structured_grid(&[2, 2], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let b = &m.blocks[0];
    let centroid = |e: usize| {
        let mut c = [0.0; 2];
        for &n in b.element(e) {
            c[0] += m.node(n)[0] / 3.0;
            c[1] += m.node(n)[1] / 3.0;
        }
        c
    };
    for e in 0..b.n_elements() {
        let c = centroid(e);
        let loc = locate_points(&m, &c).unwrap();
        assert_eq!(loc[0].element, e);
        for l in &loc[0].bary {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }
    // Point on the diagonal shared by elements 0 and 1 goes to element 0.
    assert_eq!(locate_points(&m, &[0.25, 0.25]).unwrap()[0].element, 0);
    assert!(matches!(
        locate_points(&m, &[0.5, 0.5, 2.0, 0.5]),
        Err(Error::PointOutsideMesh { index: 1 })
    ));
}

#[test]
fn retain_elements_drops_orphans() {
    let m = structured_grid(&[3, 3], &[[0.0, 3.0], [0.0, 3.0]], ElementKind::Quad4).unwrap();
    let (sub, map) = m.retain_elements(0, |e| e != 4);
    assert_eq!(sub.blocks[0].n_elements(), 8);
    assert_eq!(sub.n_nodes(), 16);
    let (sub2, map2) = sub.retain_elements(0, |e| e < 3);
    assert_eq!(sub2.n_nodes(), 8);
    assert!(map[5].is_some() && map2.iter().filter(|x| x.is_some()).count() == 8);
    sub2.validate().unwrap();
}

#[test]
fn selectors() {
    let m = structured_grid(&[2, 2], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    assert_eq!(
        boundary_nodes(
            &m,
            &Selector::BoxFace {
                axis: 0,
                max: false
            }
        ),
        vec![0, 3, 6]
    );
    assert_eq!(
        boundary_nodes(
            &m,
            &Selector::Plane {
                axis: 1,
                value: 1.0
            }
        ),
        vec![6, 7, 8]
    );
    assert_eq!(
        boundary_nodes(
            &m,
            &Selector::Ball {
                center: vec![0.5, 0.5],
                radius: 0.1
            }
        ),
        vec![4]
    );
    assert_eq!(boundary_facets(&m).unwrap().len(), 8);
}

fn total_measure(m: &Mesh) -> f64 {
    use energyfem::element::{jacobian, quadrature};
    let b = &m.blocks[0];
    let rule = quadrature(b.kind);
    let mut s = 0.0;
    for e in 0..b.n_elements() {
        let x = m.element_coords(b, e);
        for q in 0..rule.n_points() {
            s += rule.weights[q] * jacobian(b.kind, rule.point(q), &x, m.dim).unwrap().det_j;
        }
    }
    s
}

proptest! {
    #[test]
    fn grids_are_valid(nx in 1usize..6, ny in 1usize..6, nz in 1usize..4, lx in 0.5f64..3.0) {
        let m = structured_grid(&[nx, ny], &[[0.0, lx], [-1.0, 1.0]], ElementKind::Tri3).unwrap();
        prop_assert_eq!(m.n_nodes(), (nx + 1) * (ny + 1));
        prop_assert_eq!(m.blocks[0].n_elements(), 2 * nx * ny);
        prop_assert!((total_measure(&m) - 2.0 * lx).abs() < 1e-12);
        let q = structured_grid(&[nx, ny], &[[0.0, lx], [-1.0, 1.0]], ElementKind::Quad4).unwrap();
        prop_assert!((total_measure(&q) - 2.0 * lx).abs() < 1e-12);
        let t = structured_grid(&[nx, ny, nz], &[[0.0, lx], [0.0, 1.0], [0.0, 2.0]], ElementKind::Tet4).unwrap();
        prop_assert_eq!(t.blocks[0].n_elements(), 6 * nx * ny * nz);
        prop_assert!((total_measure(&t) - 2.0 * lx).abs() < 1e-12);
        let pairs = paired_nodes(&t, &[lx, 0.0, 0.0], None).unwrap();
        prop_assert_eq!(pairs.len(), (ny + 1) * (nz + 1));
    }
}
