use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use energyfem::element::ElementKind;

use crate::report::Solution;
use crate::CliResult;

/// Nodal CSV: `node,x,y[,z],<field components...>`.
pub fn solution_csv(s: &Solution) -> String {
    let mesh = &s.mesh;
    let mut out = String::from("node");
    for c in ["x", "y", "z"].iter().take(mesh.dim) {
        out.push(',');
        out.push_str(c);
    }
    for (name, m, _) in &s.fields {
        for k in 0..*m {
            let _ = if *m == 1 {
                write!(out, ",{name}")
            } else {
                write!(out, ",{name}_{k}")
            };
        }
    }
    out.push('\n');
    for a in 0..mesh.n_nodes() {
        let _ = write!(out, "{a}");
        for x in mesh.node(a) {
            let _ = write!(out, ",{x:.12e}");
        }
        for (_, m, v) in &s.fields {
            for k in 0..*m {
                let _ = write!(out, ",{:.12e}", v[a * m + k]);
            }
        }
        out.push('\n');
    }
    out
}

fn vtk_cell_type(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Line2 => 3,
        ElementKind::Tri3 | ElementKind::Tri3Manifold => 5,
        ElementKind::Quad4 => 9,
        ElementKind::Tet4 => 10,
    }
}

/// Legacy ASCII VTK unstructured grid with point data.
pub fn solution_vtk(s: &Solution) -> String {
    let mesh = &s.mesh;
    let mut out =
        String::from("# vtk DataFile Version 3.0\nenergyfem\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.n_nodes());
    for a in 0..mesh.n_nodes() {
        let x = mesh.node(a);
        let _ = writeln!(
            out,
            "{} {} {}",
            x[0],
            x.get(1).unwrap_or(&0.0),
            x.get(2).unwrap_or(&0.0)
        );
    }
    let blocks: Vec<_> = mesh
        .blocks
        .iter()
        .map(|b| (b, vtk_cell_type(b.kind)))
        .collect();
    let n_cells: usize = blocks.iter().map(|(b, _)| b.n_elements()).sum();
    let size: usize = blocks
        .iter()
        .map(|(b, _)| b.n_elements() * (b.kind.n_nodes() + 1))
        .sum();
    let _ = writeln!(out, "CELLS {n_cells} {size}");
    for (b, _) in &blocks {
        for e in 0..b.n_elements() {
            let conn = b.element(e);
            let _ = write!(out, "{}", conn.len());
            for c in conn {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
    }
    let _ = writeln!(out, "CELL_TYPES {n_cells}");
    for (b, t) in &blocks {
        for _ in 0..b.n_elements() {
            let _ = writeln!(out, "{t}");
        }
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_nodes());
    for (name, m, v) in &s.fields {
        if *m == 1 {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in v {
                let _ = writeln!(out, "{x}");
            }
        } else {
            let _ = writeln!(out, "VECTORS {name} double");
            for a in 0..mesh.n_nodes() {
                let c = |k: usize| if k < *m { v[a * m + k] } else { 0.0 };
                let _ = writeln!(out, "{} {} {}", c(0), c(1), c(2));
            }
        }
    }
    out
}

pub fn write_solution(dir: &Path, stem: &str, s: &Solution) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), solution_csv(s))?;
    fs::write(dir.join(format!("{stem}.vtk")), solution_vtk(s))?;
    Ok(())
}
