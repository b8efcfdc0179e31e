//! Periodic cells: homogeneous square cell and a hexagonal cell with a
//! stiff circular inclusion.

use energyfem::element::ElementKind;
use energyfem::mesh::{paired_nodes, structured_grid, Mesh};
use energyfem::physics::{
    homogenized_tangent, Homogenization, Lame, MaterialField, PeriodicConstraints,
};
use energyfem::Result;
use serde::{Deserialize, Serialize};

use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HomogenizationParams {
    /// Elements per lattice direction.
    pub n: usize,
    pub inclusion_radius: f64,
    pub matrix_young: f64,
    pub matrix_poisson: f64,
    pub inclusion_young: f64,
    pub inclusion_poisson: f64,
}

impl Default for HomogenizationParams {
    fn default() -> Self {
        HomogenizationParams {
            n: 40,
            inclusion_radius: 0.2,
            matrix_young: 50e3,
            matrix_poisson: 0.2,
            inclusion_young: 210e3,
            inclusion_poisson: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HomogenizationResult {
    pub homogeneous: Homogenization,
    /// Closed-form plane-strain stiffness of the matrix phase (Voigt).
    pub plane_strain: [[f64; 3]; 3],
    pub hexagonal: Homogenization,
    pub solution: Solution,
}

pub fn plane_strain_stiffness(p: &Lame) -> [[f64; 3]; 3] {
    let a = p.lambda + 2.0 * p.mu;
    [[a, p.lambda, 0.0], [p.lambda, a, 0.0], [0.0, 0.0, p.mu]]
}

/// Unit-square Tri3 grid sheared onto the lattice `a1 = (1, 0)`,
/// `a2 = (−½, √3/2)`; every triangle is equilateral.
pub fn hex_cell(n: usize) -> Result<Mesh> {
    let mut mesh = structured_grid(&[n, n], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3)?;
    let h = 3f64.sqrt() / 2.0;
    for x in mesh.coords.chunks_mut(2) {
        let (s, t) = (x[0], x[1]);
        x[0] = s - 0.5 * t;
        x[1] = h * t;
    }
    Ok(mesh)
}

fn periodic(mesh: &Mesh, a1: [f64; 2], a2: [f64; 2]) -> Result<PeriodicConstraints> {
    let sets = vec![
        paired_nodes(mesh, &a1, None)?,
        paired_nodes(mesh, &a2, None)?,
    ];
    PeriodicConstraints::new(&sets, 2, mesh.n_nodes(), Some(0))
}

pub fn run_homogenization(p: &HomogenizationParams) -> Result<HomogenizationResult> {
    let matrix = Lame::from_young_poisson(p.matrix_young, p.matrix_poisson);
    let inclusion = Lame::from_young_poisson(p.inclusion_young, p.inclusion_poisson);

    let square = structured_grid(
        &[p.n / 2, p.n / 2],
        &[[0.0, 1.0], [0.0, 1.0]],
        ElementKind::Tri3,
    )?;
    let pc = periodic(&square, [1.0, 0.0], [0.0, 1.0])?;
    let homogeneous = homogenized_tangent(&square, MaterialField::Uniform(matrix), &pc)?;

    let (a1, a2) = ([1.0, 0.0], [-0.5, 3f64.sqrt() / 2.0]);
    let mesh = hex_cell(p.n)?;
    let centre = [0.5 * (a1[0] + a2[0]), 0.5 * (a1[1] + a2[1])];
    let block = &mesh.blocks[0];
    let mut phase = vec![0.0; mesh.n_nodes()];
    let mats: Vec<Lame> = (0..block.n_elements())
        .map(|e| {
            let x = mesh.element_coords(block, e);
            let cx = (x[0] + x[2] + x[4]) / 3.0 - centre[0];
            let cy = (x[1] + x[3] + x[5]) / 3.0 - centre[1];
            if cx.hypot(cy) < p.inclusion_radius {
                for &a in block.element(e) {
                    phase[a] = 1.0;
                }
                inclusion
            } else {
                matrix
            }
        })
        .collect();
    let pc = periodic(&mesh, a1, a2)?;
    let hexagonal = homogenized_tangent(&mesh, MaterialField::PerElement(mats), &pc)?;
    Ok(HomogenizationResult {
        homogeneous,
        plane_strain: plane_strain_stiffness(&matrix),
        hexagonal,
        solution: Solution {
            mesh,
            fields: vec![("inclusion".into(), 1, phase)],
        },
    })
}
