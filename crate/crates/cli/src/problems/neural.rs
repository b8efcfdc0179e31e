//! Neural couplings: an MLP strain energy on a cube and a neural inclusion
//! standing in for a cut-out region of a plate.

use energyfem::autodiff::{dense_hessian, Sum};
use energyfem::element::ElementKind;
use energyfem::mesh::{boundary_nodes, structured_grid, Mesh, Selector};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{Elastic, Lame, Mlp, MlpElastic, NeuralInclusion};
use energyfem::solver::{newton_assembled, reduced_functional, NewtonOptions, SolveReport};
use energyfem::sparse::{sparsity_from_mesh, SparsityPattern};
use energyfem::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reduced_structure;
use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralParams {
    /// Tet4 cube divisions per side.
    pub cube_n: usize,
    /// Prescribed top-face displacement (negative compresses).
    pub cube_stretch: f64,
    /// Plate divisions per side; the central half is cut out.
    pub plate_n: usize,
    pub plate_pull: f64,
    pub hidden: usize,
    pub seed: u64,
    pub weight_scale: f64,
    pub young: f64,
    pub poisson: f64,
}

impl Default for NeuralParams {
    fn default() -> Self {
        NeuralParams {
            cube_n: 4,
            cube_stretch: -0.1,
            plate_n: 16,
            plate_pull: 0.02,
            hidden: 16,
            seed: 7,
            weight_scale: 0.5,
            young: 1.0,
            poisson: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeuralResult {
    pub cube: SolveReport,
    pub inclusion: SolveReport,
    pub interface_dofs: usize,
    /// Oracle nonzeros absent from the assembled pattern.
    pub missing_entries: usize,
    /// Pattern entries that are zero in the oracle.
    pub extra_entries: usize,
    /// Fraction of the interface block that is nonzero in the oracle.
    pub block_fill: f64,
    pub solution: Solution,
}

fn box_fixed(mesh: &Mesh, d: usize, axis: usize, max: bool, values: &[f64]) -> Vec<(usize, f64)> {
    boundary_nodes(mesh, &Selector::BoxFace { axis, max })
        .into_iter()
        .flat_map(|a| (0..d).map(move |c| (d * a + c, values[c])))
        .collect()
}

pub fn solve_cube(p: &NeuralParams) -> Result<SolveReport> {
    let n = p.cube_n;
    let mesh = structured_grid(&[n, n, n], &[[0.0, 1.0]; 3], ElementKind::Tet4)?;
    let mlp = Mlp::random(&[2, p.hidden, p.hidden, 1], p.seed, p.weight_scale)?;
    let op = Operator::new(&mesh, ElementKind::Tet4, 50_000)?;
    let energy = OperatorEnergy::new(
        &op,
        MlpElastic::new(3, mlp, Lame::from_young_poisson(p.young, p.poisson))?,
    );
    let mut fixed = box_fixed(&mesh, 3, 2, false, &[0.0; 3]);
    fixed.extend(box_fixed(&mesh, 3, 2, true, &[0.0, 0.0, p.cube_stretch]));
    let red = reduced_functional(&energy, &fixed)?;
    let (pat, col) = reduced_structure(&sparsity_from_mesh(&mesh, 3)?, &red.lift)?;
    let (_, rep) = newton_assembled(
        &red,
        &vec![0.0; red.lift.free_dofs().len()],
        &pat,
        &col,
        &newton_opts(),
    )?;
    Ok(rep)
}

fn nonzero_pattern(h: &[Vec<f64>]) -> Result<SparsityPattern> {
    let rows = h
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    SparsityPattern::from_rows(h.len(), rows)
}

pub fn run_neural(p: &NeuralParams) -> Result<NeuralResult> {
    let cube = solve_cube(p)?;

    let n = p.plate_n;
    let h = 1.0 / n as f64;
    let grid = structured_grid(&[n, n], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3)?;
    let inside = |x: f64| (0.25 + 0.1 * h..0.75 - 0.1 * h).contains(&x);
    let (mesh, _) = grid.retain_elements(0, |e| {
        let x = grid.element_coords(&grid.blocks[0], e);
        !(inside((x[0] + x[2] + x[4]) / 3.0) && inside((x[1] + x[3] + x[5]) / 3.0))
    });
    let on_hole = |x: f64| (0.25 - 0.1 * h..=0.75 + 0.1 * h).contains(&x);
    let iface: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&a| on_hole(mesh.node(a)[0]) && on_hole(mesh.node(a)[1]))
        .collect();
    let dofs: Vec<usize> = iface.iter().flat_map(|&a| [2 * a, 2 * a + 1]).collect();
    let n_dofs = 2 * mesh.n_nodes();
    let mlp = Mlp::random(&[dofs.len(), p.hidden, p.hidden, 1], p.seed, p.weight_scale)?;
    let op = Operator::new(&mesh, ElementKind::Tri3, 50_000)?;
    let lame = Lame::from_young_poisson(p.young, p.poisson);
    let inclusion = NeuralInclusion::new(mlp, dofs.clone(), n_dofs)?;
    let energy = Sum(
        OperatorEnergy::new(&op, Elastic::neo_hookean(2, lame)),
        &inclusion,
    );
    let pattern = sparsity_from_mesh(&mesh, 2)?.with_dense_block(&dofs)?;

    let mut fixed = box_fixed(&mesh, 2, 0, false, &[0.0, 0.0]);
    fixed.extend(box_fixed(&mesh, 2, 0, true, &[p.plate_pull, 0.0]));
    let red = reduced_functional(&energy, &fixed)?;
    let (pat, col) = reduced_structure(&pattern, &red.lift)?;
    let (ur, rep) = newton_assembled(
        &red,
        &vec![0.0; red.lift.free_dofs().len()],
        &pat,
        &col,
        &newton_opts(),
    )?;
    let u = red.lift.expand(&ur)?;

    // Dense oracle at a generic state: every structural coupling is nonzero.
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let probe: Vec<f64> = (0..n_dofs).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let oracle = nonzero_pattern(&dense_hessian(&energy, &probe)?)?;
    let mut missing = 0;
    let mut extra = 0;
    for i in 0..n_dofs {
        missing += oracle
            .row(i)
            .iter()
            .filter(|&&j| !pattern.contains(i, j))
            .count();
        extra += pattern
            .row(i)
            .iter()
            .filter(|&&j| !oracle.contains(i, j))
            .count();
    }
    let filled = dofs
        .iter()
        .flat_map(|&i| dofs.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| oracle.contains(i, j))
        .count();
    Ok(NeuralResult {
        cube,
        inclusion: rep,
        interface_dofs: dofs.len(),
        missing_entries: missing,
        extra_entries: extra,
        block_fill: filled as f64 / (dofs.len() * dofs.len()) as f64,
        solution: Solution {
            mesh,
            fields: vec![("displacement".into(), 2, u)],
        },
    })
}

pub fn newton_opts() -> NewtonOptions {
    NewtonOptions {
        line_search: true,
        ..Default::default()
    }
}
