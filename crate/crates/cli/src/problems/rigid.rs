//! Hyperelastic plate driven by an embedded rigid disk whose rotation is
//! left free.

use energyfem::autodiff::grad_scalar;
use energyfem::element::ElementKind;
use energyfem::mesh::{boundary_nodes, structured_grid, Selector};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{moment_about, Elastic, Lame, RigidLift};
use energyfem::solver::{
    lift_vector, newton_assembled, LiftedFunctional, NewtonOptions, SolveReport,
};
use energyfem::sparse::sparsity_from_mesh;
use energyfem::Result;
use serde::{Deserialize, Serialize};

use super::reduced_structure;
use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RigidParams {
    pub n: usize,
    pub center: [f64; 2],
    pub radius: f64,
    /// Prescribed disk translation.
    pub displacement: [f64; 2],
    pub young: f64,
    pub poisson: f64,
    pub load_steps: usize,
}

impl Default for RigidParams {
    fn default() -> Self {
        RigidParams {
            n: 32,
            center: [0.75, 0.75],
            radius: 0.1,
            displacement: [0.03, 0.05],
            young: 1.0,
            poisson: 0.3,
            load_steps: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RigidResult {
    /// Newton report of the final load step.
    pub newton: SolveReport,
    pub theta: f64,
    pub moment: f64,
    /// Largest change of a pairwise distance between disk nodes.
    pub distance_error: f64,
    pub disk_nodes: usize,
    pub solution: Solution,
}

pub fn run_rigid(p: &RigidParams) -> Result<RigidResult> {
    let mesh = structured_grid(&[p.n, p.n], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3)?;
    let disk = boundary_nodes(
        &mesh,
        &Selector::Ball {
            center: p.center.to_vec(),
            radius: p.radius,
        },
    );
    let bottom = boundary_nodes(
        &mesh,
        &Selector::BoxFace {
            axis: 1,
            max: false,
        },
    );
    let mut fixed: Vec<(usize, f64)> = bottom
        .iter()
        .flat_map(|&a| [(2 * a, 0.0), (2 * a + 1, 0.0)])
        .collect();
    for a in boundary_nodes(
        &mesh,
        &Selector::BoxFace {
            axis: 0,
            max: false,
        },
    ) {
        if !bottom.contains(&a) {
            fixed.push((2 * a, 0.0));
        }
    }
    let op = Operator::new(&mesh, ElementKind::Tri3, 50_000)?;
    let full = OperatorEnergy::new(
        &op,
        Elastic::neo_hookean(2, Lame::from_young_poisson(p.young, p.poisson)),
    );
    let opts = NewtonOptions {
        line_search: true,
        ..Default::default()
    };
    let steps = p.load_steps.max(1);
    let mut ur = Vec::new();
    let mut result = None;
    for k in 1..=steps {
        let s = k as f64 / steps as f64;
        let prescribed = [
            Some(s * p.displacement[0]),
            Some(s * p.displacement[1]),
            None,
        ];
        let lift = RigidLift::new(&mesh, &fixed, &disk, p.center, prescribed)?;
        let red = LiftedFunctional { f: &full, lift };
        let (pat, col) = reduced_structure(&sparsity_from_mesh(&mesh, 2)?, &red.lift)?;
        if ur.is_empty() {
            ur = vec![0.0; pat.n_rows];
        }
        let (sol, rep) = newton_assembled(&red, &ur, &pat, &col, &opts)?;
        ur = sol;
        result = Some((red, rep));
    }
    let (red, newton) = result.expect("at least one load step");
    let u = lift_vector(&red.lift, &ur)?;
    let rigid = red.lift.rigid_dofs(&ur);
    let forces = grad_scalar(&full, &u)?;
    let moment = moment_about(&mesh, &u, &forces, &disk, p.center, &rigid);
    let pos = |a: usize| [mesh.node(a)[0] + u[2 * a], mesh.node(a)[1] + u[2 * a + 1]];
    let mut distance_error: f64 = 0.0;
    for (k, &a) in disk.iter().enumerate() {
        for &b in &disk[k + 1..] {
            let d0 = (mesh.node(a)[0] - mesh.node(b)[0]).hypot(mesh.node(a)[1] - mesh.node(b)[1]);
            let (xa, xb) = (pos(a), pos(b));
            distance_error = distance_error.max(((xa[0] - xb[0]).hypot(xa[1] - xb[1]) - d0).abs());
        }
    }
    Ok(RigidResult {
        newton,
        theta: rigid.theta,
        moment,
        distance_error,
        disk_nodes: disk.len(),
        solution: Solution {
            mesh,
            fields: vec![("displacement".into(), 2, u)],
        },
    })
}
