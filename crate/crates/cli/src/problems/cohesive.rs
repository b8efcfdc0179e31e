//! Two bonded strips with a pre-crack, pulled apart until the cohesive
//! interface has fully separated.

use energyfem::autodiff::{grad_scalar, value, Sum};
use energyfem::element::ElementKind;
use energyfem::mesh::structured_grid;
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{cohesive_traction, CohesiveInterface, CohesiveParams, Elastic, Lame};
use energyfem::solver::{newton_assembled, reduced_functional, NewtonOptions};
use energyfem::sparse::sparsity_from_connectivity;
use energyfem::Result;
use serde::{Deserialize, Serialize};

use super::reduced_structure;
use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DcbParams {
    pub length: f64,
    /// Height of each strip.
    pub height: f64,
    pub crack_length: f64,
    pub nx: usize,
    pub ny: usize,
    pub young: f64,
    pub poisson: f64,
    pub sigma_c: f64,
    pub delta_c: f64,
    /// Final opening in units of `δ_c`.
    pub final_opening: f64,
    pub n_steps: usize,
    /// Opening (units of `δ_c`) at which an unload/reload cycle is run.
    pub cycle_at: f64,
}

impl Default for DcbParams {
    fn default() -> Self {
        DcbParams {
            length: 10.0,
            height: 1.0,
            crack_length: 1.0,
            nx: 40,
            ny: 4,
            young: 1.0,
            poisson: 0.3,
            sigma_c: 0.01,
            delta_c: 0.05,
            final_opening: 10.0,
            n_steps: 100,
            cycle_at: 3.0,
        }
    }
}

impl DcbParams {
    pub fn cohesive(&self) -> Result<CohesiveParams> {
        let gamma = self.sigma_c * self.delta_c * 1f64.exp();
        CohesiveParams::new(gamma, self.sigma_c, gamma / (self.delta_c * self.delta_c))
    }
}

#[derive(Clone, Debug)]
pub struct DcbResult {
    pub gamma: f64,
    pub crack_area: f64,
    pub external_work: f64,
    pub dissipation: f64,
    /// Relative mismatch of (reaction, cohesive energy, displacement) after
    /// an unload/reload cycle back to the same opening.
    pub cycle_closure: f64,
    /// `(Δ, reaction)` at each load step.
    pub curve: Vec<(f64, f64)>,
    pub max_newton_iterations: usize,
    pub solution: Solution,
}

pub fn run_dcb(p: &DcbParams) -> Result<DcbResult> {
    let cp = p.cohesive()?;
    let (nx, ny) = (p.nx, p.ny);
    let mut mesh = structured_grid(
        &[nx, ny],
        &[[0.0, p.length], [0.0, p.height]],
        ElementKind::Quad4,
    )?;
    let top = structured_grid(
        &[nx, ny],
        &[[0.0, p.length], [p.height, 2.0 * p.height]],
        ElementKind::Quad4,
    )?;
    let off = mesh.append(&top)?;
    let i_c = (p.crack_length / p.length * nx as f64).round() as usize;
    let pairs: Vec<(usize, usize)> = (i_c..=nx).map(|i| (i + (nx + 1) * ny, off + i)).collect();
    let mut coh = CohesiveInterface::new(&mesh, &pairs, &[0.0, 1.0], cp)?;
    let crack_area = coh.area();

    let lame = Lame::from_young_poisson(p.young, p.poisson);
    let bulk_op = Operator::new(&mesh, ElementKind::Quad4, 50_000)?;
    let bulk = OperatorEnergy::new(&bulk_op, Elastic::linear(2, lame));
    let iface: Vec<usize> = pairs
        .windows(2)
        .flat_map(|w| [w[0].0, w[1].0, w[0].1, w[1].1])
        .collect();
    let full_pattern = sparsity_from_connectivity(
        mesh.n_nodes(),
        &[(bulk_op.connectivity(), 4), (&iface, 4)],
        2,
    )?;

    let bottom_edge: Vec<usize> = (0..=nx).collect();
    let top_edge: Vec<usize> = (0..=nx).map(|i| off + i + (nx + 1) * ny).collect();
    let fixed_at = |opening: f64| -> Vec<(usize, f64)> {
        let mut f = Vec::new();
        for &a in &bottom_edge {
            f.extend([(2 * a, 0.0), (2 * a + 1, 0.0)]);
        }
        for &a in &top_edge {
            f.extend([(2 * a, 0.0), (2 * a + 1, opening)]);
        }
        f
    };
    let opts = NewtonOptions {
        tol_abs: 1e-15,
        tol_rel: 1e-14,
        max_iter: 30,
        ..Default::default()
    };
    let n = 2 * mesh.n_nodes();
    let mut u = vec![0.0; n];
    let mut max_it = 0;

    // Solves at a prescribed opening with the current history frozen;
    // returns the reaction on the top edge.
    let mut solve = |coh: &CohesiveInterface, u: &mut Vec<f64>, opening: f64| -> Result<f64> {
        let energy = Sum(&bulk, coh);
        let red = reduced_functional(&energy, &fixed_at(opening))?;
        let (pat, col) = reduced_structure(&full_pattern, &red.lift)?;
        let (ur, rep) = newton_assembled(&red, &red.lift.reduce(u), &pat, &col, &opts)?;
        max_it = max_it.max(rep.iterations);
        *u = red.lift.expand(&ur)?;
        let g = grad_scalar(&energy, u)?;
        Ok(top_edge.iter().map(|&a| g[2 * a + 1]).sum())
    };

    let d_final = p.final_opening * cp.delta_c;
    let cycle_step = ((p.cycle_at / p.final_opening) * p.n_steps as f64).round() as usize;
    let mut curve = vec![(0.0, 0.0)];
    let mut work = 0.0;
    let mut cycle_closure = f64::NAN;
    for step in 1..=p.n_steps {
        let opening = d_final * step as f64 / p.n_steps as f64;
        let f = solve(&coh, &mut u, opening)?;
        coh.commit(&u)?;
        let (d0, f0) = *curve.last().unwrap();
        work += 0.5 * (f + f0) * (opening - d0);
        curve.push((opening, f));
        if step == cycle_step {
            let e1 = value(&coh, &u)?;
            let u1 = u.clone();
            solve(&coh, &mut u, 0.5 * opening)?;
            coh.commit(&u)?;
            let f2 = solve(&coh, &mut u, opening)?;
            coh.commit(&u)?;
            let e2 = value(&coh, &u)?;
            let du = super::rel_inf(&u, &u1);
            cycle_closure = ((f2 - f) / f).abs().max(((e2 - e1) / e1).abs()).max(du);
        }
    }
    let e_bulk = value(&bulk, &u)?;
    let mut recoverable = 0.0;
    for e in 0..coh.op.n_elements() {
        for q in 0..coh.op.n_q {
            let dm = coh.delta_max[e * coh.op.n_q + q];
            recoverable += 0.5 * cohesive_traction(dm, &cp) * dm * coh.op.wdet(e, q);
        }
    }
    Ok(DcbResult {
        gamma: cp.gamma,
        crack_area,
        external_work: work,
        dissipation: work - e_bulk - recoverable,
        cycle_closure,
        curve,
        max_newton_iterations: max_it,
        solution: Solution {
            mesh,
            fields: vec![("displacement".into(), 2, u)],
        },
    })
}
