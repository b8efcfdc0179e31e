//! Half plate with a central hole under remote tension, compared with the
//! infinite-plate closed form.

use std::f64::consts::PI;

use energyfem::autodiff::Sum;
use energyfem::element::ElementKind;
use energyfem::mesh::{structured_grid, Block, Mesh};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{kirsch_reference, to_polar, Elastic, ElasticModel, Lame, Traction};
use energyfem::solver::reduced_functional;
use energyfem::sparse::sparsity_from_mesh;
use energyfem::{Error, Result};
use serde::{Deserialize, Serialize};

use super::{quad4_grad, reduced_structure, solve_quadratic};
use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct KirschParams {
    pub radius: f64,
    pub traction: f64,
    /// Plate occupies `[0, L] × [−L, L]` with the hole centred at the origin.
    pub half_width: f64,
    /// Angular divisions over the half hole; a multiple of 4.
    pub n_theta: usize,
    pub young: f64,
    pub poisson: f64,
    /// Upper radius of the `θ = 0` error window.
    pub r_max: f64,
}

impl Default for KirschParams {
    fn default() -> Self {
        KirschParams {
            radius: 0.05,
            traction: 0.01,
            half_width: 2.0,
            n_theta: 144,
            young: 1.0,
            poisson: 0.3,
            r_max: 0.5,
        }
    }
}

impl KirschParams {
    pub fn n_radial(&self) -> usize {
        let n = self.n_theta as f64 * (self.half_width / self.radius).ln() / PI;
        (n.round() as usize).max(1)
    }

    pub fn refined(&self) -> KirschParams {
        KirschParams {
            n_theta: 2 * self.n_theta,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct KirschResult {
    pub n_dofs: usize,
    /// Hoop stress at `(r, θ) = (R, 90°)`.
    pub hoop_at_hole: f64,
    /// Relative L2 error of `σ_rr` along `θ = 0`, `R ≤ r ≤ r_max`.
    pub srr_error: f64,
    pub solution: Solution,
}

/// Log-polar graded Quad4 mesh plus a Line2 block on the loaded edge.
/// Node `(i, j)` sits at radial index `i`, angular index `j`.
pub fn kirsch_mesh(p: &KirschParams, n_s: usize) -> Result<Mesh> {
    let n_t = p.n_theta;
    if n_t == 0 || n_t % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_theta = {n_t} must be a positive multiple of 4"
        )));
    }
    let (r0, l) = (p.radius, p.half_width);
    if l <= r0 {
        return Err(Error::InvalidArgument(
            "plate must be larger than the hole".into(),
        ));
    }
    let mut mesh = structured_grid(&[n_s, n_t], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Quad4)?;
    for j in 0..=n_t {
        let phi = -PI / 2.0 + PI * j as f64 / n_t as f64;
        let (c, s) = (phi.cos(), phi.sin());
        let d = l / c.max(s.abs());
        for i in 0..=n_s {
            let r = r0 * (d / r0).powf(i as f64 / n_s as f64);
            let a = i + (n_s + 1) * j;
            let mut x = [r * c, r * s];
            if j == 0 || j == n_t {
                x[0] = 0.0;
            }
            if i == n_s {
                if (x[0] - l).abs() < 1e-9 * l {
                    x[0] = l;
                }
                if (x[1].abs() - l).abs() < 1e-9 * l {
                    x[1] = l.copysign(x[1]);
                }
            }
            if 4 * j == 2 * n_t {
                x[1] = 0.0;
            }
            mesh.coords[2 * a..2 * a + 2].copy_from_slice(&x);
        }
    }
    let mut line = Vec::new();
    for j in n_t / 4..3 * n_t / 4 {
        line.extend([n_s + (n_s + 1) * j, n_s + (n_s + 1) * (j + 1)]);
    }
    mesh.blocks.push(Block {
        kind: ElementKind::Line2,
        connectivity: line,
    });
    Ok(mesh)
}

pub fn run_kirsch(p: &KirschParams) -> Result<KirschResult> {
    run_kirsch_with(p, p.n_radial())
}

/// Solve on a mesh with an explicit radial division count (uniform
/// refinement doubles both counts).
pub fn run_kirsch_with(p: &KirschParams, n_s: usize) -> Result<KirschResult> {
    let n_t = p.n_theta;
    let mesh = kirsch_mesh(p, n_s)?;
    let node = |i: usize, j: usize| i + (n_s + 1) * j;
    let lame = Lame::from_young_poisson(p.young, p.poisson);
    let bulk = Operator::new(&mesh, ElementKind::Quad4, 50_000)?;
    let edge = Operator::new(&mesh, ElementKind::Line2, 50_000)?;
    let n = 2 * mesh.n_nodes();
    let energy = Sum(
        OperatorEnergy::new(&bulk, Elastic::linear(2, lame)),
        OperatorEnergy::new(
            &edge,
            Traction {
                t: vec![p.traction, 0.0],
            },
        ),
    );
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    for i in 0..=n_s {
        fixed.push((2 * node(i, 0), 0.0));
        fixed.push((2 * node(i, n_t), 0.0));
    }
    fixed.push((2 * node(n_s, n_t / 2) + 1, 0.0));
    let red = reduced_functional(&energy, &fixed)?;
    let (pat, col) = reduced_structure(&sparsity_from_mesh(&mesh, 2)?, &red.lift)?;
    let ur = solve_quadratic(&red, &pat, &col)?;
    let u = red.lift.expand(&ur)?;

    let elem_data = |e: usize| {
        let conn = bulk.element(e);
        let mut x = [0.0; 8];
        let mut ue = [0.0; 8];
        for (k, &a) in conn.iter().enumerate() {
            x[2 * k..2 * k + 2].copy_from_slice(mesh.node(a));
            ue[2 * k..2 * k + 2].copy_from_slice(&u[2 * a..2 * a + 2]);
        }
        (x, ue)
    };
    let stress_at = |e: usize, xi: f64, eta: f64| -> Result<([f64; 3], [f64; 2])> {
        let (x, ue) = elem_data(e);
        let (g, pt) = quad4_grad(&x, &ue, xi, eta);
        let s = ElasticModel::LinearElastic.stress(&g, 2, &lame)?;
        Ok(([s[0], s[3], s[1]], pt))
    };
    // Element (0, n_t − 1) has the hole point (0, R) as its upper-left corner.
    let (s_top, _) = stress_at(n_s * (n_t - 1), -1.0, 1.0)?;
    let hoop_at_hole = to_polar(s_top, PI / 2.0)[1];

    let gp = 1.0 / 3f64.sqrt();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n_s {
        let e = i + n_s * (n_t / 2);
        let (x, _) = elem_data(e);
        let len = x[2] - x[0];
        for xi in [-gp, gp] {
            let (s, pt) = stress_at(e, xi, -1.0)?;
            let r = pt[0].hypot(pt[1]);
            if r > p.r_max {
                continue;
            }
            let exact = kirsch_reference(r, 0.0, p.radius, p.traction)?[0];
            let sh = to_polar(s, 0.0)[0];
            num += 0.5 * len * (sh - exact).powi(2);
            den += 0.5 * len * exact * exact;
        }
    }
    let srr_error = (num / den).sqrt();
    Ok(KirschResult {
        n_dofs: n,
        hoop_at_hole,
        srr_error,
        solution: Solution {
            mesh,
            fields: vec![("displacement".into(), 2, u)],
        },
    })
}
