//! Advection–diffusion of a concentration blob on a rotating unit sphere.

use energyfem::autodiff::{eval_vector, ScalarFunctional};
use energyfem::coloring::distance2_coloring;
use energyfem::element::ElementKind;
use energyfem::mesh::icosphere;
use energyfem::operator::Operator;
use energyfem::physics::{stream_velocity, AdvectionDiffusion};
use energyfem::solver::gmres_solve;
use energyfem::sparse::{sparse_jacobian, sparsity_from_mesh, CsrMatrix, JacobianOptions};
use energyfem::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::report::Solution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereParams {
    pub level: usize,
    pub diffusivity: f64,
    /// Angular velocity about the z-axis.
    pub omega: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Width of the initial Gaussian blob centred at (1, 0, 0).
    pub blob_width: f64,
    pub gmres_tol: f64,
}

impl Default for SphereParams {
    fn default() -> Self {
        SphereParams {
            level: 3,
            diffusivity: 0.1,
            omega: 1.0,
            dt: 0.05,
            n_steps: 126,
            blob_width: 0.3,
            gmres_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SphereResult {
    pub n_nodes: usize,
    pub mass_drift: f64,
    /// `(max c, min c)` after every step, the initial state first.
    pub extrema: Vec<(f64, f64)>,
    /// `max|K − Kᵀ| / max|K|` with the rotation on.
    pub asymmetry: f64,
    /// Same with zero velocity.
    pub asymmetry_at_rest: f64,
    pub max_gmres_iterations: usize,
    pub solution: Solution,
}

fn asymmetry(k: &CsrMatrix) -> f64 {
    let kt = k.transpose();
    let mut m: f64 = 0.0;
    for i in 0..k.n_rows {
        let (cols, vals) = k.row(i);
        for (&j, v) in cols.iter().zip(vals) {
            m = m.max((v - kt.get(i, j)).abs());
        }
    }
    m / k.max_abs()
}

pub fn run_sphere(p: &SphereParams) -> Result<SphereResult> {
    if !(p.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mesh = icosphere(p.level, 1.0)?;
    let op = Operator::new(&mesh, ElementKind::Tri3Manifold, 50_000)?;
    let n = mesh.n_nodes();
    let psi: Vec<f64> = (0..n).map(|a| p.omega * mesh.node(a)[2]).collect();
    let velocity = stream_velocity(&mesh, &op, &psi)?;
    let pattern = sparsity_from_mesh(&mesh, 1)?;
    let coloring = distance2_coloring(&pattern);
    let w2 = 2.0 * p.blob_width * p.blob_width;
    let mut c: Vec<f64> = (0..n)
        .map(|a| {
            let x = mesh.node(a);
            (-((x[0] - 1.0).powi(2) + x[1] * x[1] + x[2] * x[2]) / w2).exp()
        })
        .collect();

    let tangent = |vel: Vec<[f64; 3]>, c: &[f64]| -> Result<CsrMatrix> {
        let w = AdvectionDiffusion::new(&op, p.diffusivity, p.dt, c.to_vec(), vel)?;
        sparse_jacobian(
            &w.residual()?,
            c,
            &pattern,
            &coloring,
            &JacobianOptions::default(),
        )
    };
    let k = tangent(velocity.clone(), &c)?;
    let asym = asymmetry(&k);
    let asym_rest = asymmetry(&tangent(vec![[0.0; 3]; op.n_elements()], &c)?);

    let w0 = AdvectionDiffusion::new(&op, p.diffusivity, p.dt, c.clone(), velocity.clone())?;
    let m0 = w0.mass(&c);
    let mut extrema = vec![extremes(&c)];
    let mut max_it = 0;
    let mut mass = m0;
    for _ in 0..p.n_steps {
        let w = AdvectionDiffusion::new(&op, p.diffusivity, p.dt, c.clone(), velocity.clone())?;
        debug_assert_eq!(w.n_dofs(), 2 * n);
        // The residual is affine in c, so one linear solve per step is exact.
        let r0 = eval_vector(&w.residual()?, &c)?;
        let rhs: Vec<f64> = r0.iter().map(|v| -v).collect();
        let (dc, rep) = gmres_solve(&k, &rhs, p.gmres_tol, 100, 5000)?;
        if !rep.converged {
            return Err(Error::MaxIterationsExceeded {
                iterations: rep.iterations,
                residual: rep.residual,
            });
        }
        max_it = max_it.max(rep.iterations);
        for (ci, d) in c.iter_mut().zip(&dc) {
            *ci += d;
        }
        mass = w.mass(&c);
        extrema.push(extremes(&c));
    }
    Ok(SphereResult {
        n_nodes: n,
        mass_drift: ((mass - m0) / m0).abs(),
        extrema,
        asymmetry: asym,
        asymmetry_at_rest: asym_rest,
        max_gmres_iterations: max_it,
        solution: Solution {
            mesh,
            fields: vec![("concentration".into(), 1, c)],
        },
    })
}

fn extremes(c: &[f64]) -> (f64, f64) {
    c.iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &v| {
            (hi.max(v), lo.min(v))
        })
}

/// Steps after the first at which the max rises or the min falls.
pub fn monotonicity_violations(extrema: &[(f64, f64)]) -> usize {
    extrema
        .windows(2)
        .skip(1)
        .filter(|w| w[1].0 > w[0].0 || w[1].1 < w[0].1)
        .count()
}
