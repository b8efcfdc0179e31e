//! Verification problems: mesh construction, solves and measured quantities.

pub mod checks;
pub mod cohesive;
pub mod homogenization;
pub mod kirsch;
pub mod neural;
pub mod rigid;
pub mod sphere;

use energyfem::autodiff::{grad_scalar, ScalarFunctional};
use energyfem::coloring::{distance2_coloring, Coloring};
use energyfem::solver::{direct_solve, lift_pattern, Lift, LiftedFunctional};
use energyfem::sparse::{sparse_hessian, JacobianOptions, SparsityPattern};
use energyfem::Result;

/// Reduced pattern and its coloring for a lifted functional.
pub fn reduced_structure<L: Lift>(
    full: &SparsityPattern,
    lift: &L,
) -> Result<(SparsityPattern, Coloring)> {
    let p = lift_pattern(full, lift)?;
    let c = distance2_coloring(&p);
    Ok((p, c))
}

/// One Newton step from zero: exact for quadratic functionals.
pub fn solve_quadratic<F: ScalarFunctional, L: Lift>(
    f: &LiftedFunctional<F, L>,
    pattern: &SparsityPattern,
    coloring: &Coloring,
) -> Result<Vec<f64>> {
    let n = f.n_dofs();
    let z = vec![0.0; n];
    let k = sparse_hessian(f, &z, pattern, coloring, &JacobianOptions::default())?;
    let r = grad_scalar(f, &z)?;
    let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
    direct_solve(&k, &rhs)
}

/// Relative max-norm difference `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// Bilinear quad displacement gradient at natural coordinates `(ξ, η)`.
/// `x` and `u` hold 4 nodes × 2 components; returns `(∇u row-major, point)`.
pub fn quad4_grad(x: &[f64], u: &[f64], xi: f64, eta: f64) -> ([f64; 4], [f64; 2]) {
    let sx = [-1.0, 1.0, 1.0, -1.0];
    let sy = [-1.0, -1.0, 1.0, 1.0];
    let mut n = [0.0; 4];
    let mut dxi = [0.0; 4];
    let mut deta = [0.0; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
        dxi[a] = 0.25 * sx[a] * (1.0 + sy[a] * eta);
        deta[a] = 0.25 * sy[a] * (1.0 + sx[a] * xi);
    }
    let mut j = [0.0; 4];
    let mut pt = [0.0; 2];
    for a in 0..4 {
        for i in 0..2 {
            j[i * 2] += x[2 * a + i] * dxi[a];
            j[i * 2 + 1] += x[2 * a + i] * deta[a];
            pt[i] += n[a] * x[2 * a + i];
        }
    }
    let det = j[0] * j[3] - j[1] * j[2];
    let inv = [j[3] / det, -j[1] / det, -j[2] / det, j[0] / det];
    let mut g = [0.0; 4];
    for a in 0..4 {
        let gx = dxi[a] * inv[0] + deta[a] * inv[2];
        let gy = dxi[a] * inv[1] + deta[a] * inv[3];
        for i in 0..2 {
            g[i * 2] += u[2 * a + i] * gx;
            g[i * 2 + 1] += u[2 * a + i] * gy;
        }
    }
    (g, pt)
}
