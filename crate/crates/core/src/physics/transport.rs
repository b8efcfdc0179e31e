//! Scalar transport: the transient-heat potential and an advection-diffusion
//! virtual-work form on triangulated surfaces.

use crate::autodiff::{PartialResidual, Scalar, ScalarFunctional, Term, TermSink};
use crate::element::ElementKind;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operator::{Integrand, Operator, QuadPoint};

/// `κ ∇T·∇T + (T − T_prev)²/(2 dt)`; minimizing its integral over `T`
/// performs one backward-Euler step.
#[derive(Clone, Debug)]
pub struct TransientHeat {
    pub kappa: f64,
    pub dt: f64,
    t_prev_q: Vec<f64>,
    n_q: usize,
}

impl TransientHeat {
    pub fn new(op: &Operator, kappa: f64, dt: f64, t_prev: &[f64]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let tq = op.eval(t_prev)?;
        Ok(TransientHeat {
            kappa,
            dt,
            t_prev_q: tq.data,
            n_q: op.n_q,
        })
    }
}

impl Integrand for TransientHeat {
    fn components(&self) -> usize {
        1
    }
    fn needs_value(&self) -> bool {
        true
    }
    fn eval<S: Scalar>(&self, p: &QuadPoint<'_, S>) -> Result<S> {
        let dtp = p.value[0] - self.t_prev_q[p.elem * self.n_q + p.q];
        Ok(S::dot(p.grad, p.grad) * self.kappa + dtp * dtp * (0.5 / self.dt))
    }
}

/// Unit normals of the triangles of a Tri3 / Tri3Manifold operator.
pub fn triangle_normals(mesh: &Mesh, op: &Operator) -> Result<Vec<[f64; 3]>> {
    if mesh.dim != 3 || !matches!(op.kind, ElementKind::Tri3 | ElementKind::Tri3Manifold) {
        return Err(Error::UnsupportedElement(
            "normals need triangles in 3D".into(),
        ));
    }
    Ok((0..op.n_elements())
        .map(|e| {
            let el = op.element(e);
            let (a, b, c) = (mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ];
            let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            [n[0] / l, n[1] / l, n[2] / l]
        })
        .collect())
}

/// Piecewise-constant tangential velocity `u_T = ∇_s ψ|_T × n_T` from a
/// nodal stream function. Such a field is discretely divergence-free on a
/// closed triangulated surface: `Σ_T ∫_T u_T·∇c = 0` for every P1 `c`.
/// With `ψ = ω z` on the unit sphere this is the rotation `ω e_z × x`.
pub fn stream_velocity(mesh: &Mesh, op: &Operator, psi: &[f64]) -> Result<Vec<[f64; 3]>> {
    let normals = triangle_normals(mesh, op)?;
    let g = op.grad(psi)?;
    Ok((0..op.n_elements())
        .map(|e| {
            let gp = g.at(e, 0);
            let n = normals[e];
            [
                gp[1] * n[2] - gp[2] * n[1],
                gp[2] * n[0] - gp[0] * n[2],
                gp[0] * n[1] - gp[1] * n[0],
            ]
        })
        .collect())
}

/// Backward-Euler virtual work of surface advection-diffusion,
///
/// `W(c, v) = ∫ (c − c_prev)/dt v + (u·∇_s c) v + D ∇_s c·∇_s v dS`,
///
/// over `z` interleaving `(c_i, v_i)` per node. All integrals are exact for
/// P1 fields and element-wise constant velocity (consistent mass).
#[derive(Clone, Debug)]
pub struct AdvectionDiffusion<'a> {
    pub op: &'a Operator,
    pub diffusivity: f64,
    pub dt: f64,
    pub c_prev: Vec<f64>,
    pub velocity: Vec<[f64; 3]>,
}

impl<'a> AdvectionDiffusion<'a> {
    pub fn new(
        op: &'a Operator,
        diffusivity: f64,
        dt: f64,
        c_prev: Vec<f64>,
        velocity: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if op.kind.n_nodes() != 3 || op.n_q != 1 {
            return Err(Error::UnsupportedElement(
                "advection-diffusion uses linear triangles".into(),
            ));
        }
        if c_prev.len() != op.n_nodes {
            return Err(Error::ShapeMismatch {
                expected: op.n_nodes,
                got: c_prev.len(),
            });
        }
        if velocity.len() != op.n_elements() {
            return Err(Error::ShapeMismatch {
                expected: op.n_elements(),
                got: velocity.len(),
            });
        }
        Ok(AdvectionDiffusion {
            op,
            diffusivity,
            dt,
            c_prev,
            velocity,
        })
    }

    /// `r(c) = ∂W/∂v` at `v = 0`, as a function of `c`.
    pub fn residual(&self) -> Result<PartialResidual<&Self>> {
        let n = self.op.n_nodes;
        PartialResidual::new(
            self,
            vec![0.0; 2 * n],
            (0..n).map(|i| 2 * i).collect(),
            (0..n).map(|i| 2 * i + 1).collect(),
        )
    }

    /// `∫ c dS` with the same (exact) integration as the time term.
    pub fn mass(&self, c: &[f64]) -> f64 {
        (0..self.op.n_elements())
            .map(|e| {
                self.op.measure(e) / 3.0 * self.op.element(e).iter().map(|&a| c[a]).sum::<f64>()
            })
            .sum()
    }
}

struct AdvTerm<'a, 'b> {
    w: &'b AdvectionDiffusion<'a>,
    range: std::ops::Range<usize>,
}

impl Term for AdvTerm<'_, '_> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let w = self.w;
        let op = w.op;
        let d = op.d;
        let inv_dt = if w.dt.is_finite() { 1.0 / w.dt } else { 0.0 };
        let mut acc = Vec::with_capacity(self.range.len());
        for (le, e) in self.range.clone().enumerate() {
            let xe = &x[le * 6..le * 6 + 6];
            let el = op.element(e);
            let area = op.measure(e);
            let g = op.grad_n(e, 0);
            let c = [xe[0], xe[2], xe[4]];
            let v = [xe[1], xe[3], xe[5]];
            let mut gc = [S::zero(); 3];
            let mut gv = [S::zero(); 3];
            let mut coef = [0.0; 3];
            for i in 0..d {
                for a in 0..3 {
                    coef[a] = g[a * d + i];
                }
                gc[i] = S::lincomb(&coef, &c);
                gv[i] = S::lincomb(&coef, &v);
            }
            let mut total = S::zero();
            if inv_dt != 0.0 {
                let dc: Vec<S> = (0..3).map(|a| c[a] - w.c_prev[el[a]]).collect();
                let sum_dc = dc[0] + dc[1] + dc[2];
                // ∫ N_a N_b = A (1 + δ_ab) / 12.
                let mv: Vec<S> = (0..3).map(|b| (sum_dc + dc[b]) * (area / 12.0)).collect();
                total += S::dot(&mv, &v) * inv_dt;
            }
            let u = &w.velocity[e];
            let adv = S::lincomb(&u[..d], &gc[..d]);
            total += adv * (v[0] + v[1] + v[2]) * (area / 3.0);
            total += S::dot(&gc[..d], &gv[..d]) * (w.diffusivity * area);
            acc.push(total);
        }
        Ok(S::sum(&acc))
    }
}

impl ScalarFunctional for AdvectionDiffusion<'_> {
    fn n_dofs(&self) -> usize {
        2 * self.op.n_nodes
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        let mut dofs = Vec::new();
        for range in self.op.batches() {
            self.op.gather_dofs(range.clone(), 2, 0, &mut dofs);
            sink.term(&dofs, &AdvTerm { w: self, range })?;
        }
        Ok(())
    }
}
