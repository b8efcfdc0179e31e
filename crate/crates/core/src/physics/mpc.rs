//! Multi-point constraints: rigid-body condensation, Lagrange multipliers
//! and periodicity for homogenization.

use crate::autodiff::{
    grad_scalar, Scalar, ScalarFunctional, TapeReal, Term, TermSink, VectorFunction,
};
use crate::coloring::distance2_coloring;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operator::{Operator, OperatorEnergy, DEFAULT_BATCH_SIZE};
use crate::physics::elastic::{Elastic, ElasticModel, MaterialField};
use crate::solver::{solve_refined, Lift, LuFactor};
use crate::sparse::{
    augment_with_constraints, constraint_jacobian_pattern, sparse_hessian, sparsity_from_mesh,
    JacobianOptions,
};

/// Translation and rotation of a rigid 2D inclusion.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RigidBodyDofs {
    pub ux: f64,
    pub uy: f64,
    pub theta: f64,
}

fn rigid_displacement<S: Scalar>(ux: S, uy: S, theta: S, v: [f64; 2]) -> [S; 2] {
    let (c, s) = (theta.cos() - 1.0, theta.sin());
    [ux + c * v[0] - s * v[1], uy + s * v[0] + c * v[1]]
}

/// Overwrites the displacements of `nodes` (2 DoFs per node) with the rigid
/// motion `(u_x, u_y) + R(θ)v − v`, `v = x − center`.
pub fn rigid_body_lift(
    u_full: &mut [f64],
    rigid: &RigidBodyDofs,
    center: &[f64],
    nodes: &[usize],
    mesh: &Mesh,
) {
    for &a in nodes {
        let x = mesh.node(a);
        let v = [x[0] - center[0], x[1] - center[1]];
        let d = rigid_displacement(rigid.ux, rigid.uy, rigid.theta, v);
        u_full[2 * a] = d[0];
        u_full[2 * a + 1] = d[1];
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Free(usize),
    Fixed(f64),
    Rigid { comp: usize, v: [f64; 2] },
}

/// Reduced parametrization of a 2D displacement field: free DoFs, DoFs
/// held at prescribed values, and nodes following a rigid body whose
/// `(u_x, u_y, θ)` are each either free or prescribed. Free rigid
/// coordinates come last in the reduced vector, in the order `u_x, u_y, θ`.
#[derive(Clone, Debug)]
pub struct RigidLift {
    slots: Vec<Slot>,
    rigid_slot: [Option<usize>; 3],
    rigid_value: [f64; 3],
    n_reduced: usize,
    pub center: [f64; 2],
    pub nodes: Vec<usize>,
}

impl RigidLift {
    /// `rigid[k]` is `None` for a free coordinate or `Some(value)`.
    pub fn new(
        mesh: &Mesh,
        fixed: &[(usize, f64)],
        nodes: &[usize],
        center: [f64; 2],
        rigid: [Option<f64>; 3],
    ) -> Result<RigidLift> {
        if mesh.dim != 2 {
            return Err(Error::DimensionMismatch("rigid lift is 2D".into()));
        }
        let n_full = 2 * mesh.n_nodes();
        let mut slots = vec![Slot::Free(0); n_full];
        for &a in nodes {
            if a >= mesh.n_nodes() {
                return Err(Error::IndexOutOfRange(format!("node {a}")));
            }
            let x = mesh.node(a);
            let v = [x[0] - center[0], x[1] - center[1]];
            slots[2 * a] = Slot::Rigid { comp: 0, v };
            slots[2 * a + 1] = Slot::Rigid { comp: 1, v };
        }
        for &(i, val) in fixed {
            if i >= n_full {
                return Err(Error::IndexOutOfRange(format!("fixed DoF {i}")));
            }
            if !matches!(slots[i], Slot::Free(_)) {
                return Err(Error::InvalidArgument(format!("DoF {i} constrained twice")));
            }
            slots[i] = Slot::Fixed(val);
        }
        let mut n = 0;
        for s in slots.iter_mut() {
            if let Slot::Free(r) = s {
                *r = n;
                n += 1;
            }
        }
        let mut rigid_slot = [None; 3];
        let mut rigid_value = [0.0; 3];
        for k in 0..3 {
            match rigid[k] {
                None => {
                    rigid_slot[k] = Some(n);
                    n += 1;
                }
                Some(v) => rigid_value[k] = v,
            }
        }
        Ok(RigidLift {
            slots,
            rigid_slot,
            rigid_value,
            n_reduced: n,
            center,
            nodes: nodes.to_vec(),
        })
    }

    /// Rigid coordinates encoded in a reduced vector.
    pub fn rigid_dofs(&self, reduced: &[f64]) -> RigidBodyDofs {
        let get = |k: usize| self.rigid_slot[k].map_or(self.rigid_value[k], |s| reduced[s]);
        RigidBodyDofs {
            ux: get(0),
            uy: get(1),
            theta: get(2),
        }
    }

    /// Reduced index of the free rigid coordinate `k` (0: u_x, 1: u_y, 2: θ).
    pub fn rigid_slot(&self, k: usize) -> Option<usize> {
        self.rigid_slot[k]
    }
}

impl Lift for RigidLift {
    fn n_full(&self) -> usize {
        self.slots.len()
    }
    fn n_reduced(&self) -> usize {
        self.n_reduced
    }
    fn deps(&self, i: usize, out: &mut Vec<usize>) {
        match self.slots[i] {
            Slot::Free(r) => out.push(r),
            Slot::Fixed(_) => {}
            Slot::Rigid { .. } => out.extend(self.rigid_slot.iter().flatten()),
        }
    }
    fn lift<S: Scalar>(&self, i: usize, reduced: &dyn Fn(usize) -> S) -> S {
        match self.slots[i] {
            Slot::Free(r) => reduced(r),
            Slot::Fixed(v) => S::cst(v),
            Slot::Rigid { comp, v } => {
                let get = |k: usize| {
                    self.rigid_slot[k].map_or(S::cst(self.rigid_value[k]), |s| reduced(s))
                };
                rigid_displacement(get(0), get(1), get(2), v)[comp]
            }
        }
    }
}

/// Resultant moment about the current disk center of the nodal forces
/// `f = ∂Ψ/∂u` on `nodes` (2D, DoF-interleaved vectors).
pub fn moment_about(
    mesh: &Mesh,
    u_full: &[f64],
    forces: &[f64],
    nodes: &[usize],
    center: [f64; 2],
    rigid: &RigidBodyDofs,
) -> f64 {
    let c = [center[0] + rigid.ux, center[1] + rigid.uy];
    nodes
        .iter()
        .map(|&a| {
            let x = mesh.node(a);
            let r = [x[0] + u_full[2 * a] - c[0], x[1] + u_full[2 * a + 1] - c[1]];
            r[0] * forces[2 * a + 1] - r[1] * forces[2 * a]
        })
        .sum()
}

/// Constraint rows `g_k(u) = 0`, each depending on a few DoFs.
pub trait Constraints: Sync {
    fn n_inputs(&self) -> usize;
    fn n_constraints(&self) -> usize;
    /// DoFs of row `k`.
    fn support(&self, k: usize) -> &[usize];
    /// `g_k` given the values of `support(k)`.
    fn eval_row<S: Scalar>(&self, k: usize, local: &[S]) -> Result<S>;
}

impl<C: Constraints> Constraints for &C {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn n_constraints(&self) -> usize {
        (**self).n_constraints()
    }
    fn support(&self, k: usize) -> &[usize] {
        (**self).support(k)
    }
    fn eval_row<S: Scalar>(&self, k: usize, local: &[S]) -> Result<S> {
        (**self).eval_row(k, local)
    }
}

/// Constraint rows as a vector function `g(u)`.
pub struct ConstraintFn<'a, C>(pub &'a C);

impl<C: Constraints> VectorFunction for ConstraintFn<'_, C> {
    fn n_inputs(&self) -> usize {
        self.0.n_inputs()
    }
    fn n_outputs(&self) -> usize {
        self.0.n_constraints()
    }
    fn eval<T: TapeReal>(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != self.0.n_inputs() {
            return Err(Error::ShapeMismatch {
                expected: self.0.n_inputs(),
                got: u.len(),
            });
        }
        let mut local = Vec::new();
        (0..self.0.n_constraints())
            .map(|k| {
                local.clear();
                local.extend(self.0.support(k).iter().map(|&i| u[i]));
                self.0.eval_row(k, &local)
            })
            .collect()
    }
}

/// `L(u, λ) = Ψ(u) + λ·g(u)` over `z = (u, λ)`.
pub struct Lagrangian<F, C> {
    pub f: F,
    pub g: C,
}

struct RowTerm<'a, C> {
    g: &'a C,
    k: usize,
}

impl<C: Constraints> Term for RowTerm<'_, C> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let n = x.len() - 1;
        Ok(x[n] * self.g.eval_row(self.k, &x[..n])?)
    }
}

impl<F: ScalarFunctional, C: Constraints> Lagrangian<F, C> {
    pub fn new(f: F, g: C) -> Result<Self> {
        if f.n_dofs() != g.n_inputs() {
            return Err(Error::DimensionMismatch(format!(
                "functional has {} DoFs, constraints act on {}",
                f.n_dofs(),
                g.n_inputs()
            )));
        }
        Ok(Lagrangian { f, g })
    }

    pub fn n_u(&self) -> usize {
        self.f.n_dofs()
    }
}

impl<F: ScalarFunctional, C: Constraints> ScalarFunctional for Lagrangian<F, C> {
    fn n_dofs(&self) -> usize {
        self.f.n_dofs() + self.g.n_constraints()
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        self.f.visit_terms(sink)?;
        let n_u = self.f.n_dofs();
        let mut dofs = Vec::new();
        for k in 0..self.g.n_constraints() {
            dofs.clear();
            dofs.extend_from_slice(self.g.support(k));
            dofs.push(n_u + k);
            sink.term(&dofs, &RowTerm { g: &self.g, k })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct PeriodicRow {
    support: Vec<usize>,
    offset: f64,
}

/// Periodicity of the fluctuation `ũ`: for each node pair and component,
/// `ũ_slave − ũ_master = 0`. When the unknown is the total field
/// `u = ε̂x + ũ` (see [`PeriodicConstraints::on_total_field`]) the rows read
/// `u_s − u_m − ε̂(x_s − x_m)`, which is the same fluctuation jump.
///
/// Redundant pairs (closing a cycle of already tied nodes, e.g. the last
/// corner of a cell) are dropped, and the rigid translation is removed by
/// pinning one node through extra rows `ũ_pin = 0`.
#[derive(Clone, Debug)]
pub struct PeriodicConstraints {
    pub d: usize,
    pub n_u: usize,
    pub pairs: Vec<(usize, usize)>,
    pub pin: Option<usize>,
    rows: Vec<PeriodicRow>,
}

impl PeriodicConstraints {
    /// `pair_sets` are the outputs of `paired_nodes` for each lattice vector.
    pub fn new(
        pair_sets: &[Vec<(usize, usize)>],
        d: usize,
        n_nodes: usize,
        pin: Option<usize>,
    ) -> Result<Self> {
        let mut parent: Vec<usize> = (0..n_nodes).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut pairs = Vec::new();
        for set in pair_sets {
            for &(m, s) in set {
                if m >= n_nodes || s >= n_nodes {
                    return Err(Error::IndexOutOfRange(format!("pair ({m}, {s})")));
                }
                let (a, b) = (find(&mut parent, m), find(&mut parent, s));
                if a != b {
                    parent[b] = a;
                    pairs.push((m, s));
                }
            }
        }
        let mut rows = Vec::new();
        for &(m, s) in &pairs {
            for c in 0..d {
                rows.push(PeriodicRow {
                    support: vec![m * d + c, s * d + c],
                    offset: 0.0,
                });
            }
        }
        if let Some(p) = pin {
            if p >= n_nodes {
                return Err(Error::IndexOutOfRange(format!("pinned node {p}")));
            }
            for c in 0..d {
                rows.push(PeriodicRow {
                    support: vec![p * d + c],
                    offset: 0.0,
                });
            }
        }
        Ok(PeriodicConstraints {
            d,
            n_u: n_nodes * d,
            pairs,
            pin,
            rows,
        })
    }

    /// Rows for an unknown holding the total field `u = ε̂x + ũ`; `eps` is
    /// the `d × d` macroscopic displacement gradient.
    pub fn on_total_field(mut self, mesh: &Mesh, eps: &[f64]) -> Self {
        let d = self.d;
        let n_pairs = self.pairs.len();
        for (p, &(m, s)) in self.pairs.iter().enumerate() {
            let (xm, xs) = (mesh.node(m), mesh.node(s));
            for c in 0..d {
                self.rows[p * d + c].offset =
                    (0..d).map(|k| eps[c * d + k] * (xs[k] - xm[k])).sum();
            }
        }
        if let Some(pin) = self.pin {
            let x = mesh.node(pin);
            for c in 0..d {
                self.rows[n_pairs * d + c].offset = (0..d).map(|k| eps[c * d + k] * x[k]).sum();
            }
        }
        self
    }
}

impl Constraints for PeriodicConstraints {
    fn n_inputs(&self) -> usize {
        self.n_u
    }
    fn n_constraints(&self) -> usize {
        self.rows.len()
    }
    fn support(&self, k: usize) -> &[usize] {
        &self.rows[k].support
    }
    fn eval_row<S: Scalar>(&self, k: usize, local: &[S]) -> Result<S> {
        let r = &self.rows[k];
        Ok(match local.len() {
            2 => local[1] - local[0] - r.offset,
            _ => local[0] - r.offset,
        })
    }
}

/// Effective stiffness of a periodic cell.
#[derive(Clone, Debug)]
pub struct Homogenization {
    /// Voigt `[11, 22, 12]` stiffness with engineering shear strain.
    pub c: [[f64; 3]; 3],
    /// Largest `|g(ũ)|` over the three load cases.
    pub constraint_residual: f64,
    /// Largest `‖∇L‖∞` at the solutions.
    pub stationarity_residual: f64,
    pub area: f64,
}

/// Unit macroscopic strains in Voigt order, as displacement gradients.
pub fn voigt_unit_strains() -> [[f64; 4]; 3] {
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.5, 0.5, 0.0],
    ]
}

/// Homogenized plane-strain tangent of a linear elastic 2D cell. Column `k`
/// is the volume-averaged stress of the periodic solution under unit
/// macroscopic strain `e_k`; each load case solves the saddle-point system
/// of the Lagrangian with one shared factorization.
pub fn homogenized_tangent(
    mesh: &Mesh,
    material: MaterialField,
    periodic: &PeriodicConstraints,
) -> Result<Homogenization> {
    if mesh.dim != 2 || periodic.d != 2 {
        return Err(Error::DimensionMismatch("homogenization is 2D".into()));
    }
    let kind = mesh
        .blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty mesh".into()))?
        .kind;
    let op = Operator::new(mesh, kind, DEFAULT_BATCH_SIZE)?;
    let area: f64 = (0..op.n_elements()).map(|e| op.measure(e)).sum();
    let n_u = 2 * mesh.n_nodes();
    let k_pat = sparsity_from_mesh(mesh, 2)?;
    let b_pat = constraint_jacobian_pattern(&ConstraintFn(periodic))?;
    let pattern = augment_with_constraints(&k_pat, &b_pat)?;
    let coloring = distance2_coloring(&pattern);
    let n_z = pattern.n_rows;
    let z0 = vec![0.0; n_z];
    let mut c = [[0.0; 3]; 3];
    let mut lu: Option<(LuFactor, _)> = None;
    let mut g_res: f64 = 0.0;
    let mut stat_res: f64 = 0.0;
    for (k, h) in voigt_unit_strains().iter().enumerate() {
        let integrand = Elastic {
            d: 2,
            model: ElasticModel::LinearElastic,
            material: material.clone(),
            macro_grad: Some(h.to_vec()),
        };
        let lag = Lagrangian::new(OperatorEnergy::new(&op, integrand), periodic)?;
        if lu.is_none() {
            let kmat = sparse_hessian(&lag, &z0, &pattern, &coloring, &JacobianOptions::default())?;
            lu = Some((LuFactor::new(&kmat)?, kmat));
        }
        let (fac, kmat) = lu.as_ref().unwrap();
        let r0 = grad_scalar(&lag, &z0)?;
        let rhs: Vec<f64> = r0.iter().map(|v| -v).collect();
        let z = solve_refined(fac, kmat, &rhs)?;
        let r = grad_scalar(&lag, &z)?;
        stat_res = stat_res.max(r.iter().fold(0.0, |m, v| m.max(v.abs())));
        let g = crate::autodiff::eval_vector(&ConstraintFn(periodic), &z[..n_u])?;
        g_res = g_res.max(g.iter().fold(0.0, |m, v| m.max(v.abs())));
        let grad = op.grad(&z[..n_u])?;
        let mut avg = [0.0; 4];
        for e in 0..op.n_elements() {
            for q in 0..op.n_q {
                let gu: Vec<f64> = grad.at(e, q).iter().zip(h).map(|(a, b)| a + b).collect();
                let s = ElasticModel::LinearElastic.stress(&gu, 2, material.get(e))?;
                for (a, v) in avg.iter_mut().zip(&s) {
                    *a += op.wdet(e, q) * v;
                }
            }
        }
        c[0][k] = avg[0] / area;
        c[1][k] = avg[3] / area;
        c[2][k] = 0.5 * (avg[1] + avg[2]) / area;
    }
    Ok(Homogenization {
        c,
        constraint_residual: g_res,
        stationarity_residual: stat_res,
        area,
    })
}
