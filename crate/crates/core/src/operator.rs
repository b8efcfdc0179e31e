//! Batched gather / evaluate / reduce over the quadrature points of a mesh.
//!
//! Geometry (`∇N` and `w·detJ` at every quadrature point) is computed once
//! when the operator is built. Energies are exposed as
//! [`ScalarFunctional`]s with one term per element batch, so reverse mode
//! records, sweeps and drops one batch at a time.

use std::ops::Range;

use crate::autodiff::{Scalar, ScalarFunctional, Term, TermSink};
use crate::element::{self, ElementKind, QuadRule};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Default number of elements per batch.
pub const DEFAULT_BATCH_SIZE: usize = 50_000;

/// Precomputed quadrature data for one element block.
#[derive(Clone, Debug)]
pub struct Operator {
    pub kind: ElementKind,
    /// Physical dimension.
    pub d: usize,
    pub n_en: usize,
    pub n_q: usize,
    pub n_nodes: usize,
    pub batch_size: usize,
    pub rule: QuadRule,
    conn: Vec<usize>,
    shape: Vec<f64>,
    grads: Vec<f64>,
    wdet: Vec<f64>,
    xq: Vec<f64>,
}

impl Operator {
    /// Operator over the first block of kind `kind` in `mesh`.
    pub fn new(mesh: &Mesh, kind: ElementKind, batch_size: usize) -> Result<Self> {
        let idx = mesh
            .blocks
            .iter()
            .position(|b| b.kind == kind)
            .ok_or_else(|| Error::InvalidArgument(format!("mesh has no {} block", kind.name())))?;
        Self::from_block(mesh, idx, batch_size)
    }

    pub fn from_block(mesh: &Mesh, block: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let b = mesh
            .blocks
            .get(block)
            .ok_or_else(|| Error::IndexOutOfRange(format!("block {block}")))?;
        let kind = b.kind;
        let d = mesh.dim;
        let n_en = kind.n_nodes();
        let rule = element::quadrature(kind);
        let n_q = rule.n_points();
        let n_el = b.n_elements();
        let tol = element::det_threshold(kind, mesh.bbox_diagonal());
        let mut shape = Vec::with_capacity(n_q * n_en);
        for q in 0..n_q {
            shape.extend(element::shape_functions::<f64>(kind, rule.point(q)));
        }
        let mut grads = Vec::with_capacity(n_el * n_q * n_en * d);
        let mut wdet = Vec::with_capacity(n_el * n_q);
        let mut xq = Vec::with_capacity(n_el * n_q * d);
        let n_nodes = mesh.n_nodes();
        if let Some(&bad) = b.connectivity.iter().find(|&&i| i >= n_nodes) {
            return Err(Error::IndexOutOfRange(format!(
                "node index {bad} >= {n_nodes}"
            )));
        }
        for e in 0..n_el {
            let x = mesh.element_coords(b, e);
            for q in 0..n_q {
                let (g, det) = element::physical_shape_gradients(kind, rule.point(q), &x, d)?;
                if det <= tol {
                    return Err(Error::DegenerateElement {
                        elem: e,
                        det_j: det,
                    });
                }
                grads.extend(g);
                wdet.push(rule.weights[q] * det);
                for i in 0..d {
                    xq.push((0..n_en).map(|a| shape[q * n_en + a] * x[a * d + i]).sum());
                }
            }
        }
        Ok(Operator {
            kind,
            d,
            n_en,
            n_q,
            n_nodes,
            batch_size,
            rule,
            conn: b.connectivity.clone(),
            shape,
            grads,
            wdet,
            xq,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn n_elements(&self) -> usize {
        self.wdet.len() / self.n_q
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.conn[e * self.n_en..(e + 1) * self.n_en]
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.conn
    }

    /// Shape function values at quadrature point `q` (same on every element).
    pub fn shape(&self, q: usize) -> &[f64] {
        &self.shape[q * self.n_en..(q + 1) * self.n_en]
    }

    /// Physical gradients `n_en × d` at `(e, q)`.
    pub fn grad_n(&self, e: usize, q: usize) -> &[f64] {
        let s = self.n_en * self.d;
        let k = e * self.n_q + q;
        &self.grads[k * s..(k + 1) * s]
    }

    /// Quadrature weight times `detJ` at `(e, q)`.
    pub fn wdet(&self, e: usize, q: usize) -> f64 {
        self.wdet[e * self.n_q + q]
    }

    /// Physical position of quadrature point `(e, q)`.
    pub fn point(&self, e: usize, q: usize) -> &[f64] {
        let k = e * self.n_q + q;
        &self.xq[k * self.d..(k + 1) * self.d]
    }

    /// Element measure `Σ_q w detJ`.
    pub fn measure(&self, e: usize) -> f64 {
        (0..self.n_q).map(|q| self.wdet(e, q)).sum()
    }

    /// Element index ranges of the batches, in ascending order.
    pub fn batches(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let n = self.n_elements();
        (0..n.div_ceil(self.batch_size))
            .map(move |b| b * self.batch_size..((b + 1) * self.batch_size).min(n))
    }

    fn components(&self, len: usize) -> Result<usize> {
        if self.n_nodes == 0 || len % self.n_nodes != 0 || len == 0 {
            return Err(Error::ShapeMismatch {
                expected: self.n_nodes,
                got: len,
            });
        }
        Ok(len / self.n_nodes)
    }

    /// Interpolates a nodal field (`n_nodes × m`) to quadrature points.
    pub fn eval<S: Scalar>(&self, nodal: &[S]) -> Result<QuadField<S>> {
        let m = self.components(nodal.len())?;
        let mut data = Vec::with_capacity(self.n_elements() * self.n_q * m);
        let mut comp = vec![S::zero(); self.n_en];
        for range in self.batches() {
            for e in range {
                let el = self.element(e);
                for q in 0..self.n_q {
                    for c in 0..m {
                        for (a, &n) in el.iter().enumerate() {
                            comp[a] = nodal[n * m + c];
                        }
                        data.push(S::lincomb(self.shape(q), &comp));
                    }
                }
            }
        }
        Ok(QuadField {
            n_el: self.n_elements(),
            n_q: self.n_q,
            width: m,
            data,
        })
    }

    /// Physical gradient of a nodal field at quadrature points, `m × d` per
    /// point with `∇u[c][i] = Σ_a u_a[c] ∂N_a/∂x_i`.
    pub fn grad<S: Scalar>(&self, nodal: &[S]) -> Result<QuadField<S>> {
        let m = self.components(nodal.len())?;
        let mut data = Vec::with_capacity(self.n_elements() * self.n_q * m * self.d);
        let mut comp = vec![S::zero(); self.n_en];
        let mut coef = vec![0.0; self.n_en];
        for range in self.batches() {
            for e in range {
                let el = self.element(e);
                for q in 0..self.n_q {
                    let g = self.grad_n(e, q);
                    for c in 0..m {
                        for (a, &n) in el.iter().enumerate() {
                            comp[a] = nodal[n * m + c];
                        }
                        for i in 0..self.d {
                            for a in 0..self.n_en {
                                coef[a] = g[a * self.d + i];
                            }
                            data.push(S::lincomb(&coef, &comp));
                        }
                    }
                }
            }
        }
        Ok(QuadField {
            n_el: self.n_elements(),
            n_q: self.n_q,
            width: m * self.d,
            data,
        })
    }

    /// `Σ_e Σ_q w_q detJ f(e, q)` accumulated in element order, so the
    /// result does not depend on the batch size.
    pub fn integrate<S: Scalar>(&self, field: &QuadField<S>) -> Result<S> {
        if field.width != 1 {
            return Err(Error::ShapeMismatch {
                expected: 1,
                got: field.width,
            });
        }
        if field.n_el != self.n_elements() || field.n_q != self.n_q {
            return Err(Error::ShapeMismatch {
                expected: self.n_elements() * self.n_q,
                got: field.data.len(),
            });
        }
        Ok(S::lincomb(&self.wdet, &field.data))
    }

    /// Global DoFs gathered by the elements in `range`, element-major then
    /// node then component, offset by `offset`.
    pub fn gather_dofs(&self, range: Range<usize>, m: usize, offset: usize, out: &mut Vec<usize>) {
        out.clear();
        for e in range {
            for &n in self.element(e) {
                for c in 0..m {
                    out.push(offset + n * m + c);
                }
            }
        }
    }

    /// Term for the elements in `range`, reading local values in the layout
    /// of [`Operator::gather_dofs`].
    pub fn range_term<'a, I: Integrand>(
        &'a self,
        integrand: &'a I,
        range: Range<usize>,
    ) -> RangeTerm<'a, I> {
        RangeTerm {
            op: self,
            integrand,
            range,
        }
    }
}

/// Per-quadrature-point field, `n_el × n_q × width` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadField<S> {
    pub n_el: usize,
    pub n_q: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> QuadField<S> {
    pub fn at(&self, e: usize, q: usize) -> &[S] {
        let k = e * self.n_q + q;
        &self.data[k * self.width..(k + 1) * self.width]
    }

    /// Applies `f` pointwise, producing a scalar field.
    pub fn map(&self, mut f: impl FnMut(usize, usize, &[S]) -> Result<S>) -> Result<QuadField<S>> {
        let mut data = Vec::with_capacity(self.n_el * self.n_q);
        for e in 0..self.n_el {
            for q in 0..self.n_q {
                data.push(f(e, q, self.at(e, q))?);
            }
        }
        Ok(QuadField {
            n_el: self.n_el,
            n_q: self.n_q,
            width: 1,
            data,
        })
    }
}

/// Field values seen by an [`Integrand`] at one quadrature point.
pub struct QuadPoint<'a, S> {
    pub elem: usize,
    pub q: usize,
    /// `m` interpolated values (empty unless requested).
    pub value: &'a [S],
    /// `m × d` gradient (empty unless requested).
    pub grad: &'a [S],
    /// Physical position of the point.
    pub x: &'a [f64],
}

/// Energy density integrated by an operator.
pub trait Integrand: Sync {
    /// Number of field components per node.
    fn components(&self) -> usize;
    fn needs_value(&self) -> bool {
        false
    }
    fn needs_grad(&self) -> bool {
        true
    }
    fn eval<S: Scalar>(&self, p: &QuadPoint<'_, S>) -> Result<S>;
}

/// Elements `range` of an operator as one functional term.
pub struct RangeTerm<'a, I> {
    op: &'a Operator,
    integrand: &'a I,
    range: Range<usize>,
}

impl<I: Integrand> Term for RangeTerm<'_, I> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let op = self.op;
        let m = self.integrand.components();
        let (n_en, d) = (op.n_en, op.d);
        let stride = n_en * m;
        if x.len() != self.range.len() * stride {
            return Err(Error::ShapeMismatch {
                expected: self.range.len() * stride,
                got: x.len(),
            });
        }
        let need_v = self.integrand.needs_value();
        let need_g = self.integrand.needs_grad();
        let mut comp = vec![S::zero(); n_en];
        let mut coef = vec![0.0; n_en];
        let mut value = Vec::with_capacity(m);
        let mut grad = Vec::with_capacity(m * d);
        let n_pts = self.range.len() * op.n_q;
        let mut psi = Vec::with_capacity(n_pts);
        let mut w = Vec::with_capacity(n_pts);
        for (le, e) in self.range.clone().enumerate() {
            let xe = &x[le * stride..(le + 1) * stride];
            for q in 0..op.n_q {
                value.clear();
                grad.clear();
                let g = op.grad_n(e, q);
                for c in 0..m {
                    for a in 0..n_en {
                        comp[a] = xe[a * m + c];
                    }
                    if need_v {
                        value.push(S::lincomb(op.shape(q), &comp));
                    }
                    if need_g {
                        for i in 0..d {
                            for a in 0..n_en {
                                coef[a] = g[a * d + i];
                            }
                            grad.push(S::lincomb(&coef, &comp));
                        }
                    }
                }
                let p = QuadPoint {
                    elem: e,
                    q,
                    value: &value,
                    grad: &grad,
                    x: op.point(e, q),
                };
                psi.push(self.integrand.eval(&p)?);
                w.push(op.wdet(e, q));
            }
        }
        Ok(S::lincomb(&w, &psi))
    }
}

/// `∫ ψ dΩ` over an operator, one term per batch.
pub struct OperatorEnergy<'a, I> {
    pub op: &'a Operator,
    pub integrand: I,
    /// Position of the field inside the global DoF vector.
    pub offset: usize,
    /// Length of the global DoF vector.
    pub n_dofs: usize,
}

impl<'a, I: Integrand> OperatorEnergy<'a, I> {
    /// Energy over a DoF vector holding exactly this field.
    pub fn new(op: &'a Operator, integrand: I) -> Self {
        let n_dofs = op.n_nodes * integrand.components();
        OperatorEnergy {
            op,
            integrand,
            offset: 0,
            n_dofs,
        }
    }

    /// Energy of a field stored at `offset` inside a vector of `n_dofs`.
    pub fn embedded(op: &'a Operator, integrand: I, offset: usize, n_dofs: usize) -> Self {
        OperatorEnergy {
            op,
            integrand,
            offset,
            n_dofs,
        }
    }
}

impl<I: Integrand> ScalarFunctional for OperatorEnergy<'_, I> {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        let m = self.integrand.components();
        if self.offset + self.op.n_nodes * m > self.n_dofs {
            return Err(Error::ShapeMismatch {
                expected: self.offset + self.op.n_nodes * m,
                got: self.n_dofs,
            });
        }
        let mut dofs = Vec::new();
        for range in self.op.batches() {
            self.op
                .gather_dofs(range.clone(), m, self.offset, &mut dofs);
            sink.term(&dofs, &self.op.range_term(&self.integrand, range))?;
        }
        Ok(())
    }
}
