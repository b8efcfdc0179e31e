//! Truss fibers embedded in a bulk mesh.

use crate::autodiff::{Scalar, ScalarFunctional, Term, TermSink};
use crate::element::ElementKind;
use crate::error::{Error, Result};
use crate::mesh::{locate_points, Mesh, PointEmbedding};
use crate::operator::Operator;

/// `∫ ½ EA ε² ds` along Line2 fibers whose node displacements are
/// interpolated from the bulk field by barycentric weights;
/// `ε = tᵀ ∇u t` with `t` the reference fiber direction.
#[derive(Clone, Debug)]
pub struct FiberEnergy {
    pub op: Operator,
    pub ea: f64,
    embedding: Vec<PointEmbedding>,
    bulk_nodes: Vec<Vec<usize>>,
    tangents: Vec<Vec<f64>>,
    d: usize,
    n_dofs: usize,
}

impl FiberEnergy {
    pub fn new(bulk: &Mesh, fibers: &Mesh, ea: f64) -> Result<Self> {
        let d = bulk.dim;
        if fibers.dim != d {
            return Err(Error::DimensionMismatch(
                "fiber and bulk dimensions differ".into(),
            ));
        }
        let embedding = locate_points(bulk, &fibers.coords)?;
        let block = bulk
            .blocks
            .iter()
            .find(|b| {
                matches!(b.kind, ElementKind::Tri3 | ElementKind::Tet4) && b.kind.ref_dim() == d
            })
            .ok_or_else(|| Error::UnsupportedElement("fibers need a simplex bulk block".into()))?;
        let bulk_nodes = embedding
            .iter()
            .map(|p| block.element(p.element).to_vec())
            .collect();
        let op = Operator::new(fibers, ElementKind::Line2, 4096)?;
        let tangents = (0..op.n_elements())
            .map(|e| {
                let el = op.element(e);
                let (a, b) = (fibers.node(el[0]), fibers.node(el[1]));
                let t: Vec<f64> = (0..d).map(|i| b[i] - a[i]).collect();
                let l = t.iter().map(|x| x * x).sum::<f64>().sqrt();
                t.iter().map(|x| x / l).collect()
            })
            .collect();
        Ok(FiberEnergy {
            op,
            ea,
            embedding,
            bulk_nodes,
            tangents,
            d,
            n_dofs: d * bulk.n_nodes(),
        })
    }
}

struct FiberTerm<'a> {
    f: &'a FiberEnergy,
    range: std::ops::Range<usize>,
}

impl Term for FiberTerm<'_> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let f = self.f;
        let (d, op) = (f.d, &f.op);
        let mut w = Vec::new();
        let mut psi = Vec::new();
        let mut pos = 0;
        let mut uf = vec![S::zero(); 2 * d];
        for e in self.range.clone() {
            for (a, &node) in op.element(e).iter().enumerate() {
                let bary = &f.embedding[node].bary;
                for c in 0..d {
                    let vals: Vec<S> = (0..bary.len()).map(|k| x[pos + k * d + c]).collect();
                    uf[a * d + c] = S::lincomb(bary, &vals);
                }
                pos += bary.len() * d;
            }
            let t = &f.tangents[e];
            for q in 0..op.n_q {
                let g = op.grad_n(e, q);
                let mut eps = S::zero();
                for c in 0..d {
                    for i in 0..d {
                        let gci = uf[c] * g[i] + uf[d + c] * g[d + i];
                        eps += gci * (t[c] * t[i]);
                    }
                }
                psi.push(eps * eps * (0.5 * f.ea));
                w.push(op.wdet(e, q));
            }
        }
        Ok(S::lincomb(&w, &psi))
    }
}

impl ScalarFunctional for FiberEnergy {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        let d = self.d;
        let mut dofs = Vec::new();
        for range in self.op.batches() {
            dofs.clear();
            for e in range.clone() {
                for &node in self.op.element(e) {
                    for &b in &self.bulk_nodes[node] {
                        dofs.extend((0..d).map(|c| b * d + c));
                    }
                }
            }
            sink.term(&dofs, &FiberTerm { f: self, range })?;
        }
        Ok(())
    }
}
