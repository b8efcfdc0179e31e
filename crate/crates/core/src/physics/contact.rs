//! Two-pass node-to-segment penalty contact in 2D.

use crate::autodiff::{Scalar, ScalarFunctional, Term, TermSink};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// `½ κ g²` over both surfaces, `g > 0` meaning penetration, averaged over
/// the two passes (nodes of surface 1 against segments of surface 2 and
/// vice versa).
///
/// Each surface is a polyline of node ids ordered so that its body lies to
/// the left (counter-clockwise boundary order); the outward normal of a
/// segment `a → b` is then `(e_y, −e_x)/|e|`. Nodal weights are tributary
/// lengths in the reference configuration.
#[derive(Clone, Debug)]
pub struct PenaltyContact {
    pub kappa: f64,
    n_dofs: usize,
    n1: usize,
    x: Vec<[f64; 2]>,
    w: Vec<f64>,
    dofs: Vec<usize>,
}

fn tributary(x: &[[f64; 2]]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for k in 0..x.len().saturating_sub(1) {
        let l = ((x[k + 1][0] - x[k][0]).powi(2) + (x[k + 1][1] - x[k][1]).powi(2)).sqrt();
        w[k] += 0.5 * l;
        w[k + 1] += 0.5 * l;
    }
    w
}

impl PenaltyContact {
    pub fn new(mesh: &Mesh, surface1: &[usize], surface2: &[usize], kappa: f64) -> Result<Self> {
        if mesh.dim != 2 {
            return Err(Error::DimensionMismatch("contact is 2D".into()));
        }
        if surface1.len() < 2 || surface2.len() < 2 {
            return Err(Error::InvalidArgument(
                "each surface needs at least one segment".into(),
            ));
        }
        let nodes: Vec<usize> = surface1.iter().chain(surface2).copied().collect();
        if let Some(&a) = nodes.iter().find(|&&a| a >= mesh.n_nodes()) {
            return Err(Error::IndexOutOfRange(format!("node {a}")));
        }
        let x: Vec<[f64; 2]> = nodes
            .iter()
            .map(|&a| [mesh.node(a)[0], mesh.node(a)[1]])
            .collect();
        let n1 = surface1.len();
        let mut w = tributary(&x[..n1]);
        w.extend(tributary(&x[n1..]));
        let dofs = nodes.iter().flat_map(|&a| [2 * a, 2 * a + 1]).collect();
        Ok(PenaltyContact {
            kappa,
            n_dofs: 2 * mesh.n_nodes(),
            n1,
            x,
            w,
            dofs,
        })
    }

    fn pass<S: Scalar>(&self, nodes: &[[S; 2]], w: &[f64], segs: &[[S; 2]]) -> S {
        let mut acc = S::zero();
        for (p, &wi) in nodes.iter().zip(w) {
            let mut best: Option<(f64, S)> = None;
            for s in segs.windows(2) {
                let e = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
                let d = [p[0] - s[0][0], p[1] - s[0][1]];
                let l2 = e[0].value().powi(2) + e[1].value().powi(2);
                let t = (d[0].value() * e[0].value() + d[1].value() * e[1].value()) / l2;
                if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                    continue;
                }
                let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                let g = (d[1] * e[0] - d[0] * e[1]) / len;
                let dist = g.value().abs();
                if best.as_ref().is_none_or(|b| dist < b.0) {
                    best = Some((dist, g));
                }
            }
            if let Some((_, g)) = best {
                if g.value() > 0.0 {
                    acc += g * g * (0.5 * self.kappa * wi);
                }
            }
        }
        acc
    }
}

impl Term for PenaltyContact {
    fn eval<S: Scalar>(&self, u: &[S]) -> Result<S> {
        let p: Vec<[S; 2]> = self
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| [u[2 * k] + x[0], u[2 * k + 1] + x[1]])
            .collect();
        let (p1, p2) = p.split_at(self.n1);
        let (w1, w2) = self.w.split_at(self.n1);
        Ok((self.pass(p1, w1, p2) + self.pass(p2, w2, p1)) * 0.5)
    }
}

impl ScalarFunctional for PenaltyContact {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        sink.term(&self.dofs, self)
    }
}
