//! Exponential cohesive law with irreversible unloading, and the interface
//! energy between two bodies meshed with coincident nodes.

use crate::autodiff::{Scalar, ScalarFunctional, Term, TermSink};
use crate::element::ElementKind;
use crate::error::{Error, Result};
use crate::mesh::{Block, Mesh};
use crate::operator::Operator;

/// Openings at or below this use the small-opening quadratic branch.
pub const OPENING_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CohesiveParams {
    /// Fracture energy per unit area.
    pub gamma: f64,
    /// Peak traction.
    pub sigma_c: f64,
    /// Characteristic opening `Γ e⁻¹ / σ_c`.
    pub delta_c: f64,
    /// Penetration penalty.
    pub kappa: f64,
}

impl CohesiveParams {
    pub fn new(gamma: f64, sigma_c: f64, kappa: f64) -> Result<Self> {
        if !(gamma > 0.0 && sigma_c > 0.0 && kappa > 0.0) {
            return Err(Error::InvalidArgument(
                "cohesive parameters must be positive".into(),
            ));
        }
        Ok(CohesiveParams {
            gamma,
            sigma_c,
            delta_c: gamma * (-1.0f64).exp() / sigma_c,
            kappa,
        })
    }
}

/// Loading branch `ψ(δ) = Γ[1 − (1 + δ/δ_c) exp(−δ/δ_c)]`.
pub fn cohesive_potential<S: Scalar>(delta: S, p: &CohesiveParams) -> S {
    let x = delta / p.delta_c;
    (S::one() - (x + 1.0) * (-x).exp()) * p.gamma
}

/// `T(δ) = Γ/δ_c² δ exp(−δ/δ_c)`.
pub fn cohesive_traction(delta: f64, p: &CohesiveParams) -> f64 {
    p.gamma / (p.delta_c * p.delta_c) * delta * (-delta / p.delta_c).exp()
}

/// Opening branch: loading when `δ > δ_max`, otherwise linear unloading to
/// the origin, `ψ(δ_max) − ½(δ_max − δ)(T_m + T_m δ/δ_max)`.
fn opening_energy<S: Scalar>(delta: S, delta_max: f64, p: &CohesiveParams) -> S {
    if delta.value() > delta_max {
        return cohesive_potential(delta, p);
    }
    let tm = cohesive_traction(delta_max, p);
    let psi_m = cohesive_potential(S::cst(delta_max), p);
    psi_m - (S::cst(delta_max) - delta) * (delta * (tm / delta_max) + tm) * 0.5
}

/// Energy per unit area for a displacement jump.
///
/// The effective opening is `δ = ‖jump‖`, or the tangential part alone when
/// the normal jump is negative; the negative normal jump then adds the
/// penetration penalty `½ κ δ_n²`. Openings below [`OPENING_THRESHOLD`]
/// use `ψ_u(0) + ½ κ δ²`, with `ψ_u(0)` the unloading branch at zero.
pub fn cohesive_density<S: Scalar>(
    jump: &[S],
    normal: &[f64],
    delta_max: f64,
    p: &CohesiveParams,
) -> S {
    let dn = S::lincomb(&normal[..jump.len()], jump);
    let closing = dn.value() < 0.0;
    let sq = S::dot(jump, jump) - if closing { dn * dn } else { S::zero() };
    let base = if delta_max > 0.0 {
        opening_energy(S::zero(), delta_max, p).value()
    } else {
        0.0
    };
    let open = if sq.value() > OPENING_THRESHOLD * OPENING_THRESHOLD {
        opening_energy(sq.sqrt(), delta_max, p)
    } else {
        sq * (0.5 * p.kappa) + base
    };
    if closing {
        open + dn * dn * (0.5 * p.kappa)
    } else {
        open
    }
}

/// `max(δ_max, δ)` pointwise.
pub fn update_history(delta: &[f64], delta_max: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != delta_max.len() {
        return Err(Error::ShapeMismatch {
            expected: delta_max.len(),
            got: delta.len(),
        });
    }
    Ok(delta
        .iter()
        .zip(delta_max)
        .map(|(a, b)| a.max(*b))
        .collect())
}

/// Cohesive energy `∫ ψ(⟦u⟧; δ_max) dS` along an interface of node pairs.
///
/// Pairs `(lower, upper)` must be ordered along the interface; consecutive
/// pairs form Line2 segments of an interface operator, and the jump
/// `u_upper − u_lower` is interpolated to its quadrature points, where the
/// history `δ_max` lives.
#[derive(Clone, Debug)]
pub struct CohesiveInterface {
    pub op: Operator,
    pub params: CohesiveParams,
    pub normal: Vec<f64>,
    pub delta_max: Vec<f64>,
    lower: Vec<usize>,
    upper: Vec<usize>,
    d: usize,
    n_dofs: usize,
}

impl CohesiveInterface {
    pub fn new(
        mesh: &Mesh,
        pairs: &[(usize, usize)],
        normal: &[f64],
        params: CohesiveParams,
    ) -> Result<Self> {
        let d = mesh.dim;
        if normal.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                got: normal.len(),
            });
        }
        if pairs.len() < 2 {
            return Err(Error::InvalidArgument(
                "interface needs at least two node pairs".into(),
            ));
        }
        let coords: Vec<f64> = pairs
            .iter()
            .flat_map(|&(a, _)| mesh.node(a).to_vec())
            .collect();
        let connectivity = (0..pairs.len() - 1).flat_map(|k| [k, k + 1]).collect();
        let line = Mesh {
            dim: d,
            coords,
            blocks: vec![Block {
                kind: ElementKind::Line2,
                connectivity,
            }],
        };
        let op = Operator::new(&line, ElementKind::Line2, 1024)?;
        let n_pts = op.n_elements() * op.n_q;
        Ok(CohesiveInterface {
            op,
            params,
            normal: normal.to_vec(),
            delta_max: vec![0.0; n_pts],
            lower: pairs.iter().map(|p| p.0).collect(),
            upper: pairs.iter().map(|p| p.1).collect(),
            d,
            n_dofs: d * mesh.n_nodes(),
        })
    }

    /// Interface area (length in 2D).
    pub fn area(&self) -> f64 {
        (0..self.op.n_elements()).map(|e| self.op.measure(e)).sum()
    }

    fn jumps(&self, u: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.lower
            .iter()
            .zip(&self.upper)
            .flat_map(|(&a, &b)| (0..d).map(move |c| u[b * d + c] - u[a * d + c]))
            .collect()
    }

    /// Effective opening `‖⟦u⟧‖` at each quadrature point.
    pub fn openings(&self, u: &[f64]) -> Result<Vec<f64>> {
        let j = self.op.eval(&self.jumps(u))?;
        Ok(j.data
            .chunks(self.d)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect())
    }

    /// Records the current openings into the history (call after a load
    /// step has converged).
    pub fn commit(&mut self, u: &[f64]) -> Result<()> {
        self.delta_max = update_history(&self.openings(u)?, &self.delta_max)?;
        Ok(())
    }
}

struct InterfaceTerm<'a> {
    s: &'a CohesiveInterface,
    range: std::ops::Range<usize>,
}

impl Term for InterfaceTerm<'_> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let s = self.s;
        let (d, op) = (s.d, &s.op);
        let mut w = Vec::new();
        let mut psi = Vec::new();
        let mut jn = vec![S::zero(); 2 * d];
        let mut jq = vec![S::zero(); d];
        for (le, e) in self.range.clone().enumerate() {
            let xe = &x[le * 4 * d..(le + 1) * 4 * d];
            for a in 0..2 {
                for c in 0..d {
                    jn[a * d + c] = xe[a * 2 * d + c] - xe[a * 2 * d + d + c];
                }
            }
            for q in 0..op.n_q {
                let n = op.shape(q);
                for c in 0..d {
                    jq[c] = jn[c] * n[0] + jn[d + c] * n[1];
                }
                psi.push(cohesive_density(
                    &jq,
                    &s.normal,
                    s.delta_max[e * op.n_q + q],
                    &s.params,
                ));
                w.push(op.wdet(e, q));
            }
        }
        Ok(S::lincomb(&w, &psi))
    }
}

impl ScalarFunctional for CohesiveInterface {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        let d = self.d;
        let mut dofs = Vec::new();
        for range in self.op.batches() {
            dofs.clear();
            for e in range.clone() {
                for &a in self.op.element(e) {
                    dofs.extend((0..d).map(|c| self.upper[a] * d + c));
                    dofs.extend((0..d).map(|c| self.lower[a] * d + c));
                }
            }
            sink.term(&dofs, &InterfaceTerm { s: self, range })?;
        }
        Ok(())
    }
}
