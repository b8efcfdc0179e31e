use serde::{Deserialize, Serialize};

use crate::autodiff::{Recording, Scalar, Var};
use crate::error::{Error, Result};
use crate::operator::{Integrand, QuadPoint};

/// Lamé parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    /// From Young's modulus and Poisson ratio (3D / plane strain).
    pub fn from_young_poisson(e: f64, nu: f64) -> Self {
        Lame {
            lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            mu: e / (2.0 * (1.0 + nu)),
        }
    }
}

/// `ψ = μ ε:ε + ½ λ (tr ε)²` with `ε = sym(∇u)`; `grad` is `d × d`.
pub fn linear_elastic_density<S: Scalar>(grad: &[S], d: usize, p: &Lame) -> S {
    let mut eps = [S::zero(); 9];
    let mut tr = S::zero();
    for i in 0..d {
        tr += grad[i * d + i];
        for j in 0..d {
            eps[i * d + j] = (grad[i * d + j] + grad[j * d + i]) * 0.5;
        }
    }
    let e = &eps[..d * d];
    S::dot(e, e) * p.mu + tr * tr * (0.5 * p.lambda)
}

/// Compressible neo-Hookean `ψ = μ/2 (I₁ − d − 2 ln J) + λ/2 (ln J)²` with
/// `F = I + ∇u`, `I₁ = tr(FᵀF)`, `J = det F`.
pub fn neo_hookean_density<S: Scalar>(grad: &[S], d: usize, p: &Lame) -> Result<S> {
    let mut f = [S::zero(); 9];
    for i in 0..d {
        for j in 0..d {
            f[i * d + j] = if i == j {
                grad[i * d + j] + 1.0
            } else {
                grad[i * d + j]
            };
        }
    }
    let f = &f[..d * d];
    let j = crate::element::det(f, d);
    if j.value() <= 0.0 || !j.value().is_finite() {
        return Err(Error::InvertedElement { j: j.value() });
    }
    let i1 = S::dot(f, f);
    let lnj = j.ln();
    Ok((i1 - d as f64 - lnj * 2.0) * (0.5 * p.mu) + lnj * lnj * (0.5 * p.lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElasticModel {
    LinearElastic,
    NeoHookean,
}

impl ElasticModel {
    pub fn density<S: Scalar>(&self, grad: &[S], d: usize, p: &Lame) -> Result<S> {
        match self {
            ElasticModel::LinearElastic => Ok(linear_elastic_density(grad, d, p)),
            ElasticModel::NeoHookean => neo_hookean_density(grad, d, p),
        }
    }

    /// `∂ψ/∂(∇u)` (first Piola-Kirchhoff stress; Cauchy stress for the
    /// linear model), `d × d`.
    pub fn stress(&self, grad: &[f64], d: usize, p: &Lame) -> Result<Vec<f64>> {
        let rec = Recording::<f64>::new()?;
        let g: Vec<Var<f64>> = grad.iter().map(|&x| rec.var(x)).collect();
        let psi = self.density(&g, d, p)?;
        let adj = rec.adjoints(psi);
        Ok(g.iter().map(|v| v.slot().map_or(0.0, |s| adj[s])).collect())
    }
}

/// Per-element or uniform material parameters.
#[derive(Clone, Debug)]
pub enum MaterialField {
    Uniform(Lame),
    PerElement(Vec<Lame>),
}

impl MaterialField {
    pub fn get(&self, e: usize) -> &Lame {
        match self {
            MaterialField::Uniform(p) => p,
            MaterialField::PerElement(v) => &v[e],
        }
    }
}

/// Elastic strain energy density of a displacement field with `d`
/// components; an optional macroscopic displacement gradient is added to
/// `∇u` (fluctuation formulation).
#[derive(Clone, Debug)]
pub struct Elastic {
    pub d: usize,
    pub model: ElasticModel,
    pub material: MaterialField,
    pub macro_grad: Option<Vec<f64>>,
}

impl Elastic {
    pub fn new(d: usize, model: ElasticModel, p: Lame) -> Self {
        Elastic {
            d,
            model,
            material: MaterialField::Uniform(p),
            macro_grad: None,
        }
    }

    pub fn linear(d: usize, p: Lame) -> Self {
        Self::new(d, ElasticModel::LinearElastic, p)
    }

    pub fn neo_hookean(d: usize, p: Lame) -> Self {
        Self::new(d, ElasticModel::NeoHookean, p)
    }
}

impl Integrand for Elastic {
    fn components(&self) -> usize {
        self.d
    }

    fn eval<S: Scalar>(&self, p: &QuadPoint<'_, S>) -> Result<S> {
        let params = self.material.get(p.elem);
        match &self.macro_grad {
            None => self.model.density(p.grad, self.d, params),
            Some(h) => {
                let mut g = [S::zero(); 9];
                for k in 0..self.d * self.d {
                    g[k] = p.grad[k] + h[k];
                }
                self.model.density(&g[..self.d * self.d], self.d, params)
            }
        }
    }
}

/// Surface load potential `−∫ t · u dΓ` on a boundary operator.
#[derive(Clone, Debug)]
pub struct Traction {
    pub t: Vec<f64>,
}

impl Integrand for Traction {
    fn components(&self) -> usize {
        self.t.len()
    }
    fn needs_value(&self) -> bool {
        true
    }
    fn needs_grad(&self) -> bool {
        false
    }
    fn eval<S: Scalar>(&self, p: &QuadPoint<'_, S>) -> Result<S> {
        let mut coef = [0.0; 3];
        for (c, t) in coef.iter_mut().zip(&self.t) {
            *c = -t;
        }
        Ok(S::lincomb(&coef[..self.t.len()], p.value))
    }
}
