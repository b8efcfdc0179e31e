//! Small multilayer perceptrons used as energy densities and as a surrogate
//! inclusion energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, ScalarFunctional, Term, TermSink};
use crate::element::det;
use crate::error::{Error, Result};
use crate::operator::{Integrand, QuadPoint};
use crate::physics::elastic::{neo_hookean_density, Lame};

/// Fully connected network with softplus hidden layers and a scalar,
/// linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Row-major `out × in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// All-zero weights.
    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        Self::check_sizes(sizes)?;
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights: sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Uniform Glorot initialization from a fixed seed, scaled by `scale`.
    pub fn random(sizes: &[usize], seed: u64, scale: f64) -> Result<Mlp> {
        let mut m = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, w) in m.weights.iter_mut().enumerate() {
            let a = scale * (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.gen_range(-a..a));
        }
        for b in m.biases.iter_mut() {
            b.iter_mut()
                .for_each(|x| *x = rng.gen_range(-0.1 * scale..0.1 * scale));
        }
        Ok(m)
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(
                "layer sizes must be positive and end in 1".into(),
            ));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        if x.len() != self.sizes[0] {
            return Err(Error::ShapeMismatch {
                expected: self.sizes[0],
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let out: Vec<S> = (0..n_out)
                .map(|o| {
                    let z = S::lincomb(&w[o * n_in..(o + 1) * n_in], &h) + self.biases[l][o];
                    if l + 1 < n_layers {
                        z.softplus()
                    } else {
                        z
                    }
                })
                .collect();
            h = out;
        }
        Ok(h[0])
    }
}

/// `ψ = NN(I₁ − 3, J − 1) − NN(0, 0) + ψ_base(F)` with `ψ_base` a
/// neo-Hookean density with parameters `base`. Inputs use the 3D
/// invariants `I₁ = tr(FᵀF)`, `J = det F`.
pub fn mlp_energy_density<S: Scalar>(grad: &[S], d: usize, mlp: &Mlp, base: &Lame) -> Result<S> {
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
    let j = det(f, d);
    // Plane problems carry the out-of-plane stretch 1 into I₁.
    let i1 = S::dot(f, f) + (3 - d) as f64;
    let nn = mlp.eval(&[i1 - 3.0, j - 1.0])? - mlp.eval(&[0.0, 0.0])?;
    Ok(nn + neo_hookean_density(grad, d, base)?)
}

/// Elastic integrand with an MLP energy density.
#[derive(Clone, Debug)]
pub struct MlpElastic {
    pub d: usize,
    pub mlp: Mlp,
    pub base: Lame,
}

impl MlpElastic {
    /// Base density `0.1 ×` the given neo-Hookean parameters.
    pub fn new(d: usize, mlp: Mlp, material: Lame) -> Result<Self> {
        if mlp.n_inputs() != 2 {
            return Err(Error::ShapeMismatch {
                expected: 2,
                got: mlp.n_inputs(),
            });
        }
        Ok(MlpElastic {
            d,
            mlp,
            base: Lame {
                lambda: 0.1 * material.lambda,
                mu: 0.1 * material.mu,
            },
        })
    }
}

impl Integrand for MlpElastic {
    fn components(&self) -> usize {
        self.d
    }
    fn eval<S: Scalar>(&self, p: &QuadPoint<'_, S>) -> Result<S> {
        mlp_energy_density(p.grad, self.d, &self.mlp, &self.base)
    }
}

/// Surrogate inclusion energy `NN(u_interface) − NN(0)`, one dense term
/// over the interface DoFs.
#[derive(Clone, Debug)]
pub struct NeuralInclusion {
    pub mlp: Mlp,
    pub dofs: Vec<usize>,
    n_dofs: usize,
    nn0: f64,
}

impl NeuralInclusion {
    pub fn new(mlp: Mlp, dofs: Vec<usize>, n_dofs: usize) -> Result<Self> {
        if mlp.n_inputs() != dofs.len() {
            return Err(Error::ShapeMismatch {
                expected: dofs.len(),
                got: mlp.n_inputs(),
            });
        }
        if let Some(&i) = dofs.iter().find(|&&i| i >= n_dofs) {
            return Err(Error::IndexOutOfRange(format!("interface DoF {i}")));
        }
        let nn0 = mlp.eval(&vec![0.0; dofs.len()])?;
        Ok(NeuralInclusion {
            mlp,
            dofs,
            n_dofs,
            nn0,
        })
    }
}

impl Term for NeuralInclusion {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        Ok(self.mlp.eval(x)? - self.nn0)
    }
}

impl ScalarFunctional for NeuralInclusion {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        sink.term(&self.dofs, self)
    }
}
