//! Pipeline-level comparisons against independent oracles.

use energyfem::autodiff::{dense_hessian, grad_scalar, hvp, peak_tape_len, reset_peak_tape_len};
use energyfem::coloring::distance2_coloring;
use energyfem::element::ElementKind;
use energyfem::mesh::{structured_grid, Mesh};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{Elastic, ElasticModel, Lame};
use energyfem::sparse::{
    scatter_add_assemble, sparse_hessian, sparsity_from_mesh, CsrMatrix, JacobianOptions,
};
use energyfem::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rel_inf;

pub fn lame() -> Lame {
    Lame::from_young_poisson(1.0, 0.3)
}

fn unit_grid(n: usize, kind: ElementKind) -> Result<Mesh> {
    let d = if kind == ElementKind::Tet4 { 3 } else { 2 };
    structured_grid(&vec![n; d], &vec![[0.0, 1.0]; d], kind)
}

fn random_vec(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

/// Element-loop residual of plane-strain linear elasticity on Tri3,
/// `r_a = A σ ∇N_a`.
pub fn hand_residual(mesh: &Mesh, u: &[f64], p: &Lame) -> Vec<f64> {
    let mut r = vec![0.0; u.len()];
    let block = &mesh.blocks[0];
    for e in 0..block.n_elements() {
        let conn = block.element(e);
        let x: Vec<&[f64]> = conn.iter().map(|&a| mesh.node(a)).collect();
        let two_a =
            (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
        let dn = [
            [(x[1][1] - x[2][1]) / two_a, (x[2][0] - x[1][0]) / two_a],
            [(x[2][1] - x[0][1]) / two_a, (x[0][0] - x[2][0]) / two_a],
            [(x[0][1] - x[1][1]) / two_a, (x[1][0] - x[0][0]) / two_a],
        ];
        let mut g = [[0.0; 2]; 2];
        for (k, &a) in conn.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] += u[2 * a + i] * dn[k][j];
                }
            }
        }
        let eps = [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ];
        let tr = eps[0][0] + eps[1][1];
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = 2.0 * p.mu * eps[i][j] + if i == j { p.lambda * tr } else { 0.0 };
            }
        }
        for (k, &a) in conn.iter().enumerate() {
            for i in 0..2 {
                r[2 * a + i] += 0.5 * two_a * (s[i][0] * dn[k][0] + s[i][1] * dn[k][1]);
            }
        }
    }
    r
}

/// Relative ∞-norm gap between the AD residual and the element loop on an
/// `n × n` Tri3 grid (`2n²` elements).
pub fn residual_oracle(n: usize, seed: u64) -> Result<f64> {
    let mesh = unit_grid(n, ElementKind::Tri3)?;
    let op = Operator::new(&mesh, ElementKind::Tri3, 50_000)?;
    let f = OperatorEnergy::new(&op, Elastic::linear(2, lame()));
    let u = random_vec(
        2 * mesh.n_nodes(),
        0.1,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    Ok(rel_inf(
        &grad_scalar(&f, &u)?,
        &hand_residual(&mesh, &u, &lame()),
    ))
}

#[derive(Clone, Debug)]
pub struct TangentComparison {
    pub n_dofs: usize,
    pub n_colors: usize,
    pub colored_vs_dense: f64,
    pub scatter_vs_dense: f64,
    pub colored_vs_scatter: f64,
    pub colored_vs_fd: f64,
}

fn dense_rel(a: &CsrMatrix, b: &[Vec<f64>]) -> f64 {
    let ad = a.to_dense();
    let num = ad
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.iter().flatten().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den
}

/// Colored, scatter-add, dense and finite-difference tangents of an elastic
/// energy at a random state.
pub fn tangent_comparison(
    kind: ElementKind,
    n: usize,
    model: ElasticModel,
    seed: u64,
) -> Result<TangentComparison> {
    let mesh = unit_grid(n, kind)?;
    let d = mesh.dim;
    let op = Operator::new(&mesh, kind, 64)?;
    let integrand = Elastic::new(d, model, lame());
    let f = OperatorEnergy::new(&op, integrand.clone());
    let nd = d * mesh.n_nodes();
    let u = random_vec(nd, 0.02, &mut ChaCha8Rng::seed_from_u64(seed));
    let pattern = sparsity_from_mesh(&mesh, d)?;
    let coloring = distance2_coloring(&pattern);
    let opts = JacobianOptions {
        verify_columns: 4,
        ..Default::default()
    };
    let kc = sparse_hessian(&f, &u, &pattern, &coloring, &opts)?;
    let ks = scatter_add_assemble(&op, &integrand, &u, &pattern)?;
    let kd = dense_hessian(&f, &u)?;
    let h = 1e-6;
    let mut kfd = vec![vec![0.0; nd]; nd];
    for j in 0..nd {
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        let (gp, gm) = (grad_scalar(&f, &up)?, grad_scalar(&f, &um)?);
        for i in 0..nd {
            kfd[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(TangentComparison {
        n_dofs: nd,
        n_colors: coloring.n_colors,
        colored_vs_dense: dense_rel(&kc, &kd),
        scatter_vs_dense: dense_rel(&ks, &kd),
        colored_vs_scatter: dense_rel(&kc, &ks.to_dense()),
        colored_vs_fd: dense_rel(&kc, &kfd),
    })
}

/// Largest relative gap between `K_colored v` and `hvp(Ψ, u, v)` over
/// random directions on an `n × n` Tri3 neo-Hookean grid.
pub fn jvp_consistency(n: usize, n_vectors: usize, seed: u64) -> Result<(usize, f64)> {
    let mesh = unit_grid(n, ElementKind::Tri3)?;
    let op = Operator::new(&mesh, ElementKind::Tri3, 50_000)?;
    let f = OperatorEnergy::new(&op, Elastic::neo_hookean(2, lame()));
    let nd = 2 * mesh.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vec(nd, 0.02 / n as f64, &mut rng);
    let pattern = sparsity_from_mesh(&mesh, 2)?;
    let coloring = distance2_coloring(&pattern);
    let k = sparse_hessian(&f, &u, &pattern, &coloring, &JacobianOptions::default())?;
    let mut worst: f64 = 0.0;
    for _ in 0..n_vectors {
        let v = random_vec(nd, 1.0, &mut rng);
        worst = worst.max(rel_inf(&k.spmv(&v)?, &hvp(&f, &u, &v)?));
    }
    Ok((nd, worst))
}

/// `(n_dofs, n_colors)` of structured unit-cube meshes with `m` DoFs per node.
pub fn color_counts(
    kind: ElementKind,
    m: usize,
    divisions: &[usize],
) -> Result<Vec<(usize, usize)>> {
    divisions
        .iter()
        .map(|&n| {
            let mesh = unit_grid(n, kind)?;
            let c = distance2_coloring(&sparsity_from_mesh(&mesh, m)?);
            Ok((m * mesh.n_nodes(), c.n_colors))
        })
        .collect()
}

/// `(n_elements, peak tape length)` of one gradient evaluation per grid.
pub fn tape_peaks(divisions: &[usize], batch: usize) -> Result<Vec<(usize, usize)>> {
    divisions
        .iter()
        .map(|&n| {
            let mesh = unit_grid(n, ElementKind::Tri3)?;
            let op = Operator::new(&mesh, ElementKind::Tri3, batch)?;
            let f = OperatorEnergy::new(&op, Elastic::linear(2, lame()));
            let u = vec![1e-3; 2 * mesh.n_nodes()];
            reset_peak_tape_len();
            grad_scalar(&f, &u)?;
            Ok((op.n_elements(), peak_tape_len()))
        })
        .collect()
}
