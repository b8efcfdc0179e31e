use std::f64::consts::PI;

use energyfem::autodiff::{
    dense_hessian, dense_jacobian, eval_vector, grad_scalar, value, Dual, Scalar, ScalarFunctional,
    SingleTerm, Sum,
};
use energyfem::coloring::distance2_coloring;
use energyfem::element::ElementKind;
use energyfem::mesh::{
    boundary_nodes, icosphere, line_mesh, paired_nodes, structured_grid, Mesh, Selector,
};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::*;
use energyfem::solver::{
    direct_solve, lift_pattern, lift_vector, newton_assembled, LiftedFunctional, NewtonOptions,
};
use energyfem::sparse::{
    augment_with_constraints, constraint_jacobian_pattern, sparsity_from_mesh, CsrMatrix,
    SparsityPattern,
};
use energyfem::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lame() -> Lame {
    Lame::from_young_poisson(1.0, 0.3)
}

fn rel_fd_error(f: impl Fn(&[f64]) -> f64, g: &[f64], x: &[f64]) -> f64 {
    let h = 1e-6;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        num = num.max((fd - g[i]).abs());
        den = den.max(g[i].abs());
    }
    num / den.max(1e-300)
}

fn ad_grad(f: impl Fn(&[Dual]) -> Dual, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let xd: Vec<Dual> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::new(v, if k == i { 1.0 } else { 0.0 }))
                .collect();
            f(&xd).eps
        })
        .collect()
}

#[test]
fn linear_elastic_density_cases() {
    let p = lame();
    assert_eq!(linear_elastic_density(&[0.0; 4], 2, &p), 0.0);
    let e = 1e-3;
    let psi = linear_elastic_density(&[e, 0.0, 0.0, 0.0], 2, &p);
    assert!((psi - 0.5 * (p.lambda + 2.0 * p.mu) * e * e).abs() < 1e-18);
    assert_eq!(linear_elastic_density(&[0.0, 0.3, -0.3, 0.0], 2, &p), 0.0);
    let g3 = [0.0, 0.1, -0.2, -0.1, 0.0, 0.4, 0.2, -0.4, 0.0];
    assert!(linear_elastic_density(&g3, 3, &p).abs() < 1e-18);
}

#[test]
fn neo_hookean_density_cases() {
    let p = lame();
    assert_eq!(neo_hookean_density(&[0.0; 9], 3, &p).unwrap(), 0.0);
    let s = ElasticModel::NeoHookean.stress(&[0.0; 4], 2, &p).unwrap();
    assert!(s.iter().all(|v| v.abs() < 1e-15));
    let g = [1e-3, 4e-4, -2e-4, -5e-4];
    let sym_g = [1e-3, 1e-4, 1e-4, -5e-4];
    let nh = neo_hookean_density(&sym_g, 2, &p).unwrap();
    let le = linear_elastic_density(&g, 2, &p);
    assert!(((nh - le) / le).abs() < 1e-2);
    assert!(matches!(
        neo_hookean_density(&[-2.0, 0.0, 0.0, 0.0], 2, &p),
        Err(Error::InvertedElement { .. })
    ));
}

#[test]
fn neo_hookean_frame_invariance() {
    let p = lame();
    let g = [0.1, 0.05, -0.03, 0.08];
    let f = [1.0 + g[0], g[1], g[2], 1.0 + g[3]];
    let th: f64 = 0.7;
    let r = [th.cos(), -th.sin(), th.sin(), th.cos()];
    let rf = [
        r[0] * f[0] + r[1] * f[2],
        r[0] * f[1] + r[1] * f[3],
        r[2] * f[0] + r[3] * f[2],
        r[2] * f[1] + r[3] * f[3],
    ];
    let g2 = [rf[0] - 1.0, rf[1], rf[2], rf[3] - 1.0];
    let a = neo_hookean_density(&g, 2, &p).unwrap();
    let b = neo_hookean_density(&g2, 2, &p).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn traction_potential_cases() {
    let line = line_mesh(4, &[0.0, 0.0], &[2.0, 0.0]).unwrap();
    let op = Operator::new(&line, ElementKind::Line2, 100).unwrap();
    let f = OperatorEnergy::new(&op, Traction { t: vec![0.3, -0.2] });
    assert_eq!(value(&f, &vec![0.0; 10]).unwrap(), 0.0);
    let c: Vec<f64> = (0..5).flat_map(|_| [0.5, 2.0]).collect();
    assert!((value(&f, &c).unwrap() + 2.0 * (0.3 * 0.5 - 0.2 * 2.0)).abs() < 1e-14);
    let one = line_mesh(1, &[0.0, 0.0], &[3.0, 0.0]).unwrap();
    let op1 = Operator::new(&one, ElementKind::Line2, 1).unwrap();
    let g = grad_scalar(
        &OperatorEnergy::new(&op1, Traction { t: vec![2.0, 1.0] }),
        &[0.0; 4],
    )
    .unwrap();
    assert_eq!(g, vec![-3.0, -1.5, -3.0, -1.5]);
}

#[test]
fn densities_match_finite_differences() {
    let p = lame();
    let cp = CohesiveParams::new(0.02, 0.01, 1.0).unwrap();
    let mlp = Mlp::random(&[2, 16, 16, 1], 3, 1.0).unwrap();
    let x = [0.05, -0.02, 0.03, 0.04];
    let checks: Vec<(Box<dyn Fn(&[f64]) -> f64>, Box<dyn Fn(&[Dual]) -> Dual>)> = vec![
        (
            Box::new(|g| linear_elastic_density(g, 2, &p)),
            Box::new(|g| linear_elastic_density(g, 2, &p)),
        ),
        (
            Box::new(|g| neo_hookean_density(g, 2, &p).unwrap()),
            Box::new(|g| neo_hookean_density(g, 2, &p).unwrap()),
        ),
        (
            Box::new(|g| cohesive_density(&g[..2], &[0.0, 1.0], 0.0, &cp)),
            Box::new(|g| cohesive_density(&g[..2], &[0.0, 1.0], 0.0, &cp)),
        ),
        (
            Box::new(|g| cohesive_density(&g[..2], &[0.0, 1.0], 0.2, &cp)),
            Box::new(|g| cohesive_density(&g[..2], &[0.0, 1.0], 0.2, &cp)),
        ),
        (
            Box::new(|g| mlp_energy_density(g, 2, &mlp, &p).unwrap()),
            Box::new(|g| mlp_energy_density(g, 2, &mlp, &p).unwrap()),
        ),
    ];
    for (k, (f, fd)) in checks.iter().enumerate() {
        let g = ad_grad(fd, &x);
        assert!(rel_fd_error(f, &g, &x) < 1e-5, "density {k}");
    }
    // Compressed branch of the cohesive law.
    let xc = [0.01, -0.03];
    let g = ad_grad(|j| cohesive_density(j, &[0.0, 1.0], 0.0, &cp), &xc);
    assert!(rel_fd_error(|j| cohesive_density(j, &[0.0, 1.0], 0.0, &cp), &g, &xc) < 1e-5);
}

#[test]
fn rigid_body_lift_cases() {
    let mesh = structured_grid(&[4, 4], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let nodes = boundary_nodes(
        &mesh,
        &Selector::Ball {
            center: vec![0.5, 0.5],
            radius: 0.3,
        },
    );
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    rigid_body_lift(
        &mut u,
        &RigidBodyDofs {
            ux: 0.1,
            uy: -0.2,
            theta: 0.0,
        },
        &[0.5, 0.5],
        &nodes,
        &mesh,
    );
    for &a in &nodes {
        assert!((u[2 * a] - 0.1).abs() < 1e-15 && (u[2 * a + 1] + 0.2).abs() < 1e-15);
    }
    let one = Mesh {
        dim: 2,
        coords: vec![0.5, 0.0, 0.0, 0.0],
        blocks: vec![],
    };
    let mut u = vec![0.0; 4];
    rigid_body_lift(
        &mut u,
        &RigidBodyDofs {
            ux: 0.0,
            uy: 0.0,
            theta: PI / 2.0,
        },
        &[0.0, 0.0],
        &[0],
        &one,
    );
    assert!((u[0] + 0.5).abs() < 1e-15 && (u[1] - 0.5).abs() < 1e-15);
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    rigid_body_lift(
        &mut u,
        &RigidBodyDofs {
            ux: 0.3,
            uy: 0.1,
            theta: 1.1,
        },
        &[0.5, 0.5],
        &nodes,
        &mesh,
    );
    for &a in &nodes {
        for &b in &nodes {
            let d0 = ((mesh.node(a)[0] - mesh.node(b)[0]).powi(2)
                + (mesh.node(a)[1] - mesh.node(b)[1]).powi(2))
            .sqrt();
            let xa = [mesh.node(a)[0] + u[2 * a], mesh.node(a)[1] + u[2 * a + 1]];
            let xb = [mesh.node(b)[0] + u[2 * b], mesh.node(b)[1] + u[2 * b + 1]];
            let d1 = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
            assert!((d0 - d1).abs() < 1e-12);
        }
    }
}

#[test]
fn rigid_inclusion_equilibrium_has_zero_moment() {
    let mesh = structured_grid(&[8, 8], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let center = [0.625, 0.625];
    let disk = boundary_nodes(
        &mesh,
        &Selector::Ball {
            center: center.to_vec(),
            radius: 0.2,
        },
    );
    let bottom = boundary_nodes(
        &mesh,
        &Selector::BoxFace {
            axis: 1,
            max: false,
        },
    );
    let mut fixed = Vec::new();
    for &a in &bottom {
        fixed.extend([(2 * a, 0.0), (2 * a + 1, 0.0)]);
    }
    for a in boundary_nodes(&mesh, &Selector::BoxFace { axis: 0, max: true }) {
        if !bottom.contains(&a) {
            fixed.extend([(2 * a, 0.0), (2 * a + 1, 0.05)]);
        }
    }
    let lift = RigidLift::new(&mesh, &fixed, &disk, center, [Some(0.02), Some(0.0), None]).unwrap();
    let op = Operator::new(&mesh, ElementKind::Tri3, 64).unwrap();
    let full = OperatorEnergy::new(&op, Elastic::neo_hookean(2, lame()));
    let red = LiftedFunctional { f: &full, lift };
    let pat = lift_pattern(&sparsity_from_mesh(&mesh, 2).unwrap(), &red.lift).unwrap();
    let col = distance2_coloring(&pat);
    let n = red.n_dofs();
    let (ur, rep) =
        newton_assembled(&red, &vec![0.0; n], &pat, &col, &NewtonOptions::default()).unwrap();
    assert!(rep.converged);
    let u = lift_vector(&red.lift, &ur).unwrap();
    let rigid = red.lift.rigid_dofs(&ur);
    assert!(rigid.theta.abs() > 1e-6);
    let f = grad_scalar(&full, &u).unwrap();
    let m = moment_about(&mesh, &u, &f, &disk, center, &rigid);
    assert!(m.abs() < 1e-10, "moment {m:e}");
    // Dense check of the lifted Hessian structure.
    let h = dense_hessian(&red, &ur).unwrap();
    for i in 0..n {
        for j in 0..n {
            if h[i][j] != 0.0 {
                assert!(pat.contains(i, j));
            }
        }
    }
}

struct OneConstraint;

impl Constraints for OneConstraint {
    fn n_inputs(&self) -> usize {
        2
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn support(&self, _k: usize) -> &[usize] {
        &[0, 1]
    }
    fn eval_row<S: Scalar>(&self, _k: usize, x: &[S]) -> Result<S> {
        Ok(x[0] + x[1] * 2.0 - 1.0)
    }
}

struct Toy;

impl energyfem::autodiff::Energy for Toy {
    fn n_dofs(&self) -> usize {
        2
    }
    fn energy<S: Scalar>(&self, u: &[S]) -> Result<S> {
        Ok(u[0] * u[0] + u[1] * u[1] * 3.0)
    }
}

#[test]
fn lagrangian_cases() {
    let lag = Lagrangian::new(SingleTerm::new(Toy), OneConstraint).unwrap();
    assert_eq!(
        value(&lag, &[0.3, 0.4, 0.0]).unwrap(),
        value(&SingleTerm::new(Toy), &[0.3, 0.4]).unwrap()
    );
    let h = dense_hessian(&lag, &[0.0; 3]).unwrap();
    let mut oracle_rows = vec![Vec::new(); 3];
    for i in 0..3 {
        for j in 0..3 {
            if h[i][j] != 0.0 {
                oracle_rows[i].push(j);
            }
        }
    }
    let oracle = SparsityPattern::from_rows(3, oracle_rows).unwrap();
    let k = SparsityPattern::from_rows(2, vec![vec![0], vec![1]]).unwrap();
    let b = constraint_jacobian_pattern(&ConstraintFn(&OneConstraint)).unwrap();
    assert_eq!(augment_with_constraints(&k, &b).unwrap(), oracle);
    // Stationary point: solve the saddle system and check the λ-block.
    let kk = CsrMatrix::from_dense(&h, 0.0);
    let r0 = grad_scalar(&lag, &[0.0; 3]).unwrap();
    let z = direct_solve(&kk, &r0.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
    let g = grad_scalar(&lag, &z).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-14));
    assert!((z[0] + 2.0 * z[1] - 1.0).abs() < 1e-14);
    assert!(Lagrangian::new(
        SingleTerm::new(Toy),
        PeriodicConstraints::new(&[], 2, 3, None).unwrap()
    )
    .is_err());
}

fn square_cell(n: usize) -> (Mesh, Vec<Vec<(usize, usize)>>) {
    let mesh = structured_grid(&[n, n], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let px = paired_nodes(&mesh, &[1.0, 0.0], None).unwrap();
    let py = paired_nodes(&mesh, &[0.0, 1.0], None).unwrap();
    (mesh, vec![px, py])
}

#[test]
fn periodic_constraint_cases() {
    let (mesh, sets) = square_cell(4);
    let pc = PeriodicConstraints::new(&sets, 2, mesh.n_nodes(), Some(0)).unwrap();
    // 5 + 5 pairs, one redundant corner pair dropped, plus 2 pin rows.
    assert_eq!(pc.pairs.len(), 9);
    assert_eq!(pc.n_constraints(), 20);
    let g = ConstraintFn(&pc);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, b): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    let wave = |x: &[f64]| {
        [
            (2.0 * PI * (x[0] + a)).sin() * (2.0 * PI * x[1]).cos(),
            (2.0 * PI * (x[1] + b)).sin(),
        ]
    };
    let w0 = wave(mesh.node(0));
    let u: Vec<f64> = (0..mesh.n_nodes())
        .flat_map(|n| {
            let w = wave(mesh.node(n));
            [w[0] - w0[0], w[1] - w0[1]]
        })
        .collect();
    assert!(eval_vector(&g, &u).unwrap().iter().all(|v| v.abs() < 1e-14));
    let (m, s) = pc.pairs[0];
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    u[2 * s] = 1.0 + u[2 * m];
    let r = eval_vector(&g, &u).unwrap();
    assert_eq!((r[0], r[1]), (1.0, 0.0));
    assert!(r[2..].iter().all(|v| *v == 0.0));
    // Total-field rows vanish on an affine field for any macro strain.
    let eps = [0.3, -0.1, 0.2, 0.05];
    let tot = PeriodicConstraints::new(&sets, 2, mesh.n_nodes(), Some(0))
        .unwrap()
        .on_total_field(&mesh, &eps);
    let affine: Vec<f64> = (0..mesh.n_nodes())
        .flat_map(|a| {
            let x = mesh.node(a);
            [eps[0] * x[0] + eps[1] * x[1], eps[2] * x[0] + eps[3] * x[1]]
        })
        .collect();
    assert!(eval_vector(&ConstraintFn(&tot), &affine)
        .unwrap()
        .iter()
        .all(|v| v.abs() < 1e-15));
    assert!(
        eval_vector(&ConstraintFn(&pc), &vec![0.0; 2 * mesh.n_nodes()])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0)
    );
}

fn plane_strain(p: &Lame) -> [[f64; 3]; 3] {
    [
        [p.lambda + 2.0 * p.mu, p.lambda, 0.0],
        [p.lambda, p.lambda + 2.0 * p.mu, 0.0],
        [0.0, 0.0, p.mu],
    ]
}

#[test]
fn homogeneous_cell_recovers_phase_stiffness() {
    let (mesh, sets) = square_cell(6);
    let pc = PeriodicConstraints::new(&sets, 2, mesh.n_nodes(), Some(0)).unwrap();
    let p = Lame::from_young_poisson(50e3, 0.2);
    let h = homogenized_tangent(&mesh, MaterialField::Uniform(p), &pc).unwrap();
    let c0 = plane_strain(&p);
    for i in 0..3 {
        for j in 0..3 {
            assert!(
                (h.c[i][j] - c0[i][j]).abs() <= 1e-8 * c0[0][0],
                "{i}{j}: {} vs {}",
                h.c[i][j],
                c0[i][j]
            );
        }
    }
    assert!(h.constraint_residual < 1e-10);
    // Two phases with equal properties reduce to the same answer.
    let per = MaterialField::PerElement(vec![p; mesh.blocks[0].n_elements()]);
    let h2 = homogenized_tangent(&mesh, per, &pc).unwrap();
    assert!((h2.c[0][0] - c0[0][0]).abs() <= 1e-8 * c0[0][0]);
}

#[test]
fn stiff_inclusion_cell_is_symmetric_and_stiffer() {
    let (mesh, sets) = square_cell(10);
    let pc = PeriodicConstraints::new(&sets, 2, mesh.n_nodes(), Some(0)).unwrap();
    let op = Operator::new(&mesh, ElementKind::Tri3, 1000).unwrap();
    let (pm, pi) = (
        Lame::from_young_poisson(1.0, 0.3),
        Lame::from_young_poisson(10.0, 0.3),
    );
    let mats = (0..op.n_elements())
        .map(|e| {
            let x = op.point(e, 0);
            if (x[0] - 0.5).hypot(x[1] - 0.5) < 0.25 {
                pi
            } else {
                pm
            }
        })
        .collect();
    let h = homogenized_tangent(&mesh, MaterialField::PerElement(mats), &pc).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((h.c[i][j] - h.c[j][i]).abs() <= 1e-8 * h.c[0][0]);
        }
    }
    assert!(h.c[0][0] > plane_strain(&pm)[0][0]);
    assert!(h.constraint_residual < 1e-10);
}

fn two_blocks(gap: f64) -> (Mesh, Vec<usize>, Vec<usize>) {
    let mut mesh =
        structured_grid(&[4, 1], &[[0.0, 1.0], [-0.25, 0.0]], ElementKind::Quad4).unwrap();
    let top = structured_grid(
        &[4, 1],
        &[[0.0, 1.0], [gap, gap + 0.25]],
        ElementKind::Quad4,
    )
    .unwrap();
    let off = mesh.append(&top).unwrap();
    // Lower body's top edge runs right-to-left in its CCW boundary order;
    // the upper body's bottom edge runs left-to-right.
    let s1: Vec<usize> = (0..5).rev().map(|i| 5 + i).collect();
    let s2: Vec<usize> = (0..5).map(|i| off + i).collect();
    (mesh, s1, s2)
}

#[test]
fn contact_cases() {
    let (mesh, s1, s2) = two_blocks(0.01);
    let c = PenaltyContact::new(&mesh, &s1, &s2, 100.0).unwrap();
    let u = vec![0.0; 2 * mesh.n_nodes()];
    assert_eq!(value(&c, &u).unwrap(), 0.0);
    assert!(grad_scalar(&c, &u).unwrap().iter().all(|v| *v == 0.0));
    let (mesh, s1, s2) = two_blocks(0.0);
    let c = PenaltyContact::new(&mesh, &s1, &s2, 100.0).unwrap();
    let p = 0.02;
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    for &a in &s2 {
        u[2 * a + 1] = -p;
    }
    let e = value(&c, &u).unwrap();
    assert!((e - 0.5 * 100.0 * p * p * 1.0).abs() < 1e-12, "{e}");
    // Action-reaction on a perturbed, penetrating state.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for a in 0..mesh.n_nodes() {
        u[2 * a] += rng.gen_range(-0.003..0.003);
        u[2 * a + 1] += rng.gen_range(-0.003..0.003);
    }
    let g = grad_scalar(&c, &u).unwrap();
    let body1 = 10;
    for comp in 0..2 {
        let f1: f64 = (0..body1).map(|a| g[2 * a + comp]).sum();
        let f2: f64 = (body1..mesh.n_nodes()).map(|a| g[2 * a + comp]).sum();
        assert!((f1 + f2).abs() < 1e-10);
    }
    assert!(g[2 * s2[2] + 1] < 0.0);
}

#[test]
fn cohesive_law_cases() {
    let p = CohesiveParams::new(0.02, 0.01, 1.0).unwrap();
    assert!((p.delta_c - 0.02 * (-1.0f64).exp() / 0.01).abs() < 1e-16);
    assert_eq!(cohesive_density(&[0.0, 0.0], &[0.0, 1.0], 0.0, &p), 0.0);
    let t = cohesive_potential(Dual::new(p.delta_c, 1.0), &p).eps;
    assert!((t - p.sigma_c).abs() < 1e-15);
    assert!((cohesive_traction(p.delta_c, &p) - p.sigma_c).abs() < 1e-15);
    let psi10 = cohesive_potential(10.0 * p.delta_c, &p);
    assert!((psi10 - p.gamma * (1.0 - 11.0 * (-10.0f64).exp())).abs() < 1e-15);
    let n = [0.0, 1.0];
    // Unloading is linear to the origin: traction T(δ_max) δ / δ_max.
    let dm = 1.5 * p.delta_c;
    for frac in [0.2, 0.5, 0.9] {
        let d = frac * dm;
        let tr = cohesive_density(&[Dual::cst(0.0), Dual::new(d, 1.0)], &n, dm, &p).eps;
        assert!((tr - cohesive_traction(dm, &p) * frac).abs() < 1e-14);
    }
    // Unload/reload to δ_max closes exactly.
    let at = |d: f64| cohesive_density(&[Dual::cst(0.0), Dual::new(d, 1.0)], &n, dm, &p);
    let before = cohesive_density(&[Dual::cst(0.0), Dual::new(dm, 1.0)], &n, 0.0, &p);
    let _ = at(0.3 * dm);
    let after = at(dm);
    assert!((before.re - after.re).abs() < 1e-12 && (before.eps - after.eps).abs() < 1e-12);
    // Energy released along the unloading path equals the triangle area.
    let drop = at(dm).re - at(0.5 * dm).re;
    let tri = 0.5 * cohesive_traction(dm, &p) / dm * (dm * dm - 0.25 * dm * dm);
    assert!((drop - tri).abs() < 1e-15);
}

#[test]
fn history_update_cases() {
    assert_eq!(
        update_history(&[0.1, 0.2], &[0.3, 0.4]).unwrap(),
        vec![0.3, 0.4]
    );
    assert_eq!(
        update_history(&[0.5, 0.6], &[0.3, 0.4]).unwrap(),
        vec![0.5, 0.6]
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
    let m = update_history(&a, &b).unwrap();
    for i in 0..50 {
        assert_eq!(m[i], if a[i] > b[i] { a[i] } else { b[i] });
    }
    assert!(update_history(&a, &b[..3]).is_err());
}

#[test]
fn cohesive_interface_energy_and_history() {
    let mut mesh = structured_grid(&[4, 1], &[[0.0, 2.0], [0.0, 1.0]], ElementKind::Quad4).unwrap();
    let top = structured_grid(&[4, 1], &[[0.0, 2.0], [1.0, 2.0]], ElementKind::Quad4).unwrap();
    let off = mesh.append(&top).unwrap();
    let pairs: Vec<(usize, usize)> = (0..5).map(|i| (5 + i, off + i)).collect();
    let p = CohesiveParams::new(0.02, 0.01, 1.0).unwrap();
    let mut coh = CohesiveInterface::new(&mesh, &pairs, &[0.0, 1.0], p).unwrap();
    assert!((coh.area() - 2.0).abs() < 1e-15);
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    let open = 3.0 * p.delta_c;
    for i in 0..5 {
        u[2 * (off + i) + 1] = open;
    }
    let e = value(&coh, &u).unwrap();
    assert!((e - 2.0 * cohesive_potential(open, &p)).abs() < 1e-15);
    coh.commit(&u).unwrap();
    assert!(coh.delta_max.iter().all(|d| (d - open).abs() < 1e-15));
    for i in 0..5 {
        u[2 * (off + i) + 1] = 0.5 * open;
    }
    let e_un = value(&coh, &u).unwrap();
    assert!(e_un < e && e_un > 0.0);
    coh.commit(&u).unwrap();
    assert!(coh.delta_max.iter().all(|d| (d - open).abs() < 1e-15));
    // Interface forces balance between the faces.
    let g = grad_scalar(&coh, &u).unwrap();
    let s: f64 = g.iter().skip(1).step_by(2).sum();
    assert!(s.abs() < 1e-15);
}

#[test]
fn fiber_cases() {
    let bulk = structured_grid(&[4, 4], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let fib_x = line_mesh(3, &[0.1, 0.37], &[0.9, 0.37]).unwrap();
    let ea = 7.0;
    let f = FiberEnergy::new(&bulk, &fib_x, ea).unwrap();
    let trans: Vec<f64> = (0..bulk.n_nodes()).flat_map(|_| [0.3, -0.2]).collect();
    assert!(value(&f, &trans).unwrap().abs() < 1e-20);
    let eps = 1e-3;
    let stretch: Vec<f64> = (0..bulk.n_nodes())
        .flat_map(|a| [eps * bulk.node(a)[0], 0.0])
        .collect();
    assert!((value(&f, &stretch).unwrap() - 0.5 * ea * eps * eps * 0.8).abs() < 1e-15);
    let fib_y = line_mesh(2, &[0.4, 0.1], &[0.4, 0.8]).unwrap();
    let fy = FiberEnergy::new(&bulk, &fib_y, ea).unwrap();
    assert!(value(&fy, &stretch).unwrap().abs() < 1e-20);
    // Diagonal fiber under a pure shear field.
    let fib_d = line_mesh(2, &[0.1, 0.1], &[0.9, 0.9]).unwrap();
    let fd = FiberEnergy::new(&bulk, &fib_d, ea).unwrap();
    let shear: Vec<f64> = (0..bulk.n_nodes())
        .flat_map(|a| [eps * bulk.node(a)[1], 0.0])
        .collect();
    let l = 0.8 * 2f64.sqrt();
    assert!((value(&fd, &shear).unwrap() - 0.5 * ea * (0.5 * eps).powi(2) * l).abs() < 1e-15);
    // Fiber forces reach the bulk DoFs of the hosting elements only.
    let g = grad_scalar(&f, &stretch).unwrap();
    assert!(g.iter().filter(|v| **v != 0.0).count() > 0);
    let outside = line_mesh(1, &[0.5, 0.5], &[1.5, 0.5]).unwrap();
    assert!(matches!(
        FiberEnergy::new(&bulk, &outside, ea),
        Err(Error::PointOutsideMesh { .. })
    ));
}

#[test]
fn transient_heat_cases() {
    let mesh = structured_grid(&[6, 6], &[[0.0, 2.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let op = Operator::new(&mesh, ElementKind::Tri3, 30).unwrap();
    let tp = vec![1.5; mesh.n_nodes()];
    let f = OperatorEnergy::new(&op, TransientHeat::new(&op, 0.7, 0.1, &tp).unwrap());
    assert!(value(&f, &tp).unwrap().abs() < 1e-25);
    let c = 0.4;
    let heated: Vec<f64> = tp.iter().map(|t| t + c).collect();
    assert!((value(&f, &heated).unwrap() - c * c * 2.0 / 0.2).abs() < 1e-13);
    assert!(TransientHeat::new(&op, 1.0, 0.0, &tp).is_err());
    // Steady limit: interior residual of the minimizer satisfies the
    // discrete Laplace equation built by hand from P1 element matrices.
    let g = OperatorEnergy::new(&op, TransientHeat::new(&op, 1.0, 1e300, &tp).unwrap());
    let bnd: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&a| {
            let x = mesh.node(a);
            x[0] < 1e-12 || x[0] > 2.0 - 1e-12 || x[1] < 1e-12 || x[1] > 1.0 - 1e-12
        })
        .collect();
    let fixed: Vec<(usize, f64)> = bnd
        .iter()
        .map(|&a| (a, mesh.node(a)[0].sin() + mesh.node(a)[1]))
        .collect();
    let red = energyfem::solver::reduced_functional(&g, &fixed).unwrap();
    let pat = lift_pattern(&sparsity_from_mesh(&mesh, 1).unwrap(), &red.lift).unwrap();
    let col = distance2_coloring(&pat);
    let (ur, _) = newton_assembled(
        &red,
        &vec![0.0; red.n_dofs()],
        &pat,
        &col,
        &NewtonOptions::default(),
    )
    .unwrap();
    let t = red.lift.expand(&ur).unwrap();
    let mut r = vec![0.0; mesh.n_nodes()];
    for e in 0..op.n_elements() {
        let el = op.element(e);
        let x: Vec<&[f64]> = el.iter().map(|&a| mesh.node(a)).collect();
        let area = 0.5
            * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1])
                - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]));
        let b = [x[1][1] - x[2][1], x[2][1] - x[0][1], x[0][1] - x[1][1]];
        let cc = [x[2][0] - x[1][0], x[0][0] - x[2][0], x[1][0] - x[0][0]];
        for i in 0..3 {
            for j in 0..3 {
                r[el[i]] += (b[i] * b[j] + cc[i] * cc[j]) / (4.0 * area) * t[el[j]];
            }
        }
    }
    for a in 0..mesh.n_nodes() {
        if !bnd.contains(&a) {
            assert!(r[a].abs() < 1e-10);
        }
    }
}

fn sphere(level: usize) -> (Mesh, Operator) {
    let mesh = icosphere(level, 1.0).unwrap();
    let op = Operator::new(&mesh, ElementKind::Tri3Manifold, 500).unwrap();
    (mesh, op)
}

#[test]
fn icosphere_is_closed_and_outward() {
    let mesh = icosphere(2, 2.0).unwrap();
    assert_eq!(mesh.n_nodes(), 162);
    assert_eq!(mesh.blocks[0].n_elements(), 320);
    let op = Operator::new(&mesh, ElementKind::Tri3Manifold, 100).unwrap();
    let normals = triangle_normals(&mesh, &op).unwrap();
    for e in 0..op.n_elements() {
        let c = op.point(e, 0);
        assert!(c.iter().zip(&normals[e]).map(|(a, b)| a * b).sum::<f64>() > 0.0);
    }
    let area: f64 = (0..op.n_elements()).map(|e| op.measure(e)).sum();
    assert!((area - 16.0 * PI).abs() / (16.0 * PI) < 0.02);
}

#[test]
fn advection_diffusion_cases() {
    let (mesh, op) = sphere(2);
    let n = mesh.n_nodes();
    let psi: Vec<f64> = (0..n).map(|a| mesh.node(a)[2]).collect();
    let vel = stream_velocity(&mesh, &op, &psi).unwrap();
    let normals = triangle_normals(&mesh, &op).unwrap();
    for (u, nn) in vel.iter().zip(&normals) {
        assert!((u[0] * nn[0] + u[1] * nn[1] + u[2] * nn[2]).abs() < 1e-12);
    }
    // Velocity close to e_z × x at triangle centroids.
    let e0 = op.point(0, 0);
    assert!((vel[0][0] + e0[1]).abs() < 0.1 && (vel[0][1] - e0[0]).abs() < 0.1);

    let c0: Vec<f64> = (0..n)
        .map(|a| (-4.0 * ((mesh.node(a)[0] - 1.0).powi(2) + mesh.node(a)[1].powi(2))).exp())
        .collect();
    let w = AdvectionDiffusion::new(&op, 0.1, 0.05, c0.clone(), vel.clone()).unwrap();
    let r = w.residual().unwrap();
    // Constant field equal to the previous state: zero residual.
    let cst = vec![2.0; n];
    let wc = AdvectionDiffusion::new(&op, 0.1, 0.05, cst.clone(), vel.clone()).unwrap();
    assert!(eval_vector(&wc.residual().unwrap(), &cst)
        .unwrap()
        .iter()
        .all(|v| v.abs() < 1e-13));
    // Mass balance: Σ r_i(c) = (M(c) − M(c_prev))/dt for any c.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s: f64 = eval_vector(&r, &c).unwrap().iter().sum();
    assert!((s - (w.mass(&c) - w.mass(&c0)) / 0.05).abs() < 1e-11);
    // Advection makes the tangent non-symmetric.
    let k = dense_jacobian(&r, &c).unwrap();
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (k[i][j] - k[j][i]).abs())
        .fold(0.0, f64::max);
    assert!(asym > 1e-3);
    let w0 = AdvectionDiffusion::new(&op, 0.1, 0.05, c0.clone(), vec![[0.0; 3]; op.n_elements()])
        .unwrap();
    let k0 = dense_jacobian(&w0.residual().unwrap(), &c).unwrap();
    let asym0 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (k0[i][j] - k0[j][i]).abs())
        .fold(0.0, f64::max);
    assert!(asym0 < 1e-12);
}

#[test]
fn zero_velocity_residual_matches_diffusion_energy() {
    let (mesh, op) = sphere(1);
    let n = mesh.n_nodes();
    let d = 0.3;
    let w = AdvectionDiffusion::new(
        &op,
        d,
        f64::INFINITY,
        vec![0.0; n],
        vec![[0.0; 3]; op.n_elements()],
    )
    .unwrap();
    let energy = OperatorEnergy::new(
        &op,
        TransientHeat::new(&op, 0.5 * d, f64::INFINITY, &vec![0.0; n]).unwrap(),
    );
    let c: Vec<f64> = (0..n)
        .map(|a| mesh.node(a)[0] * mesh.node(a)[2] + mesh.node(a)[1])
        .collect();
    let r = eval_vector(&w.residual().unwrap(), &c).unwrap();
    let g = grad_scalar(&energy, &c).unwrap();
    for (a, b) in r.iter().zip(&g) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn mlp_density_cases() {
    let p = lame();
    let mlp = Mlp::random(&[2, 16, 16, 1], 11, 1.0).unwrap();
    let base = Lame {
        lambda: 0.1 * p.lambda,
        mu: 0.1 * p.mu,
    };
    assert!(mlp_energy_density(&[0.0; 9], 3, &mlp, &base).unwrap().abs() < 1e-15);
    let g = [0.02, 0.01, 0.0, -0.01, 0.03, 0.0, 0.0, 0.01, -0.02];
    let zero = Mlp::zeros(&[2, 16, 16, 1]).unwrap();
    assert_eq!(
        mlp_energy_density(&g, 3, &zero, &base).unwrap(),
        neo_hookean_density(&g, 3, &base).unwrap()
    );
    let ad = ad_grad(|x| mlp_energy_density(x, 3, &mlp, &base).unwrap(), &g);
    assert!(rel_fd_error(|x| mlp_energy_density(x, 3, &mlp, &base).unwrap(), &ad, &g) < 1e-6);
    assert!(Mlp::random(&[2, 4], 0, 1.0).is_err());
    assert!(mlp.eval(&[1.0]).is_err());
}

#[test]
fn neural_inclusion_pattern_matches_dense_oracle() {
    let mesh = structured_grid(&[4, 4], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3).unwrap();
    let keep: Vec<bool> = (0..mesh.blocks[0].n_elements())
        .map(|e| {
            let x = mesh.element_coords(&mesh.blocks[0], e);
            let cx = (x[0] + x[2] + x[4]) / 3.0;
            let cy = (x[1] + x[3] + x[5]) / 3.0;
            !((0.25..0.75).contains(&cx) && (0.25..0.75).contains(&cy))
        })
        .collect();
    let (cut, _) = mesh.retain_elements(0, |e| keep[e]);
    let iface: Vec<usize> = (0..cut.n_nodes())
        .filter(|&a| {
            let x = cut.node(a);
            (0.25 - 1e-9..=0.75 + 1e-9).contains(&x[0])
                && (0.25 - 1e-9..=0.75 + 1e-9).contains(&x[1])
        })
        .collect();
    assert_eq!(iface.len(), 8);
    let dofs: Vec<usize> = iface.iter().flat_map(|&a| [2 * a, 2 * a + 1]).collect();
    let n = 2 * cut.n_nodes();
    let mlp = Mlp::random(&[dofs.len(), 16, 16, 1], 4, 1.0).unwrap();
    let inc = NeuralInclusion::new(mlp, dofs.clone(), n).unwrap();
    assert_eq!(value(&inc, &vec![0.0; n]).unwrap(), 0.0);
    let op = Operator::new(&cut, ElementKind::Tri3, 100).unwrap();
    let total = Sum(OperatorEnergy::new(&op, Elastic::linear(2, lame())), &inc);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let h = dense_hessian(&total, &u).unwrap();
    let pattern = sparsity_from_mesh(&cut, 2)
        .unwrap()
        .with_dense_block(&dofs)
        .unwrap();
    for i in 0..n {
        for j in 0..n {
            if h[i][j] != 0.0 {
                assert!(pattern.contains(i, j), "({i}, {j}) missing from pattern");
            }
        }
    }
    for &i in &dofs {
        for &j in &dofs {
            assert!(h[i][j] != 0.0);
        }
    }
    // A node far from the cutout stays decoupled from the inclusion block.
    let far = (0..cut.n_nodes())
        .find(|&a| cut.node(a)[0] == 1.0 && cut.node(a)[1] == 0.0)
        .unwrap();
    for &j in &dofs {
        assert_eq!(h[2 * far][j], 0.0);
        assert!(!pattern.contains(2 * far, j));
    }
}

#[test]
fn kirsch_reference_cases() {
    let (r, t) = (0.05, 0.01);
    let s = kirsch_reference(r, PI / 2.0, r, t).unwrap();
    assert!((s[1] - 3.0 * t).abs() < 1e-15);
    let far = kirsch_reference(1e6, 0.0, r, t).unwrap();
    assert!((far[0] - t).abs() < 1e-12 && far[1].abs() < 1e-12 && far[2].abs() < 1e-12);
    for k in 0..12 {
        let th = k as f64 * PI / 6.0 + 0.1;
        let s = kirsch_reference(r, th, r, t).unwrap();
        assert!(s[0].abs() < 1e-17 && s[2].abs() < 1e-17);
    }
    assert!(matches!(
        kirsch_reference(0.01, 0.0, r, t),
        Err(Error::Domain(_))
    ));
    let p = to_polar([1.0, 0.0, 0.0], PI / 2.0);
    assert!((p[0]).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_elastic_invariant_to_skew(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, w in -1.0f64..1.0) {
        let p = lame();
        let g = [a, b, b, c];
        let gs = [a, b + w, b - w, c];
        prop_assert!((linear_elastic_density(&g, 2, &p) - linear_elastic_density(&gs, 2, &p)).abs() < 1e-12);
    }

    #[test]
    fn cohesive_energy_non_negative_and_bounded(dx in -0.3f64..0.3, dy in -0.3f64..0.3, dm in 0.0f64..0.5) {
        let p = CohesiveParams::new(0.02, 0.01, 1.0).unwrap();
        let psi = cohesive_density(&[dx, dy], &[0.0, 1.0], dm, &p);
        prop_assert!(psi >= 0.0);
        if dy >= 0.0 {
            prop_assert!(psi <= p.gamma + 1e-15);
        }
    }

    #[test]
    fn history_is_monotone(d in proptest::collection::vec(0.0f64..1.0, 1..20), m in 0.0f64..1.0) {
        let dm = vec![m; d.len()];
        let out = update_history(&d, &dm).unwrap();
        prop_assert!(out.iter().zip(&dm).all(|(a, b)| a >= b));
    }
}
