use energyfem::autodiff::{dense_hessian, grad_scalar, value, Energy, Scalar, SingleTerm};
use energyfem::coloring::distance2_coloring;
use energyfem::element::ElementKind;
use energyfem::mesh::{boundary_nodes, structured_grid, Selector};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{Elastic, Lame};
use energyfem::solver::*;
use energyfem::sparse::{
    sparse_hessian, sparsity_from_mesh, CsrMatrix, JacobianOptions, SparsityPattern,
};
use energyfem::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>()
                        + if i == j { n as f64 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn cg_small_cases() {
    let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]], 0.0);
    let (x, rep) = cg_solve(&a, &[1.0, 2.0], 1e-14, 10).unwrap();
    assert!(rep.converged);
    assert!(max_diff(&x, &[1.0 / 11.0, 7.0 / 11.0]) < 1e-14);
    let id = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.0);
    let (x, rep) = cg_solve(&id, &[3.0, -2.0], 1e-12, 10).unwrap();
    assert_eq!((x, rep.iterations), (vec![3.0, -2.0], 1));
    let (x, rep) = cg_solve(&a, &[0.0, 0.0], 1e-12, 10).unwrap();
    assert_eq!(
        (x, rep.iterations, rep.converged),
        (vec![0.0, 0.0], 0, true)
    );
    let neg = CsrMatrix::from_dense(&[vec![-1.0, 0.0], vec![0.0, -1.0]], 0.0);
    assert!(matches!(
        cg_solve(&neg, &[1.0, 0.0], 1e-12, 10),
        Err(Error::Breakdown(_))
    ));
}

#[test]
fn cg_energy_error_monotone() {
    let d = random_spd(30, 3);
    let a = CsrMatrix::from_dense(&d, 0.0);
    let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
    let exact = direct_solve(&a, &b).unwrap();
    let mut prev = f64::INFINITY;
    for k in 1..30 {
        let (x, _) = cg_solve(&a, &b, 0.0, k).unwrap();
        let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
        let ae = a.spmv(&e).unwrap();
        let en: f64 = e.iter().zip(&ae).map(|(p, q)| p * q).sum();
        assert!(en <= prev * (1.0 + 1e-10) + 1e-28, "k={k}");
        prev = en;
    }
}

#[test]
fn jacobi_pcg_converges() {
    let mut d = random_spd(40, 4);
    for (i, row) in d.iter_mut().enumerate() {
        row[i] *= 1.0 + i as f64;
    }
    let a = CsrMatrix::from_dense(&d, 0.0);
    let inv: Vec<f64> = a.diagonal().iter().map(|x| 1.0 / x).collect();
    let b = vec![1.0; 40];
    let (x, rep) = pcg_solve(&a, &b, Some(&inv), 1e-12, 200).unwrap();
    assert!(rep.converged);
    assert!(max_diff(&x, &direct_solve(&a, &b).unwrap()) < 1e-9);
}

#[test]
fn gmres_cases() {
    let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 1.0]], 0.0);
    let (x, rep) = gmres_solve(&a, &[3.0, 1.0], 1e-14, 50, 100).unwrap();
    assert!(rep.converged);
    assert!(max_diff(&x, &[1.0, 1.0]) < 1e-14);
    let id = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.0);
    assert_eq!(
        gmres_solve(&id, &[1.0, 2.0], 1e-12, 50, 100)
            .unwrap()
            .1
            .iterations,
        1
    );
    let s = CsrMatrix::from_dense(&random_spd(25, 5), 0.0);
    let b: Vec<f64> = (0..25).map(|i| i as f64).collect();
    let (xg, _) = gmres_solve(&s, &b, 1e-14, 5, 10_000).unwrap();
    let (xc, _) = cg_solve(&s, &b, 1e-14, 1000).unwrap();
    assert!(max_diff(&xg, &xc) < 1e-10);
}

#[test]
fn gmres_detects_stagnation() {
    // Cyclic shift: restarted GMRES(1) makes no progress.
    let n = 4;
    let trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    let a = CsrMatrix::from_triplets(n, n, &trip).unwrap();
    let r = gmres_solve(&a, &[1.0, 0.0, 0.0, 0.0], 1e-12, 1, 100);
    assert!(matches!(r, Err(Error::Stagnation { .. })));
}

#[test]
fn direct_cases() {
    let a = CsrMatrix::from_dense(
        &[
            vec![2.0, 0.0, 1.0],
            vec![0.0, 2.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ],
        0.0,
    );
    let x = direct_solve(&a, &[1.0, 1.0, 1.0]).unwrap();
    assert!(max_diff(&x, &[0.5, 0.5, 0.0]) < 1e-14, "{x:?}");
    let x = direct_solve(&a, &[1.0, 1.0, 0.5]).unwrap();
    assert!(max_diff(&x, &[0.25, 0.25, 0.5]) < 1e-14, "{x:?}");
    let s = CsrMatrix::from_dense(&random_spd(50, 6), 0.0);
    let b: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
    let (xc, _) = cg_solve(&s, &b, 1e-15, 1000).unwrap();
    assert!(max_diff(&direct_solve(&s, &b).unwrap(), &xc) < 1e-9);
    let sing = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]], 0.0);
    assert!(matches!(
        direct_solve(&sing, &[1.0, 1.0]),
        Err(Error::SingularMatrix { .. })
    ));
}

fn laplacian_saddle(nx: usize) -> CsrMatrix {
    // 2D 5-point Laplacian plus one mean-value constraint row (zero diagonal).
    let n = nx * nx;
    let mut t = Vec::new();
    for i in 0..nx {
        for j in 0..nx {
            let k = i * nx + j;
            t.push((k, k, 4.0));
            if i > 0 {
                t.push((k, k - nx, -1.0));
            }
            if i + 1 < nx {
                t.push((k, k + nx, -1.0));
            }
            if j > 0 {
                t.push((k, k - 1, -1.0));
            }
            if j + 1 < nx {
                t.push((k, k + 1, -1.0));
            }
            t.push((k, n, 1.0));
            t.push((n, k, 1.0));
        }
    }
    CsrMatrix::from_triplets(n + 1, n + 1, &t).unwrap()
}

#[test]
fn banded_path_solves_large_saddle_system() {
    let k = laplacian_saddle(45);
    assert!(k.n_rows > DENSE_FALLBACK_LIMIT);
    let xs: Vec<f64> = (0..k.n_rows).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
    let b = k.spmv(&xs).unwrap();
    let x = direct_solve(&k, &b).unwrap();
    let r = k.spmv(&x).unwrap();
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let knorm = (0..k.n_rows)
        .map(|i| k.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    assert!(max_diff(&r, &b) <= 1e-10 * (knorm * xn + bn));
    assert!(max_diff(&x, &xs) < 1e-8);
}

#[test]
fn rcm_reduces_bandwidth() {
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut shuffled: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        shuffled.swap(i, rng.gen_range(0..=i));
    }
    // A path graph under a random relabelling.
    let mut rows = vec![Vec::new(); n];
    for k in 0..n - 1 {
        let (a, b) = (shuffled[k], shuffled[k + 1]);
        rows[a].extend([a, b]);
        rows[b].extend([a, b]);
    }
    let p = SparsityPattern::from_rows(n, rows).unwrap();
    let perm = rcm_ordering(&p);
    let mut inv = vec![0; n];
    for (i, &o) in perm.iter().enumerate() {
        inv[o] = i;
    }
    let bw = (0..n)
        .flat_map(|i| p.row(i).iter().map(move |&j| (i, j)))
        .map(|(i, j)| inv[i].abs_diff(inv[j]))
        .max();
    assert_eq!(bw, Some(1));
}

struct Quadratic {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Energy for Quadratic {
    fn n_dofs(&self) -> usize {
        self.b.len()
    }
    fn energy<S: Scalar>(&self, u: &[S]) -> Result<S> {
        let mut e = S::zero();
        for i in 0..u.len() {
            e -= u[i] * self.b[i];
            for j in 0..u.len() {
                e += u[i] * u[j] * (0.5 * self.a[i][j]);
            }
        }
        Ok(e)
    }
}

#[test]
fn condensation_matches_schur_restriction() {
    let n = 6;
    let a = random_spd(n, 7);
    let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
    let f = SingleTerm::new(Quadratic {
        a: a.clone(),
        b: b.clone(),
    });
    let fixed = [(1, 0.7), (4, -1.3), (5, 2.0)];
    let red = reduced_functional(&f, &fixed).unwrap();
    assert_eq!(red.lift.free_dofs(), &[0, 2, 3]);
    let ur = vec![0.1, -0.2, 0.3];
    let full = red.lift.expand(&ur).unwrap();
    assert_eq!(full, vec![0.1, 0.7, -0.2, 0.3, -1.3, 2.0]);
    assert_eq!(red.lift.reduce(&full), ur);
    assert!((value(&red, &ur).unwrap() - value(&f, &full).unwrap()).abs() < 1e-14);
    // Gradient oracle: (A u − b) restricted to free rows.
    let g = grad_scalar(&red, &ur).unwrap();
    for (k, &i) in [0, 2, 3].iter().enumerate() {
        let gi: f64 = (0..n).map(|j| a[i][j] * full[j]).sum::<f64>() - b[i];
        assert!((g[k] - gi).abs() < 1e-12);
    }
    let h = dense_hessian(&red, &ur).unwrap();
    assert!((h[1][2] - a[2][3]).abs() < 1e-12);
}

#[test]
fn condensation_edge_cases() {
    let f = SingleTerm::new(Quadratic {
        a: random_spd(3, 1),
        b: vec![1.0; 3],
    });
    let all = reduced_functional(&f, &[(0, 1.0), (1, 2.0), (2, 3.0)]).unwrap();
    assert!(grad_scalar(&all, &[]).unwrap().is_empty());
    assert!((value(&all, &[]).unwrap() - value(&f, &[1.0, 2.0, 3.0]).unwrap()).abs() < 1e-14);
    let none = reduced_functional(&f, &[]).unwrap();
    assert_eq!(
        grad_scalar(&none, &[0.5, 0.1, 0.2]).unwrap(),
        grad_scalar(&f, &[0.5, 0.1, 0.2]).unwrap()
    );
    assert!(matches!(
        reduced_functional(&f, &[(3, 0.0)]),
        Err(Error::IndexOutOfRange(_))
    ));
    assert!(reduced_functional(&f, &[(1, 0.0), (1, 1.0)]).is_err());
}

#[test]
fn newton_quadratic_one_step_and_zero_steps() {
    let n = 8;
    let a = random_spd(n, 8);
    let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let f = SingleTerm::new(Quadratic { a, b });
    let p = SparsityPattern::dense(n);
    let c = distance2_coloring(&p);
    let (u, rep) = newton_assembled(&f, &vec![0.0; n], &p, &c, &NewtonOptions::default()).unwrap();
    assert_eq!(rep.iterations, 1);
    let (_, rep) = newton_assembled(&f, &u, &p, &c, &NewtonOptions::default()).unwrap();
    assert_eq!(rep.iterations, 0);
    let (um, rep) = newton_matrix_free(
        &f,
        &vec![0.0; n],
        &NewtonOptions {
            inner_tol: 1e-14,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(rep.iterations, 1);
    assert!(rep.inner_iterations[0] > 0);
    assert!(max_diff(&u, &um) < 1e-12);
}

fn clamped_strip(nx: usize, kind: ElementKind) -> (energyfem::mesh::Mesh, Vec<(usize, f64)>) {
    let mesh = structured_grid(&[nx, 2], &[[0.0, 1.0], [0.0, 0.2]], kind).unwrap();
    let left = boundary_nodes(
        &mesh,
        &Selector::BoxFace {
            axis: 0,
            max: false,
        },
    );
    let right = boundary_nodes(&mesh, &Selector::BoxFace { axis: 0, max: true });
    let mut fixed = Vec::new();
    for &a in &left {
        fixed.push((2 * a, 0.0));
        fixed.push((2 * a + 1, 0.0));
    }
    for &a in &right {
        fixed.push((2 * a, 0.05));
        fixed.push((2 * a + 1, 0.0));
    }
    (mesh, fixed)
}

#[test]
fn newton_neo_hookean_quadratic_convergence() {
    let (mesh, fixed) = clamped_strip(6, ElementKind::Tri3);
    let op = Operator::new(&mesh, ElementKind::Tri3, 16).unwrap();
    let f = OperatorEnergy::new(
        &op,
        Elastic::neo_hookean(2, Lame::from_young_poisson(1.0, 0.3)),
    );
    let red = reduced_functional(&f, &fixed).unwrap();
    let p = lift_pattern(&sparsity_from_mesh(&mesh, 2).unwrap(), &red.lift).unwrap();
    let c = distance2_coloring(&p);
    let n = red.lift.free_dofs().len();
    let (_, rep) = newton_assembled(
        &red,
        &vec![0.0; n],
        &p,
        &c,
        &NewtonOptions {
            tol_abs: 1e-10,
            tol_rel: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(rep.iterations <= 6, "{:?}", rep.history);
    let h = &rep.history;
    let k = h.len();
    // ‖r_{k+1}‖ ≤ C ‖r_k‖² over the final steps with a moderate constant.
    for i in k.saturating_sub(3)..k - 1 {
        if h[i] < 1e-3 && h[i + 1] > 1e-14 {
            assert!(h[i + 1] <= 50.0 * h[i] * h[i], "{h:?}");
        }
    }
    let mut log = Vec::new();
    rep.write_csv(&mut log).unwrap();
    assert!(String::from_utf8(log)
        .unwrap()
        .starts_with("k,residual,inner_iterations\n0,"));
}

#[test]
fn assembled_and_matrix_free_agree_on_linear_elasticity() {
    let (mesh, fixed) = clamped_strip(10, ElementKind::Quad4);
    let op = Operator::new(&mesh, ElementKind::Quad4, 8).unwrap();
    let f = OperatorEnergy::new(&op, Elastic::linear(2, Lame::from_young_poisson(1.0, 0.3)));
    let red = reduced_functional(&f, &fixed).unwrap();
    let p = lift_pattern(&sparsity_from_mesh(&mesh, 2).unwrap(), &red.lift).unwrap();
    let c = distance2_coloring(&p);
    let n = red.lift.free_dofs().len();
    let opts = NewtonOptions::default();
    let (ua, _) = newton_assembled(&red, &vec![0.0; n], &p, &c, &opts).unwrap();
    let (um, rep) = newton_matrix_free(&red, &vec![0.0; n], &opts).unwrap();
    assert!(rep.converged);
    assert!(max_diff(&ua, &um) < 1e-8);
    let (ug, _) = newton_matrix_free(
        &red,
        &vec![0.0; n],
        &NewtonOptions {
            inner: InnerSolver::Gmres,
            ..opts
        },
    )
    .unwrap();
    assert!(max_diff(&ua, &ug) < 1e-8);
    // Reduced colored Hessian equals the dense one.
    let k = sparse_hessian(&red, &ua, &p, &c, &JacobianOptions::default())
        .unwrap()
        .to_dense();
    let d = dense_hessian(&red, &ua).unwrap();
    for i in 0..n {
        assert!(max_diff(&k[i], &d[i]) < 1e-12);
    }
}

#[test]
fn newton_reports_max_iterations() {
    let (mesh, fixed) = clamped_strip(4, ElementKind::Tri3);
    let op = Operator::new(&mesh, ElementKind::Tri3, 16).unwrap();
    let f = OperatorEnergy::new(
        &op,
        Elastic::neo_hookean(2, Lame::from_young_poisson(1.0, 0.3)),
    );
    let red = reduced_functional(&f, &fixed).unwrap();
    let n = red.lift.free_dofs().len();
    let r = newton_matrix_free(
        &red,
        &vec![0.0; n],
        &NewtonOptions {
            max_iter: 1,
            ..Default::default()
        },
    );
    assert!(matches!(
        r,
        Err(Error::MaxIterationsExceeded { iterations: 1, .. })
    ));
}

/// `C + Σ [w⁴/4 + w²/2 + u²/2 − b u]` with `w = u_i − u_{i+1}` and a large
/// offset `C`. Near the minimizer the energy decrease falls below the
/// rounding of `f` while individual terms still move both ways.
struct OffsetChain {
    b: Vec<f64>,
    offset: f64,
}

impl Energy for OffsetChain {
    fn n_dofs(&self) -> usize {
        self.b.len()
    }
    fn energy<S: Scalar>(&self, u: &[S]) -> Result<S> {
        let n = u.len();
        let mut e = S::cst(self.offset);
        for i in 0..n {
            let w = u[i] - u[(i + 1) % n];
            e += w * w * w * w * 0.25 + w * w * 0.5 + u[i] * u[i] * 0.5 - u[i] * self.b[i];
        }
        Ok(e)
    }
}

#[test]
fn line_search_reaches_tight_tolerance_despite_offset() {
    let n = 64;
    let b: Vec<f64> = (0..n).map(|i| 3.0 * (1.7 * i as f64).sin()).collect();
    let f = SingleTerm::new(OffsetChain { b, offset: 1e8 });
    let p = SparsityPattern::dense(n);
    let c = distance2_coloring(&p);
    let opts = NewtonOptions {
        line_search: true,
        tol_rel: 0.0,
        ..Default::default()
    };
    let (u, rep) = newton_assembled(&f, &vec![0.0; n], &p, &c, &opts).unwrap();
    assert!(rep.residual <= 1e-12);
    assert!(rep.iterations < 15);
    let g = grad_scalar(&f, &u).unwrap();
    assert!(g.iter().all(|x| x.abs() <= 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn direct_solve_residual_bound(seed in 0u64..10_000, n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| if rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()).collect();
        for (i, row) in d.iter_mut().enumerate() {
            row[i] += if i % 2 == 0 { 3.0 } else { -3.0 };
        }
        let a = CsrMatrix::from_dense(&d, 0.0);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = direct_solve(&a, &b).unwrap();
        let r = a.spmv(&x).unwrap();
        let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let an = d.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(max_diff(&r, &b) <= 1e-10 * (an * xn + 1.0));
    }
}
