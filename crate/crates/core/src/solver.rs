//! Linear solvers, Newton drivers and condensation of prescribed DoFs.

use std::collections::VecDeque;
use std::io::Write;

use crate::autodiff::{grad_scalar, hvp, value, Scalar, ScalarFunctional, Term, TermSink};
use crate::coloring::Coloring;
use crate::error::{Error, Result};
use crate::sparse::{sparse_hessian, CsrMatrix, JacobianOptions, SparsityPattern};

/// Largest system factorized densely by [`direct_solve`]; larger systems go
/// through a reverse Cuthill-McKee banded factorization.
pub const DENSE_FALLBACK_LIMIT: usize = 1500;

/// Square linear map `x ↦ Ax`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.spmv(x)
    }
}

/// Linear operator given by a closure.
pub struct FnOperator<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>> + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }
}

/// Tangent action `v ↦ ∇²f(u) v` via forward-over-reverse.
pub struct HessianOperator<'a, F> {
    pub f: &'a F,
    pub u: &'a [f64],
}

impl<F: ScalarFunctional> LinearOperator for HessianOperator<'_, F> {
    fn dim(&self) -> usize {
        self.u.len()
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        hvp(self.f, self.u, x)
    }
}

/// Convergence record of an iterative solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final residual norm.
    pub residual: f64,
    /// Residual norm per iteration, starting with the initial one.
    pub history: Vec<f64>,
    /// Inner Krylov iterations per Newton step (empty for linear solves).
    pub inner_iterations: Vec<usize>,
}

impl SolveReport {
    /// Iteration log as CSV: `k,residual,inner_iterations`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "k,residual,inner_iterations")?;
        for (k, r) in self.history.iter().enumerate() {
            let inner = self
                .inner_iterations
                .get(k)
                .map_or(String::new(), |i| i.to_string());
            writeln!(w, "{k},{r:.17e},{inner}")?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dim(a: &impl LinearOperator, b: &[f64]) -> Result<()> {
    if a.dim() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Conjugate gradients from `x = 0`, stopping at `‖Ax − b‖ ≤ tol‖b‖`.
pub fn cg_solve(
    a: &impl LinearOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    pcg_solve(a, b, None, tol, max_iter)
}

/// Conjugate gradients with optional Jacobi preconditioner (`inv_diag`).
pub fn pcg_solve(
    a: &impl LinearOperator,
    b: &[f64],
    inv_diag: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    check_dim(a, b)?;
    let n = b.len();
    let precond = |r: &[f64]| -> Vec<f64> {
        match inv_diag {
            Some(d) => r.iter().zip(d).map(|(x, y)| x * y).collect(),
            None => r.to_vec(),
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    let mut rnorm = bnorm;
    let mut report = SolveReport {
        history: vec![rnorm],
        ..Default::default()
    };
    if bnorm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    while report.iterations < max_iter {
        let ap = a.apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown(format!(
                "p'Ap = {pap:e} at iteration {}",
                report.iterations
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        report.iterations += 1;
        rnorm = norm(&r);
        report.history.push(rnorm);
        if rnorm <= tol * bnorm {
            report.converged = true;
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    report.residual = rnorm;
    Ok((x, report))
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres_solve(
    a: &impl LinearOperator,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    check_dim(a, b)?;
    if restart == 0 {
        return Err(Error::InvalidArgument("restart must be positive".into()));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let mut report = SolveReport {
        history: vec![bnorm],
        ..Default::default()
    };
    if bnorm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let m = restart;
    loop {
        let ax = a.apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        report.residual = beta;
        if beta <= tol * bnorm {
            report.converged = true;
            return Ok((x, report));
        }
        if report.iterations >= max_iter {
            return Ok((x, report));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut res = beta;
        for j in 0..m {
            let mut w = a.apply(&v[j])?;
            report.iterations += 1;
            for _ in 0..2 {
                for i in 0..=j {
                    let hij = dot(&w, &v[i]);
                    h[i][j] += hij;
                    for (wl, vl) in w.iter_mut().zip(&v[i]) {
                        *wl -= hij * vl;
                    }
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                return Err(Error::Breakdown("singular Hessenberg column".into()));
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            res = g[j + 1].abs();
            report.history.push(res);
            k = j + 1;
            if res <= tol * bnorm || report.iterations >= max_iter || hn <= 1e-300 {
                break;
            }
            v.push(w.iter().map(|wl| wl / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| h[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, vi) in y.iter().zip(&v) {
            for (xl, vl) in x.iter_mut().zip(vi) {
                *xl += yi * vl;
            }
        }
        if res > tol * bnorm && res >= beta * (1.0 - 1e-14) {
            return Err(Error::Stagnation {
                iterations: report.iterations,
                residual: res,
            });
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern;
/// `perm[new] = old`.
pub fn rcm_ordering(p: &SparsityPattern) -> Vec<usize> {
    let n = p.n_rows;
    let sym = p.union(&p.transpose()).unwrap_or_else(|_| p.clone());
    let deg: Vec<usize> = (0..n).map(|i| sym.row(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| -> usize {
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        let mut last = start;
        let mut nbr = Vec::new();
        while let Some(i) = q.pop_front() {
            out.push(i);
            last = i;
            nbr.clear();
            nbr.extend(sym.row(i).iter().copied().filter(|&j| !visited[j]));
            nbr.sort_by_key(|&j| (deg[j], j));
            for &j in &nbr {
                visited[j] = true;
                q.push_back(j);
            }
        }
        last
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pick a pseudo-peripheral start: the last node of a BFS from the
        // component's minimum-degree node.
        let mut comp = Vec::new();
        let mut tmp = visited.clone();
        bfs(seed, &mut tmp, &mut comp);
        let start = *comp.iter().min_by_key(|&&i| (deg[i], i)).unwrap();
        let mut tmp = visited.clone();
        let mut scratch = Vec::new();
        let far = bfs(start, &mut tmp, &mut scratch);
        bfs(far, &mut visited, &mut order);
    }
    order.reverse();
    order
}

/// LU factors with partial pivoting of a (permuted) banded matrix.
#[derive(Clone, Debug)]
pub struct LuFactor {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band: entry (i, j) at `i * w + j + kl - i`.
    band: Vec<f64>,
    lower: Vec<f64>,
    piv: Vec<usize>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
}

impl LuFactor {
    /// Factorizes `K` (square, nonsingular, possibly indefinite).
    pub fn new(k: &CsrMatrix) -> Result<LuFactor> {
        let n = k.n_rows;
        if k.n_cols != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: k.n_cols,
            });
        }
        if k.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("matrix entry".into()));
        }
        let perm: Vec<usize> = if n <= DENSE_FALLBACK_LIMIT {
            (0..n).collect()
        } else {
            rcm_ordering(&k.pattern())
        };
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        if n <= DENSE_FALLBACK_LIMIT {
            kl = n.saturating_sub(1);
            ku = kl;
        } else {
            for i in 0..n {
                for &j in k.row(i).0 {
                    let (a, b) = (inv[i], inv[j]);
                    if a > b {
                        kl = kl.max(a - b);
                    } else {
                        ku = ku.max(b - a);
                    }
                }
            }
        }
        let w = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = k.row(i);
            let a = inv[i];
            for (&j, &v) in cols.iter().zip(vals) {
                band[a * w + inv[j] + kl - a] += v;
            }
        }
        let scale = k.max_abs();
        if scale == 0.0 && n > 0 {
            return Err(Error::SingularMatrix { pivot: 0 });
        }
        let mut lower = vec![0.0; n * kl];
        let mut piv = vec![0; n];
        let idx = |i: usize, j: usize| i * w + j + kl - i;
        for c in 0..n {
            let last = (c + kl).min(n - 1);
            let mut p = c;
            let mut best = band[idx(c, c)].abs();
            for i in c + 1..=last {
                let v = band[idx(i, c)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::SingularMatrix { pivot: perm[c] });
            }
            piv[c] = p;
            let right = (c + kl + ku).min(n - 1);
            if p != c {
                for j in c..=right {
                    band.swap(idx(c, j), idx(p, j));
                }
            }
            let d = band[idx(c, c)];
            for i in c + 1..=last {
                let l = band[idx(i, c)] / d;
                lower[c * kl + (i - c - 1)] = l;
                band[idx(i, c)] = 0.0;
                if l != 0.0 {
                    for j in c + 1..=right {
                        band[idx(i, j)] -= l * band[idx(c, j)];
                    }
                }
            }
        }
        Ok(LuFactor {
            n,
            kl,
            ku,
            band,
            lower,
            piv,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth after reordering.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let (kl, ku) = (self.kl, self.ku);
        let w = 2 * kl + ku + 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for c in 0..n {
            y.swap(c, self.piv[c]);
            let yc = y[c];
            if yc != 0.0 {
                for i in c + 1..=(c + kl).min(n.saturating_sub(1)) {
                    y[i] -= self.lower[c * kl + (i - c - 1)] * yc;
                }
            }
        }
        for i in (0..n).rev() {
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = y[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s -= row[j + kl - i] * y[j];
            }
            y[i] = s / row[kl];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}

/// Solves `Kx = b` by LU with partial pivoting and one refinement step.
pub fn direct_solve(k: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = LuFactor::new(k)?;
    solve_refined(&lu, k, b)
}

/// Solve with an existing factorization plus one refinement step.
pub fn solve_refined(lu: &LuFactor, k: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = lu.solve(b)?;
    let kx = k.spmv(&x)?;
    let r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
    let dx = lu.solve(&r)?;
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("direct solve".into()));
    }
    Ok(x)
}

/// Map from a reduced DoF vector to a full one. Each full entry is a
/// (possibly nonlinear) function of a few reduced entries.
pub trait Lift: Sync {
    fn n_full(&self) -> usize;
    fn n_reduced(&self) -> usize;
    /// Reduced DoFs the full entry `i` depends on (appended to `out`).
    fn deps(&self, i: usize, out: &mut Vec<usize>);
    /// Value of full entry `i` given reduced values.
    fn lift<S: Scalar>(&self, i: usize, reduced: &dyn Fn(usize) -> S) -> S;
}

/// Full vector from a reduced one.
pub fn lift_vector<L: Lift>(l: &L, reduced: &[f64]) -> Result<Vec<f64>> {
    if reduced.len() != l.n_reduced() {
        return Err(Error::ShapeMismatch {
            expected: l.n_reduced(),
            got: reduced.len(),
        });
    }
    Ok((0..l.n_full())
        .map(|i| l.lift(i, &|r| reduced[r]))
        .collect())
}

/// Pattern of the reduced Hessian induced by a full pattern.
pub fn lift_pattern<L: Lift>(full: &SparsityPattern, l: &L) -> Result<SparsityPattern> {
    if full.n_rows != l.n_full() {
        return Err(Error::ShapeMismatch {
            expected: l.n_full(),
            got: full.n_rows,
        });
    }
    let deps: Vec<Vec<usize>> = (0..l.n_full())
        .map(|i| {
            let mut d = Vec::new();
            l.deps(i, &mut d);
            d
        })
        .collect();
    let mut rows = vec![Vec::new(); l.n_reduced()];
    for i in 0..full.n_rows {
        for &a in &deps[i] {
            for &j in full.row(i) {
                rows[a].extend_from_slice(&deps[j]);
            }
        }
        // A nonlinear lift couples the reduced DoFs of one entry with each other.
        for &a in &deps[i] {
            rows[a].extend_from_slice(&deps[i]);
        }
    }
    SparsityPattern::from_rows(l.n_reduced(), rows)
}

/// Functional of the reduced DoFs: `f(lift(u_r))`.
pub struct LiftedFunctional<F, L> {
    pub f: F,
    pub lift: L,
}

struct LiftedTerm<'a, T, L> {
    inner: &'a T,
    lift: &'a L,
    full: &'a [usize],
    reduced: &'a [usize],
}

impl<T: Term, L: Lift> Term for LiftedTerm<'_, T, L> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let get = |r: usize| x[self.reduced.binary_search(&r).expect("dependency listed")];
        let full: Vec<S> = self.full.iter().map(|&i| self.lift.lift(i, &get)).collect();
        self.inner.eval(&full)
    }
}

struct LiftSink<'a, K, L> {
    sink: &'a mut K,
    lift: &'a L,
    reduced: Vec<usize>,
}

impl<K: TermSink, L: Lift> TermSink for LiftSink<'_, K, L> {
    fn term<T: Term>(&mut self, dofs: &[usize], term: &T) -> Result<()> {
        self.reduced.clear();
        for &i in dofs {
            self.lift.deps(i, &mut self.reduced);
        }
        self.reduced.sort_unstable();
        self.reduced.dedup();
        let reduced = std::mem::take(&mut self.reduced);
        let t = LiftedTerm {
            inner: term,
            lift: self.lift,
            full: dofs,
            reduced: &reduced,
        };
        let out = self.sink.term(&reduced, &t);
        self.reduced = reduced;
        out
    }
}

impl<F: ScalarFunctional, L: Lift> ScalarFunctional for LiftedFunctional<F, L> {
    fn n_dofs(&self) -> usize {
        self.lift.n_reduced()
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        if self.f.n_dofs() != self.lift.n_full() {
            return Err(Error::ShapeMismatch {
                expected: self.lift.n_full(),
                got: self.f.n_dofs(),
            });
        }
        let mut s = LiftSink {
            sink,
            lift: &self.lift,
            reduced: Vec::new(),
        };
        self.f.visit_terms(&mut s)
    }
}

/// Elimination of prescribed DoFs: free entries map one-to-one onto the
/// reduced vector, fixed entries take constant values.
#[derive(Clone, Debug, PartialEq)]
pub struct Condensation {
    free: Vec<usize>,
    /// Reduced index per full DoF, `usize::MAX` when fixed.
    slot: Vec<usize>,
    values: Vec<f64>,
}

impl Condensation {
    pub fn new(n_full: usize, fixed: &[(usize, f64)]) -> Result<Condensation> {
        let mut slot = vec![0usize; n_full];
        let mut values = vec![0.0; n_full];
        for &(i, v) in fixed {
            if i >= n_full {
                return Err(Error::IndexOutOfRange(format!("fixed DoF {i} >= {n_full}")));
            }
            if slot[i] == usize::MAX {
                return Err(Error::InvalidArgument(format!("DoF {i} fixed twice")));
            }
            slot[i] = usize::MAX;
            values[i] = v;
        }
        let mut free = Vec::new();
        for (i, s) in slot.iter_mut().enumerate() {
            if *s != usize::MAX {
                *s = free.len();
                free.push(i);
            }
        }
        Ok(Condensation { free, slot, values })
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.slot[i] == usize::MAX
    }

    /// Updates the prescribed value of an already fixed DoF.
    pub fn set_value(&mut self, i: usize, v: f64) -> Result<()> {
        if !self.is_fixed(i) {
            return Err(Error::InvalidArgument(format!("DoF {i} is free")));
        }
        self.values[i] = v;
        Ok(())
    }

    /// Free entries of a full vector.
    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn expand(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        lift_vector(self, reduced)
    }
}

impl Lift for Condensation {
    fn n_full(&self) -> usize {
        self.slot.len()
    }
    fn n_reduced(&self) -> usize {
        self.free.len()
    }
    fn deps(&self, i: usize, out: &mut Vec<usize>) {
        if self.slot[i] != usize::MAX {
            out.push(self.slot[i]);
        }
    }
    fn lift<S: Scalar>(&self, i: usize, reduced: &dyn Fn(usize) -> S) -> S {
        match self.slot[i] {
            usize::MAX => S::cst(self.values[i]),
            s => reduced(s),
        }
    }
}

/// `f` restricted to the free DoFs, prescribed entries held at their values.
pub fn reduced_functional<F: ScalarFunctional>(
    f: F,
    fixed: &[(usize, f64)],
) -> Result<LiftedFunctional<F, Condensation>> {
    let lift = Condensation::new(f.n_dofs(), fixed)?;
    Ok(LiftedFunctional { f, lift })
}

/// Krylov method for the matrix-free Newton inner solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerSolver {
    Cg,
    Gmres,
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Armijo backtracking on the functional value (factor 0.5, c = 1e-4).
    pub line_search: bool,
    /// Evaluate color passes concurrently in the assembled path.
    pub parallel: bool,
    pub inner: InnerSolver,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol_abs: 1e-12,
            tol_rel: 1e-10,
            max_iter: 50,
            line_search: false,
            parallel: false,
            inner: InnerSolver::Cg,
            inner_tol: 1e-8,
            inner_max_iter: 10_000,
        }
    }
}

fn newton_loop<F: ScalarFunctional>(
    f: &F,
    u0: &[f64],
    opts: &NewtonOptions,
    mut step: impl FnMut(&[f64], &[f64]) -> Result<(Vec<f64>, usize)>,
) -> Result<(Vec<f64>, SolveReport)> {
    if u0.len() != f.n_dofs() {
        return Err(Error::ShapeMismatch {
            expected: f.n_dofs(),
            got: u0.len(),
        });
    }
    let mut u = u0.to_vec();
    let mut report = SolveReport::default();
    let mut tol = opts.tol_abs;
    loop {
        let r = grad_scalar(f, &u)?;
        let rn = norm(&r);
        if !rn.is_finite() {
            return Err(Error::NonFiniteValue("Newton residual".into()));
        }
        if report.history.is_empty() {
            tol = tol.max(opts.tol_rel * rn);
        }
        report.history.push(rn);
        report.residual = rn;
        if rn <= tol {
            report.converged = true;
            return Ok((u, report));
        }
        if report.iterations >= opts.max_iter {
            return Err(Error::MaxIterationsExceeded {
                iterations: report.iterations,
                residual: rn,
            });
        }
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let (du, inner) = step(&u, &neg)?;
        report.inner_iterations.push(inner);
        let mut alpha = 1.0;
        if opts.line_search {
            let f0 = value(f, &u)?;
            let slope = dot(&r, &du);
            // Near convergence the decrease falls below the rounding error of f.
            let noise = 1e-12 * f0.abs();
            loop {
                let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
                let ok =
                    matches!(value(f, &trial), Ok(ft) if ft <= f0 + 1e-4 * alpha * slope + noise);
                if ok || alpha < 1e-10 {
                    break;
                }
                alpha *= 0.5;
            }
        }
        for (a, b) in u.iter_mut().zip(&du) {
            *a += alpha * b;
        }
        report.iterations += 1;
    }
}

/// Newton with the tangent assembled by coloring and solved directly.
pub fn newton_assembled<F: ScalarFunctional>(
    f: &F,
    u0: &[f64],
    pattern: &SparsityPattern,
    coloring: &Coloring,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let jopts = JacobianOptions {
        parallel: opts.parallel,
        ..Default::default()
    };
    newton_loop(f, u0, opts, |u, rhs| {
        let k = sparse_hessian(f, u, pattern, coloring, &jopts)?;
        Ok((direct_solve(&k, rhs)?, 0))
    })
}

/// Newton-Krylov with the tangent applied through Hessian-vector products.
pub fn newton_matrix_free<F: ScalarFunctional>(
    f: &F,
    u0: &[f64],
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    newton_loop(f, u0, opts, |u, rhs| {
        let a = HessianOperator { f, u };
        let (du, rep) = match opts.inner {
            InnerSolver::Cg => cg_solve(&a, rhs, opts.inner_tol, opts.inner_max_iter)?,
            InnerSolver::Gmres => gmres_solve(&a, rhs, opts.inner_tol, 50, opts.inner_max_iter)?,
        };
        Ok((du, rep.iterations))
    })
}
