use std::cell::Cell;

use super::{Dual, Recording, Scalar, TapeReal, Var};
use crate::error::{Error, Result};

/// Largest system for which [`dense_hessian`] is allowed.
pub const DENSE_HESSIAN_LIMIT: usize = 2000;

/// Additive piece of a scalar functional.
///
/// The term only sees the values of the global DoFs it was registered with,
/// in the same order.
pub trait Term {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S>;
}

/// Receiver for the terms of a [`ScalarFunctional`].
pub trait TermSink {
    fn term<T: Term>(&mut self, dofs: &[usize], term: &T) -> Result<()>;
}

/// Scalar functional `Ψ(u)` written as a sum of terms.
///
/// Splitting into terms is what keeps reverse mode cheap: every term gets its
/// own short tape that is swept and discarded before the next one starts, so
/// the tape never holds more than one term (e.g. one element batch).
pub trait ScalarFunctional: Sync {
    fn n_dofs(&self) -> usize;
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()>;
}

impl<F: ScalarFunctional> ScalarFunctional for &F {
    fn n_dofs(&self) -> usize {
        (**self).n_dofs()
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        (**self).visit_terms(sink)
    }
}

/// Vector-valued map `r(u)`, evaluable over reals and duals.
pub trait VectorFunction: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn eval<T: TapeReal>(&self, u: &[T]) -> Result<Vec<T>>;
}

impl<V: VectorFunction> VectorFunction for &V {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn n_outputs(&self) -> usize {
        (**self).n_outputs()
    }
    fn eval<T: TapeReal>(&self, u: &[T]) -> Result<Vec<T>> {
        (**self).eval(u)
    }
}

/// Functional given by one expression over the whole DoF vector.
pub trait Energy: Sync {
    fn n_dofs(&self) -> usize;
    fn energy<S: Scalar>(&self, u: &[S]) -> Result<S>;
}

/// Adapts an [`Energy`] into a single-term [`ScalarFunctional`].
pub struct SingleTerm<E> {
    pub inner: E,
    dofs: Vec<usize>,
}

impl<E: Energy> SingleTerm<E> {
    pub fn new(inner: E) -> Self {
        let dofs = (0..inner.n_dofs()).collect();
        SingleTerm { inner, dofs }
    }
}

struct EnergyTerm<'a, E>(&'a E);

impl<E: Energy> Term for EnergyTerm<'_, E> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<S> {
        self.0.energy(x)
    }
}

impl<E: Energy> ScalarFunctional for SingleTerm<E> {
    fn n_dofs(&self) -> usize {
        self.dofs.len()
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        sink.term(&self.dofs, &EnergyTerm(&self.inner))
    }
}

/// Sum of two functionals over the same DoF vector.
pub struct Sum<A, B>(pub A, pub B);

impl<A: ScalarFunctional, B: ScalarFunctional> ScalarFunctional for Sum<A, B> {
    fn n_dofs(&self) -> usize {
        self.0.n_dofs().max(self.1.n_dofs())
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        self.0.visit_terms(sink)?;
        self.1.visit_terms(sink)
    }
}

struct EvalSink<'a, S> {
    u: &'a [S],
    acc: S,
    buf: Vec<S>,
}

impl<S: Scalar> TermSink for EvalSink<'_, S> {
    fn term<T: Term>(&mut self, dofs: &[usize], term: &T) -> Result<()> {
        self.buf.clear();
        for &d in dofs {
            self.buf.push(self.u[d]);
        }
        self.acc += term.eval(&self.buf)?;
        Ok(())
    }
}

/// Evaluates `f` over any scalar type (whole-graph, no batching of tapes).
pub fn eval_scalar<F: ScalarFunctional, S: Scalar>(f: &F, u: &[S]) -> Result<S> {
    check_len(f.n_dofs(), u.len())?;
    let mut sink = EvalSink {
        u,
        acc: S::zero(),
        buf: Vec::new(),
    };
    f.visit_terms(&mut sink)?;
    Ok(sink.acc)
}

/// Value of `f` at `u`.
pub fn value<F: ScalarFunctional>(f: &F, u: &[f64]) -> Result<f64> {
    let v = eval_scalar(f, u)?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue("functional value".into()));
    }
    Ok(v)
}

struct GradSink<'a, T> {
    u: &'a [T],
    active: Option<&'a [bool]>,
    grad: Vec<T>,
    value: T,
    vars: Vec<Var<T>>,
}

impl<T: TapeReal> TermSink for GradSink<'_, T> {
    fn term<Tm: Term>(&mut self, dofs: &[usize], term: &Tm) -> Result<()> {
        let rec = Recording::<T>::new()?;
        self.vars.clear();
        for &d in dofs {
            let is_active = self.active.is_none_or(|a| a[d]);
            let v = if is_active {
                rec.var(self.u[d])
            } else {
                Var::constant(self.u[d])
            };
            self.vars.push(v);
        }
        let out = term.eval(&self.vars)?;
        self.value += out.val();
        if out.is_constant() {
            return Ok(());
        }
        let adj = rec.adjoints(out);
        for (v, &d) in self.vars.iter().zip(dofs) {
            if let Some(s) = v.slot() {
                self.grad[d] += adj[s];
            }
        }
        Ok(())
    }
}

/// Value and reverse-mode gradient over base type `T`.
///
/// With `T = Dual` this is forward-over-reverse: the tangent part of the
/// returned gradient is the Hessian applied to the input tangents. When
/// `active` is given, only DoFs flagged `true` are differentiated; the other
/// entries of the gradient are zero.
pub fn gradient_generic<F: ScalarFunctional, T: TapeReal>(
    f: &F,
    u: &[T],
    active: Option<&[bool]>,
) -> Result<(T, Vec<T>)> {
    check_len(f.n_dofs(), u.len())?;
    if let Some(a) = active {
        check_len(u.len(), a.len())?;
    }
    let mut sink = GradSink {
        u,
        active,
        grad: vec![T::zero(); u.len()],
        value: T::zero(),
        vars: Vec::new(),
    };
    f.visit_terms(&mut sink)?;
    Ok((sink.value, sink.grad))
}

/// Value and gradient of `f` at `u`.
pub fn value_and_grad<F: ScalarFunctional>(f: &F, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (v, g) = gradient_generic(f, u, None)?;
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue("gradient".into()));
    }
    Ok((v, g))
}

/// Reverse-mode gradient `∇Ψ(u)`; a fresh tape is recorded per term.
pub fn grad_scalar<F: ScalarFunctional>(f: &F, u: &[f64]) -> Result<Vec<f64>> {
    value_and_grad(f, u).map(|(_, g)| g)
}

/// Hessian-vector product `∇²Ψ(u) v` by forward-over-reverse.
pub fn hvp<F: ScalarFunctional>(f: &F, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(u.len(), v.len())?;
    jvp(&Residual(f), u, v)
}

/// Dense Hessian assembled column by column from [`hvp`].
pub fn dense_hessian<F: ScalarFunctional>(f: &F, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = u.len();
    if n > DENSE_HESSIAN_LIMIT {
        return Err(Error::SizeLimitExceeded {
            n,
            limit: DENSE_HESSIAN_LIMIT,
        });
    }
    dense_jacobian(&Residual(f), u)
}

/// Dense Jacobian of `r` at `u` (row-major rows), one JVP per column.
pub fn dense_jacobian<V: VectorFunction>(r: &V, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = u.len();
    let m = r.n_outputs();
    let mut jac = vec![vec![0.0; n]; m];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = jvp(r, u, &e)?;
        e[j] = 0.0;
        for i in 0..m {
            jac[i][j] = col[i];
        }
    }
    Ok(jac)
}

thread_local! {
    static JVP_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`jvp`] evaluations made on this thread so far.
pub fn jvp_calls() -> usize {
    JVP_CALLS.with(|c| c.get())
}

pub fn reset_jvp_calls() {
    JVP_CALLS.with(|c| c.set(0));
}

/// Forward-mode directional derivative `J_r(u) v`.
pub fn jvp<V: VectorFunction>(r: &V, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(r.n_inputs(), u.len())?;
    check_len(u.len(), v.len())?;
    JVP_CALLS.with(|c| c.set(c.get() + 1));
    let x: Vec<Dual> = u.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let out = r.eval(&x)?;
    let t: Vec<f64> = out.iter().map(|d| d.eps).collect();
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue("jvp".into()));
    }
    Ok(t)
}

/// Evaluates `r(u)` over reals.
pub fn eval_vector<V: VectorFunction>(r: &V, u: &[f64]) -> Result<Vec<f64>> {
    check_len(r.n_inputs(), u.len())?;
    let out = r.eval(u)?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue("vector function".into()));
    }
    Ok(out)
}

/// The gradient map `u ↦ ∇Ψ(u)` as a [`VectorFunction`]; its JVP is the
/// Hessian-vector product.
pub struct Residual<F>(pub F);

impl<F: ScalarFunctional> VectorFunction for Residual<F> {
    fn n_inputs(&self) -> usize {
        self.0.n_dofs()
    }
    fn n_outputs(&self) -> usize {
        self.0.n_dofs()
    }
    fn eval<T: TapeReal>(&self, u: &[T]) -> Result<Vec<T>> {
        gradient_generic(&self.0, u, None).map(|(_, g)| g)
    }
}

/// Partial gradient of a functional `W(z)` with respect to a subset of `z`.
///
/// The input vector fills the positions `input_map` of `z`, the rest of `z`
/// is taken from `base`, and the output is `∂W/∂z` at the positions
/// `output_map`. With `W(c, v)` a virtual-work form linear in the test field
/// `v`, this gives the residual `r(c) = ∂W/∂v`.
pub struct PartialResidual<F> {
    pub f: F,
    pub base: Vec<f64>,
    pub input_map: Vec<usize>,
    pub output_map: Vec<usize>,
    active: Vec<bool>,
}

impl<F: ScalarFunctional> PartialResidual<F> {
    pub fn new(
        f: F,
        base: Vec<f64>,
        input_map: Vec<usize>,
        output_map: Vec<usize>,
    ) -> Result<Self> {
        check_len(f.n_dofs(), base.len())?;
        let mut active = vec![false; base.len()];
        for &i in input_map.iter().chain(&output_map) {
            if i >= base.len() {
                return Err(Error::IndexOutOfRange(format!(
                    "position {i} in PartialResidual"
                )));
            }
        }
        for &i in &output_map {
            active[i] = true;
        }
        Ok(PartialResidual {
            f,
            base,
            input_map,
            output_map,
            active,
        })
    }
}

impl<F: ScalarFunctional> VectorFunction for PartialResidual<F> {
    fn n_inputs(&self) -> usize {
        self.input_map.len()
    }
    fn n_outputs(&self) -> usize {
        self.output_map.len()
    }
    fn eval<T: TapeReal>(&self, u: &[T]) -> Result<Vec<T>> {
        check_len(self.input_map.len(), u.len())?;
        let mut z: Vec<T> = self.base.iter().map(|&b| T::cst(b)).collect();
        for (&p, &x) in self.input_map.iter().zip(u) {
            z[p] = x;
        }
        let (_, g) = gradient_generic(&self.f, &z, Some(&self.active))?;
        Ok(self.output_map.iter().map(|&p| g[p]).collect())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}
