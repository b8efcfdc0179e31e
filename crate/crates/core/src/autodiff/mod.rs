//! Automatic differentiation: dual numbers, a reverse-mode tape, and the
//! functional-level drivers built on them (gradient, JVP, Hessian-vector
//! product, dense Hessian).

mod dual;
mod functional;
mod scalar;
mod tape;

pub use dual::Dual;
#[allow(unused_imports)]
pub(crate) use functional::check_len;
pub use functional::{
    dense_hessian, dense_jacobian, eval_scalar, eval_vector, grad_scalar, gradient_generic, hvp,
    jvp, jvp_calls, reset_jvp_calls, value, value_and_grad, Energy, PartialResidual, Residual,
    ScalarFunctional, SingleTerm, Sum, Term, TermSink, VectorFunction, DENSE_HESSIAN_LIMIT,
};
pub use scalar::Scalar;
pub use tape::{peak_tape_len, reset_peak_tape_len, Recording, TapeReal, Var};
