//! Reverse-mode tape.
//!
//! Each thread owns one tape per base type (`f64` and [`Dual`]). A
//! [`Recording`] claims the tape of the current thread, hands out [`Var`]s,
//! and clears the tape again when dropped. Recording over `Dual` values gives
//! forward-over-reverse second derivatives: the adjoints come back as duals
//! whose tangent part is a Hessian-vector product.
//!
//! Nodes store their operands and local partials in flat arrays; fused
//! operations (`lincomb`, `dot`) produce a single node with many operands.

use std::cell::{Cell, RefCell};
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::thread::LocalKey;

use super::{Dual, Scalar};
use crate::error::{Error, Result};

const CONST: u32 = u32::MAX;

/// Value type that can live on a tape.
pub trait TapeReal: Scalar {
    #[doc(hidden)]
    fn tape() -> &'static LocalKey<RefCell<TapeBuf<Self>>>;
    #[doc(hidden)]
    fn peak_cell() -> &'static LocalKey<Cell<usize>>;
    fn is_zero(&self) -> bool;
}

#[doc(hidden)]
pub struct TapeBuf<T> {
    active: bool,
    ends: Vec<u32>,
    arg_idx: Vec<u32>,
    arg_val: Vec<T>,
}

impl<T> TapeBuf<T> {
    const fn new() -> Self {
        TapeBuf {
            active: false,
            ends: Vec::new(),
            arg_idx: Vec::new(),
            arg_val: Vec::new(),
        }
    }

    #[inline]
    fn close(&mut self) -> u32 {
        let id = self.ends.len() as u32;
        self.ends.push(self.arg_idx.len() as u32);
        id
    }
}

thread_local! {
    static TAPE_F64: RefCell<TapeBuf<f64>> = const { RefCell::new(TapeBuf::new()) };
    static TAPE_DUAL: RefCell<TapeBuf<Dual>> = const { RefCell::new(TapeBuf::new()) };
    static PEAK_F64: Cell<usize> = const { Cell::new(0) };
    static PEAK_DUAL: Cell<usize> = const { Cell::new(0) };
}

impl TapeReal for f64 {
    fn tape() -> &'static LocalKey<RefCell<TapeBuf<Self>>> {
        &TAPE_F64
    }
    fn peak_cell() -> &'static LocalKey<Cell<usize>> {
        &PEAK_F64
    }
    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl TapeReal for Dual {
    fn tape() -> &'static LocalKey<RefCell<TapeBuf<Self>>> {
        &TAPE_DUAL
    }
    fn peak_cell() -> &'static LocalKey<Cell<usize>> {
        &PEAK_DUAL
    }
    #[inline]
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.eps == 0.0
    }
}

/// Largest number of tape nodes held at once on this thread since the last
/// [`reset_peak_tape_len`], over both tape types.
pub fn peak_tape_len() -> usize {
    PEAK_F64.with(|c| c.get()).max(PEAK_DUAL.with(|c| c.get()))
}

pub fn reset_peak_tape_len() {
    PEAK_F64.with(|c| c.set(0));
    PEAK_DUAL.with(|c| c.set(0));
}

/// Variable on the thread-local tape, or a constant when not recorded.
#[derive(Clone, Copy, Debug)]
pub struct Var<T> {
    val: T,
    idx: u32,
}

impl<T: TapeReal> Var<T> {
    /// Constant that carries no derivative information.
    pub fn constant(val: T) -> Self {
        Var { val, idx: CONST }
    }

    pub fn val(&self) -> T {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    /// Tape slot of this variable, `None` for constants.
    pub fn slot(&self) -> Option<usize> {
        (self.idx != CONST).then_some(self.idx as usize)
    }

    #[inline]
    fn unary(a: Self, val: T, d: T) -> Self {
        if a.idx == CONST {
            return Var::constant(val);
        }
        let idx = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            t.arg_idx.push(a.idx);
            t.arg_val.push(d);
            t.close()
        });
        Var { val, idx }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: T, da: T, db: T) -> Self {
        if a.idx == CONST && b.idx == CONST {
            return Var::constant(val);
        }
        let idx = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            if a.idx != CONST {
                t.arg_idx.push(a.idx);
                t.arg_val.push(da);
            }
            if b.idx != CONST {
                t.arg_idx.push(b.idx);
                t.arg_val.push(db);
            }
            t.close()
        });
        Var { val, idx }
    }
}

/// Exclusive use of the current thread's tape for base type `T`.
pub struct Recording<T: TapeReal> {
    _marker: PhantomData<(T, *const ())>,
}

impl<T: TapeReal> Recording<T> {
    /// Claims the tape. Fails with [`Error::NestedTape`] if a recording of the
    /// same base type is already active on this thread.
    pub fn new() -> Result<Self> {
        T::tape().with(|t| {
            let mut t = t.borrow_mut();
            if t.active {
                return Err(Error::NestedTape);
            }
            t.active = true;
            t.ends.clear();
            t.arg_idx.clear();
            t.arg_val.clear();
            Ok(Recording {
                _marker: PhantomData,
            })
        })
    }

    /// New independent variable.
    pub fn var(&self, val: T) -> Var<T> {
        let idx = T::tape().with(|t| t.borrow_mut().close());
        Var { val, idx }
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        T::tape().with(|t| t.borrow().ends.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep seeded with `d out = 1`; returns the adjoint of every
    /// tape node, indexed by [`Var::slot`].
    pub fn adjoints(&self, out: Var<T>) -> Vec<T> {
        T::tape().with(|t| {
            let t = t.borrow();
            let n = t.ends.len();
            let mut adj = vec![T::zero(); n];
            let Some(o) = out.slot() else {
                return adj;
            };
            adj[o] = T::one();
            for i in (0..=o).rev() {
                let a = adj[i];
                if a.is_zero() {
                    continue;
                }
                let start = if i == 0 { 0 } else { t.ends[i - 1] as usize };
                let end = t.ends[i] as usize;
                for k in start..end {
                    let j = t.arg_idx[k] as usize;
                    adj[j] += a * t.arg_val[k];
                }
            }
            adj
        })
    }
}

impl<T: TapeReal> Drop for Recording<T> {
    fn drop(&mut self) {
        let len = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            let len = t.ends.len();
            t.ends.clear();
            t.arg_idx.clear();
            t.arg_val.clear();
            t.active = false;
            len
        });
        T::peak_cell().with(|c| c.set(c.get().max(len)));
    }
}

impl<T: TapeReal> Add for Var<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Var::binary(self, o, self.val + o.val, T::one(), T::one())
    }
}

impl<T: TapeReal> Sub for Var<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Var::binary(self, o, self.val - o.val, T::one(), -T::one())
    }
}

impl<T: TapeReal> Mul for Var<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Var::binary(self, o, self.val * o.val, o.val, self.val)
    }
}

impl<T: TapeReal> Div for Var<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.val;
        let q = self.val * inv;
        Var::binary(self, o, q, inv, -q * inv)
    }
}

impl<T: TapeReal> Neg for Var<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Var::unary(self, -self.val, -T::one())
    }
}

impl<T: TapeReal> Add<f64> for Var<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Var::unary(self, self.val + c, T::one())
    }
}

impl<T: TapeReal> Sub<f64> for Var<T> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Var::unary(self, self.val - c, T::one())
    }
}

impl<T: TapeReal> Mul<f64> for Var<T> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Var::unary(self, self.val * c, T::cst(c))
    }
}

impl<T: TapeReal> Div<f64> for Var<T> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Var::unary(self, self.val / c, T::cst(1.0 / c))
    }
}

impl<T: TapeReal> Add<Var<T>> for f64 {
    type Output = Var<T>;
    #[inline]
    fn add(self, v: Var<T>) -> Var<T> {
        v + self
    }
}

impl<T: TapeReal> Sub<Var<T>> for f64 {
    type Output = Var<T>;
    #[inline]
    fn sub(self, v: Var<T>) -> Var<T> {
        Var::unary(v, T::cst(self) - v.val, -T::one())
    }
}

impl<T: TapeReal> Mul<Var<T>> for f64 {
    type Output = Var<T>;
    #[inline]
    fn mul(self, v: Var<T>) -> Var<T> {
        v * self
    }
}

impl<T: TapeReal> Div<Var<T>> for f64 {
    type Output = Var<T>;
    #[inline]
    fn div(self, v: Var<T>) -> Var<T> {
        Var::constant(T::cst(self)) / v
    }
}

impl<T: TapeReal> AddAssign for Var<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: TapeReal> SubAssign for Var<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: TapeReal> MulAssign for Var<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: TapeReal> Scalar for Var<T> {
    #[inline]
    fn cst(c: f64) -> Self {
        Var::constant(T::cst(c))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val.value()
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        Var::unary(self, e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        Var::unary(self, self.val.ln(), T::one() / self.val)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        Var::unary(self, s, T::cst(0.5) / s)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Var::constant(T::one());
        }
        Var::unary(self, self.val.powi(n), self.val.powi(n - 1) * n as f64)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Var::constant(T::one());
        }
        Var::unary(self, self.val.powf(p), self.val.powf(p - 1.0) * p)
    }
    #[inline]
    fn sin(self) -> Self {
        Var::unary(self, self.val.sin(), self.val.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Var::unary(self, self.val.cos(), -self.val.sin())
    }

    fn lincomb(c: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(c.len(), x.len());
        let mut val = T::zero();
        let mut any = false;
        for (ci, xi) in c.iter().zip(x) {
            val += xi.val * *ci;
            any |= xi.idx != CONST;
        }
        if !any {
            return Var::constant(val);
        }
        let idx = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            for (ci, xi) in c.iter().zip(x) {
                if xi.idx != CONST && *ci != 0.0 {
                    t.arg_idx.push(xi.idx);
                    t.arg_val.push(T::cst(*ci));
                }
            }
            t.close()
        });
        Var { val, idx }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut val = T::zero();
        let mut any = false;
        for (ai, bi) in a.iter().zip(b) {
            val += ai.val * bi.val;
            any |= ai.idx != CONST || bi.idx != CONST;
        }
        if !any {
            return Var::constant(val);
        }
        let idx = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            for (ai, bi) in a.iter().zip(b) {
                if ai.idx != CONST {
                    t.arg_idx.push(ai.idx);
                    t.arg_val.push(bi.val);
                }
                if bi.idx != CONST {
                    t.arg_idx.push(bi.idx);
                    t.arg_val.push(ai.val);
                }
            }
            t.close()
        });
        Var { val, idx }
    }

    fn sum(x: &[Self]) -> Self {
        let mut val = T::zero();
        let mut any = false;
        for xi in x {
            val += xi.val;
            any |= xi.idx != CONST;
        }
        if !any {
            return Var::constant(val);
        }
        let idx = T::tape().with(|t| {
            let mut t = t.borrow_mut();
            for xi in x {
                if xi.idx != CONST {
                    t.arg_idx.push(xi.idx);
                    t.arg_val.push(T::one());
                }
            }
            t.close()
        });
        Var { val, idx }
    }
}
