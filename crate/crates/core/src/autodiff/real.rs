use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar abstraction shared by plain `f64` evaluation and taped reverse-mode
/// evaluation.
///
/// Every numeric routine in the simulator, the policy, and the loss is written
/// once against this trait. Instantiated with `f64` it runs at full speed with
/// no bookkeeping; instantiated with [`crate::autodiff::Var`] it records a tape
/// that can be differentiated.
///
/// Branches (contact activation, replay decisions, clamps) are taken on
/// [`Real::value`], so a taped evaluation differentiates the branch that was
/// actually taken.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// A value that carries no derivative information.
    fn constant(value: f64) -> Self;

    /// The primal value.
    fn value(self) -> f64;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    /// `x * sigmoid(x)`.
    fn swish(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Subgradient 0 at 0.
    fn abs(self) -> Self;
    /// Power by a constant exponent.
    fn powf(self, exponent: f64) -> Self;
    /// Ties resolve to `self`.
    fn min(self, other: Self) -> Self;
    /// Ties resolve to `self`.
    fn max(self, other: Self) -> Self;
    /// Zero gradient outside `[lo, hi]`.
    fn clamp(self, lo: f64, hi: f64) -> Self;

    /// Same value, no gradient flows through the result.
    fn stop_gradient(self) -> Self;

    /// Gradient flows only through the taken branch.
    fn select(cond: bool, if_true: Self, if_false: Self) -> Self {
        if cond {
            if_true
        } else {
            if_false
        }
    }

    /// Inner product, recorded as a single node on a tape.
    fn dot(a: &[Self], b: &[Self]) -> Self;

    /// `dot(weights, inputs) + bias`, recorded as a single node on a tape.
    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self;

    fn sum(xs: &[Self]) -> Self;

    /// `a * b - c * d`.
    fn mul_sub(a: Self, b: Self, c: Self, d: Self) -> Self {
        a * b - c * d
    }

    fn dot3(a: [Self; 3], b: [Self; 3]) -> Self {
        Self::dot(&a, &b)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    #[inline]
    fn swish(self) -> Self {
        self * sigmoid(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powf(self, exponent: f64) -> Self {
        f64::powf(self, exponent)
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
    #[inline]
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }
    #[inline]
    fn stop_gradient(self) -> Self {
        self
    }
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }
    #[inline]
    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        Self::dot(weights, inputs) + bias
    }
    #[inline]
    fn sum(xs: &[Self]) -> Self {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        acc
    }
    #[inline]
    fn dot3(a: [Self; 3], b: [Self; 3]) -> Self {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
}
