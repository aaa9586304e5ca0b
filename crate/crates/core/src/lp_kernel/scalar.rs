use crate::rational::Q;
use num::{Signed, Zero};
use std::fmt::Debug;

/// Ordered field used by the simplex. Exact for [`Q`], tolerance-based for `f64`.
pub trait Scalar: Clone + Debug + PartialOrd + Send + Sync + 'static {
    /// Whether arithmetic is exact; only exact solves are rechecked.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn from_q(v: &Q) -> Self;

    fn is_nonneg(&self) -> bool {
        !self.is_neg()
    }
    fn approx_eq(&self, o: &Self) -> bool {
        self.sub(o).is_zero()
    }
}

impl Scalar for Q {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
    fn from_q(v: &Q) -> Self {
        v.clone()
    }
}

/// Pivot tolerance for floating point tableaus.
pub const F64_EPS: f64 = 1e-9;

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        self.abs() <= F64_EPS
    }
    fn is_pos(&self) -> bool {
        *self > F64_EPS
    }
    fn is_neg(&self) -> bool {
        *self < -F64_EPS
    }
    fn approx_eq(&self, o: &Self) -> bool {
        (self - o).abs() <= F64_EPS * self.abs().max(o.abs()).max(1.0) * 16.0
    }
    fn from_q(v: &Q) -> Self {
        crate::rational::to_f64(v)
    }
}
