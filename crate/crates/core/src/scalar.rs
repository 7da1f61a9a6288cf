//! Scalar abstraction shared by the cost functions.
//!
//! Every differentiable cost in this crate is written once, generic over
//! [`Real`], and instantiated either with `f64` (plain evaluation) or with
//! [`Dual`] (forward-mode derivative along one seeded direction).

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Band inside which `abs`/`max` treat their argument as sitting exactly on
/// the kink and return the symmetric subgradient.
const KINK_BAND: f64 = 1e-12;

pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
    /// Larger of the two; exact ties average the derivatives.
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self {
        -((-self).max(-other))
    }
    fn powi(self, n: i32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
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
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Dual number `v + d·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }

    /// Independent variable: derivative seed 1.
    pub fn var(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual::new(self.v * inv, (self.d * o.v - self.v * o.d) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Real for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.d * e)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.d / self.v)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, self.d * 0.5 / s)
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.d * self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.v.cos(), -self.d * self.v.sin())
    }
    #[inline]
    fn abs(self) -> Self {
        if self.v > KINK_BAND {
            self
        } else if self.v < -KINK_BAND {
            -self
        } else {
            Dual::new(self.v.abs(), 0.0)
        }
    }
    #[inline]
    fn max(self, o: Self) -> Self {
        let gap = self.v - o.v;
        if gap > KINK_BAND {
            self
        } else if gap < -KINK_BAND {
            o
        } else {
            Dual::new(self.v.max(o.v), 0.5 * (self.d + o.d))
        }
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::cst(1.0);
        }
        let p = self.v.powi(n - 1);
        Dual::new(p * self.v, self.d * n as f64 * p)
    }
}

/// 2D vector over any [`Real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> V2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        V2 { x, y }
    }

    pub fn cst(x: f64, y: f64) -> Self {
        V2::new(T::cst(x), T::cst(y))
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    /// Unit vector; a tiny floor keeps coincident points finite.
    #[inline]
    pub fn normalized(self) -> Self {
        let n = (self.dot(self) + T::cst(1e-24)).sqrt();
        V2::new(self.x / n, self.y / n)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        V2::new(self.x * s, self.y * s)
    }

    pub fn map_val(self) -> V2<f64> {
        V2::new(self.x.val(), self.y.val())
    }
}

impl<T: Real> Add for V2<T> {
    type Output = V2<T>;
    #[inline]
    fn add(self, o: Self) -> Self {
        V2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for V2<T> {
    type Output = V2<T>;
    #[inline]
    fn sub(self, o: Self) -> Self {
        V2::new(self.x - o.x, self.y - o.y)
    }
}
