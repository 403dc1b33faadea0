//! Second-order forward-mode automatic differentiation.
//!
//! A [`Jet`] carries a value, its gradient and its Hessian with respect to
//! up to [`JMAX`] seeded variables. Chart formulas in this crate are written
//! once against the [`Scalar`] trait and evaluated either on `f64` or on
//! jets, which yields exact first and second derivatives of metrics,
//! embeddings and group actions.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum number of independent variables a jet tracks.
pub const JMAX: usize = 6;

/// Value, gradient and Hessian of a scalar function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; JMAX],
    pub h: [[f64; JMAX]; JMAX],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; JMAX], h: [[0.0; JMAX]; JMAX] }
    }

    /// The coordinate function `x_i` evaluated at `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        assert!(i < JMAX, "jet variable index {i} exceeds capacity {JMAX}");
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    /// Seeds `x[i]` as variable `offset + i`.
    pub fn seed(x: &[f64], offset: usize) -> Vec<Jet> {
        x.iter().enumerate().map(|(i, &v)| Jet::variable(v, offset + i)).collect()
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    #[inline]
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Jet::constant(f0);
        for i in 0..JMAX {
            out.g[i] = f1 * self.g[i];
        }
        for i in 0..JMAX {
            for j in 0..JMAX {
                out.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..JMAX {
            self.g[i] += o.g[i];
            for j in 0..JMAX {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, o: Jet) -> Jet {
        self.v -= o.v;
        for i in 0..JMAX {
            self.g[i] -= o.g[i];
            for j in 0..JMAX {
                self.h[i][j] -= o.h[i][j];
            }
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..JMAX {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        for i in 0..JMAX {
            for j in 0..JMAX {
                out.h[i][j] = self.h[i][j] * o.v
                    + self.v * o.h[i][j]
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: f64) -> Jet {
        self.v += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, o: f64) -> Jet {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(mut self, o: f64) -> Jet {
        self.v *= o;
        for i in 0..JMAX {
            self.g[i] *= o;
            for j in 0..JMAX {
                self.h[i][j] *= o;
            }
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}

/// Numeric type usable in chart formulas: plain floats or jets.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn atan(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn val(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn atan(self) -> Self {
        let d = 1.0 / (1.0 + self.v * self.v);
        self.chain(self.v.atan(), d, -2.0 * self.v * d * d)
    }
}
