//! Generic floating point scalar and the special functions the evidential
//! math needs (log-gamma, digamma, trigamma), written once for `f32` and `f64`.

use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Floating point scalar used throughout the crate: `f32` or `f64`.
pub trait Real:
    Copy
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + PartialOrd
    + na::RealField
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + std::str::FromStr
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const HALF: Self;
    const TWO: Self;
    const INFINITY: Self;
    const EPSILON: Self;

    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn finite(self) -> bool;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const HALF: Self = 0.5;
            const TWO: Self = 2.0;
            const INFINITY: Self = <$f>::INFINITY;
            const EPSILON: Self = <$f>::EPSILON;

            #[inline]
            fn finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// `ln(1 + exp(z))`, cut over to `z` above 30 and `exp(z)` below -30.
pub fn softplus<T: Real>(z: T) -> T {
    let cut = T::lit(30.0);
    if z > cut {
        z
    } else if z < -cut {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::ZERO {
        T::ONE / (T::ONE + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::ONE + e)
    }
}

// Recurrence shifts the argument past this point before the asymptotic series.
const ASYMPTOTIC_START: f64 = 10.0;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    debug_assert!(x > T::ZERO);
    let start = T::lit(ASYMPTOTIC_START);
    let mut x = x;
    let mut log_prod = T::ZERO;
    // Accumulate the product and take a single log to keep rounding low.
    let mut prod = T::ONE;
    while x < start {
        prod *= x;
        x += T::ONE;
        if prod > T::lit(1e30) {
            log_prod += prod.ln();
            prod = T::ONE;
        }
    }
    log_prod += prod.ln();
    let inv = T::ONE / x;
    let inv2 = inv * inv;
    // Stirling series coefficients B_{2k} / (2k (2k - 1)).
    let series = inv
        * (T::lit(1.0 / 12.0)
            + inv2
                * (T::lit(-1.0 / 360.0)
                    + inv2
                        * (T::lit(1.0 / 1260.0)
                            + inv2
                                * (T::lit(-1.0 / 1680.0)
                                    + inv2 * (T::lit(1.0 / 1188.0) + inv2 * T::lit(-691.0 / 360360.0))))));
    let half_ln_two_pi = T::lit(0.918_938_533_204_672_8);
    (x - T::HALF) * x.ln() - x + half_ln_two_pi + series - log_prod
}

/// Digamma `ψ(x)` for `x > 0`.
pub fn digamma<T: Real>(x: T) -> T {
    debug_assert!(x > T::ZERO);
    let start = T::lit(ASYMPTOTIC_START);
    let mut x = x;
    let mut acc = T::ZERO;
    while x < start {
        acc -= T::ONE / x;
        x += T::ONE;
    }
    let inv = T::ONE / x;
    let inv2 = inv * inv;
    let series = inv2
        * (T::lit(-1.0 / 12.0)
            + inv2
                * (T::lit(1.0 / 120.0)
                    + inv2
                        * (T::lit(-1.0 / 252.0)
                            + inv2 * (T::lit(1.0 / 240.0) + inv2 * T::lit(-1.0 / 132.0)))));
    acc + x.ln() - T::HALF * inv + series
}

/// Trigamma `ψ'(x)` for `x > 0`.
pub fn trigamma<T: Real>(x: T) -> T {
    debug_assert!(x > T::ZERO);
    let start = T::lit(ASYMPTOTIC_START);
    let mut x = x;
    let mut acc = T::ZERO;
    while x < start {
        acc += T::ONE / (x * x);
        x += T::ONE;
    }
    let inv = T::ONE / x;
    let inv2 = inv * inv;
    let series = inv
        + inv2 * T::HALF
        + inv2
            * inv
            * (T::lit(1.0 / 6.0)
                + inv2
                    * (T::lit(-1.0 / 30.0)
                        + inv2 * (T::lit(1.0 / 42.0) + inv2 * (T::lit(-1.0 / 30.0) + inv2 * T::lit(5.0 / 66.0)))));
    acc + series
}

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (tree) summation with a fixed split order, so the result depends
/// only on the input sequence and never on how work is scheduled.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = T::ZERO;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean by [`pairwise_sum`]. Returns `None` for an empty slice.
pub fn pairwise_mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(pairwise_sum(xs) / T::of_usize(xs.len()))
    }
}
