//! Scalar backends.
//!
//! Everything numeric in the crate is generic over [`Real`]. Two backends are
//! provided: native `f64` and [`Ext`], a binary floating-point number with a
//! configurable mantissa width. The construction involves quantities of size
//! `eps^(±2n)`; for `eps = 1/4` these leave the `f64` exponent range near
//! level 250, and the small eigenvalue of the level-`n` average drops below
//! `f64` resolution relative to the large one much earlier, so anything that
//! inverts averages deep in the tree wants the extended backend.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

/// Which scalar implementation a computation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Double,
    Extended,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Double => f.write_str("double"),
            Backend::Extended => f.write_str("extended"),
        }
    }
}

impl FromStr for Backend {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "double" | "f64" => Ok(Backend::Double),
            "extended" | "ext" => Ok(Backend::Extended),
            other => Err(LabError::Config(format!("unknown backend `{other}`"))),
        }
    }
}

/// A real scalar with the handful of operations the construction needs.
///
/// Operations consume their operands; for `f64` the clones this forces are
/// free. `sqrt` expects a nonnegative argument and clamps negative rounding
/// noise to zero.
pub trait Real:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const BACKEND: Backend;

    /// Converts from `f64` at the backend's default precision. Panics on
    /// non-finite input.
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt(&self) -> Self;
    /// Mantissa width in bits carried by this value.
    fn bits(&self) -> u32;
    /// Decimal scientific representation that parses back to the same value
    /// at the same precision.
    fn to_sci_string(&self) -> String;
    fn parse_sci(s: &str) -> Result<Self, LabError>;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// Integer power by repeated squaring.
    fn powi(&self, n: i32) -> Self {
        let mut base = self.clone();
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.square();
            e >>= 1;
        }
        if n < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }

    /// `2^k`, exact in both backends for the level range used here.
    fn exp2i(k: i32) -> Self {
        Self::from_f64(2f64.powi(k))
    }

    /// Relative tolerance `2^-(bits-20)` scaled by `max(1, scale)`.
    fn tol(&self, scale: f64) -> f64 {
        2f64.powi(-(self.bits() as i32 - 20)) * scale.max(1.0)
    }
}

impl Real for f64 {
    const BACKEND: Backend = Backend::Double;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sqrt(&self) -> Self {
        self.max(0.0).sqrt()
    }

    fn bits(&self) -> u32 {
        53
    }

    fn to_sci_string(&self) -> String {
        format!("{:.16e}", self)
    }

    fn parse_sci(s: &str) -> Result<Self, LabError> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| LabError::Parse(format!("`{s}`: {e}")))
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

type BigFloat = FBig<HalfEven, 2>;
type BigDecimal = FBig<HalfEven, 10>;

static DEFAULT_BITS: AtomicUsize = AtomicUsize::new(128);

/// Sets the mantissa width used by [`Ext::from_f64`]. Values built from an
/// explicitly wider operand keep the wider precision through arithmetic.
pub fn set_default_ext_bits(bits: u32) {
    DEFAULT_BITS.store(bits.max(53) as usize, Ordering::Relaxed);
}

pub fn default_ext_bits() -> u32 {
    DEFAULT_BITS.load(Ordering::Relaxed) as u32
}

/// Extended-precision binary float (round-half-even), backed by `dashu-float`.
/// The result of a binary operation carries the larger operand precision.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Ext(BigFloat);

impl Ext {
    pub fn with_bits(x: f64, bits: u32) -> Self {
        assert!(x.is_finite(), "non-finite value {x} has no extended representation");
        let v = BigFloat::try_from(x).expect("finite f64 converts exactly");
        Ext(v.with_precision(bits.max(53) as usize).value())
    }

    // dashu keeps one guard digit after an inexact add/sub; round it away so
    // that every value is exactly representable at its precision
    fn normalized(v: BigFloat) -> Self {
        if v.repr().digits() > v.precision() {
            let p = v.precision();
            let (sig, exp) = v.into_repr().into_parts();
            Ext(BigFloat::from_parts(sig, exp).with_precision(p).value())
        } else {
            Ext(v)
        }
    }

    pub fn precision(&self) -> u32 {
        self.0.precision() as u32
    }

    pub fn parse_with_bits(s: &str, bits: u32) -> Result<Self, LabError> {
        let dec: BigDecimal = s
            .trim()
            .parse()
            .map_err(|e| LabError::Parse(format!("`{s}`: {e:?}")))?;
        Ok(Ext(dec.with_base_and_precision::<2>(bits.max(53) as usize).value()))
    }
}

impl fmt::Debug for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ext({})", self.to_sci_string())
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sci_string())
    }
}

macro_rules! ext_binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Ext {
            type Output = Ext;
            fn $m(self, rhs: Ext) -> Ext {
                Ext::normalized(self.0 $op rhs.0)
            }
        }
    };
}

ext_binop!(Add, add, +);
ext_binop!(Sub, sub, -);
ext_binop!(Mul, mul, *);
ext_binop!(Div, div, /);

impl Neg for Ext {
    type Output = Ext;
    fn neg(self) -> Ext {
        Ext(-self.0)
    }
}

impl Real for Ext {
    const BACKEND: Backend = Backend::Extended;

    fn from_f64(x: f64) -> Self {
        Ext::with_bits(x, default_ext_bits())
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }

    fn sqrt(&self) -> Self {
        if self.0 <= BigFloat::ZERO {
            return Ext::with_bits(0.0, self.precision());
        }
        Ext(self.0.sqrt())
    }

    fn bits(&self) -> u32 {
        self.precision()
    }

    fn to_sci_string(&self) -> String {
        let digits = (self.precision() as f64 * 0.30103).ceil() as usize + 1;
        let dec: BigDecimal = self.0.clone().with_base_and_precision::<10>(digits).value();
        format!("{:e}", dec)
    }

    fn parse_sci(s: &str) -> Result<Self, LabError> {
        Ext::parse_with_bits(s, default_ext_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_sci_roundtrip_is_lossless() {
        for x in [0.1, 1.0 / 3.0, 2f64.powi(-700), -123456.789e200] {
            let s = x.to_sci_string();
            assert_eq!(f64::parse_sci(&s).unwrap(), x);
        }
    }

    #[test]
    fn ext_carries_precision_and_roundtrips() {
        let third = Ext::with_bits(1.0, 200) / Ext::with_bits(3.0, 200);
        assert_eq!(third.bits(), 200);
        let s = third.to_sci_string();
        let back = Ext::parse_with_bits(&s, 200).unwrap();
        assert_eq!(back, third);
    }

    #[test]
    fn ext_keeps_range_beyond_double() {
        let eps = Ext::with_bits(0.25, 128);
        let tiny = eps.powi(600);
        assert!(tiny > Ext::with_bits(0.0, 128));
        assert_eq!(tiny.to_f64(), 0.0);
        let back = tiny * Ext::with_bits(4.0, 128).powi(600);
        assert!((back.to_f64() - 1.0).abs() < 1e-30);
    }

    #[test]
    fn powi_matches_std() {
        assert_eq!(Real::powi(&0.5f64, 10), 0.5f64.powi(10));
        assert_eq!(Real::powi(&2.0f64, -3), 0.125);
        assert_eq!(Real::powi(&3.0f64, 0), 1.0);
    }

    #[test]
    fn sqrt_clamps_negative_noise() {
        assert_eq!(Real::sqrt(&-1e-300f64), 0.0);
        assert_eq!(Ext::with_bits(-1e-30, 100).sqrt().to_f64(), 0.0);
    }
}
