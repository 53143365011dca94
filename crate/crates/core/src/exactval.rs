//! Exact scalars of the form `a + b·π` with rational `a`, `b`.
//!
//! Every trigonometric moment the averaging pipeline needs lives in this
//! field, so averaged coefficients can be carried exactly until the last
//! moment they are collapsed to `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational; always stored in lowest terms with a
/// positive denominator.
pub type Rational = BigRational;

/// Truncation of π to 50 decimals; `PI_LOWER < π < PI_LOWER + 10^-50`.
const PI_DIGITS: &str = "314159265358979323846264338327950288419716939937510";

fn pi_enclosure() -> (Rational, Rational) {
    let num = BigInt::from_str(PI_DIGITS).expect("static digits");
    let den = BigInt::from(10u32).pow(50);
    let lo = Rational::new(num.clone(), den.clone());
    let hi = Rational::new(num + BigInt::one(), den);
    (lo, hi)
}

/// Builds `num/den` from machine integers.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Converts a rational to the nearest double, rejecting non-finite results.
pub fn rational_to_f64(q: &Rational) -> Result<f64> {
    match q.to_f64() {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(Error::FloatOverflow(q.to_string())),
    }
}

/// Exact value `const_part + pi_part·π`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalPi {
    pub const_part: Rational,
    pub pi_part: Rational,
}

impl RationalPi {
    pub fn new(const_part: Rational, pi_part: Rational) -> Self {
        // `Ratio::new` already reduces; `normalize` is kept for values built
        // through `Ratio::new_raw`.
        Self {
            const_part,
            pi_part,
        }
        .normalize()
    }

    pub fn zero() -> Self {
        Self::new(Rational::zero(), Rational::zero())
    }

    pub fn from_rational(q: Rational) -> Self {
        Self::new(q, Rational::zero())
    }

    /// `q·π`
    pub fn pi_multiple(q: Rational) -> Self {
        Self::new(Rational::zero(), q)
    }

    pub fn is_zero(&self) -> bool {
        self.const_part.is_zero() && self.pi_part.is_zero()
    }

    /// Reduces both components to lowest terms with positive denominators.
    pub fn normalize(self) -> Self {
        fn reduce(q: Rational) -> Rational {
            let (n, d) = q.into_raw();
            Rational::new(n, d)
        }
        Self {
            const_part: reduce(self.const_part),
            pi_part: reduce(self.pi_part),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self::new(
            &self.const_part + &other.const_part,
            &self.pi_part + &other.pi_part,
        )
    }

    pub fn mul_rational(&self, q: &Rational) -> Self {
        Self::new(&self.const_part * q, &self.pi_part * q)
    }

    /// `a + b·π` in double precision.
    pub fn to_float(&self) -> Result<f64> {
        let a = rational_to_f64(&self.const_part)?;
        let b = rational_to_f64(&self.pi_part)?;
        let v = a + b * std::f64::consts::PI;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::FloatOverflow(self.to_string()))
        }
    }

    /// Sign of the exact value, decided with a rational enclosure of π.
    ///
    /// Returns `None` only when `|a + bπ| < |b|·10^-50` without being zero,
    /// which the enclosure cannot resolve.
    pub fn signum(&self) -> Option<Ordering> {
        if self.pi_part.is_zero() {
            return Some(self.const_part.cmp(&Rational::zero()));
        }
        let (lo, hi) = pi_enclosure();
        let at_lo = &self.const_part + &self.pi_part * lo;
        let at_hi = &self.const_part + &self.pi_part * hi;
        let s_lo = at_lo.signum();
        let s_hi = at_hi.signum();
        if s_lo == s_hi && !s_lo.is_zero() {
            Some(if s_lo.is_positive() {
                Ordering::Greater
            } else {
                Ordering::Less
            })
        } else {
            None
        }
    }
}

impl Default for RationalPi {
    fn default() -> Self {
        Self::zero()
    }
}

impl Add for &RationalPi {
    type Output = RationalPi;
    fn add(self, rhs: &RationalPi) -> RationalPi {
        self.plus(rhs)
    }
}

impl Add for RationalPi {
    type Output = RationalPi;
    fn add(self, rhs: RationalPi) -> RationalPi {
        self.plus(&rhs)
    }
}

impl Neg for &RationalPi {
    type Output = RationalPi;
    fn neg(self) -> RationalPi {
        RationalPi::new(-&self.const_part, -&self.pi_part)
    }
}

impl Sub for &RationalPi {
    type Output = RationalPi;
    fn sub(self, rhs: &RationalPi) -> RationalPi {
        self + &(-rhs)
    }
}

impl PartialOrd for RationalPi {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self == other {
            return Some(Ordering::Equal);
        }
        (self - other).signum()
    }
}

impl fmt::Display for RationalPi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.const_part.is_zero(), self.pi_part.is_zero()) {
            (true, true) => write!(f, "0"),
            (false, true) => write!(f, "{}", self.const_part),
            (true, false) => write!(f, "{}*pi", self.pi_part),
            (false, false) => write!(f, "{} + {}*pi", self.const_part, self.pi_part),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RationalPiRepr {
    num_const: String,
    den_const: String,
    num_pi: String,
    den_pi: String,
}

impl Serialize for RationalPi {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalPiRepr {
            num_const: self.const_part.numer().to_string(),
            den_const: self.const_part.denom().to_string(),
            num_pi: self.pi_part.numer().to_string(),
            den_pi: self.pi_part.denom().to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalPi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RationalPiRepr::deserialize(d)?;
        let parse = |s: &str| BigInt::from_str(s).map_err(D::Error::custom);
        let dc = parse(&repr.den_const)?;
        let dp = parse(&repr.den_pi)?;
        if dc.is_zero() || dp.is_zero() {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(RationalPi::new(
            Rational::new(parse(&repr.num_const)?, dc),
            Rational::new(parse(&repr.num_pi)?, dp),
        ))
    }
}
