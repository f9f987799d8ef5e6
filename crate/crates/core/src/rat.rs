//! Arbitrary-precision rationals.
//!
//! Every quantity on the makespan path (sizes, speeds, the guessed optimum,
//! fractions, accumulated processing times) is a [`Rat`]. Comparisons are
//! therefore exact, which matters because the allocator branches on closed
//! interval boundaries such as `p <= r_k * lambda`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// An exact rational number, always in lowest terms with a positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num / den`. Panics if `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Option<Self> {
        if den.is_zero() {
            return None;
        }
        Some(Rat(BigRational::new(num, den)))
    }

    /// `2^exp` for any integer exponent.
    pub fn pow2(exp: i64) -> Self {
        let shift = exp.unsigned_abs() as usize;
        let big = BigInt::one() << shift;
        if exp >= 0 {
            Rat(BigRational::from_integer(big))
        } else {
            Rat(BigRational::new_raw(BigInt::one(), big))
        }
    }

    /// Exact value of a finite float (every finite `f64` is a dyadic rational).
    pub fn from_f64_exact(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Rat)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Self {
        Rat(self.0.recip())
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Multiply by `2^exp` without a general multiplication.
    pub fn mul_pow2(&self, exp: i64) -> Self {
        let shift = exp.unsigned_abs() as usize;
        if exp >= 0 {
            Rat(BigRational::new(self.0.numer() << shift, self.0.denom().clone()))
        } else {
            Rat(BigRational::new(self.0.numer().clone(), self.0.denom() << shift))
        }
    }

    /// Largest `z` with `2^z <= self`. Requires `self > 0`.
    pub fn floor_log2(&self) -> Option<i64> {
        if !self.is_positive() {
            return None;
        }
        let n = self.0.numer();
        let d = self.0.denom();
        let mut z = n.bits() as i64 - d.bits() as i64;
        // 2^z <= n/d  <=>  d * 2^z <= n
        let fits = |z: i64| -> bool {
            if z >= 0 {
                (d << (z as usize)) <= *n
            } else {
                *d <= (n << ((-z) as usize))
            }
        };
        if !fits(z) {
            z -= 1;
        }
        debug_assert!(fits(z) && !fits(z + 1));
        Some(z)
    }

    /// `Some(z)` when `self == 2^z`.
    pub fn exact_log2(&self) -> Option<i64> {
        let z = self.floor_log2()?;
        (Rat::pow2(z) == *self).then_some(z)
    }

    /// Integer power with a possibly negative exponent.
    pub fn powi(&self, exp: i32) -> Self {
        Rat(num_traits::pow::Pow::pow(&self.0, exp))
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Greatest common divisor style helper used when scaling to integers.
    pub fn denom_lcm<'a>(values: impl IntoIterator<Item = &'a Rat>) -> BigInt {
        values.into_iter().fold(BigInt::one(), |acc, r| acc.lcm(r.0.denom()))
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

impl From<BigRational> for Rat {
    fn from(r: BigRational) -> Self {
        Rat(r)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRatError(pub String);

impl fmt::Display for ParseRatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a rational number: {:?}", self.0)
    }
}

impl std::error::Error for ParseRatError {}

fn parse_int(s: &str) -> Result<BigInt, ParseRatError> {
    let t = s.trim();
    if t.is_empty() || !t.trim_start_matches(['-', '+']).bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseRatError(s.to_string()));
    }
    BigInt::from_str(t).map_err(|_| ParseRatError(s.to_string()))
}

impl FromStr for Rat {
    type Err = ParseRatError;

    /// Accepts `"17"`, `"-3"`, and `"3/5"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            None => Ok(Rat(BigRational::from_integer(parse_int(s)?))),
            Some((n, d)) => {
                let n = parse_int(n)?;
                let d = parse_int(d)?;
                Rat::from_big(n, d).ok_or_else(|| ParseRatError(s.to_string()))
            }
        }
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct RatVisitor;

impl<'de> Visitor<'de> for RatVisitor {
    type Value = Rat;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a rational as \"n\", \"n/d\", or a [num, den] pair of decimal strings")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rat, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rat, E> {
        Ok(Rat::from_int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rat, E> {
        Ok(Rat(BigRational::from_integer(BigInt::from(v))))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Rat, A::Error> {
        let num: String = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
        let den: String = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
        if seq.next_element::<de::IgnoredAny>()?.is_some() {
            return Err(de::Error::invalid_length(3, &self));
        }
        let n = parse_int(&num).map_err(de::Error::custom)?;
        let d = parse_int(&den).map_err(de::Error::custom)?;
        Rat::from_big(n, d).ok_or_else(|| de::Error::custom("zero denominator"))
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RatVisitor)
    }
}

/// Instance files write integers as `"17"` and fractions as `["3","5"]`.
pub(crate) fn to_instance_json(r: &Rat) -> serde_json::Value {
    if r.is_integer() {
        serde_json::Value::String(r.numer().to_string())
    } else {
        serde_json::json!([r.numer().to_string(), r.denom().to_string()])
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident) => {
        impl $tr<Rat> for Rat {
            type Output = Rat;
            fn $m(self, rhs: Rat) -> Rat {
                Rat(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rat> for Rat {
            type Output = Rat;
            fn $m(self, rhs: &'a Rat) -> Rat {
                Rat(self.0.$m(&rhs.0))
            }
        }
        impl<'a> $tr<Rat> for &'a Rat {
            type Output = Rat;
            fn $m(self, rhs: Rat) -> Rat {
                Rat((&self.0).$m(rhs.0))
            }
        }
        impl<'a, 'b> $tr<&'b Rat> for &'a Rat {
            type Output = Rat;
            fn $m(self, rhs: &'b Rat) -> Rat {
                Rat((&self.0).$m(&rhs.0))
            }
        }
        impl $atr<Rat> for Rat {
            fn $am(&mut self, rhs: Rat) {
                self.0.$am(rhs.0);
            }
        }
        impl<'a> $atr<&'a Rat> for Rat {
            fn $am(&mut self, rhs: &'a Rat) {
                self.0.$am(&rhs.0);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign);
binop!(Sub, sub, SubAssign, sub_assign);
binop!(Mul, mul, MulAssign, mul_assign);
binop!(Div, div, DivAssign, div_assign);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-(&self.0))
    }
}

impl Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rat> for Rat {
    fn sum<I: Iterator<Item = &'a Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

/// Sign helper for callers that only need the sign of a difference.
pub fn sign(r: &Rat) -> Sign {
    r.0.numer().sign()
}
