//! Nonnegative reals with a wide binary exponent.
//!
//! An [`ExtReal`] is `significand * 2^exponent` with the significand in `[1, 2)`
//! (or exactly zero), plus a symbolic `+inf`. The exponent is an `i64`, so
//! quantities such as `2^-1050` or `2^(100 * 21) * 1200` are held without
//! overflow or underflow. Products, quotients and integer powers are exact in
//! the exponent and round only the significand; sums round like `f64`.
//!
//! [`ExtSum`] accumulates signed terms as separate positive and negative
//! magnitudes, for differences far below `f64` resolution.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exponents beyond this magnitude saturate to zero or `+inf`.
pub const EXPONENT_LIMIT: i64 = 1 << 52;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal {
    sig: f64,
    exp: i64,
}

/// Splits a positive finite `f64` into `(f, k)` with `f` in `[1, 2)` and `m = f * 2^k`.
fn split(m: f64) -> (f64, i64) {
    debug_assert!(m > 0.0 && m.is_finite());
    let bits = m.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        let (f, k) = split(m * f64::from_bits(0x43f0_0000_0000_0000)); // 2^64
        return (f, k - 64);
    }
    let f = f64::from_bits((bits & !(0x7ff << 52)) | (1023 << 52));
    (f, raw - 1023)
}

/// `2^k` as an `f64` for `k` in the normal exponent range.
fn pow2(k: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal { sig: 0.0, exp: 0 };
    pub const ONE: ExtReal = ExtReal { sig: 1.0, exp: 0 };
    pub const INFINITY: ExtReal = ExtReal {
        sig: f64::INFINITY,
        exp: 0,
    };

    /// Builds `m * 2^e` for a nonnegative `m`. Panics on negative or NaN input.
    pub fn from_parts(m: f64, e: i64) -> ExtReal {
        assert!(m >= 0.0, "ExtReal is nonnegative, got {m}");
        if m == 0.0 {
            return ExtReal::ZERO;
        }
        if m.is_infinite() {
            return ExtReal::INFINITY;
        }
        let (f, k) = split(m);
        ExtReal::normalized(f, e.saturating_add(k))
    }

    fn normalized(sig: f64, exp: i64) -> ExtReal {
        if exp > EXPONENT_LIMIT {
            ExtReal::INFINITY
        } else if exp < -EXPONENT_LIMIT {
            ExtReal::ZERO
        } else {
            ExtReal { sig, exp }
        }
    }

    pub fn from_f64(v: f64) -> ExtReal {
        ExtReal::from_parts(v, 0)
    }

    pub fn from_u64(v: u64) -> ExtReal {
        // exact for values below 2^53; the rest round like f64
        ExtReal::from_f64(v as f64)
    }

    /// `2^v`. Exact when `v` is an integer.
    pub fn exp2(v: f64) -> ExtReal {
        if v == f64::INFINITY {
            return ExtReal::INFINITY;
        }
        if v == f64::NEG_INFINITY {
            return ExtReal::ZERO;
        }
        assert!(!v.is_nan(), "exp2 of NaN");
        if v.abs() > EXPONENT_LIMIT as f64 {
            return if v > 0.0 {
                ExtReal::INFINITY
            } else {
                ExtReal::ZERO
            };
        }
        let k = v.floor();
        let frac = v - k;
        ExtReal::from_parts(frac.exp2(), k as i64)
    }

    /// `e^(-l)`.
    pub fn exp_neg(l: ExtReal) -> ExtReal {
        if l.is_infinite() {
            return ExtReal::ZERO;
        }
        if l.is_zero() {
            return ExtReal::ONE;
        }
        if l.exp > 62 {
            return ExtReal::ZERO;
        }
        ExtReal::exp2(-l.to_f64() / std::f64::consts::LN_2)
    }

    /// `-ln(1 - x)` for `x` in `[0, 1]`.
    pub fn neg_ln_one_minus(x: ExtReal) -> ExtReal {
        assert!(x <= ExtReal::ONE, "neg_ln_one_minus needs x <= 1");
        if x == ExtReal::ONE {
            return ExtReal::INFINITY;
        }
        if x.is_zero() {
            return ExtReal::ZERO;
        }
        if x.exp < -30 {
            // x + x^2/2 + x^3/3; the next term is below 2^-90 relative
            let x2 = x * x;
            return x + x2 * ExtReal::from_f64(0.5) + x2 * x * ExtReal::from_f64(1.0 / 3.0);
        }
        ExtReal::from_f64(-(-x.to_f64()).ln_1p())
    }

    /// `1 - e^(-l)` without cancellation for small `l`.
    pub fn one_minus_exp_neg(l: ExtReal) -> ExtReal {
        if l.is_zero() {
            return ExtReal::ZERO;
        }
        if l.exp < -60 {
            return l.checked_sub(l * l * ExtReal::from_f64(0.5)).unwrap_or(ExtReal::ZERO);
        }
        if l.exp < 10 {
            return ExtReal::from_f64(-(-l.to_f64()).exp_m1());
        }
        ExtReal::ONE
            .checked_sub(ExtReal::exp_neg(l))
            .unwrap_or(ExtReal::ZERO)
    }

    pub fn is_zero(self) -> bool {
        self.sig == 0.0
    }

    pub fn is_infinite(self) -> bool {
        self.sig.is_infinite()
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    pub fn significand(self) -> f64 {
        self.sig
    }

    pub fn exponent(self) -> i64 {
        self.exp
    }

    /// Nearest `f64`; saturates to `inf` or `0` outside the native range.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() || self.is_infinite() {
            return self.sig;
        }
        if self.exp > 1023 {
            f64::INFINITY
        } else if self.exp >= -1022 {
            self.sig * pow2(self.exp)
        } else if self.exp >= -1080 {
            (self.sig * pow2(self.exp + 64)) * pow2(-64)
        } else {
            0.0
        }
    }

    pub fn log2(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else if self.is_infinite() {
            f64::INFINITY
        } else {
            self.exp as f64 + self.sig.log2()
        }
    }

    /// `self - rhs`, or `None` when the result would be negative or undefined.
    pub fn checked_sub(self, rhs: ExtReal) -> Option<ExtReal> {
        match self.partial_cmp(&rhs)? {
            Ordering::Less => None,
            Ordering::Equal => Some(ExtReal::ZERO),
            Ordering::Greater => {
                if self.is_infinite() {
                    return if rhs.is_infinite() { None } else { Some(self) };
                }
                if rhs.is_zero() {
                    return Some(self);
                }
                let shift = self.exp - rhs.exp;
                if shift > 64 {
                    return Some(self);
                }
                let m = self.sig - rhs.sig * pow2(-shift);
                Some(if m <= 0.0 {
                    ExtReal::ZERO
                } else {
                    ExtReal::from_parts(m, self.exp)
                })
            }
        }
    }

    /// `|self - rhs|`.
    pub fn abs_diff(self, rhs: ExtReal) -> ExtReal {
        self.checked_sub(rhs)
            .or_else(|| rhs.checked_sub(self))
            .unwrap_or(ExtReal::ZERO)
    }

    pub fn powi(self, mut n: u64) -> ExtReal {
        let mut base = self;
        let mut acc = ExtReal::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc *= base;
            }
            n >>= 1;
            if n > 0 {
                base = base * base;
            }
        }
        acc
    }

    pub fn recip(self) -> ExtReal {
        ExtReal::ONE / self
    }

    pub fn min(self, rhs: ExtReal) -> ExtReal {
        if rhs < self {
            rhs
        } else {
            self
        }
    }

    pub fn max(self, rhs: ExtReal) -> ExtReal {
        if rhs > self {
            rhs
        } else {
            self
        }
    }

    /// Smallest integer `>= self`.
    pub fn ceil(self) -> ExtReal {
        if self.is_zero() || self.is_infinite() || self.exp >= 52 {
            self
        } else {
            ExtReal::from_f64(self.to_f64().ceil())
        }
    }

    /// Relative closeness; `inf` only equals `inf`.
    pub fn approx_eq(self, rhs: ExtReal, rel: f64) -> bool {
        if self.is_infinite() || rhs.is_infinite() {
            return self == rhs;
        }
        let diff = self.abs_diff(rhs);
        diff <= self.max(rhs) * ExtReal::from_f64(rel)
    }
}

impl Default for ExtReal {
    fn default() -> Self {
        ExtReal::ZERO
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::from_f64(v)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let class = |v: &ExtReal| {
            if v.is_zero() {
                0
            } else if v.is_infinite() {
                2
            } else {
                1
            }
        };
        match class(self).cmp(&class(other)) {
            Ordering::Equal if class(self) == 1 => Some(
                self.exp
                    .cmp(&other.exp)
                    .then(self.sig.partial_cmp(&other.sig)?),
            ),
            ord => Some(ord),
        }
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;

    fn mul(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() || rhs.is_zero() {
            assert!(
                self.is_finite() && rhs.is_finite(),
                "0 * inf is undefined for ExtReal"
            );
            return ExtReal::ZERO;
        }
        if self.is_infinite() || rhs.is_infinite() {
            return ExtReal::INFINITY;
        }
        let m = self.sig * rhs.sig;
        if m >= 2.0 {
            ExtReal::normalized(m * 0.5, self.exp + rhs.exp + 1)
        } else {
            ExtReal::normalized(m, self.exp + rhs.exp)
        }
    }
}

impl MulAssign for ExtReal {
    fn mul_assign(&mut self, rhs: ExtReal) {
        *self = *self * rhs;
    }
}

impl Div for ExtReal {
    type Output = ExtReal;

    fn div(self, rhs: ExtReal) -> ExtReal {
        assert!(
            !(self.is_zero() && rhs.is_zero()) && !(self.is_infinite() && rhs.is_infinite()),
            "indeterminate ExtReal quotient"
        );
        if self.is_zero() || rhs.is_infinite() {
            return ExtReal::ZERO;
        }
        if rhs.is_zero() || self.is_infinite() {
            return ExtReal::INFINITY;
        }
        let m = self.sig / rhs.sig;
        if m < 1.0 {
            ExtReal::normalized(m * 2.0, self.exp - rhs.exp - 1)
        } else {
            ExtReal::normalized(m, self.exp - rhs.exp)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_infinite() || rhs.is_infinite() {
            return ExtReal::INFINITY;
        }
        let (big, small) = if self >= rhs { (self, rhs) } else { (rhs, self) };
        if small.is_zero() {
            return big;
        }
        let shift = big.exp - small.exp;
        if shift > 64 {
            return big;
        }
        ExtReal::from_parts(big.sig + small.sig * pow2(-shift), big.exp)
    }
}

impl AddAssign for ExtReal {
    fn add_assign(&mut self, rhs: ExtReal) {
        *self = *self + rhs;
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> Self {
        iter.fold(ExtReal::ZERO, Add::add)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        if self.is_infinite() {
            return write!(f, "inf");
        }
        let v = self.to_f64();
        if v.is_normal() {
            return write!(f, "{v:e}");
        }
        let l10 = self.log2() * std::f64::consts::LOG10_2;
        let e10 = l10.floor();
        write!(f, "{:.6}e{}", 10f64.powf(l10 - e10), e10 as i64)
    }
}

/// Lossless text form: `"<significand>p<exponent>"`, `"0"` or `"inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_exact_string())
    }
}

impl ExtReal {
    pub fn to_exact_string(self) -> String {
        if self.is_zero() {
            "0".to_string()
        } else if self.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:?}p{}", self.sig, self.exp)
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed extended real `{0}`")]
pub struct ParseExtRealError(String);

impl FromStr for ExtReal {
    type Err = ParseExtRealError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseExtRealError(s.to_string());
        match s.trim() {
            "inf" => Ok(ExtReal::INFINITY),
            t => {
                if let Some((m, e)) = t.split_once('p') {
                    let m: f64 = m.parse().map_err(|_| bad())?;
                    let e: i64 = e.parse().map_err(|_| bad())?;
                    if m < 0.0 || m.is_nan() {
                        return Err(bad());
                    }
                    Ok(ExtReal::from_parts(m, e))
                } else {
                    let v: f64 = t.parse().map_err(|_| bad())?;
                    if v < 0.0 || v.is_nan() {
                        return Err(bad());
                    }
                    Ok(ExtReal::from_f64(v))
                }
            }
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) if v >= 0.0 => Ok(ExtReal::from_f64(v)),
            Repr::Num(v) => Err(serde::de::Error::custom(format!(
                "extended reals are nonnegative, got {v}"
            ))),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Signed accumulator over [`ExtReal`] magnitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtSum {
    pub positive: ExtReal,
    pub negative: ExtReal,
}

impl ExtSum {
    pub fn add_signed(&mut self, magnitude: ExtReal, negative: bool) {
        if negative {
            self.negative += magnitude;
        } else {
            self.positive += magnitude;
        }
    }

    pub fn merge(self, other: ExtSum) -> ExtSum {
        ExtSum {
            positive: self.positive + other.positive,
            negative: self.negative + other.negative,
        }
    }

    /// `(is_negative, |total|)`.
    pub fn net(self) -> (bool, ExtReal) {
        match self.positive.checked_sub(self.negative) {
            Some(m) => (false, m),
            None => (true, self.negative.abs_diff(self.positive)),
        }
    }

    /// Whether the signed total is at least `bound`.
    pub fn at_least(self, bound: ExtReal) -> bool {
        self.positive >= self.negative + bound
    }

    pub fn to_f64(self) -> f64 {
        let (neg, m) = self.net();
        if neg {
            -m.to_f64()
        } else {
            m.to_f64()
        }
    }

    /// `log2 |total|`, with `-inf` for zero.
    pub fn log2_abs(self) -> f64 {
        self.net().1.log2()
    }
}
