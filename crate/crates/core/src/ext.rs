//! Exact extended-real arithmetic.
//!
//! All solver-facing quantities (probabilities, states, constraint levels,
//! values) are `BigRational`s extended with `-inf` and `+inf`. Working in
//! exact rationals is what lets the backward induction, the brute-force
//! oracle, and the audit agree with tolerance zero instead of "close
//! enough".
//!
//! Conventions, used consistently everywhere:
//!
//! - an expectation whose positive and negative parts both diverge is `-inf`;
//! - `-inf` absorbs in sums, `max(-inf, x) = x`;
//! - the supremum over an empty set is `-inf` (an infeasible value *is* `-inf`);
//! - `0 * inf = 0` (zero-mass branches never contribute).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Exact rational scalar.
pub type Rat = BigRational;

/// `n / d` as an exact rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer as an exact rational.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact rational value of a finite `f64`. Every finite float is a dyadic
/// rational, so no precision is lost. Returns `None` for NaN or infinities.
pub fn rat_from_f64(x: f64) -> Option<Rat> {
    Rat::from_float(x)
}

/// Nearest `f64` rendering of a rational (for reports only; never fed back
/// into exact computations).
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Renders a rational exactly: as an integer, as a terminating decimal when
/// the denominator is of the form `2^a * 5^b`, otherwise as `n/d`.
pub fn fmt_rat(r: &Rat) -> String {
    let denom = r.denom();
    if denom.is_one() {
        return r.numer().to_string();
    }
    // Count factors of 2 and 5 in the denominator.
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut rest = denom.clone();
    let mut a = 0u32;
    let mut b = 0u32;
    while (&rest % &two).is_zero() {
        rest /= &two;
        a += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        b += 1;
    }
    if !rest.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let k = a.max(b);
    // r = numer / (2^a 5^b); scale to an integer over 10^k.
    let scale = BigInt::from(2).pow(k - a) * BigInt::from(5).pow(k - b);
    let scaled = r.numer() * &scale;
    let neg = scaled.is_negative();
    let digits = scaled.magnitude().to_string();
    let k = k as usize;
    let (int_part, frac_part) = if digits.len() > k {
        let split = digits.len() - k;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{:0>width$}", digits, width = k))
    };
    format!("{}{}.{}", if neg { "-" } else { "" }, int_part, frac_part)
}

/// An extended real: a rational, or one of the two infinities.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ext {
    NegInf,
    Finite(Rat),
    PosInf,
}

impl Ext {
    pub fn zero() -> Self {
        Ext::Finite(Rat::zero())
    }

    pub fn one() -> Self {
        Ext::Finite(Rat::one())
    }

    pub fn from_int(n: i64) -> Self {
        Ext::Finite(rat_int(n))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Ext::Finite(_))
    }

    pub fn is_neg_inf(&self) -> bool {
        matches!(self, Ext::NegInf)
    }

    pub fn as_finite(&self) -> Option<&Rat> {
        match self {
            Ext::Finite(r) => Some(r),
            _ => None,
        }
    }

    /// Sum with `-inf` absorbing; `+inf + -inf = -inf` by the expectation
    /// convention.
    pub fn add(&self, other: &Ext) -> Ext {
        match (self, other) {
            (Ext::NegInf, _) | (_, Ext::NegInf) => Ext::NegInf,
            (Ext::PosInf, _) | (_, Ext::PosInf) => Ext::PosInf,
            (Ext::Finite(a), Ext::Finite(b)) => Ext::Finite(a + b),
        }
    }

    /// Scales by a nonnegative finite weight, with `0 * inf = 0`.
    pub fn mul_weight(&self, w: &Rat) -> Ext {
        debug_assert!(!w.is_negative(), "weights must be nonnegative");
        if w.is_zero() {
            return Ext::zero();
        }
        match self {
            Ext::NegInf => Ext::NegInf,
            Ext::PosInf => Ext::PosInf,
            Ext::Finite(r) => Ext::Finite(r * w),
        }
    }

    pub fn neg(&self) -> Ext {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Finite(r) => Ext::Finite(-r),
        }
    }

    /// `c - self` for finite `c`; used for the success/failure reflection of
    /// budget processes.
    pub fn sub_from(&self, c: &Rat) -> Ext {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Finite(r) => Ext::Finite(c - r),
        }
    }

    /// By-reference maximum (`Ord::max` would consume both sides).
    pub fn max_with(&self, other: &Ext) -> Ext {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// By-reference minimum.
    pub fn min_with(&self, other: &Ext) -> Ext {
        if self <= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Ext::NegInf => f64::NEG_INFINITY,
            Ext::PosInf => f64::INFINITY,
            Ext::Finite(r) => rat_to_f64(r),
        }
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ext {
    fn cmp(&self, other: &Self) -> Ordering {
        use Ext::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::NegInf => write!(f, "-inf"),
            Ext::PosInf => write!(f, "inf"),
            Ext::Finite(r) => write!(f, "{}", fmt_rat(r)),
        }
    }
}

impl From<Rat> for Ext {
    fn from(r: Rat) -> Self {
        Ext::Finite(r)
    }
}

/// Mass-weighted sum of extended reals under the expectation convention:
/// if both the positive and negative parts diverge, the result is `-inf`.
/// Weights must be nonnegative; zero-weight terms are skipped outright.
pub fn weighted_sum<I>(terms: I) -> Ext
where
    I: IntoIterator<Item = (Rat, Ext)>,
{
    let mut acc = Rat::zero();
    let mut pos_inf = false;
    let mut neg_inf = false;
    for (w, v) in terms {
        debug_assert!(!w.is_negative(), "weights must be nonnegative");
        if w.is_zero() {
            continue;
        }
        match v {
            Ext::PosInf => pos_inf = true,
            Ext::NegInf => neg_inf = true,
            Ext::Finite(r) => acc += r * w,
        }
    }
    match (pos_inf, neg_inf) {
        (_, true) => Ext::NegInf,
        (true, false) => Ext::PosInf,
        (false, false) => Ext::Finite(acc),
    }
}
