//! Exact rationals for distortion values and the integer halfspace used by
//! every `ρ_n(x, y) ≤ d` predicate.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Parses a plain decimal such as `"0.125"`, `"3"`, `"-2.5"` or `"1e-3"` exactly.
pub fn parse_decimal(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let bad = || Error::InvalidInput(format!("not a decimal number: '{s}'"));
    if t.is_empty() {
        return Err(bad());
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(p) => (&t[..p], t[p + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int, frac) = match mant.find('.') {
        Some(p) => (&mant[..p], &mant[p + 1..]),
        None => (mant, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| bad())? };
    if neg {
        num = -num;
    }
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10u32);
    Ok(if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Exact value of a finite `f64`.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::InvalidInput(format!("non-finite value {x}")))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Finite decimal expansion `(digits, scale)` with value `digits / 10^scale`,
/// if the denominator has no prime factors other than 2 and 5.
pub fn to_scaled_decimal(r: &BigRational) -> Option<(BigInt, u32)> {
    let mut den = r.denom().clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let (mut a, mut b) = (0u32, 0u32);
    while den.is_even() {
        den /= &two;
        a += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        b += 1;
    }
    if !den.is_one() {
        return None;
    }
    let s = a.max(b);
    let scaled = r * BigRational::from_integer(num_traits::pow(BigInt::from(10u32), s as usize));
    debug_assert!(scaled.is_integer());
    Some((scaled.to_integer(), s))
}

pub fn from_scaled_decimal(digits: BigInt, scale: u32) -> BigRational {
    BigRational::new(digits, num_traits::pow(BigInt::from(10u32), scale as usize))
}

/// Integer halfspace `Σ_i w[x_i][y_i] ≤ limit` over words of a fixed length.
///
/// Weights and limit are reduced by their common gcd, so two halfspaces that
/// agree on every word after scaling compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Halfspace {
    pub j: usize,
    pub k: usize,
    pub w: Vec<i128>,
    pub limit: i128,
}

const MAX_WEIGHT_BITS: u64 = 100;

impl Halfspace {
    /// `Σ ρ(x_i, y_i) ≤ n·d` with exact rational `ρ` (row-major J×K) and `d`.
    pub fn from_rationals(j: usize, k: usize, rho: &[BigRational], d: &BigRational, n: usize) -> Result<Self> {
        let mut l = d.denom().clone();
        for r in rho {
            l = l.lcm(r.denom());
        }
        let lr = BigRational::from_integer(l);
        let mut w = Vec::with_capacity(rho.len());
        for r in rho {
            w.push((r * &lr).to_integer());
        }
        let lim = (d * &lr).to_integer() * BigInt::from(n);
        Self::from_big(j, k, w, lim, n)
    }

    /// Builds a canonical halfspace for words of length `n`.
    pub fn from_big(j: usize, k: usize, w: Vec<BigInt>, limit: BigInt, n: usize) -> Result<Self> {
        if w.iter().any(|v| v.is_negative()) {
            return Err(Error::InvalidInput("negative distortion weight".into()));
        }
        let mut g = BigInt::zero();
        for v in &w {
            g = g.gcd(v);
        }
        let (w, limit) = if g.is_zero() {
            (w, limit)
        } else {
            (w.iter().map(|v| v / &g).collect::<Vec<_>>(), limit.div_floor(&g))
        };
        if w.iter().any(|v| v.bits() > MAX_WEIGHT_BITS) {
            return Err(Error::Size("distortion values need more than 100 bits after integer scaling".into()));
        }
        let w: Vec<i128> = w.iter().map(|v| v.to_i128().unwrap()).collect();
        let max_sum = w.iter().copied().max().unwrap_or(0) * n as i128;
        let limit = if limit.is_negative() {
            -1
        } else {
            match limit.to_i128() {
                Some(v) => v.min(max_sum),
                None => max_sum,
            }
        };
        Ok(Halfspace { j, k, w, limit })
    }

    #[inline]
    pub fn weight(&self, a: usize, b: usize) -> i128 {
        self.w[a * self.k + b]
    }

    /// Sum of weights along a pair of words.
    pub fn sum(&self, x: &[u8], y: &[u8]) -> i128 {
        x.iter().zip(y).map(|(&a, &b)| self.weight(a as usize, b as usize)).sum()
    }

    pub fn contains(&self, x: &[u8], y: &[u8]) -> bool {
        self.sum(x, y) <= self.limit
    }

    /// Halfspace test on a joint type given as row-major J×K counts.
    pub fn contains_joint(&self, counts: &[u32]) -> bool {
        let s: i128 = counts.iter().zip(&self.w).map(|(&c, &w)| c as i128 * w).sum();
        s <= self.limit
    }
}
