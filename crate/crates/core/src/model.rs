//! Alphabets, source distributions, distortion measures and levels.
//!
//! Symbols are `0..J` / `0..K` in code and in every serialized format.

use crate::error::{invalid, Error, Result};
use crate::exact::{parse_decimal, rational_from_f64, to_f64, Halfspace};
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabets {
    pub j: usize,
    pub k: usize,
}

impl Alphabets {
    pub fn new(j: usize, k: usize) -> Result<Self> {
        if j == 0 || k == 0 {
            return invalid("alphabet sizes must be positive");
        }
        if j > 255 || k > 255 {
            return invalid("alphabet sizes above 255 are not supported");
        }
        Ok(Alphabets { j, k })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDistribution {
    p: Vec<f64>,
}

impl SourceDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return invalid("empty distribution");
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("probabilities must be finite and nonnegative");
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return invalid(format!("probabilities sum to {s}, not 1"));
        }
        Ok(SourceDistribution { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// A normalized J×K distortion matrix (every row has an exact zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMeasure {
    j: usize,
    k: usize,
    exact: Vec<BigRational>,
    rho: Vec<f64>,
    offsets: Vec<BigRational>,
    rho_max: BigRational,
}

impl DistortionMeasure {
    /// Normalizes `raw` (row-major, J rows of K exact values) by subtracting
    /// row minima. `rho_max` defaults to the largest normalized entry (or 1
    /// when every entry is zero).
    pub fn normalize(j: usize, k: usize, raw: Vec<BigRational>, rho_max: Option<BigRational>) -> Result<Self> {
        Alphabets::new(j, k)?;
        if raw.len() != j * k {
            return invalid(format!("distortion matrix has {} entries, expected {}", raw.len(), j * k));
        }
        if raw.iter().any(|v| v.is_negative()) {
            return invalid("distortion entries must be nonnegative");
        }
        let mut exact = Vec::with_capacity(j * k);
        let mut offsets = Vec::with_capacity(j);
        for row in raw.chunks(k) {
            let m = row.iter().min().unwrap().clone();
            exact.extend(row.iter().map(|v| v - &m));
            offsets.push(m);
        }
        let largest = exact.iter().max().unwrap().clone();
        let rho_max = match rho_max {
            Some(r) => {
                if !r.is_positive() {
                    return invalid("rho_max must be positive");
                }
                if largest > r {
                    return invalid("a normalized distortion entry exceeds rho_max");
                }
                r
            }
            None if largest.is_zero() => BigRational::from_integer(1.into()),
            None => largest,
        };
        let rho = exact.iter().map(to_f64).collect();
        Ok(DistortionMeasure { j, k, exact, rho, offsets, rho_max })
    }

    pub fn from_f64(j: usize, k: usize, raw: &[f64], rho_max: Option<f64>) -> Result<Self> {
        let r = raw.iter().map(|&v| rational_from_f64(v)).collect::<Result<Vec<_>>>()?;
        let m = rho_max.map(rational_from_f64).transpose()?;
        Self::normalize(j, k, r, m)
    }

    pub fn from_decimal_strs(j: usize, k: usize, raw: &[&str], rho_max: Option<&str>) -> Result<Self> {
        let r = raw.iter().map(|s| parse_decimal(s)).collect::<Result<Vec<_>>>()?;
        let m = rho_max.map(parse_decimal).transpose()?;
        Self::normalize(j, k, r, m)
    }

    /// Hamming distortion on a common alphabet of size `m`.
    pub fn hamming(m: usize) -> Self {
        let raw: Vec<f64> = (0..m * m).map(|i| if i / m == i % m { 0.0 } else { 1.0 }).collect();
        Self::from_f64(m, m, &raw, Some(1.0)).unwrap()
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.rho[a * self.k + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn exact(&self) -> &[BigRational] {
        &self.exact
    }

    pub fn exact_get(&self, a: usize, b: usize) -> &BigRational {
        &self.exact[a * self.k + b]
    }

    pub fn offsets(&self) -> &[BigRational] {
        &self.offsets
    }

    pub fn rho_max(&self) -> f64 {
        to_f64(&self.rho_max)
    }

    pub fn rho_max_exact(&self) -> &BigRational {
        &self.rho_max
    }

    /// Raw matrix as given before normalization.
    pub fn raw(&self) -> Vec<BigRational> {
        self.exact.iter().enumerate().map(|(i, v)| v + &self.offsets[i / self.k]).collect()
    }

    /// First column achieving the row minimum (zero) of row `a`.
    pub fn zero_column(&self, a: usize) -> usize {
        (0..self.k).find(|&b| self.exact[a * self.k + b].is_zero()).unwrap()
    }

    /// Symbol-wise zero-distortion reconstruction of `x`.
    pub fn zero_word(&self, x: &[u8]) -> Vec<u8> {
        x.iter().map(|&a| self.zero_column(a as usize) as u8).collect()
    }

    /// Exact integer predicate for `ρ_n(x, y) ≤ d` at blocklength `n`.
    pub fn halfspace(&self, d: &DistortionLevel, n: usize) -> Result<Halfspace> {
        Halfspace::from_rationals(self.j, self.k, &self.exact, d.exact(), n)
    }

    /// Same measure with every entry (and `rho_max`) multiplied by `c > 0`.
    pub fn scaled(&self, c: &BigRational) -> Result<Self> {
        if !c.is_positive() {
            return invalid("scale factor must be positive");
        }
        let raw = self.exact.iter().map(|v| v * c).collect();
        Self::normalize(self.j, self.k, raw, Some(&self.rho_max * c))
    }

    pub fn check_word(&self, x: &[u8], y: &[u8]) -> Result<()> {
        if x.len() != y.len() {
            return invalid(format!("length mismatch: {} vs {}", x.len(), y.len()));
        }
        if x.iter().any(|&a| a as usize >= self.j) || y.iter().any(|&b| b as usize >= self.k) {
            return invalid("symbol out of range");
        }
        Ok(())
    }
}

/// Re-applies row-min normalization to an already normalized matrix.
pub fn normalize_distortion(raw: &[f64], j: usize, k: usize) -> Result<(DistortionMeasure, Vec<f64>)> {
    if raw.iter().any(|v| !v.is_finite()) {
        return invalid("distortion entries must be finite");
    }
    let m = DistortionMeasure::from_f64(j, k, raw, None)?;
    let off = m.offsets.iter().map(to_f64).collect();
    Ok((m, off))
}

/// Positive distortion level `d`, kept exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionLevel {
    d: f64,
    exact: BigRational,
}

impl DistortionLevel {
    pub fn new(exact: BigRational) -> Result<Self> {
        if !exact.is_positive() {
            return invalid("distortion level must be positive");
        }
        Ok(DistortionLevel { d: to_f64(&exact), exact })
    }

    pub fn from_f64(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidInput(format!("distortion level must be positive, got {d}")));
        }
        Self::new(rational_from_f64(d)?)
    }

    pub fn from_decimal(s: &str) -> Result<Self> {
        Self::new(parse_decimal(s)?)
    }

    pub fn value(&self) -> f64 {
        self.d
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn scaled(&self, c: &BigRational) -> Result<Self> {
        Self::new(&self.exact * c)
    }
}

/// `(1/n) Σ ρ(x_i, y_i)`.
pub fn distortion_n_fold(x: &[u8], y: &[u8], rho: &DistortionMeasure) -> Result<f64> {
    rho.check_word(x, y)?;
    if x.is_empty() {
        return invalid("empty words");
    }
    let s: f64 = x.iter().zip(y).map(|(&a, &b)| rho.get(a as usize, b as usize)).sum();
    Ok(s / x.len() as f64)
}

/// Exact version of [`distortion_n_fold`].
pub fn distortion_n_fold_exact(x: &[u8], y: &[u8], rho: &DistortionMeasure) -> Result<BigRational> {
    rho.check_word(x, y)?;
    if x.is_empty() {
        return invalid("empty words");
    }
    let mut s = BigRational::zero();
    for (&a, &b) in x.iter().zip(y) {
        s += rho.exact_get(a as usize, b as usize);
    }
    Ok(s / BigRational::from_integer((x.len() as i64).into()))
}

/// `true` iff `ρ_n(x, y) ≤ d`, decided exactly.
pub fn within(x: &[u8], y: &[u8], rho: &DistortionMeasure, d: &DistortionLevel) -> Result<bool> {
    Ok(distortion_n_fold_exact(x, y, rho)? <= *d.exact())
}

/// `Σ_{j,k} p(j) W(k|j) ρ(j,k)` for a row-major row-stochastic `w`.
pub fn expected_distortion(p: &SourceDistribution, w: &[f64], rho: &DistortionMeasure) -> Result<f64> {
    let (j, k) = (rho.j(), rho.k());
    if p.len() != j || w.len() != j * k {
        return invalid("dimension mismatch");
    }
    for row in w.chunks(k) {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return invalid("channel rows must be probability vectors");
        }
    }
    let mut s = 0.0;
    for a in 0..j {
        for b in 0..k {
            s += p.probs()[a] * w[a * k + b] * rho.get(a, b);
        }
    }
    Ok(s)
}
