//! n-types, joint n-types, type classes and their probabilities.

use crate::error::{invalid, Error, Result};
use num_bigint::BigUint;
use num_traits::One;
use statrs::function::factorial::ln_factorial;

/// Enumeration guard on the number of types.
pub const MAX_TYPES: u128 = 10_000_000;

/// An n-type, stored as counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NType {
    pub counts: Vec<u32>,
}

impl NType {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || counts.iter().all(|&c| c == 0) {
            return invalid("a type needs a positive blocklength");
        }
        Ok(NType { counts })
    }

    pub fn n(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn freqs(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

pub fn type_of(x: &[u8], m: usize) -> Result<NType> {
    let mut c = vec![0u32; m];
    for &s in x {
        if s as usize >= m {
            return invalid(format!("symbol {s} out of range for alphabet size {m}"));
        }
        c[s as usize] += 1;
    }
    NType::new(c)
}

pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(r)
}

pub fn binomial_big(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut r = BigUint::one();
    for i in 0..k {
        r = r * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    r
}

/// Number of compositions of `r` into `parts` nonnegative parts.
fn compositions(r: u64, parts: usize) -> u128 {
    if parts == 0 {
        return (r == 0) as u128;
    }
    binomial_u128(r + parts as u64 - 1, parts as u64 - 1).expect("composition count overflow")
}

/// `|P_n|` over an alphabet of size `m`: `C(n+m−1, m−1)`.
pub fn num_types(n: u32, m: usize) -> Result<u128> {
    if m == 0 {
        return invalid("alphabet size must be positive");
    }
    binomial_u128(n as u64 + m as u64 - 1, m as u64 - 1)
        .ok_or_else(|| Error::Size(format!("type count for n={n}, m={m} overflows")))
}

/// Lexicographic rank of a count vector among all types with the same n.
pub fn rank(counts: &[u32]) -> u128 {
    let m = counts.len();
    let mut r: u64 = counts.iter().map(|&c| c as u64).sum();
    let mut idx = 0u128;
    for i in 0..m.saturating_sub(1) {
        for v in 0..counts[i] as u64 {
            idx += compositions(r - v, m - i - 1);
        }
        r -= counts[i] as u64;
    }
    idx
}

/// Inverse of [`rank`].
pub fn unrank(mut idx: u128, n: u32, m: usize) -> Result<Vec<u32>> {
    if idx >= num_types(n, m)? {
        return Err(Error::Domain(format!("type rank {idx} out of range")));
    }
    let mut out = vec![0u32; m];
    let mut r = n as u64;
    for (i, slot) in out.iter_mut().enumerate().take(m - 1) {
        let mut v = 0u64;
        loop {
            let c = compositions(r - v, m - i - 1);
            if idx < c {
                break;
            }
            idx -= c;
            v += 1;
        }
        *slot = v as u32;
        r -= v;
    }
    out[m - 1] = r as u32;
    Ok(out)
}

/// All types of blocklength `n` over `m` symbols in lexicographic order.
pub fn enumerate_types(n: u32, m: usize) -> Result<Vec<Vec<u32>>> {
    let total = num_types(n, m)?;
    if total > MAX_TYPES {
        return Err(Error::Size(format!(
            "{total} types for n={n}, m={m}; reduce n or the alphabet (limit {MAX_TYPES})"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur = vec![0u32; m];
    fn rec(i: usize, rem: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let m = cur.len();
        if i == m - 1 {
            cur[i] = rem;
            out.push(cur.clone());
            return;
        }
        for v in 0..=rem {
            cur[i] = v;
            rec(i + 1, rem - v, cur, out);
        }
    }
    rec(0, n, &mut cur, &mut out);
    Ok(out)
}

/// Multinomial coefficient `n! / ∏ c!`.
pub fn type_class_size(counts: &[u32]) -> BigUint {
    let mut r = BigUint::one();
    let mut acc = 0u64;
    for &c in counts {
        for i in 1..=c as u64 {
            acc += 1;
            r = r * BigUint::from(acc) / BigUint::from(i);
        }
    }
    r
}

pub fn class_size_u64(counts: &[u32]) -> Option<u64> {
    let mut r: u128 = 1;
    let mut acc = 0u128;
    for &c in counts {
        for i in 1..=c as u128 {
            acc += 1;
            r = r.checked_mul(acc)? / i;
        }
    }
    u64::try_from(r).ok()
}

pub fn ln_class_size(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    ln_factorial(n) - counts.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>()
}

/// Entropy in nats of a count vector's empirical distribution.
pub fn entropy_counts(counts: &[u32]) -> f64 {
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// `D(t‖p)` in nats with `0 ln 0 = 0`; infinite when `t` charges a null symbol of `p`.
pub fn kl_divergence(t: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in t.iter().zip(p) {
        if a > 0.0 {
            if b == 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s
}

/// `ln p^n(T(t))`, `-inf` when impossible.
pub fn ln_type_probability(p: &[f64], counts: &[u32]) -> f64 {
    let mut s = ln_class_size(counts);
    for (&c, &q) in counts.iter().zip(p) {
        if c > 0 {
            if q == 0.0 {
                return f64::NEG_INFINITY;
            }
            s += c as f64 * q.ln();
        }
    }
    s
}

/// `|T(t)| ∏ p(j)^{n t(j)}`.
pub fn type_probability(p: &[f64], counts: &[u32]) -> f64 {
    ln_type_probability(p, counts).exp()
}

/// Mass of the types with `‖t − p‖₂ > a √(ln n / n)`.
pub fn tail_mass(p: &[f64], n: u32, a: f64) -> Result<f64> {
    let jj = p.len() as f64;
    if a * a < 2.0 + 2.0 * jj - 1e-9 {
        return Err(Error::Precondition(format!("a² = {} < 2 + 2J", a * a)));
    }
    let radius = a * ((n as f64).ln() / n as f64).sqrt();
    let mut s = 0.0;
    for c in enumerate_types(n, p.len())? {
        let d2: f64 = c.iter().zip(p).map(|(&ci, &pi)| (ci as f64 / n as f64 - pi).powi(2)).sum();
        if d2.sqrt() > radius {
            s += type_probability(p, &c);
        }
    }
    Ok(s)
}

/// Lexicographic rank of `x` within its type class (a multiset permutation).
pub fn perm_rank(x: &[u8], counts: &[u32]) -> u64 {
    let mut c: Vec<u64> = counts.iter().map(|&v| v as u64).collect();
    let mut rem = x.len() as u64;
    // number of distinct arrangements of the remaining multiset
    let mut total: u128 = class_size_u64(counts).expect("class too large to rank") as u128;
    let mut r: u128 = 0;
    for &s in x {
        let s = s as usize;
        for &cv in c.iter().take(s) {
            r += total * cv as u128 / rem as u128;
        }
        total = total * c[s] as u128 / rem as u128;
        c[s] -= 1;
        rem -= 1;
    }
    r as u64
}

/// Inverse of [`perm_rank`].
pub fn perm_unrank(mut idx: u64, counts: &[u32]) -> Vec<u8> {
    let mut c: Vec<u64> = counts.iter().map(|&v| v as u64).collect();
    let n: u64 = c.iter().sum();
    let mut total: u128 = class_size_u64(counts).expect("class too large to unrank") as u128;
    let mut out = Vec::with_capacity(n as usize);
    let mut rem = n;
    for _ in 0..n {
        for v in 0..c.len() {
            if c[v] == 0 {
                continue;
            }
            let sub = total * c[v] as u128 / rem as u128;
            if (idx as u128) < sub {
                out.push(v as u8);
                total = sub;
                c[v] -= 1;
                break;
            }
            idx -= sub as u64;
        }
        rem -= 1;
    }
    out
}

/// Advances `w` to the next multiset permutation in lexicographic order.
pub fn next_permutation(w: &mut [u8]) -> bool {
    if w.len() < 2 {
        return false;
    }
    let mut i = w.len() - 1;
    while i > 0 && w[i - 1] >= w[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = w.len() - 1;
    while w[j] <= w[i - 1] {
        j -= 1;
    }
    w.swap(i - 1, j);
    w[i..].reverse();
    true
}

/// Smallest word of a type class.
pub fn first_member(counts: &[u32]) -> Vec<u8> {
    let mut w = Vec::new();
    for (s, &c) in counts.iter().enumerate() {
        w.extend(std::iter::repeat_n(s as u8, c as usize));
    }
    w
}

/// The n-type closest to `p` by largest-remainder rounding (ties to the smaller index).
pub fn nearest_type(p: &[f64], n: u32) -> Vec<u32> {
    let mut c: Vec<u32> = p.iter().map(|&v| (v * n as f64).floor() as u32).collect();
    let mut rem: i64 = n as i64 - c.iter().map(|&v| v as i64).sum::<i64>();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = p[a] * n as f64 - c[a] as f64;
        let fb = p[b] * n as f64 - c[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut i = 0;
    while rem > 0 {
        c[order[i % p.len()]] += 1;
        rem -= 1;
        i += 1;
    }
    c
}
