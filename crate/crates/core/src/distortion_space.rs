//! Quantized distortion measures, dichotomy fingerprints over joint types,
//! and tables of equivalence classes of `(ρ, d)` pairs.

use crate::bits::ceil_log2;
use crate::error::{invalid, Error, Result};
use crate::exact::{from_scaled_decimal, rational_from_f64, to_scaled_decimal, Halfspace};
use crate::model::{DistortionLevel, DistortionMeasure};
use crate::types::{binomial_big, enumerate_types, num_types};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::HashMap;

/// `[ρ]` on the grid `m·ρ_max/(q n)`, `q = ⌈ρ_max/d⌉`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedDistortion {
    pub j: usize,
    pub k: usize,
    pub n: usize,
    pub q: u64,
    pub digits: Vec<u64>,
    pub rho_max: BigRational,
}

pub fn grid_q(rho_max: &BigRational, d: &BigRational) -> Result<u64> {
    (rho_max / d).ceil().to_integer().to_u64().ok_or_else(|| Error::Size("rho_max/d too large".into()))
}

pub fn quantize_distortion(rho: &DistortionMeasure, d: &DistortionLevel, n: usize) -> Result<QuantizedDistortion> {
    quantize_with(rho, rho.rho_max_exact(), d, n)
}

/// Quantizes against an externally fixed `rho_max` (shared by encoder and decoder).
pub fn quantize_with(
    rho: &DistortionMeasure,
    rho_max: &BigRational,
    d: &DistortionLevel,
    n: usize,
) -> Result<QuantizedDistortion> {
    if n == 0 {
        return invalid("n must be positive");
    }
    if rho.exact().iter().any(|v| v > rho_max) {
        return invalid("distortion entry exceeds rho_max");
    }
    let q = grid_q(rho_max, d.exact())?;
    let scale = BigRational::from_integer(BigInt::from(q) * BigInt::from(n)) / rho_max;
    let digits = rho
        .exact()
        .iter()
        .map(|v| (v * &scale).floor().to_integer().to_u64().unwrap())
        .collect();
    Ok(QuantizedDistortion { j: rho.j(), k: rho.k(), n, q, digits, rho_max: rho_max.clone() })
}

impl QuantizedDistortion {
    pub fn value(&self, a: usize, b: usize) -> BigRational {
        BigRational::from_integer(self.digits[a * self.k + b].into()) * &self.rho_max
            / BigRational::from_integer(BigInt::from(self.q) * BigInt::from(self.n))
    }

    /// Grid step `ρ_max/(q n)`.
    pub fn step(&self) -> BigRational {
        &self.rho_max / BigRational::from_integer(BigInt::from(self.q) * BigInt::from(self.n))
    }

    /// `Σ [ρ](x_i, y_i) ≤ n d` as an integer halfspace over the digits.
    pub fn halfspace(&self, d: &DistortionLevel) -> Result<Halfspace> {
        let n = BigInt::from(self.n);
        let lim = (BigRational::from_integer(&n * &n * BigInt::from(self.q)) * d.exact() / &self.rho_max)
            .floor()
            .to_integer();
        Halfspace::from_big(self.j, self.k, self.digits.iter().map(|&v| BigInt::from(v)).collect(), lim, self.n)
    }

    /// Number of grid points per entry, `q n + 1`.
    pub fn radix(&self) -> u64 {
        self.q * self.n as u64 + 1
    }
}

/// Labels of the ranked joint types, bit set iff the type lies in the halfspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub len: usize,
    pub words: Vec<u64>,
}

impl Fingerprint {
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Fingerprint of a halfspace at blocklength `n`, walking joint types in lexicographic order.
pub fn fingerprint_of(h: &Halfspace, n: usize) -> Result<Fingerprint> {
    let m = h.j * h.k;
    let total = num_types(n as u32, m)?;
    if total > 50_000_000 {
        return Err(Error::Size(format!("{total} joint types")));
    }
    let len = total as usize;
    let mut words = vec![0u64; len.div_ceil(64)];
    let mut idx = 0usize;
    fn rec(i: usize, rem: i128, s: i128, h: &Halfspace, words: &mut [u64], idx: &mut usize) {
        let m = h.w.len();
        if i == m - 1 {
            if s + rem * h.w[i] <= h.limit {
                words[*idx / 64] |= 1 << (*idx % 64);
            }
            *idx += 1;
            return;
        }
        for v in 0..=rem {
            rec(i + 1, rem - v, s + v * h.w[i], h, words, idx);
        }
    }
    rec(0, n as i128, 0, h, &mut words, &mut idx);
    debug_assert_eq!(idx, len);
    Ok(Fingerprint { len, words })
}

pub fn fingerprint(rho: &DistortionMeasure, d: &DistortionLevel, n: usize) -> Result<Fingerprint> {
    fingerprint_of(&rho.halfspace(d, n)?, n)
}

/// `min(Σ_{i≤JK+1} C(M, i), 2^M)` with `M = |P_n(A×B)|`.
pub fn growth_bound(n: usize, j: usize, k: usize) -> Result<BigUint> {
    let m = num_types(n as u32, j * k)?;
    let m64 = u64::try_from(m).map_err(|_| Error::Size("joint type count".into()))?;
    let mut s = BigUint::zero();
    for i in 0..=(j * k + 1) as u64 {
        s += binomial_big(m64, i);
    }
    if m64 < 4096 {
        let p = BigUint::one() << m64 as usize;
        if p < s {
            s = p;
        }
    }
    Ok(s)
}

/// `(n+1)^{J²K²−1} + 1`.
pub fn growth_polynomial(n: usize, j: usize, k: usize) -> BigUint {
    num_traits::pow(BigUint::from(n + 1), j * j * k * k - 1) + BigUint::one()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    /// Complete table from exhaustive feasibility enumeration.
    Tiny,
    /// Classes registered on first encounter.
    Registry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub rho: DistortionMeasure,
    pub d: DistortionLevel,
}

#[derive(Debug, Clone)]
pub struct ClassTable {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub m: usize,
    pub mode: TableMode,
    fingerprints: Vec<Fingerprint>,
    reps: Vec<Representative>,
    index: HashMap<Fingerprint, usize>,
}

pub const TINY_LIMIT: usize = 64;
pub const LP_MARGIN: f64 = 1e-6;

impl ClassTable {
    pub fn registry(n: usize, j: usize, k: usize) -> Result<Self> {
        let m = num_types(n as u32, j * k)? as usize;
        Ok(ClassTable {
            n,
            j,
            k,
            m,
            mode: TableMode::Registry,
            fingerprints: vec![],
            reps: vec![],
            index: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fingerprints
    }

    pub fn representative(&self, i: usize) -> Result<&Representative> {
        self.reps.get(i).ok_or_else(|| Error::Lookup(format!("class index {i} not in table of {}", self.len())))
    }

    /// Bits used for a class index in frame headers.
    pub fn index_width(&self) -> Result<u32> {
        match self.mode {
            TableMode::Tiny => Ok(ceil_log2(self.len() as u64)),
            TableMode::Registry => {
                let g = growth_bound(self.n, self.j, self.k)?;
                Ok(if g <= BigUint::one() { 0 } else { (g - BigUint::one()).bits() as u32 })
            }
        }
    }

    fn check_dims(&self, rho: &DistortionMeasure) -> Result<()> {
        if rho.j() != self.j || rho.k() != self.k {
            return invalid("distortion measure does not match the table's alphabets");
        }
        Ok(())
    }

    pub fn index_of_fingerprint(&self, fp: &Fingerprint) -> Result<usize> {
        self.index.get(fp).copied().ok_or_else(|| {
            Error::Lookup(match self.mode {
                TableMode::Tiny => "fingerprint not realizable in the tiny table".into(),
                TableMode::Registry => "fingerprint not registered; register it first".into(),
            })
        })
    }

    /// Index of the class containing `(ρ, d)`.
    pub fn class_index_of(&self, rho: &DistortionMeasure, d: &DistortionLevel) -> Result<usize> {
        self.check_dims(rho)?;
        self.index_of_fingerprint(&fingerprint(rho, d, self.n)?)
    }

    /// Looks up `(ρ, d)`, creating a class with this pair as representative
    /// when the table is a registry.
    pub fn register(&mut self, rho: &DistortionMeasure, d: &DistortionLevel) -> Result<usize> {
        self.check_dims(rho)?;
        let fp = fingerprint(rho, d, self.n)?;
        if let Some(&i) = self.index.get(&fp) {
            return Ok(i);
        }
        if self.mode == TableMode::Tiny {
            return Err(Error::Lookup("fingerprint not realizable in the tiny table".into()));
        }
        self.push(fp, Representative { rho: rho.clone(), d: d.clone() });
        Ok(self.len() - 1)
    }

    fn push(&mut self, fp: Fingerprint, rep: Representative) {
        self.index.insert(fp.clone(), self.fingerprints.len());
        self.fingerprints.push(fp);
        self.reps.push(rep);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        v.extend_from_slice(b"UDCT");
        v.push(1);
        v.extend_from_slice(&u16::try_from(self.n).map_err(|_| Error::Size("n".into()))?.to_be_bytes());
        v.push(self.j as u8);
        v.push(self.k as u8);
        v.extend_from_slice(&(self.m as u32).to_be_bytes());
        v.push(match self.mode {
            TableMode::Tiny => 0,
            TableMode::Registry => 1,
        });
        v.extend_from_slice(&(self.len() as u32).to_be_bytes());
        let mut bits = crate::bits::BitString::new();
        for fp in &self.fingerprints {
            for i in 0..fp.len {
                bits.push(fp.get(i));
            }
        }
        v.extend_from_slice(bits.as_bytes());
        for r in &self.reps {
            for val in r.rho.exact().iter().chain(std::iter::once(r.d.exact())) {
                write_decimal(&mut v, val)?;
            }
        }
        Ok(v)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Decode(format!("class table: {m}"));
        if b.len() < 18 || &b[0..4] != b"UDCT" {
            return Err(bad("bad magic"));
        }
        if b[4] != 1 {
            return Err(bad("unsupported version"));
        }
        let n = u16::from_be_bytes([b[5], b[6]]) as usize;
        let (j, k) = (b[7] as usize, b[8] as usize);
        let m = u32::from_be_bytes(b[9..13].try_into().unwrap()) as usize;
        let mode = match b[13] {
            0 => TableMode::Tiny,
            1 => TableMode::Registry,
            _ => return Err(bad("unknown mode")),
        };
        let count = u32::from_be_bytes(b[14..18].try_into().unwrap()) as usize;
        if num_types(n as u32, j * k)? as usize != m {
            return Err(bad("joint type count does not match n, J, K"));
        }
        let nbits = count * m;
        let nbytes = nbits.div_ceil(8);
        let mut pos = 18;
        if b.len() < pos + nbytes {
            return Err(bad("truncated fingerprints"));
        }
        let packed = crate::bits::BitString::from_bytes(&b[pos..pos + nbytes], nbits)?;
        pos += nbytes;
        let mut t = ClassTable { n, j, k, m, mode, fingerprints: vec![], reps: vec![], index: HashMap::new() };
        for c in 0..count {
            let mut words = vec![0u64; m.div_ceil(64)];
            for i in 0..m {
                if packed.get(c * m + i) {
                    words[i / 64] |= 1 << (i % 64);
                }
            }
            let mut vals = Vec::with_capacity(j * k + 1);
            for _ in 0..=j * k {
                vals.push(read_decimal(b, &mut pos)?);
            }
            let d = DistortionLevel::new(vals.pop().unwrap())?;
            let rho = DistortionMeasure::normalize(j, k, vals, None)?;
            t.push(Fingerprint { len: m, words }, Representative { rho, d });
        }
        if pos != b.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(t)
    }
}

fn write_decimal(v: &mut Vec<u8>, r: &BigRational) -> Result<()> {
    let (digits, scale) =
        to_scaled_decimal(r).ok_or_else(|| Error::InvalidInput("representative is not a finite decimal".into()))?;
    let (sign, mag) = digits.to_bytes_be();
    v.push(if sign == Sign::Minus { 1 } else { 0 });
    v.extend_from_slice(&u16::try_from(scale).map_err(|_| Error::Size("decimal scale".into()))?.to_be_bytes());
    v.extend_from_slice(&u16::try_from(mag.len()).map_err(|_| Error::Size("decimal length".into()))?.to_be_bytes());
    v.extend_from_slice(&mag);
    Ok(())
}

fn read_decimal(b: &[u8], pos: &mut usize) -> Result<BigRational> {
    let bad = || Error::Decode("class table: truncated representative".into());
    if b.len() < *pos + 5 {
        return Err(bad());
    }
    let sign = b[*pos];
    let scale = u16::from_be_bytes([b[*pos + 1], b[*pos + 2]]) as u32;
    let len = u16::from_be_bytes([b[*pos + 3], b[*pos + 4]]) as usize;
    *pos += 5;
    if b.len() < *pos + len || sign > 1 {
        return Err(bad());
    }
    let mag = BigInt::from_bytes_be(if sign == 1 { Sign::Minus } else { Sign::Plus }, &b[*pos..*pos + len]);
    *pos += len;
    Ok(from_scaled_decimal(mag, scale))
}

/// Exhaustive table of realizable dichotomies for `|P_n(A×B)| ≤ TINY_LIMIT`.
///
/// Labelings are grown one joint type at a time; a prefix is kept only when
/// a linear feasibility problem (one per row-zero column pattern) admits it.
/// Classes are ordered by labeling, bit `i` standing for joint type `i`.
pub fn enumerate_realizable_classes(n: usize, j: usize, k: usize) -> Result<ClassTable> {
    let joint = enumerate_types(n as u32, j * k)?;
    let m = joint.len();
    if m > TINY_LIMIT {
        return Err(Error::Size(format!(
            "{m} joint types exceed the exhaustive limit {TINY_LIMIT}; use a registry table"
        )));
    }
    let mut table = ClassTable {
        n,
        j,
        k,
        m,
        mode: TableMode::Tiny,
        fingerprints: vec![],
        reps: vec![],
        index: HashMap::new(),
    };
    let patterns: Vec<Vec<usize>> = {
        let mut out = vec![vec![]];
        for _ in 0..j {
            out = out.into_iter().flat_map(|p| (0..k).map(move |c| [p.clone(), vec![c]].concat())).collect();
        }
        out
    };
    // (prefix length, labels, index of a pattern that realized the parent)
    let mut stack: Vec<(usize, u64, usize)> = vec![(0, 0, 0)];
    let mut leaves: Vec<(u64, Representative)> = Vec::new();
    while let Some((len, labels, hint)) = stack.pop() {
        if len == m {
            let order = std::iter::once(hint).chain((0..patterns.len()).filter(|&p| p != hint));
            let mut rep = None;
            for p in order {
                if let Some(r) = feasible_point(&joint, m, labels, &patterns[p], n, j, k)? {
                    rep = Some(r);
                    break;
                }
            }
            let rep = rep.ok_or_else(|| Error::Domain(format!("no exact representative for labeling {labels:#x}")))?;
            leaves.push((labels, rep));
            continue;
        }
        for bit in [0u64, 1] {
            let child = labels | bit << len;
            let order = std::iter::once(hint).chain((0..patterns.len()).filter(|&p| p != hint));
            for p in order {
                if prefix_feasible(&joint, len + 1, child, &patterns[p], n, j, k)? {
                    stack.push((len + 1, child, p));
                    break;
                }
            }
        }
    }
    leaves.sort_by_key(|l| l.0);
    for (labels, rep) in leaves {
        let fp = fingerprint(&rep.rho, &rep.d, n)?;
        debug_assert!((0..m).all(|i| fp.get(i) == (labels >> i & 1 == 1)));
        table.push(fp, rep);
    }
    Ok(table)
}

fn build_lp(
    joint: &[Vec<u32>],
    len: usize,
    labels: u64,
    pat: &[usize],
    n: usize,
    j: usize,
    k: usize,
) -> (Problem, Vec<minilp::Variable>) {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(j * k);
    for a in 0..j {
        for b in 0..k {
            let hi = if pat[a] == b { 0.0 } else { f64::INFINITY };
            vars.push(lp.add_var(0.0, (0.0, hi)));
        }
    }
    let dv = lp.add_var(1.0, (LP_MARGIN, f64::INFINITY));
    for (i, c) in joint.iter().enumerate().take(len) {
        let mut expr: Vec<(minilp::Variable, f64)> =
            c.iter().zip(&vars).filter(|(&ci, _)| ci > 0).map(|(&ci, &v)| (v, ci as f64)).collect();
        expr.push((dv, -(n as f64)));
        if labels >> i & 1 == 1 {
            lp.add_constraint(expr, ComparisonOp::Le, 0.0);
        } else {
            lp.add_constraint(expr, ComparisonOp::Ge, n as f64 * LP_MARGIN);
        }
    }
    (lp, vars)
}

fn prefix_feasible(joint: &[Vec<u32>], len: usize, labels: u64, pat: &[usize], n: usize, j: usize, k: usize) -> Result<bool> {
    match build_lp(joint, len, labels, pat, n, j, k).0.solve() {
        Ok(_) => Ok(true),
        Err(minilp::Error::Infeasible) => Ok(false),
        Err(e) => Err(Error::InvalidInput(format!("feasibility solver failed: {e:?}"))),
    }
}

fn feasible_point(
    joint: &[Vec<u32>],
    len: usize,
    labels: u64,
    pat: &[usize],
    n: usize,
    j: usize,
    k: usize,
) -> Result<Option<Representative>> {
    let (lp, vars) = build_lp(joint, len, labels, pat, n, j, k);
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Ok(None),
        Err(e) => return Err(Error::InvalidInput(format!("feasibility solver failed: {e:?}"))),
    };
    let raw: Vec<f64> = vars.iter().map(|&v| sol[v].max(0.0)).collect();
    // Prefer a short decimal representative; fall back to the exact binary value.
    let rounded: Vec<BigRational> = raw
        .iter()
        .map(|&v| BigRational::new(BigInt::from((v * 1e9).round() as i128), BigInt::from(1_000_000_000u64)))
        .collect();
    for cand in [rounded, raw.iter().map(|&v| rational_from_f64(v)).collect::<Result<Vec<_>>>()?] {
        if let Some(rep) = finish_representative(joint, labels, cand, n, j, k)? {
            return Ok(Some(rep));
        }
    }
    Ok(None)
}

/// Chooses `d` as the largest `+1` average (or half the smallest `−1`
/// average when that is zero) and checks the labeling exactly.
fn finish_representative(
    joint: &[Vec<u32>],
    labels: u64,
    rho: Vec<BigRational>,
    n: usize,
    j: usize,
    k: usize,
) -> Result<Option<Representative>> {
    let nn = BigRational::from_integer(BigInt::from(n));
    let avg = |c: &Vec<u32>| -> BigRational {
        c.iter().zip(&rho).map(|(&ci, r)| r * BigRational::from_integer(ci.into())).sum::<BigRational>() / &nn
    };
    let mut plus_max: Option<BigRational> = None;
    let mut minus_min: Option<BigRational> = None;
    for (i, c) in joint.iter().enumerate() {
        let a = avg(c);
        if labels >> i & 1 == 1 {
            if plus_max.as_ref().is_none_or(|m| a > *m) {
                plus_max = Some(a);
            }
        } else if minus_min.as_ref().is_none_or(|m| a < *m) {
            minus_min = Some(a);
        }
    }
    let zero = BigRational::zero();
    let d = match (plus_max, minus_min) {
        (Some(p), _) if p > zero => p,
        (_, Some(m)) if m > zero => m / BigRational::from_integer(2.into()),
        (_, Some(_)) => return Ok(None),
        (_, None) => BigRational::one(),
    };
    let rho_m = match DistortionMeasure::normalize(j, k, rho, None) {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    let d = DistortionLevel::new(d)?;
    let fp = fingerprint(&rho_m, &d, n)?;
    if (0..joint.len()).all(|i| fp.get(i) == (labels >> i & 1 == 1)) {
        Ok(Some(Representative { rho: rho_m, d }))
    } else {
        Ok(None)
    }
}
