//! The equivalence-class code (`t1`) and the quantized-measure code with
//! one-symbol post-correction (`t2`).

use crate::bits::{ceil_log2, BitReader, BitString};
use crate::cover::{cover_for, Cover};
use crate::distortion_space::{quantize_with, ClassTable, QuantizedDistortion};
use crate::error::{invalid, Error, Result};
use crate::exact::Halfspace;
use crate::model::{distortion_n_fold_exact, DistortionLevel, DistortionMeasure};
use crate::types::{enumerate_types, first_member, next_permutation, num_types, rank, type_of, type_probability, unrank};
use num_bigint::BigInt;
use num_rational::BigRational;
use std::sync::{Arc, RwLock};

/// Bits of one encoded block, split by role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub bits: BitString,
    pub header_bits: usize,
    pub payload_bits: usize,
    pub correction_bits: usize,
    /// The decoder's output for this frame.
    pub y: Vec<u8>,
}

fn type_header_width(n: usize, j: usize) -> Result<u32> {
    let nt = num_types(n as u32, j)?;
    Ok(ceil_log2(u64::try_from(nt).map_err(|_| Error::Size("type count".into()))?))
}

fn check_word(x: &[u8], n: usize, j: usize) -> Result<()> {
    if x.len() != n {
        return invalid(format!("block has length {}, expected {n}", x.len()));
    }
    if x.iter().any(|&a| a as usize >= j) {
        return invalid("source symbol out of range");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct T2Options {
    /// Fault injection: never emit the correction, even when it is needed.
    pub skip_correction: bool,
}

/// Quantized-measure code for a fixed `d` and a shared bound `rho_max`.
#[derive(Debug, Clone)]
pub struct T2Codec {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub d: DistortionLevel,
    pub rho_max: BigRational,
    pub q: u64,
    pub options: T2Options,
}

/// Encoder-side details of one `t2` block.
#[derive(Debug, Clone)]
pub struct T2Report {
    pub frame: EncodedFrame,
    pub case2: bool,
    pub cover_word: Vec<u8>,
}

impl T2Codec {
    pub fn new(n: usize, j: usize, k: usize, d: DistortionLevel, rho_max: BigRational) -> Result<Self> {
        if n == 0 || n > u16::MAX as usize {
            return invalid("blocklength out of range");
        }
        let q = crate::distortion_space::grid_q(&rho_max, d.exact())?;
        Ok(T2Codec { n, j, k, d, rho_max, q, options: T2Options::default() })
    }

    pub fn digit_width(&self) -> u32 {
        ceil_log2(self.q * self.n as u64 + 1)
    }

    pub fn header_bits(&self) -> Result<usize> {
        Ok(type_header_width(self.n, self.j)? as usize + self.j * self.k * self.digit_width() as usize)
    }

    pub fn correction_width(&self) -> usize {
        ceil_log2(self.n as u64) as usize + ceil_log2(self.k as u64) as usize
    }

    fn quantized(&self, digits: Vec<u64>) -> QuantizedDistortion {
        QuantizedDistortion { j: self.j, k: self.k, n: self.n, q: self.q, digits, rho_max: self.rho_max.clone() }
    }

    fn cover(&self, counts: &[u32], qd: &QuantizedDistortion) -> Result<Arc<Cover>> {
        cover_for(counts, &qd.halfspace(&self.d)?, self.k)
    }

    pub fn encode(&self, x: &[u8], rho: &DistortionMeasure) -> Result<T2Report> {
        check_word(x, self.n, self.j)?;
        if rho.j() != self.j || rho.k() != self.k {
            return invalid("distortion measure does not match the codec alphabets");
        }
        let counts = type_of(x, self.j)?.counts;
        let qd = quantize_with(rho, &self.rho_max, &self.d, self.n)?;
        let cover = self.cover(&counts, &qd)?;
        let mut bits = BitString::new();
        bits.write_bits(rank(&counts) as u64, type_header_width(self.n, self.j)?)?;
        for &m in &qd.digits {
            bits.write_bits(m, self.digit_width())?;
        }
        let header_bits = bits.len();
        let pos = cover.position_of(x);
        cover.code.write(pos, &mut bits)?;
        let payload_bits = bits.len() - header_bits;
        let w = cover.word(pos);
        let truth = rho.halfspace(&self.d, self.n)?;
        let mut y = w.clone();
        let case2 = !truth.contains(x, &w);
        if case2 && !self.options.skip_correction {
            // Largest true per-letter distortion, smallest position on ties.
            let mut i_star = 0;
            for i in 1..self.n {
                if truth.weight(x[i] as usize, w[i] as usize) > truth.weight(x[i_star] as usize, w[i_star] as usize) {
                    i_star = i;
                }
            }
            let repl = rho.zero_column(x[i_star] as usize);
            bits.push(true);
            bits.write_bits(i_star as u64, ceil_log2(self.n as u64))?;
            bits.write_bits(repl as u64, ceil_log2(self.k as u64))?;
            y[i_star] = repl as u8;
            self.check_correction_chain(x, &w, &y, rho)?;
        } else {
            bits.push(false);
        }
        let correction_bits = bits.len() - header_bits - payload_bits;
        Ok(T2Report {
            frame: EncodedFrame { bits, header_bits, payload_bits, correction_bits, y },
            case2,
            cover_word: w,
        })
    }

    /// `ρ_n(x, y) ≤ d + ρ_max/(q n) − d/n ≤ d` after a correction, exactly.
    fn check_correction_chain(&self, x: &[u8], w: &[u8], y: &[u8], rho: &DistortionMeasure) -> Result<()> {
        let nn = BigRational::from_integer(BigInt::from(self.n));
        let step = &self.rho_max / (BigRational::from_integer(BigInt::from(self.q)) * &nn);
        let before = distortion_n_fold_exact(x, w, rho)?;
        let after = distortion_n_fold_exact(x, y, rho)?;
        let d = self.d.exact();
        let mid = d + &step - d / &nn;
        if before > d + &step || after > mid || mid > *d {
            return Err(Error::Domain("post-correction bound violated".into()));
        }
        Ok(())
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<Vec<u8>> {
        let rk = r.read_bits(type_header_width(self.n, self.j)?)?;
        let counts = unrank(rk as u128, self.n as u32, self.j).map_err(|e| Error::Decode(e.to_string()))?;
        let mut digits = Vec::with_capacity(self.j * self.k);
        for _ in 0..self.j * self.k {
            let m = r.read_bits(self.digit_width())?;
            if m > self.q * self.n as u64 {
                return Err(Error::Decode("quantization digit out of range".into()));
            }
            digits.push(m);
        }
        let cover = self.cover(&counts, &self.quantized(digits))?;
        let pos = cover.code.read(r)?;
        let mut y = cover.word(pos);
        if r.read_bit()? {
            let i = r.read_bits(ceil_log2(self.n as u64))? as usize;
            let s = r.read_bits(ceil_log2(self.k as u64))? as usize;
            if i >= self.n || s >= self.k {
                return Err(Error::Decode("correction out of range".into()));
            }
            y[i] = s as u8;
        }
        Ok(y)
    }
}

/// Equivalence-class code: both `ρ` and `d` are run-time inputs.
#[derive(Debug, Clone)]
pub struct T1Codec {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub table: Arc<RwLock<ClassTable>>,
}

impl T1Codec {
    pub fn new(table: ClassTable) -> Self {
        T1Codec { n: table.n, j: table.j, k: table.k, table: Arc::new(RwLock::new(table)) }
    }

    pub fn with_shared(table: Arc<RwLock<ClassTable>>) -> Self {
        let (n, j, k) = {
            let t = table.read().unwrap();
            (t.n, t.j, t.k)
        };
        T1Codec { n, j, k, table }
    }

    pub fn header_bits(&self) -> Result<usize> {
        Ok(type_header_width(self.n, self.j)? as usize + self.table.read().unwrap().index_width()? as usize)
    }

    fn representative_halfspace(&self, class: usize) -> Result<Halfspace> {
        let t = self.table.read().unwrap();
        let rep = t.representative(class)?;
        rep.rho.halfspace(&rep.d, self.n)
    }

    pub fn encode(&self, x: &[u8], rho: &DistortionMeasure, d: &DistortionLevel) -> Result<EncodedFrame> {
        check_word(x, self.n, self.j)?;
        let class = {
            let found = self.table.read().unwrap().class_index_of(rho, d);
            match found {
                Ok(i) => i,
                Err(Error::Lookup(_)) => self.table.write().unwrap().register(rho, d)?,
                Err(e) => return Err(e),
            }
        };
        let width = self.table.read().unwrap().index_width()?;
        let counts = type_of(x, self.j)?.counts;
        let cover = cover_for(&counts, &self.representative_halfspace(class)?, self.k)?;
        let mut bits = BitString::new();
        bits.write_bits(rank(&counts) as u64, type_header_width(self.n, self.j)?)?;
        write_wide(&mut bits, class as u64, width)?;
        let header_bits = bits.len();
        let pos = cover.position_of(x);
        cover.code.write(pos, &mut bits)?;
        let payload_bits = bits.len() - header_bits;
        Ok(EncodedFrame { bits, header_bits, payload_bits, correction_bits: 0, y: cover.word(pos) })
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<Vec<u8>> {
        let rk = r.read_bits(type_header_width(self.n, self.j)?)?;
        let counts = unrank(rk as u128, self.n as u32, self.j).map_err(|e| Error::Decode(e.to_string()))?;
        let width = self.table.read().unwrap().index_width()?;
        let class = read_wide(r, width)? as usize;
        let h = self.representative_halfspace(class).map_err(|e| Error::Decode(e.to_string()))?;
        let cover = cover_for(&counts, &h, self.k)?;
        Ok(cover.word(cover.code.read(r)?))
    }
}

/// Fixed-width field that may exceed 64 bits; the value itself fits in 64.
fn write_wide(b: &mut BitString, v: u64, width: u32) -> Result<()> {
    if width > 64 {
        b.write_bits(0, width - 64)?;
        b.write_bits(v, 64)
    } else {
        b.write_bits(v, width)
    }
}

fn read_wide(r: &mut BitReader<'_>, width: u32) -> Result<u64> {
    if width > 64 {
        if r.read_bits(width - 64)? != 0 {
            return Err(Error::Decode("class index exceeds 64 bits".into()));
        }
        r.read_bits(64)
    } else {
        r.read_bits(width)
    }
}

/// Which table codec to measure.
pub enum TableCodec<'a> {
    T1(&'a T1Codec),
    T2(&'a T2Codec),
}

/// Exact `E[frame bits]·ln 2 / n` under `p^n`, by enumerating types and
/// class members.
pub fn measure_expected_rate(
    codec: TableCodec<'_>,
    p: &[f64],
    rho: &DistortionMeasure,
    d: &DistortionLevel,
) -> Result<f64> {
    let (n, j) = match &codec {
        TableCodec::T1(c) => (c.n, c.j),
        TableCodec::T2(c) => (c.n, c.j),
    };
    if p.len() != j {
        return invalid("distribution size does not match the codec");
    }
    let mut total = 0.0;
    for counts in enumerate_types(n as u32, j)? {
        let pr = type_probability(p, &counts);
        if pr == 0.0 {
            continue;
        }
        let mean_bits = match &codec {
            TableCodec::T1(c) => {
                let x = first_member(&counts);
                let f = c.encode(&x, rho, d)?;
                let cover = cover_for(&counts, &c.representative_halfspace(c.table.read().unwrap().class_index_of(rho, d)?)?, c.k)?;
                f.header_bits as f64 + cover.mean_payload_bits()
            }
            TableCodec::T2(c) => {
                let qd = quantize_with(rho, &c.rho_max, &c.d, n)?;
                let cover = c.cover(&counts, &qd)?;
                let truth = rho.halfspace(&c.d, n)?;
                let mut case2 = 0u64;
                let mut x = first_member(&counts);
                let mut r = 0usize;
                loop {
                    let w = cover.word(cover.assign[r] as usize);
                    if !truth.contains(&x, &w) {
                        case2 += 1;
                    }
                    r += 1;
                    if !next_permutation(&mut x) {
                        break;
                    }
                }
                let extra = case2 as f64 * c.correction_width() as f64 / cover.class_size() as f64;
                c.header_bits()? as f64 + cover.mean_payload_bits() + 1.0 + extra
            }
        };
        total += pr * mean_bits;
    }
    Ok(total * std::f64::consts::LN_2 / n as f64)
}
