//! Random code over a normalized-maximum-likelihood codebook, thinned by
//! acceptance-rejection to i.i.d. draws from the optimal output distribution.

use crate::bits::{ceil_log2, elias2_decode, elias2_encode, BitReader, BitString};
use crate::error::{invalid, Error, Result};
use crate::model::{DistortionLevel, DistortionMeasure};
use crate::rd::{plug_in_expectation, solve_rd_cached};
use crate::rng::{open_unit_f64, unit_f64, Cursor, Stream};
use crate::table_codecs::EncodedFrame;
use crate::types::{enumerate_types, first_member, ln_class_size, type_of};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Guard on the number of reconstruction types held by a sampler.
pub const MAX_SAMPLER_TYPES: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShtarkovSum {
    pub n: usize,
    pub k: usize,
    /// Nats.
    pub log_value: f64,
}

impl ShtarkovSum {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `ln |T(t)| + Σ_k c_k ln(c_k/n)`: log of the class mass under the
/// maximum-likelihood i.i.d. law (with `0 ln 0 = 0`).
fn ln_ml_class_mass(counts: &[u32], n: usize) -> f64 {
    ln_class_size(counts) + counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 * (c as f64 / n as f64).ln()).sum::<f64>()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact type-sum evaluation of `ln S_n`.
pub fn shtarkov_sum(n: usize, k: usize) -> Result<ShtarkovSum> {
    if n == 0 || k == 0 {
        return invalid("shtarkov sum needs n ≥ 1 and K ≥ 1");
    }
    let terms: Vec<f64> = enumerate_types(n as u32, k)?.iter().map(|c| ln_ml_class_mass(c, n)).collect();
    Ok(ShtarkovSum { n, k, log_value: log_sum_exp(&terms) })
}

/// Two-stage sampler for `Q^NML` at fixed `(n, K)`.
#[derive(Debug, Clone)]
pub struct NmlSampler {
    pub n: usize,
    pub k: usize,
    pub shtarkov: ShtarkovSum,
    types: Vec<Vec<u32>>,
    /// `ln sup_q q^n(z)` for any `z` of each type.
    ln_ml: Vec<f64>,
    cdf: Vec<f64>,
}

impl NmlSampler {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k < 1 || k > 255 {
            return invalid("sampler needs n ≥ 1 and 1 ≤ K ≤ 255");
        }
        let nt = crate::types::num_types(n as u32, k)?;
        if nt > MAX_SAMPLER_TYPES {
            return Err(Error::Size(format!("{nt} reconstruction types exceed {MAX_SAMPLER_TYPES}")));
        }
        let types = enumerate_types(n as u32, k)?;
        let mass: Vec<f64> = types.iter().map(|c| ln_ml_class_mass(c, n)).collect();
        let log_s = log_sum_exp(&mass);
        let mut cdf = Vec::with_capacity(types.len());
        let mut acc = 0.0;
        for m in &mass {
            acc += (m - log_s).exp();
            cdf.push(acc);
        }
        let last = cdf.len() - 1;
        cdf[last] = f64::INFINITY;
        let ln_ml = types
            .iter()
            .map(|c| c.iter().filter(|&&v| v > 0).map(|&v| v as f64 * (v as f64 / n as f64).ln()).sum())
            .collect();
        Ok(NmlSampler { n, k, shtarkov: ShtarkovSum { n, k, log_value: log_s }, types, ln_ml, cdf })
    }

    /// Shared sampler per `(n, K)`.
    pub fn shared(n: usize, k: usize) -> Result<Arc<NmlSampler>> {
        static C: OnceLock<RwLock<HashMap<(usize, usize), Arc<NmlSampler>>>> = OnceLock::new();
        let c = C.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(s) = c.read().unwrap().get(&(n, k)) {
            return Ok(s.clone());
        }
        let s = Arc::new(NmlSampler::new(n, k)?);
        Ok(c.write().unwrap().entry((n, k)).or_insert(s).clone())
    }

    pub fn types(&self) -> &[Vec<u32>] {
        &self.types
    }

    /// Probability of drawing a word of type index `i`.
    pub fn type_weight(&self, i: usize) -> f64 {
        let lo = if i == 0 { 0.0 } else { self.cdf[i - 1] };
        let hi = if i + 1 == self.cdf.len() { 1.0 } else { self.cdf[i] };
        hi - lo
    }

    fn draw_type(&self, cur: &mut Cursor) -> usize {
        let u = unit_f64(cur.next_u64());
        self.cdf.partition_point(|&c| c <= u).min(self.types.len() - 1)
    }

    fn draw_word(&self, t: usize, cur: &mut Cursor) -> Vec<u8> {
        let mut w = first_member(&self.types[t]);
        for i in (1..w.len()).rev() {
            let j = cur.below(i as u64 + 1) as usize;
            w.swap(i, j);
        }
        w
    }

    /// Raw draw `i ≥ 1` of the codebook stream: `(type index, word)`.
    pub fn draw(&self, codebook: &Stream, i: u64) -> (usize, Vec<u8>) {
        let mut cur = codebook.cursor(i);
        let t = self.draw_type(&mut cur);
        let w = self.draw_word(t, &mut cur);
        (t, w)
    }

    /// Per-type acceptance log-ratio `ln Q^n(z) − ln sup_q q^n(z)`.
    pub fn log_ratios(&self, q: &[f64]) -> Vec<f64> {
        self.types
            .iter()
            .zip(&self.ln_ml)
            .map(|(c, ml)| {
                let mut s = 0.0;
                for (&ck, &qk) in c.iter().zip(q) {
                    if ck > 0 {
                        if qk <= 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        s += ck as f64 * qk.ln();
                    }
                }
                (s - ml).min(0.0)
            })
            .collect()
    }
}

pub fn codebook_stream(seed: u64, frame: u64) -> Stream {
    Stream::derive(seed, &[b"nml", &frame.to_be_bytes()])
}

pub fn aux_stream(seed: u64, frame: u64) -> Stream {
    Stream::derive(seed, &[b"aux", &frame.to_be_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    /// Raw index and word of the first accepted draw meeting the predicate.
    Found { index: u64, word: Vec<u8> },
    Exhausted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub raw_draws: u64,
    pub accepted: u64,
}

/// Walks raw draws `1..=cap`, thinning by `ln U_i < lr(type)` and returning
/// the first accepted draw for which `pred` holds.
pub fn search_with<F: FnMut(&[u8]) -> bool>(
    sampler: &NmlSampler,
    log_ratio: &[f64],
    codebook: &Stream,
    aux: &Stream,
    cap: u64,
    mut pred: F,
) -> (SearchOutcome, SearchStats) {
    let mut stats = SearchStats::default();
    let mut ublock = [0u64; 4];
    // `u < e^{lr}` decides away from the rounding band; inside it the log
    // comparison is authoritative.
    let thr: Vec<f64> = log_ratio.iter().map(|l| l.exp()).collect();
    for i in 1..=cap {
        stats.raw_draws += 1;
        let mut cur = codebook.cursor(i);
        let t = sampler.draw_type(&mut cur);
        if i == 1 || i % 4 == 0 {
            ublock = aux.block(i / 4, 0);
        }
        let lr = log_ratio[t];
        if lr == f64::NEG_INFINITY {
            continue;
        }
        let u = open_unit_f64(ublock[(i % 4) as usize]);
        let e = thr[t];
        let accept = if u < e * (1.0 - 1e-12) {
            true
        } else if u > e * (1.0 + 1e-12) {
            false
        } else {
            u.ln() < lr
        };
        if !accept {
            continue;
        }
        stats.accepted += 1;
        let w = sampler.draw_word(t, &mut cur);
        if pred(&w) {
            return (SearchOutcome::Found { index: i, word: w }, stats);
        }
    }
    (SearchOutcome::Exhausted, stats)
}

/// `min(K^n, 2^32)`.
pub fn default_cap(n: usize, k: usize) -> u64 {
    let lim = 1u64 << 32;
    let mut v = 1u64;
    for _ in 0..n {
        v = v.saturating_mul(k as u64);
        if v >= lim {
            return lim;
        }
    }
    v
}

#[derive(Debug, Clone)]
pub struct NmlCodec {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub cap: u64,
    pub sampler: Arc<NmlSampler>,
}

#[derive(Debug, Clone)]
pub struct NmlReport {
    pub frame: EncodedFrame,
    pub outcome: SearchOutcome,
    pub stats: SearchStats,
}

impl NmlCodec {
    pub fn new(n: usize, j: usize, k: usize, cap: Option<u64>) -> Result<Self> {
        if j == 0 || j > 255 {
            return invalid("source alphabet size out of range");
        }
        let cap = cap.unwrap_or_else(|| default_cap(n, k));
        if cap > u32::MAX as u64 + 1 {
            return invalid("cap exceeds 2^32");
        }
        Ok(NmlCodec { n, j, k, cap, sampler: NmlSampler::shared(n, k)? })
    }

    fn symbol_width(&self) -> u32 {
        ceil_log2(self.k as u64)
    }

    pub fn encode(&self, x: &[u8], rho: &DistortionMeasure, d: &DistortionLevel, seed: u64, frame: u64) -> Result<NmlReport> {
        if x.len() != self.n || x.iter().any(|&a| a as usize >= self.j) {
            return invalid("block does not match the codec's n and J");
        }
        if rho.j() != self.j || rho.k() != self.k {
            return invalid("distortion measure does not match the codec alphabets");
        }
        let h = rho.halfspace(d, self.n)?;
        let (outcome, stats) = if self.cap == 0 {
            (SearchOutcome::Exhausted, SearchStats::default())
        } else {
            let t = type_of(x, self.j)?.freqs();
            let sol = solve_rd_cached(&t, d.value(), rho)?;
            let lr = self.sampler.log_ratios(&sol.q_star);
            search_with(&self.sampler, &lr, &codebook_stream(seed, frame), &aux_stream(seed, frame), self.cap, |w| {
                h.contains(x, w)
            })
        };
        let mut bits = BitString::new();
        let y = match &outcome {
            SearchOutcome::Found { index, word } => {
                match index {
                    1..=3 => bits.write_bits(index - 1, 3)?,
                    _ => {
                        bits.write_bits(0b011, 3)?;
                        elias2_encode(*index, &mut bits)?;
                    }
                }
                word.clone()
            }
            SearchOutcome::Exhausted => {
                bits.write_bits(0b100, 3)?;
                let y = rho.zero_word(x);
                for &s in &y {
                    bits.write_bits(s as u64, self.symbol_width())?;
                }
                y
            }
        };
        if !h.contains(x, &y) {
            return Err(Error::Domain("nml reconstruction exceeds d".into()));
        }
        let payload_bits = bits.len() - 3;
        Ok(NmlReport {
            frame: EncodedFrame { bits, header_bits: 3, payload_bits, correction_bits: 0, y },
            outcome,
            stats,
        })
    }

    pub fn decode(&self, r: &mut BitReader<'_>, seed: u64, frame: u64) -> Result<Vec<u8>> {
        let flag = r.read_bits(3)?;
        let index = match flag {
            0..=2 => flag + 1,
            3 => elias2_decode(r)?,
            4 => {
                let mut y = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    let s = r.read_bits(self.symbol_width())?;
                    if s as usize >= self.k {
                        return Err(Error::Decode("fallback symbol out of range".into()));
                    }
                    y.push(s as u8);
                }
                return Ok(y);
            }
            _ => return Err(Error::Decode(format!("unknown flag {flag:03b}"))),
        };
        if index > self.cap {
            return Err(Error::Decode(format!("index {index} exceeds cap {}", self.cap)));
        }
        Ok(self.sampler.draw(&codebook_stream(seed, frame), index).1)
    }
}

/// Draws a length-`n` block from `p` using `cur`.
pub fn sample_source(p: &[f64], n: usize, cur: &mut Cursor) -> Vec<u8> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = cur.next_f64() * acc;
            cdf.partition_point(|&c| c <= u).min(p.len() - 1) as u8
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmlRate {
    /// Nats per symbol.
    pub mean: f64,
    /// 95% normal half-width.
    pub ci: f64,
    pub trials: usize,
    pub fallbacks: usize,
    pub mean_index: f64,
    pub r_anchor: f64,
    /// `E_p[R(T, d, ρ)]` when the type count is within the plug-in guard.
    pub plugin_anchor: Option<f64>,
}

/// Monte Carlo rate over independent `(codebook seed, source block)` pairs.
pub fn measure_rate_nml(
    p: &[f64],
    rho: &DistortionMeasure,
    d: &DistortionLevel,
    n: usize,
    trials: usize,
    seed: u64,
    cap: Option<u64>,
) -> Result<NmlRate> {
    if trials == 0 {
        return Err(Error::EmptySample);
    }
    let codec = NmlCodec::new(n, rho.j(), rho.k(), cap)?;
    let per: Vec<(u64, bool, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let src = Stream::derive(seed, &[b"source", &t.to_be_bytes()]);
            let x = sample_source(p, n, &mut src.cursor(0));
            let cb_seed = Stream::derive(seed, &[b"codebook", &t.to_be_bytes()]).word(0);
            let rep = codec.encode(&x, rho, d, cb_seed, 0)?;
            let (fb, idx) = match rep.outcome {
                SearchOutcome::Found { index, .. } => (false, index),
                SearchOutcome::Exhausted => (true, 0),
            };
            Ok((rep.frame.bits.len() as u64, fb, idx))
        })
        .collect::<Result<_>>()?;
    let scale = std::f64::consts::LN_2 / n as f64;
    let tf = trials as f64;
    let total: u64 = per.iter().map(|v| v.0).sum();
    let mean_bits = total as f64 / tf;
    let var = if trials > 1 {
        per.iter().map(|v| (v.0 as f64 - mean_bits).powi(2)).sum::<f64>() / (tf - 1.0)
    } else {
        0.0
    };
    let found: Vec<u64> = per.iter().filter(|v| !v.1).map(|v| v.2).collect();
    let r_anchor = solve_rd_cached(p, d.value(), rho)?.rate;
    let plugin_anchor = match plug_in_expectation(p, d.value(), rho, n as u32) {
        Ok(v) => Some(v),
        Err(Error::Size(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(NmlRate {
        mean: mean_bits * scale,
        ci: 1.96 * var.sqrt() / tf.sqrt() * scale,
        trials,
        fallbacks: trials - found.len(),
        mean_index: if found.is_empty() { 0.0 } else { found.iter().sum::<u64>() as f64 / found.len() as f64 },
        r_anchor,
        plugin_anchor,
    })
}
