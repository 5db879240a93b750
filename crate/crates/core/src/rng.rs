//! Counter-based Philox4x64-10 generator with labelled substreams.
//!
//! Every stream is addressed by a 128-bit key derived from `(seed, label)`
//! with SHA-256, and every draw is a pure function of `(key, counter)`.

use sha2::{Digest, Sha256};

/// Identifier written into container headers.
pub const RNG_ID_PHILOX4X64_10: u8 = 1;

const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// Philox4x64 with 10 rounds.
#[inline]
pub fn philox4x64(ctr: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut x = ctr;
    let mut k = key;
    for r in 0..10 {
        if r > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, x[0]);
        let (hi1, lo1) = mulhilo(M1, x[2]);
        x = [hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0];
    }
    x
}

/// A keyed substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: [u64; 2],
}

impl Stream {
    pub fn from_key(key: [u64; 2]) -> Self {
        Stream { key }
    }

    /// Derive a stream key from a seed and a sequence of labels.
    pub fn derive(seed: u64, labels: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_be_bytes());
        for l in labels {
            h.update((l.len() as u64).to_be_bytes());
            h.update(l);
        }
        let out = h.finalize();
        let k0 = u64::from_be_bytes(out[0..8].try_into().unwrap());
        let k1 = u64::from_be_bytes(out[8..16].try_into().unwrap());
        Stream { key: [k0, k1] }
    }

    /// Sub-label helper: `derive(seed, [label, index])`.
    pub fn labelled(seed: u64, label: &str, index: u64) -> Self {
        Self::derive(seed, &[label.as_bytes(), &index.to_be_bytes()])
    }

    pub fn key(&self) -> [u64; 2] {
        self.key
    }

    #[inline]
    pub fn block(&self, c0: u64, c1: u64) -> [u64; 4] {
        philox4x64([c0, c1, 0, 0], self.key)
    }

    /// Sequential reader over the blocks `(c0, 0), (c0, 1), ...`.
    pub fn cursor(&self, c0: u64) -> Cursor {
        Cursor { stream: *self, c0, c1: 0, buf: [0; 4], pos: 4 }
    }

    /// The `i`-th 64-bit word of the flat sequence `block(i/4, 0)[i%4]`.
    #[inline]
    pub fn word(&self, i: u64) -> u64 {
        self.block(i / 4, 0)[(i % 4) as usize]
    }
}

/// Draws words from consecutive blocks of one counter row.
#[derive(Debug, Clone)]
pub struct Cursor {
    stream: Stream,
    c0: u64,
    c1: u64,
    buf: [u64; 4],
    pos: usize,
}

impl Cursor {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.pos == 4 {
            self.buf = self.stream.block(self.c0, self.c1);
            self.c1 += 1;
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform integer in [0, m), Lemire's multiply-and-reject method.
    #[inline]
    pub fn below(&mut self, m: u64) -> u64 {
        debug_assert!(m > 0);
        let mut x = self.next_u64();
        let mut p = (x as u128) * (m as u128);
        let mut lo = p as u64;
        if lo < m {
            let t = m.wrapping_neg() % m;
            while lo < t {
                x = self.next_u64();
                p = (x as u128) * (m as u128);
                lo = p as u64;
            }
        }
        (p >> 64) as u64
    }
}

#[inline]
pub fn unit_f64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn open_unit_f64(u: u64) -> f64 {
    ((u >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
