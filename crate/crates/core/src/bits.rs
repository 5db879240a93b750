//! MSB-first bit strings, fixed-width fields, the doubly recursive Elias
//! code and the `UDSF` frame container.

use crate::error::{Error, Result};

/// Growable MSB-first bit string with an exact length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    /// Writes `value` in exactly `width` bits, most significant first.
    pub fn write_bits(&mut self, value: u64, width: u32) -> Result<()> {
        if width < 64 && value >> width != 0 {
            return Err(Error::Domain(format!("value {value} does not fit in {width} bits")));
        }
        if width > 64 {
            return Err(Error::Domain(format!("field width {width} exceeds 64")));
        }
        for b in (0..width).rev() {
            self.push((value >> b) & 1 == 1);
        }
        Ok(())
    }

    /// Wide variant for fields up to 128 bits.
    pub fn write_bits_u128(&mut self, value: u128, width: u32) -> Result<()> {
        if width > 128 || (width < 128 && value >> width != 0) {
            return Err(Error::Domain(format!("value does not fit in {width} bits")));
        }
        for b in (0..width).rev() {
            self.push((value >> b) & 1 == 1);
        }
        Ok(())
    }

    pub fn extend(&mut self, other: &BitString) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    /// Packed bytes; trailing pad bits are zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 || bytes.len() != len.div_ceil(8) {
            return Err(Error::Decode(format!("{} bytes cannot hold exactly {len} bits", bytes.len())));
        }
        let s = BitString { bytes: bytes.to_vec(), len };
        if len % 8 != 0 {
            let last = *s.bytes.last().unwrap();
            if last & (0xff >> (len % 8)) != 0 {
                return Err(Error::Decode("nonzero pad bits".into()));
            }
        }
        Ok(s)
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }

    /// `true` if `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len <= other.len && (0..self.len).all(|i| self.get(i) == other.get(i))
    }

    pub fn to_bit_chars(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn from_bit_chars(s: &str) -> Self {
        let mut b = BitString::new();
        for c in s.chars() {
            b.push(c == '1');
        }
        b
    }
}

/// Cursor over a [`BitString`].
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.bits.len {
            return Err(Error::Decode("unexpected end of bit string".into()));
        }
        let b = self.bits.get(self.pos);
        self.pos += 1;
        Ok(b)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        if width > 64 {
            return Err(Error::Domain(format!("field width {width} exceeds 64")));
        }
        if self.remaining() < width as usize {
            return Err(Error::Decode("truncated fixed-width field".into()));
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_bits_u128(&mut self, width: u32) -> Result<u128> {
        if width > 128 {
            return Err(Error::Domain(format!("field width {width} exceeds 128")));
        }
        if self.remaining() < width as usize {
            return Err(Error::Decode("truncated fixed-width field".into()));
        }
        let mut v = 0u128;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u128;
        }
        Ok(v)
    }
}

/// `⌊log₂ v⌋` for `v ≥ 1`, computed from the bit length.
#[inline]
pub fn floor_log2(v: u64) -> u32 {
    assert!(v > 0, "floor_log2(0)");
    63 - v.leading_zeros()
}

/// Number of bits needed to index `m` alternatives: `⌈log₂ m⌉`, 0 for m ≤ 1.
#[inline]
pub fn ceil_log2(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

pub fn ceil_log2_u128(m: u128) -> u32 {
    if m <= 1 {
        0
    } else {
        128 - (m - 1).leading_zeros()
    }
}

/// Length in bits of [`elias2_encode`]`(i)`:
/// `⌊log i⌋ + 1 + ⌊log N0⌋ + 1 + 2⌊log N1⌋ + 1`.
pub fn elias2_len(i: u64) -> Result<usize> {
    if i < 4 {
        return Err(Error::Domain(format!("doubly recursive Elias code needs i >= 4, got {i}")));
    }
    let n0 = floor_log2(i) as u64;
    let n1 = floor_log2(n0) as u64;
    Ok((n0 + 1 + floor_log2(n0) as u64 + 1 + 2 * floor_log2(n1) as u64 + 1) as usize)
}

/// Doubly recursive Elias code. Layout, innermost first: Elias gamma of
/// `N1 = ⌊log₂ N0⌋`, then `N0 = ⌊log₂ i⌋` in `N1+1` bits, then `i` in `N0+1` bits.
pub fn elias2_encode(i: u64, out: &mut BitString) -> Result<()> {
    if i < 4 {
        return Err(Error::Domain(format!("doubly recursive Elias code needs i >= 4, got {i}")));
    }
    let n0 = floor_log2(i);
    let n1 = floor_log2(n0 as u64);
    let g = floor_log2(n1 as u64);
    for _ in 0..g {
        out.push(false);
    }
    out.write_bits(n1 as u64, g + 1)?;
    out.write_bits(n0 as u64, n1 + 1)?;
    out.write_bits(i, n0 + 1)?;
    Ok(())
}

/// Inverse of [`elias2_encode`]. Rejects truncated or non-canonical input.
pub fn elias2_decode(r: &mut BitReader<'_>) -> Result<u64> {
    let mut g = 0u32;
    while !r.read_bit()? {
        g += 1;
        if g > 5 {
            return Err(Error::Decode("Elias gamma prefix too long".into()));
        }
    }
    let mut n1 = 1u64;
    for _ in 0..g {
        n1 = (n1 << 1) | r.read_bit()? as u64;
    }
    if n1 > 5 {
        return Err(Error::Decode(format!("Elias inner length {n1} out of range")));
    }
    let n0 = r.read_bits(n1 as u32 + 1)?;
    if n0 >> n1 != 1 || n0 > 63 {
        return Err(Error::Decode("malformed Elias length field".into()));
    }
    let i = r.read_bits(n0 as u32 + 1)?;
    if i >> n0 != 1 {
        return Err(Error::Decode("malformed Elias value field".into()));
    }
    Ok(i)
}

pub const CONTAINER_MAGIC: &[u8; 4] = b"UDSF";
pub const CONTAINER_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CodecId {
    T1 = 1,
    T2 = 2,
    Nml = 3,
}

impl CodecId {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(CodecId::T1),
            2 => Ok(CodecId::T2),
            3 => Ok(CodecId::Nml),
            _ => Err(Error::Decode(format!("unknown codec id {v}"))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(CodecId::T1),
            "t2" => Ok(CodecId::T2),
            "nml" => Ok(CodecId::Nml),
            _ => Err(Error::InvalidInput(format!("unknown codec '{s}' (expected t1, t2 or nml)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::T1 => "t1",
            CodecId::T2 => "t2",
            CodecId::Nml => "nml",
        }
    }
}

/// The `UDSF` container. All multi-byte integers are big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub codec: CodecId,
    pub n: u16,
    pub j: u8,
    pub k: u8,
    pub seed: u64,
    pub cap: u32,
    pub rng: u8,
    pub payload: BitString,
}

impl Container {
    pub fn pack(&self) -> Result<Vec<u8>> {
        let len = u32::try_from(self.payload.len())
            .map_err(|_| Error::Size("payload longer than 2^32 bits".into()))?;
        let mut v = Vec::with_capacity(27 + self.payload.as_bytes().len());
        v.extend_from_slice(CONTAINER_MAGIC);
        v.push(CONTAINER_VERSION);
        v.push(self.codec as u8);
        v.extend_from_slice(&self.n.to_be_bytes());
        v.push(self.j);
        v.push(self.k);
        v.extend_from_slice(&self.seed.to_be_bytes());
        v.extend_from_slice(&self.cap.to_be_bytes());
        v.push(self.rng);
        v.extend_from_slice(&len.to_be_bytes());
        v.extend_from_slice(self.payload.as_bytes());
        Ok(v)
    }

    pub fn unpack(b: &[u8]) -> Result<Self> {
        const HDR: usize = 4 + 1 + 1 + 2 + 1 + 1 + 8 + 4 + 1 + 4;
        if b.len() < HDR {
            return Err(Error::Decode("container shorter than its header".into()));
        }
        if &b[0..4] != CONTAINER_MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        if b[4] != CONTAINER_VERSION {
            return Err(Error::Decode(format!("unsupported container version {}", b[4])));
        }
        let codec = CodecId::from_u8(b[5])?;
        let n = u16::from_be_bytes([b[6], b[7]]);
        let (j, k) = (b[8], b[9]);
        let seed = u64::from_be_bytes(b[10..18].try_into().unwrap());
        let cap = u32::from_be_bytes(b[18..22].try_into().unwrap());
        let rng = b[22];
        let len = u32::from_be_bytes(b[23..27].try_into().unwrap()) as usize;
        let payload = BitString::from_bytes(&b[HDR..], len)?;
        Ok(Container { codec, n, j, k, seed, cap, rng, payload })
    }
}
