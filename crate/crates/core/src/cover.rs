//! Greedy set covers of type classes by reconstruction words, and canonical
//! optimal prefix codes over the chosen words.

use crate::bits::{BitReader, BitString};
use crate::error::{Error, Result};
use crate::exact::Halfspace;
use crate::types::{class_size_u64, first_member, next_permutation, perm_rank};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

pub const MAX_CLASS: u64 = 1_000_000;
pub const MAX_CANDIDATES: u64 = 2_000_000;
/// Bound on stored (word, member) incidences.
pub const MAX_EDGES: u64 = 60_000_000;

/// Canonical prefix code: codewords ordered by (length, word index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixCode {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Symbols sorted by (length, key).
    order: Vec<u32>,
    /// Per length: first canonical code and offset into `order`.
    first: Vec<(u64, usize, usize)>,
}

/// Merge-based optimal code lengths. Ties between equal weights are broken
/// by creation order, leaves first in index order.
pub fn huffman_lengths(weights: &[u64]) -> Vec<u8> {
    let m = weights.len();
    if m <= 1 {
        return vec![0; m];
    }
    let mut parent = vec![usize::MAX; 2 * m - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = weights.iter().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    let mut next = m;
    while heap.len() > 1 {
        let Reverse((w1, a)) = heap.pop().unwrap();
        let Reverse((w2, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((w1 + w2, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u8; 2 * m - 1];
    for v in (0..root).rev() {
        depth[v] = depth[parent[v]] + 1;
    }
    depth.truncate(m);
    depth
}

impl PrefixCode {
    /// Builds the canonical code for `lengths`, ordering equal lengths by `keys`.
    pub fn canonical(lengths: Vec<u8>, keys: &[u32]) -> Self {
        let m = lengths.len();
        let mut order: Vec<u32> = (0..m as u32).collect();
        order.sort_by_key(|&i| (lengths[i as usize], keys[i as usize]));
        let mut codes = vec![0u64; m];
        let maxlen = lengths.iter().copied().max().unwrap_or(0) as usize;
        let mut first = vec![(0u64, 0usize, 0usize); maxlen + 1];
        let mut code = 0u64;
        let mut prev = 0u8;
        for (pos, &s) in order.iter().enumerate() {
            let l = lengths[s as usize];
            if pos > 0 {
                code += 1;
            }
            code <<= l - prev;
            prev = l;
            codes[s as usize] = code;
            let e = &mut first[l as usize];
            if e.2 == 0 {
                *e = (code, pos, 0);
            }
            e.2 += 1;
        }
        PrefixCode { lengths, codes, order, first }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn length(&self, s: usize) -> u8 {
        self.lengths[s]
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn write(&self, s: usize, out: &mut BitString) -> Result<()> {
        out.write_bits(self.codes[s], self.lengths[s] as u32)
    }

    pub fn read(&self, r: &mut BitReader<'_>) -> Result<usize> {
        if self.lengths.len() == 1 {
            return Ok(0);
        }
        let mut code = 0u64;
        for l in 1..self.first.len() {
            code = (code << 1) | r.read_bit()? as u64;
            let (fc, off, cnt) = self.first[l];
            if cnt > 0 && code >= fc && code - fc < cnt as u64 {
                return Ok(self.order[off + (code - fc) as usize] as usize);
            }
        }
        Err(Error::Decode("invalid prefix codeword".into()))
    }

    /// `Σ 2^{-len}`.
    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (0.5f64).powi(l as i32)).sum()
    }
}

/// A d-quantizer restricted to one type class, with its prefix code.
#[derive(Debug, Clone)]
pub struct Cover {
    pub n: usize,
    pub k: usize,
    pub counts: Vec<u32>,
    /// Chosen words as base-K indices (first symbol most significant), in selection order.
    pub words: Vec<u32>,
    pub preimage_counts: Vec<u64>,
    /// Codebook position for each class member, by lexicographic member rank.
    pub assign: Vec<u32>,
    pub code: PrefixCode,
}

impl Cover {
    pub fn class_size(&self) -> u64 {
        self.assign.len() as u64
    }

    pub fn word(&self, pos: usize) -> Vec<u8> {
        index_to_word(self.words[pos], self.n, self.k)
    }

    /// Codebook position assigned to `x`.
    pub fn position_of(&self, x: &[u8]) -> usize {
        self.assign[perm_rank(x, &self.counts) as usize] as usize
    }

    /// Mean payload length in bits over the class.
    pub fn mean_payload_bits(&self) -> f64 {
        let tot: u64 = self.preimage_counts.iter().enumerate().map(|(i, &c)| c * self.code.length(i) as u64).sum();
        tot as f64 / self.class_size() as f64
    }
}

pub fn word_to_index(y: &[u8], k: usize) -> u32 {
    y.iter().fold(0u32, |acc, &s| acc * k as u32 + s as u32)
}

pub fn index_to_word(mut idx: u32, n: usize, k: usize) -> Vec<u8> {
    let mut y = vec![0u8; n];
    for i in (0..n).rev() {
        y[i] = (idx % k as u32) as u8;
        idx /= k as u32;
    }
    y
}

struct Ball<'a> {
    w: &'a [i64],
    k: usize,
    limit: i64,
    pw: &'a [u32],
}

impl Ball<'_> {
    /// Visits every word `y` with `Σ w[x_i][y_i] ≤ limit`; `f` returns false to stop.
    fn walk(&self, x: &[u8], i: usize, s: i64, idx: u32, f: &mut impl FnMut(u32) -> bool) -> bool {
        if i == x.len() {
            return f(idx);
        }
        let a = x[i] as usize;
        for (b, &wv) in self.w[a * self.k..(a + 1) * self.k].iter().enumerate() {
            let t = s + wv;
            if t <= self.limit && !self.walk(x, i + 1, t, idx + b as u32 * self.pw[i], f) {
                return false;
            }
        }
        true
    }
}

fn small_weights(h: &Halfspace, n: usize) -> Result<(Vec<i64>, i64)> {
    let bound = (i64::MAX / 4) as i128;
    let maxw = h.w.iter().copied().max().unwrap_or(0);
    if maxw.saturating_mul(n as i128) > bound || h.limit > bound {
        return Err(Error::Size("distortion weights too wide for cover construction".into()));
    }
    Ok((h.w.iter().map(|&v| v as i64).collect(), h.limit as i64))
}

/// Greedy cover of the type class `counts` under the halfspace `h`.
///
/// Repeatedly picks the word covering the most uncovered members, breaking
/// ties toward the lexicographically smallest word.
pub fn greedy_cover(counts: &[u32], h: &Halfspace, k: usize) -> Result<Cover> {
    let n: usize = counts.iter().map(|&c| c as usize).sum();
    if n == 0 || counts.len() != h.j || k != h.k {
        return Err(Error::InvalidInput("type and halfspace dimensions disagree".into()));
    }
    let size = class_size_u64(counts).filter(|&s| s <= MAX_CLASS).ok_or_else(|| {
        Error::Size(format!("type class larger than {MAX_CLASS}"))
    })?;
    let cands = (k as u64).checked_pow(n as u32).filter(|&c| c <= MAX_CANDIDATES).ok_or_else(|| {
        Error::Size(format!("K^n = {k}^{n} exceeds {MAX_CANDIDATES} candidate words"))
    })?;
    let (w, limit) = small_weights(h, n)?;
    let mut pw = vec![1u32; n];
    for i in (0..n.saturating_sub(1)).rev() {
        pw[i] = pw[i + 1] * k as u32;
    }
    let mut members = Vec::with_capacity(size as usize * n);
    let mut x = first_member(counts);
    loop {
        members.extend_from_slice(&x);
        if !next_permutation(&mut x) {
            break;
        }
    }
    let member = |r: usize| &members[r * n..(r + 1) * n];
    let ball = Ball { w: &w, k, limit, pw: &pw };

    // Ball sizes are equal across a type class; check the incidence budget first.
    let per = {
        let mut c = 0u64;
        let cap = MAX_EDGES / size + 1;
        ball.walk(member(0), 0, 0, 0, &mut |_| {
            c += 1;
            c <= cap
        });
        c
    };
    if per == 0 {
        return Err(Error::InvalidInput("a member has no word within the distortion level".into()));
    }
    if per.saturating_mul(size) > MAX_EDGES {
        return Err(Error::Size(format!("{} word/member incidences exceed {MAX_EDGES}", per.saturating_mul(size))));
    }

    let mut offsets = vec![0u32; cands as usize + 1];
    for r in 0..size as usize {
        ball.walk(member(r), 0, 0, 0, &mut |y| {
            offsets[y as usize + 1] += 1;
            true
        });
    }
    for i in 0..cands as usize {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut lists = vec![0u32; offsets[cands as usize] as usize];
    for r in 0..size as usize {
        ball.walk(member(r), 0, 0, 0, &mut |y| {
            lists[fill[y as usize] as usize] = r as u32;
            fill[y as usize] += 1;
            true
        });
    }
    drop(fill);

    let mut gain: Vec<u32> = (0..cands as usize).map(|y| offsets[y + 1] - offsets[y]).collect();
    let mut heap: BinaryHeap<(u32, Reverse<u32>)> =
        gain.iter().enumerate().filter(|(_, &g)| g > 0).map(|(y, &g)| (g, Reverse(y as u32))).collect();
    let mut covered = vec![false; size as usize];
    let mut assign = vec![u32::MAX; size as usize];
    let mut words = Vec::new();
    let mut pre = Vec::new();
    let mut left = size;
    while left > 0 {
        let (g, Reverse(y)) = heap.pop().expect("uncovered members remain but no candidate covers them");
        let cur = gain[y as usize];
        if g != cur {
            if cur > 0 {
                heap.push((cur, Reverse(y)));
            }
            continue;
        }
        let pos = words.len() as u32;
        words.push(y);
        let mut got = 0u64;
        for &r in &lists[offsets[y as usize] as usize..offsets[y as usize + 1] as usize] {
            if covered[r as usize] {
                continue;
            }
            covered[r as usize] = true;
            assign[r as usize] = pos;
            got += 1;
            ball.walk(member(r as usize), 0, 0, 0, &mut |z| {
                gain[z as usize] -= 1;
                true
            });
        }
        debug_assert_eq!(got, g as u64);
        pre.push(got);
        left -= got;
    }
    let lengths = huffman_lengths(&pre);
    let code = PrefixCode::canonical(lengths, &words);
    Ok(Cover { n, k, counts: counts.to_vec(), words, preimage_counts: pre, assign, code })
}

type CoverKey = (usize, Vec<u32>, Halfspace);

fn cover_cache() -> &'static RwLock<HashMap<CoverKey, Arc<Cover>>> {
    static C: OnceLock<RwLock<HashMap<CoverKey, Arc<Cover>>>> = OnceLock::new();
    C.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Memoized [`greedy_cover`], keyed by type and canonical halfspace.
pub fn cover_for(counts: &[u32], h: &Halfspace, k: usize) -> Result<Arc<Cover>> {
    let key = (k, counts.to_vec(), h.clone());
    if let Some(c) = cover_cache().read().unwrap().get(&key) {
        return Ok(c.clone());
    }
    let c = Arc::new(greedy_cover(counts, h, k)?);
    let mut g = cover_cache().write().unwrap();
    let stored: u64 = g.values().map(|c| c.class_size()).sum();
    if stored > 40_000_000 || g.len() > 50_000 {
        g.clear();
    }
    Ok(g.entry(key).or_insert(c).clone())
}
