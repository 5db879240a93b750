//! Experiment configuration, redundancy-scaling runs, CSV output, and the
//! invariant suite.

use crate::bits::{elias2_encode, elias2_len, floor_log2, BitString, CodecId};
use crate::bounds::converse_floor;
use crate::distortion_space::{enumerate_realizable_classes, ClassTable, TINY_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::exact::{parse_decimal, to_f64};
use crate::model::{DistortionLevel, DistortionMeasure, SourceDistribution};
use crate::nml::{measure_rate_nml, sample_source, shtarkov_sum, NmlCodec};
use crate::rd::{plug_in_expectation, solve_rd_cached};
use crate::rng::{Cursor, Stream};
use crate::table_codecs::{measure_expected_rate, T1Codec, T2Codec, T2Options, TableCodec};
use crate::types::{enumerate_types, kl_divergence, num_types, tail_mass, type_probability};
use num_rational::BigRational;
use serde::Deserialize;
use serde_json::Value;
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
struct RawConfig {
    #[serde(default = "default_codecs")]
    codecs: Vec<String>,
    p: Vec<f64>,
    rho: Vec<Vec<Value>>,
    #[serde(default)]
    rho_max: Option<Value>,
    d: Value,
    #[serde(default)]
    n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    cap: Option<u64>,
    #[serde(default)]
    class_table: Option<PathBuf>,
}

fn default_codecs() -> Vec<String> {
    vec!["t1".into(), "t2".into(), "nml".into()]
}

fn default_trials() -> usize {
    1000
}

fn decimal_of(v: &Value) -> Result<BigRational> {
    match v {
        Value::String(s) => parse_decimal(s),
        Value::Number(n) => parse_decimal(&n.to_string()),
        _ => invalid(format!("expected a decimal string or number, got {v}")),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub codecs: Vec<CodecId>,
    pub p: SourceDistribution,
    pub rho: DistortionMeasure,
    pub d: DistortionLevel,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub cap: Option<u64>,
    pub class_table: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let j = raw.rho.len();
        let k = raw.rho.first().map_or(0, |r| r.len());
        if j == 0 || k == 0 || raw.rho.iter().any(|r| r.len() != k) {
            return Err(Error::Config("rho must be a non-empty rectangular matrix".into()));
        }
        let entries = raw.rho.iter().flatten().map(decimal_of).collect::<Result<Vec<_>>>()?;
        let rho_max = raw.rho_max.as_ref().map(decimal_of).transpose()?;
        let rho = DistortionMeasure::normalize(j, k, entries, rho_max)?;
        if raw.p.len() != j {
            return Err(Error::Config(format!("p has {} entries but rho has {j} rows", raw.p.len())));
        }
        let codecs = raw.codecs.iter().map(|c| CodecId::parse(c)).collect::<Result<Vec<_>>>()?;
        Ok(ExperimentConfig {
            codecs,
            p: SourceDistribution::new(raw.p)?,
            rho,
            d: DistortionLevel::new(decimal_of(&raw.d)?)?,
            n_grid: raw.n_grid,
            trials: raw.trials,
            seed: raw.seed,
            output: raw.output,
            cap: raw.cap,
            class_table: raw.class_table,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Binary Hamming, `p = (½, ½)`, `d = 0.1`, `n ∈ {8,12,16,20,24}`.
    pub fn reference() -> Self {
        Self::from_json(
            r#"{"codecs":["t1","t2","nml"],"p":[0.5,0.5],"rho":[["0","1"],["1","0"]],
                "d":"0.1","n_grid":[8,12,16,20,24],"trials":10000,"seed":1}"#,
        )
        .expect("reference config parses")
    }

    fn t2_codec(&self, n: usize) -> Result<T2Codec> {
        T2Codec::new(n, self.rho.j(), self.rho.k(), self.d.clone(), self.rho.rho_max_exact().clone())
    }

    /// A class table for `n`: the configured file when it matches, the
    /// exhaustive table when small enough, otherwise an empty registry.
    pub fn class_table_for(&self, n: usize) -> Result<ClassTable> {
        let (j, k) = (self.rho.j(), self.rho.k());
        if let Some(path) = self.class_table.as_ref().filter(|p| p.exists()) {
            let t = ClassTable::from_bytes(&std::fs::read(path)?)?;
            if t.n == n && t.j == j && t.k == k {
                return Ok(t);
            }
        }
        if num_types(n as u32, j * k)? <= TINY_LIMIT as u128 {
            enumerate_realizable_classes(n, j, k)
        } else {
            ClassTable::registry(n, j, k)
        }
    }
}

/// Pre-log coefficient of each codec's redundancy theorem.
pub fn theorem_coefficient(codec: CodecId, j: usize, k: usize) -> f64 {
    let (j, k) = (j as f64, k as f64);
    match codec {
        CodecId::T1 => j * j * k * k + j - 2.0,
        CodecId::T2 => j * k + j,
        CodecId::Nml => k / 2.0 + 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub codec: CodecId,
    pub n: usize,
    pub mean_rate: f64,
    pub ci: f64,
    pub r_anchor: f64,
    pub plugin_anchor: f64,
    pub converse_floor: f64,
    pub s_n: f64,
    pub theorem_coef: f64,
    pub trials: usize,
    /// `None` when the row was measured.
    pub skip_reason: Option<String>,
}

impl ExperimentRow {
    pub fn skipped(&self) -> bool {
        self.skip_reason.is_some()
    }
}

fn measure_row(cfg: &ExperimentConfig, codec: CodecId, n: usize, r_anchor: f64) -> Result<ExperimentRow> {
    let p = cfg.p.probs();
    let d = cfg.d.value();
    let plugin = plug_in_expectation(p, d, &cfg.rho, n as u32)?;
    let floor = converse_floor(p, d, &cfg.rho, n)?;
    let (mean, ci, trials) = match codec {
        CodecId::T1 => {
            let c = T1Codec::new(cfg.class_table_for(n)?);
            (measure_expected_rate(TableCodec::T1(&c), p, &cfg.rho, &cfg.d)?, 0.0, 0)
        }
        CodecId::T2 => (measure_expected_rate(TableCodec::T2(&cfg.t2_codec(n)?), p, &cfg.rho, &cfg.d)?, 0.0, 0),
        CodecId::Nml => {
            let seed = Stream::derive(cfg.seed, &[b"experiment", b"nml", &(n as u64).to_be_bytes()]).word(0);
            let r = measure_rate_nml(p, &cfg.rho, &cfg.d, n, cfg.trials, seed, cfg.cap)?;
            (r.mean, r.ci, cfg.trials)
        }
    };
    let s_n = if n > 1 { (mean - plugin) * n as f64 / (n as f64).ln() } else { f64::NAN };
    Ok(ExperimentRow {
        codec,
        n,
        mean_rate: mean,
        ci,
        r_anchor,
        plugin_anchor: plugin,
        converse_floor: floor,
        s_n,
        theorem_coef: theorem_coefficient(codec, cfg.rho.j(), cfg.rho.k()),
        trials,
        skip_reason: None,
    })
}

/// One row per codec and `n`. Guard violations become skipped rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let r_anchor = solve_rd_cached(cfg.p.probs(), cfg.d.value(), &cfg.rho)?.rate;
    let mut rows = Vec::new();
    for &codec in &cfg.codecs {
        for &n in &cfg.n_grid {
            let row = match measure_row(cfg, codec, n, r_anchor) {
                Ok(r) => r,
                Err(e @ (Error::Size(_) | Error::Precondition(_) | Error::Lookup(_))) => ExperimentRow {
                    codec,
                    n,
                    mean_rate: f64::NAN,
                    ci: f64::NAN,
                    r_anchor,
                    plugin_anchor: f64::NAN,
                    converse_floor: f64::NAN,
                    s_n: f64::NAN,
                    theorem_coef: theorem_coefficient(codec, cfg.rho.j(), cfg.rho.k()),
                    trials: 0,
                    skip_reason: Some(e.to_string()),
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "schema_version",
    "codec",
    "n",
    "status",
    "mean_rate",
    "ci",
    "r_anchor",
    "plugin_anchor",
    "converse_floor",
    "s_n",
    "theorem_coef",
    "trials",
    "skip_reason",
];

pub fn write_csv<W: std::io::Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.codec.name().to_string(),
            r.n.to_string(),
            if r.skipped() { "skipped" } else { "ok" }.to_string(),
            num(r.mean_rate),
            num(r.ci),
            num(r.r_anchor),
            num(r.plugin_anchor),
            num(r.converse_floor),
            num(r.s_n),
            num(r.theorem_coef),
            r.trials.to_string(),
            r.skip_reason.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Random normalized measure with entries on a grid of tenths, at least one
/// zero per row, and a random `d` between `lo` and `hi` times `rho_max`
/// (in twentieths).
pub fn random_instance(cur: &mut Cursor, j: usize, k: usize, lo: u64, hi: u64) -> (DistortionMeasure, DistortionLevel) {
    let mut raw = Vec::with_capacity(j * k);
    for _ in 0..j {
        let z = cur.below(k as u64) as usize;
        for b in 0..k {
            let v = if b == z { 0 } else { 1 + cur.below(20) as i64 };
            raw.push(BigRational::new(v.into(), 10.into()));
        }
    }
    let rho = DistortionMeasure::normalize(j, k, raw, None).expect("grid measure is valid");
    let frac = lo + cur.below(hi - lo + 1);
    let d = DistortionLevel::new(rho.rho_max_exact() * BigRational::new((frac as i64).into(), 20.into())).expect("positive d");
    (rho, d)
}

fn random_word(cur: &mut Cursor, n: usize, m: usize) -> Vec<u8> {
    (0..n).map(|_| cur.below(m as u64) as u8).collect()
}

/// Flag-plus-integer framing used by the random code, or a deliberately
/// broken variant for fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexLayout {
    Elias,
    /// Plain binary without a length prefix; not prefix-free.
    BinaryOnly,
}

pub fn index_frame(i: u64, layout: IndexLayout) -> Result<BitString> {
    let mut b = BitString::new();
    match i {
        0 => return invalid("indices start at 1"),
        1..=3 => b.write_bits(i - 1, 3)?,
        _ => {
            b.write_bits(0b011, 3)?;
            match layout {
                IndexLayout::Elias => elias2_encode(i, &mut b)?,
                IndexLayout::BinaryOnly => b.write_bits(i, floor_log2(i) + 1)?,
            }
        }
    }
    Ok(b)
}

/// Prefix-freeness of `codes` by sorting: a prefix sorts directly before
/// some string it prefixes.
pub fn prefix_free(codes: &[BitString]) -> bool {
    let mut v: Vec<String> = codes.iter().map(|c| c.to_bit_chars()).collect();
    v.sort();
    v.windows(2).all(|w| !w[1].starts_with(w[0].as_str()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub drop_correction: bool,
    pub binary_index_layout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs the cheap invariants of every module. The config supplies the seed
/// and trial count.
pub fn run_invariant_suite(cfg: &ExperimentConfig, faults: Faults) -> Vec<CheckResult> {
    let trials = cfg.trials.clamp(1, 2000);
    let seed = cfg.seed;
    let mut out = Vec::new();

    out.push(check("t2 d-semifaithful and round trip", || {
        let mut cur = Stream::derive(seed, &[b"verify", b"t2"]).cursor(0);
        let (mut bad, mut case2) = (0, 0);
        for _ in 0..trials {
            let (j, k) = (2 + cur.below(2) as usize, 2 + cur.below(2) as usize);
            let n = 2 + cur.below(5) as usize;
            let (rho, d) = random_instance(&mut cur, j, k, 1, 20);
            let mut c = T2Codec::new(n, j, k, d.clone(), rho.rho_max_exact().clone())?;
            c.options = T2Options { skip_correction: faults.drop_correction };
            let x = random_word(&mut cur, n, j);
            let rep = c.encode(&x, &rho)?;
            case2 += rep.case2 as usize;
            let y = c.decode(&mut rep.frame.bits.reader())?;
            if y != rep.frame.y || !rho.halfspace(&d, n)?.contains(&x, &y) {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("{trials} trials, {case2} corrections, {bad} failures")))
    }));

    out.push(check("t1 d-semifaithful and round trip", || {
        let mut cur = Stream::derive(seed, &[b"verify", b"t1"]).cursor(0);
        let c = T1Codec::new(ClassTable::registry(3, 2, 2)?);
        let mut bad = 0;
        for _ in 0..trials.min(500) {
            let (rho, d) = random_instance(&mut cur, 2, 2, 1, 20);
            let x = random_word(&mut cur, 3, 2);
            let f = c.encode(&x, &rho, &d)?;
            let y = c.decode(&mut f.bits.reader())?;
            if y != f.y || !rho.halfspace(&d, 3)?.contains(&x, &y) {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("{bad} failures, {} classes registered", c.table.read().unwrap().len())))
    }));

    out.push(check("nml d-semifaithful and round trip", || {
        let mut cur = Stream::derive(seed, &[b"verify", b"nml"]).cursor(0);
        let mut bad = 0;
        for t in 0..trials.min(500) as u64 {
            let (j, k) = (2 + cur.below(2) as usize, 2 + cur.below(2) as usize);
            let n = 2 + cur.below(7) as usize;
            let (rho, d) = random_instance(&mut cur, j, k, 8, 20);
            let c = NmlCodec::new(n, j, k, None)?;
            let x = random_word(&mut cur, n, j);
            let rep = c.encode(&x, &rho, &d, seed, t)?;
            let y = c.decode(&mut rep.frame.bits.reader(), seed, t)?;
            if y != rep.frame.y || !rho.halfspace(&d, n)?.contains(&x, &y) {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("{bad} failures")))
    }));

    out.push(check("index framing prefix-free", || {
        let layout = if faults.binary_index_layout { IndexLayout::BinaryOnly } else { IndexLayout::Elias };
        let codes = (1..=2000).map(|i| index_frame(i, layout)).collect::<Result<Vec<_>>>()?;
        Ok((prefix_free(&codes), "indices 1..=2000".into()))
    }));

    out.push(check("Elias length formula", || {
        let mut bad = 0;
        for i in 4..100_000u64 {
            let mut b = BitString::new();
            elias2_encode(i, &mut b)?;
            bad += (b.len() != elias2_len(i)?) as usize;
        }
        Ok((bad == 0, format!("{bad} mismatches")))
    }));

    out.push(check("Shtarkov sum vs brute force", || {
        let mut worst: f64 = 0.0;
        for k in 2..=3usize {
            for n in 1..=8usize {
                let mut total = 0.0;
                for idx in 0..(k as u64).pow(n as u32) {
                    let mut c = vec![0u32; k];
                    let mut v = idx;
                    for _ in 0..n {
                        c[(v % k as u64) as usize] += 1;
                        v /= k as u64;
                    }
                    total += c.iter().map(|&ci| (ci as f64 / n as f64).powi(ci as i32)).product::<f64>();
                }
                worst = worst.max((shtarkov_sum(n, k)?.value() / total - 1.0).abs());
            }
        }
        Ok((worst <= 1e-10, format!("max relative error {worst:.2e}")))
    }));

    out.push(check("type probability bound", || {
        let p = [0.2, 0.3, 0.5];
        let mut bad = 0;
        for n in 1..=12u32 {
            for c in enumerate_types(n, 3)? {
                let t: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
                if type_probability(&p, &c) > (-(n as f64) * kl_divergence(&t, &p)).exp() * (1.0 + 1e-12) {
                    bad += 1;
                }
            }
        }
        Ok((bad == 0, format!("{bad} violations")))
    }));

    out.push(check("type tail bound", || {
        let mut bad = 0;
        for p in [vec![0.5, 0.5], vec![0.2, 0.3, 0.5]] {
            let jf = p.len() as f64;
            for n in [4u32, 8, 16, 32] {
                if tail_mass(&p, n, (2.0 + 2.0 * jf).sqrt())? > (jf - 1.0).exp() / (n as f64).powi(2) {
                    bad += 1;
                }
            }
        }
        Ok((bad == 0, format!("{bad} violations")))
    }));

    out.push(check("t2 rate above converse floor", || {
        let p = cfg.p.probs();
        let mut worst = f64::INFINITY;
        for n in [2usize, 4, 6] {
            let c = cfg.t2_codec(n)?;
            let r = measure_expected_rate(TableCodec::T2(&c), p, &cfg.rho, &cfg.d)?;
            worst = worst.min(r - converse_floor(p, cfg.d.value(), &cfg.rho, n)?);
        }
        Ok((worst >= 0.0, format!("smallest margin {worst:.4}")))
    }));

    out.push(check("encoder determinism", || {
        let c = cfg.t2_codec(6)?;
        let j = cfg.rho.j();
        let x = sample_source(cfg.p.probs(), 6, &mut Stream::derive(seed, &[b"verify", b"det"]).cursor(0));
        let a = c.encode(&x, &cfg.rho)?.frame.bits;
        let b = c.encode(&x, &cfg.rho)?.frame.bits;
        let nml = NmlCodec::new(6, j, cfg.rho.k(), cfg.cap)?;
        let e = nml.encode(&x, &cfg.rho, &cfg.d, seed, 0)?.frame.bits;
        let f = nml.encode(&x, &cfg.rho, &cfg.d, seed, 0)?.frame.bits;
        Ok((a == b && e == f, "repeat encodes compared".into()))
    }));

    out
}

/// `R(p, d, ρ)` with `d` as a float, for the CLI.
pub fn rate_of(p: &[f64], d: f64, rho: &DistortionMeasure) -> Result<f64> {
    Ok(solve_rd_cached(p, d, rho)?.rate)
}

pub fn rho_max_f64(rho: &DistortionMeasure) -> f64 {
    to_f64(rho.rho_max_exact())
}
