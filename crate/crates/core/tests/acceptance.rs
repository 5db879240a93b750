//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Oracles here are computed independently of the library where
//! the library value is the thing under test.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::{BTreeSet, HashMap};
use std::panic::AssertUnwindSafe;
use std::sync::OnceLock;
use std::time::Instant;
use udc_core::bits::{elias2_decode, elias2_encode, BitString, CodecId};
use udc_core::bounds::{ball_probability_exact, converse_floor, lemma3_margin, shtarkov_asymptotic_gap, shtarkov_constant};
use udc_core::distortion_space::{enumerate_realizable_classes, growth_bound, ClassTable};
use udc_core::experiment::{run_experiment, write_csv, ExperimentConfig, ExperimentRow};
use udc_core::model::{DistortionLevel, DistortionMeasure};
use udc_core::nml::{aux_stream, codebook_stream, search_with, shtarkov_sum, NmlCodec, NmlSampler, SearchOutcome};
use udc_core::rd::{plug_in_expectation, solve_rd, RdOptions};
use udc_core::rng::{Cursor, Stream};
use udc_core::table_codecs::{T1Codec, T2Codec};
use udc_core::Error;
use udc_core::types::{enumerate_types, kl_divergence, tail_mass, type_probability};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

// ---------------------------------------------------------------- oracles

/// `Σ_i ρ(x_i, y_i) ≤ n d`, straight from the rational matrix.
fn within_oracle(x: &[u8], y: &[u8], rho: &DistortionMeasure, d: &DistortionLevel) -> bool {
    let k = rho.k();
    let sum: BigRational = x.iter().zip(y).map(|(&a, &b)| rho.exact()[a as usize * k + b as usize].clone()).sum();
    sum <= d.exact() * BigRational::from_integer(BigInt::from(x.len()))
}

fn h_b(d: f64) -> f64 {
    if d <= 0.0 || d >= 1.0 {
        0.0
    } else {
        -d * d.ln() - (1.0 - d) * (1.0 - d).ln()
    }
}

fn binom(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Random normalized measure with entries in hundredths up to 2, one zero
/// per row, and `d` in `[lo, 1]·ρ_max` (hundredths).
fn random_instance(cur: &mut Cursor, j: usize, k: usize, lo: u64) -> (DistortionMeasure, DistortionLevel) {
    let mut raw = Vec::with_capacity(j * k);
    for _ in 0..j {
        let z = cur.below(k as u64) as usize;
        for b in 0..k {
            raw.push(if b == z { BigRational::zero() } else { rat(1 + cur.below(200) as i64, 100) });
        }
    }
    let rho = DistortionMeasure::normalize(j, k, raw, None).unwrap();
    let frac = lo + cur.below(101 - lo);
    let d = DistortionLevel::new(rho.rho_max_exact() * rat(frac as i64, 100)).unwrap();
    (rho, d)
}

fn random_word(cur: &mut Cursor, n: usize, m: usize) -> Vec<u8> {
    (0..n).map(|_| cur.below(m as u64) as u8).collect()
}

// ------------------------------------------------------- shared trial runs

#[derive(Default, Clone, PartialEq)]
struct TrialLog {
    trials: usize,
    unfaithful: usize,
    mismatched: usize,
    corrections: usize,
    fallbacks: usize,
    /// Instances redrawn because a cover exceeded the size guards.
    guarded: usize,
    /// Concatenated frames, for rerun comparison.
    digest: Vec<Vec<u8>>,
    /// t1: (n, J, K, header bits); t2: (n, J, K, header+correction bits, ρmax/d).
    headers: Vec<(usize, usize, usize, usize, f64)>,
}

impl TrialLog {
    fn record(&mut self, x: &[u8], y_enc: &[u8], y_dec: &[u8], rho: &DistortionMeasure, d: &DistortionLevel, bits: &BitString) {
        self.trials += 1;
        if !within_oracle(x, y_dec, rho, d) {
            self.unfaithful += 1;
        }
        if y_enc != y_dec {
            self.mismatched += 1;
        }
        if self.digest.len() < 2000 {
            self.digest.push(bits.as_bytes().to_vec());
        }
    }
}

fn t1_trials(seed: u64, count: usize) -> TrialLog {
    let tables: Vec<T1Codec> = (1..=4).map(|n| T1Codec::new(enumerate_realizable_classes(n, 2, 2).unwrap())).collect();
    let mut cur = Stream::derive(seed, &[b"acceptance", b"t1"]).cursor(0);
    let mut log = TrialLog::default();
    for _ in 0..count {
        let n = 1 + cur.below(4) as usize;
        let (rho, d) = random_instance(&mut cur, 2, 2, 1);
        let x = random_word(&mut cur, n, 2);
        let c = &tables[n - 1];
        let f = c.encode(&x, &rho, &d).unwrap();
        let y = c.decode(&mut f.bits.reader()).unwrap();
        log.headers.push((n, 2, 2, f.header_bits, 0.0));
        log.record(&x, &f.y, &y, &rho, &d, &f.bits);
    }
    log
}

fn t2_trials(seed: u64, instances: usize) -> TrialLog {
    let mut cur = Stream::derive(seed, &[b"acceptance", b"t2"]).cursor(0);
    let mut log = TrialLog::default();
    // 400 instances, 25 blocks each, drawn from 5 types per instance.
    // Instances whose covers exceed the size guards are redrawn and counted.
    let mut done = 0;
    while done < instances {
        let (j, k) = (2 + cur.below(2) as usize, 2 + cur.below(2) as usize);
        let n_max = if k == 2 { 16 } else { 11 };
        let n = 2 + cur.below(n_max - 1) as usize;
        let (rho, d) = random_instance(&mut cur, j, k, 5);
        let c = T2Codec::new(n, j, k, d.clone(), rho.rho_max_exact().clone()).unwrap();
        let ratio = udc_core::exact::to_f64(&(rho.rho_max_exact() / d.exact()));
        let bases: Vec<Vec<u8>> = (0..5).map(|_| random_word(&mut cur, n, j)).collect();
        let mut frames = Vec::with_capacity(25);
        for b in 0..25 {
            let mut x = bases[b % 5].clone();
            for i in (1..n).rev() {
                x.swap(i, cur.below(i as u64 + 1) as usize);
            }
            match c.encode(&x, &rho) {
                Ok(rep) => frames.push((x, rep)),
                Err(Error::Size(_)) => break,
                Err(e) => panic!("{e}"),
            }
        }
        if frames.len() < 25 {
            log.guarded += 1;
            continue;
        }
        for (x, rep) in frames {
            let y = c.decode(&mut rep.frame.bits.reader()).unwrap();
            log.corrections += rep.case2 as usize;
            log.headers.push((n, j, k, rep.frame.header_bits + rep.frame.correction_bits, ratio));
            log.record(&x, &rep.frame.y, &y, &rho, &d, &rep.frame.bits);
        }
        done += 1;
    }
    log
}

fn nml_trials(seed: u64, count: u64) -> TrialLog {
    let mut cur = Stream::derive(seed, &[b"acceptance", b"nml"]).cursor(0);
    let mut log = TrialLog::default();
    for t in 0..count {
        let (j, k) = (2 + cur.below(2) as usize, 2 + cur.below(2) as usize);
        let n = 2 + cur.below(15) as usize;
        let (rho, d) = random_instance(&mut cur, j, k, 40);
        let c = NmlCodec::new(n, j, k, None).unwrap();
        let x = random_word(&mut cur, n, j);
        let rep = c.encode(&x, &rho, &d, seed, t).unwrap();
        let y = c.decode(&mut rep.frame.bits.reader(), seed, t).unwrap();
        log.fallbacks += matches!(rep.outcome, SearchOutcome::Exhausted) as usize;
        log.record(&x, &rep.frame.y, &y, &rho, &d, &rep.frame.bits);
    }
    log
}

struct Trials {
    t1: TrialLog,
    t2: TrialLog,
    nml: TrialLog,
    seconds: f64,
}

fn trials() -> &'static Trials {
    static T: OnceLock<Trials> = OnceLock::new();
    T.get_or_init(|| {
        let start = Instant::now();
        let (t1, t2, nml) = (t1_trials(11, 10_000), t2_trials(12, 400), nml_trials(13, 10_000));
        Trials { t1, t2, nml, seconds: start.elapsed().as_secs_f64() }
    })
}

fn reference_rows() -> &'static Vec<ExperimentRow> {
    static R: OnceLock<Vec<ExperimentRow>> = OnceLock::new();
    R.get_or_init(|| run_experiment(&ExperimentConfig::reference()).unwrap())
}

// --------------------------------------------------------------- criteria

fn c1_semifaithful() -> Outcome {
    let t = trials();
    let bad = t.t1.unfaithful + t.t2.unfaithful + t.nml.unfaithful;
    let enough = t.t1.trials >= 10_000 && t.t2.trials >= 10_000 && t.nml.trials >= 10_000;
    outcome(
        bad == 0 && enough && t.t2.corrections > 0 && t.seconds <= 300.0,
        format!(
            "trials t1/t2/nml = {}/{}/{}, violations {bad}, t2 corrections {}, t2 instances redrawn at size guards {}, nml fallbacks {}, {:.0}s",
            t.t1.trials, t.t2.trials, t.nml.trials, t.t2.corrections, t.t2.guarded, t.nml.fallbacks, t.seconds
        ),
    )
}

fn c2_determinism() -> Outcome {
    let t = trials();
    let mismatched = t.t1.mismatched + t.t2.mismatched + t.nml.mismatched;
    // Rerun the first 2000 trials of each generator and compare frames.
    let again = (t1_trials(11, 2000), t2_trials(12, 80), nml_trials(13, 2000));
    let same_frames = again.0.digest == t.t1.digest && again.1.digest == t.t2.digest && again.2.digest == t.nml.digest;
    let mut cfg = ExperimentConfig::reference();
    cfg.n_grid = vec![4, 6];
    cfg.trials = 300;
    let csv = |cfg: &ExperimentConfig| {
        let mut b = Vec::new();
        write_csv(&run_experiment(cfg).unwrap(), &mut b).unwrap();
        b
    };
    let same_csv = csv(&cfg) == csv(&cfg);
    outcome(
        mismatched == 0 && same_frames && same_csv,
        format!("decoder mismatches {mismatched}, rerun frames identical {same_frames}, CSV identical {same_csv}"),
    )
}

fn c3_rd_accuracy() -> Outcome {
    let rho = DistortionMeasure::hamming(2);
    let p = [0.5, 0.5];
    let mut worst_err: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for i in 1..=9 {
        let d = 0.05 * i as f64;
        let s = solve_rd(&p, d, &rho, &RdOptions::default()).unwrap();
        worst_err = worst_err.max((s.rate - (std::f64::consts::LN_2 - h_b(d))).abs());
        worst_kkt = worst_kkt.max(s.kkt_residual);
    }
    let zeros = [0.5, 0.6, 0.75, 1.0].iter().all(|&d| solve_rd(&p, d, &rho, &RdOptions::default()).unwrap().rate == 0.0);
    outcome(
        worst_err <= 1e-6 && worst_kkt <= 1e-6 && zeros,
        format!("max |R - closed form| {worst_err:.2e}, max KKT residual {worst_kkt:.2e}, R=0 beyond 0.5 {zeros}"),
    )
}

fn c4_tail_bound() -> Outcome {
    let dists: [Vec<Vec<f64>>; 2] = [
        vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![0.3, 0.7], vec![0.01, 0.99], vec![0.45, 0.55]],
        vec![vec![1.0 / 3.0; 3], vec![0.2, 0.3, 0.5], vec![0.1, 0.1, 0.8], vec![0.05, 0.45, 0.5], vec![0.6, 0.3, 0.1]],
    ];
    let mut violations = 0;
    let mut checks = 0;
    let mut oracle_err: f64 = 0.0;
    for ps in &dists {
        for p in ps {
            let jf = p.len() as f64;
            let a = (2.0 + 2.0 * jf).sqrt();
            for n in [4u32, 8, 16, 32, 64] {
                let v = tail_mass(p, n, a).unwrap();
                checks += 1;
                if v > (jf - 1.0).exp() / (n as f64 * n as f64) {
                    violations += 1;
                }
                if p.len() == 2 {
                    // binomial oracle: ‖t − p‖₂ = √2 |k/n − p₀|
                    let r = a * ((n as f64).ln() / n as f64).sqrt();
                    let o: f64 = (0..=n)
                        .filter(|&k| 2f64.sqrt() * (k as f64 / n as f64 - p[0]).abs() > r)
                        .map(|k| binom(n as u64, k as u64) * p[0].powi(k as i32) * p[1].powi((n - k) as i32))
                        .sum();
                    oracle_err = oracle_err.max((o - v).abs());
                }
            }
        }
    }
    outcome(
        violations == 0 && oracle_err < 1e-12,
        format!("{checks} checks, {violations} violations, binary oracle agreement {oracle_err:.1e}"),
    )
}

fn c5_type_probability() -> Outcome {
    let ps: Vec<Vec<f64>> = vec![
        vec![0.5, 0.5],
        vec![0.9, 0.1],
        vec![1.0, 0.0],
        vec![0.2, 0.3, 0.5],
        vec![0.7, 0.0, 0.3],
        vec![1.0 / 3.0; 3],
    ];
    let (mut checks, mut violations) = (0, 0);
    let mut oracle_err: f64 = 0.0;
    for p in &ps {
        for n in 1..=16u32 {
            for c in enumerate_types(n, p.len()).unwrap() {
                let t: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
                let pr = type_probability(p, &c);
                // multinomial oracle
                let mut coef = 1.0;
                let mut left = n as u64;
                for &ci in &c {
                    coef *= binom(left, ci as u64);
                    left -= ci as u64;
                }
                let o = coef * c.iter().zip(p).map(|(&ci, &pi)| pi.powi(ci as i32)).product::<f64>();
                oracle_err = oracle_err.max((o - pr).abs() / o.max(1e-300));
                checks += 1;
                if pr > (-(n as f64) * kl_divergence(&t, p)).exp() * (1.0 + 1e-12) {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0 && oracle_err < 1e-9,
        format!("{checks} types, {violations} violations, multinomial oracle rel. error {oracle_err:.1e}"),
    )
}

fn c6_shtarkov() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 2..=3usize {
        for n in 1..=12usize {
            // sum over all K^n words of the supremum likelihood
            let mut total = 0.0;
            let mut w = vec![0usize; n];
            loop {
                let mut c = vec![0usize; k];
                for &s in &w {
                    c[s] += 1;
                }
                total += c.iter().map(|&ci| (ci as f64 / n as f64).powi(ci as i32)).product::<f64>();
                let mut i = 0;
                while i < n && w[i] == k - 1 {
                    w[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
                w[i] += 1;
            }
            worst = worst.max((shtarkov_sum(n, k).unwrap().value() / total - 1.0).abs());
        }
    }
    let konst = 0.5 * (std::f64::consts::PI / 2.0).ln();
    let const_ok = (shtarkov_constant(2) - konst).abs() < 1e-12;
    let gap = shtarkov_asymptotic_gap(4096, 2).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && const_ok && gap.abs() <= 0.02 && secs <= 60.0,
        format!("max rel. error {worst:.1e}, constant {konst:.5}, gap(4096,2) = {gap:.2e}, {secs:.1}s"),
    )
}

fn c7_elias() -> Outcome {
    let flog = |v: u64| 63 - v.leading_zeros() as u64;
    let mut len_bad = 0;
    let mut trip_bad = 0;
    for i in 4..=1_000_000u64 {
        let mut b = BitString::new();
        elias2_encode(i, &mut b).unwrap();
        let (n0, n1) = (flog(i), flog(flog(i)));
        let formula = flog(i) + 1 + flog(n0) + 1 + 2 * flog(n1) + 1;
        len_bad += (b.len() as u64 != formula) as usize;
        let mut r = b.reader();
        trip_bad += (elias2_decode(&mut r).ok() != Some(i) || r.remaining() != 0) as usize;
    }
    // flag family packed as (length, bits) for the literal pairwise check
    let codes: Vec<(u32, u64)> = (1..=10_000u64)
        .map(|i| {
            let mut b = BitString::new();
            if i <= 3 {
                b.write_bits(i - 1, 3).unwrap();
            } else {
                b.write_bits(0b011, 3).unwrap();
                elias2_encode(i, &mut b).unwrap();
            }
            let v = (0..b.len()).fold(0u64, |acc, t| acc << 1 | b.get(t) as u64);
            (b.len() as u32, v)
        })
        .chain(std::iter::once((3, 0b100)))
        .collect();
    let mut prefix_pairs = 0u64;
    for (a, &(la, va)) in codes.iter().enumerate() {
        for (b, &(lb, vb)) in codes.iter().enumerate() {
            if a != b && la <= lb && vb >> (lb - la) == va {
                prefix_pairs += 1;
            }
        }
    }
    outcome(
        len_bad == 0 && trip_bad == 0 && prefix_pairs == 0,
        format!("length mismatches {len_bad}, round-trip failures {trip_bad}, prefix pairs {prefix_pairs}"),
    )
}

fn c8_acceptance_rejection() -> Outcome {
    // (a) raw acceptance rate over 10^5 draws
    let s8 = NmlSampler::new(8, 2).unwrap();
    let lr = s8.log_ratios(&[0.7, 0.3]);
    let iters = 100_000u64;
    let (_, stats) = search_with(&s8, &lr, &codebook_stream(5, 0), &aux_stream(5, 0), iters, |_| false);
    let p_acc = (-s8.shtarkov.log_value).exp();
    let rate = stats.accepted as f64 / iters as f64;
    let se = (p_acc * (1.0 - p_acc) / iters as f64).sqrt();
    let a_ok = (rate - p_acc).abs() <= 3.0 * se;

    // (b) first accepted word at n=4 against (Q*)^4, x of type (3,1)
    let rho = DistortionMeasure::hamming(2);
    let t = [0.75, 0.25];
    let q = solve_rd(&t, 0.1, &rho, &RdOptions::default()).unwrap().q_star;
    let q0 = (0.75 - 0.1) / (1.0 - 2.0 * 0.1);
    let q_ok = (q[0] - q0).abs() < 1e-6;
    let s4 = NmlSampler::new(4, 2).unwrap();
    let lr4 = s4.log_ratios(&q);
    let mut counts = [0u64; 16];
    for seed in 0..20u64 {
        for f in 0..1000u64 {
            let (o, _) = search_with(&s4, &lr4, &codebook_stream(seed, f), &aux_stream(seed, f), 1 << 20, |_| true);
            if let SearchOutcome::Found { word, .. } = o {
                counts[word.iter().fold(0usize, |a, &s| a * 2 + s as usize)] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let chi2: f64 = (0..16)
        .map(|w: usize| {
            let ones = w.count_ones() as i32;
            let e = total as f64 * q0.powi(4 - ones) * (1.0 - q0).powi(ones);
            (counts[w] as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(15.0).unwrap().cdf(chi2);
    let b_ok = q_ok && total == 20_000 && p_value > 0.01;

    // (c) E[i_J] = S_n / P at n=8, d=0.25, x of type (4,4)
    let d = DistortionLevel::from_decimal("0.25").unwrap();
    let x = [0u8, 1, 0, 1, 1, 0, 0, 1];
    let q8 = solve_rd(&[0.5, 0.5], 0.25, &rho, &RdOptions::default()).unwrap().q_star;
    let p_ball = ball_probability_exact(&[4, 4], &q8, &rho, &d).unwrap().log_p.exp();
    let p_binom = (0..=2).map(|k| binom(8, k)).sum::<f64>() / 256.0;
    let h = rho.halfspace(&d, 8).unwrap();
    let lr8 = s8.log_ratios(&q8);
    let idx: Vec<f64> = (0..10_000u64)
        .map(|f| match search_with(&s8, &lr8, &codebook_stream(77, f), &aux_stream(77, f), 1 << 32, |w| h.contains(&x, w)).0 {
            SearchOutcome::Found { index, .. } => index as f64,
            SearchOutcome::Exhausted => f64::NAN,
        })
        .collect();
    let m = idx.iter().sum::<f64>() / idx.len() as f64;
    let sd = (idx.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (idx.len() - 1) as f64).sqrt();
    let target = s8.shtarkov.value() / p_ball;
    let c_ok = (p_ball - p_binom).abs() < 1e-12 && (m - target).abs() <= 3.0 * sd / (idx.len() as f64).sqrt();

    outcome(
        a_ok && b_ok && c_ok,
        format!(
            "acceptance rate {rate:.5} vs 1/S_8 {p_acc:.5} (3 SE {:.5}); chi-square {chi2:.2} on 15 dof, p = {p_value:.3}; \
             mean i_J {m:.2} vs S_n/P {target:.2} (3 SE {:.2})",
            3.0 * se,
            3.0 * sd / (idx.len() as f64).sqrt()
        ),
    )
}

fn c9_converse() -> Outcome {
    let mut rows: Vec<ExperimentRow> = reference_rows().clone();
    let extra = [
        r#"{"p":[0.3,0.7],"rho":[["0","0.5","1.2"],["0.8","0","0.3"]],"d":"0.2","n_grid":[2,3,4,6],"trials":3000,"seed":4}"#,
        r#"{"p":[0.2,0.5,0.3],"rho":[["0","1"],["0.4","0"],["1","0.25"]],"d":"0.3","n_grid":[2,3,5,8],"trials":3000,"seed":5}"#,
    ];
    for e in extra {
        rows.extend(run_experiment(&ExperimentConfig::from_json(e).unwrap()).unwrap());
    }
    let measured: Vec<&ExperimentRow> = rows.iter().filter(|r| !r.skipped()).collect();
    let below: Vec<String> = measured
        .iter()
        .filter(|r| r.mean_rate - r.ci < r.converse_floor)
        .map(|r| format!("{} n={}", r.codec.name(), r.n))
        .collect();
    let per_codec = [CodecId::T1, CodecId::T2, CodecId::Nml].map(|c| measured.iter().filter(|r| r.codec == c).count());
    let tightest = measured.iter().map(|r| r.mean_rate - r.ci - r.converse_floor).fold(f64::INFINITY, f64::min);
    outcome(
        below.is_empty() && per_codec.iter().all(|&c| c > 0),
        format!(
            "{} measured rows (t1/t2/nml {}/{}/{}), below floor {:?}, smallest margin {tightest:.4}",
            measured.len(),
            per_codec[0],
            per_codec[1],
            per_codec[2],
            below
        ),
    )
}

fn c10_plugin_trend() -> Outcome {
    let rho = DistortionMeasure::hamming(2);
    let d = 0.1;
    let r_p = std::f64::consts::LN_2 - h_b(d);
    let mut scaled = Vec::new();
    let mut lib_err: f64 = 0.0;
    for n in [8u32, 16, 32, 64] {
        // closed-form plug-in: R(t) = h(t₀) − h(d) when d < min(t₀, 1−t₀)
        let e: f64 = (0..=n)
            .map(|k| {
                let t0 = k as f64 / n as f64;
                let r = if d < t0.min(1.0 - t0) { h_b(t0) - h_b(d) } else { 0.0 };
                binom(n as u64, k as u64) * 0.5f64.powi(n as i32) * r
            })
            .sum();
        lib_err = lib_err.max((plug_in_expectation(&[0.5, 0.5], d, &rho, n).unwrap() - e).abs());
        scaled.push((e - r_p) * n as f64 / (n as f64).ln());
    }
    let nonincreasing = scaled.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        nonincreasing && lib_err < 1e-6,
        format!("g_n n/ln n over n=8,16,32,64: {scaled:.4?}; library vs closed form {lib_err:.1e}"),
    )
}

fn c11_ball_margin() -> Outcome {
    let cfg = ExperimentConfig::reference();
    let pts = lemma3_margin(cfg.p.probs(), &cfg.rho, &cfg.d, &[8, 16, 32, 64]).unwrap();
    let c: Vec<f64> = pts.iter().map(|p| p.c_n).collect();
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (c[2] - c[3]).abs();
    outcome(min >= -10.0 && spread <= 1.0, format!("c_n over n=8,16,32,64: {c:.4?}; min {min:.3}, spread at 32/64 {spread:.3}"))
}

/// Labeling of every joint type by `Σ c·ρ ≤ n d`, computed directly.
fn labeling_oracle(joint: &[Vec<u32>], rho: &[BigRational], d: &BigRational, n: usize) -> Vec<bool> {
    let nd = d * BigRational::from_integer(BigInt::from(n));
    joint
        .iter()
        .map(|c| c.iter().zip(rho).map(|(&ci, r)| r * BigRational::from_integer(BigInt::from(ci))).sum::<BigRational>() <= nd)
        .collect()
}

fn table_labelings(t: &ClassTable) -> BTreeSet<Vec<bool>> {
    t.fingerprints().iter().map(|f| (0..f.len).map(|i| f.get(i)).collect()).collect()
}

fn c12_classes() -> Outcome {
    let tables: Vec<ClassTable> = (1..=4).map(|n| enumerate_realizable_classes(n, 2, 2).unwrap()).collect();
    // brute-force discovery at n=1 over a grid of normalized measures
    let joint1 = enumerate_types(1, 4).unwrap();
    let mut found = BTreeSet::new();
    let grid: Vec<BigRational> = (0..=8).map(|v| rat(v, 4)).collect();
    for z0 in 0..2 {
        for z1 in 0..2 {
            for a in &grid {
                for b in &grid {
                    let mut rho = vec![BigRational::zero(); 4];
                    rho[1 - z0] = a.clone();
                    rho[2 + 1 - z1] = b.clone();
                    for dd in 1..=10 {
                        found.insert(labeling_oracle(&joint1, &rho, &rat(dd, 4), 1));
                    }
                }
            }
        }
    }
    let n1_agree = found == table_labelings(&tables[0]) && found.len() == 9;
    // count against the growth bound, bound recomputed here
    let mut within = true;
    let mut counts = Vec::new();
    for n in 1..=3usize {
        let m = binom(n as u64 + 3, 3) as u64;
        let poly: f64 = (0..=5).map(|i| binom(m, i)).sum();
        let bound = poly.min(2f64.powi(m as i32));
        let lib = growth_bound(n, 2, 2).unwrap().to_string().parse::<f64>().unwrap();
        within &= tables[n - 1].len() as f64 <= bound && lib == bound;
        counts.push((tables[n - 1].len(), bound));
    }
    // interchangeability: feasibility of every (x, y) follows the class labeling
    let mut cur = Stream::derive(3, &[b"acceptance", b"classes"]).cursor(0);
    let mut disagreements = 0usize;
    let mut pairs = 0usize;
    for (ni, t) in tables.iter().enumerate() {
        let n = ni + 1;
        let joint = enumerate_types(n as u32, 4).unwrap();
        let pos: HashMap<Vec<u32>, usize> = joint.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let mut check = |rho: &DistortionMeasure, d: &DistortionLevel, class: usize| {
            let fp = &t.fingerprints()[class];
            for xi in 0..1usize << n {
                for yi in 0..1usize << n {
                    let x: Vec<u8> = (0..n).map(|i| (xi >> i & 1) as u8).collect();
                    let y: Vec<u8> = (0..n).map(|i| (yi >> i & 1) as u8).collect();
                    let mut c = vec![0u32; 4];
                    for i in 0..n {
                        c[x[i] as usize * 2 + y[i] as usize] += 1;
                    }
                    pairs += 1;
                    disagreements += (within_oracle(&x, &y, rho, d) != fp.get(pos[&c])) as usize;
                }
            }
        };
        for class in 0..t.len() {
            let r = t.representative(class).unwrap().clone();
            check(&r.rho, &r.d, class);
        }
        for _ in 0..300 {
            let (rho, d) = random_instance(&mut cur, 2, 2, 1);
            let class = t.class_index_of(&rho, &d).unwrap();
            check(&rho, &d, class);
        }
    }
    outcome(
        n1_agree && within && disagreements == 0,
        format!(
            "n=1 classes {} (brute force {}), counts vs bound {counts:?}, interchangeability {disagreements} of {pairs} pairs disagree",
            tables[0].len(),
            found.len()
        ),
    )
}

fn c13_headers() -> Outcome {
    let t = trials();
    let log2 = |v: f64| v.log2();
    let mut bad_t1 = 0;
    for &(n, j, k, bits, _) in &t.t1.headers {
        let (jk, jf) = ((j * k) as f64, j as f64);
        if bits as f64 > (jk * jk + jf - 2.0) * log2(n as f64 + 1.0) + jk * jk + jf {
            bad_t1 += 1;
        }
    }
    // registry-mode headers at larger n
    for n in [5usize, 8, 12, 16, 20, 24] {
        let c = T1Codec::new(ClassTable::registry(n, 2, 2).unwrap());
        if c.header_bits().unwrap() as f64 > 14.0 * log2(n as f64 + 1.0) + 18.0 {
            bad_t1 += 1;
        }
    }
    let mut bad_t2 = 0;
    let mut slack = f64::INFINITY;
    for &(n, j, k, bits, ratio) in &t.t2.headers {
        let (jk, jf, nf) = ((j * k) as f64, j as f64, n as f64);
        let budget = (jk + jf - 1.0) * log2(nf) + jk * log2(ratio + 1.0) + jk + jf + 3.0 + log2(nf) + log2(k as f64);
        slack = slack.min(budget - bits as f64);
        if bits as f64 > budget {
            bad_t2 += 1;
        }
    }
    outcome(
        bad_t1 == 0 && bad_t2 == 0,
        format!(
            "t1 frames {} over budget {bad_t1}; t2 frames {} over budget {bad_t2}, smallest slack {slack:.2} bits",
            t.t1.headers.len(),
            t.t2.headers.len()
        ),
    )
}

fn c14_scaling() -> Outcome {
    let rows = reference_rows();
    let report: Vec<String> = rows
        .iter()
        .map(|r| match &r.skip_reason {
            None => format!("{} n={} s_n={:.3} (coef {})", r.codec.name(), r.n, r.s_n, r.theorem_coef),
            Some(_) => format!("{} n={} skipped", r.codec.name(), r.n),
        })
        .collect();
    let finite = rows.iter().filter(|r| !r.skipped()).all(|r| r.s_n.is_finite());
    let last = |c: CodecId| rows.iter().filter(|r| r.codec == c && !r.skipped()).max_by_key(|r| r.n);
    let at = |c: CodecId, n: usize| rows.iter().find(|r| r.codec == c && r.n == n && !r.skipped()).map(|r| r.s_n);
    let (nml, t2) = (last(CodecId::Nml), last(CodecId::T2));
    let ordered = match (nml, t2) {
        (Some(a), Some(b)) => a.s_n < b.s_n && at(CodecId::Nml, b.n).is_some_and(|v| v < b.s_n),
        _ => false,
    };
    let floor_ok = rows.iter().filter(|r| !r.skipped()).all(|r| {
        let f = converse_floor(&[0.5, 0.5], 0.1, &DistortionMeasure::hamming(2), r.n).unwrap();
        (f - r.converse_floor).abs() < 1e-12
    });
    outcome(
        finite && ordered && floor_ok,
        format!(
            "nml s_n at n={} vs t2 s_n at n={}: {:.3} < {:.3}; {}",
            nml.map_or(0, |r| r.n),
            t2.map_or(0, |r| r.n),
            nml.map_or(f64::NAN, |r| r.s_n),
            t2.map_or(f64::NAN, |r| r.s_n),
            report.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 14] = [
        (1, "d-semifaithfulness, all codecs", c1_semifaithful),
        (2, "round-trip determinism", c2_determinism),
        (3, "rate-distortion solver accuracy", c3_rd_accuracy),
        (4, "type tail bound", c4_tail_bound),
        (5, "type probability bound", c5_type_probability),
        (6, "Shtarkov sum and asymptotics", c6_shtarkov),
        (7, "Elias coder and flag family", c7_elias),
        (8, "acceptance-rejection correctness", c8_acceptance_rejection),
        (9, "converse floor", c9_converse),
        (10, "plug-in gap trend", c10_plugin_trend),
        (11, "ball probability margin", c11_ball_margin),
        (12, "equivalence classes", c12_classes),
        (13, "header budgets", c13_headers),
        (14, "redundancy scaling report", c14_scaling),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = std::panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        println!(
            "criterion {id:>2} {}: {name} ({}) [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
