use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use crate::bits::{elias2_decode, elias2_encode, elias2_len, BitString, CodecId, Container};
use crate::bounds::ball_probability_exact;
use crate::model::{normalize_distortion, within, DistortionLevel, DistortionMeasure};
use crate::nml::{shtarkov_sum, NmlCodec, SearchOutcome};
use crate::rd::solve_rd;
use crate::table_codecs::T2Codec;
use crate::types::{enumerate_types, num_types, perm_rank, perm_unrank, rank, type_class_size, type_of, unrank};

fn measure(j: usize, k: usize, hundredths: &[u32]) -> DistortionMeasure {
    let raw: Vec<BigRational> = hundredths.iter().map(|&v| BigRational::new(BigInt::from(v), BigInt::from(100))).collect();
    DistortionMeasure::normalize(j, k, raw, None).unwrap()
}

fn instance() -> impl Strategy<Value = (usize, usize, Vec<u32>, u32)> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(j, k)| (Just(j), Just(k), prop::collection::vec(0u32..=200, j * k), 5u32..=100))
}

/// `d` as a percentage of `rho_max`, always at least 0.05.
fn level(rho: &DistortionMeasure, pct: u32) -> Option<DistortionLevel> {
    let d = rho.rho_max_exact() * BigRational::new(BigInt::from(pct), BigInt::from(100));
    DistortionLevel::new(d).ok()
}

fn word(len: usize, m: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..m as u8, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elias_round_trip(vals in prop::collection::vec(1u64..u64::MAX / 2, 1..20)) {
        let mut s = BitString::new();
        for &v in &vals {
            elias2_encode(v, &mut s).unwrap();
        }
        prop_assert_eq!(s.len(), vals.iter().map(|&v| elias2_len(v).unwrap()).sum::<usize>());
        let mut r = s.reader();
        for &v in &vals {
            prop_assert_eq!(elias2_decode(&mut r).unwrap(), v);
        }
        prop_assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn elias_truncation_is_an_error(v in 2u64..1_000_000_000) {
        let mut s = BitString::new();
        elias2_encode(v, &mut s).unwrap();
        let cut = BitString::from_bit_chars(&s.to_bit_chars()[..s.len() - 1]);
        prop_assert!(elias2_decode(&mut cut.reader()).is_err());
    }

    #[test]
    fn container_round_trip(bits in prop::collection::vec(any::<bool>(), 0..300), seed in any::<u64>(), cap in any::<u32>(), n in 1u16..100) {
        let mut payload = BitString::new();
        for b in bits {
            payload.push(b);
        }
        let c = Container { codec: CodecId::Nml, n, j: 2, k: 3, seed, cap, rng: 1, payload };
        let bytes = c.pack().unwrap();
        let back = Container::unpack(&bytes).unwrap();
        prop_assert_eq!(back.pack().unwrap(), bytes);
        prop_assert_eq!(back.payload.to_bit_chars(), c.payload.to_bit_chars());
    }

    #[test]
    fn container_unpack_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = Container::unpack(&bytes);
    }

    #[test]
    fn type_rank_round_trip(n in 1u32..12, m in 1usize..4, pick in any::<u64>()) {
        let total = num_types(n, m).unwrap();
        let idx = pick as u128 % total;
        let c = unrank(idx, n, m).unwrap();
        prop_assert_eq!(c.iter().sum::<u32>(), n);
        prop_assert_eq!(rank(&c), idx);
    }

    #[test]
    fn perm_rank_round_trip(x in word(9, 3)) {
        let t = type_of(&x, 3).unwrap();
        let r = perm_rank(&x, &t.counts);
        prop_assert!((r as u128) < type_class_size(&t.counts).try_into().unwrap_or(u128::MAX));
        prop_assert_eq!(perm_unrank(r, &t.counts), x);
    }

    #[test]
    fn normalize_is_idempotent(raw in prop::collection::vec(0.0f64..5.0, 6)) {
        let (m1, _) = normalize_distortion(&raw, 2, 3).unwrap();
        let (m2, off) = normalize_distortion(m1.values(), 2, 3).unwrap();
        prop_assert_eq!(m1.values(), m2.values());
        prop_assert!(off.iter().all(|&o| o == 0.0));
        for a in 0..2 {
            prop_assert_eq!(m1.get(a, m1.zero_column(a)), 0.0);
        }
    }

    #[test]
    fn rd_is_monotone_in_d((j, k, h, _) in instance(), p0 in 1u32..99, d1 in 1u32..50, d2 in 50u32..100) {
        let rho = measure(j, k, &h);
        let mut p = vec![p0 as f64 / 100.0];
        let rest = (1.0 - p[0]) / (j - 1) as f64;
        p.extend(std::iter::repeat_n(rest, j - 1));
        let rm = rho.rho_max();
        let a = solve_rd(&p, rm * d1 as f64 / 100.0, &rho, &Default::default()).unwrap();
        let b = solve_rd(&p, rm * d2 as f64 / 100.0, &rho, &Default::default()).unwrap();
        prop_assert!(a.rate >= 0.0 && b.rate >= 0.0);
        prop_assert!(b.rate <= a.rate + 1e-9);
        prop_assert!(a.kkt_residual <= 1e-6 && b.kkt_residual <= 1e-6);
        prop_assert!(a.rate <= crate::types::entropy(&p) + 1e-9);
    }

    #[test]
    fn t2_is_semifaithful((j, k, h, pct) in instance(), seed in any::<u64>()) {
        let rho = measure(j, k, &h);
        let Some(d) = level(&rho, pct) else { return Ok(()) };
        let n = 5;
        let x: Vec<u8> = (0..n).map(|i| ((seed >> (3 * i)) % j as u64) as u8).collect();
        let codec = T2Codec::new(n, j, k, d.clone(), rho.rho_max_exact().clone()).unwrap();
        let rep = codec.encode(&x, &rho).unwrap();
        let y = codec.decode(&mut rep.frame.bits.reader()).unwrap();
        prop_assert_eq!(&y, &rep.frame.y);
        prop_assert!(within(&x, &y, &rho, &d).unwrap());
    }

    #[test]
    fn nml_is_semifaithful((j, k, h, pct) in instance(), seed in any::<u64>(), frame in 0u64..1000) {
        let rho = measure(j, k, &h);
        let Some(d) = level(&rho, pct.max(40)) else { return Ok(()) };
        let n = 6;
        let x: Vec<u8> = (0..n).map(|i| ((seed >> (5 * i)) % j as u64) as u8).collect();
        let codec = NmlCodec::new(n, j, k, None).unwrap();
        let rep = codec.encode(&x, &rho, &d, seed, frame).unwrap();
        let y = codec.decode(&mut rep.frame.bits.reader(), seed, frame).unwrap();
        prop_assert_eq!(&y, &rep.frame.y);
        prop_assert!(within(&x, &y, &rho, &d).unwrap());
        if let SearchOutcome::Found { word, .. } = &rep.outcome {
            prop_assert_eq!(word, &y);
        }
    }

    #[test]
    fn ball_probability_depends_only_on_type((j, k, h, pct) in instance(), x in word(3, 2), q0 in 1u32..99) {
        let rho = measure(j, k, &h);
        let Some(d) = level(&rho, pct) else { return Ok(()) };
        let mut q = vec![q0 as f64 / 100.0];
        q.extend(std::iter::repeat_n((1.0 - q[0]) / (k - 1) as f64, k - 1));
        let t = type_of(&x, j).unwrap();
        let bp = ball_probability_exact(&t.counts, &q, &rho, &d).unwrap();
        // Brute force over every y in B^3.
        let mut direct = 0.0;
        for idx in 0..k.pow(3) {
            let y: Vec<u8> = (0..3).map(|i| ((idx / k.pow(i)) % k) as u8).collect();
            if within(&x, &y, &rho, &d).unwrap() {
                direct += y.iter().map(|&b| q[b as usize]).product::<f64>();
            }
        }
        prop_assert!((bp.log_p.exp() - direct).abs() < 1e-12);
    }
}

#[test]
fn shtarkov_matches_brute_force_small() {
    for k in 1..=3usize {
        for n in 1..=6usize {
            let mut total = 0.0;
            for idx in 0..k.pow(n as u32) {
                let w: Vec<u8> = (0..n).map(|i| ((idx / k.pow(i as u32)) % k) as u8).collect();
                let t = type_of(&w, k).unwrap();
                total += t.counts.iter().filter(|&&c| c > 0).map(|&c| (c as f64 / n as f64).powi(c as i32)).product::<f64>();
            }
            let s = shtarkov_sum(n, k).unwrap().value();
            assert!((s - total).abs() <= 1e-12 * total, "n={n} K={k}: {s} vs {total}");
        }
    }
}

#[test]
fn type_enumeration_is_in_rank_order() {
    let all = enumerate_types(7, 3).unwrap();
    assert_eq!(all.len() as u128, num_types(7, 3).unwrap());
    for (i, c) in all.iter().enumerate() {
        assert_eq!(rank(c), i as u128);
    }
}
