//! Exact and numeric oracles: d-ball probabilities, converse floor, plug-in
//! gap, Shtarkov asymptotics.

use crate::error::{invalid, Error, Result};
use crate::model::{DistortionLevel, DistortionMeasure};
use crate::nml::shtarkov_sum;
use crate::rd::{plug_in_expectation, sd_membership_with_margin, solve_rd_cached};
use crate::types::nearest_type;
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;

pub const MAX_BALL_N: usize = 64;
pub const SD_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallProbability {
    /// `ln P(ρ_n(x, Y) ≤ d)` with `Y` i.i.d. `Q`.
    pub log_p: f64,
    /// Always true here: every input is converted to an exact rational.
    pub rational: bool,
}

/// Exact DP over the integer-scaled distortion sum. Depends on `x` only
/// through its type `counts`.
pub fn ball_probability_exact(counts: &[u32], q: &[f64], rho: &DistortionMeasure, d: &DistortionLevel) -> Result<BallProbability> {
    let n: usize = counts.iter().map(|&c| c as usize).sum();
    if n == 0 || n > MAX_BALL_N {
        return Err(Error::Size(format!("ball DP needs 1 ≤ n ≤ {MAX_BALL_N}, got {n}")));
    }
    if counts.len() != rho.j() || q.len() != rho.k() {
        return invalid("dimension mismatch in ball probability");
    }
    let h = rho.halfspace(d, n)?;
    let mut state: BTreeMap<i128, f64> = BTreeMap::from([(0, 1.0)]);
    let mut log_scale = 0.0;
    for (a, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let mut next: BTreeMap<i128, f64> = BTreeMap::new();
            for (&s, &pr) in &state {
                for (b, &qb) in q.iter().enumerate() {
                    if qb <= 0.0 {
                        continue;
                    }
                    let t = s + h.weight(a, b);
                    if t <= h.limit {
                        *next.entry(t).or_insert(0.0) += pr * qb;
                    }
                }
            }
            let mass: f64 = next.values().sum();
            if mass == 0.0 {
                return Ok(BallProbability { log_p: f64::NEG_INFINITY, rational: true });
            }
            next.values_mut().for_each(|v| *v /= mass);
            log_scale += mass.ln();
            state = next;
        }
    }
    Ok(BallProbability { log_p: log_scale.min(0.0), rational: true })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginPoint {
    pub n: usize,
    pub log_p: f64,
    pub rate: f64,
    /// `ln P + n R(t) + ½ ln n`.
    pub c_n: f64,
}

/// Ball-probability margin at the nearest `n`-type to `p`, for each `n`.
pub fn lemma3_margin(p: &[f64], rho: &DistortionMeasure, d: &DistortionLevel, n_grid: &[usize]) -> Result<Vec<MarginPoint>> {
    n_grid
        .iter()
        .map(|&n| {
            let counts = nearest_type(p, n as u32);
            let t: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let sol = solve_rd_cached(&t, d.value(), rho)?;
            if !sd_membership_with_margin(&t, d.value(), rho, &sol, SD_MARGIN) {
                return Err(Error::Precondition(format!("type {counts:?} fails the S_d guard")));
            }
            let bp = ball_probability_exact(&counts, &sol.q_star, rho, d)?;
            Ok(MarginPoint { n, log_p: bp.log_p, rate: sol.rate, c_n: bp.log_p + n as f64 * sol.rate + 0.5 * (n as f64).ln() })
        })
        .collect()
}

/// `E_p[R(T,d,ρ)] − (JK+J−2)(ln n + 1)/n`.
pub fn converse_floor(p: &[f64], d: f64, rho: &DistortionMeasure, n: usize) -> Result<f64> {
    let e = plug_in_expectation(p, d, rho, n as u32)?;
    let c = (rho.j() * rho.k() + rho.j()) as f64 - 2.0;
    let nf = n as f64;
    Ok(e - c * (nf.ln() + 1.0) / nf)
}

/// `E_p[R(T,d,ρ)] − R(p,d,ρ)`.
pub fn plug_in_gap(p: &[f64], d: f64, rho: &DistortionMeasure, n: usize) -> Result<f64> {
    Ok(plug_in_expectation(p, d, rho, n as u32)? - solve_rd_cached(p, d, rho)?.rate)
}

/// `ln(Γ(½)^K / ((2π)^{(K−1)/2} Γ(K/2)))`.
pub fn shtarkov_constant(k: usize) -> f64 {
    let kf = k as f64;
    kf * ln_gamma(0.5) - (kf - 1.0) / 2.0 * (2.0 * std::f64::consts::PI).ln() - ln_gamma(kf / 2.0)
}

/// `ln S_n − (K−1)/2 ln n − constant`.
pub fn shtarkov_asymptotic_gap(n: usize, k: usize) -> Result<f64> {
    if n < 2 {
        return invalid("asymptotic gap needs n ≥ 2");
    }
    Ok(shtarkov_sum(n, k)?.log_value - (k as f64 - 1.0) / 2.0 * (n as f64).ln() - shtarkov_constant(k))
}
