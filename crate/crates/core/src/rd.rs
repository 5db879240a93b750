//! Rate-distortion function by Blahut–Arimoto with bisection on the slope.

use crate::error::{invalid, Error, Result};
use crate::model::DistortionMeasure;
use crate::rng::Stream;
use crate::types::{enumerate_types, num_types, type_probability};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

#[derive(Debug, Clone, Copy)]
pub struct RdOptions {
    /// Slack below `d` accepted for the achieved distortion.
    pub tol_d: f64,
    pub max_inner: usize,
    /// Stop the inner loop when no output probability moves by more than this.
    pub inner_tol: f64,
    pub max_bisect: usize,
    /// Bound-gap threshold above which an inner loop that hit its cap is an error.
    pub tol_rate: f64,
}

impl Default for RdOptions {
    fn default() -> Self {
        RdOptions { tol_d: 1e-9, max_inner: 10_000, inner_tol: 1e-12, max_bisect: 64, tol_rate: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdSolution {
    /// Nats per symbol.
    pub rate: f64,
    /// Row-major J×K channel.
    pub w_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub lambda_star: f64,
    pub d_max: f64,
    /// Expected distortion achieved by `w_star`.
    pub distortion: f64,
    pub iterations: usize,
    /// Gap between the Blahut upper and lower bounds at the returned point.
    pub residual: f64,
    /// Largest deviation of `w_star` from the exponential-family form.
    pub kkt_residual: f64,
}

/// `min_k Σ_j p(j) ρ(j,k)`.
pub fn d_max_of(p: &[f64], rho: &DistortionMeasure) -> f64 {
    (0..rho.k())
        .map(|b| (0..rho.j()).map(|a| p[a] * rho.get(a, b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn argmin_column(p: &[f64], rho: &DistortionMeasure) -> usize {
    let mut best = 0;
    let mut bv = f64::INFINITY;
    for b in 0..rho.k() {
        let v: f64 = (0..rho.j()).map(|a| p[a] * rho.get(a, b)).sum();
        if v < bv {
            bv = v;
            best = b;
        }
    }
    best
}

struct Inner {
    w: Vec<f64>,
    q: Vec<f64>,
    d: f64,
    rate: f64,
    iters: usize,
    gap: f64,
    capped: bool,
}

struct Problem<'a> {
    p: &'a [f64],
    rho: &'a DistortionMeasure,
    active: Vec<usize>,
}

impl Problem<'_> {
    fn j(&self) -> usize {
        self.rho.j()
    }
    fn k(&self) -> usize {
        self.rho.k()
    }

    /// Fills rows of inactive symbols with their zero-column point mass.
    fn fill_inactive(&self, w: &mut [f64]) {
        let k = self.k();
        for a in 0..self.j() {
            if self.p[a] == 0.0 {
                let z = self.rho.zero_column(a);
                for b in 0..k {
                    w[a * k + b] = (b == z) as u8 as f64;
                }
            }
        }
    }

    fn output(&self, w: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut q = vec![0.0; k];
        for &a in &self.active {
            for b in 0..k {
                q[b] += self.p[a] * w[a * k + b];
            }
        }
        q
    }

    fn distortion(&self, w: &[f64]) -> f64 {
        let k = self.k();
        let mut s = 0.0;
        for &a in &self.active {
            for b in 0..k {
                s += self.p[a] * w[a * k + b] * self.rho.get(a, b);
            }
        }
        s
    }

    fn mutual_information(&self, w: &[f64], q: &[f64]) -> f64 {
        let k = self.k();
        let mut s = 0.0;
        for &a in &self.active {
            for b in 0..k {
                let v = w[a * k + b];
                if v > 0.0 && q[b] > 0.0 {
                    s += self.p[a] * v * (v / q[b]).ln();
                }
            }
        }
        s.max(0.0)
    }

    fn kernel(&self, lambda: f64) -> Vec<f64> {
        self.rho.values().iter().map(|&r| (-lambda * r).exp()).collect()
    }

    fn ba(&self, lambda: f64, q0: &[f64], opt: &RdOptions) -> Inner {
        let (j, k) = (self.j(), self.k());
        let e = self.kernel(lambda);
        let mut q = q0.to_vec();
        let mut w = vec![0.0; j * k];
        let mut iters = 0;
        let mut capped = true;
        while iters < opt.max_inner {
            iters += 1;
            let mut qn = vec![0.0; k];
            for &a in &self.active {
                let row = &e[a * k..(a + 1) * k];
                let z: f64 = row.iter().zip(&q).map(|(x, y)| x * y).sum();
                for b in 0..k {
                    let v = q[b] * row[b] / z;
                    w[a * k + b] = v;
                    qn[b] += self.p[a] * v;
                }
            }
            let delta = qn.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = qn;
            if delta < opt.inner_tol {
                capped = false;
                break;
            }
        }
        if capped {
            if let Some(qp) = self.polish(&e, &q) {
                q = qp;
            }
        }
        // Channel consistent with the final output estimate.
        let mut zs = vec![0.0; j];
        for &a in &self.active {
            let row = &e[a * k..(a + 1) * k];
            let z: f64 = row.iter().zip(&q).map(|(x, y)| x * y).sum();
            zs[a] = z;
            for b in 0..k {
                w[a * k + b] = q[b] * row[b] / z;
            }
        }
        // Blahut bound gap: max_k ln c_k − Σ_k q_k ln c_k.
        let mut c = vec![0.0; k];
        for &a in &self.active {
            for b in 0..k {
                c[b] += self.p[a] * e[a * k + b] / zs[a];
            }
        }
        let maxlc = c.iter().map(|v| v.ln()).fold(f64::NEG_INFINITY, f64::max);
        let avg: f64 = c.iter().zip(&q).filter(|(_, &qq)| qq > 0.0).map(|(cv, qq)| qq * cv.ln()).sum();
        let gap = (maxlc - avg).max(0.0);
        let capped = capped && gap > opt.inner_tol;
        self.fill_inactive(&mut w);
        let qo = self.output(&w);
        let d = self.distortion(&w);
        let rate = self.mutual_information(&w, &qo);
        Inner { w, q: qo, d, rate, iters, gap, capped }
    }

    /// `−Σ_a p_a ln Σ_b q_b E_ab`, the objective the BA update descends.
    fn objective(&self, e: &[f64], q: &[f64]) -> f64 {
        let k = self.k();
        self.active
            .iter()
            .map(|&a| -self.p[a] * e[a * k..(a + 1) * k].iter().zip(q).map(|(x, y)| x * y).sum::<f64>().ln())
            .sum()
    }

    /// Active-set Newton on the output distribution for a fixed slope, for
    /// when BA stalls near the boundary of the simplex.
    fn polish(&self, e: &[f64], q0: &[f64]) -> Option<Vec<f64>> {
        let k = self.k();
        let mut q = q0.to_vec();
        let mut support: Vec<usize> = (0..k).filter(|&b| q[b] > 1e-10).collect();
        let mut mass = 0.0;
        for b in 0..k {
            if !support.contains(&b) {
                q[b] = 0.0;
            }
            mass += q[b];
        }
        q.iter_mut().for_each(|v| *v /= mass);
        for _ in 0..200 {
            let z: Vec<f64> = (0..self.j())
                .map(|a| if self.p[a] > 0.0 { e[a * k..(a + 1) * k].iter().zip(&q).map(|(x, y)| x * y).sum() } else { 1.0 })
                .collect();
            let c: Vec<f64> = (0..k).map(|b| self.active.iter().map(|&a| self.p[a] * e[a * k + b] / z[a]).sum()).collect();
            let inner = support.iter().map(|&b| (c[b] - 1.0).abs()).fold(0.0, f64::max);
            let outside = (0..k).filter(|b| !support.contains(b)).max_by(|&x, &y| c[x].total_cmp(&c[y]));
            if inner < 1e-13 {
                match outside {
                    Some(b) if c[b] > 1.0 + 1e-12 => {
                        support.push(b);
                        support.sort_unstable();
                    }
                    _ => return Some(q),
                }
            }
            // Newton step on the support with Σ Δ = 0.
            let m = support.len();
            let mut a_mat = vec![vec![0.0; m + 2]; m + 1];
            for (r, &b) in support.iter().enumerate() {
                for (t, &b2) in support.iter().enumerate() {
                    a_mat[r][t] = self.active.iter().map(|&a| self.p[a] * e[a * k + b] * e[a * k + b2] / (z[a] * z[a])).sum();
                }
                a_mat[r][r] += 1e-12;
                a_mat[r][m] = 1.0;
                a_mat[r][m + 1] = c[b];
                a_mat[m][r] = 1.0;
            }
            let step = solve_dense(a_mat)?;
            let dir: Vec<f64> = step[..m].to_vec();
            let slope: f64 = -support.iter().zip(&dir).map(|(&b, dv)| c[b] * dv).sum::<f64>();
            if slope >= 0.0 {
                return if inner < 1e-9 { Some(q) } else { None };
            }
            let mut t: f64 = 1.0;
            let mut blocking = None;
            for (i, &b) in support.iter().enumerate() {
                if dir[i] < 0.0 && q[b] + t * dir[i] <= 0.0 {
                    t = -q[b] / dir[i];
                    blocking = Some(b);
                }
            }
            let f0 = self.objective(e, &q);
            let mut accepted = false;
            for _ in 0..60 {
                let mut qt = q.clone();
                for (i, &b) in support.iter().enumerate() {
                    qt[b] = (q[b] + t * dir[i]).max(0.0);
                }
                if self.objective(e, &qt) <= f0 + 1e-4 * t * slope {
                    q = qt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
                blocking = None;
            }
            if !accepted {
                return if inner < 1e-9 { Some(q) } else { None };
            }
            if let Some(b) = blocking {
                q[b] = 0.0;
                support.retain(|&v| v != b);
            }
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= total);
        }
        None
    }

    fn kkt_residual(&self, w: &[f64], q: &[f64], lambda: f64) -> f64 {
        let k = self.k();
        let e = self.kernel(lambda);
        let mut worst: f64 = 0.0;
        for &a in &self.active {
            let row = &e[a * k..(a + 1) * k];
            let z: f64 = row.iter().zip(q).map(|(x, y)| x * y).sum();
            for b in 0..k {
                worst = worst.max((w[a * k + b] - q[b] * row[b] / z).abs());
            }
        }
        worst
    }
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn validate(p: &[f64], d: f64, rho: &DistortionMeasure) -> Result<()> {
    if p.len() != rho.j() {
        return invalid("distribution and distortion sizes differ");
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("p is not a probability vector");
    }
    if !(d.is_finite() && d > 0.0) {
        return invalid("d must be positive");
    }
    Ok(())
}

/// `R(p, d, ρ)` together with the optimal channel and output distribution.
pub fn solve_rd(p: &[f64], d: f64, rho: &DistortionMeasure, opt: &RdOptions) -> Result<RdSolution> {
    validate(p, d, rho)?;
    let (j, k) = (rho.j(), rho.k());
    let d_max = d_max_of(p, rho);
    let prob = Problem { p, rho, active: (0..j).filter(|&a| p[a] > 0.0).collect() };
    if d >= d_max {
        let c = argmin_column(p, rho);
        let mut w = vec![0.0; j * k];
        for a in 0..j {
            w[a * k + c] = 1.0;
        }
        let mut q = vec![0.0; k];
        q[c] = 1.0;
        return Ok(RdSolution {
            rate: 0.0,
            distortion: prob.distortion(&w),
            w_star: w,
            q_star: q,
            lambda_star: 0.0,
            d_max,
            iterations: 0,
            residual: 0.0,
            kkt_residual: 0.0,
        });
    }
    let uniform = vec![1.0 / k as f64; k];
    let mut total_iters = 0;
    let mut hi = 2.0 * (k as f64).ln() / d;
    let mut hs = prob.ba(hi, &uniform, opt);
    total_iters += hs.iters;
    let mut doublings = 0;
    while hs.d > d {
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Convergence { iterations: total_iters, residual: hs.d - d });
        }
        hi *= 2.0;
        hs = prob.ba(hi, &uniform, opt);
        total_iters += hs.iters;
    }
    let mut lo = 0.0;
    let mut lo_sol: Option<Inner> = None;
    if hs.d < d - opt.tol_d {
        for _ in 0..opt.max_bisect {
            let mid = 0.5 * (lo + hi);
            let s = prob.ba(mid, &uniform, opt);
            total_iters += s.iters;
            if s.d > d {
                lo = mid;
                lo_sol = Some(s);
            } else {
                hi = mid;
                hs = s;
                if hs.d >= d - opt.tol_d {
                    break;
                }
            }
        }
    }
    let (w, q, rate, residual) = if hs.d >= d - opt.tol_d {
        (hs.w.clone(), hs.q.clone(), hs.rate, hs.gap)
    } else {
        // D(λ) jumps across a linear piece of R: interpolate the two channels.
        let (lw, ld) = match &lo_sol {
            Some(s) => (s.w.clone(), s.d),
            None => {
                let c = argmin_column(p, rho);
                let mut w = vec![0.0; j * k];
                for a in 0..j {
                    w[a * k + c] = 1.0;
                }
                let dd = prob.distortion(&w);
                (w, dd)
            }
        };
        let alpha = ((d - hs.d) / (ld - hs.d)).clamp(0.0, 1.0);
        let mut w: Vec<f64> = lw.iter().zip(&hs.w).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        prob.fill_inactive(&mut w);
        let q = prob.output(&w);
        let r = prob.mutual_information(&w, &q);
        (w, q, r, hs.gap)
    };
    if hs.capped && residual > opt.tol_rate.max(1e-7) {
        return Err(Error::Convergence { iterations: total_iters, residual });
    }
    let distortion = prob.distortion(&w);
    let kkt = prob.kkt_residual(&w, &q, hi);
    Ok(RdSolution {
        rate: rate.min((k as f64).ln()),
        w_star: w,
        q_star: q,
        lambda_star: hi,
        d_max,
        distortion,
        iterations: total_iters,
        residual,
        kkt_residual: kkt,
    })
}

type CacheKey = (Vec<i64>, u64, Vec<u64>, usize);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<RdSolution>>> {
    static C: OnceLock<RwLock<HashMap<CacheKey, Arc<RdSolution>>>> = OnceLock::new();
    C.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Memoized [`solve_rd`] with default options, keyed on `p` rounded to 1e-12.
pub fn solve_rd_cached(p: &[f64], d: f64, rho: &DistortionMeasure) -> Result<Arc<RdSolution>> {
    let key: CacheKey = (
        p.iter().map(|v| (v * 1e12).round() as i64).collect(),
        d.to_bits(),
        rho.values().iter().map(|v| v.to_bits()).collect(),
        rho.k(),
    );
    if let Some(s) = cache().read().unwrap().get(&key) {
        return Ok(s.clone());
    }
    let s = Arc::new(solve_rd(p, d, rho, &RdOptions::default())?);
    let mut g = cache().write().unwrap();
    if g.len() > 200_000 {
        g.clear();
    }
    Ok(g.entry(key).or_insert(s).clone())
}

/// Guard for plug-in expectations.
pub const MAX_PLUGIN_TYPES: u128 = 1_000_000;

/// `E_p[R(T, d, ρ)]` over the n-types of the source alphabet.
pub fn plug_in_expectation(p: &[f64], d: f64, rho: &DistortionMeasure, n: u32) -> Result<f64> {
    validate(p, d, rho)?;
    if n == 0 {
        return invalid("n must be positive");
    }
    let nt = num_types(n, p.len())?;
    if nt > MAX_PLUGIN_TYPES {
        return Err(Error::Size(format!("{nt} types exceed the plug-in limit {MAX_PLUGIN_TYPES}")));
    }
    let mut s = 0.0;
    for c in enumerate_types(n, p.len())? {
        let pr = type_probability(p, &c);
        if pr == 0.0 {
            continue;
        }
        let t: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
        s += pr * solve_rd_cached(&t, d, rho)?.rate;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdMembership {
    pub full_support_p: bool,
    pub q_star_full_support: bool,
    pub d_below_dmax: bool,
    pub q_star_unique_heuristic: bool,
}

impl SdMembership {
    pub fn all(&self) -> bool {
        self.full_support_p && self.q_star_full_support && self.d_below_dmax && self.q_star_unique_heuristic
    }
}

pub const FULL_SUPPORT_EPS: f64 = 1e-6;

/// Checks the output distribution for agreement from 8 random starts.
pub fn q_star_unique_heuristic(p: &[f64], rho: &DistortionMeasure, sol: &RdSolution) -> bool {
    let k = rho.k();
    if sol.lambda_star == 0.0 {
        let dm = sol.d_max;
        let ties = (0..k)
            .filter(|&b| ((0..rho.j()).map(|a| p[a] * rho.get(a, b)).sum::<f64>() - dm).abs() <= 1e-12)
            .count();
        return ties == 1;
    }
    let prob = Problem { p, rho, active: (0..rho.j()).filter(|&a| p[a] > 0.0).collect() };
    let opt = RdOptions { max_inner: 20_000, ..RdOptions::default() };
    let stream = Stream::labelled(0x5d_u64, "rd-unique", 0);
    for r in 0..8u64 {
        let mut cur = stream.cursor(r);
        let mut q0: Vec<f64> = (0..k).map(|_| 0.05 + cur.next_f64()).collect();
        let s: f64 = q0.iter().sum();
        q0.iter_mut().for_each(|v| *v /= s);
        let res = prob.ba(sol.lambda_star, &q0, &opt);
        let dev = res.q.iter().zip(&sol.q_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev > 1e-6 {
            return false;
        }
    }
    true
}

pub fn sd_membership(p: &[f64], d: f64, rho: &DistortionMeasure, sol: &RdSolution) -> SdMembership {
    SdMembership {
        full_support_p: p.iter().all(|&v| v > 0.0),
        q_star_full_support: sol.q_star.iter().all(|&v| v > FULL_SUPPORT_EPS),
        d_below_dmax: d < d_max_of(p, rho),
        q_star_unique_heuristic: q_star_unique_heuristic(p, rho, sol),
    }
}

/// S_d membership with every inequality holding by `margin`.
pub fn sd_membership_with_margin(p: &[f64], d: f64, rho: &DistortionMeasure, sol: &RdSolution, margin: f64) -> bool {
    p.iter().all(|&v| v >= margin)
        && sol.q_star.iter().all(|&v| v >= margin)
        && d <= d_max_of(p, rho) - margin
        && q_star_unique_heuristic(p, rho, sol)
}
