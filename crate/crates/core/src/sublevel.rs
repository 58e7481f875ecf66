//! Sublevel-set measures of `|det Q(., t)|` on the unit cube, power-law
//! exponent fits, and the decreasing-weight integral machinery: the weight
//! `F(s) = integral over [0,1] of |s|^(rho-1) rho^(2n) d rho`, its closed
//! lower bound, the Tchebyshev constant it yields, the rearrangement
//! comparison for multiaffine functions, and the joint (u, t) integral whose
//! value is bounded by 2^(2n).
//!
//! All estimators draw from chunked counter-based substreams and reduce in
//! chunk order, so results are bit-identical across worker counts.

use crate::bilinear::{BilinearMap, PerturbationVector};
use crate::curvature::{curvature_verdict, CurvatureReport, SearchConfig, Verdict};
use crate::error::{Error, Result};
use crate::rng::{chunk_count, chunk_range, CounterRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BATCHES: usize = 10;

/// Measured eps -> measure curve for one map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SublevelProfile {
    pub q_ref: String,
    pub eps: Vec<f64>,
    pub measure: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
    /// Cube dimension; measures live in [0, 2^n].
    pub n: usize,
}

/// Least-squares exponent fit over the usable window of a profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    pub theta_hat: f64,
    pub window: (f64, f64),
    /// Requested theta -> empirical constant sup measure(eps)/eps^theta.
    pub c_theta: Vec<(f64, f64)>,
    /// Per-point log-residuals of the fit, in window order.
    pub residuals: Vec<f64>,
    pub used_points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegralReport {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub divergent: bool,
    pub batch_means: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoubleIntegralReport {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub bound: f64,
    pub pass: bool,
    pub divergent: bool,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RearrangementReport {
    pub lhs: f64,
    pub rhs: f64,
    pub diff_ci: f64,
    pub pass: bool,
    pub rhs_divergent: bool,
    pub samples: u64,
    pub seed: u64,
}

fn validate_square(q: &BilinearMap<f64>, what: &str) -> Result<()> {
    if !q.is_square() {
        return Err(Error::Precondition(format!("{what} needs n_out = n_in")));
    }
    Ok(())
}

/// Hit counts per threshold on the shared sample stream.
fn threshold_hits(q: &BilinearMap<f64>, eps: &[f64], samples: u64, seed: u64) -> Vec<u64> {
    let n = q.n_in();
    let chunks = chunk_count(samples);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::substream(seed, c);
            let mut scratch = Vec::new();
            let mut t = vec![0.0f64; n];
            let mut hits = vec![0u64; eps.len()];
            for _ in chunk_range(c, samples) {
                rng.fill_cube(&mut t);
                let d = q.abs_det_contract_right(&t, &mut scratch);
                for (h, &e) in hits.iter_mut().zip(eps) {
                    if d <= e {
                        *h += 1;
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; eps.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn binomial_ci(volume: f64, hits: u64, samples: u64) -> f64 {
    let p = hits as f64 / samples as f64;
    3.0 * volume * (p * (1.0 - p) / samples as f64).sqrt()
}

/// Monte-Carlo measure of `{t in [-1,1]^n : |det Q(., t)| <= eps}` with a
/// binomial 3-sigma half-width.
pub fn sublevel_measure(
    q: &BilinearMap<f64>,
    eps: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    validate_square(q, "sublevel measure")?;
    if eps <= 0.0 {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if samples < 1000 {
        return Err(Error::Precondition("need at least 1000 samples".into()));
    }
    let volume = 2f64.powi(q.n_in() as i32);
    let hits = threshold_hits(q, &[eps], samples, seed)[0];
    let estimate = volume * hits as f64 / samples as f64;
    Ok((estimate, binomial_ci(volume, hits, samples)))
}

/// One measure per threshold, all thresholds sharing the same sample stream
/// (so the curve is exactly monotone in eps).
pub fn sublevel_profile(
    q: &BilinearMap<f64>,
    q_ref: &str,
    eps: &[f64],
    samples: u64,
    seed: u64,
) -> Result<SublevelProfile> {
    validate_square(q, "sublevel profile")?;
    if eps.is_empty() {
        return Err(Error::Precondition("empty eps grid".into()));
    }
    if eps.iter().any(|&e| e <= 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if samples < 1000 {
        return Err(Error::Precondition("need at least 1000 samples".into()));
    }
    let n = q.n_in();
    let volume = 2f64.powi(n as i32);
    let hits = threshold_hits(q, eps, samples, seed);
    let measure: Vec<f64> = hits.iter().map(|&h| volume * h as f64 / samples as f64).collect();
    let ci_halfwidth: Vec<f64> = hits.iter().map(|&h| binomial_ci(volume, h, samples)).collect();
    Ok(SublevelProfile {
        q_ref: q_ref.to_string(),
        eps: eps.to_vec(),
        measure,
        ci_halfwidth,
        samples,
        seed,
        n,
    })
}

/// Points that carry a usable log-log signal: nonzero, below half saturation,
/// and backed by at least 100 hits.
fn usable_points(profile: &SublevelProfile) -> Vec<(f64, f64)> {
    let volume = 2f64.powi(profile.n as i32);
    let mut pts: Vec<(f64, f64)> = profile
        .eps
        .iter()
        .zip(&profile.measure)
        .filter(|&(_, &m)| {
            let hits = (m / volume * profile.samples as f64).round();
            m > 0.0 && m < volume / 2.0 && hits >= 100.0
        })
        .map(|(&e, &m)| (e, m))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts
}

/// Raw least-squares slope of log measure against log eps over the usable
/// window, plus the empirical constants for the requested exponents.
pub fn fit_exponent(profile: &SublevelProfile, thetas: &[f64]) -> Result<ExponentFit> {
    if thetas.iter().any(|&t| !(0.0..1.0).contains(&t)) {
        return Err(Error::Precondition("requested thetas must lie in [0, 1)".into()));
    }
    let pts = usable_points(profile);
    if pts.len() < 4 {
        return Err(Error::Fit(format!(
            "only {} usable profile points (need 4); extend the eps grid or add samples",
            pts.len()
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> =
        xs.iter().zip(&ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let c_theta = thetas
        .iter()
        .map(|&th| {
            let c = pts
                .iter()
                .map(|&(e, m)| m / e.powf(th))
                .fold(f64::NEG_INFINITY, f64::max);
            (th, c)
        })
        .collect();
    Ok(ExponentFit {
        theta_hat: slope,
        window: (pts[0].0, pts[pts.len() - 1].0),
        c_theta,
        residuals,
        used_points: pts.len(),
    })
}

/// `F(s) = integral over [0,1] of |s|^(rho-1) rho^(2n) d rho`, positive and
/// decreasing in |s|, infinite at s = 0. Evaluated to ~1e-10 relative error
/// by a series for moderate log|s|, integration by parts for very small |s|,
/// and adaptive quadrature for very large |s|.
pub fn eval_f(s: f64, n: usize) -> f64 {
    let m = 2 * n as i32;
    let a = s.abs().ln();
    if s == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 12.0 {
        // e^{-a} * sum_j a^j / (j! (m + j + 1))
        let mut term = 1.0f64;
        let mut sum = 1.0 / (m as f64 + 1.0);
        for j in 1..200 {
            term *= a / j as f64;
            let add = term / (m + j + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        (-a).exp() * sum
    } else if a < 0.0 {
        // F = sum_k (-1)^k (m)_k / a^(k+1)  -  (-1)^m m! e^{-a} / a^(m+1)
        let mut falling = 1.0f64;
        let mut sum = 0.0;
        let mut sign = 1.0;
        let mut apow = a;
        for k in 0..=m {
            sum += sign * falling / apow;
            falling *= (m - k) as f64;
            sign = -sign;
            apow *= a;
        }
        let mut mfact = 1.0f64;
        for k in 2..=m {
            mfact *= k as f64;
        }
        let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
        sum - parity * mfact * (-a).exp() / a.powi(m + 1)
    } else {
        // |s| > e^12: integrand rho^m e^{a(rho-1)} is smooth and peaked at 1
        fn simpson(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, flo: f64, fmid: f64, fhi: f64, tol: f64, depth: u32) -> f64 {
            let mid = 0.5 * (lo + hi);
            let lmid = 0.5 * (lo + mid);
            let rmid = 0.5 * (mid + hi);
            let flm = f(lmid);
            let frm = f(rmid);
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
            let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
            let split = left + right;
            if depth == 0 || (split - whole).abs() <= 15.0 * tol * (1.0 + split.abs()) {
                split + (split - whole) / 15.0
            } else {
                simpson(f, lo, mid, flo, flm, fmid, tol / 2.0, depth - 1)
                    + simpson(f, mid, hi, fmid, frm, fhi, tol / 2.0, depth - 1)
            }
        }
        let g = move |rho: f64| rho.powi(m) * (a * (rho - 1.0)).exp();
        simpson(&g, 0.0, 1.0, g(0.0), g(0.5), g(1.0), 1e-12, 48)
    }
}

/// Closed lower bound for `F`:
/// `min{(1-theta)^(2n+1), 1-(1-theta)^(2n+1)} / (2n+1) * |s|^(-theta)`.
pub fn f_lower_bound(theta: f64, s: f64, n: usize) -> Result<f64> {
    if !(0.0 < theta && theta < 1.0) {
        return Err(Error::Precondition("theta must lie in (0, 1)".into()));
    }
    let p = 2 * n as i32 + 1;
    let t = (1.0 - theta).powi(p);
    Ok(t.min(1.0 - t) / p as f64 * s.abs().powf(-theta))
}

/// Constant such that `measure(eps) <= C eps^theta` whenever `integral`
/// dominates the F-integral of the map.
pub fn tchebyshev_constant(integral: f64, theta: f64, n: usize) -> Result<f64> {
    if !(0.0 < theta && theta < 1.0) {
        return Err(Error::Precondition("theta must lie in (0, 1)".into()));
    }
    if !integral.is_finite() || integral <= 0.0 {
        return Err(Error::Precondition("integral must be finite and positive".into()));
    }
    let p = 2 * n as i32 + 1;
    let t = (1.0 - theta).powi(p);
    Ok(integral * p as f64 / t.min(1.0 - t))
}

struct BatchAccum {
    sums: Vec<f64>,
    counts: Vec<u64>,
    nonfinite: u64,
}

impl BatchAccum {
    fn new() -> Self {
        Self { sums: vec![0.0; BATCHES], counts: vec![0; BATCHES], nonfinite: 0 }
    }
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.nonfinite += other.nonfinite;
        self
    }
    /// (overall mean, batch means, 3-sigma CI of the mean, divergent flag)
    fn summarize(&self) -> (f64, Vec<f64>, f64, bool) {
        let total: f64 = self.sums.iter().sum();
        let count: u64 = self.counts.iter().sum();
        let mean = total / count as f64;
        let batch_means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|&(_, &c)| c > 0)
            .map(|(&s, &c)| s / c as f64)
            .collect();
        let b = batch_means.len() as f64;
        let var =
            batch_means.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (b * (b - 1.0));
        let ci = 3.0 * var.sqrt();
        let spread = batch_means
            .iter()
            .map(|&x| (x - mean).abs())
            .fold(0.0f64, f64::max);
        let divergent = self.nonfinite > 0 || spread > 0.05 * mean.abs();
        (mean, batch_means, ci, divergent)
    }
}

/// Monte-Carlo mean of `integrand` over `samples` points of `[-1,1]^dim`,
/// accumulated into ten batches for a heavy-tail-tolerant CI.
fn mc_batches(
    dim: usize,
    samples: u64,
    seed: u64,
    integrand: impl Fn(&[f64], &mut Vec<f64>) -> f64 + Sync,
) -> BatchAccum {
    let chunks = chunk_count(samples);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::substream(seed, c);
            let mut acc = BatchAccum::new();
            let mut point = vec![0.0f64; dim];
            let mut scratch = Vec::new();
            for idx in chunk_range(c, samples) {
                rng.fill_cube(&mut point);
                let v = integrand(&point, &mut scratch);
                let b = (idx as u128 * BATCHES as u128 / samples as u128) as usize;
                if v.is_finite() {
                    acc.sums[b] += v;
                } else {
                    acc.nonfinite += 1;
                }
                acc.counts[b] += 1;
            }
            acc
        })
        .reduce(BatchAccum::new, BatchAccum::merge)
}

/// Monte-Carlo estimate of the F-integral of `|det Q(., t)|` over the cube,
/// with a running-batch divergence flag for heavy tails.
pub fn integral_f(q: &BilinearMap<f64>, samples: u64, seed: u64) -> Result<IntegralReport> {
    validate_square(q, "F-integral")?;
    if samples < 1000 {
        return Err(Error::Precondition("need at least 1000 samples".into()));
    }
    let n = q.n_in();
    let volume = 2f64.powi(n as i32);
    let acc = mc_batches(n, samples, seed, |t, scratch| {
        eval_f(q.abs_det_contract_right(t, scratch), n)
    });
    let (mean, batch_means, ci, divergent) = acc.summarize();
    Ok(IntegralReport {
        estimate: if divergent && acc.nonfinite > 0 { f64::MAX } else { volume * mean },
        ci_halfwidth: volume * ci,
        divergent,
        batch_means: batch_means.iter().map(|&m| volume * m).collect(),
        samples,
        seed,
    })
}

/// One coordinate drawn from the symmetric density on [-1,1] proportional to
/// `1 / (|x| ln^(1+beta)(e/|x|))` with beta = 2/5. Sampling: with v uniform
/// in (0,1], `y = ln(e/|x|) = v^(-1/beta)` and `|x| = exp(1 - y)`; the weight
/// against the uniform density is `1/g(|x|) = |x| y^(1+beta) / beta`.
/// `ln|x|` and the log-weight are exact even where `|x|` itself underflows,
/// which is what lets the deep tail of the F-integrand be evaluated.
#[derive(Clone, Copy, Debug)]
struct HeavyCoord {
    x: f64,
    ln_x: f64,
    ln_w: f64,
}

#[inline]
fn log_heavy_coordinate(rng: &mut CounterRng) -> HeavyCoord {
    let bits = rng.next_u64();
    let v = 1.0 - (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64); // (0, 1]
    let y = 1.0 / (v * v * v.sqrt()); // v^(-5/2)
    let ln_x = 1.0 - y;
    let x = ln_x.exp();
    // ln(2.5 x y / v): 2.5 x y / v = x y^(1+beta) / beta
    let ln_w = 2.5f64.ln() + ln_x + y.ln() - v.ln();
    let sign = if bits & 1 == 1 { -1.0 } else { 1.0 };
    HeavyCoord { x: sign * x, ln_x, ln_w }
}

/// `ln F(s)` for `ln|s| = a <= -700`, where F itself overflows. The
/// integration-by-parts expansion gives `F = m! e^{-a} / |a|^(m+1)` up to a
/// relative error below `e^(-690)` in this regime (m = 2n).
fn ln_f_deep_tail(a: f64, n: usize) -> f64 {
    let m = 2 * n as i32;
    let mut ln_mfact = 0.0f64;
    for k in 2..=m {
        ln_mfact += (k as f64).ln();
    }
    ln_mfact - a - (m + 1) as f64 * (-a).ln()
}

/// `ln |det(N(t) + diag(u_i t_i))|`, `-inf` when singular. Rows of `N(t)`
/// that vanish identically are peeled off by cofactor expansion so their
/// diagonal factors enter through exact logarithms; that keeps the
/// diagonal-map cases exact far below f64 underflow. The remaining block is
/// eliminated with partial pivoting, summing pivot logs.
fn ln_abs_det_perturbed(q: &BilinearMap<f64>, u: &[HeavyCoord], t: &[HeavyCoord]) -> f64 {
    let n = q.n_in();
    let mut nt = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += q.coeff(i, j, k) * t[k].x;
            }
            nt[i * n + j] = s;
        }
    }
    let mut ln_acc = 0.0f64;
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        if (0..n).all(|j| nt[i * n + j] == 0.0) {
            ln_acc += u[i].ln_x + t[i].ln_x;
        } else {
            keep.push(i);
        }
    }
    let m = keep.len();
    if m > 0 {
        let mut a = vec![0.0f64; m * m];
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                a[r * m + c] = nt[i * n + j];
            }
            let d = keep.iter().position(|&j| j == i).unwrap();
            a[r * m + d] += u[i].x * t[i].x;
        }
        for k in 0..m {
            let mut piv = k;
            let mut best = a[k * m + k].abs();
            for r in k + 1..m {
                let v = a[r * m + k].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return f64::NEG_INFINITY;
            }
            if piv != k {
                for j in k..m {
                    a.swap(piv * m + j, k * m + j);
                }
            }
            ln_acc += best.ln();
            for r in k + 1..m {
                let f = a[r * m + k] / a[k * m + k];
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..m {
                    a[r * m + j] -= f * a[k * m + j];
                }
            }
        }
    }
    ln_acc
}

/// Joint Monte-Carlo over `(u, t)` of `F(|det Q_u(., t)|)`; the exact value
/// of the double integral never exceeds `2^(2n)`, with equality at `Q = 0`.
///
/// The integrand has a `1/s` (up to logs) singularity on the zero set of the
/// determinant, so uniform sampling converges only logarithmically precisely
/// in the equality cases, where the zero set is the union of coordinate
/// hyperplanes. Coordinates are therefore drawn from a log-heavy importance
/// density: the estimator stays unbiased for every map and has finite
/// variance in the axis-dominated cases.
pub fn double_integral_check(
    q: &BilinearMap<f64>,
    samples: u64,
    seed: u64,
) -> Result<DoubleIntegralReport> {
    validate_square(q, "double integral")?;
    if samples < 1000 {
        return Err(Error::Precondition("need at least 1000 samples".into()));
    }
    let n = q.n_in();
    let volume = 4f64.powi(n as i32);
    let bound = 4f64.powi(n as i32); // 2^(2n)
    let chunks = chunk_count(samples);
    let acc = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::substream(seed, c);
            let mut acc = BatchAccum::new();
            let mut coords = vec![HeavyCoord { x: 0.0, ln_x: 0.0, ln_w: 0.0 }; 2 * n];
            for idx in chunk_range(c, samples) {
                let mut ln_w = 0.0;
                for slot in coords.iter_mut() {
                    *slot = log_heavy_coordinate(&mut rng);
                    ln_w += slot.ln_w;
                }
                let (u, t) = coords.split_at(n);
                let a = ln_abs_det_perturbed(q, u, t);
                let b = (idx as u128 * BATCHES as u128 / samples as u128) as usize;
                let v = if a == f64::NEG_INFINITY {
                    // structurally singular sample: F(0) = infinity
                    f64::INFINITY
                } else if a < -700.0 {
                    (ln_f_deep_tail(a, n) + ln_w).exp()
                } else {
                    eval_f(a.exp(), n) * ln_w.exp()
                };
                if v.is_finite() {
                    acc.sums[b] += v;
                } else {
                    acc.nonfinite += 1;
                }
                acc.counts[b] += 1;
            }
            acc
        })
        .reduce(BatchAccum::new, BatchAccum::merge);
    let (mean, _, ci, divergent) = acc.summarize();
    let estimate = volume * mean;
    let ci = volume * ci;
    Ok(DoubleIntegralReport {
        estimate,
        ci_halfwidth: ci,
        bound,
        pass: estimate <= bound + ci,
        divergent,
        samples,
        seed,
    })
}

/// Function with vanishing pure second partials in every coordinate, stored
/// as one coefficient per variable subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiaffine {
    n: usize,
    /// coeffs[mask] multiplies the product of u_i over bits i of mask.
    coeffs: Vec<f64>,
}

impl Multiaffine {
    /// Build from terms given as (exponent vector, coefficient); exponents
    /// above 1 violate the multiaffine hypothesis.
    pub fn from_terms(n: usize, terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        if n == 0 || n > 20 {
            return Err(Error::Precondition("multiaffine dimension must be in 1..=20".into()));
        }
        let mut coeffs = vec![0.0; 1 << n];
        for (idx, (exps, c)) in terms.iter().enumerate() {
            if exps.len() != n {
                return Err(Error::Dimension(format!(
                    "term {idx}: exponent vector has length {}, expected {n}",
                    exps.len()
                )));
            }
            if let Some(pos) = exps.iter().position(|&e| e > 1) {
                return Err(Error::Hypothesis(format!(
                    "term {idx} has exponent {} on u_{}; pure second partials must vanish",
                    exps[pos],
                    pos + 1
                )));
            }
            let mask = exps
                .iter()
                .enumerate()
                .fold(0usize, |m, (i, &e)| m | ((e as usize) << i));
            coeffs[mask] += c;
        }
        Ok(Self { n, coeffs })
    }

    /// phi(u) = det(N_Q(t) + diag(u_i t_i)) as a multiaffine function of u.
    /// Coefficient of the subset S is `prod_{i in S} t_i` times the minor of
    /// N with the rows in S replaced by unit rows.
    pub fn det_perturbation(q: &BilinearMap<f64>, t: &[f64]) -> Result<Self> {
        validate_square(q, "det perturbation")?;
        let n = q.n_in();
        if t.len() != n {
            return Err(Error::Dimension("t must have length n".into()));
        }
        if n > 12 {
            return Err(Error::Precondition("det perturbation supports n <= 12".into()));
        }
        let base = q.contract_right(t)?;
        let mut coeffs = vec![0.0; 1 << n];
        let mut buf = vec![0.0; n * n];
        for (mask, c) in coeffs.iter_mut().enumerate() {
            let mut tprod = 1.0;
            for i in 0..n {
                for j in 0..n {
                    buf[i * n + j] = if mask >> i & 1 == 1 {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        base[(i, j)]
                    };
                }
                if mask >> i & 1 == 1 {
                    tprod *= t[i];
                }
            }
            // signed determinant of the substituted matrix
            let det = {
                let mut m = crate::matrix::Mat::<f64>::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = buf[i * n + j];
                    }
                }
                m.det_lu().unwrap()
            };
            *c = tprod * det;
        }
        Ok(Self { n, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n);
        let mut acc = 0.0;
        for (mask, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut prod = c;
            let mut bits = mask;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                prod *= u[i];
                bits &= bits - 1;
            }
            acc += prod;
        }
        acc
    }

    /// Coefficient of `u_1 ... u_n`, i.e. the full mixed partial at 0.
    pub fn leading_coeff(&self) -> f64 {
        self.coeffs[(1 << self.n) - 1]
    }
}

/// Shared-stream comparison of `integral of F(|phi(u)|)` against the same
/// integral for the extremal function `u_1...u_n` times the leading
/// coefficient, over a centered box given by half-widths.
pub fn rearrangement_check(
    phi: &Multiaffine,
    box_halfwidths: &[f64],
    f_dim: usize,
    samples: u64,
    seed: u64,
) -> Result<RearrangementReport> {
    let n = phi.dim();
    if box_halfwidths.len() != n {
        return Err(Error::Dimension("box half-widths must match the dimension".into()));
    }
    if box_halfwidths.iter().any(|&h| h <= 0.0) {
        return Err(Error::Precondition("box half-widths must be positive".into()));
    }
    if samples < 1000 {
        return Err(Error::Precondition("need at least 1000 samples".into()));
    }
    let top = phi.leading_coeff();
    let chunks = chunk_count(samples);
    // paired accumulation: lhs, rhs, and their difference share every sample
    let (lhs_acc, rhs_acc, diff_acc) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::substream(seed, c);
            let mut u = vec![0.0f64; n];
            let mut lhs = BatchAccum::new();
            let mut rhs = BatchAccum::new();
            let mut diff = BatchAccum::new();
            for idx in chunk_range(c, samples) {
                for (x, &h) in u.iter_mut().zip(box_halfwidths) {
                    *x = h * rng.next_sym();
                }
                let b = (idx as u128 * BATCHES as u128 / samples as u128) as usize;
                let l = eval_f(phi.eval(&u).abs(), f_dim);
                let prod: f64 = u.iter().product();
                let r = eval_f((top * prod).abs(), f_dim);
                for (acc, v) in [(&mut lhs, l), (&mut rhs, r), (&mut diff, l - r)] {
                    if v.is_finite() {
                        acc.sums[b] += v;
                    } else {
                        acc.nonfinite += 1;
                    }
                    acc.counts[b] += 1;
                }
            }
            (lhs, rhs, diff)
        })
        .reduce(
            || (BatchAccum::new(), BatchAccum::new(), BatchAccum::new()),
            |a, b| (a.0.merge(b.0), a.1.merge(b.1), a.2.merge(b.2)),
        );

    let volume: f64 = box_halfwidths.iter().map(|h| 2.0 * h).product();
    let (lhs_mean, _, _, _) = lhs_acc.summarize();
    let rhs_divergent = rhs_acc.nonfinite > 0;
    let (rhs_mean, _, _, _) = rhs_acc.summarize();
    let (_, _, diff_ci, _) = diff_acc.summarize();
    let lhs = volume * lhs_mean;
    let rhs = if rhs_divergent { f64::MAX } else { volume * rhs_mean };
    let diff_ci = volume * diff_ci;
    let pass = rhs_divergent || lhs <= rhs + diff_ci;
    Ok(RearrangementReport { lhs, rhs, diff_ci, pass, rhs_divergent, samples, seed })
}

/// Per-trial outcome of the perturbation experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub u: Vec<f64>,
    pub theta_hat: Option<f64>,
    pub fit_error: Option<String>,
    pub curvature: CurvatureReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: u64,
    pub radius: f64,
    pub theta_target: f64,
    pub good_theta_fraction: Option<f64>,
    pub nondegenerate_fraction: Option<f64>,
    pub records: Vec<TrialRecord>,
    pub samples_per_trial: u64,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
}

/// Parameters for the per-trial profile, fit, and curvature runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub eps_grid: Vec<f64>,
    pub samples: u64,
    pub search: SearchConfig,
    pub tolerance: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        // log-spaced grid reaching small enough thresholds that a clean
        // power law fits above theta = 0.9
        let eps_grid = (0..7).map(|k| 10f64.powf(-7.5 + 0.5 * k as f64)).collect();
        Self {
            eps_grid,
            samples: 200_000_000,
            search: SearchConfig { seeds_per_dim: 512, refine_iters: 150, seed: 0 },
            tolerance: crate::curvature::DEFAULT_TOLERANCE,
        }
    }
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = CounterRng::substream(seed, tag ^ 0x7472_6961_6c73);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::{complex_multiplication, product_type, BilinearMap};

    /// Closed-form measure of {|t1 t2| <= eps} on [-1,1]^2.
    fn product_measure(eps: f64) -> f64 {
        if eps >= 1.0 {
            4.0
        } else {
            4.0 * eps * (1.0 + (1.0 / eps).ln())
        }
    }

    /// Midpoint-grid cross-check of a 2-D sublevel measure.
    fn quadrature_measure(det: impl Fn(f64, f64) -> f64, eps: f64, cells: usize) -> f64 {
        let h = 2.0 / cells as f64;
        let mut hits = 0u64;
        for i in 0..cells {
            let t1 = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..cells {
                let t2 = -1.0 + (j as f64 + 0.5) * h;
                if det(t1, t2).abs() <= eps {
                    hits += 1;
                }
            }
        }
        h * h * hits as f64
    }

    /// Adaptive Simpson for the F-weight, independent of eval_f's branches.
    fn f_quadrature(s: f64, n: usize) -> f64 {
        let m = 2 * n as i32;
        let a = s.abs().ln();
        let g = move |rho: f64| if rho == 0.0 && a < 0.0 { 0.0 } else { rho.powi(m) * (a * (rho - 1.0)).exp() };
        // plain composite Simpson with many panels; slow but independent
        let panels = 200_000;
        let h = 1.0 / panels as f64;
        let mut acc = g(0.0) + g(1.0);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn closed_form_oracle_matches_quadrature() {
        for eps in [1e-1, 1e-2, 1e-3] {
            let grid = quadrature_measure(|a, b| a * b, eps, 4000);
            let exact = product_measure(eps);
            assert!(
                (grid - exact).abs() < 0.02 * exact + 2e-3,
                "eps={eps}: grid {grid} vs closed form {exact}"
            );
        }
        let grid = quadrature_measure(|a, b| a * a + b * b, 0.25, 4000);
        assert!((grid - std::f64::consts::PI * 0.25).abs() < 1e-3);
    }

    #[test]
    fn measure_matches_product_oracle() {
        let q = product_type(2);
        let (m, ci) = sublevel_measure(&q, 0.01, 1_000_000, 7).unwrap();
        let exact = product_measure(0.01);
        assert!((m - exact).abs() <= ci.max(1e-3), "m={m} exact={exact} ci={ci}");
        // the whole cube qualifies at eps = 1
        let (m, _) = sublevel_measure(&q, 1.0, 10_000, 7).unwrap();
        assert_eq!(m, 4.0);
    }

    #[test]
    fn measure_matches_disc_oracle() {
        let q = complex_multiplication();
        let (m, ci) = sublevel_measure(&q, 0.25, 1_000_000, 11).unwrap();
        let exact = std::f64::consts::PI * 0.25;
        assert!((m - exact).abs() <= ci.max(1e-3), "m={m} exact={exact} ci={ci}");
    }

    #[test]
    fn measure_rejects_bad_input() {
        let q = product_type(2);
        assert!(sublevel_measure(&q, 0.0, 10_000, 1).is_err());
        assert!(sublevel_measure(&q, 0.5, 10, 1).is_err());
        let rect: BilinearMap<f64> = BilinearMap::zero(2, 1);
        assert!(sublevel_measure(&rect, 0.5, 10_000, 1).is_err());
    }

    #[test]
    fn profile_is_monotone_and_saturates_for_zero_map() {
        let q = product_type(2);
        let eps: Vec<f64> = (0..8).map(|k| 10f64.powf(-0.5 * k as f64)).collect();
        let profile = sublevel_profile(&q, "product", &eps, 200_000, 3).unwrap();
        for w in 1..eps.len() {
            // eps is decreasing, so measures must be nonincreasing, exactly
            assert!(profile.measure[w] <= profile.measure[w - 1]);
        }
        let zero: BilinearMap<f64> = BilinearMap::zero(2, 2);
        let profile = sublevel_profile(&zero, "zero", &eps, 10_000, 3).unwrap();
        assert!(profile.measure.iter().all(|&m| m == 4.0));
    }

    #[test]
    fn doubling_the_map_shifts_thresholds_exactly() {
        // entries and thresholds scale by powers of two, so the hit sets are
        // bit-identical on the shared stream
        let q = BilinearMap::from_fn(2, 2, |i, j, k| ((i + 2 * j + k) as f64) - 1.5);
        let q2 = q.map(|&c| 2.0 * c);
        let eps = [0.5, 0.125, 0.03125];
        let eps4: Vec<f64> = eps.iter().map(|e| 4.0 * e).collect(); // 2^n with n = 2
        let a = sublevel_profile(&q, "q", &eps, 300_000, re_seed()).unwrap();
        let b = sublevel_profile(&q2, "2q", &eps4, 300_000, re_seed()).unwrap();
        for (x, y) in a.measure.iter().zip(&b.measure) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    fn re_seed() -> u64 {
        0xABCD
    }

    #[test]
    fn fit_recovers_linear_law_for_disc() {
        let q = complex_multiplication();
        let eps: Vec<f64> = (0..6).map(|k| 0.5 * 4f64.powf(-(k as f64) / 2.0)).collect();
        let profile = sublevel_profile(&q, "complex", &eps, 2_000_000, 5).unwrap();
        let fit = fit_exponent(&profile, &[0.5, 0.9]).unwrap();
        assert!((fit.theta_hat - 1.0).abs() < 0.05, "theta_hat = {}", fit.theta_hat);
        for &(_, c) in &fit.c_theta {
            assert!(c.is_finite() && c > 0.0);
        }
    }

    #[test]
    fn fit_needs_enough_usable_points() {
        let q = product_type(2);
        let profile = sublevel_profile(&q, "p", &[0.5, 0.1], 50_000, 1).unwrap();
        assert!(matches!(fit_exponent(&profile, &[]), Err(Error::Fit(_))));
        // a saturated (zero-map) profile has no usable window at all
        let zero: BilinearMap<f64> = BilinearMap::zero(2, 2);
        let eps: Vec<f64> = (0..6).map(|k| 10f64.powf(-(k as f64))).collect();
        let profile = sublevel_profile(&zero, "z", &eps, 50_000, 1).unwrap();
        assert!(fit_exponent(&profile, &[]).is_err());
        assert!(fit_exponent(&profile, &[1.5]).is_err());
    }

    #[test]
    fn f_weight_examples() {
        assert!((eval_f(1.0, 1) - 1.0 / 3.0).abs() < 1e-14);
        assert!((eval_f(1.0, 2) - 0.2).abs() < 1e-14);
        let expect = 1.0 - 2.0 / std::f64::consts::E;
        assert!((eval_f(std::f64::consts::E, 1) - expect).abs() < 1e-12);
        assert_eq!(eval_f(0.0, 1), f64::INFINITY);
    }

    #[test]
    fn f_weight_matches_quadrature_across_branches() {
        for n in [1usize, 2, 4] {
            for s in [1e-9, 1e-6, 1e-3, 0.3, 1.0, 2.5, 100.0, 1e7] {
                let fast = eval_f(s, n);
                let slow = f_quadrature(s, n);
                assert!(
                    (fast - slow).abs() <= 1e-8 * slow.abs().max(1e-300),
                    "s={s} n={n}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn f_weight_is_decreasing_and_dominates_lower_bound() {
        for n in [1usize, 2, 3] {
            let mut prev = f64::INFINITY;
            for k in 0..=90 {
                let s = 10f64.powf(-6.0 + 0.1 * k as f64);
                let f = eval_f(s, n);
                assert!(f <= prev * (1.0 + 1e-12), "F must decrease in |s|");
                prev = f;
                for theta in [0.1, 0.5, 0.9] {
                    let lb = f_lower_bound(theta, s, n).unwrap();
                    assert!(lb <= f * (1.0 + 1e-9), "s={s} n={n} theta={theta}");
                }
            }
        }
        assert!(f_lower_bound(0.0, 1.0, 1).is_err());
        assert!(f_lower_bound(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn f_lower_bound_examples() {
        let v = f_lower_bound(0.5, 1.0, 1).unwrap();
        assert!((v - 0.125 / 3.0).abs() < 1e-12);
        let v = f_lower_bound(0.5, 4.0, 1).unwrap();
        assert!((v - 0.125 / 3.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn tchebyshev_examples() {
        assert!((tchebyshev_constant(1.0, 0.5, 1).unwrap() - 24.0).abs() < 1e-12);
        let v = tchebyshev_constant(1.0, 0.1, 1).unwrap();
        let expect = 3.0 / (1.0 - 0.9f64.powi(3));
        assert!((v - expect).abs() < 1e-9);
        assert!((expect - 11.07).abs() < 0.01);
        assert!(tchebyshev_constant(f64::INFINITY, 0.5, 1).is_err());
    }

    #[test]
    fn tchebyshev_dominates_scalar_map() {
        // Q(x,t) = xt on n=1: measure(eps) = 2 eps, F-integral = 1
        for k in 0..20 {
            let eps = 10f64.powf(-3.0 * k as f64 / 19.0);
            let c = tchebyshev_constant(1.0, 0.5, 1).unwrap();
            assert!(2.0 * eps <= c * eps.sqrt() + 1e-12);
        }
    }

    #[test]
    fn f_integral_scalar_map() {
        let q = BilinearMap::from_nested(1, 1, vec![vec![vec![1.0]]]).unwrap();
        let r = integral_f(&q, 2_000_000, 13).unwrap();
        assert!(!r.divergent, "batch means: {:?}", r.batch_means);
        assert!((r.estimate - 1.0).abs() <= r.ci_halfwidth.max(0.02), "{r:?}");
    }

    #[test]
    fn f_integral_flags_zero_map() {
        let zero: BilinearMap<f64> = BilinearMap::zero(1, 1);
        let r = integral_f(&zero, 10_000, 13).unwrap();
        assert!(r.divergent);
    }

    #[test]
    fn f_integral_complex_lower_bound() {
        let q = complex_multiplication();
        let r = integral_f(&q, 1_000_000, 17).unwrap();
        assert!(!r.divergent);
        // F decreasing: integral >= F(1) * measure{|det| <= 1} = F(1) * pi
        let floor = eval_f(1.0, 2) * std::f64::consts::PI;
        assert!(r.estimate >= floor - r.ci_halfwidth, "{} < {floor}", r.estimate);
    }

    #[test]
    fn tchebyshev_dominates_measured_profile() {
        for (q, name) in [(complex_multiplication(), "complex"), (product_type(2), "product")] {
            let integral = integral_f(&q, 1_000_000, 19).unwrap();
            assert!(!integral.divergent, "{name}: {:?}", integral.batch_means);
            let bound_input = integral.estimate + integral.ci_halfwidth;
            let eps: Vec<f64> = (0..6).map(|k| 10f64.powf(-0.5 * k as f64)).collect();
            let profile = sublevel_profile(&q, name, &eps, 500_000, 23).unwrap();
            for theta in [0.3, 0.5, 0.7] {
                let c = tchebyshev_constant(bound_input, theta, 2).unwrap();
                for (e, (m, ci)) in
                    profile.eps.iter().zip(profile.measure.iter().zip(&profile.ci_halfwidth))
                {
                    assert!(
                        *m <= c * e.powf(theta) + 3.0 * ci,
                        "{name}: measure({e}) = {m} exceeds C eps^theta = {}",
                        c * e.powf(theta)
                    );
                }
            }
        }
    }

    #[test]
    fn multiaffine_construction_and_eval() {
        let phi = Multiaffine::from_terms(
            2,
            &[(vec![1, 1], 2.0), (vec![1, 0], 0.5), (vec![0, 0], -1.0)],
        )
        .unwrap();
        assert_eq!(phi.eval(&[3.0, 4.0]), 2.0 * 12.0 + 0.5 * 3.0 - 1.0);
        assert_eq!(phi.leading_coeff(), 2.0);
        match Multiaffine::from_terms(2, &[(vec![2, 0], 1.0)]) {
            Err(Error::Hypothesis(msg)) => assert!(msg.contains("u_1")),
            other => panic!("expected hypothesis violation, got {other:?}"),
        }
    }

    #[test]
    fn det_perturbation_is_multiaffine_in_u() {
        let q = complex_multiplication();
        let t = [0.7, -0.3];
        let phi = Multiaffine::det_perturbation(&q, &t).unwrap();
        let mut rng = CounterRng::new(29);
        let mut scratch = Vec::new();
        for _ in 0..50 {
            let u = [rng.next_sym(), rng.next_sym()];
            let qu = q
                .perturb(&crate::bilinear::PerturbationVector(u.to_vec()))
                .unwrap();
            let direct = qu.abs_det_contract_right(&t, &mut scratch);
            assert!((phi.eval(&u).abs() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn rearrangement_equality_for_extremal_function() {
        let phi = Multiaffine::from_terms(2, &[(vec![1, 1], 1.0)]).unwrap();
        let r = rearrangement_check(&phi, &[1.0, 1.0], 2, 100_000, 31).unwrap();
        assert!(r.pass);
        assert_eq!(r.lhs.to_bits(), r.rhs.to_bits(), "shared stream makes the sides identical");
        assert_eq!(r.diff_ci, 0.0);
    }

    #[test]
    fn rearrangement_strict_for_shifted_product() {
        let phi = Multiaffine::from_terms(2, &[(vec![1, 1], 1.0), (vec![0, 0], 0.5)]).unwrap();
        let r = rearrangement_check(&phi, &[1.0, 1.0], 2, 400_000, 33).unwrap();
        assert!(r.pass);
        assert!(r.lhs < r.rhs, "lhs {} rhs {}", r.lhs, r.rhs);
    }

    #[test]
    fn rearrangement_with_vanishing_leading_coeff() {
        // rhs integrand is F(0) = infinity on the whole box
        let phi = Multiaffine::from_terms(2, &[(vec![1, 0], 1.0)]).unwrap();
        let r = rearrangement_check(&phi, &[1.0, 1.0], 2, 50_000, 35).unwrap();
        assert!(r.pass);
        assert!(r.rhs_divergent);
    }

    #[test]
    fn log_heavy_sampler_is_normalized() {
        let mut rng = CounterRng::new(101);
        let n = 4_000_000;
        let (mut s0, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let c = super::log_heavy_coordinate(&mut rng);
            let w = c.ln_w.exp();
            if c.x.abs() > 1e-300 {
                assert!((c.x.abs().ln() - c.ln_x).abs() < 1e-9);
            }
            s0 += w;
            s2 += w * c.x * c.x;
        }
        // E[w] = 1 and E[w x^2] = 1/3 against the uniform density on [-1,1]
        assert!((s0 / n as f64 - 1.0).abs() < 5e-3, "E[w] = {}", s0 / n as f64);
        assert!((s2 / n as f64 - 1.0 / 3.0).abs() < 5e-3, "E[w x^2] = {}", s2 / n as f64);
    }

    #[test]
    fn ln_f_tail_continues_eval_f() {
        for n in [1usize, 2] {
            for a in [-650.0f64, -690.0] {
                let direct = eval_f(a.exp(), n).ln();
                let tail = super::ln_f_deep_tail(a, n);
                assert!((direct - tail).abs() < 1e-2 * direct.abs(), "a={a} n={n}: {direct} vs {tail}");
            }
        }
    }

    #[test]
    fn double_integral_equality_at_zero_map() {
        let zero1: BilinearMap<f64> = BilinearMap::zero(1, 1);
        let r = double_integral_check(&zero1, 4_000_000, 37).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.estimate - 4.0).abs() <= r.ci_halfwidth, "{r:?}");

        let zero2: BilinearMap<f64> = BilinearMap::zero(2, 2);
        let r = double_integral_check(&zero2, 4_000_000, 37).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.estimate - 16.0).abs() <= r.ci_halfwidth, "{r:?}");
    }

    #[test]
    fn double_integral_bounded_for_complex_map() {
        let q = complex_multiplication();
        let r = double_integral_check(&q, 1_000_000, 39).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.estimate <= 16.0 + r.ci_halfwidth);
    }

    #[test]
    fn perturbation_experiment_empty_and_nondegenerate() {
        let q = complex_multiplication();
        let empty = perturbation_experiment(&q, 0, 1.0, 0.9, &light_config(), 1).unwrap();
        assert!(empty.records.is_empty());
        assert!(empty.good_theta_fraction.is_none());

        let report = perturbation_experiment(&q, 10, 0.1, 0.9, &light_config(), 41).unwrap();
        assert_eq!(report.good_theta_fraction, Some(1.0));
        assert_eq!(report.nondegenerate_fraction, Some(1.0));
        for rec in &report.records {
            assert!(rec.theta_hat.unwrap() > 0.9, "{:?}", rec.theta_hat);
        }
    }

    fn light_config() -> PerturbationConfig {
        PerturbationConfig {
            eps_grid: (0..7).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect(),
            samples: 4_000_000,
            search: SearchConfig { seeds_per_dim: 256, refine_iters: 80, seed: 0 },
            tolerance: crate::curvature::DEFAULT_TOLERANCE,
        }
    }
}

/// Sample diagonal perturbations of `Q`, profile and fit each perturbed map,
/// and record the fraction with fitted exponent at or above the target along
/// with the fraction judged curvature-nondegenerate.
pub fn perturbation_experiment(
    q: &BilinearMap<f64>,
    trials: u64,
    radius: f64,
    theta_target: f64,
    config: &PerturbationConfig,
    seed: u64,
) -> Result<PerturbationReport> {
    validate_square(q, "perturbation experiment")?;
    if radius <= 0.0 {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    let n = q.n_in();
    let mut records = Vec::with_capacity(trials as usize);
    let mut good = 0u64;
    let mut nondeg = 0u64;
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, trial);
        let mut rng = CounterRng::substream(seed, 0x7065_7274 ^ trial);
        let u: Vec<f64> = (0..n).map(|_| radius * rng.next_sym()).collect();
        let qu = q.perturb(&PerturbationVector(u.clone()))?;
        let profile = sublevel_profile(
            &qu,
            &format!("trial-{trial}"),
            &config.eps_grid,
            config.samples,
            trial_seed,
        )?;
        let (theta_hat, fit_error) = match fit_exponent(&profile, &[]) {
            Ok(fit) => (Some(fit.theta_hat), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let search = SearchConfig { seed: trial_seed, ..config.search };
        let curvature = curvature_verdict(&qu, config.tolerance, &search)?;
        if theta_hat.is_some_and(|t| t >= theta_target) {
            good += 1;
        }
        if curvature.verdict == Verdict::Nondegenerate {
            nondeg += 1;
        }
        records.push(TrialRecord { u, theta_hat, fit_error, curvature });
    }
    let frac = |k: u64| (trials > 0).then(|| k as f64 / trials as f64);
    Ok(PerturbationReport {
        trials,
        radius,
        theta_target,
        good_theta_fraction: frac(good),
        nondegenerate_fraction: frac(nondeg),
        records,
        samples_per_trial: config.samples,
        eps_grid: config.eps_grid.clone(),
        seed,
    })
}
