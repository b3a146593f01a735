//! The degree of a lineage vertex followed from generation to generation.
//!
//! Given degree `x`, the next degree is `x + Y + Z` when the lineage stays
//! on the parent (probability 1/2) and `W + Y + Z` when it moves to the
//! child, with `Y ~ Bin(x, γ)`, `W ~ Bin(x, α)`, `Z ~ Ber(β)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ReproGraph;
use crate::params::Params;
use crate::sampling::{binomial_uncoupled_unchecked, binomial_unchecked, StreamKey};

const TAG_PARENT_SIDE: u64 = 1;
const TAG_LINK: u64 = 2;
const TAG_NEIGHBOUR: u64 = 3;
const TAG_CHILD: u64 = 4;

const BOUNDARY_TOL: f64 = 1e-12;
/// Binomial mass below this is dropped when building kernel rows.
const PMF_FLOOR: f64 = 1e-20;

fn side_and_link(params: &Params, key: StreamKey) -> (bool, u64) {
    let parent = key.child(TAG_PARENT_SIDE).trial(0, 0.5);
    let link = key.child(TAG_LINK).trial(0, params.beta) as u64;
    (parent, link)
}

/// One transition from degree `x`.
///
/// `Y` and `W` are prefix sums of indexed trials, so this equals the first
/// coordinate of [`coupled_step`] under the same key.
pub fn chain_step(x: u64, params: &Params, key: StreamKey) -> u64 {
    let (parent, link) = side_and_link(params, key);
    let y = binomial_unchecked(key.child(TAG_NEIGHBOUR), x, params.gamma);
    if parent {
        x + y + link
    } else {
        binomial_unchecked(key.child(TAG_CHILD), x, params.alpha) + y + link
    }
}

/// One transition of two copies of the chain driven by the same trials.
///
/// Both coordinates are marginally [`chain_step`]; `x >= x_hat` implies the
/// same order afterwards.
pub fn coupled_step(x: u64, x_hat: u64, params: &Params, key: StreamKey) -> (u64, u64) {
    (chain_step(x, params, key), chain_step(x_hat, params, key))
}

/// [`chain_step`] with constant-time binomials, for long or high-degree
/// runs where no coupling is needed.
pub fn chain_step_fast(x: u64, params: &Params, key: StreamKey) -> u64 {
    let (parent, link) = side_and_link(params, key);
    let y = binomial_uncoupled_unchecked(key.child(TAG_NEIGHBOUR), x, params.gamma);
    if parent {
        x + y + link
    } else {
        binomial_uncoupled_unchecked(key.child(TAG_CHILD), x, params.alpha) + y + link
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub x: u64,
    pub step: u64,
}

impl ChainState {
    pub fn new(x: u64) -> Self {
        Self { x, step: 0 }
    }

    /// Step `m -> m+1` draws from `key.child(m)`.
    pub fn advance(&mut self, params: &Params, key: StreamKey) {
        self.x = chain_step_fast(self.x, params, key.child(self.step));
        self.step += 1;
    }
}

/// `x_0, x_1, ..., x_steps`.
pub fn trajectory(x0: u64, params: &Params, steps: usize, key: StreamKey) -> Vec<u64> {
    let mut state = ChainState::new(x0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0);
    for _ in 0..steps {
        state.advance(params, key);
        out.push(state.x);
    }
    out
}

/// Degree of a uniformly chosen vertex of `g0`.
pub fn initial_degree(g0: &ReproGraph, key: StreamKey) -> u64 {
    let n = g0.vertex_count();
    if n == 0 {
        return 0;
    }
    let u = ((key.uniform_at(0) * n as f64) as usize).min(n - 1);
    g0.degree(u) as u64
}

/// Binomial(n, p) mass function on the indices where it exceeds
/// [`PMF_FLOOR`] times its peak; returns the first index and the values,
/// renormalised to sum to 1.
///
/// Walks outward from the mode with the ratio recurrence, so the cost is
/// proportional to the standard deviation rather than to `n`.
fn binomial_pmf(n: usize, p: f64) -> (usize, Vec<f64>) {
    if p <= 0.0 || n == 0 {
        return (0, vec![1.0]);
    }
    if p >= 1.0 {
        return (n, vec![1.0]);
    }
    let odds = p / (1.0 - p);
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n);
    let mut upper = vec![1.0];
    let mut v = 1.0;
    for k in mode..n {
        v *= (n - k) as f64 / (k + 1) as f64 * odds;
        if v < PMF_FLOOR {
            break;
        }
        upper.push(v);
    }
    let mut lower = Vec::new();
    v = 1.0;
    for k in (1..=mode).rev() {
        v *= k as f64 / ((n - k + 1) as f64 * odds);
        if v < PMF_FLOOR {
            break;
        }
        lower.push(v);
    }
    let lo = mode - lower.len();
    lower.reverse();
    lower.extend(upper);
    let total: f64 = lower.iter().sum();
    lower.iter_mut().for_each(|x| *x /= total);
    (lo, lower)
}

fn convolve(a: &(usize, Vec<f64>), b: &(usize, Vec<f64>)) -> (usize, Vec<f64>) {
    let mut out = vec![0.0; a.1.len() + b.1.len() - 1];
    for (i, &va) in a.1.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        for (j, &vb) in b.1.iter().enumerate() {
            out[i + j] += va * vb;
        }
    }
    (a.0 + b.0, out)
}

/// Contiguous block of one kernel row.
#[derive(Clone, Debug, PartialEq)]
struct Segment {
    start: usize,
    probs: Vec<f64>,
}

/// Exact transition matrix of the chain on `0..=truncation`, with all mass
/// that would leave the range lumped on `truncation`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeKernel {
    params: Params,
    truncation: usize,
    rows: Vec<Vec<Segment>>,
}

/// Builds the truncated kernel by convolving the binomial mass functions.
pub fn build_kernel(params: &Params, truncation: usize) -> Result<DegreeKernel> {
    params.validate()?;
    if truncation < 1 {
        return Err(Error::Precondition("truncation must be >= 1".into()));
    }
    let link = (0, vec![1.0 - params.beta, params.beta]);
    let rows = (0..=truncation)
        .into_par_iter()
        .map(|x| {
            let neighbour = binomial_pmf(x, params.gamma);
            let gained = convolve(&neighbour, &link);
            let stay = (gained.0 + x, gained.1.clone());
            let child = convolve(&binomial_pmf(x, params.alpha), &gained);
            lump_row(&[stay, child], truncation)
        })
        .collect();
    Ok(DegreeKernel {
        params: *params,
        truncation,
        rows,
    })
}

/// Mixes the two branches with weight 1/2 each and lumps overflow at `cap`.
fn lump_row(branches: &[(usize, Vec<f64>)], cap: usize) -> Vec<Segment> {
    let mut pieces: Vec<Segment> = Vec::new();
    let mut overflow = 0.0;
    for (start, probs) in branches {
        let mut seg = Segment {
            start: *start,
            probs: Vec::new(),
        };
        for (i, &p) in probs.iter().enumerate() {
            let y = start + i;
            if y >= cap {
                overflow += 0.5 * p;
            } else {
                seg.probs.push(0.5 * p);
            }
        }
        if !seg.probs.is_empty() {
            pieces.push(seg);
        }
    }
    pieces.sort_by_key(|s| s.start);
    let mut merged: Vec<Segment> = Vec::new();
    for seg in pieces {
        match merged.last_mut() {
            Some(last) if seg.start <= last.start + last.probs.len() => {
                let end = seg.start + seg.probs.len();
                if end > last.start + last.probs.len() {
                    last.probs.resize(end - last.start, 0.0);
                }
                for (i, p) in seg.probs.into_iter().enumerate() {
                    last.probs[seg.start - last.start + i] += p;
                }
            }
            _ => merged.push(seg),
        }
    }
    if overflow > 0.0 {
        match merged.last_mut() {
            Some(last) if last.start + last.probs.len() == cap => last.probs.push(overflow),
            _ => merged.push(Segment {
                start: cap,
                probs: vec![overflow],
            }),
        }
    }
    merged
}

impl DegreeKernel {
    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn states(&self) -> usize {
        self.truncation + 1
    }

    /// `P(X' = y | X = x)`.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x]
            .iter()
            .find(|s| y >= s.start && y < s.start + s.probs.len())
            .map_or(0.0, |s| s.probs[y - s.start])
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.states()];
        for s in &self.rows[x] {
            out[s.start..s.start + s.probs.len()].copy_from_slice(&s.probs);
        }
        out
    }

    /// `π P`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.states()];
        for (x, segs) in self.rows.iter().enumerate() {
            let w = pi[x];
            if w == 0.0 {
                continue;
            }
            for s in segs {
                for (o, &p) in out[s.start..s.start + s.probs.len()].iter_mut().zip(&s.probs) {
                    *o += w * p;
                }
            }
        }
        out
    }
}

/// Result of power iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// `‖πP − π‖₁` at return.
    pub residual: f64,
    pub iterations: usize,
    /// Mass on the truncation state.
    pub lumped_mass: f64,
}

impl Stationary {
    pub fn mean(&self) -> f64 {
        moment(&self.pi, 1.0)
    }
}

fn stationary_preconditions(params: &Params) -> Result<()> {
    if params.alpha >= 1.0 || params.gamma >= 1.0 {
        return Err(Error::Precondition(
            "alpha = 1 or gamma = 1 makes the degree non-decreasing; no stationary law".into(),
        ));
    }
    match classify_degree_regime(params) {
        DegreeRegime::Subcritical => {}
        DegreeRegime::Critical => {
            return Err(Error::Precondition(
                "(1+gamma)(alpha+gamma) = 1: stationarity is not established at the boundary".into(),
            ))
        }
        DegreeRegime::Supercritical => {
            return Err(Error::Precondition(format!(
                "(1+gamma)(alpha+gamma) = {:.6} > 1: the degree chain is transient",
                params.degree_product()
            )))
        }
    }
    if params.beta == 0.0 {
        log::warn!("beta = 0: zero is absorbing and the stationary law is a point mass at 0");
    }
    Ok(())
}

/// Power iteration from a point mass at 0 until `‖πP − π‖₁ < tol`.
pub fn stationary_distribution(kernel: &DegreeKernel, tol: f64, max_iterations: usize) -> Result<Stationary> {
    stationary_preconditions(&kernel.params)?;
    let mut pi = vec![0.0; kernel.states()];
    pi[0] = 1.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let next = kernel.apply(&pi);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < tol {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= total);
            let lumped_mass = pi[kernel.truncation];
            return Ok(Stationary {
                pi,
                residual,
                iterations: it,
                lumped_mass,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Doubles the truncation from `start` until the lumped mass is below
/// `lumped_target` or `max_truncation` is reached.
pub fn stationary_adaptive(
    params: &Params,
    tol: f64,
    start: usize,
    max_truncation: usize,
    lumped_target: f64,
    max_iterations: usize,
) -> Result<(DegreeKernel, Stationary)> {
    stationary_preconditions(params)?;
    let mut d = start.max(1);
    loop {
        let kernel = build_kernel(params, d)?;
        let st = stationary_distribution(&kernel, tol, max_iterations)?;
        log::debug!(
            "truncation {d}: {} iterations, residual {:.2e}, lumped {:.2e}",
            st.iterations,
            st.residual,
            st.lumped_mass
        );
        if st.lumped_mass < lumped_target || d >= max_truncation {
            if st.lumped_mass >= lumped_target {
                log::warn!(
                    "truncation {d} still lumps {:.3e} of the stationary mass",
                    st.lumped_mass
                );
            }
            return Ok((kernel, st));
        }
        d = (2 * d).min(max_truncation);
    }
}

/// `Σ x^p π(x)`.
pub fn moment(pi: &[f64], p: f64) -> f64 {
    pi.iter()
        .enumerate()
        .map(|(x, &w)| if w == 0.0 { 0.0 } else { (x as f64).powf(p) * w })
        .sum()
}

/// Empirical mean of `x^p`.
pub fn sample_moment(samples: &[u64], p: f64) -> f64 {
    samples.iter().map(|&x| (x as f64).powf(p)).sum::<f64>() / samples.len() as f64
}

/// Empirical p-th moment over the first `len` samples, for each checkpoint.
pub fn running_moments(samples: &[u64], p: f64, checkpoints: &[usize]) -> Vec<f64> {
    checkpoints
        .iter()
        .map(|&len| sample_moment(&samples[..len.min(samples.len())], p))
        .collect()
}

/// Least-squares slope of `ln π(d)` against `ln d` over `lo..=hi`.
pub fn tail_slope(pi: &[f64], lo: usize, hi: usize) -> Result<f64> {
    let points: Vec<(f64, f64)> = (lo.max(1)..=hi.min(pi.len().saturating_sub(1)))
        .filter(|&d| pi[d] > 0.0)
        .map(|d| ((d as f64).ln(), pi[d].ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Degenerate("not enough positive tail entries".into()));
    }
    Ok(crate::edges::least_squares_slope(&points))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeRegime {
    Subcritical,
    Critical,
    Supercritical,
}

impl DegreeRegime {
    pub fn name(&self) -> &'static str {
        match self {
            DegreeRegime::Subcritical => "subcritical",
            DegreeRegime::Critical => "critical",
            DegreeRegime::Supercritical => "supercritical",
        }
    }
}

/// Sign of `(1+γ)(α+γ) − 1`, with `|·| <= 1e-12` reported as critical.
pub fn classify_degree_regime(params: &Params) -> DegreeRegime {
    let excess = params.degree_product() - 1.0;
    if excess.abs() <= BOUNDARY_TOL {
        DegreeRegime::Critical
    } else if excess < 0.0 {
        DegreeRegime::Subcritical
    } else {
        DegreeRegime::Supercritical
    }
}

/// Moment threshold of the stationary degree law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TailExponent {
    /// Moments of order below the root are finite, above it infinite.
    Root(f64),
    /// `(1+γ)(α+γ) >= 1`: no positive moment is guaranteed finite.
    NoFiniteMoments,
    /// `γ = 0`: every moment is finite.
    AllFinite,
}

impl TailExponent {
    /// `Some(p*)`, `Some(0)` or `None`, matching the three cases.
    pub fn value(&self) -> Option<f64> {
        match *self {
            TailExponent::Root(p) => Some(p),
            TailExponent::NoFiniteMoments => Some(0.0),
            TailExponent::AllFinite => None,
        }
    }
}

/// Positive root of `(1+γ)^p + (α+γ)^p = 2`, by bisection to 1e-10.
pub fn tail_exponent(params: &Params) -> TailExponent {
    if classify_degree_regime(params) != DegreeRegime::Subcritical {
        return TailExponent::NoFiniteMoments;
    }
    if params.gamma <= 0.0 {
        return TailExponent::AllFinite;
    }
    let f = |p: f64| (1.0 + params.gamma).powf(p) + (params.alpha + params.gamma).powf(p) - 2.0;
    let mut lo = 1e-6;
    let mut hi = 64.0;
    // f is convex with f(0) = 0 and f'(0) < 0, so it crosses zero exactly once.
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return TailExponent::AllFinite;
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TailExponent::Root(0.5 * (lo + hi))
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { mean, std_error: 0.0 };
        }
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Estimates of `E[((1+x+Y+Z)/(1+x))^p]` and `E[((1+W+Y+Z)/(1+x))^p]` given
/// degree `x`; they approach `(1+γ)^p` and `(α+γ)^p` as `x` grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub parent: Estimate,
    pub child: Estimate,
}

pub fn conditional_moment_ratio(x: u64, params: &Params, p: f64, reps: usize, key: StreamKey) -> Result<MomentRatio> {
    params.validate()?;
    if x < 1 {
        return Err(Error::Precondition("conditional moment ratio needs x >= 1".into()));
    }
    let scale = 1.0 + x as f64;
    let (parent, child): (Vec<f64>, Vec<f64>) = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let k = key.child(r);
            let y = binomial_uncoupled_unchecked(k.child(TAG_NEIGHBOUR), x, params.gamma);
            let w = binomial_uncoupled_unchecked(k.child(TAG_CHILD), x, params.alpha);
            let z = k.child(TAG_LINK).trial(0, params.beta) as u64;
            let a = ((1 + x + y + z) as f64 / scale).powf(p);
            let b = ((1 + w + y + z) as f64 / scale).powf(p);
            (a, b)
        })
        .unzip();
    Ok(MomentRatio {
        parent: Estimate::from_samples(&parent),
        child: Estimate::from_samples(&child),
    })
}

/// `x,probability` rows.
pub fn distribution_csv(pi: &[f64]) -> String {
    let mut out = String::from("x,probability\n");
    for (x, p) in pi.iter().enumerate() {
        out.push_str(&format!("{x},{p:e}\n"));
    }
    out
}
