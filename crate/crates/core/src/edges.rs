//! Edge-count moments, the densification regimes, and the martingale
//! diagnostic.
//!
//! Conditional on `G_k`, the new edges of `G_{k+1}` are three independent
//! binomial counts: `Bi(2E_k, γ)` child-to-neighbour edges, `Bi(E_k, α)`
//! child-to-child edges and `Bi(V_k, β)` parent-to-child edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GenerationStats;
use crate::params::Params;

const BOUNDARY_TOL: f64 = 1e-12;

/// Unconditional mean and variance of `E_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMoments {
    pub n: usize,
    pub mean_e: f64,
    pub var_e: f64,
}

/// Moments of `E_0..=E_n` from `E_0 = e0` on `v0` starting vertices.
///
/// Mean: `m(k+1) = (1+2γ+α) m(k) + 2^k β v0`.
/// Variance (law of total variance over the conditional laws above):
/// `v(k+1) = m(k)(2γ(1-γ) + α(1-α)) + 2^k v0 β(1-β) + (1+2γ+α)^2 v(k)`.
pub fn edge_moments(n: usize, params: &Params, v0: u64, e0: u64) -> Vec<EdgeMoments> {
    let growth = params.edge_growth();
    let spread = 2.0 * params.gamma * (1.0 - params.gamma) + params.alpha * (1.0 - params.alpha);
    let vertex_var = v0 as f64 * params.beta * (1.0 - params.beta);
    let mut out = Vec::with_capacity(n + 1);
    let (mut mean, mut var) = (e0 as f64, 0.0);
    out.push(EdgeMoments {
        n: 0,
        mean_e: mean,
        var_e: var,
    });
    for k in 0..n {
        let pow2 = 2f64.powi(k as i32);
        let next_var = mean * spread + pow2 * vertex_var + growth * growth * var;
        mean = growth * mean + pow2 * params.beta * v0 as f64;
        var = next_var;
        out.push(EdgeMoments {
            n: k + 1,
            mean_e: mean,
            var_e: var,
        });
    }
    out
}

pub fn expected_edges(n: usize, params: &Params, v0: u64, e0: u64) -> f64 {
    edge_moments(n, params, v0, e0)[n].mean_e
}

pub fn variance_edges(n: usize, params: &Params, v0: u64, e0: u64) -> f64 {
    edge_moments(n, params, v0, e0)[n].var_e
}

/// Closed form of [`expected_edges`]:
/// `λ^n e0 + β v0 (2^n - λ^n) / (1 - 2γ - α)` with `λ = 1 + 2γ + α`, and
/// `2^n (e0 + β v0 n / 2)` when `λ = 2`.
pub fn expected_edges_closed(n: usize, params: &Params, v0: u64, e0: u64) -> f64 {
    let growth = params.edge_growth();
    let pow2 = 2f64.powi(n as i32);
    let slack = 1.0 - 2.0 * params.gamma - params.alpha;
    if slack.abs() <= BOUNDARY_TOL {
        pow2 * (e0 as f64 + params.beta * v0 as f64 * n as f64 / 2.0)
    } else {
        let pow_growth = growth.powi(n as i32);
        pow_growth * e0 as f64 + params.beta * v0 as f64 * (pow2 - pow_growth) / slack
    }
}

/// Growth regime of the edge count with its limiting constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum EdgeRegime {
    /// `E_n / 2^n -> limit`.
    Sparse { limit: f64 },
    /// `E_n / (2^n n) -> limit`.
    Critical { limit: f64 },
    /// `E_n ~ V_n^exponent`.
    Dense { exponent: f64 },
}

impl EdgeRegime {
    pub fn name(&self) -> &'static str {
        match self {
            EdgeRegime::Sparse { .. } => "sparse",
            EdgeRegime::Critical { .. } => "critical",
            EdgeRegime::Dense { .. } => "dense",
        }
    }

    /// The limit constant or the densification exponent.
    pub fn value(&self) -> f64 {
        match *self {
            EdgeRegime::Sparse { limit } | EdgeRegime::Critical { limit } => limit,
            EdgeRegime::Dense { exponent } => exponent,
        }
    }
}

pub fn classify_edge_regime(params: &Params, v0: u64) -> EdgeRegime {
    let excess = 2.0 * params.gamma + params.alpha - 1.0;
    let v0 = v0 as f64;
    if excess.abs() <= BOUNDARY_TOL {
        EdgeRegime::Critical {
            limit: v0 * params.beta / 2.0,
        }
    } else if excess < 0.0 {
        EdgeRegime::Sparse {
            limit: v0 * params.beta / -excess,
        }
    } else {
        EdgeRegime::Dense {
            exponent: params.edge_growth().ln() / 2f64.ln(),
        }
    }
}

/// `W_n = (V_n + (2γ+α-1) E_n / β) / (1+2γ+α)^n`, a martingale for `β > 0`.
pub fn martingale_w(stats: &GenerationStats, params: &Params) -> Result<f64> {
    martingale_value(stats.n, stats.vertices, stats.edges, params)
}

pub fn martingale_value(n: u32, vertices: u64, edges: u64, params: &Params) -> Result<f64> {
    if params.beta <= 0.0 {
        return Err(Error::Precondition("martingale needs beta > 0".into()));
    }
    let slope = (2.0 * params.gamma + params.alpha - 1.0) / params.beta;
    Ok((vertices as f64 + slope * edges as f64) / params.edge_growth().powi(n as i32))
}

/// Least-squares slope of `ln E_n` against `ln V_n` over the last
/// `window` generations (the last half when `window` is `None`).
pub fn densification_fit(stats: &[GenerationStats], window: Option<usize>) -> Result<f64> {
    let usable: Vec<&GenerationStats> = stats.iter().filter(|s| s.edges > 0).collect();
    if usable.len() < 4 {
        return Err(Error::Precondition(format!(
            "densification fit needs >= 4 generations with edges, got {}",
            usable.len()
        )));
    }
    let take = window.unwrap_or(usable.len() / 2).clamp(2, usable.len());
    let tail = &usable[usable.len() - take..];
    if tail.iter().all(|s| s.edges == tail[0].edges) {
        return Err(Error::Degenerate("edge count constant over the fit window".into()));
    }
    let points: Vec<(f64, f64)> = tail
        .iter()
        .map(|s| ((s.vertices as f64).ln(), (s.edges as f64).ln()))
        .collect();
    Ok(least_squares_slope(&points))
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
