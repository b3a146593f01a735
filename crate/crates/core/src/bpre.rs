//! The `β = 0` degree chain as a branching process in a random environment.
//!
//! Without the parent–child edge, degree 0 is absorbing. Each step is a
//! parent step (offspring mean `1 + γ`) or a child step (mean `α + γ`) with
//! probability ½, so the lineage dies out almost surely iff
//! `½ log(1+γ) + ½ log(α+γ) ≤ 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::chain_step_fast;
use crate::error::{Error, Result};
use crate::graph::{grow_with, Caps, ReproGraph};
use crate::params::Params;
use crate::sampling::StreamKey;

/// Degrees at or above this count as survival in horizon-limited runs.
pub const ESCAPE_DEGREE: u64 = 1 << 40;
const Z_95: f64 = 1.959_963_984_540_054;
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ExtinctAs,
    SurvivesWpQ,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::ExtinctAs => "extinct-as",
            Verdict::SurvivesWpQ => "survives-wp-q",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpreVerdict {
    /// `½ log(1+γ) + ½ log(α+γ)`; `-inf` when `α + γ = 0`.
    pub criterion_value: f64,
    pub verdict: Verdict,
    /// Criterion is zero up to rounding.
    pub boundary: bool,
    /// Offspring laws are point masses (`α, γ ∈ {0, 1}`), so a nonzero
    /// degree may persist forever regardless of the verdict.
    pub degenerate: bool,
    pub q_estimate: Option<ExtinctionEstimate>,
}

fn require_no_link(params: &Params) -> Result<()> {
    params.validate()?;
    if params.beta != 0.0 {
        return Err(Error::Precondition(format!(
            "branching-process analysis needs beta = 0, got {}",
            params.beta
        )));
    }
    Ok(())
}

pub fn classify_bpre(params: &Params) -> Result<BpreVerdict> {
    require_no_link(params)?;
    let criterion_value = 0.5 * (1.0 + params.gamma).ln() + 0.5 * (params.alpha + params.gamma).ln();
    let boundary = criterion_value.abs() <= BOUNDARY_TOL;
    let verdict = if criterion_value <= 0.0 || boundary {
        Verdict::ExtinctAs
    } else {
        Verdict::SurvivesWpQ
    };
    let point_mass = |p: f64| p == 0.0 || p == 1.0;
    Ok(BpreVerdict {
        criterion_value,
        verdict,
        boundary,
        degenerate: point_mass(params.alpha) && point_mass(params.gamma),
        q_estimate: None,
    })
}

/// Fraction of replicates absorbed at 0 within the horizon.
///
/// This is a lower bound on the extinction probability: paths still alive
/// at the horizon, or past [`ESCAPE_DEGREE`], count as survivors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionEstimate {
    pub probability: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub x0: u64,
    pub horizon: usize,
    pub reps: usize,
    pub extinct: usize,
    pub escaped: usize,
}

enum Fate {
    Extinct,
    Escaped,
    Alive,
}

fn run_lineage(x0: u64, params: &Params, horizon: usize, key: StreamKey) -> Fate {
    let mut x = x0;
    for step in 0..horizon {
        x = chain_step_fast(x, params, key.child(step as u64));
        if x == 0 {
            return Fate::Extinct;
        }
        if x >= ESCAPE_DEGREE {
            return Fate::Escaped;
        }
    }
    Fate::Alive
}

/// Replicate `r` uses `key.child(r)`; step `m` of it uses `.child(m)`.
pub fn extinction_probability(
    params: &Params,
    x0: u64,
    horizon: usize,
    reps: usize,
    key: StreamKey,
) -> Result<ExtinctionEstimate> {
    require_no_link(params)?;
    if x0 == 0 {
        return Err(Error::Precondition("initial degree must be at least 1".into()));
    }
    if reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let (extinct, escaped) = (0..reps)
        .into_par_iter()
        .map(|r| match run_lineage(x0, params, horizon, key.child(r as u64)) {
            Fate::Extinct => (1usize, 0usize),
            Fate::Escaped => (0, 1),
            Fate::Alive => (0, 0),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let p = extinct as f64 / reps as f64;
    Ok(ExtinctionEstimate {
        probability: p,
        half_width: Z_95 * (p * (1.0 - p) / reps as f64).sqrt(),
        x0,
        horizon,
        reps,
        extinct,
        escaped,
    })
}

impl ExtinctionEstimate {
    pub fn to_jsonl(&self, params: &Params) -> String {
        serde_json::json!({
            "alpha": params.alpha,
            "beta": params.beta,
            "gamma": params.gamma,
            "x0": self.x0,
            "horizon": self.horizon,
            "reps": self.reps,
            "extinct": self.extinct,
            "escaped": self.escaped,
            "probability": self.probability,
            "half_width": self.half_width,
            "lower_bound": true,
        })
        .to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationRow {
    pub step: u32,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationCurve {
    pub rows: Vec<IsolationRow>,
    /// `per_replicate[r][m]` is the isolated fraction of `G_m` in replicate `r`.
    pub per_replicate: Vec<Vec<f64>>,
    /// Every isolated vertex had both its copies isolated one generation
    /// later, in every replicate.
    pub monotone: bool,
}

impl IsolationCurve {
    pub const CSV_HEADER: &'static str =
        "step,isolated_fraction_mean,isolated_fraction_min,isolated_fraction_max";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{:.12},{:.12},{:.12}\n", r.step, r.mean, r.min, r.max));
        }
        out
    }
}

fn isolation_path(
    g0: &ReproGraph,
    params: &Params,
    steps: usize,
    key: StreamKey,
    caps: &Caps,
) -> Result<(Vec<f64>, bool)> {
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut previous: Option<Vec<bool>> = None;
    let mut monotone = true;
    grow_with(g0, params, steps, key, caps, false, |g| {
        let isolated: Vec<bool> = (0..g.vertex_count()).map(|u| g.degree(u) == 0).collect();
        if let Some(prev) = &previous {
            let v = prev.len();
            monotone &= prev
                .iter()
                .enumerate()
                .all(|(u, &iso)| !iso || (isolated[u] && isolated[u + v]));
        }
        fractions.push(g.isolated_fraction());
        previous = Some(isolated);
        Ok(())
    })?;
    Ok((fractions, monotone))
}

/// Replicate `r` grows from `g0` under `key.child(r)`.
pub fn isolation_curve(
    g0: &ReproGraph,
    params: &Params,
    steps: usize,
    reps: usize,
    key: StreamKey,
    caps: &Caps,
) -> Result<IsolationCurve> {
    require_no_link(params)?;
    if reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let paths: Vec<(Vec<f64>, bool)> = (0..reps)
        .into_par_iter()
        .map(|r| isolation_path(g0, params, steps, key.child(r as u64), caps))
        .collect::<Result<_>>()?;
    let rows = (0..=steps)
        .map(|m| {
            let column = paths.iter().map(|(f, _)| f[m]);
            IsolationRow {
                step: m as u32,
                mean: column.clone().sum::<f64>() / reps as f64,
                min: column.clone().fold(f64::INFINITY, f64::min),
                max: column.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let monotone = paths.iter().all(|(_, m)| *m);
    Ok(IsolationCurve {
        rows,
        per_replicate: paths.into_iter().map(|(f, _)| f).collect(),
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(alpha: f64, gamma: f64) -> Params {
        Params::new(alpha, 0.0, gamma).unwrap()
    }

    #[test]
    fn classification() {
        let sub = classify_bpre(&p(0.0, 0.2)).unwrap();
        assert_eq!(sub.verdict, Verdict::ExtinctAs);
        assert!((sub.criterion_value - 0.5 * 0.24f64.ln()).abs() < 1e-15);
        assert_eq!(classify_bpre(&p(0.9, 0.8)).unwrap().verdict, Verdict::SurvivesWpQ);
        let edge = classify_bpre(&p(1.0, 0.0)).unwrap();
        assert!(edge.boundary && edge.degenerate);
        assert_eq!(edge.verdict, Verdict::ExtinctAs);
        assert!(classify_bpre(&Params::new(0.0, 0.5, 0.2).unwrap()).is_err());
        assert_eq!(classify_bpre(&p(0.0, 0.0)).unwrap().criterion_value, f64::NEG_INFINITY);
    }

    #[test]
    fn geometric_extinction_without_growth() {
        // children are always isolated; the lineage dies on the first child step
        for h in [1usize, 3, 6] {
            let est = extinction_probability(&p(0.0, 0.0), 3, h, 40_000, StreamKey::new(9)).unwrap();
            let exact = 1.0 - 0.5f64.powi(h as i32);
            let se = (exact * (1.0 - exact) / 40_000.0).sqrt();
            assert!((est.probability - exact).abs() < 4.0 * se + 1e-12, "h={h}: {est:?}");
        }
    }

    #[test]
    fn extinction_regimes() {
        let sub = extinction_probability(&p(0.0, 0.2), 1, 100, 10_000, StreamKey::new(1)).unwrap();
        assert!(sub.probability >= 0.99);
        let sup = extinction_probability(&p(0.9, 0.8), 5, 200, 10_000, StreamKey::new(2)).unwrap();
        assert!(sup.probability <= 0.9);
        assert!(sup.escaped > 0);
        assert!(extinction_probability(&p(0.0, 0.2), 0, 10, 10, StreamKey::new(1)).is_err());
        assert!(extinction_probability(&p(0.0, 0.2), 1, 10, 0, StreamKey::new(1)).is_err());
    }

    #[test]
    fn isolation_without_growth() {
        // only the two original continuations keep their edge: 1 - 2 / V_n
        let curve =
            isolation_curve(&ReproGraph::complete(2), &p(0.0, 0.0), 4, 3, StreamKey::new(0), &Caps::default())
                .unwrap();
        let means: Vec<f64> = curve.rows.iter().map(|r| r.mean).collect();
        assert_eq!(means, vec![0.0, 0.5, 0.75, 0.875, 0.9375]);
        assert!(curve.monotone);
    }

    #[test]
    fn isolation_curve_rows() {
        let curve =
            isolation_curve(&ReproGraph::complete(2), &p(0.0, 0.2), 8, 4, StreamKey::new(5), &Caps::default())
                .unwrap();
        assert!(curve.monotone);
        for r in &curve.rows {
            assert!(r.min <= r.mean && r.mean <= r.max);
        }
        let csv = curve.to_csv();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with(IsolationCurve::CSV_HEADER));
    }

    #[test]
    fn jsonl_record() {
        let est = extinction_probability(&p(0.0, 0.2), 1, 10, 100, StreamKey::new(1)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&est.to_jsonl(&p(0.0, 0.2))).unwrap();
        assert_eq!(v["reps"], 100);
        assert_eq!(v["lower_bound"], true);
    }
}
