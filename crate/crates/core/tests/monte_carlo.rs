//! Statistical oracles. Every test uses a fixed seed and compares against
//! an independently computed expectation within 4 standard errors unless
//! noted otherwise.

use rayon::prelude::*;

use reprograph::bpre::{extinction_probability, isolation_curve};
use reprograph::chain::{build_kernel, conditional_moment_ratio, running_moments, trajectory};
use reprograph::edges::{martingale_w, variance_edges};
use reprograph::graph::{evolve, grow, Caps, ReproGraph};
use reprograph::params::Params;
use reprograph::sampling::StreamKey;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn one_step_edge_increment_decomposes_into_binomials() {
    // given G: E' - E = Bin(2E, gamma) + Bin(E, alpha) + Bin(V, beta)
    let p = Params::new(0.3, 0.6, 0.25).unwrap();
    let g = grow(&ReproGraph::cycle(5).unwrap(), &p, 3, StreamKey::new(1), &Caps::default(), true)
        .unwrap()
        .final_graph
        .unwrap();
    let (e, v) = (g.edge_count() as f64, g.vertex_count() as f64);
    let samples: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|r| evolve(&g, &p, StreamKey::new(2).child(r), &Caps::default()).unwrap().edge_count() as f64)
        .collect();
    let (mean, se) = mean_and_se(&samples);
    let want_mean = e * (1.0 + 2.0 * p.gamma + p.alpha) + v * p.beta;
    assert!((mean - want_mean).abs() < 4.0 * se, "{mean} vs {want_mean} (se {se})");
    let want_var = 2.0 * e * p.gamma * (1.0 - p.gamma) + e * p.alpha * (1.0 - p.alpha) + v * p.beta * (1.0 - p.beta);
    let var = sample_variance(&samples);
    assert!((var / want_var - 1.0).abs() < 0.05, "{var} vs {want_var}");
}

#[test]
fn variance_of_e3_over_many_runs() {
    let p = Params::new(0.3, 0.5, 0.2).unwrap();
    let samples: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|r| {
            let growth = grow(&ReproGraph::complete(2), &p, 3, StreamKey::new(3).child(r), &Caps::default(), false).unwrap();
            growth.stats[3].edges as f64
        })
        .collect();
    let want = variance_edges(3, &p, 2, 1);
    assert!((sample_variance(&samples) / want - 1.0).abs() < 0.05);
}

#[test]
fn vertex_degrees_follow_the_degree_chain() {
    // the degree of a uniform vertex of G_n has the law of X_n; from K2, X_0 = 1
    let p = Params::new(0.3, 0.5, 0.2).unwrap();
    let n = 5;
    let reps = 2_000u64;
    let hists: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let growth = grow(&ReproGraph::complete(2), &p, n, StreamKey::new(4).child(r), &Caps::default(), false).unwrap();
            let last = &growth.stats[n];
            (0..12).map(|d| last.degree_fraction(d)).collect()
        })
        .collect();
    let kernel = build_kernel(&p, 64).unwrap();
    let mut law = vec![0.0; kernel.states()];
    law[1] = 1.0;
    for _ in 0..n {
        law = kernel.apply(&law);
    }
    for d in 0..12 {
        let column: Vec<f64> = hists.iter().map(|h| h[d]).collect();
        let (mean, se) = mean_and_se(&column);
        assert!((mean - law[d]).abs() <= 4.0 * se + 1e-12, "d={d}: {mean} vs {} (se {se})", law[d]);
    }
}

#[test]
fn isolated_fraction_matches_lineage_extinction() {
    // beta = 0: E[isolated fraction of G_n] = P(X_n = 0 | X_0 = 1)
    let p = Params::new(0.9, 0.0, 0.8).unwrap();
    let n = 8;
    let curve = isolation_curve(&ReproGraph::complete(2), &p, n, 200, StreamKey::new(5), &Caps::default()).unwrap();
    let (graph_mean, graph_se) = mean_and_se(&curve.per_replicate.iter().map(|f| f[n]).collect::<Vec<_>>());
    let ext = extinction_probability(&p, 1, n, 200_000, StreamKey::new(6)).unwrap();
    let chain_se = (ext.probability * (1.0 - ext.probability) / ext.reps as f64).sqrt();
    let se = (graph_se.powi(2) + chain_se.powi(2)).sqrt();
    assert!((graph_mean - ext.probability).abs() < 4.0 * se, "{graph_mean} vs {}", ext.probability);
}

#[test]
fn martingale_tail_settles_on_a_dense_run() {
    let p = Params::new(0.5, 1.0, 0.5).unwrap();
    let growth = grow(&ReproGraph::complete(2), &p, 13, StreamKey::new(7), &Caps::default(), false).unwrap();
    let w: Vec<f64> = growth.stats.iter().map(|s| martingale_w(s, &p).unwrap()).collect();
    assert!(w.iter().all(|&x| x >= 0.0));
    let tail = &w[9..];
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.01, "{tail:?}");
}

#[test]
fn environment_means_without_links() {
    let p = Params::new(0.4, 0.0, 0.3).unwrap();
    let r = conditional_moment_ratio(50_000, &p, 1.0, 4_000, StreamKey::new(8)).unwrap();
    assert!((r.parent.mean - 1.3).abs() < 4.0 * r.parent.std_error + 1e-4);
    assert!((r.child.mean - 0.7).abs() < 4.0 * r.child.std_error + 1e-4);
    let zero = conditional_moment_ratio(10, &p, 0.0, 100, StreamKey::new(8)).unwrap();
    assert_eq!((zero.parent.mean, zero.child.mean), (1.0, 1.0));
}

#[test]
fn moments_below_the_tail_exponent_settle_and_above_drift() {
    // alpha = 0, gamma = 0.2: p* is about 3.8
    let p = Params::new(0.0, 1.0, 0.2).unwrap();
    let path = trajectory(1, &p, 1_000_000, StreamKey::new(9));
    let samples = &path[1000..];
    let checkpoints = [100_000, 300_000, samples.len()];
    let low = running_moments(samples, 1.0, &checkpoints);
    assert!((low[2] / low[0] - 1.0).abs() < 0.05, "{low:?}");
    assert!((low[2] - 10.0 / 3.0).abs() < 0.1);
    let high = running_moments(samples, 8.0, &checkpoints);
    assert!(high[2] > high[0], "{high:?}");
}
