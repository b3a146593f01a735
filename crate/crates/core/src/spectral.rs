//! Normalized Laplacian spectrum and Cheeger constants.
//!
//! `L = I − D^{-1/2} A D^{-1/2}`, with a zero diagonal entry for isolated
//! vertices. Eigenvalues come from Householder tridiagonalization followed
//! by implicit QL; a cyclic Jacobi solver is kept as an independent check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ReproGraph;

/// Largest graph for which the exhaustive Cheeger search runs.
pub const CHEEGER_EXACT_MAX_VERTICES: usize = 22;
pub const DEFAULT_SPECTRAL_MAX_VERTICES: usize = 4096;

const QL_MAX_ITERATIONS: usize = 60;
const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-10;

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Symmetrises `rows` by averaging with its transpose.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().take(n) {
                m.data[i * n + j] = 0.5 * (v + rows[j][i]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

pub fn normalized_laplacian(g: &ReproGraph) -> SymMatrix {
    let n = g.vertex_count();
    let mut m = SymMatrix::zeros(n);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| match g.degree(u) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    for u in 0..n {
        if g.degree(u) > 0 {
            m.data[u * n + u] = 1.0;
        }
        for &v in g.neighbors(u) {
            m.data[u * n + v as usize] = -inv_sqrt[u] * inv_sqrt[v as usize];
        }
    }
    m
}

/// Tridiagonal form `Qᵀ A Q` with the reflectors that build `Q`.
struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples `i` and `i + 1`; the last entry is 0.
    off: Vec<f64>,
    /// Reflector `k` acts on indices `k+1..n`; unit length or all zero.
    reflectors: Vec<Vec<f64>>,
}

fn tridiagonalize(m: &SymMatrix) -> Tridiagonal {
    let n = m.n;
    let mut a = m.data.clone();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| a[(k + 1 + i) * n + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        diag[k] = a[k * n + k];
        if norm == 0.0 {
            off[k] = 0.0;
            reflectors.push(vec![0.0; len]);
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        off[k] = alpha;
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vnorm);

        // trailing block B <- H B H with H = I - 2 v vᵀ
        let base = k + 1;
        let mut p = vec![0.0; len];
        for i in 0..len {
            let row = &a[(base + i) * n + base..(base + i) * n + n];
            p[i] = row.iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let kappa: f64 = p.iter().zip(&v).map(|(x, y)| x * y).sum();
        let q: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kappa * vi).collect();
        for i in 0..len {
            let (vi, qi) = (2.0 * v[i], 2.0 * q[i]);
            let row = &mut a[(base + i) * n + base..(base + i) * n + n];
            for ((x, &vj), &qj) in row.iter_mut().zip(&v).zip(&q) {
                *x -= vi * qj + qi * vj;
            }
        }
        reflectors.push(v);
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + n - 2];
        off[n - 2] = a[(n - 1) * n + n - 2];
    }
    if n >= 1 {
        diag[n - 1] = a[(n - 1) * n + n - 1];
    }
    Tridiagonal {
        diag,
        off,
        reflectors,
    }
}

impl Tridiagonal {
    /// `Q y`.
    fn back_transform(&self, mut y: Vec<f64>) -> Vec<f64> {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let tail = &mut y[k + 1..];
            let dot: f64 = tail.iter().zip(v).map(|(a, b)| a * b).sum();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= 2.0 * dot * vi;
            }
        }
        y
    }

    /// `Qᵀ x`.
    fn forward_transform(&self, mut x: Vec<f64>) -> Vec<f64> {
        for (k, v) in self.reflectors.iter().enumerate() {
            let tail = &mut x[k + 1..];
            let dot: f64 = tail.iter().zip(v).map(|(a, b)| a * b).sum();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= 2.0 * dot * vi;
            }
        }
        x
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > QL_MAX_ITERATIONS {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Solves `(T − σ I) x = b` by Gaussian elimination with partial pivoting;
/// zero pivots are replaced by `tiny`.
fn tridiagonal_solve(diag: &[f64], off: &[f64], sigma: f64, mut b: Vec<f64>, tiny: f64) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        let piv = if (diag[0] - sigma).abs() < tiny { tiny } else { diag[0] - sigma };
        return vec![b[0] / piv];
    }
    let mut d: Vec<f64> = diag.iter().map(|x| x - sigma).collect();
    let mut dl: Vec<f64> = off[..n - 1].to_vec();
    let mut du: Vec<f64> = off[..n - 1].to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i + 1];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    b[n - 1] /= d[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    b
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn project_out(v: &mut [f64], unit: &[f64]) {
    let dot: f64 = v.iter().zip(unit).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(unit).for_each(|(x, u)| *x -= dot * u);
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    if m.n == 0 {
        return Ok(Vec::new());
    }
    let t = tridiagonalize(m);
    tridiagonal_eigenvalues(t.diag, t.off)
}

/// Ascending eigenvalues by cyclic Jacobi rotations. `O(n^3)` per sweep;
/// meant for small matrices and cross-checks.
pub fn jacobi_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    let n = m.n;
    let mut a = m.data.clone();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * 1e-2 * scale {
            let mut vals: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            vals.sort_by(f64::total_cmp);
            return Ok(vals);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: JACOBI_MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// Eigenvalues of `L(g)` and an eigenvector for `λ₁`.
#[derive(Clone, Debug)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvector of `L` for `eigenvalues[1]`, orthogonal to `D^{1/2} 1`.
    pub fiedler: Vec<f64>,
}

pub fn laplacian_spectrum(g: &ReproGraph) -> Result<LaplacianSpectrum> {
    let n = g.vertex_count();
    if n < 2 {
        return Err(Error::Precondition("spectrum needs at least two vertices".into()));
    }
    let lap = normalized_laplacian(g);
    let t = tridiagonalize(&lap);
    let values = tridiagonal_eigenvalues(t.diag.clone(), t.off.clone())?;
    let lambda = values[1];

    let mut ground: Vec<f64> = (0..n).map(|u| (g.degree(u) as f64).sqrt()).collect();
    normalize(&mut ground);
    let ground_t = t.forward_transform(ground);

    let tiny = f64::EPSILON * 4.0;
    let sigma = lambda + 1e-10 * (1.0 + lambda.abs());
    let mut y: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64) * 0.618_034).sin()).collect();
    project_out(&mut y, &ground_t);
    normalize(&mut y);
    for _ in 0..4 {
        y = tridiagonal_solve(&t.diag, &t.off, sigma, y, tiny);
        project_out(&mut y, &ground_t);
        normalize(&mut y);
    }
    Ok(LaplacianSpectrum {
        eigenvalues: values,
        fiedler: t.back_transform(y),
    })
}

/// An achieving cut for the Cheeger constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheegerCut {
    pub h: f64,
    /// The side with the smaller volume.
    pub witness: Vec<usize>,
}

/// Exhaustive minimum of `e(S, S̄) / min(vol S, vol S̄)` over all cuts.
///
/// A disconnected graph gives `h = 0` with one component as the witness.
pub fn cheeger_exact(g: &ReproGraph) -> Result<CheegerCut> {
    let n = g.vertex_count();
    if n > CHEEGER_EXACT_MAX_VERTICES {
        return Err(Error::ResourceLimit {
            what: "exhaustive Cheeger vertex count",
            value: n as u64,
            cap: CHEEGER_EXACT_MAX_VERTICES as u64,
        });
    }
    if n < 2 {
        return Err(Error::Precondition("Cheeger constant needs at least two vertices".into()));
    }
    let (labels, count) = g.component_labels();
    if count > 1 {
        let pick = (0..n).find(|&u| g.degree(u) > 0).map_or(labels[0], |u| labels[u]);
        let witness = (0..n).filter(|&u| labels[u] == pick).collect();
        return Ok(CheegerCut { h: 0.0, witness });
    }
    let masks: Vec<u32> = (0..n)
        .map(|u| g.neighbors(u).iter().fold(0u32, |m, &v| m | (1 << v)))
        .collect();
    let degree: Vec<i64> = (0..n).map(|u| g.degree(u) as i64).collect();
    let total: i64 = degree.iter().sum();

    // Vertex 0 stays outside S; Gray code walks every nonempty S ⊆ {1..n-1}.
    let (mut set, mut cut, mut vol) = (0u32, 0i64, 0i64);
    let mut best = (f64::INFINITY, 0u32);
    for step in 1u32..(1u32 << (n - 1)) {
        let v = step.trailing_zeros() as usize + 1;
        let bit = 1u32 << v;
        let inside = (masks[v] & set).count_ones() as i64;
        if set & bit == 0 {
            cut += degree[v] - 2 * inside;
            vol += degree[v];
        } else {
            cut -= degree[v] - 2 * inside;
            vol -= degree[v];
        }
        set ^= bit;
        let small = vol.min(total - vol);
        if small > 0 {
            let ratio = cut as f64 / small as f64;
            if ratio < best.0 {
                best = (ratio, if vol <= total - vol { set } else { !set });
            }
        }
    }
    let witness = (0..n).filter(|&u| best.1 & (1 << u) != 0).collect();
    Ok(CheegerCut { h: best.0, witness })
}

/// Best prefix cut when vertices are ordered by `vector[u] / sqrt(d_u)`.
/// Always an upper bound on the Cheeger constant.
pub fn cheeger_sweep(g: &ReproGraph, vector: &[f64]) -> f64 {
    let n = g.vertex_count();
    let score = |u: usize| match g.degree(u) {
        0 => 0.0,
        d => vector[u] / (d as f64).sqrt(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
    let total: i64 = (0..n).map(|u| g.degree(u) as i64).sum();
    let mut in_set = vec![false; n];
    let (mut cut, mut vol) = (0i64, 0i64);
    let mut best = f64::INFINITY;
    for &v in order.iter().take(n.saturating_sub(1)) {
        let inside = g.neighbors(v).iter().filter(|&&w| in_set[w as usize]).count() as i64;
        cut += g.degree(v) as i64 - 2 * inside;
        vol += g.degree(v) as i64;
        in_set[v] = true;
        let small = vol.min(total - vol);
        if small > 0 {
            best = best.min(cut as f64 / small as f64);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n: u32,
    pub vertices: usize,
    pub lambda_1: f64,
    pub lambda_max: f64,
    /// `max(|λ₁ − 1|, |λ_max − 1|)`.
    pub spectral_radius: f64,
    /// Multiplicity of eigenvalue 0 (up to 1e-8).
    pub zero_multiplicity: usize,
    pub cheeger_exact: Option<f64>,
    pub cheeger_sweep_upper: f64,
}

impl SpectralReport {
    pub const CSV_HEADER: &'static str =
        "n,lambda_1,lambda_max,spectral_radius,cheeger_sweep,cheeger_exact";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12},{:.12},{:.12},{:.12},{}",
            self.n,
            self.lambda_1,
            self.lambda_max,
            self.spectral_radius,
            self.cheeger_sweep_upper,
            self.cheeger_exact.map(|h| format!("{h:.12}")).unwrap_or_default()
        )
    }
}

pub fn spectral_report(g: &ReproGraph, max_vertices: usize) -> Result<SpectralReport> {
    let n = g.vertex_count();
    if n > max_vertices {
        return Err(Error::ResourceLimit {
            what: "dense spectral vertex count",
            value: n as u64,
            cap: max_vertices as u64,
        });
    }
    let spectrum = laplacian_spectrum(g)?;
    let values = &spectrum.eigenvalues;
    let lambda_1 = values[1];
    let lambda_max = values[n - 1];
    let connected = g.is_connected();
    let cheeger_exact = if n <= CHEEGER_EXACT_MAX_VERTICES {
        Some(cheeger_exact(g)?.h)
    } else {
        None
    };
    let sweep = if connected {
        cheeger_sweep(g, &spectrum.fiedler)
    } else {
        0.0
    };
    Ok(SpectralReport {
        n: g.generation(),
        vertices: n,
        lambda_1,
        lambda_max,
        spectral_radius: (lambda_1 - 1.0).abs().max((lambda_max - 1.0).abs()),
        zero_multiplicity: values.iter().filter(|v| v.abs() < 1e-8).count(),
        cheeger_exact,
        cheeger_sweep_upper: sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::StreamKey;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn small_laplacians() {
        let l = normalized_laplacian(&ReproGraph::complete(2));
        assert_eq!(l.data, vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(normalized_laplacian(&ReproGraph::single_vertex()).data, vec![0.0]);
        let c4 = eigenvalues(&normalized_laplacian(&ReproGraph::cycle(4).unwrap())).unwrap();
        assert!(close(&c4, &[0.0, 1.0, 1.0, 2.0], 1e-10), "{c4:?}");
    }

    #[test]
    fn eigenvalue_edge_cases() {
        let k2 = eigenvalues(&normalized_laplacian(&ReproGraph::complete(2))).unwrap();
        assert!(close(&k2, &[0.0, 2.0], 1e-12));
        assert_eq!(eigenvalues(&SymMatrix::zeros(3)).unwrap(), vec![0.0; 3]);
        assert_eq!(jacobi_eigenvalues(&SymMatrix::zeros(3)).unwrap(), vec![0.0; 3]);
        assert!(eigenvalues(&SymMatrix::zeros(0)).unwrap().is_empty());
    }

    fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
        let key = StreamKey::new(seed);
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, 2.0 * key.uniform_at((i * n + j) as u64) - 1.0);
            }
        }
        m
    }

    #[test]
    fn trace_identity_and_solver_agreement() {
        for seed in 0..5 {
            let m = random_symmetric(20, seed);
            let ql = eigenvalues(&m).unwrap();
            let jac = jacobi_eigenvalues(&m).unwrap();
            assert!((ql.iter().sum::<f64>() - m.trace()).abs() < 1e-8);
            assert!(close(&ql, &jac, 1e-8), "{ql:?} vs {jac:?}");
            // sum of squares equals Frobenius norm squared
            let frob: f64 = m.data.iter().map(|x| x * x).sum();
            assert!((ql.iter().map(|x| x * x).sum::<f64>() - frob).abs() < 1e-8);
        }
    }

    #[test]
    fn cycle_spectrum_closed_form() {
        let n = 12;
        let vals = eigenvalues(&normalized_laplacian(&ReproGraph::cycle(n).unwrap())).unwrap();
        let mut want: Vec<f64> = (0..n)
            .map(|k| 1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        assert!(close(&vals, &want, 1e-10));
    }

    #[test]
    fn fiedler_vector_is_an_eigenvector() {
        let g = ReproGraph::path(9);
        let lap = normalized_laplacian(&g);
        let s = laplacian_spectrum(&g).unwrap();
        let lambda = s.eigenvalues[1];
        for i in 0..9 {
            let lv: f64 = (0..9).map(|j| lap.get(i, j) * s.fiedler[j]).sum();
            assert!((lv - lambda * s.fiedler[i]).abs() < 1e-8);
        }
    }

    /// Brute force over explicit subsets, independent of the Gray-code walk.
    fn cheeger_brute(g: &ReproGraph) -> f64 {
        let n = g.vertex_count();
        let total: usize = (0..n).map(|u| g.degree(u)).sum();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let inside = |u: usize| mask & (1 << u) != 0;
            let vol: usize = (0..n).filter(|&u| inside(u)).map(|u| g.degree(u)).sum();
            if vol == 0 || 2 * vol > total {
                continue;
            }
            let cut = g.edges().filter(|&(u, v)| inside(u) != inside(v)).count();
            best = best.min(cut as f64 / vol as f64);
        }
        best
    }

    #[test]
    fn cheeger_small_graphs() {
        assert_eq!(cheeger_exact(&ReproGraph::complete(2)).unwrap().h, 1.0);
        let c4 = cheeger_exact(&ReproGraph::cycle(4).unwrap()).unwrap();
        assert_eq!(c4.h, 0.5);
        assert_eq!(c4.witness.len(), 2);
        let p4 = ReproGraph::path(4);
        let h = cheeger_exact(&p4).unwrap().h;
        assert_eq!(h, cheeger_brute(&p4));
        assert!((h - 1.0 / 3.0).abs() < 1e-12);
        let c8 = ReproGraph::cycle(8).unwrap();
        assert_eq!(cheeger_exact(&c8).unwrap().h, cheeger_brute(&c8));
        assert!(cheeger_exact(&ReproGraph::complete(23)).is_err());
        let split = ReproGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let cut = cheeger_exact(&split).unwrap();
        assert_eq!(cut.h, 0.0);
        assert_eq!(cut.witness, vec![0, 1]);
    }

    #[test]
    fn sweep_bounds() {
        let k4 = ReproGraph::complete(4);
        let s = laplacian_spectrum(&k4).unwrap();
        let sweep = cheeger_sweep(&k4, &s.fiedler);
        assert!((sweep - cheeger_exact(&k4).unwrap().h).abs() < 1e-12);
        let c8 = ReproGraph::cycle(8).unwrap();
        let s = laplacian_spectrum(&c8).unwrap();
        assert!((cheeger_sweep(&c8, &s.fiedler) - 0.25).abs() < 1e-12);
        assert!((cheeger_exact(&c8).unwrap().h - 0.25).abs() < 1e-12);
    }

    #[test]
    fn report_for_k2() {
        let r = spectral_report(&ReproGraph::complete(2), 4096).unwrap();
        assert!((r.lambda_1 - 2.0).abs() < 1e-12);
        assert!((r.spectral_radius - 1.0).abs() < 1e-12);
        assert_eq!(r.cheeger_exact, Some(1.0));
        assert!(spectral_report(&ReproGraph::complete(5), 4).is_err());
        assert!(spectral_report(&ReproGraph::single_vertex(), 10).is_err());
    }

    #[test]
    fn csv_row_blank_exact() {
        let mut r = spectral_report(&ReproGraph::complete(2), 10).unwrap();
        r.cheeger_exact = None;
        assert!(r.csv_row().ends_with(','));
        assert_eq!(SpectralReport::CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
