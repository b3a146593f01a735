//! Snapshots of the growing graph and the one-generation growth step.
//!
//! Vertex `i` of `G_n` keeps index `i` in `G_{n+1}` (its continuation) and
//! its child gets index `i + V_n`. The ancestor of vertex `j` of `G_{n+1}`
//! is therefore `j mod V_n`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edges;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::sampling::StreamKey;

/// Stream tags of the three families of edge trials.
const RULE_CHILD_CHILD: u64 = 0xA;
const RULE_PARENT_CHILD: u64 = 0xB;
const RULE_CHILD_NEIGHBOUR: u64 = 0xC;

pub const DEFAULT_MAX_VERTICES: u64 = 1 << 22;
pub const DEFAULT_MAX_EDGES: u64 = 1 << 27;

/// Hard limits on graph size; growth is exponential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_vertices: u64,
    pub max_edges: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_vertices: DEFAULT_MAX_VERTICES,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }
}

impl Caps {
    pub fn validate(&self) -> Result<()> {
        // Vertex ids are stored as u32.
        if self.max_vertices > u32::MAX as u64 {
            return Err(Error::Config(format!(
                "max vertices {} exceeds the 32-bit id space",
                self.max_vertices
            )));
        }
        Ok(())
    }
}

/// One snapshot `G_n`: symmetric, loop-free, simple, sorted adjacency in
/// compressed-row form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReproGraph {
    generation: u32,
    v0: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl ReproGraph {
    /// Builds a generation-0 graph from an edge list. Self-loops and
    /// repeated edges are rejected.
    pub fn from_edges<I>(vertex_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if vertex_count as u64 > u32::MAX as u64 {
            return Err(Error::ResourceLimit {
                what: "vertex count",
                value: vertex_count as u64,
                cap: u32::MAX as u64,
            });
        }
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); vertex_count];
        for (u, v) in edges {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(Error::IndexOutOfRange {
                        index: w,
                        len: vertex_count,
                    });
                }
            }
            if u == v {
                return Err(Error::Precondition(format!("self-loop at vertex {u}")));
            }
            lists[u].push(v as u32);
            lists[v].push(u as u32);
        }
        for (u, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Precondition(format!(
                    "repeated edge at vertex {u}"
                )));
            }
        }
        Ok(Self::from_lists(0, vertex_count, lists))
    }

    fn from_lists(generation: u32, v0: usize, lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let total: usize = lists.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        for list in lists {
            targets.extend_from_slice(&list);
            offsets.push(targets.len());
        }
        Self {
            generation,
            v0,
            offsets,
            targets,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_lists(0, n, vec![Vec::new(); n])
    }

    pub fn single_vertex() -> Self {
        Self::empty(1)
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("complete graph is simple")
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|v| (v - 1, v))).expect("path is simple")
    }

    /// Cycle on `n >= 3` vertices.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Precondition(format!("cycle needs >= 3 vertices, got {n}")));
        }
        Self::from_edges(n, (0..n).map(|v| (v, (v + 1) % n)))
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Vertex count of `G_0`.
    pub fn v0(&self) -> usize {
        self.v0
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn degree_histogram(&self) -> BTreeMap<usize, u64> {
        let mut hist = BTreeMap::new();
        for u in 0..self.vertex_count() {
            *hist.entry(self.degree(u)).or_insert(0) += 1;
        }
        hist
    }

    pub fn isolated_fraction(&self) -> f64 {
        let n = self.vertex_count();
        if n == 0 {
            return 0.0;
        }
        (0..n).filter(|&u| self.degree(u) == 0).count() as f64 / n as f64
    }

    /// Number of connected components, isolated vertices included.
    pub fn component_count(&self) -> usize {
        self.component_labels().1
    }

    /// Component label of every vertex and the number of components.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    let v = v as usize;
                    if label[v] == usize::MAX {
                        label[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.vertex_count() > 0 && self.component_count() == 1
    }

    pub fn to_edgelist(&self) -> String {
        let mut out = format!("# vertices {}\n", self.vertex_count());
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph G {\n");
        for u in 0..self.vertex_count() {
            out.push_str(&format!("  {u};\n"));
        }
        for (u, v) in self.edges() {
            out.push_str(&format!("  {u} -- {v};\n"));
        }
        out.push_str("}\n");
        out
    }

    /// Parses the edge-list format written by [`Self::to_edgelist`].
    ///
    /// A `# vertices N` comment fixes the vertex count; without it the count
    /// is one more than the largest index seen. Other `#` lines are ignored.
    pub fn from_edgelist(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut declared = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("vertices") {
                    let n = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| parse_err(i + 1, "bad vertex count".into()))?;
                    declared = Some(n);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = || -> Result<usize> {
                fields
                    .next()
                    .ok_or_else(|| parse_err(i + 1, "expected two vertex indices".into()))?
                    .parse::<usize>()
                    .map_err(|e| parse_err(i + 1, e.to_string()))
            };
            let (u, v) = (next()?, next()?);
            if fields.next().is_some() {
                return Err(parse_err(i + 1, "trailing fields".into()));
            }
            edges.push((u, v));
        }
        let inferred = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let n = declared.unwrap_or(inferred);
        Self::from_edges(n, edges)
    }

    pub fn read_edgelist(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edgelist(&text, &path.display().to_string())
    }

    pub fn write_edgelist(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edgelist()).map_err(|e| Error::io(path, e))
    }

    pub fn write_dot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_dot()).map_err(|e| Error::io(path, e))
    }
}

/// Continuation and child indices of vertex `i` of a graph with `vertex_count` vertices.
pub fn index_map(i: usize, vertex_count: usize) -> Result<(usize, usize)> {
    if i >= vertex_count {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: vertex_count,
        });
    }
    Ok((i, i + vertex_count))
}

/// Parent-generation ancestor of vertex `j` of the next generation.
pub fn ancestor(j: usize, vertex_count: usize) -> Result<usize> {
    if j >= 2 * vertex_count {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: 2 * vertex_count,
        });
    }
    Ok(j % vertex_count)
}

/// Keys of the three trial families for one generation.
#[derive(Clone, Copy)]
struct RuleKeys {
    parent_child: StreamKey,
    child_neighbour: StreamKey,
    child_child: StreamKey,
}

impl RuleKeys {
    fn new(key: StreamKey) -> Self {
        Self {
            parent_child: key.child(RULE_PARENT_CHILD),
            child_neighbour: key.child(RULE_CHILD_NEIGHBOUR),
            child_child: key.child(RULE_CHILD_CHILD),
        }
    }

    /// Trial `b_u`.
    #[inline]
    fn parent_child(&self, u: usize, beta: f64) -> bool {
        self.parent_child.trial(u as u64, beta)
    }

    /// Trial `c_(u,v)` for the ordered pair: child of `u` joins `v`.
    #[inline]
    fn child_neighbour(&self, u: usize, v: usize, gamma: f64) -> bool {
        self.child_neighbour.child(u as u64).trial(v as u64, gamma)
    }

    /// Trial `a_{u,v}` for the unordered pair.
    #[inline]
    fn child_child(&self, u: usize, v: usize, alpha: f64) -> bool {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        self.child_child.child(lo as u64).trial(hi as u64, alpha)
    }
}

/// One growth step `G_n -> G_{n+1}`.
///
/// Every trial is keyed by its rule and entity indices under `key`, so the
/// result does not depend on the evaluation order or thread count.
pub fn evolve(g: &ReproGraph, params: &Params, key: StreamKey, caps: &Caps) -> Result<ReproGraph> {
    params.validate()?;
    caps.validate()?;
    let n = g.vertex_count();
    let next_vertices = 2 * n as u64;
    if next_vertices > caps.max_vertices {
        return Err(Error::ResourceLimit {
            what: "vertex count",
            value: next_vertices,
            cap: caps.max_vertices,
        });
    }
    let projected =
        (params.edge_growth() * g.edge_count() as f64 + params.beta * n as f64).ceil() as u64;
    if projected > caps.max_edges {
        return Err(Error::ResourceLimit {
            what: "projected edge count",
            value: projected,
            cap: caps.max_edges,
        });
    }

    let rules = RuleKeys::new(key);
    let Params { alpha, beta, gamma } = *params;
    let lists: Vec<Vec<u32>> = (0..2 * n)
        .into_par_iter()
        .map(|w| {
            if w < n {
                continuation_list(g, &rules, w, beta, gamma)
            } else {
                child_list(g, &rules, w - n, alpha, beta, gamma)
            }
        })
        .collect();

    let next = ReproGraph::from_lists(g.generation + 1, g.v0, lists);
    if next.edge_count() as u64 > caps.max_edges {
        return Err(Error::ResourceLimit {
            what: "edge count",
            value: next.edge_count() as u64,
            cap: caps.max_edges,
        });
    }
    Ok(next)
}

/// Neighbours of `u1`: old neighbours, children of neighbours that drew
/// `c_(v,u)`, and `u0` if `b_u`.
fn continuation_list(g: &ReproGraph, rules: &RuleKeys, u: usize, beta: f64, gamma: f64) -> Vec<u32> {
    let n = g.vertex_count();
    let old = g.neighbors(u);
    let mut list = Vec::with_capacity(2 * old.len() + 1);
    list.extend_from_slice(old);
    let own_child = (u + n) as u32;
    let mut own_pending = rules.parent_child(u, beta);
    for &v in old {
        let v = v as usize;
        if own_pending && v > u {
            list.push(own_child);
            own_pending = false;
        }
        if rules.child_neighbour(v, u, gamma) {
            list.push((v + n) as u32);
        }
    }
    if own_pending {
        list.push(own_child);
    }
    list
}

/// Neighbours of `u0`: `u1` if `b_u`, neighbours `v1` with `c_(u,v)`, and
/// children `v0` with `a_{u,v}`.
fn child_list(
    g: &ReproGraph,
    rules: &RuleKeys,
    u: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Vec<u32> {
    let n = g.vertex_count();
    let old = g.neighbors(u);
    let mut list = Vec::with_capacity(old.len() + 1);
    let mut parent_pending = rules.parent_child(u, beta);
    for &v in old {
        let v = v as usize;
        if parent_pending && v > u {
            list.push(u as u32);
            parent_pending = false;
        }
        if rules.child_neighbour(u, v, gamma) {
            list.push(v as u32);
        }
    }
    if parent_pending {
        list.push(u as u32);
    }
    for &v in old {
        let v = v as usize;
        if rules.child_child(u, v, alpha) {
            list.push((v + n) as u32);
        }
    }
    list
}

/// Per-generation summary of one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub n: u32,
    pub vertices: u64,
    pub edges: u64,
    pub degree_histogram: BTreeMap<usize, u64>,
    pub isolated_fraction: f64,
    /// `E_n / 2^n`.
    pub normalized_edges_sparse: f64,
    /// `E_n / (2^n n)`, for `n >= 1`.
    pub normalized_edges_critical: Option<f64>,
    /// Martingale value; present when `beta > 0`.
    pub martingale_w: Option<f64>,
}

impl GenerationStats {
    pub fn of(g: &ReproGraph, params: &Params) -> Self {
        let n = g.generation();
        let vertices = g.vertex_count() as u64;
        let edges = g.edge_count() as u64;
        let scale = 2f64.powi(n as i32);
        let mut stats = Self {
            n,
            vertices,
            edges,
            degree_histogram: g.degree_histogram(),
            isolated_fraction: g.isolated_fraction(),
            normalized_edges_sparse: edges as f64 / scale,
            normalized_edges_critical: (n >= 1).then(|| edges as f64 / (scale * n as f64)),
            martingale_w: None,
        };
        stats.martingale_w = edges::martingale_w(&stats, params).ok();
        stats
    }

    /// Proportion of vertices with degree `d`.
    pub fn degree_fraction(&self, d: usize) -> f64 {
        *self.degree_histogram.get(&d).unwrap_or(&0) as f64 / self.vertices as f64
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges as f64 / self.vertices as f64
    }
}

/// Output of [`grow`].
#[derive(Clone, Debug)]
pub struct Growth {
    /// Entry `m` describes `G_m` (relative to the starting graph).
    pub stats: Vec<GenerationStats>,
    pub final_graph: Option<ReproGraph>,
}

/// Iterates [`evolve`] `steps` times. Generation `m -> m+1` draws from
/// `key.child(m)`, with `m` the absolute generation index.
pub fn grow(
    g0: &ReproGraph,
    params: &Params,
    steps: usize,
    key: StreamKey,
    caps: &Caps,
    keep_final: bool,
) -> Result<Growth> {
    grow_with(g0, params, steps, key, caps, keep_final, |_| Ok(()))
}

/// [`grow`] with a callback that sees every snapshot, including the first.
pub fn grow_with<F>(
    g0: &ReproGraph,
    params: &Params,
    steps: usize,
    key: StreamKey,
    caps: &Caps,
    keep_final: bool,
    mut visit: F,
) -> Result<Growth>
where
    F: FnMut(&ReproGraph) -> Result<()>,
{
    params.validate()?;
    let mut stats = Vec::with_capacity(steps + 1);
    let mut current = g0.clone();
    visit(&current)?;
    stats.push(GenerationStats::of(&current, params));
    for _ in 0..steps {
        let gen_key = key.child(current.generation() as u64);
        current = evolve(&current, params, gen_key, caps)?;
        visit(&current)?;
        stats.push(GenerationStats::of(&current, params));
    }
    Ok(Growth {
        stats,
        final_graph: keep_final.then_some(current),
    })
}

/// Named starting graphs, or an edge-list file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum G0Spec {
    Complete(usize),
    Path(usize),
    Cycle(usize),
    Empty(usize),
    File(PathBuf),
}

impl G0Spec {
    pub fn build(&self) -> Result<ReproGraph> {
        match self {
            G0Spec::Complete(n) => Ok(ReproGraph::complete(*n)),
            G0Spec::Path(n) => Ok(ReproGraph::path(*n)),
            G0Spec::Cycle(n) => ReproGraph::cycle(*n),
            G0Spec::Empty(n) => Ok(ReproGraph::empty(*n)),
            G0Spec::File(path) => ReproGraph::read_edgelist(path),
        }
    }
}

impl FromStr for G0Spec {
    type Err = Error;

    /// `k<n>` complete (so `k1` is a single vertex), `p<n>` path, `c<n>`
    /// cycle, `e<n>` empty; anything else is read as a file path.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let preset = |prefix: &str| {
            lower
                .strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .filter(|&n| n >= 1)
        };
        if let Some(n) = preset("k") {
            return Ok(G0Spec::Complete(n));
        }
        if let Some(n) = preset("p") {
            return Ok(G0Spec::Path(n));
        }
        if let Some(n) = preset("c") {
            return Ok(G0Spec::Cycle(n));
        }
        if let Some(n) = preset("e") {
            return Ok(G0Spec::Empty(n));
        }
        if s.is_empty() {
            return Err(Error::Config("empty G0 specification".into()));
        }
        Ok(G0Spec::File(PathBuf::from(s)))
    }
}

impl fmt::Display for G0Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            G0Spec::Complete(n) => write!(f, "k{n}"),
            G0Spec::Path(n) => write!(f, "p{n}"),
            G0Spec::Cycle(n) => write!(f, "c{n}"),
            G0Spec::Empty(n) => write!(f, "e{n}"),
            G0Spec::File(p) => write!(f, "{}", p.display()),
        }
    }
}
