//! Experiment configuration and the command implementations behind the
//! binary.
//!
//! Settings are layered: command-line flags override a `key=value` config
//! file, which overrides `REPROGRAPH_SEED`, which overrides the defaults.
//! Every output starts with a `#` echo of the settings that determine its
//! content, so a record can be replayed byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpre::{classify_bpre, extinction_probability, isolation_curve};
use crate::chain::{
    build_kernel, classify_degree_regime, initial_degree, moment, sample_moment, stationary_adaptive,
    stationary_distribution, tail_exponent, trajectory, DegreeRegime, TailExponent,
};
use crate::checks;
use crate::edges::classify_edge_regime;
use crate::error::{Error, Result};
use crate::graph::{grow_with, Caps, G0Spec, GenerationStats, ReproGraph};
use crate::params::Params;
use crate::sampling::StreamKey;
use crate::spectral::{spectral_report, SpectralReport, DEFAULT_SPECTRAL_MAX_VERTICES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "REPROGRAPH_SEED";

const REPLICATE_TAG: u64 = 0x5245_5053;
const DEFAULT_MAX_ITERATIONS: usize = 200_000;
const ADAPTIVE_START: usize = 256;
const ADAPTIVE_MAX: usize = 1 << 16;
const LUMPED_TARGET: f64 = 1e-9;
/// Chain steps after burn-in for the `--empirical` phase columns.
const PHASE_MC_STEPS: usize = 20_000;
const PHASE_MC_REPS: usize = 1_000;

pub const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "steps",
    "reps",
    "seed",
    "g0",
    "out",
    "format",
    "workers",
    "max-vertices",
    "max-edges",
    "max-spectral-vertices",
    "truncation",
    "tol",
    "burn-in",
    "x0",
    "horizon",
    "snapshot",
    "grid-alpha",
    "grid-gamma",
    "empirical",
    "stationary",
    "tail-only",
    "only",
    "list",
];

/// Keys that do not affect the bytes of the primary output.
const NON_CONTENT_KEYS: &[&str] = &["out", "workers"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Grow,
    Chain,
    Phase,
    Spectral,
    Bpre,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Grow => "grow",
            Command::Chain => "chain",
            Command::Phase => "phase",
            Command::Spectral => "spectral",
            Command::Bpre => "bpre",
            Command::Check => "check",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown format {other:?} (expected csv or jsonl)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub params: Params,
    pub g0: G0Spec,
    pub steps: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    pub caps: Caps,
    pub max_spectral_vertices: usize,
    /// Fixed kernel truncation; adaptive doubling when absent.
    pub truncation: Option<usize>,
    pub tol: f64,
    pub burn_in: usize,
    /// Initial chain degree; drawn from `g0` when absent.
    pub x0: Option<u64>,
    pub horizon: usize,
    pub snapshots: Vec<u32>,
    pub grid_alpha: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub empirical: bool,
    pub stationary: bool,
    pub tail_only: bool,
    pub only: Vec<String>,
    pub list: bool,
    /// The merged `key=value` settings this config was built from.
    pub settings: BTreeMap<String, String>,
}

/// Parses flat `key=value` text. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, source_name: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(parse_err(format!("unknown key {key:?}")));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text, &path.display().to_string())
}

fn parse_value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| Error::Config(format!("invalid value {v:?} for {key}: {e}")))
        })
        .transpose()
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    match map.get(key).map(|s| s.to_ascii_lowercase()) {
        None => Ok(false),
        Some(v) => match v.as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
        },
    }
}

/// Comma-separated values, or an inclusive range `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid grid {text:?}"));
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn parse_list<T: FromStr>(text: &str, key: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("invalid entry {s:?} in {key}")))
        })
        .collect()
}

impl ExperimentConfig {
    /// Builds a config from settings already merged in precedence order.
    pub fn from_settings(command: Command, settings: BTreeMap<String, String>) -> Result<Self> {
        for key in settings.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown setting {key:?}")));
            }
        }
        let s = &settings;
        let params = Params::new(
            parse_value(s, "alpha")?.unwrap_or(0.0),
            parse_value(s, "beta")?.unwrap_or(1.0),
            parse_value(s, "gamma")?.unwrap_or(0.2),
        )?;
        let g0: G0Spec = parse_value(s, "g0")?.unwrap_or(G0Spec::Complete(2));
        if let G0Spec::File(path) = &g0 {
            if !path.is_file() {
                return Err(Error::Config(format!("G0 file {} does not exist", path.display())));
            }
        }
        let defaults = Caps::default();
        let caps = Caps {
            max_vertices: parse_value(s, "max-vertices")?.unwrap_or(defaults.max_vertices),
            max_edges: parse_value(s, "max-edges")?.unwrap_or(defaults.max_edges),
        };
        caps.validate()?;
        let reps = parse_value(s, "reps")?.unwrap_or(1usize);
        if reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        let workers = parse_value::<usize>(s, "workers")?;
        if workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let tol: f64 = parse_value(s, "tol")?.unwrap_or(1e-10);
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Config("tol must be positive".into()));
        }
        let default_grid = "0:1:0.1";
        Ok(Self {
            command,
            params,
            g0,
            steps: parse_value(s, "steps")?.unwrap_or(8),
            reps,
            seed: parse_value(s, "seed")?.unwrap_or(0),
            out: s.get("out").map(PathBuf::from),
            format: parse_value(s, "format")?.unwrap_or(Format::Csv),
            workers,
            caps,
            max_spectral_vertices: parse_value(s, "max-spectral-vertices")?
                .unwrap_or(DEFAULT_SPECTRAL_MAX_VERTICES),
            truncation: parse_value(s, "truncation")?,
            tol,
            burn_in: parse_value(s, "burn-in")?.unwrap_or(1000),
            x0: parse_value(s, "x0")?,
            horizon: parse_value(s, "horizon")?.unwrap_or(200),
            snapshots: s.get("snapshot").map_or(Ok(Vec::new()), |v| parse_list(v, "snapshot"))?,
            grid_alpha: parse_grid(s.get("grid-alpha").map_or(default_grid, String::as_str))?,
            grid_gamma: parse_grid(s.get("grid-gamma").map_or(default_grid, String::as_str))?,
            empirical: parse_bool(s, "empirical")?,
            stationary: parse_bool(s, "stationary")?,
            tail_only: parse_bool(s, "tail-only")?,
            only: s.get("only").map_or(Ok(Vec::new()), |v| parse_list(v, "only"))?,
            list: parse_bool(s, "list")?,
            settings,
        })
    }

    /// Layers flags over the config file over the seed variable.
    pub fn resolve(
        command: Command,
        flags: &BTreeMap<String, String>,
        config_file: Option<&Path>,
        env_seed: Option<&str>,
    ) -> Result<Self> {
        let mut merged = BTreeMap::new();
        if let Some(seed) = env_seed {
            merged.insert("seed".to_string(), seed.to_string());
        }
        if let Some(path) = config_file {
            merged.extend(read_config_file(path)?);
        }
        merged.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_settings(command, merged)
    }

    pub fn master_key(&self) -> StreamKey {
        StreamKey::new(self.seed)
    }

    /// Key of replicate `r`.
    pub fn replicate_key(&self, r: usize) -> StreamKey {
        self.master_key().child(REPLICATE_TAG).child(r as u64)
    }

    /// The content-determining settings, with resolved defaults.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("command".into(), self.command.name().into());
        map.insert("alpha".into(), self.params.alpha.to_string());
        map.insert("beta".into(), self.params.beta.to_string());
        map.insert("gamma".into(), self.params.gamma.to_string());
        map.insert("g0".into(), self.g0.to_string());
        map.insert("steps".into(), self.steps.to_string());
        map.insert("reps".into(), self.reps.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("format".into(), format!("{:?}", self.format).to_lowercase());
        map.insert("max-vertices".into(), self.caps.max_vertices.to_string());
        map.insert("max-edges".into(), self.caps.max_edges.to_string());
        for (k, v) in &self.settings {
            if !NON_CONTENT_KEYS.contains(&k.as_str()) {
                map.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        map
    }

    fn header(&self) -> String {
        match self.format {
            Format::Csv => {
                let mut out = format!("# reprograph {VERSION}\n");
                for (k, v) in self.echo() {
                    let _ = writeln!(out, "# {k}={v}");
                }
                out
            }
            Format::Jsonl => {
                let line = serde_json::json!({ "record": "config", "version": VERSION, "config": self.echo() });
                format!("{line}\n")
            }
        }
    }

    pub fn build_g0(&self) -> Result<ReproGraph> {
        self.g0.build()
    }
}

/// Reproduction record written next to an output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub records: usize,
    pub wall_time_seconds: f64,
}

impl RunRecord {
    pub fn sidecar_path(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_owned();
        name.push(".run.json");
        PathBuf::from(name)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandOutput {
    pub body: String,
    /// Extra files, such as DOT snapshots.
    pub artifacts: Vec<(PathBuf, String)>,
    pub failed_checks: usize,
    /// Data rows or records in `body`.
    pub records: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_default()
}

fn snapshot_path(cfg: &ExperimentConfig, rep: usize, n: u32) -> PathBuf {
    let suffix = if cfg.reps > 1 {
        format!("r{rep}.n{n}.dot")
    } else {
        format!("n{n}.dot")
    };
    match &cfg.out {
        Some(out) => {
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            out.with_file_name(format!("{stem}.{suffix}"))
        }
        None => PathBuf::from(format!("snapshot.{suffix}")),
    }
}

pub const GROW_CSV_HEADER: &str = "rep,n,vertices,edges,mean_degree,max_degree,isolated_fraction,\
                                   normalized_edges_sparse,normalized_edges_critical,martingale_w";

fn grow_row(rep: usize, s: &GenerationStats) -> String {
    format!(
        "{rep},{},{},{},{:.12},{},{:.12},{:.12},{},{}",
        s.n,
        s.vertices,
        s.edges,
        s.mean_degree(),
        s.degree_histogram.keys().next_back().copied().unwrap_or(0),
        s.isolated_fraction,
        s.normalized_edges_sparse,
        fmt_opt(s.normalized_edges_critical),
        fmt_opt(s.martingale_w)
    )
}

type GrowRun = (Vec<GenerationStats>, Vec<(PathBuf, String)>);

pub fn cmd_grow(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let g0 = cfg.build_g0()?;
    let runs: Vec<GrowRun> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut dots = Vec::new();
            let growth = grow_with(&g0, &cfg.params, cfg.steps, cfg.replicate_key(rep), &cfg.caps, false, |g| {
                if cfg.snapshots.contains(&g.generation()) {
                    dots.push((snapshot_path(cfg, rep, g.generation()), g.to_dot()));
                }
                Ok(())
            })?;
            Ok((growth.stats, dots))
        })
        .collect::<Result<_>>()?;
    let mut out = CommandOutput {
        body: cfg.header(),
        ..Default::default()
    };
    if cfg.format == Format::Csv {
        out.body.push_str(GROW_CSV_HEADER);
        out.body.push('\n');
    }
    for (rep, (stats, dots)) in runs.into_iter().enumerate() {
        for s in &stats {
            match cfg.format {
                Format::Csv => out.body.push_str(&grow_row(rep, s)),
                Format::Jsonl => {
                    let line = serde_json::json!({ "record": "generation", "rep": rep, "stats": s });
                    out.body.push_str(&line.to_string());
                }
            }
            out.body.push('\n');
            out.records += 1;
        }
        out.artifacts.extend(dots);
    }
    Ok(out)
}

fn tail_text(t: TailExponent) -> String {
    match t {
        TailExponent::Root(p) => format!("{p:.12}"),
        TailExponent::NoFiniteMoments => "0".into(),
        TailExponent::AllFinite => "none".into(),
    }
}

pub fn cmd_chain(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let params = &cfg.params;
    if cfg.tail_only {
        return Ok(CommandOutput {
            body: format!("{}\n", tail_text(tail_exponent(params))),
            records: 1,
            ..Default::default()
        });
    }
    let mut out = CommandOutput {
        body: cfg.header(),
        ..Default::default()
    };
    if cfg.stationary {
        let (truncation, st) = match cfg.truncation {
            Some(d) => {
                let kernel = build_kernel(params, d)?;
                (d, stationary_distribution(&kernel, cfg.tol, DEFAULT_MAX_ITERATIONS)?)
            }
            None => {
                let (kernel, st) = stationary_adaptive(
                    params,
                    cfg.tol,
                    ADAPTIVE_START,
                    ADAPTIVE_MAX,
                    LUMPED_TARGET,
                    DEFAULT_MAX_ITERATIONS,
                )?;
                (kernel.truncation(), st)
            }
        };
        let summary = serde_json::json!({
            "record": "summary",
            "regime": classify_degree_regime(params).name(),
            "truncation": truncation,
            "iterations": st.iterations,
            "residual": st.residual,
            "lumped_mass": st.lumped_mass,
            "mean": st.mean(),
            "second_moment": moment(&st.pi, 2.0),
            "tail_exponent": tail_text(tail_exponent(params)),
        });
        match cfg.format {
            Format::Csv => {
                for (k, v) in summary.as_object().into_iter().flatten().filter(|(k, _)| *k != "record") {
                    let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                    let _ = writeln!(out.body, "# {k}={v}");
                }
                out.body.push_str("x,probability,mean\n");
                let mean = st.mean();
                for (x, p) in st.pi.iter().enumerate() {
                    let _ = writeln!(out.body, "{x},{p:e},{mean:.12}");
                }
            }
            Format::Jsonl => {
                let _ = writeln!(out.body, "{summary}");
                for (x, p) in st.pi.iter().enumerate() {
                    let _ = writeln!(out.body, "{}", serde_json::json!({ "record": "pi", "x": x, "probability": p }));
                }
            }
        }
        out.records = st.pi.len();
        return Ok(out);
    }
    let g0 = cfg.build_g0()?;
    let paths: Vec<Vec<u64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let key = cfg.replicate_key(rep);
            let x0 = cfg.x0.unwrap_or_else(|| initial_degree(&g0, key.child(0)));
            trajectory(x0, params, cfg.steps, key.child(1))
        })
        .collect();
    if cfg.format == Format::Csv {
        out.body.push_str("rep,step,degree\n");
    }
    for (rep, path) in paths.iter().enumerate() {
        for (step, x) in path.iter().enumerate() {
            match cfg.format {
                Format::Csv => {
                    let _ = writeln!(out.body, "{rep},{step},{x}");
                }
                Format::Jsonl => {
                    let _ = writeln!(
                        out.body,
                        "{}",
                        serde_json::json!({ "record": "state", "rep": rep, "step": step, "degree": x })
                    );
                }
            }
            out.records += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub alpha: f64,
    pub gamma: f64,
    pub degree_product: f64,
    pub degree_regime: String,
    pub edge_regime: String,
    /// Limit constant (sparse, critical) or densification exponent (dense).
    pub edge_value: f64,
    pub p_star: String,
    pub bpre_criterion: f64,
    pub bpre_verdict: String,
    pub bpre_boundary: bool,
    pub mc_mean_degree: Option<f64>,
    pub mc_extinction: Option<f64>,
}

pub const PHASE_CSV_HEADER: &str = "alpha,gamma,degree_product,degree_regime,edge_regime,edge_value,\
                                    p_star,bpre_criterion,bpre_verdict,bpre_boundary";

pub fn phase_row(alpha: f64, gamma: f64, beta: f64, v0: u64) -> Result<PhaseRow> {
    let params = Params::new(alpha, beta, gamma)?;
    let regime = classify_degree_regime(&params);
    let edge = classify_edge_regime(&params, v0);
    let bpre = classify_bpre(&Params::new(alpha, 0.0, gamma)?)?;
    Ok(PhaseRow {
        alpha,
        gamma,
        degree_product: params.degree_product(),
        degree_regime: regime.name().into(),
        edge_regime: edge.name().into(),
        edge_value: edge.value(),
        p_star: tail_text(tail_exponent(&params)),
        bpre_criterion: bpre.criterion_value,
        bpre_verdict: bpre.verdict.name().into(),
        bpre_boundary: bpre.boundary,
        mc_mean_degree: None,
        mc_extinction: None,
    })
}

fn phase_empirical(row: &mut PhaseRow, cfg: &ExperimentConfig, key: StreamKey) -> Result<()> {
    let params = Params::new(row.alpha, cfg.params.beta, row.gamma)?;
    if classify_degree_regime(&params) == DegreeRegime::Subcritical {
        let path = trajectory(1, &params, cfg.burn_in + PHASE_MC_STEPS, key.child(0));
        row.mc_mean_degree = Some(sample_moment(&path[cfg.burn_in + 1..], 1.0));
    }
    let no_link = Params::new(row.alpha, 0.0, row.gamma)?;
    row.mc_extinction = Some(extinction_probability(&no_link, 1, cfg.horizon, PHASE_MC_REPS, key.child(1))?.probability);
    Ok(())
}

pub fn cmd_phase(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let v0 = cfg.build_g0()?.vertex_count() as u64;
    let grid: Vec<(f64, f64)> = cfg
        .grid_alpha
        .iter()
        .flat_map(|&a| cfg.grid_gamma.iter().map(move |&g| (a, g)))
        .collect();
    let rows: Vec<PhaseRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(a, g))| {
            let mut row = phase_row(a, g, cfg.params.beta, v0)?;
            if cfg.empirical {
                phase_empirical(&mut row, cfg, cfg.replicate_key(i))?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut out = CommandOutput {
        body: cfg.header(),
        records: rows.len(),
        ..Default::default()
    };
    if cfg.format == Format::Csv {
        out.body.push_str(PHASE_CSV_HEADER);
        if cfg.empirical {
            out.body.push_str(",mc_mean_degree,mc_extinction");
        }
        out.body.push('\n');
    }
    for r in &rows {
        match cfg.format {
            Format::Csv => {
                let _ = write!(
                    out.body,
                    "{},{},{:.12},{},{},{:.12},{},{:.12},{},{}",
                    r.alpha,
                    r.gamma,
                    r.degree_product,
                    r.degree_regime,
                    r.edge_regime,
                    r.edge_value,
                    r.p_star,
                    r.bpre_criterion,
                    r.bpre_verdict,
                    r.bpre_boundary
                );
                if cfg.empirical {
                    let _ = write!(out.body, ",{},{}", fmt_opt(r.mc_mean_degree), fmt_opt(r.mc_extinction));
                }
            }
            Format::Jsonl => {
                let _ = write!(out.body, "{}", serde_json::json!({ "record": "phase", "row": r }));
            }
        }
        out.body.push('\n');
    }
    Ok(out)
}

pub fn cmd_spectral(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let g0 = cfg.build_g0()?;
    let runs: Vec<Vec<SpectralReport>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut reports = Vec::with_capacity(cfg.steps + 1);
            grow_with(&g0, &cfg.params, cfg.steps, cfg.replicate_key(rep), &cfg.caps, false, |g| {
                reports.push(spectral_report(g, cfg.max_spectral_vertices)?);
                Ok(())
            })?;
            Ok(reports)
        })
        .collect::<Result<_>>()?;
    let mut out = CommandOutput {
        body: cfg.header(),
        ..Default::default()
    };
    if cfg.format == Format::Csv {
        let _ = writeln!(out.body, "rep,{}", SpectralReport::CSV_HEADER);
    }
    for (rep, reports) in runs.iter().enumerate() {
        for r in reports {
            match cfg.format {
                Format::Csv => {
                    let _ = writeln!(out.body, "{rep},{}", r.csv_row());
                }
                Format::Jsonl => {
                    let _ = writeln!(out.body, "{}", serde_json::json!({ "record": "spectral", "rep": rep, "report": r }));
                }
            }
            out.records += 1;
        }
    }
    Ok(out)
}

pub fn cmd_bpre(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let verdict = classify_bpre(&cfg.params)?;
    let g0 = cfg.build_g0()?;
    let key = cfg.master_key();
    let x0 = cfg.x0.unwrap_or(1);
    let estimate = extinction_probability(&cfg.params, x0, cfg.horizon, cfg.reps, key.child(0))?;
    let curve = isolation_curve(&g0, &cfg.params, cfg.steps, cfg.reps, key.child(1), &cfg.caps)?;
    let mut out = CommandOutput {
        body: cfg.header(),
        records: curve.rows.len(),
        ..Default::default()
    };
    match cfg.format {
        Format::Csv => {
            let _ = writeln!(out.body, "# criterion={:.12}", verdict.criterion_value);
            let _ = writeln!(out.body, "# verdict={}", verdict.verdict.name());
            let _ = writeln!(out.body, "# boundary={}", verdict.boundary);
            let _ = writeln!(out.body, "# degenerate={}", verdict.degenerate);
            let _ = writeln!(out.body, "# extinction={}", estimate.to_jsonl(&cfg.params));
            let _ = writeln!(out.body, "# monotone={}", curve.monotone);
            out.body.push_str(&curve.to_csv());
        }
        Format::Jsonl => {
            let _ = writeln!(out.body, "{}", serde_json::json!({ "record": "verdict", "verdict": verdict }));
            let _ = writeln!(out.body, "{}", estimate.to_jsonl(&cfg.params));
            for r in &curve.rows {
                let _ = writeln!(out.body, "{}", serde_json::json!({ "record": "isolation", "row": r }));
            }
            let _ = writeln!(out.body, "{}", serde_json::json!({ "record": "monotone", "value": curve.monotone }));
        }
    }
    if !curve.monotone {
        log::error!("isolated fraction decreased along some path");
    }
    Ok(out)
}

/// Runs the acceptance checks, printing one line per check as it finishes.
pub fn cmd_check(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    if cfg.list {
        for c in checks::inventory() {
            let _ = writeln!(out.body, "{:>2} {:<14} {}", c.id, c.name, c.description);
        }
        print!("{}", out.body);
        return Ok(out);
    }
    let selected = checks::select(&cfg.only)?;
    let seed = if cfg.settings.contains_key("seed") { cfg.seed } else { checks::DEFAULT_SEED };
    for check in selected {
        let outcome = checks::run_check(check, seed);
        let line = outcome.line();
        println!("{line}");
        out.body.push_str(&line);
        out.body.push('\n');
        out.records += 1;
        if !outcome.passed {
            out.failed_checks += 1;
        }
    }
    let summary = format!(
        "{} of {} checks passed",
        out.records - out.failed_checks,
        out.records
    );
    println!("{summary}");
    out.body.push_str(&summary);
    out.body.push('\n');
    Ok(out)
}

pub fn run_command(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let start = Instant::now();
    let work = || match cfg.command {
        Command::Grow => cmd_grow(cfg),
        Command::Chain => cmd_chain(cfg),
        Command::Phase => cmd_phase(cfg),
        Command::Spectral => cmd_spectral(cfg),
        Command::Bpre => cmd_bpre(cfg),
        Command::Check => cmd_check(cfg),
    };
    let out = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    log::info!("{} finished in {:.3}s", cfg.command.name(), start.elapsed().as_secs_f64());
    Ok(out)
}

/// Writes the body (to `cfg.out` or stdout), artifacts and run record.
pub fn emit(cfg: &ExperimentConfig, out: &CommandOutput, wall_time_seconds: f64) -> Result<()> {
    for (path, text) in &out.artifacts {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let record = RunRecord {
        version: VERSION.to_string(),
        command: cfg.command.name().to_string(),
        config: cfg.echo(),
        workers: cfg.workers,
        output: cfg.out.clone(),
        records: out.records,
        wall_time_seconds,
    };
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &out.body).map_err(|e| Error::io(path, e))?;
            let sidecar = RunRecord::sidecar_path(path);
            let json = serde_json::to_string_pretty(&record).expect("run record serializes");
            std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))?;
        }
        None if cfg.command == Command::Check => {}
        None => print!("{}", out.body),
    }
    log::debug!("run record: {}", serde_json::to_string(&record).unwrap_or_default());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_text() {
        let map = parse_config_text("# c\nalpha = 0.3\n\nmax_edges=10\n", "cfg").unwrap();
        assert_eq!(map["alpha"], "0.3");
        assert_eq!(map["max-edges"], "10");
        assert!(matches!(parse_config_text("bogus=1", "cfg"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_config_text("alpha", "cfg").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed=5\ngamma=0.3\nsteps=4\n").unwrap();
        let flags = settings(&[("steps", "2")]);
        let cfg = ExperimentConfig::resolve(Command::Grow, &flags, Some(&file), Some("9")).unwrap();
        assert_eq!((cfg.seed, cfg.steps, cfg.params.gamma), (5, 2, 0.3));
        let cfg = ExperimentConfig::resolve(Command::Grow, &BTreeMap::new(), None, Some("9")).unwrap();
        assert_eq!(cfg.seed, 9);
        let cfg = ExperimentConfig::resolve(Command::Grow, &BTreeMap::new(), None, None).unwrap();
        assert_eq!((cfg.seed, cfg.steps, cfg.reps), (0, 8, 1));
    }

    #[test]
    fn config_validation() {
        let bad = |pairs: &[(&str, &str)]| ExperimentConfig::from_settings(Command::Grow, settings(pairs)).is_err();
        assert!(bad(&[("alpha", "1.5")]));
        assert!(bad(&[("reps", "0")]));
        assert!(bad(&[("workers", "0")]));
        assert!(bad(&[("format", "xml")]));
        assert!(bad(&[("g0", "/nonexistent/graph.txt")]));
        assert!(bad(&[("steps", "-1")]));
        assert!(bad(&[("nope", "1")]));
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_grid("0:1:0.1").unwrap()[3], 0.3);
        assert_eq!(parse_grid("0.2, 0.4").unwrap(), vec![0.2, 0.4]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn echo_skips_output_location() {
        let a = ExperimentConfig::from_settings(Command::Grow, settings(&[("out", "a.csv"), ("workers", "1")])).unwrap();
        let b = ExperimentConfig::from_settings(Command::Grow, settings(&[("out", "b.csv"), ("workers", "4")])).unwrap();
        assert_eq!(a.echo(), b.echo());
        assert_eq!(a.header(), b.header());
    }

    #[test]
    fn grow_output_shape() {
        let cfg = ExperimentConfig::from_settings(
            Command::Grow,
            settings(&[("g0", "k1"), ("steps", "7"), ("snapshot", "7"), ("out", "/tmp/x/grow.csv")]),
        )
        .unwrap();
        let out = cmd_grow(&cfg).unwrap();
        let rows: Vec<&str> = out.body.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], GROW_CSV_HEADER);
        assert_eq!(rows.len(), 9);
        assert_eq!(out.artifacts.len(), 1);
        assert_eq!(out.artifacts[0].0, PathBuf::from("/tmp/x/grow.n7.dot"));
        let zero = ExperimentConfig::from_settings(Command::Grow, settings(&[("steps", "0")])).unwrap();
        assert_eq!(cmd_grow(&zero).unwrap().records, 1);
    }

    #[test]
    fn grow_is_deterministic() {
        let cfg = ExperimentConfig::from_settings(Command::Grow, settings(&[("steps", "6"), ("reps", "3"), ("seed", "4")]))
            .unwrap();
        assert_eq!(cmd_grow(&cfg).unwrap().body, cmd_grow(&cfg).unwrap().body);
    }

    #[test]
    fn chain_modes() {
        let tail = ExperimentConfig::from_settings(
            Command::Chain,
            settings(&[("alpha", "0"), ("gamma", "0.36602540378443865"), ("tail-only", "true")]),
        )
        .unwrap();
        let line = cmd_chain(&tail).unwrap().body;
        assert_eq!(line.lines().count(), 1);
        assert!((line.trim().parse::<f64>().unwrap() - 2.0).abs() < 1e-6);

        let sup = ExperimentConfig::from_settings(
            Command::Chain,
            settings(&[("alpha", "0.9"), ("gamma", "0.8"), ("stationary", "true")]),
        )
        .unwrap();
        assert!(matches!(cmd_chain(&sup), Err(Error::Precondition(_))));

        let st = ExperimentConfig::from_settings(Command::Chain, settings(&[("stationary", "true")])).unwrap();
        let body = cmd_chain(&st).unwrap().body;
        let mean_line = body.lines().find(|l| l.starts_with("# mean=")).unwrap();
        let mean: f64 = mean_line["# mean=".len()..].parse().unwrap();
        assert!((mean - 10.0 / 3.0).abs() < 0.01 * 10.0 / 3.0);

        let traj = ExperimentConfig::from_settings(Command::Chain, settings(&[("steps", "5"), ("reps", "2")])).unwrap();
        assert_eq!(cmd_chain(&traj).unwrap().records, 12);
    }

    #[test]
    fn phase_rows() {
        let row = phase_row(0.0, 0.2, 1.0, 2).unwrap();
        assert_eq!((row.degree_regime.as_str(), row.edge_regime.as_str()), ("subcritical", "sparse"));
        let p: f64 = row.p_star.parse().unwrap();
        assert!(p > 3.7 && p < 3.9);
        let top = phase_row(1.0, 1.0, 1.0, 2).unwrap();
        assert_eq!((top.degree_regime.as_str(), top.edge_regime.as_str(), top.p_star.as_str()), ("supercritical", "dense", "0"));
        assert_eq!(phase_row(0.0, 0.5, 1.0, 2).unwrap().edge_regime, "critical");
        assert!(phase_row(1.0, 0.0, 1.0, 2).unwrap().bpre_boundary);

        let cfg = ExperimentConfig::from_settings(
            Command::Phase,
            settings(&[("grid-alpha", "0,0.5"), ("grid-gamma", "0.2"), ("empirical", "true")]),
        )
        .unwrap();
        let out = cmd_phase(&cfg).unwrap();
        assert_eq!(out.records, 2);
        assert!(out.body.contains("mc_mean_degree"));
    }

    #[test]
    fn bpre_requires_no_link() {
        let cfg = ExperimentConfig::from_settings(Command::Bpre, settings(&[("beta", "0.5")])).unwrap();
        assert!(matches!(cmd_bpre(&cfg), Err(Error::Precondition(_))));
        let ok = ExperimentConfig::from_settings(Command::Bpre, settings(&[("beta", "0"), ("reps", "20"), ("steps", "6")]))
            .unwrap();
        let body = cmd_bpre(&ok).unwrap().body;
        assert!(body.contains("# monotone=true"));
        assert!(body.contains("# verdict=extinct-as"));
    }

    #[test]
    fn spectral_rows() {
        let cfg = ExperimentConfig::from_settings(Command::Spectral, settings(&[("steps", "3"), ("reps", "2")])).unwrap();
        let out = cmd_spectral(&cfg).unwrap();
        assert_eq!(out.records, 8);
        let first = out.body.lines().find(|l| l.starts_with("0,0,")).unwrap();
        assert!(first.starts_with("0,0,2.000000000000"));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(RunRecord::sidecar_path(Path::new("out/g.csv")), PathBuf::from("out/g.csv.run.json"));
    }
}
