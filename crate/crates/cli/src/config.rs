//! JSON network configuration: parsing, defaults and cross-validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;
use synccert::coupling::{verify_sector, CouplingFn};
use synccert::goodwin::DeltaRule;
use synccert::graph::GraphSpec;
use synccert::{CertParams, CouplingSpec, DisturbanceKind, DisturbanceSpec, GoodwinParams, Graph, NuMode, SectorBound};
use thiserror::Error;

/// Environment variable overriding every disturbance seed of a config.
pub const SEED_ENV: &str = "SYNC_CERT_SEED";

/// Sector scan size used when validating declared coupling sectors.
const SECTOR_SAMPLES: usize = 2000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid config at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
}

fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { pointer: pointer.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b2: f64,
    pub b3: f64,
    pub hill: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    pub shared: SharedParams,
    pub input_gains: Vec<f64>,
    /// One to three leading state entries per node; missing ones are 0.
    pub initial_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub function: CouplingFn,
    /// Required unless the function is linear, where it defaults to the point
    /// sector at the gain.
    #[serde(default)]
    pub sector: Option<SectorBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeCouplingEntry {
    pub edge: [usize; 2],
    pub function: CouplingFn,
    #[serde(default)]
    pub sector: Option<SectorBound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEntry {
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDisturbanceEntry {
    pub edge: [usize; 2],
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the edge index.
    #[serde(default)]
    pub stream: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationSection {
    pub theta: f64,
    pub theta3: f64,
    #[serde(default)]
    pub mode: NuMode,
    #[serde(default)]
    pub delta_rule: DeltaRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    100.0
}

fn default_stride() -> usize {
    10
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { dt: default_dt(), horizon: default_horizon(), sample_stride: default_stride() }
    }
}

/// The config file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub graph: GraphSpec,
    pub agents: AgentsSection,
    /// Applied to every edge not listed in `edge_couplings`.
    #[serde(default)]
    pub coupling: Option<CouplingEntry>,
    #[serde(default)]
    pub edge_couplings: Vec<EdgeCouplingEntry>,
    /// Applied to every edge not listed in `edge_disturbances`, with
    /// stream = edge index. Absent means zero disturbance.
    #[serde(default)]
    pub disturbance: Option<DisturbanceEntry>,
    #[serde(default)]
    pub edge_disturbances: Vec<EdgeDisturbanceEntry>,
    pub certification: CertificationSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub graph: Graph,
    pub agents: Vec<GoodwinParams>,
    pub x0: Vec<[f64; 3]>,
    pub couplings: Vec<CouplingSpec>,
    pub disturbances: Vec<DisturbanceSpec>,
    pub cert: CertParams,
    pub mode: NuMode,
    pub simulation: SimulationSection,
}

pub fn parse_str(text: &str) -> Result<NetworkConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer: String = e
            .path()
            .iter()
            .filter_map(|seg| match seg {
                Segment::Seq { index } => Some(format!("/{index}")),
                Segment::Map { key } => Some(format!("/{key}")),
                Segment::Enum { variant } => Some(format!("/{variant}")),
                Segment::Unknown => None,
            })
            .collect();
        let pointer = if pointer.is_empty() { String::from("/") } else { pointer };
        ConfigError::Schema { pointer, message: e.into_inner().to_string() }
    })?;
    NetworkConfig::from_raw(&raw)
}

pub fn parse_config(path: &Path) -> Result<NetworkConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_str(&text)
}

fn edge_index(g: &Graph, edge: [usize; 2], pointer: &str) -> Result<usize, ConfigError> {
    let [a, b] = edge;
    let found = (1..=g.node_count()).contains(&a) && (1..=g.node_count()).contains(&b);
    found
        .then(|| g.edge_index(a - 1, b - 1))
        .flatten()
        .ok_or_else(|| invalid(pointer, format!("edge {a}-{b} is not an edge of the graph")))
}

fn resolve_coupling(entry: &CouplingEntry, pointer: &str) -> Result<CouplingSpec, ConfigError> {
    let sector = match (&entry.function, entry.sector) {
        (_, Some(s)) => s,
        (CouplingFn::Linear { gain }, None) => SectorBound { lower: *gain, upper: *gain },
        _ => return Err(invalid(pointer, "sector is required for non-linear couplings")),
    };
    CouplingSpec::new(entry.function.clone(), sector).map_err(|e| invalid(pointer, e.to_string()))
}

impl NetworkConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let graph = Graph::try_from(raw.graph.clone()).map_err(|e| {
            let at = raw
                .graph
                .edges
                .iter()
                .position(|&[a, b]| a == 0 || b == 0 || a > raw.graph.n || b > raw.graph.n || a == b)
                .map_or(String::from("/graph"), |k| format!("/graph/edges/{k}"));
            invalid(at, e.to_string())
        })?;
        let n = graph.node_count();
        let p = graph.edge_count();

        let ag = &raw.agents;
        if ag.input_gains.len() != n {
            return Err(invalid(
                "/agents/input_gains",
                format!("agents.input_gains has {} entries but graph.n is {n}", ag.input_gains.len()),
            ));
        }
        if ag.initial_states.len() != n {
            return Err(invalid(
                "/agents/initial_states",
                format!("agents.initial_states has {} entries but graph.n is {n}", ag.initial_states.len()),
            ));
        }
        let s = &ag.shared;
        let agents: Vec<GoodwinParams> = ag
            .input_gains
            .iter()
            .map(|&b| GoodwinParams { a1: s.a1, a2: s.a2, a3: s.a3, b2: s.b2, b3: s.b3, input_gain: b, hill: s.hill })
            .collect();
        for (i, a) in agents.iter().enumerate() {
            a.validate().map_err(|e| invalid(format!("/agents/input_gains/{i}"), e.to_string()))?;
        }
        let mut x0 = Vec::with_capacity(n);
        for (i, v) in ag.initial_states.iter().enumerate() {
            if v.is_empty() || v.len() > 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(
                    format!("/agents/initial_states/{i}"),
                    "expected 1 to 3 finite entries (x1, then optionally x2, x3)",
                ));
            }
            let mut s = [0.0; 3];
            s[..v.len()].copy_from_slice(v);
            x0.push(s);
        }

        let default_coupling = raw.coupling.as_ref().map(|c| resolve_coupling(c, "/coupling")).transpose()?;
        let mut couplings: Vec<Option<CouplingSpec>> = vec![default_coupling; p];
        for (q, e) in raw.edge_couplings.iter().enumerate() {
            let at = format!("/edge_couplings/{q}");
            let k = edge_index(&graph, e.edge, &at)?;
            let entry = CouplingEntry { function: e.function.clone(), sector: e.sector };
            couplings[k] = Some(resolve_coupling(&entry, &at)?);
        }
        let couplings: Vec<CouplingSpec> = couplings
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                c.ok_or_else(|| invalid("/coupling", format!("no coupling given for edge {}", graph.edge_label(k))))
            })
            .collect::<Result<_, _>>()?;
        for (k, c) in couplings.iter().enumerate() {
            let check = verify_sector(c, SECTOR_SAMPLES);
            if !check.pass {
                return Err(invalid(
                    "/coupling",
                    format!(
                        "coupling on edge {} leaves its sector [{}, {}]: ratio {} at x = {}",
                        graph.edge_label(k),
                        c.sector.lower,
                        c.sector.upper,
                        check.worst_ratio,
                        check.worst_x
                    ),
                ));
            }
        }

        let mut disturbances = match raw.disturbance {
            Some(d) => DisturbanceSpec::per_edge(d.kind, d.scale, d.seed, p),
            None => vec![DisturbanceSpec::zero(); p],
        };
        for (q, d) in raw.edge_disturbances.iter().enumerate() {
            let k = edge_index(&graph, d.edge, &format!("/edge_disturbances/{q}"))?;
            disturbances[k] =
                DisturbanceSpec { kind: d.kind, scale: d.scale, seed: d.seed, stream: d.stream.unwrap_or(k as u64) };
        }
        for (k, d) in disturbances.iter().enumerate() {
            if !(d.scale >= 0.0 && d.scale.is_finite()) {
                return Err(invalid("/disturbance", format!("scale on edge {} must be >= 0", graph.edge_label(k))));
            }
        }

        let c = raw.certification;
        let sim = raw.simulation;
        if sim.sample_stride == 0 {
            return Err(invalid("/simulation/sample_stride", "must be >= 1"));
        }
        Ok(NetworkConfig {
            graph,
            agents,
            x0,
            couplings,
            disturbances,
            cert: CertParams { theta: c.theta, theta3: c.theta3, delta_rule: c.delta_rule },
            mode: c.mode,
            simulation: sim,
        })
    }

    pub fn sectors(&self) -> Vec<SectorBound> {
        self.couplings.iter().map(|c| c.sector).collect()
    }

    /// Replaces every disturbance seed; streams are kept.
    pub fn set_seed(&mut self, seed: u64) {
        for d in &mut self.disturbances {
            d.seed = seed;
        }
    }

    pub fn without_disturbances(&self) -> Self {
        NetworkConfig { disturbances: vec![DisturbanceSpec::zero(); self.graph.edge_count()], ..self.clone() }
    }
}

/// Seed from `--seed`, else from the environment, else none.
pub fn seed_override(flag: Option<u64>) -> Result<Option<u64>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("${SEED_ENV}"), format!("expected an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
