//! Command implementations. Each returns a printable report and an exit
//! status; errors carry their own exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use synccert::certificate::{
    dissipation_matrices, dissipation_residual, edge_margin, gain_bound, sector_box_samples, GainBound, MarginReport,
    NetworkCertificate,
};
use synccert::goodwin::{
    certify_edge, linspace, search_params, DeltaReport, DerivedParams, GoodwinError, SearchResult,
};
use synccert::sim::{
    all_pairs, bound_check, run, BoundCheck, Network, SimError, SimOptions, SimulationTrace, TraceCsv,
};
use synccert::{certify_network, eigen, EdgeCertificate, Execution, NuMode};
use thiserror::Error;

use crate::config::{seed_override, ConfigError, NetworkConfig};

/// Relative tolerance for the network dissipation and pairwise residual checks.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Extra seeded slope samples drawn inside non-point sector boxes.
pub const EXTRA_SLOPE_SAMPLES: usize = 64;
/// Largest end-to-start disagreement ratio accepted as synchronised.
pub const SYNC_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    VerdictFalse = 1,
    Inadmissible = 2,
    BlowUp = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("inadmissible certification parameters: {0}")]
    Inadmissible(#[from] GoodwinError),
    #[error("refusing to check the gain bound: {0}")]
    Uncertified(String),
    #[error("simulation blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("simulation failed: {0}")]
    Simulation(SimError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::BlowUp { .. } => ExitStatus::BlowUp,
            _ => ExitStatus::Inadmissible,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFinite { t } => CliError::BlowUp { t },
            SimError::Uncertified { mu_lo } => CliError::Uncertified(format!("mu_lo = {mu_lo} <= 0")),
            e => CliError::Simulation(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: ExitStatus,
    pub report: String,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

/// Everything the certification path produces for one config.
#[derive(Debug, Clone)]
pub struct Certification {
    pub derived: DerivedParams,
    pub delta: DeltaReport,
    pub cert: NetworkCertificate,
    pub margin: MarginReport,
    pub gain: GainBound,
}

pub fn certify(cfg: &NetworkConfig, exec: Execution) -> Result<Certification, CliError> {
    let shared = &cfg.agents[0];
    let derived = cfg.cert.derive(shared)?;
    let delta = DeltaReport::new(shared.hill)?;
    let sectors = cfg.sectors();
    let cert = certify_network(&cfg.agents, &cfg.graph, &cfg.cert, cfg.mode, &cfg.x0, &sectors)?;
    let margin = edge_margin(&cert);
    let samples = sector_box_samples(&sectors, EXTRA_SLOPE_SAMPLES, 0);
    let gain = gain_bound(&cfg.graph, &cert, &samples, exec).map_err(GoodwinError::from)?;
    Ok(Certification { derived, delta, cert, margin, gain })
}

impl Certification {
    pub fn table(&self, cfg: &NetworkConfig) -> String {
        let mut s = String::new();
        let d = &self.derived;
        let _ = writeln!(s, "theta = {}  theta3 = {}  mode = {:?}", f4(cfg.cert.theta), f4(cfg.cert.theta3), cfg.mode);
        let _ = writeln!(s, "delta = {}  theta1 = {}  theta2 = {}", f4(d.delta), f4(d.theta1), f4(d.theta2));
        if self.delta.should_warn() {
            let _ = writeln!(
                s,
                "warning: closed-form delta {} differs from the max Hill slope {} by {:.1}%",
                f4(self.delta.closed_form),
                f4(self.delta.max_slope),
                100.0 * self.delta.relative_gap()
            );
        }
        let _ = writeln!(s, "{:<8}{:>10}{:>12}{:>10}{:>10}", "edge", "nu", "gamma", "beta", "slack");
        for (k, (c, slack)) in self.cert.edges().iter().zip(&self.margin.slacks).enumerate() {
            let _ = writeln!(
                s,
                "{:<8}{:>10}{:>12}{:>10}{:>10}",
                cfg.graph.edge_label(k),
                f4(c.nu),
                f4(c.gamma),
                f4(c.beta),
                f4(*slack)
            );
        }
        let nus: Vec<String> = self.cert.node_nu().iter().map(|&v| f4(v)).collect();
        let _ = writeln!(s, "node nu: [{}]", nus.join(", "));
        let g = &self.gain;
        let _ = writeln!(s, "min slack = {}  verdict = {}", f4(self.margin.min_slack()), self.margin.verdict);
        let _ = writeln!(
            s,
            "lambda_min(Q) = {}  mu_lo = {}  mu_hi = {}  ({:?}, {} samples)",
            f4(g.q_min_eigenvalue),
            f4(g.mu_lo),
            f4(g.mu_hi),
            g.estimate,
            g.samples
        );
        if g.certified() {
            let _ = writeln!(s, "gain bound: rho = {}  epsilon = {}", f4(g.rho), f4(g.epsilon));
        } else {
            let _ = writeln!(s, "gain bound: not certified (mu_lo <= 0)");
        }
        s
    }
}

pub fn cmd_certify(cfg: &NetworkConfig, out: Option<&Path>, exec: Execution) -> Result<Outcome, CliError> {
    let c = certify(cfg, exec)?;
    let mut report = c.table(cfg);
    if let Some(dir) = out {
        let labels = cfg.graph.edge_labels();
        let p = write_file(dir, "margin.csv", &c.margin.to_csv(&labels))?;
        let json = serde_json::to_string_pretty(&c.cert.to_file()).expect("certificate serialises");
        let q = write_file(dir, "certificate.json", &json)?;
        let _ = writeln!(report, "wrote {} and {}", p.display(), q.display());
    }
    let status = if c.margin.verdict { ExitStatus::Pass } else { ExitStatus::VerdictFalse };
    Ok(Outcome { status, report })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimulateArgs {
    pub full: bool,
    pub check_bound: bool,
    pub check_lemma1: bool,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

/// Applies `--seed`/environment seed and `--dt`/`-T` overrides.
pub fn apply_overrides(cfg: &NetworkConfig, args: &SimulateArgs) -> Result<NetworkConfig, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override(args.seed)? {
        cfg.set_seed(seed);
    }
    if let Some(dt) = args.dt {
        cfg.simulation.dt = dt;
    }
    if let Some(t) = args.horizon {
        cfg.simulation.horizon = t;
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: SimulationTrace,
    pub certification: Option<Certification>,
    pub bound: Option<BoundCheck>,
    pub dissipation_worst: Option<f64>,
}

impl Simulation {
    pub fn sync_ratio(&self) -> f64 {
        self.trace.sync_ratio()
    }

    pub fn dissipation_pass(&self) -> Option<bool> {
        self.dissipation_worst.map(|w| w >= -RESIDUAL_TOL)
    }
}

/// Smallest dissipation residual over samples, scaled by `1 + |RHS|`.
fn worst_dissipation(trace: &SimulationTrace, beta_bar: f64) -> f64 {
    trace
        .samples
        .iter()
        .filter_map(|s| s.dissipation)
        .map(|l| dissipation_residual(&l, beta_bar) / (1.0 + l.rhs(beta_bar).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Runs one simulation of an already-overridden config, with the requested
/// checks. Pair integrals are accumulated for `pairs`.
pub fn simulate(
    cfg: &NetworkConfig,
    args: &SimulateArgs,
    pairs: Vec<(usize, usize)>,
    exec: Execution,
) -> Result<Simulation, CliError> {
    let mut certification = if args.check_bound || args.check_lemma1 { Some(certify(cfg, exec)?) } else { None };
    if args.check_bound {
        let gb = &certification.as_ref().unwrap().gain;
        if !gb.certified() {
            return Err(CliError::Uncertified(format!("mu_lo = {} <= 0", gb.mu_lo)));
        }
    }
    let net = Network::new(cfg.graph.clone(), cfg.agents.clone(), cfg.couplings.clone())?;
    let sim = cfg.simulation;
    let mut opts = SimOptions::new(sim.dt, sim.horizon);
    opts.sample_stride = sim.sample_stride;
    opts.pairs = pairs;
    if args.check_lemma1 {
        opts.dissipation = Some(dissipation_matrices(&cfg.graph, &certification.as_ref().unwrap().cert).weights());
    }
    let trace = run(&net, &cfg.x0, &cfg.disturbances, &opts)?;

    let mut bound = None;
    if let (true, Some(c)) = (args.check_bound, certification.as_mut()) {
        let gb = if c.gain.estimate == synccert::certificate::BoundEstimate::Exact {
            c.gain.clone()
        } else {
            // Sector boxes: fold the slopes realised along the trace into μ̲, μ̄.
            let mut samples = sector_box_samples(c.cert.sectors(), EXTRA_SLOPE_SAMPLES, 0);
            samples.extend(trace.realised_slopes(&cfg.couplings));
            let gb = gain_bound(&cfg.graph, &c.cert, &samples, exec).map_err(GoodwinError::from)?;
            c.gain = gb.clone();
            gb
        };
        bound = Some(bound_check(&trace, &gb)?);
    }
    let dissipation_worst =
        certification.as_ref().filter(|_| args.check_lemma1).map(|c| worst_dissipation(&trace, c.cert.beta_bar()));
    Ok(Simulation { trace, certification, bound, dissipation_worst })
}

impl Simulation {
    pub fn trace_csv(&self, full: bool) -> String {
        self.trace.to_csv(TraceCsv {
            bound: self.bound.as_ref().and(self.certification.as_ref().map(|c| &c.gain)),
            dissipation_beta_bar: self.dissipation_worst.and(self.certification.as_ref().map(|c| c.cert.beta_bar())),
            full,
        })
    }
}

pub fn cmd_simulate(
    cfg: &NetworkConfig,
    out: &Path,
    args: &SimulateArgs,
    exec: Execution,
) -> Result<Outcome, CliError> {
    let cfg = apply_overrides(cfg, args)?;
    let sim = simulate(&cfg, args, Vec::new(), exec)?;
    let path = write_file(out, "trace.csv", &sim.trace_csv(args.full))?;
    let mut report = String::new();
    let first = &sim.trace.samples[0];
    let last = sim.trace.final_sample();
    let _ = writeln!(
        report,
        "t = {}  disagreement {} -> {}  (ratio {})",
        f4(last.t),
        f4(first.disagreement()),
        f4(last.disagreement()),
        f4(sim.sync_ratio())
    );
    let _ = writeln!(report, "||D'Y||_T = {}  ||W||_T = {}", f4(last.norm_dty), f4(last.norm_w));
    let mut pass = true;
    if let Some(b) = &sim.bound {
        let gb = &sim.certification.as_ref().unwrap().gain;
        if !sim.certification.as_ref().unwrap().margin.verdict {
            let _ = writeln!(report, "note: the edge margin does not certify this network");
        }
        let _ = writeln!(
            report,
            "bound check (rho = {}, epsilon = {}): min margin {}  {}",
            f4(gb.rho),
            f4(gb.epsilon),
            f4(b.min_margin()),
            if b.verdict { "PASS" } else { "FAIL" }
        );
        pass &= b.verdict;
    }
    if let Some(ok) = sim.dissipation_pass() {
        let _ = writeln!(
            report,
            "lemma1 check: worst scaled residual {:.3e}  {}",
            sim.dissipation_worst.unwrap(),
            if ok { "PASS" } else { "FAIL" }
        );
        pass &= ok;
    }
    let _ = writeln!(report, "wrote {}", path.display());
    Ok(Outcome { status: if pass { ExitStatus::Pass } else { ExitStatus::VerdictFalse }, report })
}

/// `lo:hi:n` grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
        let n: usize = n.parse().map_err(|_| format!("bad point count {n:?}"))?;
        if n == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(format!("need n >= 1 and lo <= hi, got {s:?}"));
        }
        Ok(Axis { lo, hi, n })
    }
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

pub fn search(cfg: &NetworkConfig, theta: Axis, theta3: Axis, exec: Execution) -> Result<SearchResult, CliError> {
    Ok(search_params(
        &cfg.agents,
        &cfg.graph,
        &cfg.sectors(),
        cfg.mode,
        &cfg.x0,
        &theta.points(),
        &theta3.points(),
        cfg.cert.delta_rule,
        exec,
    )?)
}

pub fn cmd_search(
    cfg: &NetworkConfig,
    theta: Axis,
    theta3: Axis,
    out: Option<&Path>,
    exec: Execution,
) -> Result<Outcome, CliError> {
    let r = search(cfg, theta, theta3, exec)?;
    let csv = r.to_csv();
    let mut report = String::new();
    match out {
        Some(dir) => {
            let p = write_file(dir, "search.csv", &csv)?;
            let _ = writeln!(report, "wrote {}", p.display());
        }
        None => report.push_str(&csv),
    }
    let b = r.best;
    let _ = writeln!(
        report,
        "best theta = {}  theta3 = {}  min slack = {}  feasible = {}",
        f4(b.theta),
        f4(b.theta3),
        f4(b.min_slack.unwrap_or(f64::NAN)),
        b.feasible()
    );
    Ok(Outcome { status: if b.feasible() { ExitStatus::Pass } else { ExitStatus::VerdictFalse }, report })
}

pub fn cmd_graph_stats(cfg: &NetworkConfig) -> Result<Outcome, CliError> {
    let g = &cfg.graph;
    let st = g.edge_stats();
    let mut report = String::new();
    let _ =
        writeln!(report, "nodes = {}  edges = {}  connected = {}", g.node_count(), g.edge_count(), g.is_connected());
    let lap = g.incidence().laplacian();
    let n = g.node_count();
    let l = nalgebra::DMatrix::from_iterator(n, n, lap.iter().map(|&v| v as f64));
    let spectrum = eigen::symmetric_eigenvalues(&l).map_err(|e| CliError::Argument(e.to_string()))?;
    if n > 1 {
        let _ = writeln!(report, "algebraic connectivity = {}", f4(spectrum[1]));
    }
    let _ = writeln!(report, "edge,degree_i,degree_j,common,exclusive");
    for (k, &(i, j)) in st.edges.iter().enumerate() {
        let _ = writeln!(
            report,
            "{},{},{},{},{}",
            g.edge_label(k),
            st.degree[i],
            st.degree[j],
            st.common[k],
            st.exclusive[k]
        );
    }
    report.push_str(&g.incidence().to_csv(g));
    Ok(Outcome { status: ExitStatus::Pass, report })
}

/// One line of the reproduction report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReproduceArgs {
    pub mode: Option<NuMode>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Reference values of the bundled five-node configuration.
pub mod reference {
    pub const NU: f64 = -0.01;
    pub const NODE_NU: f64 = -0.04;
    pub const GAMMA: f64 = -16.125;
    pub const GAMMA_TOL: f64 = 5e-3;
    pub const SLACK: f64 = 0.035;
    pub const SLACK_TOL: f64 = 1e-3;
}

fn pair_worst(sim: &Simulation, certs: &[EdgeCertificate]) -> f64 {
    sim.trace
        .samples
        .iter()
        .flat_map(|s| s.pairs.iter().zip(certs).map(|(p, c)| p.residual(c) / (1.0 + p.rhs(c).abs())))
        .fold(f64::INFINITY, f64::min)
}

pub fn reproduce(cfg: &NetworkConfig, args: &ReproduceArgs, exec: Execution) -> Result<(Vec<Check>, String), CliError> {
    use reference::*;
    let mut cfg = cfg.clone();
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    let sim_args =
        SimulateArgs { check_bound: true, check_lemma1: true, seed: args.seed, dt: args.dt, ..Default::default() };
    let cfg = apply_overrides(&cfg, &sim_args)?;
    let c = certify(&cfg, exec)?;
    let mut table = c.table(&cfg);
    let mut checks = Vec::new();
    let nus: Vec<f64> = c.cert.edges().iter().map(|e| e.nu).collect();
    let gammas: Vec<f64> = c.cert.edges().iter().map(|e| e.gamma).collect();
    let max_dev = |v: &[f64], target: f64| v.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
    if cfg.mode == NuMode::UniformWorstCase {
        checks.push(Check {
            name: "nu_k = -0.01",
            pass: max_dev(&nus, NU) <= 1e-12,
            detail: format!("max |nu_k - ({NU})| = {:.3e}", max_dev(&nus, NU)),
        });
        checks.push(Check {
            name: "node nu = -0.04",
            pass: max_dev(c.cert.node_nu(), NODE_NU) <= 1e-12,
            detail: format!("max |nu_i - ({NODE_NU})| = {:.3e}", max_dev(c.cert.node_nu(), NODE_NU)),
        });
    }
    checks.push(Check {
        name: "gamma_k = -16.125",
        pass: max_dev(&gammas, GAMMA) <= GAMMA_TOL,
        detail: format!("max |gamma_k - ({GAMMA})| = {:.3e}", max_dev(&gammas, GAMMA)),
    });
    let slack_ok = match cfg.mode {
        NuMode::UniformWorstCase => max_dev(&c.margin.slacks, SLACK) <= SLACK_TOL,
        NuMode::PerEdge => c.margin.min_slack() >= SLACK - SLACK_TOL,
    };
    checks.push(Check {
        name: "edge slack = 0.035",
        pass: slack_ok && c.margin.verdict,
        detail: format!("min slack {}, verdict {}", f4(c.margin.min_slack()), c.margin.verdict),
    });
    checks.push(Check {
        name: "gain bound certified",
        pass: c.gain.certified(),
        detail: format!("mu_lo = {}, rho = {}, epsilon = {}", f4(c.gain.mu_lo), f4(c.gain.rho), f4(c.gain.epsilon)),
    });

    let quiet = simulate(&cfg.without_disturbances(), &sim_args, Vec::new(), exec)?;
    let ratio = quiet.sync_ratio();
    checks.push(Check {
        name: "synchronisation (W = 0)",
        pass: ratio < SYNC_THRESHOLD,
        detail: format!("end/start disagreement {ratio:.3e} < {SYNC_THRESHOLD}"),
    });
    checks.push(Check {
        name: "bound (W = 0)",
        pass: quiet.bound.as_ref().is_some_and(|b| b.verdict),
        detail: format!("min margin {}", f4(quiet.bound.as_ref().map_or(f64::NAN, BoundCheck::min_margin))),
    });

    let pairs = all_pairs(cfg.graph.node_count());
    let pair_certs = pairs
        .iter()
        .map(|&(a, b)| certify_edge(&cfg.agents[a], &cfg.agents[b], &cfg.cert, &cfg.x0[a], &cfg.x0[b]))
        .collect::<Result<Vec<_>, _>>()?;
    let noisy = simulate(&cfg, &sim_args, pairs, exec)?;
    checks.push(Check {
        name: "bound (noisy)",
        pass: noisy.bound.as_ref().is_some_and(|b| b.verdict),
        detail: format!("min margin {}", f4(noisy.bound.as_ref().map_or(f64::NAN, BoundCheck::min_margin))),
    });
    checks.push(Check {
        name: "network dissipation (noisy)",
        pass: noisy.dissipation_pass() == Some(true),
        detail: format!("worst scaled residual {:.3e}", noisy.dissipation_worst.unwrap_or(f64::NAN)),
    });
    let pw = pair_worst(&noisy, &pair_certs);
    checks.push(Check {
        name: "pairwise dissipativity (noisy)",
        pass: pw >= -RESIDUAL_TOL,
        detail: format!("worst scaled residual {pw:.3e}"),
    });

    if let Some(dir) = &args.out {
        write_file(dir, "margin.csv", &c.margin.to_csv(&cfg.graph.edge_labels()))?;
        write_file(dir, "trace_quiet.csv", &quiet.trace_csv(false))?;
        write_file(dir, "trace_noisy.csv", &noisy.trace_csv(false))?;
        let _ = writeln!(table, "wrote margin.csv, trace_quiet.csv, trace_noisy.csv to {}", dir.display());
    }
    Ok((checks, table))
}

pub fn cmd_reproduce(cfg: &NetworkConfig, args: &ReproduceArgs, exec: Execution) -> Result<Outcome, CliError> {
    let (checks, mut report) = reproduce(cfg, args, exec)?;
    report.push('\n');
    for c in &checks {
        let _ = writeln!(report, "{:<6}{:<34}{}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let status = match checks.iter().find(|c| !c.pass) {
        Some(c) => {
            let _ = writeln!(report, "first failing check: {}", c.name);
            ExitStatus::VerdictFalse
        }
        None => ExitStatus::Pass,
    };
    Ok(Outcome { status, report })
}
