//! Closed-loop simulation of Goodwin agents under nonlinear diffusive
//! coupling with link disturbances.
//!
//! The input law is `U = -D Θ(DᵀY + W)`. Integration is classical RK4 on a
//! fixed grid; disturbances are drawn once per step and held over it. All
//! finite-horizon norms and inner products are accumulated with the
//! trapezoidal rule on the integration grid, evaluating both ends of each
//! step with that step's held disturbance.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::certificate::{DissipationIntegrals, DissipationWeights, EdgeCertificate, GainBound};
use crate::coupling::{CouplingError, CouplingSpec};
use crate::disturbance::{DisturbanceSource, DisturbanceSpec};
use crate::exec::{self, Execution};
use crate::goodwin::{GoodwinError, GoodwinParams};
use crate::graph::Graph;
use crate::table::fmt_f64;

/// States per agent.
pub const AGENT_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("step size {dt} must be > 0 and divide the horizon {horizon}")]
    BadGrid { dt: f64, horizon: f64 },
    #[error("sample stride must be >= 1")]
    BadStride,
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("gain bound is not certified (mu_lo = {mu_lo}); refusing to check it")]
    Uncertified { mu_lo: f64 },
    #[error(transparent)]
    Agent(#[from] GoodwinError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `x` from `t` to `t + dt` under `ẋ = f(t, x)`.
    pub fn step<F>(&mut self, mut f: F, t: f64, x: &mut [f64], dt: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let h2 = 0.5 * dt;
        f(t, x, &mut self.k1);
        axpy(&mut self.tmp, x, h2, &self.k1);
        f(t + h2, &self.tmp, &mut self.k2);
        axpy(&mut self.tmp, x, h2, &self.k2);
        f(t + h2, &self.tmp, &mut self.k3);
        axpy(&mut self.tmp, x, dt, &self.k3);
        f(t + dt, &self.tmp, &mut self.k4);
        let stages = self.k1.iter().zip(&self.k2).zip(self.k3.iter().zip(&self.k4));
        for (xi, ((a, b), (c, d))) in x.iter_mut().zip(stages) {
            *xi += dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        }
    }
}

/// `out = x + h k`
fn axpy(out: &mut [f64], x: &[f64], h: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + h * ki;
    }
}

/// Edge and node signals of the coupling law at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSignals {
    /// X = DᵀY + W
    pub x: Vec<f64>,
    /// V = Θ(X)
    pub v: Vec<f64>,
    /// U = -DV
    pub u: Vec<f64>,
}

impl CouplingSignals {
    fn zeros(n: usize, p: usize) -> Self {
        CouplingSignals { x: vec![0.0; p], v: vec![0.0; p], u: vec![0.0; n] }
    }
}

fn apply_coupling(g: &Graph, couplings: &[CouplingSpec], y: &[f64], w: &[f64], out: &mut CouplingSignals) {
    out.u.iter_mut().for_each(|u| *u = 0.0);
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let xk = y[i] - y[j] + w[k];
        let vk = couplings[k].function.eval(xk);
        out.x[k] = xk;
        out.v[k] = vk;
        out.u[i] -= vk;
        out.u[j] += vk;
    }
}

/// `U = -DΘ(DᵀY + W)`.
pub fn coupling_input(g: &Graph, couplings: &[CouplingSpec], y: &[f64], w: &[f64]) -> CouplingSignals {
    let mut out = CouplingSignals::zeros(g.node_count(), g.edge_count());
    apply_coupling(g, couplings, y, w, &mut out);
    out
}

/// Agents, graph and couplings of one network.
#[derive(Debug, Clone)]
pub struct Network {
    graph: Graph,
    agents: Vec<GoodwinParams>,
    couplings: Vec<CouplingSpec>,
}

impl Network {
    pub fn new(graph: Graph, agents: Vec<GoodwinParams>, couplings: Vec<CouplingSpec>) -> Result<Self, SimError> {
        if agents.len() != graph.node_count() {
            return Err(SimError::Dimension { what: "agents", expected: graph.node_count(), got: agents.len() });
        }
        if couplings.len() != graph.edge_count() {
            return Err(SimError::Dimension { what: "couplings", expected: graph.edge_count(), got: couplings.len() });
        }
        for a in &agents {
            a.validate()?;
        }
        for c in &couplings {
            c.function.validate()?;
        }
        Ok(Network { graph, agents, couplings })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn agents(&self) -> &[GoodwinParams] {
        &self.agents
    }

    pub fn couplings(&self) -> &[CouplingSpec] {
        &self.couplings
    }

    pub fn state_dim(&self) -> usize {
        AGENT_DIM * self.agents.len()
    }

    fn outputs(&self, state: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = state[AGENT_DIM * i];
        }
    }

    fn signals(&self, state: &[f64], w: &[f64], y: &mut [f64], sig: &mut CouplingSignals) {
        self.outputs(state, y);
        apply_coupling(&self.graph, &self.couplings, y, w, sig);
    }

    fn field(&self, state: &[f64], w: &[f64], y: &mut [f64], sig: &mut CouplingSignals, dx: &mut [f64]) {
        self.signals(state, w, y, sig);
        for (i, a) in self.agents.iter().enumerate() {
            let s = &state[AGENT_DIM * i..AGENT_DIM * (i + 1)];
            dx[AGENT_DIM * i..AGENT_DIM * (i + 1)].copy_from_slice(&a.derivative(s, sig.u[i]));
        }
    }

    /// One RK4 step of the coupled network with `w` held over the step.
    pub fn step(&self, state: &[f64], t: f64, dt: f64, w: &[f64]) -> Result<Vec<f64>, SimError> {
        let mut ws = Workspace::new(self);
        let mut next = state.to_vec();
        self.step_in_place(&mut next, t, dt, w, &mut ws)?;
        Ok(next)
    }

    fn step_in_place(&self, state: &mut [f64], t: f64, dt: f64, w: &[f64], ws: &mut Workspace) -> Result<(), SimError> {
        let Workspace { rk, y, sig, .. } = ws;
        rk.step(|_, x, dx| self.field(x, w, y, sig, dx), t, state, dt);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { t: t + dt });
        }
        Ok(())
    }
}

struct Workspace {
    rk: Rk4,
    y: Vec<f64>,
    sig: CouplingSignals,
}

impl Workspace {
    fn new(net: &Network) -> Self {
        Workspace {
            rk: Rk4::new(net.state_dim()),
            y: vec![0.0; net.graph.node_count()],
            sig: CouplingSignals::zeros(net.graph.node_count(), net.graph.edge_count()),
        }
    }
}

/// Integrals for the pairwise dissipativity inequality between agents `a`
/// and `b`: `⟨u_a - u_b, x_a1 - x_b1⟩_T`, `‖u_a‖²_T`, `‖u_b‖²_T` and
/// `‖x_a1 - x_b1‖²_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairIntegrals {
    pub a: usize,
    pub b: usize,
    pub cross: f64,
    pub input_a: f64,
    pub input_b: f64,
    pub output_diff: f64,
}

impl PairIntegrals {
    /// Right-hand side `ν(‖u_a‖² + ‖u_b‖²) + γ‖Δx1‖² + β` with the
    /// certificate's own γ.
    pub fn rhs(&self, cert: &EdgeCertificate) -> f64 {
        cert.nu * (self.input_a + self.input_b) + cert.gamma * self.output_diff + cert.beta
    }

    pub fn residual(&self, cert: &EdgeCertificate) -> f64 {
        self.cross - self.rhs(cert)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// Agent states, three per node.
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub edge_x: Vec<f64>,
    pub edge_v: Vec<f64>,
    /// Disturbance held over the step starting at `t` (the last step's value
    /// on the final sample).
    pub edge_w: Vec<f64>,
    /// ‖DᵀY‖_t
    pub norm_dty: f64,
    /// ‖W‖_t
    pub norm_w: f64,
    pub dissipation: Option<DissipationIntegrals>,
    pub pairs: Vec<PairIntegrals>,
}

impl TraceSample {
    pub fn output(&self, node: usize) -> f64 {
        self.states[AGENT_DIM * node]
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.states.iter().step_by(AGENT_DIM).copied().collect()
    }

    /// max_{i,j} |y_i - y_j|
    pub fn disagreement(&self) -> f64 {
        let y = self.outputs();
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Record every `sample_stride`-th grid point (plus the final one).
    pub sample_stride: usize,
    pub dissipation: Option<DissipationWeights>,
    /// Agent pairs whose pairwise integrals are accumulated.
    pub pairs: Vec<(usize, usize)>,
}

impl SimOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        SimOptions { dt, horizon, sample_stride: 1, dissipation: None, pairs: Vec::new() }
    }

    pub fn steps(&self) -> Result<usize, SimError> {
        let bad = SimError::BadGrid { dt: self.dt, horizon: self.horizon };
        if !(self.dt > 0.0 && self.horizon >= 0.0 && self.dt.is_finite() && self.horizon.is_finite()) {
            return Err(bad);
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(self.dt) {
            return Err(bad);
        }
        Ok(steps as usize)
    }
}

/// Every unordered pair of `n` agents.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub edge_labels: Vec<String>,
    pub samples: Vec<TraceSample>,
}

/// Sum of instantaneous integrands; also used for running totals.
#[derive(Debug, Clone, PartialEq)]
struct Integrands {
    dty2: f64,
    w2: f64,
    dissipation: DissipationIntegrals,
    pairs: Vec<[f64; 4]>,
}

impl Integrands {
    fn zeros(pairs: usize) -> Self {
        Integrands { dty2: 0.0, w2: 0.0, dissipation: DissipationIntegrals::default(), pairs: vec![[0.0; 4]; pairs] }
    }

    fn add_scaled(&mut self, a: &Integrands, b: &Integrands, h: f64) {
        self.dty2 += h * (a.dty2 + b.dty2);
        self.w2 += h * (a.w2 + b.w2);
        self.dissipation.cross += h * (a.dissipation.cross + b.dissipation.cross);
        self.dissipation.output += h * (a.dissipation.output + b.dissipation.output);
        self.dissipation.coupling += h * (a.dissipation.coupling + b.dissipation.coupling);
        for ((acc, x), y) in self.pairs.iter_mut().zip(&a.pairs).zip(&b.pairs) {
            for q in 0..4 {
                acc[q] += h * (x[q] + y[q]);
            }
        }
    }
}

fn integrands(g: &Graph, state: &[f64], sig: &CouplingSignals, w: &[f64], opts: &SimOptions, out: &mut Integrands) {
    let mut dty2 = 0.0;
    for &(i, j) in g.edges() {
        let d = state[AGENT_DIM * i] - state[AGENT_DIM * j];
        dty2 += d * d;
    }
    out.dty2 = dty2;
    out.w2 = w.iter().map(|x| x * x).sum();
    if let Some(lw) = &opts.dissipation {
        let mut cross = 0.0;
        let mut output = 0.0;
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            let d = state[AGENT_DIM * i] - state[AGENT_DIM * j];
            cross += lw.cross[k] * sig.v[k] * d;
            output += lw.output[k] * d * d;
        }
        let c: &DMatrix<f64> = &lw.coupling;
        let p = sig.v.len();
        let mut coupling = 0.0;
        for a in 0..p {
            let mut row = 0.0;
            for b in 0..p {
                row += c[(a, b)] * sig.v[b];
            }
            coupling += sig.v[a] * row;
        }
        out.dissipation = DissipationIntegrals { cross, output, coupling };
    }
    for (slot, &(a, b)) in out.pairs.iter_mut().zip(&opts.pairs) {
        let dx = state[AGENT_DIM * a] - state[AGENT_DIM * b];
        let du = sig.u[a] - sig.u[b];
        *slot = [du * dx, sig.u[a] * sig.u[a], sig.u[b] * sig.u[b], dx * dx];
    }
}

fn record(t: f64, state: &[f64], sig: &CouplingSignals, w: &[f64], acc: &Integrands, opts: &SimOptions) -> TraceSample {
    TraceSample {
        t,
        states: state.to_vec(),
        inputs: sig.u.clone(),
        edge_x: sig.x.clone(),
        edge_v: sig.v.clone(),
        edge_w: w.to_vec(),
        norm_dty: acc.dty2.max(0.0).sqrt(),
        norm_w: acc.w2.max(0.0).sqrt(),
        dissipation: opts.dissipation.as_ref().map(|_| acc.dissipation),
        pairs: opts
            .pairs
            .iter()
            .zip(&acc.pairs)
            .map(|(&(a, b), v)| PairIntegrals { a, b, cross: v[0], input_a: v[1], input_b: v[2], output_diff: v[3] })
            .collect(),
    }
}

/// Simulates `net` from `x0` over `[0, horizon]`.
pub fn run(
    net: &Network,
    x0: &[[f64; 3]],
    disturbances: &[DisturbanceSpec],
    opts: &SimOptions,
) -> Result<SimulationTrace, SimError> {
    let n = net.graph.node_count();
    let p = net.graph.edge_count();
    if x0.len() != n {
        return Err(SimError::Dimension { what: "initial states", expected: n, got: x0.len() });
    }
    if disturbances.len() != p {
        return Err(SimError::Dimension { what: "disturbance specs", expected: p, got: disturbances.len() });
    }
    if opts.sample_stride == 0 {
        return Err(SimError::BadStride);
    }
    if let Some(&(a, b)) = opts.pairs.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
        return Err(SimError::Dimension { what: "valid agent pair indices", expected: n, got: a.max(b) });
    }
    let steps = opts.steps()?;
    let dt = opts.dt;

    let mut state: Vec<f64> = x0.iter().flatten().copied().collect();
    let mut source = DisturbanceSource::new(disturbances);
    let mut ws = Workspace::new(net);
    let mut w = vec![0.0; p];
    let mut sig = CouplingSignals::zeros(n, p);
    let mut y = vec![0.0; n];

    let mut acc = Integrands::zeros(opts.pairs.len());
    let mut start = Integrands::zeros(opts.pairs.len());
    let mut end = Integrands::zeros(opts.pairs.len());
    let mut samples = Vec::with_capacity(steps / opts.sample_stride + 2);

    for k in 0..steps {
        let t = k as f64 * dt;
        source.next_step(&mut w);
        net.signals(&state, &w, &mut y, &mut sig);
        if k % opts.sample_stride == 0 {
            samples.push(record(t, &state, &sig, &w, &acc, opts));
        }
        integrands(&net.graph, &state, &sig, &w, opts, &mut start);
        net.step_in_place(&mut state, t, dt, &w, &mut ws)?;
        net.signals(&state, &w, &mut y, &mut sig);
        integrands(&net.graph, &state, &sig, &w, opts, &mut end);
        acc.add_scaled(&start, &end, 0.5 * dt);
    }
    // Final grid point; keeps the last held disturbance.
    net.signals(&state, &w, &mut y, &mut sig);
    samples.push(record(steps as f64 * dt, &state, &sig, &w, &acc, opts));

    Ok(SimulationTrace { dt, edge_labels: net.graph.edge_labels(), samples })
}

/// Independent runs over several disturbance sets, in input order.
pub fn run_sweep(
    net: &Network,
    x0: &[[f64; 3]],
    disturbance_sets: &[Vec<DisturbanceSpec>],
    opts: &SimOptions,
    exec: Execution,
) -> Vec<Result<SimulationTrace, SimError>> {
    exec::map(disturbance_sets, exec, |specs| run(net, x0, specs, opts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub times: Vec<f64>,
    /// ρ‖W‖_T + ε - ‖DᵀY‖_T at each sample.
    pub margins: Vec<f64>,
    pub verdict: bool,
}

impl BoundCheck {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Relative tolerance of the bound verdict.
pub const BOUND_TOL: f64 = 1e-9;

/// Evaluates `‖DᵀY‖_T ≤ ρ‖W‖_T + ε` at every recorded sample.
pub fn bound_check(trace: &SimulationTrace, gb: &GainBound) -> Result<BoundCheck, SimError> {
    if !gb.certified() {
        return Err(SimError::Uncertified { mu_lo: gb.mu_lo });
    }
    let times = trace.samples.iter().map(|s| s.t).collect();
    let margins: Vec<f64> = trace.samples.iter().map(|s| gb.margin(s.norm_w, s.norm_dty)).collect();
    let verdict = trace.samples.iter().zip(&margins).all(|(s, &m)| m >= -BOUND_TOL * (1.0 + gb.rho * s.norm_w));
    Ok(BoundCheck { times, margins, verdict })
}

/// Optional column groups of the trace CSV.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceCsv<'a> {
    pub bound: Option<&'a GainBound>,
    /// β̄ of the network certificate; adds a `lemma1_residual` column.
    pub dissipation_beta_bar: Option<f64>,
    /// Adds per-edge `X_i-j,V_i-j,W_i-j` columns.
    pub full: bool,
}

impl SimulationTrace {
    pub fn final_sample(&self) -> &TraceSample {
        self.samples.last().expect("a trace always holds the final sample")
    }

    /// Sample recorded at time `t`, within half a step.
    pub fn sample_at(&self, t: f64) -> Option<&TraceSample> {
        self.samples.iter().find(|s| (s.t - t).abs() < 0.5 * self.dt)
    }

    /// End-time disagreement relative to the initial one.
    pub fn sync_ratio(&self) -> f64 {
        self.final_sample().disagreement() / self.samples[0].disagreement()
    }

    /// Realised per-edge slopes ϑ_k(X_k)/X_k at every sample (sector
    /// midpoint where X_k = 0).
    pub fn realised_slopes(&self, couplings: &[CouplingSpec]) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| {
                couplings
                    .iter()
                    .zip(s.edge_x.iter().zip(&s.edge_v))
                    .map(|(c, (&x, &v))| c.realised_slope(x, v))
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self, cols: TraceCsv<'_>) -> String {
        let n = self.samples.first().map_or(0, |s| s.states.len() / AGENT_DIM);
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",y_{i}"));
        }
        out.push_str(",normDTY,normW,bound_margin");
        if cols.dissipation_beta_bar.is_some() {
            out.push_str(",lemma1_residual");
        }
        if cols.full {
            for l in &self.edge_labels {
                out.push_str(&format!(",X_{l},V_{l},W_{l}"));
            }
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&fmt_f64(s.t));
            for i in 0..n {
                out.push(',');
                out.push_str(&fmt_f64(s.output(i)));
            }
            let margin = cols.bound.filter(|b| b.certified()).map_or(f64::NAN, |b| b.margin(s.norm_w, s.norm_dty));
            out.push_str(&format!(",{},{},{}", fmt_f64(s.norm_dty), fmt_f64(s.norm_w), fmt_f64(margin)));
            if let Some(beta_bar) = cols.dissipation_beta_bar {
                let r = s.dissipation.map_or(f64::NAN, |l| crate::certificate::dissipation_residual(&l, beta_bar));
                out.push(',');
                out.push_str(&fmt_f64(r));
            }
            if cols.full {
                for k in 0..s.edge_x.len() {
                    out.push_str(&format!(
                        ",{},{},{}",
                        fmt_f64(s.edge_x[k]),
                        fmt_f64(s.edge_v[k]),
                        fmt_f64(s.edge_w[k])
                    ));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::SectorBound;
    use crate::coupling::CouplingFn;
    use approx::assert_relative_eq;

    fn agent(gain: f64) -> GoodwinParams {
        GoodwinParams { a1: 0.5, a2: 1.0, a3: 1.0, b2: 1.5, b3: 1.5, input_gain: gain, hill: 14 }
    }

    fn k5(gains: [f64; 5], coupling: CouplingSpec) -> Network {
        let g = Graph::complete(5).unwrap();
        Network::new(g, gains.iter().map(|&b| agent(b)).collect(), vec![coupling; 10]).unwrap()
    }

    #[test]
    fn coupling_input_cases() {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let c = [CouplingSpec::linear(5.0).unwrap()];
        let s = coupling_input(&g, &c, &[1.0, 0.0], &[0.0]);
        assert_eq!((s.x[0], s.v[0]), (1.0, 5.0));
        assert_eq!(s.u, vec![-5.0, 5.0]);

        let g = Graph::complete(4).unwrap();
        let c = vec![CouplingSpec::linear(2.0).unwrap(); 6];
        let s = coupling_input(&g, &c, &[0.7; 4], &[0.0; 6]);
        assert!(s.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn coupling_input_matches_dense_incidence() {
        let g = Graph::new(4, &[(1, 2), (2, 3), (1, 4), (3, 4), (2, 4)]).unwrap();
        let c: Vec<_> = (0..5)
            .map(|k| {
                CouplingSpec::new(
                    CouplingFn::AffineSine { c: 2.0 + k as f64, d: 0.5 },
                    SectorBound::new(1.0, 8.0).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let y = [0.3, -1.2, 2.0, 0.1];
        let w = [0.1, -0.2, 0.0, 0.4, 0.05];
        let s = coupling_input(&g, &c, &y, &w);
        let d = g.incidence().to_dmatrix();
        let x = d.transpose() * nalgebra::DVector::from_column_slice(&y) + nalgebra::DVector::from_column_slice(&w);
        let v: Vec<f64> = (0..5).map(|k| c[k].function.eval(x[k])).collect();
        let u = -(&d * nalgebra::DVector::from_vec(v.clone()));
        for k in 0..5 {
            assert_relative_eq!(s.x[k], x[k], epsilon = 1e-15);
            assert_relative_eq!(s.v[k], v[k], epsilon = 1e-15);
        }
        for i in 0..4 {
            assert_relative_eq!(s.u[i], u[i], epsilon = 1e-14);
        }
        assert!(s.u.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn rk4_decay_and_order() {
        let err = |dt: f64| {
            let mut rk = Rk4::new(1);
            let mut x = [1.0];
            let steps = (1.0 / dt).round() as usize;
            for k in 0..steps {
                rk.step(|_, x, dx| dx[0] = -x[0], k as f64 * dt, &mut x, dt);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let mut rk = Rk4::new(1);
        let mut x = [1.0];
        rk.step(|_, x, dx| dx[0] = -x[0], 0.0, &mut x, 0.1);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    fn equilibrium(a: &GoodwinParams) -> [f64; 3] {
        // a1 x1 = 1/(x3^p + 1) with x3 = b3 b2 x1 / (a2 a3); bisection on x1.
        let resid = |x1: f64| {
            let x3 = a.b3 * a.b2 * x1 / (a.a2 * a.a3);
            a.a1 * x1 - 1.0 / (x3.powi(a.hill as i32) + 1.0)
        };
        let (mut lo, mut hi) = (0.0, 1.0 / a.a1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if resid(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x1 = 0.5 * (lo + hi);
        let x2 = a.b2 * x1 / a.a2;
        [x1, x2, a.b3 * x2 / a.a3]
    }

    #[test]
    fn equilibrium_is_fixed() {
        let a = agent(0.9);
        let net = Network::new(Graph::new(1, &[]).unwrap(), vec![a], vec![]).unwrap();
        let x = equilibrium(&a);
        let next = net.step(&x, 0.0, 1e-3, &[]).unwrap();
        for q in 0..3 {
            assert!((next[q] - x[q]).abs() < 1e-10);
        }
    }

    #[test]
    fn identical_pair_stays_synchronised() {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let c =
            CouplingSpec::new(CouplingFn::AffineSine { c: 2.0, d: 1.0 }, SectorBound::new(1.0, 3.0).unwrap()).unwrap();
        let net = Network::new(g, vec![agent(1.1), agent(1.1)], vec![c]).unwrap();
        let mut opts = SimOptions::new(1e-2, 20.0);
        opts.sample_stride = 10;
        let tr = run(&net, &[[0.4, 0.1, 0.2]; 2], &[DisturbanceSpec::zero()], &opts).unwrap();
        for s in &tr.samples {
            assert_eq!(s.edge_x[0], 0.0);
            assert_eq!(s.norm_dty, 0.0);
        }
    }

    #[test]
    fn non_finite_state_aborts_with_time() {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let net = Network::new(g, vec![agent(1.0), agent(1.0)], vec![CouplingSpec::linear(1e300).unwrap()]).unwrap();
        let err = run(&net, &[[1.0, 0.0, 0.0], [0.0; 3]], &[DisturbanceSpec::zero()], &SimOptions::new(0.1, 1.0));
        assert!(matches!(err, Err(SimError::NonFinite { .. })));
    }

    #[test]
    fn grid_must_divide_horizon() {
        assert_eq!(SimOptions::new(1e-3, 100.0).steps(), Ok(100_000));
        assert!(SimOptions::new(0.3, 1.0).steps().is_err());
        assert!(SimOptions::new(0.0, 1.0).steps().is_err());
    }

    #[test]
    fn input_conservation_and_sector_realisation() {
        let c =
            CouplingSpec::new(CouplingFn::AffineSine { c: 4.0, d: 1.0 }, SectorBound::new(3.0, 5.0).unwrap()).unwrap();
        let net = k5([0.8, 0.9, 1.0, 1.1, 1.2], c.clone());
        let x0 = [[1.1, 0.0, 0.0], [-0.2, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.3, 0.0, 0.0]];
        let specs = DisturbanceSpec::per_edge(crate::disturbance::DisturbanceKind::Gaussian, 0.3, 5, 10);
        let mut opts = SimOptions::new(1e-3, 5.0);
        opts.sample_stride = 10;
        let tr = run(&net, &x0, &specs, &opts).unwrap();
        let mut last = (0.0, 0.0);
        for s in &tr.samples {
            assert!(s.inputs.iter().sum::<f64>().abs() < 1e-12);
            for (x, v) in s.edge_x.iter().zip(&s.edge_v) {
                if x.abs() > 1e-12 {
                    assert!(c.sector.contains(v / x, 1e-12));
                }
            }
            assert!(s.norm_dty >= last.0 && s.norm_w >= last.1);
            last = (s.norm_dty, s.norm_w);
        }
        for eta in tr.realised_slopes(net.couplings()) {
            assert!(eta.iter().all(|&e| c.sector.contains(e, 1e-12)));
        }
    }

    #[test]
    fn relabelling_permutes_the_trace() {
        // Equal gains: swapping initial conditions of nodes 1 and 4 swaps
        // their outputs.
        let net = k5([1.1; 5], CouplingSpec::linear(5.0).unwrap());
        let x0 = [[1.1, 0.2, 0.0], [-0.2, 0.0, 0.3], [1.0, 0.0, 0.0], [0.5, 0.1, 0.0], [0.3, 0.0, 0.0]];
        let perm = [3, 1, 2, 0, 4];
        let x0p: Vec<[f64; 3]> = perm.iter().map(|&i| x0[i]).collect();
        let opts = SimOptions { sample_stride: 100, ..SimOptions::new(1e-3, 2.0) };
        let zero = vec![DisturbanceSpec::zero(); 10];
        let a = run(&net, &x0, &zero, &opts).unwrap();
        let b = run(&net, &x0p, &zero, &opts).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            for (new, &old) in perm.iter().enumerate() {
                assert_relative_eq!(sb.output(new), sa.output(old), epsilon = 1e-12);
            }
            assert_relative_eq!(sa.norm_dty, sb.norm_dty, epsilon = 1e-10);
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical_and_sweeps_agree() {
        let net = k5([0.8, 0.9, 1.0, 1.1, 1.2], CouplingSpec::linear(5.0).unwrap());
        let x0 = [[1.1, 0.0, 0.0], [-0.2, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.3, 0.0, 0.0]];
        let opts = SimOptions { sample_stride: 50, ..SimOptions::new(1e-3, 1.0) };
        let sets: Vec<_> = (0..3)
            .map(|s| DisturbanceSpec::per_edge(crate::disturbance::DisturbanceKind::Gaussian, 0.3, s, 10))
            .collect();
        let seq = run_sweep(&net, &x0, &sets, &opts, Execution::Sequential);
        let par = run_sweep(&net, &x0, &sets, &opts, Execution::Parallel);
        for (a, b) in seq.iter().zip(&par) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(
                a.to_csv(TraceCsv { full: true, ..Default::default() }),
                b.to_csv(TraceCsv { full: true, ..Default::default() })
            );
        }
        assert_ne!(seq[0].as_ref().unwrap().samples[1].edge_w, seq[1].as_ref().unwrap().samples[1].edge_w);
    }

    #[test]
    fn trace_csv_header() {
        let net = k5([1.0; 5], CouplingSpec::linear(5.0).unwrap());
        let tr = run(&net, &[[0.0; 3]; 5], &vec![DisturbanceSpec::zero(); 10], &SimOptions::new(0.5, 1.0)).unwrap();
        let csv = tr.to_csv(TraceCsv { full: true, dissipation_beta_bar: Some(0.0), bound: None });
        let header = csv.lines().next().unwrap();
        assert!(header
            .starts_with("t,y_1,y_2,y_3,y_4,y_5,normDTY,normW,bound_margin,lemma1_residual,X_1-2,V_1-2,W_1-2,X_1-3"));
        assert_eq!(csv.lines().count(), 1 + 3);
    }
}
