//! Goodwin oscillator agents and their pairwise relative-dissipativity
//! certificates.
//!
//! Each agent is the three-species loop
//!
//! ```text
//! ẋ1 = -a1 x1 - y4 + b1 u
//! ẋ2 = -a2 x2 + b2 x1
//! ẋ3 = -a3 x3 + b3 x2
//! y4 = -1 / (x3^p + 1)
//! ```
//!
//! with output `y = x1`. Agents in one network share everything except the
//! input gain `b1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{edge_margin, CertError, EdgeCertificate, NetworkCertificate, SectorBound};
use crate::exec::{self, Execution};
use crate::graph::Graph;
use crate::table::fmt_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GoodwinError {
    #[error("Hill coefficient must be >= 2, got {0}")]
    HillTooSmall(u32),
    #[error("parameter {name} must be finite and > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("agents {0} and {1} differ in {2}; only the input gain may vary between agents")]
    SharedMismatch(usize, usize, &'static str),
    #[error("theta must be > 0, got {0}")]
    ThetaNonPositive(f64),
    #[error("theta3 = {theta3} violates theta3 > b3^2/(2 a3) = {bound} (theta1 would be non-positive)")]
    Theta3BelowBound { theta3: f64, bound: f64 },
    #[error("theta3 = {theta3} violates theta3 < 2 a2 = {bound} (theta2 would be non-positive)")]
    Theta3AboveBound { theta3: f64, bound: f64 },
    #[error("admissible theta3 interval (b3^2/(2 a3), 2 a2) = ({lower}, {upper}) is empty")]
    EmptyAdmissibleRegion { lower: f64, upper: f64 },
    #[error("no grid point has theta > 0 and theta3 inside ({lower}, {upper})")]
    NoAdmissibleGridPoint { lower: f64, upper: f64 },
    #[error("expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Certificate(#[from] CertError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodwinParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b2: f64,
    pub b3: f64,
    /// Heterogeneous input gain b_{i,1}.
    pub input_gain: f64,
    /// Hill coefficient p.
    pub hill: u32,
}

impl GoodwinParams {
    pub fn validate(&self) -> Result<(), GoodwinError> {
        let named = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("b2", self.b2),
            ("b3", self.b3),
            ("input_gain", self.input_gain),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(GoodwinError::NonPositive { name, value });
            }
        }
        if self.hill < 2 {
            return Err(GoodwinError::HillTooSmall(self.hill));
        }
        Ok(())
    }

    /// First field (other than the input gain) in which two agents differ.
    pub fn chain_mismatch(&self, other: &GoodwinParams) -> Option<&'static str> {
        [
            ("a1", self.a1 == other.a1),
            ("a2", self.a2 == other.a2),
            ("a3", self.a3 == other.a3),
            ("b2", self.b2 == other.b2),
            ("b3", self.b3 == other.b3),
            ("hill", self.hill == other.hill),
        ]
        .into_iter()
        .find(|(_, same)| !same)
        .map(|(name, _)| name)
    }

    /// Internal repression output y4 = -1/(x3^p + 1).
    pub fn repression(&self, x3: f64) -> f64 {
        -1.0 / (x3.powi(self.hill as i32) + 1.0)
    }

    /// Time derivative of the three species under input `u`.
    pub fn derivative(&self, x: &[f64], u: f64) -> [f64; 3] {
        [
            -self.a1 * x[0] - self.repression(x[2]) + self.input_gain * u,
            -self.a2 * x[1] + self.b2 * x[0],
            -self.a3 * x[2] + self.b3 * x[1],
        ]
    }
}

/// Slope of the repression term, p x^{p-1} / (x^p + 1)^2.
pub fn hill_slope(p: u32, x: f64) -> f64 {
    let xp = x.powi(p as i32);
    p as f64 * x.powi(p as i32 - 1) / ((xp + 1.0) * (xp + 1.0))
}

/// Closed-form slope constant
/// `p(p-1) / ((((p-1)/(p+1))^{p/(p-1)} + 1)^2 (p+1))`.
///
/// This is the Hill slope evaluated at `x = ((p-1)/(p+1))^{1/(p-1)}`, which
/// sits slightly off the true maximiser `((p-1)/(p+1))^{1/p}`; see
/// [`delta_max_slope`] for the exact maximum.
pub fn delta(p: u32) -> Result<f64, GoodwinError> {
    if p < 2 {
        return Err(GoodwinError::HillTooSmall(p));
    }
    let pf = p as f64;
    let ratio = (pf - 1.0) / (pf + 1.0);
    let root = ratio.powf(pf / (pf - 1.0));
    Ok(pf * (pf - 1.0) / ((root + 1.0) * (root + 1.0) * (pf + 1.0)))
}

/// Maximum of the Hill slope over x > 0, found by golden-section search.
pub fn delta_max_slope(p: u32) -> Result<f64, GoodwinError> {
    if p < 2 {
        return Err(GoodwinError::HillTooSmall(p));
    }
    // The slope is unimodal on (0, inf) with its peak below x = 1.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (hill_slope(p, c), hill_slope(p, d));
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = hill_slope(p, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = hill_slope(p, d);
        }
    }
    Ok(hill_slope(p, 0.5 * (a + b)))
}

/// Which slope constant feeds the certificate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    #[default]
    ClosedForm,
    MaxSlope,
}

impl DeltaRule {
    pub fn evaluate(self, p: u32) -> Result<f64, GoodwinError> {
        match self {
            DeltaRule::ClosedForm => delta(p),
            DeltaRule::MaxSlope => delta_max_slope(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReport {
    pub closed_form: f64,
    pub max_slope: f64,
}

impl DeltaReport {
    pub fn new(p: u32) -> Result<Self, GoodwinError> {
        Ok(DeltaReport { closed_form: delta(p)?, max_slope: delta_max_slope(p)? })
    }

    pub fn relative_gap(&self) -> f64 {
        (self.max_slope - self.closed_form).abs() / self.max_slope
    }

    /// True when the two constants differ by more than 1%.
    pub fn should_warn(&self) -> bool {
        self.relative_gap() > 0.01
    }
}

/// Free parameters θ and θ₃ of the pairwise certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertParams {
    pub theta: f64,
    pub theta3: f64,
    #[serde(default)]
    pub delta_rule: DeltaRule,
}

/// θ₁, θ₂ and the slope constant implied by a [`CertParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// Open interval of admissible θ₃: `(b3²/(2 a3), 2 a2)`.
pub fn theta3_interval(shared: &GoodwinParams) -> (f64, f64) {
    (shared.b3 * shared.b3 / (2.0 * shared.a3), 2.0 * shared.a2)
}

impl CertParams {
    pub fn new(theta: f64, theta3: f64) -> Self {
        CertParams { theta, theta3, delta_rule: DeltaRule::ClosedForm }
    }

    pub fn derive(&self, shared: &GoodwinParams) -> Result<DerivedParams, GoodwinError> {
        shared.validate()?;
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(GoodwinError::ThetaNonPositive(self.theta));
        }
        let (lower, upper) = theta3_interval(shared);
        if self.theta3.is_nan() || self.theta3 <= lower {
            return Err(GoodwinError::Theta3BelowBound { theta3: self.theta3, bound: lower });
        }
        if self.theta3 >= upper {
            return Err(GoodwinError::Theta3AboveBound { theta3: self.theta3, bound: upper });
        }
        let delta = self.delta_rule.evaluate(shared.hill)?;
        let theta1 = delta * delta * self.theta3 / (2.0 * shared.a3 * self.theta3 - shared.b3 * shared.b3);
        let theta2 = shared.b2 * shared.b2 / (2.0 * shared.a2 - self.theta3);
        Ok(DerivedParams { delta, theta1, theta2 })
    }

    /// γ = a1 - θ - θ₁/2 - θ₂/2
    pub fn gamma(&self, shared: &GoodwinParams) -> Result<f64, GoodwinError> {
        let d = self.derive(shared)?;
        Ok(shared.a1 - self.theta - 0.5 * d.theta1 - 0.5 * d.theta2)
    }
}

/// b̃ = max(|b_i - 1|, |b_j - 1|)
pub fn gain_mismatch(gi: &GoodwinParams, gj: &GoodwinParams) -> f64 {
    (gi.input_gain - 1.0).abs().max((gj.input_gain - 1.0).abs())
}

/// β = -½ Σ_q (x_{i,q}(0) - x_{j,q}(0))²
pub fn initial_bias(xi0: &[f64; 3], xj0: &[f64; 3]) -> f64 {
    -0.5 * xi0.iter().zip(xj0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn certificate_for(
    mismatch: f64,
    shared: &GoodwinParams,
    cp: &CertParams,
    xi0: &[f64; 3],
    xj0: &[f64; 3],
) -> Result<EdgeCertificate, GoodwinError> {
    let nu = -mismatch * mismatch / (2.0 * cp.theta);
    let gamma = cp.gamma(shared)?;
    Ok(EdgeCertificate::new(nu, gamma, initial_bias(xi0, xj0))?)
}

/// Pairwise certificate `(ν, γ, β)` for two agents sharing their chain
/// parameters.
pub fn certify_edge(
    gi: &GoodwinParams,
    gj: &GoodwinParams,
    cp: &CertParams,
    xi0: &[f64; 3],
    xj0: &[f64; 3],
) -> Result<EdgeCertificate, GoodwinError> {
    gi.validate()?;
    gj.validate()?;
    if let Some(field) = gi.chain_mismatch(gj) {
        return Err(GoodwinError::SharedMismatch(0, 1, field));
    }
    certificate_for(gain_mismatch(gi, gj), gi, cp, xi0, xj0)
}

/// How ν_k is assigned across edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuMode {
    /// Every edge uses the largest gain mismatch found on any edge.
    #[default]
    UniformWorstCase,
    /// Each edge uses its own endpoints' mismatch.
    PerEdge,
}

fn check_agents(agents: &[GoodwinParams], g: &Graph, x0: &[[f64; 3]]) -> Result<(), GoodwinError> {
    if agents.len() != g.node_count() {
        return Err(GoodwinError::Dimension { what: "agents", expected: g.node_count(), got: agents.len() });
    }
    if x0.len() != g.node_count() {
        return Err(GoodwinError::Dimension { what: "initial states", expected: g.node_count(), got: x0.len() });
    }
    for (i, a) in agents.iter().enumerate() {
        a.validate()?;
        if let Some(field) = agents[0].chain_mismatch(a) {
            return Err(GoodwinError::SharedMismatch(1, i + 1, field));
        }
    }
    Ok(())
}

/// Edge certificates for every edge of `g`.
pub fn certify_edges(
    agents: &[GoodwinParams],
    g: &Graph,
    cp: &CertParams,
    mode: NuMode,
    x0: &[[f64; 3]],
) -> Result<Vec<EdgeCertificate>, GoodwinError> {
    check_agents(agents, g, x0)?;
    let uniform = g.edges().iter().map(|&(i, j)| gain_mismatch(&agents[i], &agents[j])).fold(0.0, f64::max);
    g.edges()
        .iter()
        .map(|&(i, j)| {
            let mismatch = match mode {
                NuMode::UniformWorstCase => uniform,
                NuMode::PerEdge => gain_mismatch(&agents[i], &agents[j]),
            };
            certificate_for(mismatch, &agents[0], cp, &x0[i], &x0[j])
        })
        .collect()
}

pub fn certify_network(
    agents: &[GoodwinParams],
    g: &Graph,
    cp: &CertParams,
    mode: NuMode,
    x0: &[[f64; 3]],
    sectors: &[SectorBound],
) -> Result<NetworkCertificate, GoodwinError> {
    let edges = certify_edges(agents, g, cp, mode, x0)?;
    Ok(NetworkCertificate::new(g, sectors.to_vec(), edges)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub theta: f64,
    pub theta3: f64,
    /// Minimum edge margin; `None` when (θ, θ₃) is inadmissible.
    pub min_slack: Option<f64>,
}

impl GridPoint {
    /// Admissible and every edge margin strictly positive.
    pub fn feasible(&self) -> bool {
        self.min_slack.is_some_and(|s| s > crate::positivity::STRICT_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub grid: Vec<GridPoint>,
    pub best: GridPoint,
}

impl SearchResult {
    /// `theta,theta3,min_slack,feasible` in grid order (θ outer, θ₃ inner).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,theta3,min_slack,feasible\n");
        for pt in &self.grid {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(pt.theta),
                fmt_f64(pt.theta3),
                fmt_f64(pt.min_slack.unwrap_or(f64::NAN)),
                pt.feasible()
            ));
        }
        out
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive; `n == 1` gives `[lo]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Grid search over (θ, θ₃) maximising the minimum edge margin. Ties go to
/// the smaller θ, then the smaller θ₃.
#[allow(clippy::too_many_arguments)]
pub fn search_params(
    agents: &[GoodwinParams],
    g: &Graph,
    sectors: &[SectorBound],
    mode: NuMode,
    x0: &[[f64; 3]],
    thetas: &[f64],
    theta3s: &[f64],
    delta_rule: DeltaRule,
    exec: Execution,
) -> Result<SearchResult, GoodwinError> {
    check_agents(agents, g, x0)?;
    let (lower, upper) = theta3_interval(&agents[0]);
    if lower >= upper {
        return Err(GoodwinError::EmptyAdmissibleRegion { lower, upper });
    }
    let points: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| theta3s.iter().map(move |&t3| (t, t3))).collect();
    let grid = exec::map(&points, exec, |&(theta, theta3)| {
        let cp = CertParams { theta, theta3, delta_rule };
        let min_slack =
            certify_network(agents, g, &cp, mode, x0, sectors).ok().map(|cert| edge_margin(&cert).min_slack());
        GridPoint { theta, theta3, min_slack }
    });
    let mut best: Option<GridPoint> = None;
    for pt in &grid {
        let Some(s) = pt.min_slack else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = b.min_slack.unwrap();
                s > bs || (s == bs && (pt.theta, pt.theta3) < (b.theta, b.theta3))
            }
        };
        if better {
            best = Some(*pt);
        }
    }
    let best = best.ok_or(GoodwinError::NoAdmissibleGridPoint { lower, upper })?;
    Ok(SearchResult { grid, best })
}
