//! Per-edge relative-dissipativity certificates and the network-level
//! quantities built from them: the distributed edge margin, the Ψ and Q
//! matrices, and the certified gain bound `‖DᵀY‖_T ≤ ρ‖W‖_T + ε`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{self, EigenError};
use crate::exec::{self, Execution};
use crate::graph::{EdgeStats, Graph, GraphWeightMatrices};
use crate::positivity::STRICT_TOL;
use crate::table::fmt_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("sector bounds must satisfy 0 < lower <= upper < inf, got ({lower}, {upper})")]
    BadSector { lower: f64, upper: f64 },
    #[error("nu must be finite and <= 0, got {0}")]
    PositiveNu(f64),
    #[error("certificate values must be finite")]
    NonFinite,
    #[error("expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("certificate file lists edge {0}-{1}, which is not in the graph")]
    UnknownEdge(usize, usize),
    #[error("certificate file lists edge {0} more than once")]
    RepeatedEdge(String),
    #[error("certificate file has no entry for edge {0}")]
    MissingEdge(String),
    #[error("no slope samples supplied")]
    NoSamples,
    #[error("slope sample {sample} has {got} entries, expected {expected}")]
    SampleLength { sample: usize, expected: usize, got: usize },
    #[error("slope sample {sample} puts edge {edge} at {value}, outside its sector [{lower}, {upper}]")]
    SampleOutsideSector { sample: usize, edge: usize, value: f64, lower: f64, upper: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// Sector `[lower, upper]` containing ϑ(x)/x for every x ≠ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorBound {
    pub lower: f64,
    pub upper: f64,
}

impl SectorBound {
    pub fn new(lower: f64, upper: f64) -> Result<Self, CertError> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(CertError::BadSector { lower, upper });
        }
        Ok(SectorBound { lower, upper })
    }

    pub fn point(alpha: f64) -> Result<Self, CertError> {
        SectorBound::new(alpha, alpha)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, slope: f64, tol: f64) -> bool {
        slope >= self.lower - tol && slope <= self.upper + tol
    }
}

/// Relative-dissipativity parameters (ν, γ, β) of one edge.
///
/// `gamma` keeps the value the certificate was issued with. Every
/// network-level quantity uses [`EdgeCertificate::effective_gamma`], which
/// clamps it to be non-positive: a certificate that holds for some γ > 0 also
/// holds for γ = 0, and a positive γ must never inflate a margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCertificate {
    pub nu: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl EdgeCertificate {
    pub fn new(nu: f64, gamma: f64, beta: f64) -> Result<Self, CertError> {
        if !(gamma.is_finite() && beta.is_finite()) {
            return Err(CertError::NonFinite);
        }
        if !(nu.is_finite() && nu <= 0.0) {
            return Err(CertError::PositiveNu(nu));
        }
        Ok(EdgeCertificate { nu, gamma, beta })
    }

    pub fn effective_gamma(&self) -> f64 {
        self.gamma.min(0.0)
    }
}

/// Certificates and sectors for every edge of a graph, plus the node sums
/// ν̃_i derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCertificate {
    stats: EdgeStats,
    sectors: Vec<SectorBound>,
    edges: Vec<EdgeCertificate>,
    node_nu: Vec<f64>,
}

impl NetworkCertificate {
    pub fn new(g: &Graph, sectors: Vec<SectorBound>, edges: Vec<EdgeCertificate>) -> Result<Self, CertError> {
        let p = g.edge_count();
        if sectors.len() != p {
            return Err(CertError::Dimension { what: "sector bounds", expected: p, got: sectors.len() });
        }
        if edges.len() != p {
            return Err(CertError::Dimension { what: "edge certificates", expected: p, got: edges.len() });
        }
        for s in &sectors {
            SectorBound::new(s.lower, s.upper)?;
        }
        for c in &edges {
            EdgeCertificate::new(c.nu, c.gamma, c.beta)?;
        }
        let node_nu = (0..g.node_count()).map(|i| g.incident_edges(i).iter().map(|&k| edges[k].nu).sum()).collect();
        Ok(NetworkCertificate { stats: g.edge_stats(), sectors, edges, node_nu })
    }

    pub fn stats(&self) -> &EdgeStats {
        &self.stats
    }

    pub fn sectors(&self) -> &[SectorBound] {
        &self.sectors
    }

    pub fn edges(&self) -> &[EdgeCertificate] {
        &self.edges
    }

    /// ν̃_i, the sum of ν_k over edges touching node i.
    pub fn node_nu(&self) -> &[f64] {
        &self.node_nu
    }

    /// β̄ = Σ_k β_k.
    pub fn beta_bar(&self) -> f64 {
        self.edges.iter().map(|c| c.beta).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn all_point_sectors(&self) -> bool {
        self.sectors.iter().all(SectorBound::is_point)
    }

    /// Parses the `{"edges": [...]}` certificate file against `g`.
    pub fn from_file(g: &Graph, file: &CertificateFile) -> Result<Self, CertError> {
        let p = g.edge_count();
        let mut slots: Vec<Option<(SectorBound, EdgeCertificate)>> = vec![None; p];
        for entry in &file.edges {
            let [a, b] = entry.edge;
            let k = if a >= 1 && b >= 1 && a <= g.node_count() && b <= g.node_count() {
                g.edge_index(a - 1, b - 1)
            } else {
                None
            }
            .ok_or(CertError::UnknownEdge(a, b))?;
            if slots[k].is_some() {
                return Err(CertError::RepeatedEdge(g.edge_label(k)));
            }
            slots[k] = Some((
                SectorBound::new(entry.alpha_lo, entry.alpha_hi)?,
                EdgeCertificate::new(entry.nu, entry.gamma, entry.beta)?,
            ));
        }
        let mut sectors = Vec::with_capacity(p);
        let mut edges = Vec::with_capacity(p);
        for (k, slot) in slots.into_iter().enumerate() {
            let (s, c) = slot.ok_or_else(|| CertError::MissingEdge(g.edge_label(k)))?;
            sectors.push(s);
            edges.push(c);
        }
        NetworkCertificate::new(g, sectors, edges)
    }

    pub fn to_file(&self) -> CertificateFile {
        CertificateFile {
            edges: self
                .stats
                .edges
                .iter()
                .zip(self.sectors.iter().zip(&self.edges))
                .map(|(&(i, j), (s, c))| CertificateEntry {
                    edge: [i + 1, j + 1],
                    nu: c.nu,
                    gamma: c.gamma,
                    beta: c.beta,
                    alpha_lo: s.lower,
                    alpha_hi: s.upper,
                })
                .collect(),
        }
    }
}

/// JSON certificate exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub edges: Vec<CertificateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub edge: [usize; 2],
    pub nu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

/// Per-edge distributed margin and the overall verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub slacks: Vec<f64>,
    pub verdict: bool,
}

impl MarginReport {
    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `edge,slack,verdict` CSV, one row per edge.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("edge,slack,verdict\n");
        for (label, &s) in labels.iter().zip(&self.slacks) {
            out.push_str(&format!("{label},{},{}\n", fmt_f64(s), s > STRICT_TOL));
        }
        out
    }
}

/// Edge margin
/// `(2 + r̃_k)/ᾱ_k - (1 + α̲_k²) r̄_k / (2α̲_k²) + γ_k/α̲_k² - r_i|ν̃_i| - r_j|ν̃_j|`
/// for every edge; the network is certified when all are strictly positive.
pub fn edge_margin(cert: &NetworkCertificate) -> MarginReport {
    let st = &cert.stats;
    let slacks: Vec<f64> = (0..cert.edge_count())
        .map(|k| {
            let (i, j) = st.edges[k];
            let s = cert.sectors[k];
            let lo2 = s.lower * s.lower;
            (2.0 + st.common[k] as f64) / s.upper - (1.0 + lo2) * st.exclusive[k] as f64 / (2.0 * lo2)
                + cert.edges[k].effective_gamma() / lo2
                - st.degree[i] as f64 * cert.node_nu[i].abs()
                - st.degree[j] as f64 * cert.node_nu[j].abs()
        })
        .collect();
    let verdict = slacks.iter().all(|&s| s > STRICT_TOL);
    MarginReport { slacks, verdict }
}

/// The matrices of the network-level dissipativity inequality for (V, DᵀY).
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationMatrices {
    /// Γ = diag(γ_k), clamped.
    pub gamma: DMatrix<f64>,
    /// Ξ = diag(ν̃_i).
    pub xi: DMatrix<f64>,
    pub dt_xi_d: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub phi_bar: DMatrix<f64>,
}

impl DissipationMatrices {
    /// Weights used to accumulate the three inner products along a trace.
    pub fn weights(&self) -> DissipationWeights {
        let p = self.gamma.nrows();
        DissipationWeights {
            cross: (0..p).map(|k| 2.0 + self.phi[(k, k)]).collect(),
            output: (0..p).map(|k| self.gamma[(k, k)] - self.phi_bar[(k, k)]).collect(),
            coupling: &self.dt_xi_d - &self.phi_bar,
        }
    }
}

/// Diagonal weights `2I + Φ_G` and `Γ - Φ̄_G`, and the dense `DᵀΞD - Φ̄_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationWeights {
    pub cross: Vec<f64>,
    pub output: Vec<f64>,
    pub coupling: DMatrix<f64>,
}

/// Finite-horizon inner products of the network-level inequality at some T:
/// `cross = ⟨V, (2I + Φ_G)DᵀY⟩_T`, `output = ⟨DᵀY, (Γ - Φ̄_G)DᵀY⟩_T` and
/// `coupling = ⟨V, (DᵀΞD - Φ̄_G)V⟩_T`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DissipationIntegrals {
    pub cross: f64,
    pub output: f64,
    pub coupling: f64,
}

impl DissipationIntegrals {
    pub fn lhs(&self) -> f64 {
        -self.cross
    }

    pub fn rhs(&self, beta_bar: f64) -> f64 {
        self.output + self.coupling + beta_bar
    }
}

/// LHS - RHS of `⟨-V, (2I + Φ_G)DᵀY⟩_T ≥ ⟨DᵀY, (Γ - Φ̄_G)DᵀY⟩_T + ⟨V, (DᵀΞD - Φ̄_G)V⟩_T + β̄`.
pub fn dissipation_residual(integrals: &DissipationIntegrals, beta_bar: f64) -> f64 {
    integrals.lhs() - integrals.rhs(beta_bar)
}

fn diag(v: impl IntoIterator<Item = f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(v.into_iter().collect()))
}

pub fn dissipation_matrices(g: &Graph, cert: &NetworkCertificate) -> DissipationMatrices {
    let d = g.incidence().to_dmatrix();
    let xi = diag(cert.node_nu.iter().copied());
    let dt_xi_d = d.transpose() * &xi * &d;
    let GraphWeightMatrices { phi, phi_bar } = cert.stats.weight_matrices();
    DissipationMatrices {
        gamma: diag(cert.edges.iter().map(EdgeCertificate::effective_gamma)),
        xi,
        dt_xi_d,
        phi: diag(phi),
        phi_bar: diag(phi_bar),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiQ {
    /// Ψ = DᵀΞD - Φ̄_G + (2I + Φ_G)Λ̄⁻¹
    pub psi: DMatrix<f64>,
    /// Q = Ψ + Λ̲⁻¹(Γ - Φ̄_G)Λ̲⁻¹
    pub q: DMatrix<f64>,
    pub q_min_eigenvalue: f64,
}

pub fn assemble_psi_q(g: &Graph, cert: &NetworkCertificate) -> Result<PsiQ, CertError> {
    let m = dissipation_matrices(g, cert);
    let p = cert.edge_count();
    let mut psi = &m.dt_xi_d - &m.phi_bar;
    let mut q_shift = vec![0.0; p];
    for k in 0..p {
        let s = cert.sectors[k];
        psi[(k, k)] += (2.0 + m.phi[(k, k)]) / s.upper;
        q_shift[k] = (m.gamma[(k, k)] - m.phi_bar[(k, k)]) / (s.lower * s.lower);
    }
    let mut q = psi.clone();
    for (k, shift) in q_shift.into_iter().enumerate() {
        q[(k, k)] += shift;
    }
    let q_min_eigenvalue = eigen::min_eigenvalue(&q)?;
    Ok(PsiQ { psi, q, q_min_eigenvalue })
}

/// Whether μ̲ and μ̄ are exact or estimated from finitely many slope samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundEstimate {
    /// Every sector is a single point, so H(t) is constant.
    Exact,
    SampledEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainBound {
    pub psi: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_min_eigenvalue: f64,
    /// μ̲ = min over samples of λ_min(HΨH + Γ - Φ̄_G)
    pub mu_lo: f64,
    /// μ̄ = max over samples of λ_max(HΨH)
    pub mu_hi: f64,
    /// φ̄ = max_k (2 + r̃_k)
    pub phi_max: f64,
    /// ᾱ = max_k ᾱ_k
    pub alpha_max: f64,
    pub beta_bar: f64,
    /// Gain ρ; infinite when not certified.
    pub rho: f64,
    /// Offset ε; infinite when not certified.
    pub epsilon: f64,
    pub estimate: BoundEstimate,
    pub samples: usize,
}

impl GainBound {
    pub fn certified(&self) -> bool {
        self.mu_lo > STRICT_TOL
    }

    /// ρ‖W‖_T + ε - ‖DᵀY‖_T
    pub fn margin(&self, norm_w: f64, norm_dty: f64) -> f64 {
        self.rho * norm_w + self.epsilon - norm_dty
    }
}

/// Gain and offset of the certified bound from the closed forms
/// `ρ = sqrt(1/2 + (4ᾱ²φ̄² + 8μ̄²)/μ̲²)` and `ε = sqrt(2|β̄|/μ̲)`.
pub fn rho_epsilon(alpha_max: f64, phi_max: f64, mu_lo: f64, mu_hi: f64, beta_bar: f64) -> (f64, f64) {
    if mu_lo <= STRICT_TOL {
        return (f64::INFINITY, f64::INFINITY);
    }
    let rho = (0.5 + (4.0 * alpha_max * alpha_max * phi_max * phi_max + 8.0 * mu_hi * mu_hi) / (mu_lo * mu_lo)).sqrt();
    let epsilon = (2.0 * beta_bar.abs() / mu_lo).sqrt();
    (rho, epsilon)
}

/// Evaluates μ̲ and μ̄ over the given per-edge slope samples and derives ρ, ε.
pub fn gain_bound(
    g: &Graph,
    cert: &NetworkCertificate,
    samples: &[Vec<f64>],
    exec: Execution,
) -> Result<GainBound, CertError> {
    if samples.is_empty() {
        return Err(CertError::NoSamples);
    }
    let p = cert.edge_count();
    for (si, eta) in samples.iter().enumerate() {
        if eta.len() != p {
            return Err(CertError::SampleLength { sample: si, expected: p, got: eta.len() });
        }
        for (k, (&value, s)) in eta.iter().zip(&cert.sectors).enumerate() {
            if !s.contains(value, 1e-12 * s.upper) {
                return Err(CertError::SampleOutsideSector {
                    sample: si,
                    edge: k,
                    value,
                    lower: s.lower,
                    upper: s.upper,
                });
            }
        }
    }

    let PsiQ { psi, q, q_min_eigenvalue } = assemble_psi_q(g, cert)?;
    let m = dissipation_matrices(g, cert);
    let shift = &m.gamma - &m.phi_bar;

    let per_sample = exec::map(samples, exec, |eta| -> Result<(f64, f64), EigenError> {
        let mut hm = psi.clone();
        for a in 0..p {
            for b in 0..p {
                hm[(a, b)] *= eta[a] * eta[b];
            }
        }
        let n_mat = &hm + &shift;
        Ok((eigen::min_eigenvalue(&n_mat)?, eigen::max_eigenvalue(&hm)?))
    });
    let mut mu_lo = f64::INFINITY;
    let mut mu_hi = f64::NEG_INFINITY;
    for r in per_sample {
        let (lo, hi) = r?;
        mu_lo = mu_lo.min(lo);
        mu_hi = mu_hi.max(hi);
    }

    let phi_max = cert.stats.common.iter().map(|&c| 2.0 + c as f64).fold(f64::NEG_INFINITY, f64::max);
    let alpha_max = cert.sectors.iter().map(|s| s.upper).fold(f64::NEG_INFINITY, f64::max);
    let beta_bar = cert.beta_bar();
    let (rho, epsilon) = rho_epsilon(alpha_max, phi_max, mu_lo, mu_hi, beta_bar);
    Ok(GainBound {
        psi,
        q,
        q_min_eigenvalue,
        mu_lo,
        mu_hi,
        phi_max,
        alpha_max,
        beta_bar,
        rho,
        epsilon,
        estimate: if cert.all_point_sectors() { BoundEstimate::Exact } else { BoundEstimate::SampledEstimate },
        samples: samples.len(),
    })
}

/// Largest edge count for which every vertex of the sector box is sampled.
pub const MAX_VERTEX_EDGES: usize = 12;

/// Slope samples over the sector box: the midpoint, then either all `2^p`
/// vertices (`p <= 12`) or the all-lower and all-upper corners, then
/// `random_extra` seeded uniform draws. Point sectors collapse to a single
/// sample.
pub fn sector_box_samples(sectors: &[SectorBound], random_extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mid: Vec<f64> = sectors.iter().map(SectorBound::midpoint).collect();
    if sectors.iter().all(SectorBound::is_point) {
        return vec![mid];
    }
    let p = sectors.len();
    let mut out = vec![mid];
    if p <= MAX_VERTEX_EDGES {
        for mask in 0u32..(1 << p) {
            out.push(
                sectors.iter().enumerate().map(|(k, s)| if mask >> k & 1 == 1 { s.upper } else { s.lower }).collect(),
            );
        }
    } else {
        out.push(sectors.iter().map(|s| s.lower).collect());
        out.push(sectors.iter().map(|s| s.upper).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_extra {
        out.push(sectors.iter().map(|s| rng.random_range(s.lower..=s.upper)).collect());
    }
    out
}
