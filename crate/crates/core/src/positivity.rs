//! Edge-local sufficient condition for DᵀΩD + Σ ≻ 0, with an eigenvalue
//! oracle for the same matrix.
//!
//! The edge condition is Gershgorin's disc bound on the rows of DᵀΩD + Σ:
//! row `k` of edge `(i, j)` has diagonal `σ_k + μ_i + μ_j` and off-diagonal
//! mass `(r_i - 1)|μ_i| + (r_j - 1)|μ_j|`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::eigen::{self, EigenError};
use crate::graph::{Graph, IncidenceMatrix};

/// Slacks at or below this are treated as not strictly positive.
pub const STRICT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PositivityError {
    #[error("expected {expected} node weights, got {got}")]
    NodeWeights { expected: usize, got: usize },
    #[error("expected {expected} edge weights, got {got}")]
    EdgeWeights { expected: usize, got: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// The graph is disconnected; slacks are still reported.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConditionReport {
    pub slacks: Vec<f64>,
    pub all_positive: bool,
    pub connected: bool,
    pub verdict: Verdict,
}

fn check_dims(g: &Graph, mu: &[f64], sigma: &[f64]) -> Result<(), PositivityError> {
    if mu.len() != g.node_count() {
        return Err(PositivityError::NodeWeights { expected: g.node_count(), got: mu.len() });
    }
    if sigma.len() != g.edge_count() {
        return Err(PositivityError::EdgeWeights { expected: g.edge_count(), got: sigma.len() });
    }
    Ok(())
}

/// Per-edge slack `σ_k + μ_i + μ_j - (r_i - 1)|μ_i| - (r_j - 1)|μ_j|`.
pub fn edge_condition(g: &Graph, mu: &[f64], sigma: &[f64]) -> Result<EdgeConditionReport, PositivityError> {
    check_dims(g, mu, sigma)?;
    let slacks: Vec<f64> = g
        .edges()
        .iter()
        .zip(sigma)
        .map(|(&(i, j), &s)| {
            let ri = g.degree(i) as f64;
            let rj = g.degree(j) as f64;
            s + mu[i] + mu[j] - (ri - 1.0) * mu[i].abs() - (rj - 1.0) * mu[j].abs()
        })
        .collect();
    let all_positive = slacks.iter().all(|&s| s > STRICT_TOL);
    let connected = g.is_connected();
    let verdict = match (connected, all_positive) {
        (false, _) => Verdict::NotApplicable,
        (true, true) => Verdict::Holds,
        (true, false) => Verdict::Fails,
    };
    Ok(EdgeConditionReport { slacks, all_positive, connected, verdict })
}

/// DᵀΩD + Σ for an arbitrary incidence matrix (any orientation).
pub fn weighted_edge_gram(d: &IncidenceMatrix, mu: &[f64], sigma: &[f64]) -> DMatrix<f64> {
    let df = d.to_dmatrix();
    let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(mu));
    let mut m = df.transpose() * omega * &df;
    for (k, s) in sigma.iter().enumerate() {
        m[(k, k)] += s;
    }
    m
}

/// Smallest eigenvalue of DᵀΩD + Σ.
pub fn pd_oracle(g: &Graph, mu: &[f64], sigma: &[f64]) -> Result<f64, PositivityError> {
    check_dims(g, mu, sigma)?;
    let m = weighted_edge_gram(&g.incidence(), mu, sigma);
    Ok(eigen::min_eigenvalue(&m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_edge_cases() {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let r = edge_condition(&g, &[1.0, 1.0], &[0.1]).unwrap();
        assert_relative_eq!(r.slacks[0], 2.1, epsilon = 1e-15);
        assert_eq!(r.verdict, Verdict::Holds);

        let r = edge_condition(&g, &[-1.0, -1.0], &[1.0]).unwrap();
        assert_relative_eq!(r.slacks[0], -1.0, epsilon = 1e-15);
        assert_eq!(r.verdict, Verdict::Fails);
        assert_relative_eq!(pd_oracle(&g, &[-1.0, -1.0], &[1.0]).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_case() {
        let g = Graph::complete(4).unwrap();
        let sigma = vec![1.0; g.edge_count()];
        let r = edge_condition(&g, &[0.0; 4], &sigma).unwrap();
        assert!(r.slacks.iter().all(|&s| s == 1.0));
        assert_relative_eq!(pd_oracle(&g, &[0.0; 4], &sigma).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_is_not_applicable() {
        let g = Graph::new(4, &[(1, 2), (3, 4)]).unwrap();
        let r = edge_condition(&g, &[1.0; 4], &[1.0, 1.0]).unwrap();
        assert!(r.all_positive);
        assert!(!r.connected);
        assert_eq!(r.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn dimension_mismatch() {
        let g = Graph::path(3).unwrap();
        assert_eq!(edge_condition(&g, &[1.0; 2], &[1.0; 2]), Err(PositivityError::NodeWeights { expected: 3, got: 2 }));
        assert_eq!(pd_oracle(&g, &[1.0; 3], &[1.0]), Err(PositivityError::EdgeWeights { expected: 2, got: 1 }));
    }

    #[test]
    fn orientation_does_not_change_the_spectrum() {
        let g = Graph::complete(5).unwrap();
        let mu = [0.3, -0.7, 1.2, 0.0, -0.1];
        let sigma: Vec<f64> = (0..10).map(|k| 0.2 * k as f64).collect();
        let d = g.incidence();
        let flipped = d.with_flipped(&[0, 3, 7]);
        assert_eq!(d.laplacian(), flipped.laplacian());
        let a = eigen::symmetric_eigenvalues(&weighted_edge_gram(&d, &mu, &sigma)).unwrap();
        let b = eigen::symmetric_eigenvalues(&weighted_edge_gram(&flipped, &mu, &sigma)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }
}
