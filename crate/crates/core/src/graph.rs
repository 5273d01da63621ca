//! Undirected simple graphs with a canonical orientation.
//!
//! Nodes are labelled `1..=n` at the API boundary (JSON, CSV, error
//! messages) and indexed `0..n` internally. Every edge is stored as
//! `(lo, hi)` with `lo < hi`, edges are sorted lexicographically, and the
//! incidence matrix puts `+1` on the lower endpoint.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::matrix_csv;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    NoNodes,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    Duplicate(usize, usize),
    #[error("edge {i}-{j} references a node outside 1..={n}")]
    OutOfRange { i: usize, j: usize, n: usize },
}

/// JSON form of a graph: `{"n": 5, "edges": [[1,2], ...]}` with 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
    incident: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 1-based unordered pairs.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoNodes);
        }
        let mut set = BTreeSet::new();
        for &(i, j) in pairs {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(GraphError::OutOfRange { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            let e = (i.min(j) - 1, i.max(j) - 1);
            if !set.insert(e) {
                return Err(GraphError::Duplicate(i, j));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbours = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            neighbours[i].push(j);
            neighbours[j].push(i);
            incident[i].push(k);
            incident[j].push(k);
        }
        for nb in &mut neighbours {
            nb.sort_unstable();
        }
        Ok(Graph { n, edges, neighbours, incident })
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let pairs: Vec<_> = (1..=n).flat_map(|i| ((i + 1)..=n).map(move |j| (i, j))).collect();
        Graph::new(n, &pairs)
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        let pairs: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        Graph::new(n, &pairs)
    }

    /// Seeded Erdős–Rényi G(n, prob).
    pub fn erdos_renyi<R: Rng>(n: usize, prob: f64, rng: &mut R) -> Result<Self, GraphError> {
        let mut pairs = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                if rng.random::<f64>() < prob {
                    pairs.push((i, j));
                }
            }
        }
        Graph::new(n, &pairs)
    }

    /// Redraws G(n, prob) until the sample is connected. `n >= 2` and
    /// `prob > 0` are required for termination.
    pub fn random_connected<R: Rng>(n: usize, prob: f64, rng: &mut R) -> Result<Self, GraphError> {
        assert!(n >= 2 && prob > 0.0);
        loop {
            let g = Graph::erdos_renyi(n, prob, rng)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// 0-based `(lo, hi)` endpoints in edge order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, node: usize) -> &[usize] {
        &self.neighbours[node]
    }

    /// Indices of the edges touching `node`.
    pub fn incident_edges(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbours[node].len()
    }

    /// Index of the edge joining two 0-based nodes, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).ok()
    }

    /// `"i-j"` with 1-based labels.
    pub fn edge_label(&self, k: usize) -> String {
        let (i, j) = self.edges[k];
        format!("{}-{}", i + 1, j + 1)
    }

    pub fn edge_labels(&self) -> Vec<String> {
        (0..self.edge_count()).map(|k| self.edge_label(k)).collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbours[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec { n: self.n, edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect() }
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        let p = self.edge_count();
        let mut entries = vec![0i8; self.n * p];
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            entries[i * p + k] = 1;
            entries[j * p + k] = -1;
        }
        IncidenceMatrix { n: self.n, p, entries }
    }

    pub fn edge_stats(&self) -> EdgeStats {
        let degree: Vec<usize> = (0..self.n).map(|i| self.degree(i)).collect();
        let mut common = Vec::with_capacity(self.edge_count());
        let mut exclusive = Vec::with_capacity(self.edge_count());
        for &(i, j) in &self.edges {
            let ni: BTreeSet<usize> = self.neighbours[i].iter().copied().collect();
            let nj: BTreeSet<usize> = self.neighbours[j].iter().copied().collect();
            let shared = ni.intersection(&nj).count();
            let only_i = ni.iter().filter(|&&l| l != j && !nj.contains(&l)).count();
            let only_j = nj.iter().filter(|&&l| l != i && !ni.contains(&l)).count();
            let by_sets = only_i + only_j;
            assert_eq!(
                by_sets + 2 * shared + 2,
                degree[i] + degree[j],
                "exclusive-neighbour count disagrees with r_i + r_j - 2 r_ij - 2 on edge ({}, {})",
                i + 1,
                j + 1
            );
            common.push(shared);
            exclusive.push(by_sets);
        }
        EdgeStats { edges: self.edges.clone(), degree, common, exclusive }
    }
}

impl TryFrom<GraphSpec> for Graph {
    type Error = GraphError;

    fn try_from(spec: GraphSpec) -> Result<Self, GraphError> {
        let pairs: Vec<_> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(spec.n, &pairs)
    }
}

/// Node-by-edge incidence matrix with entries in {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    n: usize,
    p: usize,
    entries: Vec<i8>,
}

impl IncidenceMatrix {
    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    pub fn get(&self, node: usize, edge: usize) -> i8 {
        self.entries[node * self.p + edge]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p, |i, k| f64::from(self.get(i, k)))
    }

    /// Copy with the orientation of the listed edges reversed. The canonical
    /// orientation is what the rest of the crate uses; this exists so callers
    /// can check that results do not depend on it.
    pub fn with_flipped(&self, edges: &[usize]) -> Self {
        let mut out = self.clone();
        for &k in edges {
            for i in 0..self.n {
                out.entries[i * self.p + k] = -out.entries[i * self.p + k];
            }
        }
        out
    }

    /// D Dᵀ in exact integer arithmetic, row-major n×n.
    pub fn laplacian(&self) -> Vec<i64> {
        let mut l = vec![0i64; self.n * self.n];
        for a in 0..self.n {
            for b in 0..self.n {
                l[a * self.n + b] = (0..self.p).map(|k| i64::from(self.get(a, k)) * i64::from(self.get(b, k))).sum();
            }
        }
        l
    }

    /// CSV with one row per node and one column per edge label.
    pub fn to_csv(&self, g: &Graph) -> String {
        let rows: Vec<String> = (1..=self.n).map(|i| i.to_string()).collect();
        matrix_csv("node", &rows, &g.edge_labels(), &self.to_dmatrix())
    }
}

/// Per-node degrees and per-edge common / exclusive neighbour counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeStats {
    /// 0-based endpoints, same order as the graph.
    pub edges: Vec<(usize, usize)>,
    /// r_i
    pub degree: Vec<usize>,
    /// r̃_k
    pub common: Vec<usize>,
    /// r̄_k
    pub exclusive: Vec<usize>,
}

impl EdgeStats {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    /// r_i + r_j - 2 r̃_k - 2 for edge `k`.
    pub fn exclusive_closed_form(&self, k: usize) -> i64 {
        let (i, j) = self.edges[k];
        self.degree[i] as i64 + self.degree[j] as i64 - 2 * self.common[k] as i64 - 2
    }

    pub fn weight_matrices(&self) -> GraphWeightMatrices {
        GraphWeightMatrices {
            phi: self.common.iter().map(|&c| c as f64).collect(),
            phi_bar: self.exclusive.iter().map(|&c| 0.5 * c as f64).collect(),
        }
    }
}

/// Diagonals of Φ_G = diag(r̃) and Φ̄_G = diag(r̄)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWeightMatrices {
    pub phi: Vec<f64>,
    pub phi_bar: Vec<f64>,
}

impl GraphWeightMatrices {
    pub fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.phi.clone().into())
    }

    pub fn phi_bar_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.phi_bar.clone().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_graph() {
        let g = Graph::new(2, &[(2, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.edge_label(0), "1-2");
        let d = g.incidence();
        assert_eq!((d.get(0, 0), d.get(1, 0)), (1, -1));
        let s = g.edge_stats();
        assert_eq!((s.common[0], s.exclusive[0]), (0, 0));
        let w = s.weight_matrices();
        assert_eq!(w.phi, vec![0.0]);
        assert_eq!(w.phi_bar, vec![0.0]);
    }

    #[test]
    fn rejections_name_the_pair() {
        assert_eq!(Graph::new(3, &[(1, 2), (1, 2)]), Err(GraphError::Duplicate(1, 2)));
        assert_eq!(Graph::new(3, &[(1, 2), (2, 1)]), Err(GraphError::Duplicate(2, 1)));
        assert_eq!(Graph::new(3, &[(2, 2)]), Err(GraphError::SelfLoop(2)));
        assert_eq!(Graph::new(5, &[(1, 6)]), Err(GraphError::OutOfRange { i: 1, j: 6, n: 5 }));
        assert_eq!(Graph::new(0, &[]), Err(GraphError::NoNodes));
    }

    #[test]
    fn edges_are_sorted_lexicographically() {
        let g = Graph::new(4, &[(3, 4), (2, 1), (4, 1), (3, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (0, 3), (2, 3)]);
        assert_eq!(g.edge_index(3, 2), Some(3));
        assert_eq!(g.edge_index(1, 2), None);
    }

    #[test]
    fn triangle_incidence_columns() {
        let g = Graph::new(3, &[(1, 2), (1, 3), (2, 3)]).unwrap();
        let d = g.incidence();
        let cols: Vec<[i8; 3]> = (0..3).map(|k| [d.get(0, k), d.get(1, k), d.get(2, k)]).collect();
        assert_eq!(cols, vec![[1, -1, 0], [1, 0, -1], [0, 1, -1]]);
    }

    #[test]
    fn k5_laplacian_and_stats() {
        let g = Graph::complete(5).unwrap();
        assert_eq!(g.edge_count(), 10);
        let l = g.incidence().laplacian();
        for a in 0..5 {
            for b in 0..5 {
                let expect = if a == b { 4 } else { -1 };
                assert_eq!(l[a * 5 + b], expect);
            }
        }
        let s = g.edge_stats();
        assert!(s.degree.iter().all(|&r| r == 4));
        assert!(s.common.iter().all(|&r| r == 3));
        assert!(s.exclusive.iter().all(|&r| r == 0));
        let w = s.weight_matrices();
        assert!(w.phi.iter().all(|&x| x == 3.0));
        assert!(w.phi_bar.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn path_stats() {
        let g = Graph::path(3).unwrap();
        let s = g.edge_stats();
        assert_eq!(s.degree, vec![1, 2, 1]);
        assert_eq!(s.common, vec![0, 0]);
        assert_eq!(s.exclusive, vec![1, 1]);
        let w = s.weight_matrices();
        assert_eq!(w.phi, vec![0.0, 0.0]);
        assert_eq!(w.phi_bar, vec![0.5, 0.5]);
    }

    #[test]
    fn connectivity() {
        assert!(Graph::path(6).unwrap().is_connected());
        assert!(!Graph::new(4, &[(1, 2), (3, 4)]).unwrap().is_connected());
        assert!(Graph::new(1, &[]).unwrap().is_connected());
    }

    #[test]
    fn incidence_csv_layout() {
        let g = Graph::path(3).unwrap();
        let csv = g.incidence().to_csv(&g);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("node,1-2,2-3"));
        assert!(lines.next().unwrap().starts_with("1,1.0000000000000000e0,0.0"));
    }

    #[test]
    fn spec_round_trip() {
        let g = Graph::complete(4).unwrap();
        let json = serde_json::to_string(&g.to_spec()).unwrap();
        let back: GraphSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(Graph::try_from(back).unwrap(), g);
    }

    #[test]
    fn random_graph_identities() {
        // 1000 seeded graphs: incidence columns, Laplacian and the
        // exclusive-neighbour closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..=10);
            let prob = rng.random::<f64>();
            let g = Graph::erdos_renyi(n, prob, &mut rng).unwrap();
            let d = g.incidence();
            for k in 0..g.edge_count() {
                let col: Vec<i8> = (0..n).map(|i| d.get(i, k)).collect();
                assert_eq!(col.iter().filter(|&&x| x == 1).count(), 1);
                assert_eq!(col.iter().filter(|&&x| x == -1).count(), 1);
                assert_eq!(col.iter().map(|&x| i32::from(x)).sum::<i32>(), 0);
            }
            let l = d.laplacian();
            for a in 0..n {
                for b in 0..n {
                    let expect = if a == b {
                        g.degree(a) as i64
                    } else if g.edge_index(a, b).is_some() {
                        -1
                    } else {
                        0
                    };
                    assert_eq!(l[a * n + b], expect);
                }
            }
            let s = g.edge_stats();
            for k in 0..g.edge_count() {
                assert_eq!(s.exclusive[k] as i64, s.exclusive_closed_form(k));
            }
        }
    }

    proptest! {
        #[test]
        fn input_order_does_not_matter(mut pairs in proptest::collection::btree_set((1usize..8, 1usize..8), 0..20)) {
            pairs.retain(|(i, j)| i < j);
            let fwd: Vec<_> = pairs.iter().copied().collect();
            let rev: Vec<_> = pairs.iter().rev().map(|&(i, j)| (j, i)).collect();
            prop_assert_eq!(Graph::new(7, &fwd).unwrap(), Graph::new(7, &rev).unwrap());
        }
    }
}
