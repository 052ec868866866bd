//! Undirected weighted communication graphs and the Laplacian algebra used by
//! every controller: `L_q = L ⊗ I_q` applied blockwise, the algebraic
//! connectivity `λ₂(L)`, and the split of a stacked vector into its consensus
//! and disagreement components.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, GneError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    agents: usize,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct CommGraph {
    agents: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<GraphRecord> for CommGraph {
    type Error = GneError;

    fn try_from(r: GraphRecord) -> Result<Self> {
        CommGraph::new(r.agents, r.edges)
    }
}

impl From<CommGraph> for GraphRecord {
    fn from(g: CommGraph) -> Self {
        GraphRecord {
            agents: g.agents,
            edges: g.edges,
        }
    }
}

impl CommGraph {
    /// Builds a graph from unordered weighted pairs. Self-loops, duplicate
    /// pairs, out-of-range endpoints and nonpositive weights are rejected.
    pub fn new(agents: usize, edges: Vec<Edge>) -> Result<Self> {
        if agents == 0 {
            return Err(GneError::InvalidGraph(
                "graph needs at least one agent".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut neighbors = vec![Vec::new(); agents];
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= agents || e.j >= agents {
                return Err(GneError::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {agents} agents",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(GneError::InvalidGraph(format!(
                    "self-loop at agent {}",
                    e.i
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GneError::InvalidGraph(format!(
                    "edge ({}, {}) has nonpositive weight {}",
                    e.i, e.j, e.weight
                )));
            }
            let (a, b) = (e.i.min(e.j), e.i.max(e.j));
            if !seen.insert((a, b)) {
                return Err(GneError::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            neighbors[a].push((b, e.weight));
            neighbors[b].push((a, e.weight));
            normalized.push(Edge {
                i: a,
                j: b,
                weight: e.weight,
            });
        }
        Ok(CommGraph {
            agents,
            edges: normalized,
            neighbors,
        })
    }

    pub fn unweighted(agents: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            agents,
            pairs
                .iter()
                .map(|&(i, j)| Edge { i, j, weight: 1.0 })
                .collect(),
        )
    }

    pub fn complete(agents: usize) -> Self {
        let pairs: Vec<_> = (0..agents)
            .flat_map(|i| (i + 1..agents).map(move |j| (i, j)))
            .collect();
        Self::unweighted(agents, &pairs).expect("complete graph is valid")
    }

    pub fn path(agents: usize) -> Self {
        let pairs: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        Self::unweighted(agents, &pairs).expect("path graph is valid")
    }

    pub fn ring(agents: usize) -> Self {
        let mut pairs: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        if agents > 2 {
            pairs.push((agents - 1, 0));
        }
        Self::unweighted(agents, &pairs).expect("ring graph is valid")
    }

    /// Erdős–Rényi sample with edge probability `p`, redrawn until connected.
    pub fn random_connected(agents: usize, p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GneError::InvalidParameter(format!(
                "edge probability {p} not in (0, 1]"
            )));
        }
        if agents == 1 {
            return Self::new(1, Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let mut pairs = Vec::new();
            for i in 0..agents {
                for j in i + 1..agents {
                    if rng.gen::<f64>() < p {
                        pairs.push((i, j));
                    }
                }
            }
            let g = Self::unweighted(agents, &pairs)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GneError::InvalidGraph(format!(
            "no connected sample for N = {agents}, p = {p}"
        )))
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(GneError::Disconnected)
        }
    }

    /// `L = D − W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.agents, self.agents);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.weight;
            l[(e.j, e.i)] -= e.weight;
            l[(e.i, e.i)] += e.weight;
            l[(e.j, e.j)] += e.weight;
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = SymmetricEigen::new(self.laplacian())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    /// `λ₂(L)`, clamped at zero against roundoff.
    pub fn algebraic_connectivity(&self) -> Result<f64> {
        if self.agents < 2 {
            return Err(GneError::InvalidGraph(
                "algebraic connectivity needs at least two agents".into(),
            ));
        }
        Ok(self.laplacian_spectrum()[1].max(0.0))
    }

    pub fn max_laplacian_eigenvalue(&self) -> f64 {
        self.laplacian_spectrum()
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
    }

    /// Moore–Penrose pseudo-inverse of `L` via its eigendecomposition.
    pub fn laplacian_pinv(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.laplacian());
        let n = self.agents;
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()))
            .max(1.0);
        let mut pinv = DMatrix::zeros(n, n);
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            if lam.abs() > 1e-10 * scale {
                let v = eig.eigenvectors.column(k);
                pinv += (v * v.transpose()) / lam;
            }
        }
        pinv
    }

    /// `(L ⊗ I_q) y` without forming the Kronecker product.
    pub fn apply_kron_laplacian(&self, q: usize, y: &[f64]) -> Result<Vec<f64>> {
        check_len("kron laplacian", self.agents * q, y.len())?;
        let mut out = vec![0.0; y.len()];
        self.kron_laplacian_into(q, y, &mut out);
        Ok(out)
    }

    /// Unchecked blockwise Laplacian; `out` is overwritten.
    pub fn kron_laplacian_into(&self, q: usize, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let (bi, bj) = (e.i * q, e.j * q);
            for r in 0..q {
                let d = e.weight * (y[bi + r] - y[bj + r]);
                out[bi + r] += d;
                out[bj + r] -= d;
            }
        }
    }
}

/// Splits `y ∈ R^{Nq}` into `P_q y` (every block equal to the block mean) and
/// the disagreement remainder.
pub fn consensus_split(q: usize, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 || !y.len().is_multiple_of(q) || y.is_empty() {
        return Err(GneError::DimensionMismatch {
            context: "consensus split",
            expected: q.max(1) * (y.len() / q.max(1)).max(1),
            got: y.len(),
        });
    }
    let mean = block_mean(q, y);
    let parallel: Vec<f64> = (0..y.len()).map(|k| mean[k % q]).collect();
    let perp = y.iter().zip(&parallel).map(|(a, b)| a - b).collect();
    Ok((parallel, perp))
}

/// `(1/N) Σ_i y_i` over the `N` blocks of length `q`.
pub fn block_mean(q: usize, y: &[f64]) -> Vec<f64> {
    let blocks = y.len() / q;
    let mut mean = vec![0.0; q];
    for chunk in y.chunks(q) {
        for (m, v) in mean.iter_mut().zip(chunk) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= blocks as f64);
    mean
}

/// `Σ_i y_i` over blocks of length `q`.
pub fn block_sum(q: usize, y: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; q];
    for chunk in y.chunks(q) {
        for (s, v) in sum.iter_mut().zip(chunk) {
            *s += v;
        }
    }
    sum
}

/// `‖P⊥_q y‖`.
pub fn disagreement_norm(q: usize, y: &[f64]) -> f64 {
    if q == 0 || y.is_empty() {
        return 0.0;
    }
    let mean = block_mean(q, y);
    y.iter()
        .enumerate()
        .map(|(k, v)| (v - mean[k % q]).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn laplacian_examples() {
        let k2 = CommGraph::complete(2);
        assert_eq!(
            k2.laplacian(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        let p3 = CommGraph::path(3);
        assert_eq!(
            p3.laplacian(),
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
        let empty = CommGraph::new(2, vec![]).unwrap();
        assert_eq!(empty.laplacian(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn algebraic_connectivity_examples() {
        assert!(close(
            CommGraph::complete(2).algebraic_connectivity().unwrap(),
            2.0,
            1e-12
        ));
        assert!(close(
            CommGraph::path(3).algebraic_connectivity().unwrap(),
            1.0,
            1e-12
        ));
        assert!(close(
            CommGraph::complete(5).algebraic_connectivity().unwrap(),
            5.0,
            1e-12
        ));
        assert!(CommGraph::complete(1).algebraic_connectivity().is_err());
        let split = CommGraph::new(
            4,
            vec![Edge {
                i: 0,
                j: 1,
                weight: 1.0,
            }],
        )
        .unwrap();
        assert!(close(split.algebraic_connectivity().unwrap(), 0.0, 1e-12));
        assert!(!split.is_connected());
    }

    #[test]
    fn kron_laplacian_examples() {
        let k2 = CommGraph::complete(2);
        assert_eq!(
            k2.apply_kron_laplacian(1, &[1.0, 2.0]).unwrap(),
            vec![-1.0, 1.0]
        );
        assert_eq!(
            k2.apply_kron_laplacian(2, &[1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![1.0, -1.0, -1.0, 1.0]
        );
        let g = CommGraph::random_connected(6, 0.5, 3).unwrap();
        let y: Vec<f64> = (0..18).map(|k| [0.3, -1.2, 4.0][k % 3]).collect();
        assert!(g
            .apply_kron_laplacian(3, &y)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-14));
        assert!(k2.apply_kron_laplacian(2, &[1.0]).is_err());
    }

    #[test]
    fn consensus_split_examples() {
        let (par, perp) = consensus_split(1, &[1.0, 3.0]).unwrap();
        assert_eq!(par, vec![2.0, 2.0]);
        assert_eq!(perp, vec![-1.0, 1.0]);
        let (_, perp) = consensus_split(2, &[1.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(perp, vec![0.0; 4]);
        let (par, _) = consensus_split(2, &[1.0, -2.0, -1.0, 2.0]).unwrap();
        assert_eq!(par, vec![0.0; 4]);
        assert!(consensus_split(2, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn weighted_laplacian_and_pinv() {
        let g = CommGraph::new(
            3,
            vec![
                Edge {
                    i: 0,
                    j: 1,
                    weight: 2.0,
                },
                Edge {
                    i: 1,
                    j: 2,
                    weight: 0.5,
                },
            ],
        )
        .unwrap();
        let l = g.laplacian();
        assert_eq!(l[(1, 1)], 2.5);
        let pinv = g.laplacian_pinv();
        // L L⁺ = I − 11ᵀ/N on a connected graph
        let prod = &l * &pinv;
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!(close(prod[(r, c)], expect, 1e-12));
            }
        }
    }

    #[test]
    fn invalid_graphs() {
        assert!(CommGraph::unweighted(2, &[(0, 0)]).is_err());
        assert!(CommGraph::unweighted(2, &[(0, 2)]).is_err());
        assert!(CommGraph::unweighted(3, &[(0, 1), (1, 0)]).is_err());
        assert!(CommGraph::new(
            2,
            vec![Edge {
                i: 0,
                j: 1,
                weight: -1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn random_graph_is_deterministic_and_connected() {
        let a = CommGraph::random_connected(8, 0.3, 11).unwrap();
        let b = CommGraph::random_connected(8, 0.3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
    }

    #[test]
    fn graph_json_roundtrip() {
        let text = r#"{"agents": 3, "edges": [{"i": 0, "j": 1}, {"i": 2, "j": 1, "weight": 2.0}]}"#;
        let g: CommGraph = serde_json::from_str(text).unwrap();
        assert_eq!(
            g.edges()[1],
            Edge {
                i: 1,
                j: 2,
                weight: 2.0
            }
        );
        let back: CommGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(
            serde_json::from_str::<CommGraph>(r#"{"agents": 2, "edges": [{"i": 0, "j": 0}]}"#)
                .is_err()
        );
    }
}
