//! Undirected simple graphs, random regular generation and the spectral
//! routines used for pruning.

mod generate;
mod spectral;

pub use generate::{
    ramanujan_bound, random_regular_graph, random_regular_graph_with_gap, SpectralGapCertificate,
};
pub use spectral::{
    laplacian_spectrum, normalized_laplacian, prune_for_connectivity, spectral_clustering,
    spectral_gap, SpectralGap, SweepCut,
};

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) has an endpoint outside 0..{2}")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("vertex {0} is isolated")]
    IsolatedVertex(usize),
    #[error("graph is disconnected; split it into components first")]
    Disconnected,
    #[error("no simple {d}-regular graph on {n} vertices after {attempts} attempts")]
    GenerationFailed { n: usize, d: usize, attempts: usize },
    #[error("spectral gap {best:.4} below required {required:.4} after {attempts} graphs")]
    GapNotReached {
        best: f64,
        required: f64,
        attempts: usize,
    },
    #[error(
        "connectivity pruning exhausted the graph; best gap reached {best_gap:.4} (wanted {mu:.4})"
    )]
    PruningFailed { best_gap: f64, mu: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Simple undirected graph. Edges are stored as `(i, j)` with `i < j`,
/// sorted lexicographically.
///
/// Subgraphs remember the vertex ids of the graph they were cut from (see
/// [`Graph::original_id`]), so pruning stages can be chained without losing
/// track of which measurement each vertex belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphJson> for Graph {
    type Error = GraphError;
    fn try_from(value: GraphJson) -> Result<Self> {
        Graph::new(
            value.n,
            value.edges.into_iter().map(|[i, j]| (i, j)).collect(),
        )
    }
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        GraphJson {
            n: g.n,
            edges: g.edges.into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut canonical = Vec::with_capacity(edges.len());
        let mut seen = HashSet::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::EndpointOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a, b));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            canonical.push(e);
        }
        canonical.sort_unstable();
        Ok(Self::from_canonical(n, canonical, None))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>, labels: Option<Vec<usize>>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Self {
            n,
            edges,
            labels,
            adjacency,
        }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::from_canonical(n, edges, None)
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)).collect()).expect("cycle is simple")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect()).expect("path is simple")
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Id of local vertex `v` in the graph this one was derived from.
    pub fn original_id(&self, v: usize) -> usize {
        self.labels.as_ref().map_or(v, |l| l[v])
    }

    pub fn original_ids(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.original_id(v)).collect()
    }

    /// Local index of the vertex whose original id is `id`.
    pub fn local_index(&self, id: usize) -> Option<usize> {
        match &self.labels {
            None => (id < self.n).then_some(id),
            Some(l) => l.binary_search(&id).ok(),
        }
    }

    /// Induced subgraph on the given local vertices. Labels compose, so the
    /// result still maps back to the root graph.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Graph {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut position = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            position[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| position[*i] != usize::MAX && position[*j] != usize::MAX)
            .map(|&(i, j)| (position[i], position[j]))
            .collect();
        let labels = keep.iter().map(|&v| self.original_id(v)).collect();
        Graph::from_canonical(keep.len(), edges, Some(labels))
    }

    pub fn remove_vertices(&self, remove: &[usize]) -> Graph {
        let mut drop = vec![false; self.n];
        for &v in remove {
            drop[v] = true;
        }
        let keep: Vec<usize> = (0..self.n).filter(|&v| !drop[v]).collect();
        self.induced_subgraph(&keep)
    }

    /// Connected components, largest first (ties by smallest vertex).
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        members.push(w);
                        queue.push_back(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.connected_components().len() == 1
    }

    pub fn largest_component(&self) -> Graph {
        let comps = self.connected_components();
        match comps.first() {
            Some(c) if c.len() < self.n => self.induced_subgraph(c),
            _ => self.clone(),
        }
    }

    pub fn isolated_vertices(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&v| self.adjacency[v].is_empty())
            .collect()
    }

    pub fn without_isolated(&self) -> Graph {
        let isolated = self.isolated_vertices();
        if isolated.is_empty() {
            self.clone()
        } else {
            self.remove_vertices(&isolated)
        }
    }

    /// Complement graph on the same vertex set (labels are not carried over).
    pub fn complement(&self) -> Graph {
        let edges = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.has_edge(i, j))
            .collect();
        Graph::from_canonical(self.n, edges, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(Graph::new(3, vec![(1, 1)]), Err(GraphError::SelfLoop(1, 1)));
        assert_eq!(
            Graph::new(3, vec![(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            Graph::new(2, vec![(0, 2)]),
            Err(GraphError::EndpointOutOfRange(0, 2, 2))
        );
    }

    #[test]
    fn canonical_orientation() {
        let g = Graph::new(3, vec![(2, 0), (1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
    }

    #[test]
    fn induced_subgraph_keeps_labels() {
        let g = Graph::cycle(5);
        let h = g.remove_vertices(&[0]);
        assert_eq!(h.original_ids(), vec![1, 2, 3, 4]);
        assert_eq!(h.edge_count(), 3);
        let k = h.remove_vertices(&[0]);
        assert_eq!(k.original_ids(), vec![2, 3, 4]);
        assert_eq!(k.local_index(3), Some(1));
        assert_eq!(k.local_index(1), None);
    }

    #[test]
    fn components_sorted_by_size() {
        let g = Graph::new(6, vec![(0, 1), (2, 3), (3, 4)]).unwrap();
        let comps = g.connected_components();
        assert_eq!(comps, vec![vec![2, 3, 4], vec![0, 1], vec![5]]);
        assert_eq!(g.largest_component().original_ids(), vec![2, 3, 4]);
        assert!(!g.is_connected());
    }

    #[test]
    fn json_shape() {
        let g = Graph::path(3);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":3,"edges":[[0,1],[1,2]]}"#);
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":2,"edges":[[0,0]]}"#).is_err());
    }

    #[test]
    fn complement_of_cycle4_is_matching() {
        let c = Graph::cycle(4).complement();
        assert_eq!(c.edges(), &[(0, 2), (1, 3)]);
    }
}
