use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;

use super::{spectral_gap, Graph, GraphError, Result};
use crate::rng::{self, Rng, Stream};

const RESTART_CAP: usize = 1000;
const GAP_ATTEMPT_CAP: usize = 200;

/// Outcome of generating a graph that meets the design spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectralGapCertificate {
    pub lambda2: f64,
    pub degree: usize,
    /// Number of graphs drawn until one met the bound.
    pub attempts: usize,
}

/// `1 - (2 sqrt(d - 1) + epsilon) / d`.
pub fn ramanujan_bound(d: usize, epsilon: f64) -> f64 {
    let d = d as f64;
    1.0 - (2.0 * (d - 1.0).sqrt() + epsilon) / d
}

/// Uniformly-ish random simple `d`-regular graph on `n` vertices.
///
/// Stubs are paired at random, rejecting pairs that would form a loop or a
/// repeated edge and re-pairing only the rejected stubs; a dead end restarts
/// from scratch. For `d > (n - 1) / 2` the complement of an
/// `(n - 1 - d)`-regular sample is returned instead.
pub fn random_regular_graph(n: usize, d: usize, seed: u64) -> Result<Graph> {
    let mut rng = rng::stream(seed, Stream::Graph, 0);
    sample_regular(n, d, &mut rng)
}

pub(crate) fn sample_regular(n: usize, d: usize, rng: &mut Rng) -> Result<Graph> {
    if d >= n {
        return Err(GraphError::InvalidParameter(format!(
            "degree {d} must be below vertex count {n}"
        )));
    }
    if !(n * d).is_multiple_of(2) {
        return Err(GraphError::InvalidParameter(format!(
            "n * d = {} is odd",
            n * d
        )));
    }
    if 2 * d > n - 1 {
        return Ok(sample_regular(n, n - 1 - d, rng)?.complement());
    }
    if d == 0 {
        return Graph::new(n, Vec::new());
    }
    for _ in 0..RESTART_CAP {
        if let Some(edges) = try_pairing(n, d, rng) {
            return Graph::new(n, edges);
        }
    }
    Err(GraphError::GenerationFailed {
        n,
        d,
        attempts: RESTART_CAP,
    })
}

fn try_pairing(n: usize, d: usize, rng: &mut Rng) -> Option<Vec<(usize, usize)>> {
    let mut edges = Vec::with_capacity(n * d / 2);
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(n * d / 2);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    while !stubs.is_empty() {
        let mut leftover: BTreeMap<usize, usize> = BTreeMap::new();
        stubs.shuffle(rng);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a != b && present.insert((a, b)) {
                edges.push((a, b));
            } else {
                *leftover.entry(a).or_default() += 1;
                *leftover.entry(b).or_default() += 1;
            }
        }
        if !leftover.is_empty() && !can_extend(&leftover, &present) {
            return None;
        }
        stubs = leftover
            .iter()
            .flat_map(|(&v, &c)| std::iter::repeat_n(v, c))
            .collect();
    }
    Some(edges)
}

/// Whether some pair of distinct vertices with free stubs is still unconnected.
fn can_extend(leftover: &BTreeMap<usize, usize>, present: &HashSet<(usize, usize)>) -> bool {
    let vs: Vec<usize> = leftover.keys().copied().collect();
    vs.iter()
        .enumerate()
        .any(|(i, &a)| vs[i + 1..].iter().any(|&b| !present.contains(&(a, b))))
}

/// Regenerates until the normalized-Laplacian gap reaches
/// [`ramanujan_bound`]`(d, epsilon)`, drawing each candidate from a fresh
/// sub-stream of `seed`.
pub fn random_regular_graph_with_gap(
    n: usize,
    d: usize,
    epsilon: f64,
    seed: u64,
) -> Result<(Graph, SpectralGapCertificate)> {
    let required = ramanujan_bound(d, epsilon);
    let mut best = f64::NEG_INFINITY;
    for attempt in 0..GAP_ATTEMPT_CAP {
        let mut rng = rng::stream(seed, Stream::Graph, attempt as u64);
        let g = sample_regular(n, d, &mut rng)?;
        let gap = spectral_gap(&g)?;
        let lambda2 = if gap.connected { gap.lambda2 } else { 0.0 };
        if lambda2 >= required {
            return Ok((
                g,
                SpectralGapCertificate {
                    lambda2,
                    degree: d,
                    attempts: attempt + 1,
                },
            ));
        }
        best = best.max(lambda2);
    }
    Err(GraphError::GapNotReached {
        best,
        required,
        attempts: GAP_ATTEMPT_CAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_regular(g: &Graph, d: usize) {
        assert!(
            g.degrees().iter().all(|&x| x == d),
            "degrees {:?}",
            g.degrees()
        );
    }

    #[test]
    fn n4_d3_is_k4() {
        for seed in 0..5 {
            let g = random_regular_graph(4, 3, seed).unwrap();
            assert_eq!(g, Graph::complete(4));
        }
    }

    #[test]
    fn n6_d2_is_cycle_union() {
        for seed in 0..10 {
            let g = random_regular_graph(6, 2, seed).unwrap();
            assert_regular(&g, 2);
            assert_eq!(g.edge_count(), 6);
            for comp in g.connected_components() {
                assert!(comp.len() >= 3);
            }
        }
    }

    #[test]
    fn n200_d12_seed7() {
        let g = random_regular_graph(200, 12, 7).unwrap();
        assert_regular(&g, 12);
        assert_eq!(g.edge_count(), 1200);
        assert_eq!(g, random_regular_graph(200, 12, 7).unwrap());
    }

    #[test]
    fn dense_degrees_via_complement() {
        let g = random_regular_graph(120, 100, 3).unwrap();
        assert_regular(&g, 100);
        assert_eq!(g.edge_count(), 6000);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            random_regular_graph(5, 3, 0),
            Err(GraphError::InvalidParameter(_))
        ));
        assert!(matches!(
            random_regular_graph(4, 4, 0),
            Err(GraphError::InvalidParameter(_))
        ));
    }

    #[test]
    fn gap_certificate_meets_bound() {
        let (g, cert) = random_regular_graph_with_gap(60, 8, 0.2, 11).unwrap();
        assert_regular(&g, 8);
        assert!(cert.lambda2 >= ramanujan_bound(8, 0.2));
        assert!(cert.attempts >= 1);
    }
}
