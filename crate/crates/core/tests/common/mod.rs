#![allow(dead_code)]

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparse_polar::graph::Graph;
use sparse_polar::linalg::{CMatrix, CVector, C64};
use sparse_polar::measurement::{EdgePhase, RelativePhaseEstimate};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut TestRng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

pub fn random_vector(rng: &mut TestRng, len: usize, var: f64) -> CVector {
    CVector::new((0..len).map(|_| cn(rng, var)).collect()).unwrap()
}

pub fn random_matrix(rng: &mut TestRng, rows: usize, cols: usize, var: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cn(rng, var))
}

pub fn unit_phase(rng: &mut TestRng) -> C64 {
    C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// A random path through all vertices plus independent extra edges.
pub fn random_connected_graph(rng: &mut TestRng, n: usize, p: f64) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = order
        .windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Relative phases `conj(g_i) g_j` on every edge, times an optional
/// per-edge perturbation.
pub fn relative_phases(
    g: &Graph,
    phases: &[C64],
    perturb: impl Fn(usize) -> C64,
) -> RelativePhaseEstimate {
    let edges = g.edges().to_vec();
    let est = edges
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| EdgePhase::from_product(phases[i].conj() * phases[j] * perturb(e)))
        .collect();
    RelativePhaseEstimate::new(edges, est)
}
