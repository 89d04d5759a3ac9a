use super::{Graph, GraphError, Result};
use crate::linalg::{hermitian_eigen, hermitian_extreme_eigenpair, CMatrix, Which, C64};

/// Second-smallest normalized Laplacian eigenvalue, with connectivity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGap {
    pub lambda2: f64,
    pub connected: bool,
}

/// A sweep cut picked by [`spectral_clustering`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCut {
    /// Local vertex indices of the returned side, sorted.
    pub vertices: Vec<usize>,
    /// `E(S, S^c) / min(vol S, vol S^c)`.
    pub conductance: f64,
}

/// `L = I - D^{-1/2} A D^{-1/2}`.
pub fn normalized_laplacian(g: &Graph) -> Result<CMatrix> {
    let n = g.vertex_count();
    if n == 0 {
        return Err(GraphError::InvalidParameter("empty graph".into()));
    }
    if let Some(&v) = g.isolated_vertices().first() {
        return Err(GraphError::IsolatedVertex(v));
    }
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / (d as f64).sqrt())
        .collect();
    let mut l = CMatrix::identity(n);
    for &(i, j) in g.edges() {
        let w = C64::new(-inv_sqrt[i] * inv_sqrt[j], 0.0);
        l[(i, j)] = w;
        l[(j, i)] = w;
    }
    Ok(l)
}

/// All normalized Laplacian eigenvalues, ascending.
pub fn laplacian_spectrum(g: &Graph) -> Result<Vec<f64>> {
    let l = normalized_laplacian(g)?;
    Ok(hermitian_eigen(&l)?.values)
}

/// Disconnected graphs (including ones with isolated vertices) report
/// `lambda2 = 0` with `connected = false`.
pub fn spectral_gap(g: &Graph) -> Result<SpectralGap> {
    if g.vertex_count() < 2 {
        return Err(GraphError::InvalidParameter(format!(
            "spectral gap needs at least 2 vertices, got {}",
            g.vertex_count()
        )));
    }
    if !g.is_connected() {
        return Ok(SpectralGap {
            lambda2: 0.0,
            connected: false,
        });
    }
    let l = normalized_laplacian(g)?;
    let pair = hermitian_extreme_eigenpair(&l, Which::SecondSmallest)?;
    Ok(SpectralGap {
        lambda2: pair.value.clamp(0.0, 2.0),
        connected: true,
    })
}

/// Sweep-cut spectral clustering.
///
/// Vertices are ordered by `D^{-1/2} u` (u the second eigenvector of the
/// normalized Laplacian, ties by index) and the prefix `S_i`, `1 <= i < n`,
/// of least conductance is chosen (ties by smallest `i`). The smaller of
/// `S_i` and its complement is returned; on equal sizes, `S_i`.
pub fn spectral_clustering(g: &Graph) -> Result<SweepCut> {
    let n = g.vertex_count();
    if n < 2 {
        return Err(GraphError::InvalidParameter(
            "spectral clustering needs at least 2 vertices".into(),
        ));
    }
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let l = normalized_laplacian(g)?;
    let u = hermitian_extreme_eigenpair(&l, Which::SecondSmallest)?.vector;

    // Rotate the (real up to a global phase) eigenvector onto the real axis.
    let pivot = u
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(C64::new(1.0, 0.0));
    let align = if pivot.norm() > 0.0 {
        pivot.conj() / pivot.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let degrees = g.degrees();
    let score: Vec<f64> = (0..n)
        .map(|v| (u[v] * align).re / (degrees[v] as f64).sqrt())
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));

    let total_volume: usize = degrees.iter().sum();
    let mut in_set = vec![false; n];
    let mut cut: i64 = 0;
    let mut volume = 0usize;
    let mut best = (f64::INFINITY, 0usize);
    for (i, &v) in order.iter().enumerate().take(n - 1) {
        let inside = g.neighbors(v).iter().filter(|&&w| in_set[w]).count() as i64;
        cut += degrees[v] as i64 - 2 * inside;
        volume += degrees[v];
        in_set[v] = true;
        let denom = volume.min(total_volume - volume) as f64;
        let h = cut as f64 / denom;
        if h < best.0 {
            best = (h, i + 1);
        }
    }
    let (conductance, size) = best;
    let mut vertices: Vec<usize> = if n - size < size {
        order[size..].to_vec()
    } else {
        order[..size].to_vec()
    };
    vertices.sort_unstable();
    Ok(SweepCut {
        vertices,
        conductance,
    })
}

/// Repeatedly strips the spectral-clustering set from the largest connected
/// component until its spectral gap reaches `mu`.
///
/// Isolated vertices and smaller components are dropped before every gap
/// evaluation. The returned graph carries labels back to `g`'s vertex ids.
pub fn prune_for_connectivity(g: &Graph, mu: f64) -> Result<Graph> {
    if !(mu > 0.0 && mu <= 2.0) {
        return Err(GraphError::InvalidParameter(format!(
            "mu = {mu} outside (0, 2]"
        )));
    }
    let mut h = g.clone();
    let mut best_gap = 0.0_f64;
    loop {
        h = h.without_isolated().largest_component();
        if h.vertex_count() < 2 {
            return Err(GraphError::PruningFailed { best_gap, mu });
        }
        let gap = spectral_gap(&h)?.lambda2;
        best_gap = best_gap.max(gap);
        if gap >= mu {
            return Ok(h);
        }
        let cut = spectral_clustering(&h)?;
        log::debug!(
            "connectivity pruning: gap {gap:.4} < {mu:.4}, removing {} of {} vertices",
            cut.vertices.len(),
            h.vertex_count()
        );
        h = h.remove_vertices(&cut.vertices);
    }
}
