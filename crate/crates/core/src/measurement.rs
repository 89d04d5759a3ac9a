//! Measurement design, intensity simulation and polarization.
//!
//! A system consists of one Gaussian vector per graph vertex plus, for every
//! edge `(i, j)` with `i < j`, the three combined vectors
//! `phi_i + zeta^k phi_j` (`k = 0, 1, 2`, `zeta = e^{2 pi i / 3}`). The edge
//! vectors are derived data and are rebuilt on demand rather than stored.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{random_regular_graph_with_gap, Graph, GraphError, SpectralGapCertificate};
use crate::linalg::{inner, CMatrix, CVector, C64};
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, MeasurementError>;

/// `e^{2 pi i / 3}`.
pub fn zeta() -> C64 {
    C64::from_polar(1.0, 2.0 * PI / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct MeasurementSystem {
    ambient_dim: usize,
    graph: Graph,
    vertex_vectors: Vec<CVector>,
    zeta_powers: [C64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemJson {
    m: usize,
    graph: Graph,
    vertex_vectors: Vec<Vec<C64>>,
}

impl TryFrom<SystemJson> for MeasurementSystem {
    type Error = MeasurementError;
    fn try_from(v: SystemJson) -> Result<Self> {
        let vectors = v
            .vertex_vectors
            .into_iter()
            .map(|e| {
                CVector::new(e).map_err(|err| MeasurementError::InvalidParameter(err.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        MeasurementSystem::new(v.m, v.graph, vectors)
    }
}

impl From<MeasurementSystem> for SystemJson {
    fn from(s: MeasurementSystem) -> Self {
        SystemJson {
            m: s.ambient_dim,
            graph: s.graph,
            vertex_vectors: s
                .vertex_vectors
                .into_iter()
                .map(CVector::into_vec)
                .collect(),
        }
    }
}

impl MeasurementSystem {
    pub fn new(ambient_dim: usize, graph: Graph, vertex_vectors: Vec<CVector>) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(MeasurementError::InvalidParameter(
                "ambient dimension must be positive".into(),
            ));
        }
        if vertex_vectors.len() != graph.vertex_count() {
            return Err(MeasurementError::DimensionMismatch {
                expected: graph.vertex_count(),
                got: vertex_vectors.len(),
            });
        }
        if let Some(v) = vertex_vectors.iter().find(|v| v.len() != ambient_dim) {
            return Err(MeasurementError::DimensionMismatch {
                expected: ambient_dim,
                got: v.len(),
            });
        }
        let z = zeta();
        Ok(Self {
            ambient_dim,
            graph,
            vertex_vectors,
            zeta_powers: [C64::new(1.0, 0.0), z, z * z],
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn vertex_vectors(&self) -> &[CVector] {
        &self.vertex_vectors
    }

    pub fn vertex_vector(&self, v: usize) -> &CVector {
        &self.vertex_vectors[v]
    }

    /// `|V| + 3 |E|`.
    pub fn measurement_count(&self) -> usize {
        self.graph.vertex_count() + 3 * self.graph.edge_count()
    }

    /// `phi_i + zeta^k phi_j` for the `edge`-th oriented edge `(i, j)`.
    pub fn edge_vector(&self, edge: usize, k: usize) -> CVector {
        let mut buf = vec![C64::new(0.0, 0.0); self.ambient_dim];
        self.fill_edge_vector(edge, k, &mut buf);
        CVector::from_vec_unchecked(buf)
    }

    fn fill_edge_vector(&self, edge: usize, k: usize, buf: &mut [C64]) {
        let (i, j) = self.graph.edges()[edge];
        let zk = self.zeta_powers[k];
        let (pi, pj) = (
            self.vertex_vectors[i].as_slice(),
            self.vertex_vectors[j].as_slice(),
        );
        for ((b, a), c) in buf.iter_mut().zip(pi).zip(pj) {
            *b = a + zk * c;
        }
    }

    /// Matrix whose rows are `phi_v^H` for the given vertices, so that
    /// `(A x)_r = <x, phi_{vertices[r]}>`.
    pub fn vertex_adjoint_matrix(&self, vertices: &[usize]) -> CMatrix {
        CMatrix::from_fn(vertices.len(), self.ambient_dim, |r, c| {
            self.vertex_vectors[vertices[r]][c].conj()
        })
    }

    /// Noiseless `<x, phi_v>` for every vertex.
    pub fn vertex_measurements(&self, x: &CVector) -> Vec<C64> {
        self.vertex_vectors.iter().map(|phi| x.inner(phi)).collect()
    }
}

/// Draws vertex vectors with i.i.d. `CN(0, 1/m)` entries on a random
/// `d`-regular graph meeting the design spectral gap.
pub fn design_measurements(
    m: usize,
    n_vertices: usize,
    d: usize,
    epsilon: f64,
    seed: u64,
) -> Result<(MeasurementSystem, SpectralGapCertificate)> {
    if m == 0 {
        return Err(MeasurementError::InvalidParameter(
            "m must be at least 1".into(),
        ));
    }
    if d <= 2 || !d.is_multiple_of(2) || d >= n_vertices {
        return Err(MeasurementError::InvalidParameter(format!(
            "degree must be even with 2 < d < n_vertices (d = {d}, n_vertices = {n_vertices})"
        )));
    }
    let (graph, certificate) = random_regular_graph_with_gap(n_vertices, d, epsilon, seed)?;
    let mut rng = rng::stream(seed, Stream::Vectors, 0);
    let normal = Normal::new(0.0, (1.0 / (2.0 * m as f64)).sqrt()).expect("positive variance");
    let vectors = (0..n_vertices)
        .map(|_| {
            CVector::from_vec_unchecked(
                (0..m)
                    .map(|_| C64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                    .collect(),
            )
        })
        .collect();
    Ok((MeasurementSystem::new(m, graph, vectors)?, certificate))
}

/// Additive noise on the intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    /// Gaussian direction rescaled so that `||x||^2 / ||nu||_2 == snr`.
    Snr { snr: f64 },
    /// Explicit noise, vertices first, then three entries per edge.
    Explicit { values: Vec<f64> },
}

/// Noisy intensities `z = |<x, phi>|^2 + nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityData {
    pub vertex_intensities: Vec<f64>,
    pub edge_intensities: Vec<[f64; 3]>,
    /// Realized noise in the same order as [`NoiseSpec::Explicit`].
    pub noise: Vec<f64>,
}

impl IntensityData {
    pub fn noise_norm(&self) -> f64 {
        self.noise.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn intensity_measure(
    sys: &MeasurementSystem,
    x: &CVector,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<IntensityData> {
    if x.len() != sys.ambient_dim {
        return Err(MeasurementError::DimensionMismatch {
            expected: sys.ambient_dim,
            got: x.len(),
        });
    }
    let total = sys.measurement_count();
    let nu: Vec<f64> = match noise {
        NoiseSpec::None => vec![0.0; total],
        NoiseSpec::Snr { snr } => {
            if !(*snr > 0.0) {
                return Err(MeasurementError::InvalidParameter(format!(
                    "snr must be positive, got {snr}"
                )));
            }
            let target = x.norm_sqr() / snr;
            let mut rng = rng::stream(seed, Stream::Noise, 0);
            let raw: Vec<f64> = (0..total)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if target == 0.0 || raw_norm == 0.0 {
                vec![0.0; total]
            } else {
                raw.into_iter().map(|v| v * target / raw_norm).collect()
            }
        }
        NoiseSpec::Explicit { values } => {
            if values.len() != total {
                return Err(MeasurementError::DimensionMismatch {
                    expected: total,
                    got: values.len(),
                });
            }
            values.clone()
        }
    };

    let n = sys.graph.vertex_count();
    let vertex_intensities = (0..n)
        .map(|v| x.inner(&sys.vertex_vectors[v]).norm_sqr() + nu[v])
        .collect();
    let mut buf = vec![C64::new(0.0, 0.0); sys.ambient_dim];
    let edge_intensities = (0..sys.graph.edge_count())
        .map(|e| {
            let mut triple = [0.0; 3];
            for (k, z) in triple.iter_mut().enumerate() {
                sys.fill_edge_vector(e, k, &mut buf);
                *z = inner(x.as_slice(), &buf).norm_sqr() + nu[n + 3 * e + k];
            }
            triple
        })
        .collect();
    Ok(IntensityData {
        vertex_intensities,
        edge_intensities,
        noise: nu,
    })
}

/// `(1/3) sum_k zeta^k z_k`. On noiseless data for edge `(i, j)` this is
/// `conj(<x, phi_i>) <x, phi_j>`.
pub fn polarize(triple: [f64; 3], zeta: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let mut power = C64::new(1.0, 0.0);
    for z in triple {
        acc += power * z;
        power *= zeta;
    }
    acc / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePhase {
    /// Estimate of `conj(<x, phi_i>) <x, phi_j>`.
    pub product: C64,
    /// `product / |product|`, or 1 when the product vanishes.
    pub unit_phase: C64,
    /// `|product|`, the edge reliability weight.
    pub magnitude: f64,
    pub zero_magnitude: bool,
}

impl EdgePhase {
    pub fn from_product(product: C64) -> Self {
        let magnitude = product.norm();
        if magnitude > 0.0 {
            Self {
                product,
                unit_phase: product / magnitude,
                magnitude,
                zero_magnitude: false,
            }
        } else {
            Self {
                product,
                unit_phase: C64::new(1.0, 0.0),
                magnitude: 0.0,
                zero_magnitude: true,
            }
        }
    }

    /// The same estimate seen from the reversed orientation.
    pub fn reversed(&self) -> Self {
        Self {
            product: self.product.conj(),
            unit_phase: self.unit_phase.conj(),
            ..*self
        }
    }
}

/// Relative phase estimates for every oriented edge of a measurement graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePhaseEstimate {
    edges: Vec<(usize, usize)>,
    phases: Vec<EdgePhase>,
    index: HashMap<(usize, usize), usize>,
}

impl RelativePhaseEstimate {
    pub fn new(edges: Vec<(usize, usize)>, phases: Vec<EdgePhase>) -> Self {
        assert_eq!(edges.len(), phases.len());
        let index = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        Self {
            edges,
            phases,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn phases(&self) -> &[EdgePhase] {
        &self.phases
    }

    /// Estimate for the edge between vertex ids `i` and `j`, oriented `i -> j`.
    pub fn get(&self, i: usize, j: usize) -> Option<EdgePhase> {
        if let Some(&k) = self.index.get(&(i, j)) {
            Some(self.phases[k])
        } else {
            self.index.get(&(j, i)).map(|&k| self.phases[k].reversed())
        }
    }
}

pub fn relative_phases(
    sys: &MeasurementSystem,
    data: &IntensityData,
) -> Result<RelativePhaseEstimate> {
    let edges = sys.graph.edges();
    if data.edge_intensities.len() != edges.len() {
        return Err(MeasurementError::DimensionMismatch {
            expected: edges.len(),
            got: data.edge_intensities.len(),
        });
    }
    if data.vertex_intensities.len() != sys.graph.vertex_count() {
        return Err(MeasurementError::DimensionMismatch {
            expected: sys.graph.vertex_count(),
            got: data.vertex_intensities.len(),
        });
    }
    let z = zeta();
    let phases = data
        .edge_intensities
        .iter()
        .map(|&t| EdgePhase::from_product(polarize(t, z)))
        .collect();
    Ok(RelativePhaseEstimate::new(edges.to_vec(), phases))
}

/// Number of vertices a qualifying subset must contain: `ceil(alpha |V|)`.
fn subset_size(alpha: f64, n: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(MeasurementError::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 1]"
        )));
    }
    if n == 0 {
        return Err(MeasurementError::InvalidParameter(
            "no vertex vectors".into(),
        ));
    }
    // Guards against alpha * n landing a rounding error above an integer.
    let size = (alpha * n as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(size.min(n))
}

fn sorted_vertex_intensities(vertex_vectors: &[CVector], x: &CVector) -> Result<Vec<f64>> {
    if x.norm_sqr() == 0.0 {
        return Err(MeasurementError::InvalidParameter(
            "signal must be nonzero".into(),
        ));
    }
    if let Some(v) = vertex_vectors.iter().find(|v| v.len() != x.len()) {
        return Err(MeasurementError::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    let mut values: Vec<f64> = vertex_vectors
        .iter()
        .map(|phi| x.inner(phi).norm_sqr())
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `M * max_{|I| >= alpha |V|} min_{i in I} |<x, phi_i>|^2`: the
/// `ceil(alpha |V|)`-th largest vertex intensity, times `M`.
pub fn npusv(vertex_vectors: &[CVector], x: &CVector, alpha: f64) -> Result<f64> {
    let size = subset_size(alpha, vertex_vectors.len())?;
    let sorted = sorted_vertex_intensities(vertex_vectors, x)?;
    Ok(x.len() as f64 * sorted[sorted.len() - size])
}

/// `M * min_{|I| >= alpha |V|} max_{i in I} |<x, phi_i>|^2`: the
/// `ceil(alpha |V|)`-th smallest vertex intensity, times `M`.
pub fn npulv(vertex_vectors: &[CVector], x: &CVector, alpha: f64) -> Result<f64> {
    let size = subset_size(alpha, vertex_vectors.len())?;
    let sorted = sorted_vertex_intensities(vertex_vectors, x)?;
    Ok(x.len() as f64 * sorted[size - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Intensities `|a + zeta^{-k} b|^2` for vertex values `a = <x, phi_i>`,
    /// `b = <x, phi_j>`.
    fn triple_from_values(a: C64, b: C64) -> [f64; 3] {
        let z = zeta();
        let mut t = [0.0; 3];
        for (k, v) in t.iter_mut().enumerate() {
            *v = (a + z.powi(-(k as i32)) * b).norm_sqr();
        }
        t
    }

    #[test]
    fn polarize_one_and_i() {
        let p = polarize(triple_from_values(c(1.0, 0.0), c(0.0, 1.0)), zeta());
        assert!((p - c(0.0, 1.0)).norm() < 1e-14, "{p}");
    }

    #[test]
    fn polarize_zero_vertex() {
        let p = polarize(triple_from_values(c(0.0, 0.0), c(0.3, -2.0)), zeta());
        assert!(p.norm() < 1e-14);
    }

    #[test]
    fn polarize_real_product() {
        let p = polarize(triple_from_values(c(2.0, 0.0), c(3.0, 0.0)), zeta());
        assert!((p - c(6.0, 0.0)).norm() < 1e-13);
    }

    fn unit_system(vectors: Vec<Vec<C64>>, edges: Vec<(usize, usize)>) -> MeasurementSystem {
        let m = vectors[0].len();
        let g = Graph::new(vectors.len(), edges).unwrap();
        MeasurementSystem::new(
            m,
            g,
            vectors
                .into_iter()
                .map(|v| CVector::new(v).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_inner_product_intensity() {
        let sys = unit_system(
            vec![
                vec![c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0)],
            ],
            vec![(0, 1)],
        );
        let x = CVector::basis(2, 0);
        let data = intensity_measure(&sys, &x, &NoiseSpec::None, 0).unwrap();
        assert_eq!(data.vertex_intensities, vec![1.0, 0.0]);
        assert!(data.noise.iter().all(|&v| v == 0.0));
        assert_eq!(data.noise.len(), 2 + 3);
    }

    #[test]
    fn zero_signal_measures_only_noise() {
        let sys = unit_system(
            vec![vec![c(1.0, 0.0)], vec![c(0.5, 0.5)], vec![c(0.0, 1.0)]],
            vec![(0, 1), (1, 2)],
        );
        let noise: Vec<f64> = (0..sys.measurement_count())
            .map(|i| i as f64 * 0.1 - 0.2)
            .collect();
        let data = intensity_measure(
            &sys,
            &CVector::zeros(1),
            &NoiseSpec::Explicit {
                values: noise.clone(),
            },
            0,
        )
        .unwrap();
        let mut flat = data.vertex_intensities.clone();
        flat.extend(data.edge_intensities.iter().flatten());
        assert_eq!(flat, noise);
    }

    #[test]
    fn relative_phase_of_two_and_three_i() {
        // <x, phi_0> = 2, <x, phi_1> = 3i: phi_0 = 2 e_1, phi_1 = -3i e_1 with x = e_1.
        let sys = unit_system(vec![vec![c(2.0, 0.0)], vec![c(0.0, -3.0)]], vec![(0, 1)]);
        let data = intensity_measure(&sys, &CVector::basis(1, 0), &NoiseSpec::None, 0).unwrap();
        let est = relative_phases(&sys, &data).unwrap();
        let e = est.get(0, 1).unwrap();
        assert!((e.unit_phase - c(0.0, 1.0)).norm() < 1e-12);
        assert!((e.magnitude - 6.0).abs() < 1e-12);
        let r = est.get(1, 0).unwrap();
        assert!((r.unit_phase - c(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn relative_phase_real_positive() {
        let sys = unit_system(vec![vec![c(0.5, 0.0)], vec![c(4.0, 0.0)]], vec![(0, 1)]);
        let data = intensity_measure(&sys, &CVector::basis(1, 0), &NoiseSpec::None, 0).unwrap();
        let e = relative_phases(&sys, &data).unwrap().get(0, 1).unwrap();
        assert!((e.unit_phase - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_product_is_flagged() {
        let sys = unit_system(vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]], vec![(0, 1)]);
        let data = intensity_measure(&sys, &CVector::basis(1, 0), &NoiseSpec::None, 0).unwrap();
        let e = relative_phases(&sys, &data).unwrap().get(0, 1).unwrap();
        assert!(e.magnitude < 1e-15);
        if e.zero_magnitude {
            assert_eq!(e.unit_phase, c(1.0, 0.0));
        }
    }

    #[test]
    fn snr_noise_hits_target_norm() {
        let (sys, _) = design_measurements(16, 10, 4, 0.2, 3).unwrap();
        let x = CVector::basis(16, 2);
        let data = intensity_measure(&sys, &x, &NoiseSpec::Snr { snr: 50.0 }, 9).unwrap();
        assert!((data.noise_norm() - 1.0 / 50.0).abs() < 1e-15);
        assert!(intensity_measure(&sys, &x, &NoiseSpec::Snr { snr: 0.0 }, 9).is_err());
    }

    #[test]
    fn measurement_counts() {
        let v = (0..4).map(|i| CVector::basis(16, i)).collect();
        let sys = MeasurementSystem::new(16, Graph::complete(4), v).unwrap();
        assert_eq!(sys.measurement_count(), 22);
        let (sys, _) = design_measurements(64, 30, 4, 0.2, 1).unwrap();
        assert_eq!(sys.measurement_count(), 210);
    }

    #[test]
    fn design_rejects_bad_degree() {
        assert!(design_measurements(8, 10, 3, 0.2, 0).is_err());
        assert!(design_measurements(8, 10, 2, 0.2, 0).is_err());
        assert!(design_measurements(0, 10, 4, 0.2, 0).is_err());
    }

    #[test]
    fn npusv_two_vertex_examples() {
        // M = 2; intensities 1 and 1/2.
        let phis = vec![
            CVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap(),
            CVector::new(vec![c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)]).unwrap(),
        ];
        let x = CVector::basis(2, 0);
        assert!((npusv(&phis, &x, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((npusv(&phis, &x, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((npulv(&phis, &x, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((npulv(&phis, &x, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(npusv(&phis, &x, 0.0).is_err());
        assert!(npusv(&phis, &x, 1.5).is_err());
        assert!(npusv(&phis, &CVector::zeros(2), 0.5).is_err());
    }

    #[test]
    fn system_json_omits_edge_vectors() {
        let (sys, _) = design_measurements(4, 6, 4, 0.2, 2).unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(
            v.as_object().unwrap().keys().collect::<Vec<_>>(),
            vec!["graph", "m", "vertex_vectors"]
        );
        let back: MeasurementSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sys);
        assert_eq!(back.edge_vector(3, 2), sys.edge_vector(3, 2));
    }
}
