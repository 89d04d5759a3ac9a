//! Phase recovery for the vertex measurements: reliability pruning,
//! connectivity pruning, angular synchronization and large-vertex removal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{prune_for_connectivity, spectral_gap, Graph, GraphError};
use crate::linalg::{hermitian_extreme_eigenpair, CMatrix, Which, C64};
use crate::measurement::{
    relative_phases, IntensityData, MeasurementError, MeasurementSystem, RelativePhaseEstimate,
};

/// Connectivity threshold used when the parameter constraint leaves no slack
/// and the caller asked for permissive validation.
pub const PERMISSIVE_MU_FLOOR: f64 = 1e-9;

const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PppError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("connectivity pruning failed: {source}")]
    Connectivity {
        source: GraphError,
        diagnostics: Box<PppDiagnostics>,
    },
    #[error("angular synchronization failed: {0}")]
    Synchronization(GraphError),
    #[error("only {got} vertices survive, need at least {required:.2}")]
    SizeViolation {
        got: usize,
        required: f64,
        diagnostics: Box<PppDiagnostics>,
    },
}

impl PppError {
    /// Short name of the stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            PppError::InvalidParams(_) => "params",
            PppError::Measurement(_) => "measurement",
            PppError::Connectivity { .. } => "connectivity",
            PppError::Synchronization(_) => "synchronization",
            PppError::SizeViolation { .. } => "size",
        }
    }
}

/// Removal ratios `r_sv`, `r_lv`, the total removal budget `tau` and the
/// spectral gap `lambda2` of the measurement graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PppParams {
    pub r_sv: f64,
    pub r_lv: f64,
    pub tau: f64,
    pub lambda2: f64,
    /// Downgrade a violated `tau` constraint to a warning.
    #[serde(default)]
    pub permissive: bool,
}

impl PppParams {
    pub fn new(r_sv: f64, r_lv: f64, tau: f64, lambda2: f64) -> Self {
        Self {
            r_sv,
            r_lv,
            tau,
            lambda2,
            permissive: false,
        }
    }

    pub fn permissive(self) -> Self {
        Self {
            permissive: true,
            ..self
        }
    }

    /// `(3/2) r_sv + r_lv + (3/4)(1 - lambda2)`.
    pub fn removal_bound(&self) -> f64 {
        1.5 * self.r_sv + self.r_lv + 0.75 * (1.0 - self.lambda2)
    }

    /// `tau` minus [`removal_bound`](Self::removal_bound).
    pub fn slack(&self) -> f64 {
        self.tau - self.removal_bound()
    }

    /// `(2/9) slack^2`, or [`PERMISSIVE_MU_FLOOR`] when there is no slack.
    pub fn mu(&self) -> f64 {
        let s = self.slack();
        if s > 0.0 {
            (2.0 / 9.0) * s * s
        } else {
            PERMISSIVE_MU_FLOOR
        }
    }

    pub fn alpha(&self) -> f64 {
        1.0 - self.r_sv / 2.0
    }

    pub fn validate(&self) -> Result<(), PppError> {
        for (name, v) in [("r_sv", self.r_sv), ("r_lv", self.r_lv), ("tau", self.tau)] {
            if !(v > 0.0 && v < 1.0 / 3.0) {
                return Err(PppError::InvalidParams(format!(
                    "{name} = {v} outside (0, 1/3)"
                )));
            }
        }
        if !(self.lambda2 > 0.0 && self.lambda2 <= 2.0) {
            return Err(PppError::InvalidParams(format!(
                "lambda2 = {} outside (0, 2]",
                self.lambda2
            )));
        }
        if self.slack() <= 0.0 {
            let msg = format!(
                "tau = {} does not exceed 1.5 r_sv + r_lv + 0.75 (1 - lambda2) = {:.6}",
                self.tau,
                self.removal_bound()
            );
            if self.permissive {
                log::warn!("{msg}; continuing with mu = {PERMISSIVE_MU_FLOOR}");
            } else {
                return Err(PppError::InvalidParams(msg));
            }
        }
        Ok(())
    }
}

/// One reliability-pruning step: the removed edge (original vertex ids) and
/// its weight at removal time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub edge: (usize, usize),
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityPruning {
    pub graph: Graph,
    pub removals: Vec<Removal>,
    /// The edge set ran out before the requested number of iterations.
    pub exhausted: bool,
}

fn edge_weight(
    g: &Graph,
    weights: &RelativePhaseEstimate,
    i: usize,
    j: usize,
) -> Result<f64, PppError> {
    let (a, b) = (g.original_id(i), g.original_id(j));
    weights
        .get(a, b)
        .map(|p| p.magnitude)
        .ok_or_else(|| PppError::InvalidParams(format!("no relative phase for edge ({a}, {b})")))
}

/// Removes both endpoints of the lightest remaining edge,
/// `floor((1 - alpha) |V|)` times (ties by edge order).
pub fn prune_for_reliability(
    g: &Graph,
    weights: &RelativePhaseEstimate,
    alpha: f64,
) -> Result<ReliabilityPruning, PppError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PppError::InvalidParams(format!(
            "alpha = {alpha} outside (0, 1]"
        )));
    }
    let iterations = ((1.0 - alpha) * g.vertex_count() as f64 + 1e-9).floor() as usize;
    let mut order: Vec<(f64, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| edge_weight(g, weights, i, j).map(|w| (w, k)))
        .collect::<Result<_, _>>()?;
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut removed = vec![false; g.vertex_count()];
    let mut removals = Vec::with_capacity(iterations);
    let mut candidates = order.into_iter();
    while removals.len() < iterations {
        let Some((weight, k)) = candidates.by_ref().find(|&(_, k)| {
            let (i, j) = g.edges()[k];
            !removed[i] && !removed[j]
        }) else {
            break;
        };
        let (i, j) = g.edges()[k];
        removed[i] = true;
        removed[j] = true;
        removals.push(Removal {
            edge: (g.original_id(i), g.original_id(j)),
            weight,
        });
    }
    let exhausted = removals.len() < iterations;
    if exhausted {
        log::debug!(
            "reliability pruning ran out of edges after {} of {iterations} iterations",
            removals.len()
        );
    }
    let keep: Vec<usize> = (0..g.vertex_count()).filter(|&v| !removed[v]).collect();
    Ok(ReliabilityPruning {
        graph: g.induced_subgraph(&keep),
        removals,
        exhausted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synchronization {
    /// Unit-modulus phase per local vertex.
    pub phases: Vec<C64>,
    /// Local vertices whose eigenvector entry vanished (phase set to 1).
    pub flagged: Vec<usize>,
}

/// Phases from the bottom eigenvector of the connection Laplacian
/// `I - D^{-1/2} A_1 D^{-1/2}`, where `A_1[i][j]` is the unit phase of the
/// estimate for `conj(<x, phi_j>) <x, phi_i>`.
pub fn angular_synchronization(
    g: &Graph,
    phases: &RelativePhaseEstimate,
) -> Result<Synchronization, PppError> {
    let n = g.vertex_count();
    if n == 0 {
        return Err(PppError::Synchronization(GraphError::InvalidParameter(
            "empty graph".into(),
        )));
    }
    if let Some(&v) = g.isolated_vertices().first() {
        if n > 1 {
            return Err(PppError::Synchronization(GraphError::IsolatedVertex(v)));
        }
    }
    if !g.is_connected() {
        return Err(PppError::Synchronization(GraphError::Disconnected));
    }
    if n == 1 {
        return Ok(Synchronization {
            phases: vec![C64::new(1.0, 0.0)],
            flagged: Vec::new(),
        });
    }
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / (d as f64).sqrt())
        .collect();
    let mut l = CMatrix::identity(n);
    for &(i, j) in g.edges() {
        let rho = phases
            .get(g.original_id(i), g.original_id(j))
            .ok_or_else(|| {
                PppError::InvalidParams(format!("no relative phase for edge ({i}, {j})"))
            })?
            .unit_phase;
        let w = inv_sqrt[i] * inv_sqrt[j];
        l[(i, j)] = -rho.conj() * w;
        l[(j, i)] = -rho * w;
    }
    let u = hermitian_extreme_eigenpair(&l, Which::Smallest)
        .map_err(|e| PppError::Synchronization(e.into()))?
        .vector;
    let mut flagged = Vec::new();
    let out = u
        .iter()
        .enumerate()
        .map(|(v, &c)| {
            let r = c.norm();
            if r < PHASE_FLOOR {
                flagged.push(v);
                C64::new(1.0, 0.0)
            } else {
                c / r
            }
        })
        .collect();
    Ok(Synchronization {
        phases: out,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PppDiagnostics {
    pub n_vertices: usize,
    pub alpha: f64,
    pub mu: f64,
    pub slack: f64,
    pub removed_reliability: usize,
    pub reliability_exhausted: bool,
    pub removed_connectivity: usize,
    /// Spectral gap of the graph left by connectivity pruning.
    pub connectivity_gap: Option<f64>,
    pub removed_large: usize,
    pub zero_phase_edges: usize,
    pub sync_flagged: usize,
}

/// Surviving vertex ids (ascending) and the phased linear-measurement
/// estimates `y_i ~ <x, phi_i>` up to one global phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PppOutput {
    pub vertices: Vec<usize>,
    pub estimates: Vec<C64>,
    pub diagnostics: PppDiagnostics,
}

pub fn run_ppp(
    sys: &MeasurementSystem,
    data: &IntensityData,
    params: &PppParams,
) -> Result<PppOutput, PppError> {
    params.validate()?;
    let n = sys.graph().vertex_count();
    let phases = relative_phases(sys, data)?;
    let mut diag = PppDiagnostics {
        n_vertices: n,
        alpha: params.alpha(),
        mu: params.mu(),
        slack: params.slack(),
        zero_phase_edges: phases.phases().iter().filter(|p| p.zero_magnitude).count(),
        ..Default::default()
    };

    let reliable = prune_for_reliability(sys.graph(), &phases, diag.alpha)?;
    diag.removed_reliability = n - reliable.graph.vertex_count();
    diag.reliability_exhausted = reliable.exhausted;

    let connected = prune_for_connectivity(&reliable.graph, diag.mu).map_err(|source| {
        PppError::Connectivity {
            source,
            diagnostics: Box::new(diag.clone()),
        }
    })?;
    diag.removed_connectivity = reliable.graph.vertex_count() - connected.vertex_count();
    diag.connectivity_gap = spectral_gap(&connected).ok().map(|g| g.lambda2);

    let sync = angular_synchronization(&connected, &phases)?;
    diag.sync_flagged = sync.flagged.len();

    let z = &data.vertex_intensities;
    let large = ((params.r_lv * n as f64) + 1e-9).floor() as usize;
    let mut by_intensity: Vec<usize> = (0..connected.vertex_count()).collect();
    by_intensity.sort_by(|&a, &b| {
        let (ia, ib) = (connected.original_id(a), connected.original_id(b));
        z[ib].total_cmp(&z[ia]).then(ia.cmp(&ib))
    });
    let mut keep: Vec<usize> = by_intensity.into_iter().skip(large).collect();
    keep.sort_unstable();
    diag.removed_large = connected.vertex_count() - keep.len();

    let required = (1.0 - params.tau) * n as f64;
    if (keep.len() as f64) < required - 1e-9 {
        return Err(PppError::SizeViolation {
            got: keep.len(),
            required,
            diagnostics: Box::new(diag),
        });
    }

    let vertices: Vec<usize> = keep.iter().map(|&v| connected.original_id(v)).collect();
    let estimates = keep
        .iter()
        .zip(&vertices)
        .map(|(&local, &id)| sync.phases[local] * z[id].max(0.0).sqrt())
        .collect();
    Ok(PppOutput {
        vertices,
        estimates,
        diagnostics: diag,
    })
}
