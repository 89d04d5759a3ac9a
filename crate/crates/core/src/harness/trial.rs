use std::time::Instant;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NoiseBound};
use super::HarnessError;
use crate::linalg::{CVector, C64};
use crate::measurement::{design_measurements, intensity_measure, MeasurementSystem};
use crate::ppp::{run_ppp, PppDiagnostics};
use crate::rng::{self, trial_seed, Stream};
use crate::sparse_recovery::{errip_scale, solve_bpdn, BpdnProblem};

/// Minimizer of `||estimate - e^{i theta} truth||^2` and the minimum.
pub fn align_phase(estimate: &CVector, truth: &CVector) -> Result<(f64, f64), HarnessError> {
    if estimate.len() != truth.len() {
        return Err(HarnessError::Invalid(format!(
            "lengths differ: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.norm_sqr() == 0.0 {
        return Err(HarnessError::Invalid("reference signal is zero".into()));
    }
    let ip = estimate.inner(truth);
    let (rot, theta) = if ip.norm() > 0.0 {
        (ip / ip.norm(), ip.arg())
    } else {
        (C64::new(1.0, 0.0), 0.0)
    };
    let error_sq = estimate
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - rot * t).norm_sqr())
        .sum();
    Ok((theta.rem_euclid(std::f64::consts::TAU), error_sq))
}

/// Unit-norm `k`-sparse signal with uniformly random support and circular
/// Gaussian nonzeros.
pub fn sample_signal(m: usize, k: usize, seed: u64) -> CVector {
    let mut rng = rng::stream(seed, Stream::Signal, 0);
    let mut support = sample(&mut rng, m, k).into_vec();
    support.sort_unstable();
    let mut x = vec![C64::new(0.0, 0.0); m];
    for s in support {
        let (re, im): (f64, f64) = (
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        x[s] = C64::new(re, im);
    }
    let v = CVector::from_vec_unchecked(x);
    let n = v.norm();
    v.scale(C64::new(1.0 / n, 0.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// Phase-aligned squared relative error; NaN when a stage failed.
    pub rel_err_sq: f64,
    /// Measured spectral gap of the design graph; NaN when design failed.
    pub lambda2: f64,
    pub v_hat_size: usize,
    pub wall_ms: f64,
    pub fail_stage: Option<String>,
}

impl TrialRecord {
    /// Equality of every field except wall time, treating NaN as equal to NaN.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.axis_value.map(f64::to_bits) == other.axis_value.map(f64::to_bits)
            && self.trial == other.trial
            && self.seed == other.seed
            && self.success == other.success
            && same(self.rel_err_sq, other.rel_err_sq)
            && same(self.lambda2, other.lambda2)
            && self.v_hat_size == other.v_hat_size
            && self.fail_stage == other.fail_stage
    }
}

/// Per-trial details beyond the CSV columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialDetail {
    pub record: TrialRecord,
    pub error_message: Option<String>,
    pub ppp: Option<PppDiagnostics>,
    pub noise_bound: Option<f64>,
    pub bpdn_iterations: Option<usize>,
    pub bpdn_infeasible: Option<bool>,
    pub estimate: Option<CVector>,
    pub truth: CVector,
}

struct Stage(&'static str, String);

fn stage<E: std::fmt::Display>(name: &'static str) -> impl FnOnce(E) -> Stage {
    move |e| Stage(name, e.to_string())
}

/// Runs trial `trial_index` of `cfg` (which must not carry a sweep axis).
pub fn run_trial(cfg: &ExperimentConfig, trial_index: usize) -> TrialDetail {
    run_trial_at(cfg, trial_index, None)
}

pub(crate) fn run_trial_at(
    cfg: &ExperimentConfig,
    trial_index: usize,
    axis_value: Option<f64>,
) -> TrialDetail {
    let start = Instant::now();
    let seed = trial_seed(cfg.master_seed, trial_index as u64);
    let truth = sample_signal(cfg.m, cfg.k, seed);
    let mut detail = TrialDetail {
        record: TrialRecord {
            axis_value,
            trial: trial_index,
            seed,
            success: false,
            rel_err_sq: f64::NAN,
            lambda2: f64::NAN,
            v_hat_size: 0,
            wall_ms: 0.0,
            fail_stage: None,
        },
        error_message: None,
        ppp: None,
        noise_bound: None,
        bpdn_iterations: None,
        bpdn_infeasible: None,
        estimate: None,
        truth: truth.clone(),
    };
    if let Err(Stage(name, msg)) = pipeline(cfg, seed, &truth, &mut detail) {
        log::debug!("trial {trial_index} failed at {name}: {msg}");
        detail.record.fail_stage = Some(name.to_string());
        detail.error_message = Some(msg);
    }
    detail.record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    detail
}

fn pipeline(
    cfg: &ExperimentConfig,
    seed: u64,
    truth: &CVector,
    detail: &mut TrialDetail,
) -> Result<(), Stage> {
    let (sys, cert) = design_measurements(cfg.m, cfg.n_vertices, cfg.degree(), cfg.epsilon, seed)
        .map_err(stage("design"))?;
    detail.record.lambda2 = cert.lambda2;
    let data = intensity_measure(&sys, truth, &cfg.noise, seed).map_err(stage("measure"))?;
    let params = cfg.ppp.params(cert.lambda2);
    let out = run_ppp(&sys, &data, &params).map_err(|e| Stage(e.stage(), e.to_string()))?;
    detail.record.v_hat_size = out.vertices.len();
    detail.ppp = Some(out.diagnostics.clone());

    let a = sys.vertex_adjoint_matrix(&out.vertices);
    let y = CVector::from_vec_unchecked(out.estimates);
    let e_bound = match cfg.noise_bound {
        NoiseBound::Oracle { slack } => {
            let exact = CVector::from_vec_unchecked(a.matvec(truth.as_slice()));
            let (_, err_sq) = align_phase(&y, &exact).map_err(stage("bpdn"))?;
            slack * err_sq.sqrt()
        }
        NoiseBound::Theory { c } => theory_bound(cfg, &sys, &data.vertex_intensities, c),
    };
    detail.noise_bound = Some(e_bound);
    let scale = errip_scale(cfg.n_vertices, cfg.m, cfg.ppp.tau).map_err(stage("bpdn"))?;
    let problem = BpdnProblem::new(a, y, e_bound)
        .map_err(stage("bpdn"))?
        .scaled(scale);
    let sol = solve_bpdn(&problem).map_err(stage("bpdn"))?;
    detail.bpdn_iterations = Some(sol.iterations);
    detail.bpdn_infeasible = Some(sol.infeasible);

    let (_, err_sq) = align_phase(&sol.x, truth).map_err(stage("metric"))?;
    detail.record.rel_err_sq = err_sq / truth.norm_sqr();
    detail.record.success = detail.record.rel_err_sq <= cfg.threshold();
    detail.estimate = Some(sol.x);
    Ok(())
}

fn theory_bound(
    cfg: &ExperimentConfig,
    sys: &MeasurementSystem,
    vertex_intensities: &[f64],
    c: f64,
) -> f64 {
    let Some(snr) = cfg.snr() else { return 0.0 };
    let m = cfg.m as f64;
    let n = sys.graph().vertex_count() as f64;
    let x_norm_sq = (m / n) * vertex_intensities.iter().map(|z| z.max(0.0)).sum::<f64>();
    let r = m.sqrt() / snr;
    (c * (r + (n / m).sqrt()) * r).sqrt() * x_norm_sq.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub axis_value: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median over trials that completed every stage.
    pub median_rel_err_sq: Option<f64>,
    pub n_snr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.success).count()
    }

    pub fn failure_ratio(&self) -> f64 {
        self.failures() as f64 / self.records.len().max(1) as f64
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Success rate and median error of each axis value, in first-seen order.
pub fn aggregate(
    records: &[TrialRecord],
    n_snr: impl Fn(Option<f64>) -> Option<f64>,
) -> Vec<Aggregate> {
    let mut keys: Vec<Option<f64>> = Vec::new();
    for r in records {
        if !keys
            .iter()
            .any(|k| k.map(f64::to_bits) == r.axis_value.map(f64::to_bits))
        {
            keys.push(r.axis_value);
        }
    }
    keys.into_iter()
        .map(|key| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.axis_value.map(f64::to_bits) == key.map(f64::to_bits))
                .collect();
            let successes = group.iter().filter(|r| r.success).count();
            let mut errs: Vec<f64> = group
                .iter()
                .map(|r| r.rel_err_sq)
                .filter(|e| !e.is_nan())
                .collect();
            Aggregate {
                axis_value: key,
                trials: group.len(),
                successes,
                success_rate: successes as f64 / group.len() as f64,
                median_rel_err_sq: median(&mut errs),
                n_snr: n_snr(key),
            }
        })
        .collect()
}

/// Every (axis value, trial) pair. Trial seeds depend only on the trial
/// index, so each axis value sees the same signals.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    let cells: Vec<(Option<f64>, ExperimentConfig)> = match &cfg.sweep {
        Some(axis) => axis
            .values
            .iter()
            .map(|&v| cfg.at_axis_value(axis.field, v).map(|c| (Some(v), c)))
            .collect::<Result<_, _>>()?,
        None => vec![(None, cfg.clone())],
    };
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let run = || -> Vec<TrialRecord> {
        jobs.par_iter()
            .map(|&(c, t)| run_trial_at(&cells[c].1, t, cells[c].0).record)
            .collect()
    };
    let records = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?
            .install(run),
        None => run(),
    };
    let aggregates = aggregate(&records, |key| match key {
        Some(v) => cells
            .iter()
            .find(|(k, _)| *k == Some(v))
            .and_then(|(_, c)| c.n_snr()),
        None => cfg.n_snr(),
    });
    Ok(SweepResult {
        records,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(entries: &[(f64, f64)]) -> CVector {
        CVector::new(entries.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn global_phase_is_free() {
        let t = v(&[(1.0, 0.0), (0.0, 2.0), (-0.5, 0.5)]);
        let e = t.scale(C64::from_polar(1.0, std::f64::consts::FRAC_PI_4));
        let (theta, err) = align_phase(&e, &t).unwrap();
        assert!(err < 1e-28);
        assert!((theta - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
    }

    #[test]
    fn zero_estimate() {
        let t = v(&[(3.0, 0.0), (0.0, 4.0)]);
        let (_, err) = align_phase(&CVector::zeros(2), &t).unwrap();
        assert!((err - 25.0).abs() < 1e-12);
        assert!(align_phase(&t, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn orthogonal_perturbation() {
        let t = v(&[(1.0, 0.0), (0.0, 0.0)]);
        let e = v(&[(1.0, 0.0), (0.0, 0.01)]);
        let (_, err) = align_phase(&e, &t).unwrap();
        assert!((err - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn signal_is_unit_and_sparse() {
        let x = sample_signal(50, 4, 9);
        assert!((x.norm() - 1.0).abs() < 1e-14);
        assert_eq!(x.iter().filter(|c| c.norm() > 0.0).count(), 4);
        assert_eq!(x, sample_signal(50, 4, 9));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
