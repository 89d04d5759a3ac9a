mod common;

use common::*;
use sparse_polar::graph::{ramanujan_bound, random_regular_graph, spectral_gap};
use sparse_polar::harness::{
    aggregate, align_phase, run_sweep, run_trial, sample_signal, ExperimentConfig, SweepAxis,
    SweepField, TrialRecord,
};
use sparse_polar::linalg::{hermitian_eigen, CVector, C64};
use sparse_polar::measurement::{design_measurements, intensity_measure, NoiseSpec};
use sparse_polar::ppp::{run_ppp, PppParams};
use sparse_polar::sparse_recovery::{check_rip, solve_bpdn, sparse_oracle, BpdnProblem, RipMode};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        m: 32,
        k: 2,
        n_vertices: 40,
        d: Some(8),
        trials: 4,
        master_seed: 11,
        ..Default::default()
    };
    cfg.ppp.permissive = true;
    cfg
}

#[test]
fn random_regular_graphs_meet_the_ramanujan_bound() {
    let bound = ramanujan_bound(12, 0.2);
    let hits = (0..100)
        .filter(|&seed| {
            spectral_gap(&random_regular_graph(200, 12, seed).unwrap())
                .unwrap()
                .lambda2
                >= bound
        })
        .count();
    assert!(
        hits >= 95,
        "{hits} of 100 graphs reached lambda2 >= {bound}"
    );
}

#[test]
fn noiseless_ppp_matches_direct_inner_products() {
    let (sys, cert) = design_measurements(64, 60, 8, 0.2, 5).unwrap();
    let x = sample_signal(64, 3, 17);
    let data = intensity_measure(&sys, &x, &NoiseSpec::None, 0).unwrap();
    let params = PppParams::new(0.02, 0.02, 0.32, cert.lambda2).permissive();
    let out = run_ppp(&sys, &data, &params).unwrap();

    assert!(out.vertices.windows(2).all(|w| w[0] < w[1]));
    assert!(out.vertices.len() as f64 >= 0.68 * 60.0);
    let d = &out.diagnostics;
    assert_eq!(
        out.vertices.len(),
        60 - d.removed_reliability - d.removed_connectivity - d.removed_large
    );

    let y = CVector::new(out.estimates).unwrap();
    let exact = CVector::new(
        sys.vertex_adjoint_matrix(&out.vertices)
            .matvec(x.as_slice()),
    )
    .unwrap();
    let (_, err) = align_phase(&y, &exact).unwrap();
    assert!(err / exact.norm_sqr() <= 1e-12, "{err}");
}

#[test]
fn trials_are_reproducible() {
    let cfg = small_config();
    let a = run_trial(&cfg, 2);
    let b = run_trial(&cfg, 2);
    assert!(a.record.same_outcome(&b.record));
    assert_eq!(a.estimate, b.estimate);
    assert!(a.record.success, "{:?}", a.error_message);
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = small_config();
    cfg.sweep = Some(SweepAxis {
        field: SweepField::K,
        values: vec![1.0, 3.0],
    });
    cfg.workers = Some(1);
    let sequential = run_sweep(&cfg).unwrap();
    cfg.workers = Some(3);
    let concurrent = run_sweep(&cfg).unwrap();
    assert_eq!(sequential.records.len(), 8);
    for (a, b) in sequential.records.iter().zip(&concurrent.records) {
        assert!(a.same_outcome(b), "{a:?} vs {b:?}");
    }
    assert_eq!(sequential.aggregates, concurrent.aggregates);
    // Trial seeds do not depend on the axis value.
    assert_eq!(sequential.records[0].seed, sequential.records[4].seed);
}

#[test]
fn aggregation_matches_hand_counts() {
    let rec = |axis: f64, trial: usize, success: bool, err: f64| TrialRecord {
        axis_value: Some(axis),
        trial,
        seed: trial as u64,
        success,
        rel_err_sq: err,
        lambda2: 0.5,
        v_hat_size: 10,
        wall_ms: 1.0,
        fail_stage: if err.is_nan() {
            Some("size".into())
        } else {
            None
        },
    };
    let records = vec![
        rec(2.0, 0, true, 1e-12),
        rec(2.0, 1, false, f64::NAN),
        rec(2.0, 2, true, 3e-12),
        rec(4.0, 0, false, 0.5),
        rec(4.0, 1, true, 1e-10),
    ];
    let aggs = aggregate(&records, |_| None);
    assert_eq!(aggs.len(), 2);
    assert_eq!((aggs[0].trials, aggs[0].successes), (3, 2));
    assert!((aggs[0].success_rate - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(aggs[0].median_rel_err_sq, Some(2e-12));
    assert_eq!(aggs[1].success_rate, 0.5);
    assert_eq!(aggs[1].median_rel_err_sq, Some(0.5 * (0.5 + 1e-10)));
}

#[test]
fn sweep_error_falls_with_snr() {
    let mut cfg = ExperimentConfig {
        m: 64,
        k: 2,
        n_vertices: 60,
        d: Some(10),
        trials: 4,
        ..Default::default()
    };
    cfg.ppp.permissive = true;
    cfg.sweep = Some(SweepAxis {
        field: SweepField::Snr,
        values: vec![8e3, 8e4, 8e5],
    });
    let result = run_sweep(&cfg).unwrap();
    let medians: Vec<f64> = result
        .aggregates
        .iter()
        .map(|a| a.median_rel_err_sq.unwrap())
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    assert!(result.aggregates.iter().all(|a| a.n_snr.is_some()));
}

#[test]
fn bpdn_never_exceeds_the_true_l1_norm() {
    let mut checked = 0;
    for seed in 0..60 {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 8, 10, 1.0 / 8.0);
        let x0 = sample_signal(10, 2, seed);
        let y = CVector::new(a.matvec(x0.as_slice())).unwrap();
        let oracle = sparse_oracle(&a, &y, 2).unwrap();
        if oracle.x.sub(&x0).norm() > 1e-8 {
            continue;
        }
        checked += 1;
        let sol = solve_bpdn(&BpdnProblem::new(a, y, 0.0).unwrap()).unwrap();
        assert!(
            sol.x.l1_norm() <= x0.l1_norm() * (1.0 + 1e-6),
            "seed {seed}"
        );
    }
    assert!(checked >= 50);
}

/// Noisy recovery on matrices with a certified small restricted isometry
/// constant at level 2k stays within a small multiple of the noise bound.
#[test]
fn stable_recovery_constant_is_small() {
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for seed in 0..40 {
        let mut r = rng(1000 + seed);
        let (rows, cols, k) = (80, 8, 1);
        let a = random_matrix(&mut r, rows, cols, 1.0 / rows as f64);
        if check_rip(&a, 2 * k, RipMode::Exhaustive, 0, 0)
            .unwrap()
            .delta_lower
            >= 2f64.sqrt() - 1.0
        {
            continue;
        }
        used += 1;
        let x0 = sample_signal(cols, k, seed);
        let e = random_vector(&mut r, rows, 1.0);
        let e_bound = 1e-2;
        let e = e.scale(C64::new(e_bound / e.norm(), 0.0));
        let y = CVector::new(a.matvec(x0.as_slice())).unwrap().add(&e);
        let sol = solve_bpdn(&BpdnProblem::new(a, y, e_bound).unwrap()).unwrap();
        worst = worst.max(sol.x.sub(&x0).norm() / e_bound);
    }
    println!("stable recovery: C = {worst:.3} over {used} matrices");
    assert!(used >= 20);
    assert!(worst <= 10.0, "C = {worst}");
}

#[test]
fn design_vectors_have_unit_average_energy() {
    let (sys, _) = design_measurements(32, 400, 6, 0.2, 3).unwrap();
    let ids: Vec<usize> = (0..400).collect();
    let a = sys.vertex_adjoint_matrix(&ids);
    // E[A* A] = (|V| / M) I
    let gram = a.gram().scale(32.0 / 400.0);
    let values = hermitian_eigen(&gram).unwrap().values;
    assert!(
        values[0] > 0.4 && values[values.len() - 1] < 1.8,
        "{values:?}"
    );
}
