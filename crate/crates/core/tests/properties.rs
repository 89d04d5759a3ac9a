mod common;

use common::*;
use proptest::prelude::*;
use sparse_polar::graph::Graph;
use sparse_polar::harness::{align_phase, read_records, write_records, TrialRecord};
use sparse_polar::linalg::{CMatrix, CVector, C64};
use sparse_polar::measurement::{
    intensity_measure, npulv, npusv, polarize, zeta, MeasurementSystem, NoiseSpec,
};
use sparse_polar::ppp::{angular_synchronization, prune_for_reliability};
use sparse_polar::sparse_recovery::{check_errip, check_rip, RipMode};

fn assert_close(a: C64, b: C64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((a - b).norm() <= tol, "{a} vs {b}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polarization_recovers_vertex_product(seed in any::<u64>(), m in 1usize..12, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let x = random_vector(&mut r, m, scale);
        let phis = vec![random_vector(&mut r, m, 1.0), random_vector(&mut r, m, 1.0)];
        let sys = MeasurementSystem::new(m, Graph::complete(2), phis.clone()).unwrap();
        let data = intensity_measure(&sys, &x, &NoiseSpec::None, 0).unwrap();
        let expected = x.inner(&phis[0]).conj() * x.inner(&phis[1]);
        let got = polarize(data.edge_intensities[0], zeta());
        assert_close(got, expected, 1e-10 * (1.0 + x.norm_sqr()))?;
    }

    /// Rotating every vertex value by `h_i` rotates the recovered phases the
    /// same way, even with noisy edge phases.
    #[test]
    fn synchronization_is_gauge_covariant(seed in any::<u64>(), n in 3usize..16) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n, 0.3);
        let truth: Vec<C64> = (0..n).map(|_| unit_phase(&mut r)).collect();
        let noise: Vec<C64> = (0..g.edge_count()).map(|_| C64::from_polar(1.0, 0.3 * cn(&mut r, 1.0).re)).collect();
        let gauge: Vec<C64> = (0..n).map(|_| unit_phase(&mut r)).collect();
        let base = angular_synchronization(&g, &relative_phases(&g, &truth, |e| noise[e])).unwrap();
        let rotated_truth: Vec<C64> = truth.iter().zip(&gauge).map(|(t, h)| t * h).collect();
        let moved = angular_synchronization(&g, &relative_phases(&g, &rotated_truth, |e| noise[e])).unwrap();
        let expected = CVector::new(base.phases.iter().zip(&gauge).map(|(u, h)| u * h).collect()).unwrap();
        let (_, err) = align_phase(&CVector::new(moved.phases).unwrap(), &expected).unwrap();
        prop_assert!(err.sqrt() < 1e-6, "{err}");
    }

    #[test]
    fn alignment_ignores_global_phase(seed in any::<u64>(), m in 1usize..10, theta in 0.0f64..6.3) {
        let mut r = rng(seed);
        let truth = random_vector(&mut r, m, 1.0);
        let est = random_vector(&mut r, m, 1.0);
        let rot = C64::from_polar(1.0, theta);
        let (_, e1) = align_phase(&est, &truth).unwrap();
        let (_, e2) = align_phase(&est.scale(rot), &truth).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-10 * (1.0 + e1));
        let (_, self_err) = align_phase(&truth.scale(rot), &truth).unwrap();
        prop_assert!(self_err <= 1e-24 * truth.norm_sqr().max(1.0));
        // Never worse than the unrotated difference.
        prop_assert!(e1 <= est.sub(&truth).norm_sqr() * (1.0 + 1e-12));
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec(
            (
                prop::option::of(-1e6f64..1e6),
                0usize..1000,
                any::<u64>(),
                any::<bool>(),
                prop_oneof![Just(f64::NAN), 0.0f64..1.0, 1e-300f64..1e-200],
                any::<f64>().prop_filter("finite", |v| v.is_finite()),
                0usize..500,
                0.0f64..1e6,
                prop::option::of(prop_oneof![Just("size".to_string()), Just("bpdn".to_string())]),
            ),
            0..12,
        )
    ) {
        let records: Vec<TrialRecord> = rows
            .into_iter()
            .map(|(axis_value, trial, seed, success, rel_err_sq, lambda2, v_hat_size, wall_ms, fail_stage)| TrialRecord {
                axis_value, trial, seed, success, rel_err_sq, lambda2, v_hat_size, wall_ms, fail_stage,
            })
            .collect();
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            prop_assert!(a.same_outcome(b), "{a:?} vs {b:?}");
            prop_assert_eq!(a.wall_ms.to_bits(), b.wall_ms.to_bits());
        }
    }

    #[test]
    fn reliability_removals_are_monotone(seed in any::<u64>(), n in 4usize..30, alpha in 0.5f64..1.0) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n, 0.4);
        let phases: Vec<C64> = (0..n).map(|_| unit_phase(&mut r)).collect();
        let mags: Vec<f64> = (0..g.edge_count()).map(|_| cn(&mut r, 1.0).norm()).collect();
        let est = relative_phases(&g, &phases, |e| C64::new(mags[e], 0.0));
        let out = prune_for_reliability(&g, &est, alpha).unwrap();

        let target = ((1.0 - alpha) * n as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(out.removals.len() == target, !out.exhausted);
        prop_assert!(out.removals.windows(2).all(|w| w[0].weight <= w[1].weight));
        let mut removed: Vec<usize> = out.removals.iter().flat_map(|rm| [rm.edge.0, rm.edge.1]).collect();
        removed.sort_unstable();
        prop_assert!(removed.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(out.graph.vertex_count(), n - removed.len());
        let last = out.removals.last().map_or(f64::NEG_INFINITY, |rm| rm.weight);
        for &(i, j) in out.graph.edges() {
            let w = est.get(out.graph.original_id(i), out.graph.original_id(j)).unwrap().magnitude;
            prop_assert!(w >= last);
        }
    }

    /// With `||A|| <= 1` every row-deleted submatrix is a contraction, so the
    /// defect is `1 - sigma_min^2`, which only grows as rows are removed.
    #[test]
    fn errip_grows_with_erasures_for_contractions(seed in any::<u64>(), t1 in 0.0f64..0.4, dt in 0.0f64..0.4) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 8, 5, 1.0);
        let norm = sparse_polar::linalg::hermitian_eigen(&a.gram()).unwrap().values.last().unwrap().sqrt();
        let a = a.scale(1.0 / norm);
        let lo = check_errip(&a, 2, t1, RipMode::Exhaustive, 0, 0).unwrap();
        let hi = check_errip(&a, 2, t1 + dt, RipMode::Exhaustive, 0, 0).unwrap();
        prop_assert!(lo.delta_lower <= hi.delta_lower + 1e-12, "{} > {}", lo.delta_lower, hi.delta_lower);
    }

    #[test]
    fn sampled_rip_never_exceeds_exhaustive(seed in any::<u64>(), k in 1usize..4, tau in 0.0f64..0.3) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 10, 6, 0.1);
        let full = check_errip(&a, k, tau, RipMode::Exhaustive, 0, 0).unwrap();
        let sampled = check_errip(&a, k, tau, RipMode::Sampled, 40, seed).unwrap();
        prop_assert!(sampled.delta_lower <= full.delta_lower + 1e-12);
    }

    #[test]
    fn uniformity_values_monotone_in_alpha(seed in any::<u64>(), n in 1usize..20, a1 in 0.05f64..1.0, a2 in 0.05f64..1.0) {
        let mut r = rng(seed);
        let x = random_vector(&mut r, 4, 1.0);
        let phis: Vec<CVector> = (0..n).map(|_| random_vector(&mut r, 4, 0.25)).collect();
        let (lo, hi) = (a1.min(a2), a1.max(a2));
        prop_assert!(npusv(&phis, &x, hi).unwrap() <= npusv(&phis, &x, lo).unwrap());
        prop_assert!(npulv(&phis, &x, hi).unwrap() >= npulv(&phis, &x, lo).unwrap());
    }
}

#[test]
fn errip_can_shrink_when_rows_overshoot() {
    // One column of norm^2 2: erasing a row brings it back to an isometry.
    let a = CMatrix::from_real_rows(&[vec![1.0], vec![1.0]]).unwrap();
    let full = check_rip(&a, 1, RipMode::Exhaustive, 0, 0).unwrap();
    let erased = check_errip(&a, 1, 0.5, RipMode::Exhaustive, 0, 0).unwrap();
    assert_eq!(full.delta_lower, 1.0);
    assert_eq!(erased.delta_lower, 0.0);
}
