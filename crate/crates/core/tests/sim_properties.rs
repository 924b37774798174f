use impulse_core::bounds::{self, BoundKind};
use impulse_core::experiments as ex;
use impulse_core::linalg::{self, cube_norm, Mat};
use impulse_core::model::{ControllerSpec, Drift, PlantSpec};
use impulse_core::sim::{simulate, HybridTrajectory, SampleKind, SimConfig};
use proptest::prelude::*;

fn grid_rows(traj: &HybridTrajectory) -> usize {
    (0..traj.len()).filter(|&i| traj.kind(i) == SampleKind::Grid).count()
}

fn check_independent_invariants(traj: &HybridTrajectory, ctrl: &ControllerSpec, cfg: &SimConfig) {
    let n_grid = (cfg.t_end / cfg.dt).round() as usize + 1;
    assert_eq!(grid_rows(traj), n_grid);
    assert_eq!(traj.len(), n_grid + 2 * traj.events().len());

    for (k, w) in traj.events().windows(2).enumerate() {
        assert_eq!(w[0].seq, k);
        assert!(w[1].seq > w[0].seq && w[1].t >= w[0].t);
    }

    let thetas = ctrl.thresholds();
    for i in 0..traj.len() {
        for (z, th) in traj.z(i).iter().zip(&thetas) {
            assert!(*z >= -1e-12 && *z <= th + 1e-9, "z = {z}, θ = {th}");
        }
    }
    for ((_, post), ev) in traj.event_sample_pairs().into_iter().zip(traj.events()) {
        assert_eq!(traj.z(post)[ev.unit], 0.0);
    }
    let aux = ex::aux_check(traj, ctrl, cube_norm(ctrl.b()).unwrap());
    assert!(aux.max_deviation <= aux.deviation_bound + 1e-9, "{aux:?}");
    assert!(aux.max_xc_jump <= 1e-6, "{aux:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scalar_pair_invariants_and_envelope(
        a in -1.0f64..2.0,
        margin in 0.3f64..3.0,
        lam in 0.0f64..3.0,
        x0 in -3.0f64..3.0,
    ) {
        let b = a.max(0.0) + margin; // θ = 1/b must be positive
        let plant = PlantSpec::scalar(a);
        let ctrl = ControllerSpec::scalar_pair(1.0, 1.0 / b, lam);
        let cfg = SimConfig::new(4.0, 1e-3, 1e-9);
        let traj = simulate(&plant, &ctrl, &[x0], &cfg).unwrap();
        check_independent_invariants(&traj, &ctrl, &cfg);

        for r in bounds::all_reports(&plant, &ctrl).unwrap() {
            if r.applicable {
                let v = ex::envelope_violation(&traj, &r);
                prop_assert!(v <= 1e-6, "{:?} violated by {v}", r.kind);
            }
        }
    }

    #[test]
    fn planar_lyapunov_envelope(
        entries in proptest::array::uniform4(-1.0f64..1.0),
        theta in 0.3f64..1.0,
        lam in 0.0f64..1.0,
        x0 in proptest::array::uniform2(-3.0f64..3.0),
    ) {
        let plant = PlantSpec::linear(Mat::from_row_major(2, 2, entries.to_vec()).unwrap());
        let ctrl = ControllerSpec::axis_pairs(2, theta, lam);
        let cfg = SimConfig::new(4.0, 1e-3, 1e-9);
        let traj = simulate(&plant, &ctrl, &x0, &cfg).unwrap();
        check_independent_invariants(&traj, &ctrl, &cfg);

        let reports = bounds::all_reports(&plant, &ctrl).unwrap();
        let lyap = reports.iter().find(|r| r.kind == BoundKind::Lyapunov).unwrap();
        if lyap.applicable {
            prop_assert!(lyap.decay_rate < 0.0);
            for r in reports.iter().filter(|r| r.applicable) {
                let v = ex::envelope_violation(&traj, r);
                prop_assert!(v <= 1e-6, "{:?} violated by {v}", r.kind);
            }
        }
    }

    #[test]
    fn gaps_respect_leaky_period(
        a in -1.0f64..2.0,
        margin in 0.3f64..3.0,
        lam in 0.0f64..3.0,
        x0 in 0.5f64..3.0,
    ) {
        let b = a.max(0.0) + margin; // θ = 1/b must be positive
        let ctrl = ControllerSpec::scalar_pair(1.0, 1.0 / b, lam);
        let cfg = SimConfig::new(4.0, 1e-3, 1e-9);
        let traj = simulate(&PlantSpec::scalar(a), &ctrl, &[x0], &cfg).unwrap();
        for g in ex::gap_checks(&traj, &ctrl) {
            prop_assert!(g.holds(cfg.event_tol), "{g:?}");
        }
    }
}

/// Events that come in pairs with no intermediate samples keep the post
/// state of one firing as the pre state of the next.
#[test]
fn simultaneous_firings_chain() {
    let plant = PlantSpec::scalar(0.0);
    let ctrl = ControllerSpec::Independent {
        b: Mat::from_rows(&[[-0.25, -0.5]]),
        thetas: vec![0.5, 0.5],
        lambdas: vec![0.0, 0.0],
        input: impulse_core::model::InputFn::new(Mat::from_rows(&[[1.0], [1.0]]), vec![1.0, 1.0]),
    };
    let traj = simulate(&plant, &ctrl, &[1.0], &SimConfig::new(1.0, 1e-3, 1e-9)).unwrap();
    let ev = traj.events();
    assert_eq!((ev[0].unit, ev[1].unit), (0, 1));
    assert_eq!(ev[0].t, ev[1].t);
    let pairs = traj.event_sample_pairs();
    assert_eq!(traj.x(pairs[0].1), traj.x(pairs[1].0));
    assert!((traj.x(pairs[1].1)[0] - 0.25).abs() < 1e-12);
}

fn connected(b: Mat, lambdas: Vec<f64>, gain: f64) -> ControllerSpec {
    let k = b.rows();
    ControllerSpec::Connected { b, lambdas, gain: Mat::identity(k).scale(gain) }
}

fn check_connected(plant: &PlantSpec, ctrl: &ControllerSpec, x0: &[f64], cfg: &SimConfig) {
    let traj = simulate(plant, ctrl, x0, cfg).unwrap();
    let b = ctrl.b();
    let w = impulse_core::network::compute_null_weight(b).unwrap();
    assert!(w.w.iter().all(|&v| v >= 1.0));
    let zb = impulse_core::network::z_bounds(b, ctrl.lambdas(), &w).unwrap();
    let m = impulse_core::network::monitor_connected(&traj, ctrl, &w, &zb).unwrap();
    let wd = linalg::dot(&w.w, &zb.upper);
    if ctrl.lambdas().windows(2).all(|p| p[0] == p[1]) {
        assert!(m.max_abs_wz <= 1e-6 * wd, "{m:?}");
    } else {
        let gamma = match zb.regime {
            impulse_core::network::LeakRegime::Spread { gamma, .. } => gamma,
            _ => unreachable!(),
        };
        assert!(m.min_wz >= gamma * wd - 1e-9 && m.max_wz <= wd + 1e-9, "{m:?}");
    }
    assert!(m.max_lower_violation <= 1e-9 && m.max_upper_violation <= 1e-9, "{m:?}");
    assert!(m.max_d1 <= m.d1_bound + 1e-9 && m.max_d2 <= m.d2_bound + 1e-9, "{m:?}");

    // reset identity: Δz = -BᵀB e_i
    let btb = &b.transpose() * b;
    for ((pre, post), ev) in traj.event_sample_pairs().into_iter().zip(traj.events()) {
        for j in 0..b.cols() {
            let dz = traj.z(post)[j] - traj.z(pre)[j];
            assert!((dz + btb[(j, ev.unit)]).abs() <= 1e-12 * (1.0 + traj.z(pre)[j].abs()));
        }
    }

    // ẋ_c = (A - K)x - RΛz away from events, by central differences
    let a = plant.drift.linear_matrix().unwrap();
    let ControllerSpec::Connected { gain, lambdas, .. } = ctrl else { unreachable!() };
    let m_cl = &a - gain;
    let r_lam = &traj.aux_map().clone() * &Mat::diag(lambdas);
    let grid: Vec<usize> = (0..traj.len()).filter(|&i| traj.kind(i) == SampleKind::Grid).collect();
    let mut checked = 0;
    for w3 in grid.windows(3) {
        let (i0, i1, i2) = (w3[0], w3[1], w3[2]);
        if i2 - i0 != 2 {
            continue; // an event lies inside the stencil
        }
        let h = traj.t(i2) - traj.t(i0);
        let rhs: Vec<f64> = m_cl
            .mul_vec(traj.x(i1))
            .iter()
            .zip(r_lam.mul_vec(traj.z(i1)))
            .map(|(p, q)| p - q)
            .collect();
        for (k, r) in rhs.iter().enumerate() {
            let fd = (traj.xc(i2)[k] - traj.xc(i0)[k]) / h;
            assert!((fd - r).abs() <= 1e-5 * (1.0 + r.abs()), "t = {}: {fd} vs {r}", traj.t(i1));
        }
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn connected_axis_pairs_spread_leak() {
    let (plant, _) = ex::connected_system();
    let ctrl = connected(impulse_core::model::axis_pair_matrix(2), vec![0.2, 0.2, 0.4, 0.4], 1.5);
    check_connected(&plant, &ctrl, &ex::FIG4_X0, &SimConfig::new(20.0, 1e-3, 1e-9));
}

#[test]
fn connected_demo_identities() {
    let (plant, ctrl) = ex::connected_system();
    check_connected(&plant, &ctrl, &ex::FIG4_X0, &SimConfig::new(20.0, 1e-3, 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn connected_random_frames(
        extra in proptest::array::uniform2(-1.0f64..1.0),
        lam in 0.0f64..1.0,
        omega in -2.0f64..2.0,
        x0 in proptest::array::uniform2(-3.0f64..3.0),
    ) {
        // ± axes plus one extra direction keep the steering condition
        let mut b = Mat::zeros(2, 5);
        for (col, (r, v)) in [(0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0)].into_iter().enumerate() {
            b[(r, col)] = v;
        }
        b[(0, 4)] = extra[0];
        b[(1, 4)] = extra[1];
        prop_assume!(linalg::norm(&extra) > 0.1);
        let plant = PlantSpec::new(2, Drift::RotationScaling { a: 0.5, omega });
        let ctrl = connected(b, vec![lam; 5], 1.5);
        check_connected(&plant, &ctrl, &x0, &SimConfig::new(6.0, 1e-3, 1e-9));
    }
}
