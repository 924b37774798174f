//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use impulse_core::bounds::{self, BoundKind};
use impulse_core::experiments::{self as ex, Fig3Config};
use impulse_core::linalg::{self, cube_norm, solve_lyapunov, spectral_norm, Mat};
use impulse_core::sim::{exact_sim_1d, simulate, SimConfig, SimError};
use impulse_core::sweep::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn report_of(reports: &[bounds::BoundReport], kind: BoundKind) -> &bounds::BoundReport {
    reports.iter().find(|r| r.kind == kind).expect("report present")
}

fn scalar_envelope() -> Outcome {
    let start = Instant::now();
    let (plant, ctrl) = ex::fig2_system(3.0);
    let traj = simulate(&plant, &ctrl, &[ex::FIG2_X0], &ex::fig2_config()).unwrap();
    let elapsed = start.elapsed();
    let reports = bounds::all_reports(&plant, &ctrl).unwrap();
    let r = report_of(&reports, BoundKind::Scalar);
    let params_ok = r.applicable && r.prefactor == 1.0 && r.decay_rate == -0.75 && (r.ultimate_bound - 2.0).abs() < 1e-12;
    let violation = ex::envelope_violation(&traj, r);
    outcome(
        params_ok && violation <= 1e-6 && elapsed < Duration::from_secs(1),
        format!(
            "λ=3: |x| ≤ 2e^(-0.75t) + 2, max violation {violation:.3e}, {} samples in {:.3}s",
            traj.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn sign_partitioned_envelope() -> Outcome {
    let runs = ex::fig2(&[0.0, 1.5], Execution::Sequential).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for run in &runs {
        let r = report_of(&run.reports, BoundKind::SignPartitioned);
        pass &= r.applicable && r.decay_rate == -1.5 && r.ultimate_bound == 1.0;
        let v = ex::envelope_violation(&run.trajectory, r);
        pass &= v <= 1e-6;
        parts.push(format!("λ={} violation {v:.3e}", run.lambda));
    }
    // Pre-event values approach the ultimate bound 1 from above, so the
    // window maximum exceeds 1 by a transient that the certified envelope
    // 1 + 2e^(-1.5t) already covers; that envelope caps the window.
    let r = report_of(&runs[1].reports, BoundKind::SignPartitioned);
    let cap = r.envelope(ex::FIG2_X0, 5.0);
    let tail = runs[1].trajectory.max_norm_between(5.0, 10.0);
    pass &= tail >= 0.5 && tail <= cap;
    parts.push(format!("λ=1.5 max|x| on [5,10] = {tail:.10} (ultimate bound 1, cap {cap:.6})"));
    outcome(pass, format!("|x| ≤ 2e^(-1.5t) + 1: {}", parts.join(", ")))
}

fn separatrix() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lam in [0.0, 3.0] {
        let cfg = Fig3Config::new(21, lam);
        let start = Instant::now();
        let cells = ex::fig3(&cfg, Execution::from_env()).unwrap();
        let elapsed = start.elapsed();
        let wrong = ex::fig3_misclassified(&cells);
        let scored = cells.iter().filter(|c| !c.band).count();
        pass &= wrong.is_empty() && elapsed < Duration::from_secs(300);
        parts.push(format!(
            "λ={lam}: {}/{scored} off-band cells correct, {} diverged, {:.1}s",
            scored - wrong.len(),
            cells.iter().filter(|c| c.diverged).count(),
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, format!("21×21 sign(C) = sign(a-b): {}", parts.join("; ")))
}

fn rotation_bounds() -> Outcome {
    let runs = ex::fig4(&ex::FIG4_OMEGAS, Execution::Sequential).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (run, expected) in runs.iter().zip([3.0 * 2f64.sqrt(), 8.0 * 2f64.sqrt()]) {
        let p_err = (&run.certificate - &Mat::identity(2)).max_abs();
        let c = run.rotation.ultimate_bound;
        pass &= p_err <= 1e-10 && run.rotation.applicable && (c - expected).abs() < 1e-12 && run.limsup <= c;
        parts.push(format!(
            "ω={}: ‖P-I‖ {p_err:.1e}, bound {c:.4}, observed {:.4}, ratio {:.3}",
            run.omega,
            run.limsup,
            run.conservatism()
        ));
    }
    pass &= runs[1].conservatism() > runs[0].conservatism();
    outcome(pass, parts.join("; "))
}

fn oracle_equivalence() -> Outcome {
    // 20 events need a longer horizon than the T = 10 figure runs.
    let t_end = 20.0;
    let (plant, ctrl) = ex::fig2_system(0.0);
    let rk = simulate(&plant, &ctrl, &[ex::FIG2_X0], &SimConfig::new(t_end, 1e-4, 1e-9)).unwrap();
    let exact = exact_sim_1d(1.0, -1.0, 1.0, ex::FIG2_THETA, 0.0, ex::FIG2_X0, t_end).unwrap();
    let n = rk.events().len().min(exact.events().len());
    let dt_max = rk.events()[..n.min(20)]
        .iter()
        .zip(exact.events())
        .map(|(a, b)| if a.unit == b.unit { (a.t - b.t).abs() } else { f64::INFINITY })
        .fold(0.0, f64::max);
    let dx = (rk.final_x()[0] - exact.final_x()[0]).abs();
    outcome(
        n >= 20 && dt_max <= 1e-6 && dx <= 1e-5,
        format!("λ=0, T={t_end}: {n} events, first-20 max |Δt| {dt_max:.2e}, |Δx(T)| {dx:.2e}"),
    )
}

fn inter_event_gaps() -> Outcome {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    let tol = 1e-9;
    for run in ex::fig2(&ex::FIG2_LAMBDAS, Execution::Sequential).unwrap() {
        for g in ex::gap_checks(&run.trajectory, &ex::fig2_system(run.lambda).1) {
            pass &= g.holds(tol);
            if let Some(m) = g.min_gap {
                worst = worst.min(m - g.lower_bound);
                checked += 1;
            }
        }
    }
    for run in ex::fig4(&ex::FIG4_OMEGAS, Execution::Sequential).unwrap() {
        for g in ex::gap_checks(&run.trajectory, &ex::fig4_system(run.omega).1) {
            pass &= g.holds(tol);
            if let Some(m) = g.min_gap {
                worst = worst.min(m - g.lower_bound);
                checked += 1;
            }
        }
    }
    outcome(pass, format!("{checked} units checked, smallest margin min_gap - lower = {worst:.3e}"))
}

fn auxiliary_invariants() -> Outcome {
    let mut pass = true;
    let mut runs = Vec::new();
    for run in ex::fig2(&ex::FIG2_LAMBDAS, Execution::Sequential).unwrap() {
        runs.push((run.trajectory, ex::fig2_system(run.lambda).1));
    }
    for run in ex::fig4(&ex::FIG4_OMEGAS, Execution::Sequential).unwrap() {
        runs.push((run.trajectory, ex::fig4_system(run.omega).1));
    }
    let (mut dev_margin, mut xc_jump, mut x_jump) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (traj, ctrl) in &runs {
        let c = ex::aux_check(traj, ctrl, cube_norm(ctrl.b()).unwrap());
        pass &= c.max_deviation <= c.deviation_bound + 1e-9 && c.max_xc_jump <= 1e-6 && c.max_x_jump_error <= 1e-12;
        dev_margin = dev_margin.min(c.deviation_bound - c.max_deviation);
        xc_jump = xc_jump.max(c.max_xc_jump);
        x_jump = x_jump.max(c.max_x_jump_error);
    }
    let demo = ex::connected_demo().unwrap();
    let c = ex::aux_check(&demo.trajectory, &ex::connected_system().1, demo.monitor.d1_bound);
    pass &= c.max_deviation <= c.deviation_bound + 1e-9 && c.max_xc_jump <= 1e-6 && c.max_x_jump_error <= 1e-12;
    outcome(
        pass,
        format!(
            "{} independent runs: min(‖B‖ - ‖x_c - x‖) {dev_margin:.3e}, max x_c jump {xc_jump:.2e}, max |‖Δx‖ - ‖B_i‖| {x_jump:.1e}; connected: ‖x_c - x‖ {:.3} ≤ {:.3}, x_c jump {:.2e}",
            runs.len(),
            c.max_deviation,
            c.deviation_bound,
            c.max_xc_jump
        ),
    )
}

fn sign_alternation() -> Outcome {
    let (plant, ctrl) = ex::fig2_system(0.0);
    let traj = simulate(&plant, &ctrl, &[ex::FIG2_X0], &ex::fig2_config()).unwrap();
    let alternates = ex::sign_alternates_after_first_change(&traj);
    outcome(
        alternates,
        format!("λ=0: {} events, {} sign changes, alternating after the first", traj.events().len(), ex::sign_changes(&traj)),
    )
}

fn connected_invariants() -> Outcome {
    let demo = ex::connected_demo().unwrap();
    let m = &demo.monitor;
    let wd: f64 = linalg::dot(&demo.weight.w, &demo.zbounds.upper);
    let pass = m.max_abs_wz <= 1e-6 * wd
        && m.max_upper_violation <= 1e-9
        && m.max_lower_violation <= 1e-9
        && demo.bound.applicable
        && demo.limsup <= demo.bound.ultimate_bound;
    outcome(
        pass,
        format!(
            "{} events: max|wᵀz| {:.2e} (limit {:.1e}), upper slack {:.2e}, lower slack {:.2e}, ‖x‖ on [10,20] {:.3} ≤ {:.3}",
            demo.trajectory.events().len(),
            m.max_abs_wz,
            1e-6 * wd,
            -m.max_upper_violation,
            -m.max_lower_violation,
            demo.limsup,
            demo.bound.ultimate_bound
        ),
    )
}

fn nonlinear_ball() -> Outcome {
    let cfg = SimConfig::new(20.0, 1e-4, 1e-9);
    let mut pass = true;
    let mut parts = Vec::new();
    for lam in ex::FIG2_LAMBDAS {
        let (plant, ctrl) = ex::cubic_system(lam);
        let radius = ex::cubic_radius(lam);
        let mut worst: f64 = 0.0;
        for x0 in [-10.0, -2.0, 2.0, 10.0] {
            match simulate(&plant, &ctrl, &[x0], &cfg) {
                Ok(traj) => worst = worst.max(traj.max_norm_between(cfg.t_end / 2.0, cfg.t_end)),
                Err(SimError::Diverged { .. }) => {
                    pass = false;
                    worst = f64::INFINITY;
                }
                Err(e) => panic!("{e}"),
            }
        }
        pass &= worst <= radius;
        parts.push(format!("λ={lam}: max|x| on [10,20] {worst:.3} ≤ {radius:.3}"));
    }
    outcome(pass, format!("cubic damping, x0 ∈ {{±2, ±10}}: {}", parts.join(", ")))
}

fn linalg_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_res: f64 = 0.0;
    for trial in 0..100 {
        let n = 1 + trial % 6;
        let mut r = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let m = &r - &Mat::identity(n).scale(spectral_norm(&r) + rng.random_range(0.05..1.0));
        let q = Mat::identity(n);
        let p = solve_lyapunov(&m, &q).unwrap();
        let res = (&(&(&p * &m) + &(&m.transpose() * &p)) + &q).max_abs();
        worst_res = worst_res.max(res);
    }

    // Uniform lattice over [0,1]³ (vertices included), 47³ ≈ 10⁵ points.
    let mut worst_gap: f64 = 0.0;
    let mut undershoot_ok = true;
    for _ in 0..10 {
        let mut b = Mat::zeros(2, 3);
        for i in 0..2 {
            for j in 0..3 {
                b[(i, j)] = rng.random_range(-2.0..2.0);
            }
        }
        let exact = cube_norm(&b).unwrap();
        let steps = 46;
        let mut lattice: f64 = 0.0;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let s = [i, j, k].map(|v| v as f64 / steps as f64);
                    lattice = lattice.max(linalg::norm(&b.mul_vec(&s)));
                }
            }
        }
        undershoot_ok &= lattice <= exact + 1e-12;
        worst_gap = worst_gap.max(exact - lattice);
    }

    let mut worst_reduce: f64 = 0.0;
    let pair = Mat::from_rows(&[[-1.0, 1.0]]);
    for (a, b, lam) in [(1.0, 2.5, 3.0), (1.0, 2.5, 0.0), (-0.5, 0.7, 1.2), (2.0, 4.0, 0.3)] {
        let s = bounds::scalar_bound(a, b, lam, &pair).unwrap();
        let l = bounds::lyapunov_bound(&Mat::from_rows(&[[a]]), &Mat::from_rows(&[[b]]), &pair, &[lam, lam]).unwrap();
        worst_reduce = worst_reduce
            .max((s.decay_rate - l.decay_rate).abs())
            .max((s.ultimate_bound - l.ultimate_bound).abs())
            .max((s.prefactor - l.prefactor).abs());
    }
    outcome(
        worst_res <= 1e-10 && undershoot_ok && worst_gap <= 1e-2 && worst_reduce <= 1e-12,
        format!(
            "Lyapunov residual max {worst_res:.1e} over 100; cube-norm lattice gap max {worst_gap:.1e}; 1×1 reduction error {worst_reduce:.1e}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("scalar envelope dominance", scalar_envelope),
        ("sign-partitioned envelope and tightness", sign_partitioned_envelope),
        ("stability separatrix", separatrix),
        ("Lyapunov certificate and rotation bounds", rotation_bounds),
        ("exact oracle equivalence", oracle_equivalence),
        ("inter-event lower bound", inter_event_gaps),
        ("auxiliary-variable invariants", auxiliary_invariants),
        ("sign alternation", sign_alternation),
        ("connected-units invariants", connected_invariants),
        ("nonlinear ultimate ball", nonlinear_ball),
        ("linear-algebra suite", linalg_suite),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
