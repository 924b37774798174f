//! The reference experiments and the trajectory checks run against them.

use serde::Serialize;

use crate::bounds::{self, BoundReport, BoundsError};
use crate::linalg::{self, cube_norm, Mat};
use crate::model::{axis_pair_matrix, ControllerSpec, Drift, PlantSpec};
use crate::network::{self, MonitorReport, NetworkError, NullWeight, ZBounds};
use crate::sim::{
    simulate, simulate_with, stability_measure, HybridTrajectory, SampleKind, SimConfig, SimError, SimOptions,
};
use crate::sweep::{self, Execution};

/// Scalar pair family: `ẋ = x`, `B = [-1, 1]`, `θ = 1/2.5`, `g = ([x]₊, [-x]₊)`.
pub const FIG2_LAMBDAS: [f64; 3] = [3.0, 1.5, 0.0];
pub const FIG2_X0: f64 = 2.0;
pub const FIG2_THETA: f64 = 0.4;

pub fn fig2_system(lam: f64) -> (PlantSpec, ControllerSpec) {
    (PlantSpec::scalar(1.0), ControllerSpec::scalar_pair(1.0, FIG2_THETA, lam))
}

pub fn fig2_config() -> SimConfig {
    SimConfig::new(10.0, 1e-4, 1e-9)
}

#[derive(Debug, Clone)]
pub struct Fig2Run {
    pub lambda: f64,
    pub trajectory: HybridTrajectory,
    pub reports: Vec<BoundReport>,
}

pub fn fig2(lambdas: &[f64], exec: Execution) -> Result<Vec<Fig2Run>, SimError> {
    sweep::map(lambdas, exec, |&lam| {
        let (plant, ctrl) = fig2_system(lam);
        let trajectory = simulate(&plant, &ctrl, &[FIG2_X0], &fig2_config())?;
        let reports = bounds::all_reports(&plant, &ctrl).expect("scalar pair bounds are computable");
        Ok(Fig2Run { lambda: lam, trajectory, reports })
    })
    .into_iter()
    .collect()
}

/// `t` followed by the scalar and sign-partitioned envelopes for each run,
/// on the first run's sample times. Inapplicable envelopes are `inf`.
pub fn fig2_bounds_table(runs: &[Fig2Run]) -> (Vec<String>, Vec<Vec<f64>>) {
    let picks = [bounds::BoundKind::Scalar, bounds::BoundKind::SignPartitioned];
    let mut columns = vec!["t".to_string()];
    for run in runs {
        columns.push(format!("scalar_lambda_{}", run.lambda));
        columns.push(format!("sign_partitioned_lambda_{}", run.lambda));
    }
    let Some(first) = runs.first() else {
        return (columns, Vec::new());
    };
    let x0 = linalg::norm(first.trajectory.initial_x());
    let rows = (0..first.trajectory.len())
        .filter(|&i| first.trajectory.kind(i) == SampleKind::Grid)
        .map(|i| {
            let t = first.trajectory.t(i);
            let mut row = vec![t];
            for run in runs {
                for kind in picks {
                    let env = run.reports.iter().find(|r| r.kind == kind).map_or(f64::INFINITY, |r| r.envelope(x0, t));
                    row.push(env);
                }
            }
            row
        })
        .collect();
    (columns, rows)
}

/// Heatmap cell: `a` on `[0, 5]`, `b` on `(0, 5]`, `θ = 1/b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatCell {
    pub i: usize,
    pub j: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub c: f64,
    pub diverged: bool,
    /// `|a - b| < 0.25`: growth is sub-exponential near the diagonal, so the
    /// sign of `C` is not classified there.
    pub band: bool,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig3Config {
    pub grid: usize,
    pub lambda: f64,
    pub x0: f64,
    pub sim: SimConfig,
    pub overflow_guard: f64,
}

pub const BAND_HALF_WIDTH: f64 = 0.25;

impl Fig3Config {
    pub fn new(grid: usize, lambda: f64) -> Self {
        Fig3Config {
            grid,
            lambda,
            x0: 50.5,
            sim: SimConfig::new(200.0, 1e-3, 1e-9),
            overflow_guard: 1e3 * 50.5,
        }
    }

    pub fn a(&self, i: usize) -> f64 {
        5.0 * i as f64 / (self.grid - 1) as f64
    }

    pub fn b(&self, j: usize) -> f64 {
        5.0 * (j + 1) as f64 / self.grid as f64
    }
}

pub fn fig3_cell(cfg: &Fig3Config, i: usize, j: usize) -> Result<HeatCell, SimError> {
    Ok(HeatCell { i, j, ..fig3_point(cfg, cfg.a(i), cfg.b(j))? })
}

/// One heatmap evaluation at an arbitrary `(a, b)`, `b > 0`.
pub fn fig3_point(cfg: &Fig3Config, a: f64, b: f64) -> Result<HeatCell, SimError> {
    let plant = PlantSpec::scalar(a);
    let ctrl = ControllerSpec::scalar_pair(1.0, 1.0 / b, cfg.lambda);
    let opts = SimOptions { record_samples: false, overflow_guard: cfg.overflow_guard };
    let (traj, diverged) = match simulate_with(&plant, &ctrl, &[cfg.x0], &cfg.sim, &opts) {
        Ok(t) => (t, false),
        Err(SimError::Diverged { trajectory, .. }) => (*trajectory, true),
        Err(e) => return Err(e),
    };
    Ok(HeatCell {
        i: 0,
        j: 0,
        a,
        b,
        lambda: cfg.lambda,
        c: stability_measure(&traj)?,
        diverged,
        band: (a - b).abs() < BAND_HALF_WIDTH,
        events: traj.events().len(),
    })
}

/// All cells in row-major `(i, j)` order regardless of execution mode.
pub fn fig3(cfg: &Fig3Config, exec: Execution) -> Result<Vec<HeatCell>, SimError> {
    assert!(cfg.grid >= 2, "grid must be at least 2");
    let idx: Vec<(usize, usize)> = (0..cfg.grid).flat_map(|i| (0..cfg.grid).map(move |j| (i, j))).collect();
    sweep::map(&idx, exec, |&(i, j)| fig3_cell(cfg, i, j)).into_iter().collect()
}

/// Off-band cells whose sign of `C` disagrees with the sign of `a - b`.
pub fn fig3_misclassified(cells: &[HeatCell]) -> Vec<HeatCell> {
    cells.iter().filter(|c| !c.band && (c.c < 0.0) != (c.a < c.b)).copied().collect()
}

/// Rotating plant `A = [[1, ω], [-ω, 1]]`, axis-pair units, `θ = 1/1.5`,
/// `λ = 0.2`.
pub const FIG4_OMEGAS: [f64; 2] = [0.5, 3.0];
pub const FIG4_X0: [f64; 2] = [4.0, 0.0];
pub const FIG4_LAMBDA: f64 = 0.2;

pub fn fig4_system(omega: f64) -> (PlantSpec, ControllerSpec) {
    (
        PlantSpec::new(2, Drift::RotationScaling { a: 1.0, omega }),
        ControllerSpec::axis_pairs(2, 1.0 / 1.5, FIG4_LAMBDA),
    )
}

pub fn fig4_config() -> SimConfig {
    SimConfig::new(20.0, 1e-4, 1e-9)
}

#[derive(Debug, Clone)]
pub struct Fig4Run {
    pub omega: f64,
    pub trajectory: HybridTrajectory,
    pub certificate: Mat,
    pub lyapunov: BoundReport,
    pub rotation: BoundReport,
    /// `max ‖x(t)‖` over the second half of the horizon.
    pub limsup: f64,
}

impl Fig4Run {
    /// Rotation-term bound over observed radius.
    pub fn conservatism(&self) -> f64 {
        self.rotation.ultimate_bound / self.limsup
    }
}

pub fn fig4(omegas: &[f64], exec: Execution) -> Result<Vec<Fig4Run>, SimError> {
    sweep::map(omegas, exec, |&omega| {
        let (plant, ctrl) = fig4_system(omega);
        let cfg = fig4_config();
        let trajectory = simulate(&plant, &ctrl, &FIG4_X0, &cfg)?;
        let a = plant.drift.linear_matrix().expect("rotation drift is linear");
        let gain = crate::model::derive_linear_gain(&ctrl).expect("axis pairs have a linear gain");
        let certificate = bounds::lyapunov_certificate(&a, &gain)?;
        let lyapunov = bounds::lyapunov_bound(&a, &gain, ctrl.b(), ctrl.lambdas())?;
        let rotation = bounds::rotation_bound(&a, &gain, ctrl.b(), FIG4_LAMBDA)?;
        let limsup = trajectory.max_norm_between(cfg.t_end / 2.0, cfg.t_end);
        Ok(Fig4Run { omega, trajectory, certificate, lyapunov, rotation, limsup })
    })
    .into_iter()
    .collect()
}

/// The rotating plant with `ω = 0.5` under connected units with
/// `k(x) = -1.5x` and equal leak `0.2`.
pub fn connected_system() -> (PlantSpec, ControllerSpec) {
    (
        PlantSpec::new(2, Drift::RotationScaling { a: 1.0, omega: 0.5 }),
        ControllerSpec::Connected {
            b: axis_pair_matrix(2),
            lambdas: vec![FIG4_LAMBDA; 4],
            gain: Mat::identity(2).scale(1.5),
        },
    )
}

pub fn connected_config() -> SimConfig {
    SimConfig::new(20.0, 1e-4, 1e-9)
}

#[derive(Debug, Clone)]
pub struct ConnectedRun {
    pub trajectory: HybridTrajectory,
    pub weight: NullWeight,
    pub zbounds: ZBounds,
    pub monitor: MonitorReport,
    pub bound: BoundReport,
    pub limsup: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub fn connected_demo() -> Result<ConnectedRun, DemoError> {
    connected_run(&connected_system().1, &FIG4_X0, &connected_config())
}

pub fn connected_run(ctrl: &ControllerSpec, x0: &[f64], cfg: &SimConfig) -> Result<ConnectedRun, DemoError> {
    let plant = connected_system().0;
    let trajectory = simulate(&plant, ctrl, x0, cfg)?;
    let weight = network::compute_null_weight(ctrl.b())?;
    let zbounds = network::z_bounds(ctrl.b(), ctrl.lambdas(), &weight)?;
    let monitor = network::monitor_connected(&trajectory, ctrl, &weight, &zbounds)?;
    let a = plant.drift.linear_matrix().expect("rotation drift is linear");
    let bound = network::connected_bound(&a, ctrl)?;
    let limsup = trajectory.max_norm_between(cfg.t_end / 2.0, cfg.t_end);
    Ok(ConnectedRun { trajectory, weight, zbounds, monitor, bound, limsup })
}

/// Cubic damping `ẋ = a x - c x³` under the scalar pair controller.
pub fn cubic_system(lam: f64) -> (PlantSpec, ControllerSpec) {
    (PlantSpec::new(1, Drift::CubicDamped { a: 1.0, c: 0.1 }), ControllerSpec::scalar_pair(1.0, FIG2_THETA, lam))
}

/// `2‖B‖_cube (1 + λ/(b - a))` with the linearized `a = 1`, `b = 1/θ`.
pub fn cubic_radius(lam: f64) -> f64 {
    let (_, ctrl) = cubic_system(lam);
    let b = 1.0 / FIG2_THETA;
    2.0 * cube_norm(ctrl.b()).expect("two columns") * (1.0 + lam / (b - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCheck {
    pub unit: usize,
    pub min_gap: Option<f64>,
    pub lower_bound: f64,
    pub g_max: f64,
}

impl GapCheck {
    pub fn holds(&self, event_tol: f64) -> bool {
        self.min_gap.is_none_or(|g| g >= self.lower_bound - 2.0 * event_tol)
    }
}

/// Per-unit minimum gap against the leaky period at the run-maximum input.
/// Empty for connected units.
pub fn gap_checks(traj: &HybridTrajectory, ctrl: &ControllerSpec) -> Vec<GapCheck> {
    let ControllerSpec::Independent { thetas, lambdas, input, .. } = ctrl else {
        return Vec::new();
    };
    let mut g_max = vec![0.0f64; thetas.len()];
    for i in 0..traj.len() {
        for (m, g) in g_max.iter_mut().zip(input.eval(traj.x(i))) {
            *m = m.max(g);
        }
    }
    traj.unit_stats()
        .iter()
        .enumerate()
        .map(|(u, st)| GapCheck {
            unit: u,
            min_gap: st.min_gap,
            lower_bound: bounds::inter_event_bounds(thetas[u], lambdas[u], 0.0, g_max[u]).map_or(0.0, |b| b.lower),
            g_max: g_max[u],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxCheck {
    /// `max ‖x_c - x‖` over samples.
    pub max_deviation: f64,
    /// Bound on `‖x_c - x‖`: `‖B‖_cube` for independent units.
    pub deviation_bound: f64,
    /// Largest `‖x_c(post) - x_c(pre)‖` over events.
    pub max_xc_jump: f64,
    /// Largest `|‖x(post) - x(pre)‖ - ‖B_i‖|` over events.
    pub max_x_jump_error: f64,
}

pub fn aux_check(traj: &HybridTrajectory, ctrl: &ControllerSpec, deviation_bound: f64) -> AuxCheck {
    let mut c = AuxCheck { max_deviation: 0.0, deviation_bound, max_xc_jump: 0.0, max_x_jump_error: 0.0 };
    let diff = |u: &[f64], v: &[f64]| linalg::norm(&u.iter().zip(v).map(|(p, q)| p - q).collect::<Vec<_>>());
    for i in 0..traj.len() {
        c.max_deviation = c.max_deviation.max(diff(traj.xc(i), traj.x(i)));
    }
    for ((pre, post), ev) in traj.event_sample_pairs().into_iter().zip(traj.events()) {
        c.max_xc_jump = c.max_xc_jump.max(diff(traj.xc(post), traj.xc(pre)));
        let jump = diff(traj.x(post), traj.x(pre));
        let expected = linalg::norm(&ctrl.b().column(ev.unit));
        c.max_x_jump_error = c.max_x_jump_error.max((jump - expected).abs());
    }
    c
}

/// Post-event signs of a scalar state alternate at every event after the
/// first sign change. False when the sign never changes.
pub fn sign_alternates_after_first_change(traj: &HybridTrajectory) -> bool {
    let signs: Vec<bool> = traj.event_sample_pairs().iter().map(|&(_, post)| traj.x(post)[0] > 0.0).collect();
    let Some(first) = signs.windows(2).position(|w| w[0] != w[1]) else {
        return false;
    };
    signs[first + 1..].windows(2).all(|w| w[0] != w[1])
}

/// Number of sign changes of a scalar state over all samples.
pub fn sign_changes(traj: &HybridTrajectory) -> usize {
    let mut last = None;
    let mut n = 0;
    for i in 0..traj.len() {
        let x = traj.x(i)[0];
        if x == 0.0 {
            continue;
        }
        let s = x > 0.0;
        if last.is_some_and(|l| l != s) {
            n += 1;
        }
        last = Some(s);
    }
    n
}

/// Largest `‖x(t)‖ - envelope(t)`; positive means the envelope was crossed.
pub fn envelope_violation(traj: &HybridTrajectory, report: &BoundReport) -> f64 {
    let x0 = linalg::norm(traj.initial_x());
    (0..traj.len())
        .map(|i| linalg::norm(traj.x(i)) - report.envelope(x0, traj.t(i)))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    #[serde(flatten)]
    pub report: BoundReport,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub topology: String,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub final_time: f64,
    pub final_x: Vec<f64>,
    pub events_per_unit: Vec<usize>,
    pub min_gap: Vec<Option<f64>>,
    pub max_gap: Vec<Option<f64>>,
    /// `log|x(T)/x(0)|/T`, scalar plants with `x0 ≠ 0` only.
    pub stability_measure: Option<f64>,
    pub bounds: Vec<BoundCheck>,
}

pub fn summarize(
    name: &str,
    plant: &PlantSpec,
    ctrl: &ControllerSpec,
    traj: &HybridTrajectory,
    t_end: f64,
) -> Result<RunSummary, BoundsError> {
    let stats = traj.unit_stats();
    let bounds = bounds::all_reports(plant, ctrl)?
        .into_iter()
        .map(|r| BoundCheck { max_violation: envelope_violation(traj, &r), report: r })
        .collect();
    Ok(RunSummary {
        name: name.to_string(),
        topology: ctrl.topology().to_string(),
        x0: traj.initial_x().to_vec(),
        t_end,
        final_time: traj.final_time(),
        final_x: traj.final_x().to_vec(),
        events_per_unit: stats.iter().map(|s| s.count).collect(),
        min_gap: stats.iter().map(|s| s.min_gap).collect(),
        max_gap: stats.iter().map(|s| s.max_gap).collect(),
        stability_measure: if plant.dim == 1 { stability_measure(traj).ok() } else { None },
        bounds,
    })
}
