//! Plant and controller descriptions plus the structural checks that must
//! hold before a system can be simulated or bounded.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown drift `{0}` (known: linear, rotation_scaling, cubic_damped)")]
    UnknownDrift(String),
    #[error("drift `{name}` expects {expected}, got {got} parameter(s)")]
    DriftParams { name: String, expected: String, got: usize },
    #[error("input function is not linear: B Θ⁻¹ g(x) differs from a linear map by {max_error:e}")]
    NotLinear { max_error: f64 },
    #[error("operation needs an independent-units controller")]
    NotIndependent,
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Drift `f` of `ẋ = f(x) + B s(t)`. Every variant satisfies `f(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    /// `f(x) = A x`
    Linear(Mat),
    /// `f(x) = [[a, ω], [-ω, a]] x` on a two-dimensional state.
    RotationScaling { a: f64, omega: f64 },
    /// `f(x)_i = a x_i - c x_i³`, elementwise.
    CubicDamped { a: f64, c: f64 },
}

impl Drift {
    pub const REGISTRY: [&'static str; 3] = ["linear", "rotation_scaling", "cubic_damped"];

    /// Looks a drift up by registry name. `linear` takes the row-major
    /// `dim × dim` matrix as its parameters.
    pub fn from_registry(name: &str, params: &[f64], dim: usize) -> Result<Drift, ModelError> {
        let wrong = |expected: &str| ModelError::DriftParams {
            name: name.to_string(),
            expected: expected.to_string(),
            got: params.len(),
        };
        match name {
            "linear" => {
                if params.len() != dim * dim {
                    return Err(wrong(&format!("{} (row-major {dim}x{dim} matrix)", dim * dim)));
                }
                Ok(Drift::Linear(Mat::from_row_major(dim, dim, params.to_vec())?))
            }
            "rotation_scaling" => match params {
                [a, omega] => Ok(Drift::RotationScaling { a: *a, omega: *omega }),
                _ => Err(wrong("2 (a, omega)")),
            },
            "cubic_damped" => match params {
                [a, c] => Ok(Drift::CubicDamped { a: *a, c: *c }),
                _ => Err(wrong("2 (a, c)")),
            },
            other => Err(ModelError::UnknownDrift(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Drift::Linear(_) => "linear",
            Drift::RotationScaling { .. } => "rotation_scaling",
            Drift::CubicDamped { .. } => "cubic_damped",
        }
    }

    /// Registry parameters, the inverse of [`Drift::from_registry`].
    pub fn params(&self) -> Vec<f64> {
        match self {
            Drift::Linear(a) => a.as_slice().to_vec(),
            Drift::RotationScaling { a, omega } => vec![*a, *omega],
            Drift::CubicDamped { a, c } => vec![*a, *c],
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Linear(a) => a.mul_vec_into(x, out),
            Drift::RotationScaling { a, omega } => {
                out[0] = a * x[0] + omega * x[1];
                out[1] = -omega * x[0] + a * x[1];
            }
            Drift::CubicDamped { a, c } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = a * xi - c * xi * xi * xi;
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// The matrix `A` when the drift is linear.
    pub fn linear_matrix(&self) -> Option<Mat> {
        match self {
            Drift::Linear(a) => Some(a.clone()),
            Drift::RotationScaling { a, omega } => Some(Mat::from_rows(&[[*a, *omega], [-omega, *a]])),
            Drift::CubicDamped { .. } => None,
        }
    }

    fn required_dim(&self) -> Option<usize> {
        match self {
            Drift::Linear(a) => Some(a.rows()),
            Drift::RotationScaling { .. } => Some(2),
            Drift::CubicDamped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub dim: usize,
    pub drift: Drift,
}

impl PlantSpec {
    pub fn new(dim: usize, drift: Drift) -> Self {
        PlantSpec { dim, drift }
    }

    pub fn linear(a: Mat) -> Self {
        PlantSpec { dim: a.rows(), drift: Drift::Linear(a) }
    }

    pub fn scalar(a: f64) -> Self {
        PlantSpec::linear(Mat::from_rows(&[[a]]))
    }
}

/// `g_i(x) = c_i · [V_i · x]₊`, one row of `V` per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFn {
    pub directions: Mat,
    pub scales: Vec<f64>,
}

impl InputFn {
    pub fn new(directions: Mat, scales: Vec<f64>) -> Self {
        InputFn { directions, scales }
    }

    /// `([x]₊, [-x]₊)` on a scalar state.
    pub fn scalar_pair() -> Self {
        InputFn::new(Mat::from_rows(&[[1.0], [-1.0]]), vec![1.0, 1.0])
    }

    /// `([x_0]₊, [-x_0]₊, [x_1]₊, [-x_1]₊, …)` on a `dim`-dimensional state.
    pub fn axis_pairs(dim: usize) -> Self {
        let mut v = Mat::zeros(2 * dim, dim);
        for k in 0..dim {
            v[(2 * k, k)] = 1.0;
            v[(2 * k + 1, k)] = -1.0;
        }
        InputFn::new(v, vec![1.0; 2 * dim])
    }

    pub fn units(&self) -> usize {
        self.directions.rows()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let proj = linalg::dot(self.directions.row(i), x);
            // [0]₊ = 0
            *o = if proj > 0.0 { self.scales[i] * proj } else { 0.0 };
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.units()];
        self.eval_into(x, &mut out);
        out
    }

    /// Slope `L` with `g_i(x) ≤ L ‖x‖` for every unit.
    pub fn growth_slope(&self) -> f64 {
        (0..self.units())
            .map(|i| self.scales[i] * linalg::norm(self.directions.row(i)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    /// Uncoupled LIF units: `ż = -Λz + g(x) - Θ s`, fire at `z_i = θ_i`.
    Independent { b: Mat, thetas: Vec<f64>, lambdas: Vec<f64>, input: InputFn },
    /// Units coupled through the reset matrix `BᵀB`:
    /// `ż = -Λz + Bᵀ k(x) - BᵀB s` with `k(x) = -K_g x`, fire at `z_i ≥ B_iᵀB_i`.
    Connected { b: Mat, lambdas: Vec<f64>, gain: Mat },
}

impl ControllerSpec {
    /// The Fig. 2 family: `B = [-α, α]`, equal thresholds and leaks, `g = ([x]₊, [-x]₊)`.
    pub fn scalar_pair(alpha: f64, theta: f64, lambda: f64) -> Self {
        ControllerSpec::Independent {
            b: Mat::from_rows(&[[-alpha, alpha]]),
            thetas: vec![theta; 2],
            lambdas: vec![lambda; 2],
            input: InputFn::scalar_pair(),
        }
    }

    /// Per-axis `±` pairs of unit impulses on a `dim`-dimensional state.
    pub fn axis_pairs(dim: usize, theta: f64, lambda: f64) -> Self {
        ControllerSpec::Independent {
            b: axis_pair_matrix(dim),
            thetas: vec![theta; 2 * dim],
            lambdas: vec![lambda; 2 * dim],
            input: InputFn::axis_pairs(dim),
        }
    }

    pub fn b(&self) -> &Mat {
        match self {
            ControllerSpec::Independent { b, .. } | ControllerSpec::Connected { b, .. } => b,
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        match self {
            ControllerSpec::Independent { lambdas, .. } | ControllerSpec::Connected { lambdas, .. } => {
                lambdas
            }
        }
    }

    pub fn units(&self) -> usize {
        self.b().cols()
    }

    pub fn topology(&self) -> &'static str {
        match self {
            ControllerSpec::Independent { .. } => "independent",
            ControllerSpec::Connected { .. } => "connected",
        }
    }

    /// Firing thresholds: `θ_i`, or `B_iᵀB_i` for connected units.
    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            ControllerSpec::Independent { thetas, .. } => thetas.clone(),
            ControllerSpec::Connected { b, .. } => column_sq_norms(b),
        }
    }

    /// Matrix `M` with `x_c = x + M z`: `BΘ⁻¹` or `(BBᵀ)⁻¹B`.
    pub fn aux_map(&self) -> Result<Mat, linalg::LinalgError> {
        match self {
            ControllerSpec::Independent { b, thetas, .. } => {
                let inv: Vec<f64> = thetas.iter().map(|t| 1.0 / t).collect();
                Ok(b * &Mat::diag(&inv))
            }
            ControllerSpec::Connected { b, .. } => {
                let gram = b * &b.transpose();
                Ok(&linalg::inverse(&gram)? * b)
            }
        }
    }
}

pub fn axis_pair_matrix(dim: usize) -> Mat {
    let mut b = Mat::zeros(dim, 2 * dim);
    for k in 0..dim {
        b[(k, 2 * k)] = -1.0;
        b[(k, 2 * k + 1)] = 1.0;
    }
    b
}

pub fn column_sq_norms(b: &Mat) -> Vec<f64> {
    (0..b.cols()).map(|j| (0..b.rows()).map(|r| b[(r, j)].powi(2)).sum()).collect()
}

/// True when the columns of `B` conically span the state space, i.e. every
/// `-B_i` is a nonnegative combination of the columns.
pub fn steering_condition_holds(b: &Mat) -> bool {
    if b.cols() == 0 {
        return b.rows() == 0;
    }
    (0..b.cols()).all(|i| {
        let target: Vec<f64> = b.column(i).iter().map(|v| -v).collect();
        linalg::nnls(b, &target).is_ok()
    }) && linalg::inverse(&(b * &b.transpose())).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch(String),
    NonPositiveThreshold { unit: usize },
    NegativeLeak { unit: usize },
    NegativeInputScale { unit: usize },
    ZeroColumn { unit: usize },
    SteeringFails,
    NonFinite(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            Violation::NonPositiveThreshold { unit } => {
                write!(f, "threshold must be positive (unit {unit})")
            }
            Violation::NegativeLeak { unit } => write!(f, "leak must be nonnegative (unit {unit})"),
            Violation::NegativeInputScale { unit } => {
                write!(f, "input scale must be nonnegative (unit {unit})")
            }
            Violation::ZeroColumn { unit } => {
                write!(f, "column {unit} of B is zero, so its threshold B_iᵀB_i vanishes")
            }
            Violation::SteeringFails => {
                write!(f, "steering condition fails: columns of B do not conically span the state space")
            }
            Violation::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate(plant: &PlantSpec, ctrl: &ControllerSpec) -> ValidationReport {
    let mut v = Vec::new();
    let k = plant.dim;
    if let Some(d) = plant.drift.required_dim() {
        if d != k {
            v.push(Violation::DimensionMismatch(format!("drift acts on dimension {d}, plant has {k}")));
        }
    }
    if let Drift::Linear(a) = &plant.drift {
        if !a.is_square() {
            v.push(Violation::DimensionMismatch("drift matrix A is not square".into()));
        }
    }
    if plant.drift.params().iter().any(|p| !p.is_finite()) {
        v.push(Violation::NonFinite("drift parameters".into()));
    }

    let b = ctrl.b();
    let n = b.cols();
    if b.rows() != k {
        v.push(Violation::DimensionMismatch(format!("B has {} rows, plant has dimension {k}", b.rows())));
    }
    if ctrl.lambdas().len() != n {
        v.push(Violation::DimensionMismatch(format!("{} leaks for {n} units", ctrl.lambdas().len())));
    }
    for (i, &l) in ctrl.lambdas().iter().enumerate() {
        if !l.is_finite() {
            v.push(Violation::NonFinite(format!("leak of unit {i}")));
        } else if l < 0.0 {
            v.push(Violation::NegativeLeak { unit: i });
        }
    }

    match ctrl {
        ControllerSpec::Independent { thetas, input, .. } => {
            if thetas.len() != n {
                v.push(Violation::DimensionMismatch(format!("{} thresholds for {n} units", thetas.len())));
            }
            for (i, &t) in thetas.iter().enumerate() {
                if !(t > 0.0) || !t.is_finite() {
                    v.push(Violation::NonPositiveThreshold { unit: i });
                }
            }
            if input.directions.rows() != n || input.scales.len() != n {
                v.push(Violation::DimensionMismatch(format!(
                    "input function defines {} directions and {} scales for {n} units",
                    input.directions.rows(),
                    input.scales.len()
                )));
            }
            if input.directions.cols() != k {
                v.push(Violation::DimensionMismatch(format!(
                    "input directions have dimension {}, plant has {k}",
                    input.directions.cols()
                )));
            }
            for (i, &c) in input.scales.iter().enumerate() {
                if !(c >= 0.0) {
                    v.push(Violation::NegativeInputScale { unit: i });
                }
            }
        }
        ControllerSpec::Connected { gain, .. } => {
            if gain.rows() != k || gain.cols() != k {
                v.push(Violation::DimensionMismatch(format!(
                    "gain is {}x{}, plant has dimension {k}",
                    gain.rows(),
                    gain.cols()
                )));
            }
            let norms = column_sq_norms(b);
            let mut any_zero = false;
            for (i, &d) in norms.iter().enumerate() {
                if d <= 0.0 {
                    any_zero = true;
                    v.push(Violation::ZeroColumn { unit: i });
                }
            }
            if b.rows() == k && !any_zero && !steering_condition_holds(b) {
                v.push(Violation::SteeringFails);
            }
        }
    }
    ValidationReport { violations: v }
}

const PROBES: usize = 100;
const PROBE_TOL: f64 = 1e-10;

/// Finds `K_g` with `BΘ⁻¹g(x) = -K_g x`, or reports that the map is only
/// piecewise linear.
///
/// With `[y]₊ = (y + |y|)/2`, the linear part is `½ Σ_i (c_i/θ_i) B_i V_iᵀ`;
/// the candidate is then checked on seeded random probe points, which
/// exposes any surviving `|·|` terms.
pub fn derive_linear_gain(ctrl: &ControllerSpec) -> Result<Mat, ModelError> {
    let ControllerSpec::Independent { b, thetas, input, .. } = ctrl else {
        return Err(ModelError::NotIndependent);
    };
    let k = b.rows();
    let n = b.cols();
    let mut gain = Mat::zeros(k, k);
    for i in 0..n {
        let w = 0.5 * input.scales[i] / thetas[i];
        for r in 0..k {
            for c in 0..k {
                gain[(r, c)] -= w * b[(r, i)] * input.directions[(i, c)];
            }
        }
    }

    let aux = ctrl.aux_map()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let kx = aux.mul_vec(&input.eval(&x));
        let gx = gain.mul_vec(&x);
        let err = kx.iter().zip(&gx).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / (1.0 + linalg::norm(&x)));
    }
    if worst > PROBE_TOL {
        return Err(ModelError::NotLinear { max_error: worst });
    }
    Ok(gain)
}
