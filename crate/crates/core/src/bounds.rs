//! Certified practical-stability envelopes `‖x(t)‖ ≤ D‖x0‖e^{αt} + C` and
//! inter-event time bounds.
//!
//! Every calculator returns a [`BoundReport`]; a failed hypothesis is
//! recorded as `applicable = false` with a reason rather than as an error,
//! so parameter sweeps can evaluate bounds across regimes.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, cube_norm, solve_lyapunov, spectral_norm, sym_eig, LinalgError, Mat};
use crate::model::{derive_linear_gain, ControllerSpec, InputFn, ModelError, PlantSpec};
use crate::network;

/// Leak constants below this are treated as zero in the logarithmic bounds.
const LEAK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("unit never fires: θλ/g₊ ≥ 1 or g₊ ≤ 0")]
    NoEventsEver,
    #[error("need g₊ ≥ g₋ ≥ 0 and θ > 0")]
    BadInput,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Scalar plant, two units, `b > a`.
    Scalar,
    /// Scalar plant with `b ≥ a + λ`: ultimate bound `2‖B‖`.
    ScalarSimplified,
    /// Scalar plant with sign-partitioned inputs: rate `a - b`, bound `‖B‖`.
    SignPartitioned,
    /// Multidimensional linear plant through the Lyapunov certificate `P`.
    Lyapunov,
    /// Lyapunov bound rewritten through the rotation term `S`, equal leaks.
    Rotation,
    /// Connected units, disturbances bounded through the neuronal-variable box.
    Connected,
    /// Nonlinear drift: no computable envelope.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub applicable: bool,
    pub reason: String,
    pub prefactor: f64,
    pub decay_rate: f64,
    pub ultimate_bound: f64,
    pub auxiliaries: Vec<(String, f64)>,
}

impl BoundReport {
    fn new(kind: BoundKind) -> Self {
        BoundReport {
            kind,
            applicable: false,
            reason: String::new(),
            prefactor: f64::NAN,
            decay_rate: f64::NAN,
            ultimate_bound: f64::INFINITY,
            auxiliaries: Vec::new(),
        }
    }

    fn aux(mut self, name: &str, value: f64) -> Self {
        self.auxiliaries.push((name.to_string(), value));
        self
    }

    pub fn auxiliary(&self, name: &str) -> Option<f64> {
        self.auxiliaries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// `D‖x0‖e^{αt} + C`; infinite when the report is not applicable.
    pub fn envelope(&self, x0_norm: f64, t: f64) -> f64 {
        if !self.applicable {
            return f64::INFINITY;
        }
        self.prefactor * x0_norm * (self.decay_rate * t).exp() + self.ultimate_bound
    }
}

/// Scalar plant `ẋ = a x`, analogue gain `k(x) = -b x`, equal leak `λ`:
/// rate `(a-b)/2`, ultimate bound `‖B‖_cube (1 + |a-b+λ| / |a-b|)`.
pub fn scalar_bound(a: f64, b: f64, lam: f64, input: &Mat) -> Result<BoundReport, LinalgError> {
    let cube = cube_norm(input)?;
    let d = a - b + lam;
    let mut r = BoundReport::new(BoundKind::Scalar).aux("d", d).aux("cube_norm_b", cube);
    r.prefactor = 1.0;
    r.decay_rate = (a - b) / 2.0;
    r.ultimate_bound = if a == b { f64::INFINITY } else { cube * (1.0 + d.abs() / (a - b).abs()) };
    if b > a {
        r.applicable = true;
        r.reason = format!("b = {b} > a = {a}");
    } else {
        r.reason = format!("requires b > a (b = {b}, a = {a})");
    }
    Ok(r)
}

/// Same setting with `b ≥ a + λ`: ultimate bound `2‖B‖_cube`.
pub fn scalar_simplified_bound(a: f64, b: f64, lam: f64, input: &Mat) -> Result<BoundReport, LinalgError> {
    let cube = cube_norm(input)?;
    let mut r = BoundReport::new(BoundKind::ScalarSimplified).aux("cube_norm_b", cube);
    r.prefactor = 1.0;
    r.decay_rate = (a - b) / 2.0;
    r.ultimate_bound = 2.0 * cube;
    if b > a && b >= a + lam {
        r.applicable = true;
        r.reason = format!("b = {b} ≥ a + λ = {}", a + lam);
    } else {
        r.reason = format!("requires b > a and b ≥ a + λ (b = {b}, a + λ = {})", a + lam);
    }
    Ok(r)
}

/// True when `g_1` vanishes for `x ≤ 0` and `g_2` vanishes for `x ≥ 0`.
pub fn is_sign_partitioned(g: &InputFn) -> bool {
    if g.units() != 2 || g.directions.cols() != 1 {
        return false;
    }
    let silent = |i: usize, sign: f64| g.scales[i] == 0.0 || sign * g.directions[(i, 0)] >= 0.0;
    silent(0, 1.0) && silent(1, -1.0)
}

/// Sign-partitioned inputs with `b ≥ a + λ`: rate `a - b`, ultimate bound `‖B‖_cube`.
pub fn sign_partitioned_bound(
    a: f64,
    b: f64,
    lam: f64,
    input: &Mat,
    g: &InputFn,
) -> Result<BoundReport, LinalgError> {
    let cube = cube_norm(input)?;
    let mut r = BoundReport::new(BoundKind::SignPartitioned).aux("cube_norm_b", cube);
    r.prefactor = 1.0;
    r.decay_rate = a - b;
    r.ultimate_bound = cube;
    let partitioned = is_sign_partitioned(g);
    if !partitioned {
        r.reason = "input function is not sign-partitioned".into();
    } else if !(b > a && b >= a + lam) {
        r.reason = format!("requires b > a and b ≥ a + λ (b = {b}, a + λ = {})", a + lam);
    } else {
        r.applicable = true;
        r.reason = format!("sign-partitioned inputs and b = {b} ≥ a + λ = {}", a + lam);
    }
    Ok(r)
}

/// Lyapunov certificate `P` with `P(A-K) + (A-K)ᵀP = -I`.
pub fn lyapunov_certificate(a: &Mat, gain: &Mat) -> Result<Mat, LinalgError> {
    let m = a - gain;
    solve_lyapunov(&m, &Mat::identity(m.rows()))
}

/// Linear plant `ẋ = Ax`, gain `k(x) = -K x`, per-unit leaks:
/// `D = √κ(P)`, `α = -1/(4λ_min(P))`,
/// `C = ‖B‖_cube + 2‖P((A-K)B + BΛ)‖_cube`.
pub fn lyapunov_bound(a: &Mat, gain: &Mat, input: &Mat, lambdas: &[f64]) -> Result<BoundReport, LinalgError> {
    let mut r = BoundReport::new(BoundKind::Lyapunov);
    let cube_b = cube_norm(input)?;
    r = r.aux("cube_norm_b", cube_b);
    let p = match lyapunov_certificate(a, gain) {
        Ok(p) => p,
        Err(LinalgError::NotHurwitz) => {
            r.reason = "A - K is not Hurwitz".into();
            return Ok(r);
        }
        Err(e) => return Err(e),
    };
    let eigs = sym_eig(&p)?;
    let (lmin, lmax) = (eigs[0], eigs[eigs.len() - 1]);
    let m = a - gain;
    let e = &(&m * input) + &(input * &Mat::diag(lambdas));
    let cube_pe = cube_norm(&(&p * &e))?;
    r.applicable = true;
    r.reason = "A - K is Hurwitz".into();
    r.prefactor = (lmax / lmin).sqrt();
    r.decay_rate = -1.0 / (4.0 * lmin);
    r.ultimate_bound = cube_b + 2.0 * cube_pe;
    Ok(r.aux("lambda_min_p", lmin).aux("lambda_max_p", lmax).aux("kappa_p", lmax / lmin).aux("cube_norm_pe", cube_pe))
}

/// Equal leaks `λ` with `(1/(2λ))I - P ⪰ 0`: ultimate bound
/// `2(1 + ‖S‖)‖B‖_cube`, `S = ½(P(A-K) - (A-K)ᵀP)`.
pub fn rotation_bound(a: &Mat, gain: &Mat, input: &Mat, lam: f64) -> Result<BoundReport, LinalgError> {
    let base = lyapunov_bound(a, gain, input, &vec![lam; input.cols()])?;
    let mut r = BoundReport::new(BoundKind::Rotation);
    r.auxiliaries = base.auxiliaries.clone();
    if !base.applicable {
        r.reason = base.reason;
        return Ok(r);
    }
    let p = lyapunov_certificate(a, gain)?;
    let m = a - gain;
    let pm = &p * &m;
    let s = (&pm - &pm.transpose()).scale(0.5);
    let norm_s = spectral_norm(&s);
    let cube_b = cube_norm(input)?;
    let lmax = base.auxiliary("lambda_max_p").unwrap_or(f64::INFINITY);
    r.prefactor = base.prefactor;
    r.decay_rate = base.decay_rate;
    r.ultimate_bound = 2.0 * (1.0 + norm_s) * cube_b;
    r = r.aux("norm_s", norm_s);
    // (1/(2λ))I - P ⪰ 0  ⇔  2λ λ_max(P) ≤ 1
    if lam > 0.0 && 2.0 * lam * lmax > 1.0 + 1e-12 {
        r.reason = format!("(1/(2λ))I - P is indefinite: λ_max(P) = {lmax} > 1/(2λ) = {}", 0.5 / lam);
    } else {
        r.applicable = true;
        r.reason = "A - K is Hurwitz and (1/(2λ))I - P ⪰ 0".into();
    }
    Ok(r)
}

/// Every report that makes sense for this plant/controller pair.
pub fn all_reports(plant: &PlantSpec, ctrl: &ControllerSpec) -> Result<Vec<BoundReport>, BoundsError> {
    let Some(a) = plant.drift.linear_matrix() else {
        let mut r = BoundReport::new(BoundKind::Nonlinear);
        r.reason = format!(
            "drift `{}` is nonlinear; stability is checked by simulation only",
            plant.drift.name()
        );
        return Ok(vec![r]);
    };
    let b = ctrl.b();
    let lambdas = ctrl.lambdas();
    let equal_leak = lambdas.windows(2).all(|w| w[0] == w[1]);

    match ctrl {
        ControllerSpec::Independent { thetas, input, .. } => {
            let gain = match derive_linear_gain(ctrl) {
                Ok(k) => k,
                Err(ModelError::NotLinear { max_error }) => {
                    let mut r = BoundReport::new(BoundKind::Lyapunov);
                    r.reason = format!("analogue gain BΘ⁻¹g is not linear (probe error {max_error:e})");
                    return Ok(vec![r]);
                }
                Err(e) => return Err(e.into()),
            };
            let mut out = Vec::new();
            let equal_theta = thetas.windows(2).all(|w| w[0] == w[1]);
            if plant.dim == 1 && b.cols() == 2 && equal_leak && equal_theta {
                let (aa, bb, lam) = (a[(0, 0)], gain[(0, 0)], lambdas[0]);
                out.push(scalar_bound(aa, bb, lam, b)?);
                out.push(scalar_simplified_bound(aa, bb, lam, b)?);
                out.push(sign_partitioned_bound(aa, bb, lam, b, input)?);
            }
            out.push(lyapunov_bound(&a, &gain, b, lambdas)?);
            if equal_leak {
                out.push(rotation_bound(&a, &gain, b, lambdas.first().copied().unwrap_or(0.0))?);
            }
            Ok(out)
        }
        ControllerSpec::Connected { .. } => Ok(vec![network::connected_bound(&a, ctrl)?]),
    }
}

/// `D‖x0‖ + C` of the tightest applicable report: a certified bound on
/// `‖x(t)‖` for all `t ≥ 0`.
pub fn certified_radius(reports: &[BoundReport], x0_norm: f64) -> Option<f64> {
    reports
        .iter()
        .filter(|r| r.applicable)
        .map(|r| r.envelope(x0_norm, 0.0))
        .min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterEventBounds {
    pub lower: f64,
    /// `None` when the unit may stop firing altogether.
    pub upper: Option<f64>,
}

/// `-(1/λ) log(1 - θλ/g)`, with the `θ/g` limit for vanishing leak.
fn lif_period(theta: f64, lam: f64, g: f64) -> Option<f64> {
    if g <= 0.0 {
        return None;
    }
    if lam < LEAK_EPS {
        return Some(theta / g);
    }
    let ratio = theta * lam / g;
    if ratio >= 1.0 {
        return None;
    }
    Some(-(-ratio).ln_1p() / lam)
}

/// Bounds on consecutive event gaps of one unit whose input stays within `[g₋, g₊]`.
pub fn inter_event_bounds(theta: f64, lam: f64, g_minus: f64, g_plus: f64) -> Result<InterEventBounds, BoundsError> {
    if !(theta > 0.0) || !(lam >= 0.0) || !(g_minus >= 0.0) || !(g_plus >= g_minus) {
        return Err(BoundsError::BadInput);
    }
    let lower = lif_period(theta, lam, g_plus).ok_or(BoundsError::NoEventsEver)?;
    Ok(InterEventBounds { lower, upper: lif_period(theta, lam, g_minus) })
}

/// Minimum gap over all units, given `‖x(t)‖ ≤ c` and `g_i(x) ≤ alpha(‖x‖)`.
/// Infinite when no unit can fire.
pub fn min_inter_event_global(thetas: &[f64], lams: &[f64], alpha: impl Fn(f64) -> f64, c: f64) -> f64 {
    let theta_min = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let lam_min = lams.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    lif_period(theta_min, lam_min, alpha(c)).unwrap_or(f64::INFINITY)
}

/// `min_inter_event_global` for rectified inputs, with `alpha(r) = L r`
/// from [`InputFn::growth_slope`] and `c` from the tightest applicable
/// envelope at `t = 0`.
pub fn min_inter_event_for(
    plant: &PlantSpec,
    ctrl: &ControllerSpec,
    x0: &[f64],
) -> Result<Option<f64>, BoundsError> {
    let ControllerSpec::Independent { thetas, lambdas, input, .. } = ctrl else {
        return Ok(None);
    };
    let reports = all_reports(plant, ctrl)?;
    let Some(c) = certified_radius(&reports, linalg::norm(x0)) else {
        return Ok(None);
    };
    let slope = input.growth_slope();
    Ok(Some(min_inter_event_global(thetas, lambdas, |r| slope * r, c)))
}
