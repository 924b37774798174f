//! Connected units: the positive null-weight vector `w` with `Bw = 0`,
//! elementwise bounds on the neuronal variables, and trajectory monitors.

use serde::Serialize;
use thiserror::Error;

use crate::bounds::{lyapunov_certificate, BoundKind, BoundReport};
use crate::linalg::{self, box_norm, nnls, spectral_norm, sym_eig, LinalgError, Mat};
use crate::model::{column_sq_norms, ControllerSpec};
use crate::sim::{HybridTrajectory, SampleKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("steering condition fails at unit {unit}")]
    SteeringFailed { unit: usize },
    #[error("leaks differ and some leak is zero; no lower bound on wᵀz is available")]
    UnsupportedLeak,
    #[error("operation needs a connected-units controller")]
    NotConnected,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullWeight {
    pub w: Vec<f64>,
    /// `‖Bw‖`
    pub residual: f64,
}

/// `w = Σ_i (e_i + q_i)` where `q_i ≥ 0` solves `B q_i = -B_i`.
pub fn compute_null_weight(b: &Mat) -> Result<NullWeight, NetworkError> {
    let n = b.cols();
    let sq = column_sq_norms(b);
    if let Some(unit) = sq.iter().position(|&d| d <= 0.0) {
        return Err(NetworkError::SteeringFailed { unit });
    }
    let mut w = vec![1.0; n];
    for i in 0..n {
        let target: Vec<f64> = b.column(i).iter().map(|v| -v).collect();
        let q = nnls(b, &target).map_err(|_| NetworkError::SteeringFailed { unit: i })?;
        for (wj, qj) in w.iter_mut().zip(q) {
            *wj += qj;
        }
    }
    let residual = linalg::norm(&b.mul_vec(&w));
    if residual > 1e-9 * spectral_norm(b).max(1.0) * linalg::norm(&w).max(1.0) {
        return Err(NetworkError::SteeringFailed { unit: 0 });
    }
    Ok(NullWeight { w, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum LeakRegime {
    Equal { lambda: f64 },
    Spread { lambda_min: f64, lambda_max: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub regime: LeakRegime,
}

/// Elementwise bounds on `z`. Upper is `diag(BᵀB)`. With equal leaks
/// `wᵀz ≡ 0`, giving `z_i ≥ -Σ_{j≠i} w_j B_jᵀB_j / w_i`; with spread leaks
/// (all positive) `wᵀz ≥ γ wᵀdiag(BᵀB)`, `γ = 1 - λ_max/λ_min`, which shifts
/// the lower bound by `γ wᵀdiag(BᵀB) / w_i`.
pub fn z_bounds(b: &Mat, lambdas: &[f64], w: &NullWeight) -> Result<ZBounds, NetworkError> {
    let d = column_sq_norms(b);
    let lmin = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let regime = if lmin == lmax {
        LeakRegime::Equal { lambda: lmin }
    } else if lmin > 0.0 {
        LeakRegime::Spread { lambda_min: lmin, lambda_max: lmax, gamma: 1.0 - lmax / lmin }
    } else {
        return Err(NetworkError::UnsupportedLeak);
    };
    let wd: f64 = linalg::dot(&w.w, &d);
    let lower = (0..d.len())
        .map(|i| {
            let others: f64 = (0..d.len()).filter(|&j| j != i).map(|j| w.w[j] * d[j]).sum::<f64>() / w.w[i];
            match regime {
                LeakRegime::Equal { .. } => -others,
                LeakRegime::Spread { gamma, .. } => gamma * wd / w.w[i] - others,
            }
        })
        .collect();
    Ok(ZBounds { lower, upper: d, regime })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub samples: usize,
    /// `max |wᵀz(t)|`
    pub max_abs_wz: f64,
    pub min_wz: f64,
    pub max_wz: f64,
    /// Largest `lower_i - z_i(t)` (positive means violated).
    pub max_lower_violation: f64,
    /// Largest `z_i(t) - upper_i` (positive means violated).
    pub max_upper_violation: f64,
    pub max_d1: f64,
    pub max_d2: f64,
    /// `sup ‖(BBᵀ)⁻¹B z‖` over the `z` box.
    pub d1_bound: f64,
    /// `sup ‖(BBᵀ)⁻¹BΛ z‖` over the `z` box.
    pub d2_bound: f64,
}

fn connected_parts(ctrl: &ControllerSpec) -> Result<(&Mat, &[f64], &Mat), NetworkError> {
    match ctrl {
        ControllerSpec::Connected { b, lambdas, gain } => Ok((b, lambdas, gain)),
        ControllerSpec::Independent { .. } => Err(NetworkError::NotConnected),
    }
}

/// Scans a connected-units trajectory against `w` and the `z` box.
/// Intermediate states of a same-instant cascade count toward `wᵀz` only.
pub fn monitor_connected(
    traj: &HybridTrajectory,
    ctrl: &ControllerSpec,
    w: &NullWeight,
    zb: &ZBounds,
) -> Result<MonitorReport, NetworkError> {
    let (_, lambdas, _) = connected_parts(ctrl)?;
    let r = ctrl.aux_map()?;
    let r_lam = &r * &Mat::diag(lambdas);
    let mut rep = MonitorReport {
        samples: traj.len(),
        max_abs_wz: 0.0,
        min_wz: f64::INFINITY,
        max_wz: f64::NEG_INFINITY,
        max_lower_violation: f64::NEG_INFINITY,
        max_upper_violation: f64::NEG_INFINITY,
        max_d1: 0.0,
        max_d2: 0.0,
        d1_bound: box_norm(&r, &zb.lower, &zb.upper)?,
        d2_bound: box_norm(&r_lam, &zb.lower, &zb.upper)?,
    };
    for i in 0..traj.len() {
        let z = traj.z(i);
        let wz = linalg::dot(&w.w, z);
        rep.max_abs_wz = rep.max_abs_wz.max(wz.abs());
        rep.min_wz = rep.min_wz.min(wz);
        rep.max_wz = rep.max_wz.max(wz);
        // a reset can lift a neighbour past its threshold; it fires at the
        // same instant, so the box only constrains settled states
        let chained = |p: usize, q: usize| {
            traj.kind(p) == SampleKind::PostEvent && traj.kind(q) == SampleKind::PreEvent && traj.t(p) == traj.t(q)
        };
        let mid_cascade = (i + 1 < traj.len() && chained(i, i + 1)) || (i > 0 && chained(i - 1, i));
        if mid_cascade {
            continue;
        }
        for (j, &zj) in z.iter().enumerate() {
            rep.max_lower_violation = rep.max_lower_violation.max(zb.lower[j] - zj);
            rep.max_upper_violation = rep.max_upper_violation.max(zj - zb.upper[j]);
        }
        rep.max_d1 = rep.max_d1.max(linalg::norm(&r.mul_vec(z)));
        rep.max_d2 = rep.max_d2.max(linalg::norm(&r_lam.mul_vec(z)));
    }
    Ok(rep)
}

/// Envelope for a linear plant under connected units, treating
/// `d₁ = -(BBᵀ)⁻¹Bz` and `d₂ = -(BBᵀ)⁻¹BΛz` as disturbances confined to the
/// `z` box: with `R = (BBᵀ)⁻¹B` and `P` from `P(A-K) + (A-K)ᵀP = -I`,
/// `C = sup‖Rz‖ + 2 sup‖P((A-K)R + RΛ)z‖`, `D = √κ(P)`, `α = -1/(4λ_min(P))`.
pub fn connected_bound(a: &Mat, ctrl: &ControllerSpec) -> Result<BoundReport, NetworkError> {
    let (b, lambdas, gain) = connected_parts(ctrl)?;
    let mut rep = BoundReport {
        kind: BoundKind::Connected,
        applicable: false,
        reason: String::new(),
        prefactor: f64::NAN,
        decay_rate: f64::NAN,
        ultimate_bound: f64::INFINITY,
        auxiliaries: Vec::new(),
    };
    let w = compute_null_weight(b)?;
    let zb = match z_bounds(b, lambdas, &w) {
        Ok(zb) => zb,
        Err(NetworkError::UnsupportedLeak) => {
            rep.reason = "leaks differ and some leak is zero; z is not bounded below".into();
            return Ok(rep);
        }
        Err(e) => return Err(e),
    };
    let p = match lyapunov_certificate(a, gain) {
        Ok(p) => p,
        Err(LinalgError::NotHurwitz) => {
            rep.reason = "A - K is not Hurwitz".into();
            return Ok(rep);
        }
        Err(e) => return Err(e.into()),
    };
    let eigs = sym_eig(&p)?;
    let (lmin, lmax) = (eigs[0], eigs[eigs.len() - 1]);
    let r = ctrl.aux_map()?;
    let m = a - gain;
    let e = &(&m * &r) + &(&r * &Mat::diag(lambdas));
    let d1 = box_norm(&r, &zb.lower, &zb.upper)?;
    let pe = box_norm(&(&p * &e), &zb.lower, &zb.upper)?;
    rep.applicable = true;
    rep.reason = "A - K is Hurwitz and z is confined to its box".into();
    rep.prefactor = (lmax / lmin).sqrt();
    rep.decay_rate = -1.0 / (4.0 * lmin);
    rep.ultimate_bound = d1 + 2.0 * pe;
    rep.auxiliaries = vec![
        ("lambda_min_p".into(), lmin),
        ("kappa_p".into(), lmax / lmin),
        ("d1_bound".into(), d1),
        ("box_norm_pe".into(), pe),
    ];
    Ok(rep)
}
