//! Closed-form performance expressions under angle uncertainty: the
//! wrapped-Gaussian series `h`, its two-term truncation `h_tilde`, the
//! expected echo SNR, the tracked-angle variance as a function of the
//! sensing time fraction, and the approximate achievable rate.
//!
//! The series `h(x, y)` is the large-array limit of the expected product of
//! beamforming kernels when the design angle is Gaussian around the true
//! angle `x` with variance `y`. It blows up as `sin(x) -> 0`, so angles are
//! rejected within [`ANGLE_GUARD`] of 0 or pi.

use crate::channel::{path_gain, ArrayConfig};
use crate::{Error, Result};

/// Guard band around the endpoints of (0, pi) for the `h` family.
pub const ANGLE_GUARD: f64 = 0.05;

/// Relative truncation tolerance for [`h_series`].
pub const H_SERIES_TOL: f64 = 1e-14;

const PI: f64 = std::f64::consts::PI;

/// Frame- and radio-level constants shared by every vehicle.
#[derive(Debug, Clone, Copy)]
pub struct RadioConstants {
    /// Transmit power `P_A` in watts.
    pub power_w: f64,
    /// Symbols per frame `W` (matched-filter gain at full allocation).
    pub symbols_per_frame: f64,
    /// Sensing noise power at the receive ULA, watts (linear).
    pub sigma_s2: f64,
    /// Communication noise power at the device, watts (linear).
    pub sigma_c2: f64,
    /// Variance parameter of the angle estimator, rad^2.
    pub sigma_r2: f64,
}

impl RadioConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = self.power_w > 0.0
            && self.symbols_per_frame > 0.0
            && self.sigma_s2 > 0.0
            && self.sigma_c2 > 0.0
            && self.sigma_r2 > 0.0;
        if !ok {
            return Err(Error::InvalidInput(
                "radio constants must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Precomputed per-vehicle coefficients consumed by the SNR and rate
/// formulas.
#[derive(Debug, Clone, Copy)]
pub struct PerfModel {
    /// RSU-to-surface power gain at the predicted distance.
    pub beta_g: f64,
    /// Surface-to-device power gain.
    pub beta_h: f64,
    /// Angle-measurement variance at full sensing allocation, rad^2.
    pub a_phi: f64,
    /// Linear SNR coefficient of the communication link.
    pub c_k: f64,
    /// `h(phi_pred, var_proc)`.
    pub h_val: f64,
    /// Predicted bearing angle, radians.
    pub phi_pred: f64,
    /// Angle prediction variance, rad^2.
    pub var_proc: f64,
}

impl PerfModel {
    /// Builds the per-vehicle model from the predicted geometry.
    ///
    /// `beta_g` uses the predicted distance (the true one is unavailable to
    /// the planner) and `beta_h` the in-vehicle device distance `d_u`.
    pub fn build(
        phi_pred: f64,
        d_pred: f64,
        var_proc: f64,
        beta0: f64,
        d_u: f64,
        radio: &RadioConstants,
        arrays: &ArrayConfig,
    ) -> Result<Self> {
        radio.validate()?;
        if !(d_pred > 0.0 && d_u > 0.0 && beta0 > 0.0) {
            return Err(Error::InvalidInput(
                "distances and beta0 must be positive".into(),
            ));
        }
        let h_val = h_series(phi_pred, var_proc, H_SERIES_TOL)?;
        let beta_g = path_gain(beta0, d_pred);
        let beta_h = path_gain(beta0, d_u);
        let l = arrays.num_irs_elements as f64;
        let m_r = arrays.num_rx_antennas as f64;
        let s = phi_pred.sin();
        let a_phi = radio.sigma_s2 * radio.sigma_r2
            / (radio.symbols_per_frame
                * radio.power_w
                * beta_g
                * beta_g
                * l
                * m_r
                * h_val
                * s
                * s);
        let c_k = 2.0 * radio.power_w * beta_g * beta_h * l / radio.sigma_c2;
        Ok(Self { beta_g, beta_h, a_phi, c_k, h_val, phi_pred, var_proc })
    }
}

fn check_h_domain(x: f64, y: f64) -> Result<()> {
    if !x.is_finite() || x < ANGLE_GUARD || x > PI - ANGLE_GUARD {
        return Err(Error::InvalidInput(format!(
            "angle {x} outside the guarded interval [{ANGLE_GUARD}, pi - {ANGLE_GUARD}]"
        )));
    }
    if y == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    if !(y > 0.0) {
        return Err(Error::InvalidInput(format!("variance {y} must be positive")));
    }
    Ok(())
}

/// Wrapped-Gaussian series
/// `h(x, y) = (2 pi y sin^2 x)^(-1/2) * sum_i [exp(-2(i pi)^2 / y) +
/// exp(-2((i+1) pi - x)^2 / y)]`,
/// summed symmetrically outward from `i = 0` and truncated once two
/// consecutive index pairs fall below `tol` times the running sum.
pub fn h_series(x: f64, y: f64, tol: f64) -> Result<f64> {
    check_h_domain(x, y)?;
    let term = |i: f64| -> f64 {
        (-2.0 * (i * PI) * (i * PI) / y).exp()
            + (-2.0 * ((i + 1.0) * PI - x) * ((i + 1.0) * PI - x) / y).exp()
    };
    let mut sum = term(0.0);
    let mut small_pairs = 0;
    let mut i = 1.0;
    while small_pairs < 2 {
        let pair = term(i) + term(-i);
        sum += pair;
        if pair < tol * sum {
            small_pairs += 1;
        } else {
            small_pairs = 0;
        }
        i += 1.0;
        if i > 1e6 {
            break;
        }
    }
    Ok(sum / (2.0 * PI * y * x.sin() * x.sin()).sqrt())
}

/// Two-term truncation
/// `h_tilde(x, y) = (2 pi y sin^2 x)^(-1/2) * (1 + exp(-2 (pi - x)^2 / y))`.
pub fn h_tilde(x: f64, y: f64) -> Result<f64> {
    check_h_domain(x, y)?;
    Ok((1.0 + (-2.0 * (PI - x) * (PI - x) / y).exp())
        / (2.0 * PI * y * x.sin() * x.sin()).sqrt())
}

/// Closed-form expected echo SNR,
/// `gamma_s = eta_prev * W * P_A * beta_g^2 * L * M_r * h / sigma_s^2`.
pub fn echo_snr_closed_form(
    eta_prev: f64,
    pm: &PerfModel,
    radio: &RadioConstants,
    arrays: &ArrayConfig,
) -> f64 {
    debug_assert!((0.0..=1.0).contains(&eta_prev));
    eta_prev
        * radio.symbols_per_frame
        * radio.power_w
        * pm.beta_g
        * pm.beta_g
        * arrays.num_irs_elements as f64
        * arrays.num_rx_antennas as f64
        * pm.h_val
        / radio.sigma_s2
}

/// Tracked-angle variance after fusing a whole frame's worth of sensing at
/// fraction `eta_prev`: `var_proc * a_phi / (var_proc * eta_prev + a_phi)`.
///
/// At `eta_prev = 0` this returns `var_proc` exactly (no measurement).
pub fn tracked_variance(eta_prev: f64, a_phi: f64, var_proc: f64) -> f64 {
    debug_assert!(a_phi > 0.0 && var_proc > 0.0);
    var_proc * a_phi / (var_proc * eta_prev + a_phi)
}

/// Approximate achievable rate in bits/s/Hz:
/// `eta_k * log2(1 + C_k * h_tilde(phi_pred, tracked_variance(eta_prev)))`.
pub fn rate_closed_form(eta_k: f64, eta_prev: f64, pm: &PerfModel) -> Result<f64> {
    if eta_k == 0.0 {
        return Ok(0.0);
    }
    let var = tracked_variance(eta_prev, pm.a_phi, pm.var_proc);
    let ht = h_tilde(pm.phi_pred, var)?;
    Ok(eta_k * (1.0 + pm.c_k * ht).log2())
}
