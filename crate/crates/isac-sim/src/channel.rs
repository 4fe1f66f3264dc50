//! Array geometry, steering vectors, path gains and Fejér-kernel
//! beamforming gains.
//!
//! Both the RSU receive array and the vehicle surfaces are half-wavelength
//! ULAs, so every gain in the system reduces to a Fejér kernel of a
//! cosine-difference argument. `passive_gain_exact` and
//! `receive_combine_gain` evaluate the gains by direct complex summation;
//! the kernel identities they satisfy are what the closed-form performance
//! expressions in [`crate::perf`] build on.
//!
//! All angles are in radians and restricted to the open interval (0, π):
//! at the endpoints `sin φ = 0` and the measurement-variance law downstream
//! degenerates. All gains are linear (never dB).

use num_complex::Complex64;

use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Sizes of the two arrays in play.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayConfig {
    /// Receive antennas at the RSU (`M_r`).
    pub num_rx_antennas: usize,
    /// Surface elements per vehicle (`L`).
    pub num_irs_elements: usize,
}

impl ArrayConfig {
    pub fn new(num_rx_antennas: usize, num_irs_elements: usize) -> Result<Self> {
        if num_rx_antennas == 0 || num_irs_elements == 0 {
            return Err(Error::InvalidInput(
                "array sizes must be at least 1".into(),
            ));
        }
        Ok(Self { num_rx_antennas, num_irs_elements })
    }
}

/// Linear channel power gains for one vehicle.
#[derive(Debug, Clone, Copy)]
pub struct ChannelGains {
    /// Gain at the 1 m reference distance.
    pub beta0: f64,
    /// RSU-to-surface gain, `beta0 / d^2`.
    pub beta_g: f64,
    /// Surface-to-device gain, `beta0 / d_u^2`.
    pub beta_h: f64,
}

impl ChannelGains {
    /// Builds the gains from the RSU-surface distance `d` and the in-vehicle
    /// device distance `d_u`.
    pub fn from_distances(beta0: f64, d: f64, d_u: f64) -> Result<Self> {
        if !(beta0 > 0.0 && d > 0.0 && d_u > 0.0) {
            return Err(Error::InvalidInput(
                "channel gains need beta0 > 0 and positive distances".into(),
            ));
        }
        Ok(Self {
            beta0,
            beta_g: path_gain(beta0, d),
            beta_h: path_gain(beta0, d_u),
        })
    }
}

/// Unit-modulus per-element array response to a plane wave.
#[derive(Debug, Clone)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_angle(phi: f64) -> Result<f64> {
    if !phi.is_finite() || phi <= 0.0 || phi >= std::f64::consts::PI {
        return Err(Error::InvalidInput(format!(
            "angle {phi} must lie in the open interval (0, pi)"
        )));
    }
    Ok(phi)
}

/// Surface steering vector: entry `l` is `exp(+j*pi*(l-1)*cos(phi))`.
pub fn steering_irs(phi: f64, len: usize) -> Result<SteeringVector> {
    let phi = check_angle(phi)?;
    if len == 0 {
        return Err(Error::InvalidInput("steering vector length must be >= 1".into()));
    }
    let c = phi.cos();
    Ok(SteeringVector(
        (0..len)
            .map(|l| Complex64::from_polar(1.0, std::f64::consts::PI * l as f64 * c))
            .collect(),
    ))
}

/// RSU steering vector: entry `m` is `exp(-j*pi*(m-1)*cos(phi))`, the
/// elementwise conjugate of [`steering_irs`].
pub fn steering_rsu(phi: f64, len: usize) -> Result<SteeringVector> {
    let phi = check_angle(phi)?;
    if len == 0 {
        return Err(Error::InvalidInput("steering vector length must be >= 1".into()));
    }
    let c = phi.cos();
    Ok(SteeringVector(
        (0..len)
            .map(|m| Complex64::from_polar(1.0, -std::f64::consts::PI * m as f64 * c))
            .collect(),
    ))
}

/// Fejér kernel `F_L(x) = (1/L) * (sin(L*pi*x/2) / sin(pi*x/2))^2`.
///
/// Total on the reals: the removable singularities at even integers return
/// the limit value `L`. The result is clamped to the mathematical range
/// `[0, L]` to keep downstream comparisons clean under rounding.
pub fn fejer_kernel(x: f64, len: usize) -> f64 {
    let l = len as f64;
    let den = (std::f64::consts::PI * x / 2.0).sin();
    if den.abs() < 1e-9 {
        return l;
    }
    let num = (l * std::f64::consts::PI * x / 2.0).sin();
    ((num / den).powi(2) / l).min(l)
}

/// Free-space power gain `beta0 / d^2` at distance `d` metres.
pub fn path_gain(beta0: f64, d: f64) -> f64 {
    debug_assert!(beta0 > 0.0 && d > 0.0);
    beta0 / (d * d)
}

fn wrap_phase(theta: f64) -> f64 {
    let t = theta % TWO_PI;
    if t < 0.0 {
        t + TWO_PI
    } else {
        t
    }
}

/// Reflection phase shifts steering the echo back at the RSU:
/// `theta_l = -2*pi*(l-1)*cos(phi_est) + theta0`, reduced to `[0, 2*pi)`.
pub fn reflect_phase_shifts(phi_est: f64, len: usize, theta0: f64) -> Result<Vec<f64>> {
    let phi = check_angle(phi_est)?;
    let c = phi.cos();
    Ok((0..len)
        .map(|l| wrap_phase(-TWO_PI * l as f64 * c + theta0))
        .collect())
}

/// Refraction phase shifts aligning the through-beam with the in-vehicle
/// device: `theta_l = pi*(l-1)*(cos(phi_user) - cos(phi_tracked)) + theta0`.
pub fn refract_phase_shifts(
    phi_user: f64,
    phi_tracked: f64,
    len: usize,
    theta0: f64,
) -> Result<Vec<f64>> {
    let pu = check_angle(phi_user)?;
    let pt = check_angle(phi_tracked)?;
    let dc = pu.cos() - pt.cos();
    Ok((0..len)
        .map(|l| wrap_phase(std::f64::consts::PI * l as f64 * dc + theta0))
        .collect())
}

/// Passive beamforming gain of a reflecting surface whose phases were
/// designed for `phi_design` while the true angle is `phi_true`:
/// `|a^T(-phi) diag(e^{j theta}) a(-phi)|^2`, evaluated by direct complex
/// summation. Equals `L * F_L(2 * (cos(phi_design) - cos(phi_true)))`.
pub fn passive_gain_exact(phi_true: f64, phi_design: f64, len: usize) -> Result<f64> {
    let a = steering_irs(phi_true, len)?;
    let theta = reflect_phase_shifts(phi_design, len, 0.0)?;
    let sum: Complex64 = a
        .entries()
        .iter()
        .zip(&theta)
        .map(|(al, th)| al * al * Complex64::from_polar(1.0, *th))
        .sum();
    Ok(sum.norm_sqr())
}

/// Receive combining gain `|v^H b(phi_true)|^2` with the unit-norm matched
/// combiner `v = b(phi_design) / sqrt(M_r)`. Equals
/// `F_{M_r}(cos(phi_design) - cos(phi_true))`.
pub fn receive_combine_gain(phi_true: f64, phi_design: f64, len: usize) -> Result<f64> {
    let b = steering_rsu(phi_true, len)?;
    let v = steering_rsu(phi_design, len)?;
    let sum: Complex64 = v
        .entries()
        .iter()
        .zip(b.entries())
        .map(|(vm, bm)| vm.conj() * bm)
        .sum();
    Ok(sum.norm_sqr() / len as f64)
}
