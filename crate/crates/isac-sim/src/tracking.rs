//! Vehicle motion, the state-prediction model, measurement synthesis and the
//! scalar Kalman angle-tracking update.
//!
//! Truth and belief are propagated separately: the ground-truth trajectory is
//! exact constant-velocity motion, while the belief side applies the same
//! first-order state map noiselessly to the previous tracked state. Process
//! noise enters the filter as variance bookkeeping (and, optionally, as
//! sampled perturbations when an RNG is supplied).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Kinematic state of one vehicle relative to the RSU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Bearing angle in radians, open interval (0, pi).
    pub phi: f64,
    /// RSU-to-surface distance in metres.
    pub d: f64,
    /// Speed in m/s (signed; positive drives the bearing angle up).
    pub v: f64,
}

impl VehicleState {
    pub fn new(phi: f64, d: f64, v: f64) -> Result<Self> {
        let s = Self { phi, d, v };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() || self.phi <= 0.0 || self.phi >= std::f64::consts::PI {
            return Err(Error::StateOutOfDomain(format!(
                "bearing angle {} outside (0, pi)",
                self.phi
            )));
        }
        if !(self.d > 0.0) {
            return Err(Error::StateOutOfDomain(format!(
                "distance {} must be positive",
                self.d
            )));
        }
        if !self.v.is_finite() {
            return Err(Error::StateOutOfDomain("speed must be finite".into()));
        }
        Ok(())
    }
}

/// Variances of the state-prediction noise terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProcessNoise {
    /// Angle prediction variance, rad^2.
    pub var_phi: f64,
    /// Distance prediction variance, m^2.
    pub var_d: f64,
    /// Speed prediction variance, (m/s)^2.
    pub var_v: f64,
}

impl ProcessNoise {
    pub fn validate(&self) -> Result<()> {
        if self.var_phi < 0.0 || self.var_d < 0.0 || self.var_v < 0.0 {
            return Err(Error::InvalidInput("noise variances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-frame belief about one vehicle: prediction, tracked angle and the
/// variances that produced it.
#[derive(Debug, Clone, Copy)]
pub struct TrackBelief {
    pub phi_pred: f64,
    pub d_pred: f64,
    pub phi_tracked: f64,
    pub var_tracked: f64,
    pub var_meas: f64,
}

/// One step of the first-order state map:
/// `phi' = phi + v dt sin(phi) / d`, `d' = d - v dt cos(phi)`, `v' = v`,
/// plus Gaussian perturbations when `rng` is given.
pub fn predict_state(
    prev: &VehicleState,
    dt: f64,
    noise: &ProcessNoise,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<VehicleState> {
    prev.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt {dt} must be positive")));
    }
    let mut phi = prev.phi + prev.v * dt * prev.phi.sin() / prev.d;
    let mut d = prev.d - prev.v * dt * prev.phi.cos();
    let mut v = prev.v;
    if let Some(rng) = rng {
        phi += draw_normal(rng, noise.var_phi);
        d += draw_normal(rng, noise.var_d);
        v += draw_normal(rng, noise.var_v);
    }
    VehicleState::new(phi, d, v)
}

fn draw_normal(rng: &mut dyn rand::RngCore, var: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * var.sqrt()
}

/// Angle-measurement variance from the echo SNR:
/// `sigma_z^2 = sigma_R^2 / (gamma_s * sin^2(phi))`.
pub fn measurement_variance(gamma_s: f64, phi: f64, sigma_r2: f64) -> Result<f64> {
    if !(gamma_s > 0.0) {
        return Err(Error::InfeasibleSensing(gamma_s));
    }
    let s = phi.sin();
    if s == 0.0 || !phi.is_finite() {
        return Err(Error::InvalidInput(format!("sin(phi) vanishes at phi={phi}")));
    }
    Ok(sigma_r2 / (gamma_s * s * s))
}

/// Scalar Kalman update. Returns the fused angle and its variance
/// `var_proc * var_meas / (var_proc + var_meas)`.
///
/// An infinite `var_meas` is accepted and means "no measurement": the
/// prediction passes through unchanged with variance `var_proc`.
pub fn kalman_update(
    phi_pred: f64,
    phi_meas: f64,
    var_proc: f64,
    var_meas: f64,
) -> Result<(f64, f64)> {
    if var_proc < 0.0 || var_meas < 0.0 {
        return Err(Error::InvalidInput("variances must be >= 0".into()));
    }
    if var_proc == 0.0 && var_meas == 0.0 {
        return Err(Error::DegenerateFilter);
    }
    if var_meas.is_infinite() {
        return Ok((phi_pred, var_proc));
    }
    let gain = var_proc / (var_proc + var_meas);
    let fused = phi_pred + gain * (phi_meas - phi_pred);
    let var = var_proc * var_meas / (var_proc + var_meas);
    Ok((fused, var))
}

/// Draws a noisy angle measurement `phi_true + N(0, var_meas)`.
pub fn synthesize_measurement(phi_true: f64, var_meas: f64, rng: &mut impl Rng) -> f64 {
    if var_meas == 0.0 {
        return phi_true;
    }
    let z: f64 = StandardNormal.sample(rng);
    phi_true + z * var_meas.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn noiseless() -> ProcessNoise {
        ProcessNoise::default()
    }

    #[test]
    fn predict_broadside_keeps_distance() {
        let s = VehicleState::new(PI / 2.0, 20.0, 15.0).unwrap();
        let n = predict_state(&s, 0.1, &noiseless(), None).unwrap();
        assert!((n.phi - (PI / 2.0 + 0.075)).abs() < 1e-12);
        assert!((n.d - 20.0).abs() < 1e-12);
        assert!((n.v - 15.0).abs() < 1e-12);
    }

    #[test]
    fn predict_stationary_vehicle_is_identity() {
        let s = VehicleState::new(1.0, 30.0, 0.0).unwrap();
        let n = predict_state(&s, 0.1, &noiseless(), None).unwrap();
        assert_eq!(s, n);
    }

    #[test]
    fn predict_slanted_geometry() {
        let s = VehicleState::new(PI / 3.0, 25.0, 15.0).unwrap();
        let n = predict_state(&s, 0.1, &noiseless(), None).unwrap();
        let expect_phi = PI / 3.0 + 0.06 * (PI / 3.0_f64).sin();
        assert!((n.phi - expect_phi).abs() < 1e-12);
        assert!((n.phi - 1.099_159_075_423_664).abs() < 1e-12);
        assert!((n.d - 24.25).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_bad_outcomes() {
        // Driving the state across phi = pi must error rather than wrap.
        let s = VehicleState::new(3.12, 0.5, 30.0).unwrap();
        assert!(predict_state(&s, 1.0, &noiseless(), None).is_err());
        // Distance through zero.
        let s = VehicleState::new(0.3, 1.0, 50.0).unwrap();
        assert!(predict_state(&s, 1.0, &noiseless(), None).is_err());
    }

    #[test]
    fn measurement_variance_values() {
        let v = measurement_variance(0.1, PI / 2.0, 0.1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Large SNR drives the variance down monotonically.
        assert!(measurement_variance(1e9, PI / 2.0, 0.1).unwrap() < 1e-9);
        assert!(measurement_variance(0.0, PI / 2.0, 0.1).is_err());
        assert!(measurement_variance(-1.0, PI / 2.0, 0.1).is_err());
    }

    #[test]
    fn kalman_symmetric_case() {
        let (phi, var) = kalman_update(1.0, 1.5, 0.01, 0.01).unwrap();
        assert!((phi - 1.25).abs() < 1e-12);
        assert!((var - 0.005).abs() < 1e-15);
    }

    #[test]
    fn kalman_perfect_measurement() {
        let (phi, var) = kalman_update(1.0, 1.3, 0.01, 0.0).unwrap();
        assert!((phi - 1.3).abs() < 1e-15);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn kalman_example_gain() {
        let (phi, var) = kalman_update(1.0, 2.0, 0.01, 0.04).unwrap();
        assert!((phi - 1.2).abs() < 1e-12); // gain 0.2
        assert!((var - 0.008).abs() < 1e-15);
    }

    #[test]
    fn kalman_degenerate_and_missing_measurement() {
        assert!(kalman_update(1.0, 1.0, 0.0, 0.0).is_err());
        let (phi, var) = kalman_update(1.1, 9.9, 0.01, f64::INFINITY).unwrap();
        assert_eq!(phi, 1.1);
        assert_eq!(var, 0.01);
    }

    #[test]
    fn kalman_matches_subtraction_form() {
        // var_proc - var_proc^2 / (var_proc + var_meas) equals the harmonic
        // form; check over random pairs at 1e-12 relative.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let vp: f64 = rng.gen_range(1e-8..1.0);
            let vm: f64 = rng.gen_range(1e-8..1.0);
            let (_, var) = kalman_update(1.0, 1.2, vp, vm).unwrap();
            let subtraction = vp - vp * vp / (vp + vm);
            assert!((var - subtraction).abs() <= 1e-12 * subtraction.max(1e-300));
            assert!(var <= vp.min(vm) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn measurement_synthesis_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(synthesize_measurement(1.234, 0.0, &mut rng), 1.234);
        let n = 100_000;
        let var = 0.04;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let m = synthesize_measurement(1.0, var, &mut rng);
            sum += m - 1.0;
            sumsq += (m - 1.0) * (m - 1.0);
        }
        let mean = sum / n as f64;
        let sample_var = sumsq / n as f64 - mean * mean;
        // mean within 4 sigma/sqrt(n), variance within 5%
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt());
        assert!((sample_var - var).abs() < 0.05 * var);
    }

    #[test]
    fn noiseless_distance_moves_monotonically() {
        // With cos(phi) of constant sign the distance is monotone.
        let mut s = VehicleState::new(0.4, 50.0, 15.0).unwrap();
        let mut last = s.d;
        for _ in 0..20 {
            s = predict_state(&s, 0.1, &noiseless(), None).unwrap();
            if s.phi < PI / 2.0 {
                assert!(s.d <= last);
            }
            last = s.d;
        }
    }

    proptest! {
        #[test]
        fn kalman_is_exact_interpolation(
            pred in 0.1f64..3.0, meas in 0.1f64..3.0,
            vp in 1e-9f64..1.0, vm in 1e-9f64..1.0
        ) {
            let (phi, var) = kalman_update(pred, meas, vp, vm).unwrap();
            let lo = pred.min(meas) - 1e-12;
            let hi = pred.max(meas) + 1e-12;
            prop_assert!(phi >= lo && phi <= hi);
            prop_assert!(var >= 0.0);
            prop_assert!(var <= vp.min(vm) * (1.0 + 1e-12));
        }
    }
}
