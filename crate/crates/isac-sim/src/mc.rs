//! Monte Carlo and quadrature oracles for the closed-form performance
//! expressions: the expected echo beamforming gain, the achievable-rate
//! expectation with its Jensen bound, the density of the cosine-difference
//! variable, and the Fejér-kernel limit used to derive all of them.
//!
//! The echo-gain oracle deliberately touches only [`crate::channel`]
//! primitives (never the `h` series), so an agreement between the two is a
//! genuine cross-check rather than a tautology. Estimates are reported with
//! a standard error; downstream comparisons use `mean ± 3·SE` windows.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::fejer_kernel;
use crate::perf::{tracked_variance, PerfModel};
use crate::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Sampling controls for the Monte Carlo oracles.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub num_samples: usize,
    pub seed: u64,
    /// Reported confidence multiplier (informational; comparisons pin 3.0).
    pub confidence_z: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { num_samples: 100_000, seed: 0x1505_CAFE, confidence_z: 3.0 }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Pairwise (cascade) summation; keeps reductions order-independent and
/// controls rounding drift on long sample vectors.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn estimate(samples: &[f64]) -> McEstimate {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    McEstimate { mean, std_err: (var / n).sqrt() }
}

/// Monte Carlo estimate of the expected echo beamforming-kernel product
/// `E[F_L(2 dcos) * F_{M_r}(dcos)]` over design angles drawn
/// `phi_design = phi_true + N(0, var_proc)`.
pub fn mc_expected_echo_gain(
    phi_true: f64,
    var_proc: f64,
    num_irs_elements: usize,
    num_rx_antennas: usize,
    mc: &McConfig,
) -> Result<McEstimate> {
    if mc.num_samples == 0 {
        return Err(Error::InvalidInput("num_samples must be >= 1".into()));
    }
    if var_proc < 0.0 {
        return Err(Error::InvalidInput("variance must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let sd = var_proc.sqrt();
    let ct = phi_true.cos();
    let samples: Vec<f64> = (0..mc.num_samples)
        .map(|_| {
            let w: f64 = StandardNormal.sample(&mut rng);
            let dcos = (phi_true + sd * w).cos() - ct;
            fejer_kernel(2.0 * dcos, num_irs_elements)
                * fejer_kernel(dcos, num_rx_antennas)
        })
        .collect();
    Ok(estimate(&samples))
}

/// Coherent surface gain `|sum_l exp(j pi l dcos)|^2` for an arbitrary real
/// cosine difference; equals `L * F_L(dcos)` and is evaluated by direct
/// complex summation so the Monte Carlo path below stays independent of the
/// kernel identities.
fn coherent_gain(dcos: f64, len: usize) -> f64 {
    let sum: Complex64 = (0..len)
        .map(|l| Complex64::from_polar(1.0, PI * l as f64 * dcos))
        .sum();
    sum.norm_sqr()
}

/// Monte Carlo rate oracle: draws tracked angles
/// `phi ~ N(phi_pred, tracked_variance(eta_prev))`, forms the per-draw
/// communication SNR from the exact surface gain, and returns
/// `(exact_expectation, jensen_bound)` of the rate.
pub fn mc_expected_rate(
    pm: &PerfModel,
    num_irs_elements: usize,
    eta_k: f64,
    eta_prev: f64,
    mc: &McConfig,
) -> Result<(f64, f64)> {
    if mc.num_samples == 0 {
        return Err(Error::InvalidInput("num_samples must be >= 1".into()));
    }
    let l = num_irs_elements as f64;
    // c_k = 2 P_A beta_g beta_h L / sigma_c^2, so the per-draw SNR
    // P_A beta_g beta_h |gain|^2 / sigma_c^2 equals c_k / (2 L) * |gain|^2.
    let snr_scale = pm.c_k / (2.0 * l);
    let var = tracked_variance(eta_prev, pm.a_phi, pm.var_proc);
    if var == 0.0 {
        let rate = eta_k * (1.0 + snr_scale * l * l).log2();
        return Ok((rate, rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let sd = var.sqrt();
    let cp = pm.phi_pred.cos();
    let mut gammas = Vec::with_capacity(mc.num_samples);
    let mut logs = Vec::with_capacity(mc.num_samples);
    for _ in 0..mc.num_samples {
        let w: f64 = StandardNormal.sample(&mut rng);
        let dcos = (pm.phi_pred + sd * w).cos() - cp;
        let gamma = snr_scale * coherent_gain(dcos, num_irs_elements);
        gammas.push(gamma);
        logs.push((1.0 + gamma).log2());
    }
    let n = mc.num_samples as f64;
    let exact = eta_k * pairwise_sum(&logs) / n;
    let jensen = eta_k * (1.0 + pairwise_sum(&gammas) / n).log2();
    Ok((exact, jensen))
}

/// Density of `y = 2 cos(phi_design) - 2 cos(phi_true)` when the design
/// angle is Gaussian around `phi_true` with variance `var_proc`: the
/// arccos change of variables applied to the wrapped Gaussian, truncated
/// symmetrically like the `h` series.
pub fn pdf_y(y: f64, phi: f64, var_proc: f64, tol: f64) -> Result<f64> {
    if !(var_proc > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let c = y / 2.0 + phi.cos();
    if c.abs() >= 1.0 {
        return Err(Error::OutOfSupport(y));
    }
    let acs = c.acos();
    let term = |i: f64| -> f64 {
        let a = 2.0 * (i + 1.0) * PI - acs - phi;
        let b = 2.0 * i * PI + acs - phi;
        (-a * a / (2.0 * var_proc)).exp() + (-b * b / (2.0 * var_proc)).exp()
    };
    let mut sum = term(0.0);
    let mut small = 0;
    let mut i = 1.0;
    while small < 2 {
        let pair = term(i) + term(-i);
        sum += pair;
        if pair < tol * sum {
            small += 1;
        } else {
            small = 0;
        }
        i += 1.0;
        if i > 1e6 {
            break;
        }
    }
    Ok(sum / (2.0 * (2.0 * PI).sqrt() * var_proc.sqrt() * (1.0 - c * c).sqrt()))
}

/// Support of [`pdf_y`]: the open interval of `y` with
/// `|y/2 + cos(phi)| < 1`.
pub fn pdf_y_support(phi: f64) -> (f64, f64) {
    (-2.0 - 2.0 * phi.cos(), 2.0 - 2.0 * phi.cos())
}

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 }.max(2);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson3(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson3(fa, flm, fm, m - a);
        let right = simpson3(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson3(fa, fm, fb, b - a);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Numeric check of the Fejér-kernel limit
/// `lim_L (1/2) Integral_{-1}^{1} g(u) F_L(u) du = g(0)` for a continuous
/// period-2 function `g`. Returns `|quadrature - g(0)|` per requested `L`.
/// The kernel's main lobe has width ~1/L, so the panel count scales with L.
pub fn fejer_limit_check(g: &impl Fn(f64) -> f64, l_list: &[usize]) -> Vec<f64> {
    l_list
        .iter()
        .map(|&l| {
            let mut f = |u: f64| g(u) * fejer_kernel(u, l);
            let panels = (20 * l).max(64);
            let integral = 0.5 * simpson(&mut f, -1.0, 1.0, panels);
            (integral - g(0.0)).abs()
        })
        .collect()
}
