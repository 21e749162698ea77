//! Normal quantiles and the convergence formulas for sampled sketches.
//!
//! Sampling a packet into one of `V` slots turns each lattice node's update
//! count into an (approximately) Poisson variable. The formulas here turn a
//! target sampling error and failure probability into the stream length after
//! which the guarantees hold, and back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Error and failure budgets, split between the counter tables and sampling.
///
/// The totals always satisfy `epsilon = epsilon_a + epsilon_s` and
/// `delta = delta_a + 2 * delta_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_a: f64,
    pub epsilon_s: f64,
    pub delta_a: f64,
    pub delta_s: f64,
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be in (0, 1), got {x}")))
    }
}

impl ConfidenceParams {
    /// Balanced split: `epsilon_a = epsilon_s = epsilon / 2`, `delta_a = delta / 2`,
    /// `delta_s = delta / 4`.
    pub fn from_totals(epsilon: f64, delta: f64) -> Result<Self> {
        open_unit("epsilon", epsilon)?;
        open_unit("delta", delta)?;
        Self::from_parts(epsilon / 2.0, epsilon / 2.0, delta / 2.0, delta / 4.0)
    }

    /// Builds the totals from an explicit split.
    pub fn from_parts(epsilon_a: f64, epsilon_s: f64, delta_a: f64, delta_s: f64) -> Result<Self> {
        open_unit("epsilon_a", epsilon_a)?;
        open_unit("epsilon_s", epsilon_s)?;
        open_unit("delta_a", delta_a)?;
        open_unit("delta_s", delta_s)?;
        let epsilon = epsilon_a + epsilon_s;
        let delta = delta_a + 2.0 * delta_s;
        open_unit("epsilon", epsilon)?;
        open_unit("delta", delta)?;
        Ok(ConfidenceParams {
            epsilon,
            delta,
            epsilon_a,
            epsilon_s,
            delta_a,
            delta_s,
        })
    }

    /// Keeps the totals and takes the sampling share from the caller; the
    /// counter share is whatever remains.
    pub fn with_sampling_share(epsilon: f64, delta: f64, epsilon_s: f64, delta_s: f64) -> Result<Self> {
        open_unit("epsilon", epsilon)?;
        open_unit("delta", delta)?;
        let epsilon_a = epsilon - epsilon_s;
        let delta_a = delta - 2.0 * delta_s;
        if epsilon_a <= 0.0 {
            return Err(Error::domain(format!(
                "epsilon_s ({epsilon_s}) leaves no room for the counter error within epsilon ({epsilon})"
            )));
        }
        if delta_a <= 0.0 {
            return Err(Error::domain(format!(
                "2 * delta_s ({}) leaves no room for the counter failure within delta ({delta})",
                2.0 * delta_s
            )));
        }
        let mut p = Self::from_parts(epsilon_a, epsilon_s, delta_a, delta_s)?;
        // Keep the caller's totals bit-for-bit.
        p.epsilon = epsilon;
        p.delta = delta;
        Ok(p)
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

// Rational approximation of the inverse normal CDF (Acklam), relative error
// about 1.15e-9 before refinement.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn lower_tail(p: f64) -> f64 {
    let q = (-2.0 * p.ln()).sqrt();
    (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
        / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
}

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        lower_tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -lower_tail(1.0 - p)
    }
}

/// Inverse standard normal CDF: the `z` with `Phi(z) = alpha`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("quantile level must be in (0, 1), got {alpha}")));
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    let x = acklam(alpha);
    // One Newton step. The residual is taken in whichever tail keeps precision.
    let residual = if alpha < 0.5 {
        normal_cdf(x) - alpha
    } else {
        (1.0 - alpha) - 0.5 * libm::erfc(x / SQRT_2)
    };
    Ok(x - residual / normal_pdf(x))
}

/// Minimum stream length for the sampling guarantee: `Z_{1-delta_s/2} * v / epsilon_s^2`.
///
/// Returned as a real number; compare against packet counts after rounding up.
pub fn psi(params: &ConfidenceParams, v: u64) -> Result<f64> {
    if v == 0 {
        return Err(Error::domain("v must be at least 1"));
    }
    let z = normal_quantile(1.0 - params.delta_s / 2.0)?;
    Ok(z * v as f64 / (params.epsilon_s * params.epsilon_s))
}

/// Sampling error actually achieved after `n` packets: `sqrt(Z_{1-delta_s/2} * v / n)`.
pub fn epsilon_s_of_n(n: u64, delta_s: f64, v: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if v == 0 {
        return Err(Error::domain("v must be at least 1"));
    }
    let z = normal_quantile(1.0 - delta_s / 2.0)?;
    Ok((z * v as f64 / n as f64).sqrt())
}

/// Same as [`epsilon_s_of_n`] for a fractional stream length, such as `psi` itself.
pub fn epsilon_s_of_len(n: f64, delta_s: f64, v: u64) -> Result<f64> {
    if n.is_nan() || n <= 0.0 {
        return Err(Error::domain(format!("stream length must be positive, got {n}")));
    }
    let z = normal_quantile(1.0 - delta_s / 2.0)?;
    Ok((z * v as f64 / n).sqrt())
}
