//! Independent reference computations shared by integration tests.

#![allow(dead_code)]

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rhhh::{PacketKey, Prefix};

/// Gauss-Legendre nodes and weights on [-1, 1], found by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Standard normal CDF by composite Gauss-Legendre quadrature of the density.
pub struct QuadratureCdf {
    rule: Vec<(f64, f64)>,
}

impl QuadratureCdf {
    pub fn new() -> Self {
        QuadratureCdf {
            rule: gauss_legendre(12),
        }
    }

    fn integral_0_to(&self, x: f64) -> f64 {
        let panels = ((x.abs() / 0.25).ceil() as usize).max(1);
        let h = x / panels as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for p in 0..panels {
            let a = p as f64 * h;
            let mid = a + h / 2.0;
            for &(t, w) in &self.rule {
                let u = mid + t * h / 2.0;
                total += w * (-0.5 * u * u).exp();
            }
        }
        total * h / 2.0 * norm
    }

    /// `Phi(x)` as `0.5 + integral`, or `0.5 - integral` of the mirrored tail.
    pub fn cdf(&self, x: f64) -> f64 {
        0.5 + self.integral_0_to(x)
    }

    /// Lower-tail probability `Phi(-|x|)` without cancellation.
    fn tail(&self, x: f64) -> f64 {
        // 0.5 - I(|x|) loses precision deep in the tail; integrate outward instead.
        let a = x.abs();
        let far = a + 12.0;
        let panels = (((far - a) / 0.25).ceil() as usize).max(1);
        let h = (far - a) / panels as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for &(t, w) in &self.rule {
                let u = mid + t * h / 2.0;
                total += w * (-0.5 * u * u).exp();
            }
        }
        total * h / 2.0 * norm
    }

    /// Quantile by bisection on the quadrature CDF.
    pub fn quantile(&self, alpha: f64) -> f64 {
        assert!(alpha > 0.0 && alpha < 1.0);
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let below = if mid < -1.0 {
                self.tail(mid) < alpha
            } else if mid > 1.0 {
                // Phi(mid) < alpha  <=>  1 - alpha < upper tail
                (1.0 - alpha) < self.tail(mid)
            } else {
                self.cdf(mid) < alpha
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn ip(s: &str) -> u32 {
    u32::from(s.parse::<Ipv4Addr>().unwrap())
}

pub fn prefix(s: &str) -> Prefix {
    s.parse().unwrap()
}

/// A stream realizing the classic worked example: 108 packets under 101.0.0.0/8,
/// 102 of them under 101.102.0.0/16 spread over two /24s and many /32s.
pub fn worked_example_stream() -> Vec<PacketKey> {
    let mut keys = Vec::new();
    // Six packets in each of 17 /24s: no /24 gets near 10% of the stream.
    for i in 0..102u32 {
        keys.push(PacketKey::one(ip(&format!("101.102.{}.{}", i % 17, i / 17 + 1))));
    }
    for i in 0..6u32 {
        keys.push(PacketKey::one(ip(&format!("101.{}.0.1", 10 + i))));
    }
    keys
}

/// Threshold placing theta * N at exactly 100 packets for the worked example.
pub const WORKED_EXAMPLE_THETA: f64 = 100.0 / 108.0;

/// Random stream over small address pools, so that prefixes overlap heavily.
pub fn clustered_stream(rng: &mut Pcg64, len: usize, dims: u8) -> Vec<PacketKey> {
    let pool = |rng: &mut Pcg64| -> u32 {
        let a = [1u32, 2, 3][rng.random_range(0..3)];
        let b = [1u32, 2][rng.random_range(0..2)];
        let c = rng.random_range(0..3u32);
        let d = rng.random_range(0..4u32);
        a << 24 | b << 16 | c << 8 | d
    };
    (0..len)
        .map(|_| {
            if dims == 2 {
                PacketKey::two(pool(rng), pool(rng))
            } else {
                PacketKey::one(pool(rng))
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}
