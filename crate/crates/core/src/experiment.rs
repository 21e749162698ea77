//! Sketch configuration and multi-seed evaluation.
//!
//! Runs over different seeds are independent, so they are spread over a rayon
//! pool when the `parallel` feature is on (the default) and run in order
//! otherwise. Results come back in seed order either way.

use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyKind, HierarchySpec, PacketKey, Prefix};
use crate::metrics::{evaluate, EvalReport};
use crate::oracle::ExactCounts;
use crate::sketch::{ConfidenceMode, FullUpdateSketch, HhhCandidate, HhhSketch, RhhhSketch, SketchInfo};
use crate::stats::ConfidenceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rhhh,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rhhh => "rhhh",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rhhh" => Ok(Algorithm::Rhhh),
            "baseline" => Ok(Algorithm::Baseline),
            other => Err(Error::usage(format!(
                "unknown algorithm {other:?}; expected rhhh or baseline"
            ))),
        }
    }
}

/// Everything needed to build a sketch except the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchConfig {
    pub hierarchy: HierarchyKind,
    pub algorithm: Algorithm,
    pub params: ConfidenceParams,
    /// `V / H`.
    pub v_ratio: u64,
    /// Independent draws per packet.
    pub r: u32,
    pub confidence: ConfidenceMode,
    pub synthetic_candidates: bool,
}

impl SketchConfig {
    pub fn new(hierarchy: HierarchyKind, algorithm: Algorithm, params: ConfidenceParams) -> Self {
        SketchConfig {
            hierarchy,
            algorithm,
            params,
            v_ratio: 1,
            r: 1,
            confidence: ConfidenceMode::default(),
            synthetic_candidates: false,
        }
    }

    pub fn build(&self, seed: u64) -> Result<AnySketch> {
        let spec = HierarchySpec::new(self.hierarchy);
        Ok(match self.algorithm {
            Algorithm::Rhhh => AnySketch::Rhhh(
                RhhhSketch::with_v_ratio(spec, self.params, self.v_ratio, seed)?
                    .updates_per_packet(self.r)?
                    .confidence_mode(self.confidence)
                    .synthetic_candidates(self.synthetic_candidates),
            ),
            Algorithm::Baseline => AnySketch::Baseline(
                FullUpdateSketch::new(spec, self.params).synthetic_candidates(self.synthetic_candidates),
            ),
        })
    }
}

/// Either sketch behind one concrete type, so ingestion loops stay monomorphic.
#[derive(Debug, Clone)]
pub enum AnySketch {
    Rhhh(RhhhSketch),
    Baseline(FullUpdateSketch),
}

impl AnySketch {
    /// Stream length needed for the sampling guarantee; 0 for the baseline.
    pub fn psi(&self) -> Result<f64> {
        match self {
            AnySketch::Rhhh(s) => s.psi(),
            AnySketch::Baseline(_) => Ok(0.0),
        }
    }
}

impl HhhSketch for AnySketch {
    fn spec(&self) -> &HierarchySpec {
        match self {
            AnySketch::Rhhh(s) => s.spec(),
            AnySketch::Baseline(s) => s.spec(),
        }
    }

    #[inline]
    fn insert(&mut self, key: &PacketKey) {
        match self {
            AnySketch::Rhhh(s) => s.update(key),
            AnySketch::Baseline(s) => s.update_all(key),
        }
    }

    fn packets(&self) -> u64 {
        match self {
            AnySketch::Rhhh(s) => s.packets(),
            AnySketch::Baseline(s) => s.packets(),
        }
    }

    fn output(&self, theta: f64) -> Result<Vec<HhhCandidate>> {
        match self {
            AnySketch::Rhhh(s) => s.output(theta),
            AnySketch::Baseline(s) => s.output(theta),
        }
    }

    fn upper_estimate(&self, prefix: &Prefix) -> f64 {
        match self {
            AnySketch::Rhhh(s) => s.upper_estimate(prefix),
            AnySketch::Baseline(s) => s.upper_estimate(prefix),
        }
    }

    fn lower_estimate(&self, prefix: &Prefix) -> f64 {
        match self {
            AnySketch::Rhhh(s) => s.lower_estimate(prefix),
            AnySketch::Baseline(s) => s.lower_estimate(prefix),
        }
    }

    fn info(&self) -> SketchInfo {
        match self {
            AnySketch::Rhhh(s) => s.info(),
            AnySketch::Baseline(s) => s.info(),
        }
    }

    fn total_counters(&self) -> usize {
        match self {
            AnySketch::Rhhh(s) => s.total_counters(),
            AnySketch::Baseline(s) => s.total_counters(),
        }
    }
}

/// Applies `f` to every seed, in parallel when the `parallel` feature is on.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| f(s)).collect()
    }
}

/// Ingests the stream with one seed, then scores the output against the oracle.
pub fn run_once(
    cfg: &SketchConfig,
    stream: &[PacketKey],
    counts: &ExactCounts,
    theta: f64,
    seed: u64,
) -> Result<EvalReport> {
    let mut sketch = cfg.build(seed)?;
    sketch.extend(stream);
    let out = sketch.output(theta)?;
    evaluate(&out, sketch.packets(), counts, cfg.params.epsilon, theta)
}

/// One report per seed, computed one after another.
pub fn run_seeds_sequential(
    cfg: &SketchConfig,
    stream: &[PacketKey],
    counts: &ExactCounts,
    theta: f64,
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    seeds.iter().map(|&s| run_once(cfg, stream, counts, theta, s)).collect()
}

/// One report per seed, computed on the rayon pool.
#[cfg(feature = "parallel")]
pub fn run_seeds_parallel(
    cfg: &SketchConfig,
    stream: &[PacketKey],
    counts: &ExactCounts,
    theta: f64,
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    seeds
        .par_iter()
        .map(|&s| run_once(cfg, stream, counts, theta, s))
        .collect()
}

/// Parallel when the feature is enabled, sequential otherwise.
pub fn run_seeds(
    cfg: &SketchConfig,
    stream: &[PacketKey],
    counts: &ExactCounts,
    theta: f64,
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    #[cfg(feature = "parallel")]
    {
        run_seeds_parallel(cfg, stream, counts, theta, seeds)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_seeds_sequential(cfg, stream, counts, theta, seeds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::gen_zipf;
    use crate::oracle::count_exact;

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = SketchConfig::new(
            HierarchyKind::SrcByte,
            Algorithm::Rhhh,
            ConfidenceParams::from_totals(0.05, 0.05).unwrap(),
        );
        let stream = gen_zipf(1.0, 500, 20_000, 3, 1).unwrap();
        let counts = count_exact(&stream, &HierarchySpec::new(HierarchyKind::SrcByte)).unwrap();
        let seeds: Vec<u64> = (0..8).collect();
        let seq = run_seeds_sequential(&cfg, &stream, &counts, 0.1, &seeds).unwrap();
        let any = run_seeds(&cfg, &stream, &counts, 0.1, &seeds).unwrap();
        assert_eq!(seq, any);
        assert_eq!(map_seeds(&seeds, |s| s * 2), vec![0, 2, 4, 6, 8, 10, 12, 14]);
    }

    #[test]
    fn names_round_trip() {
        for a in [Algorithm::Rhhh, Algorithm::Baseline] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("mst".parse::<Algorithm>().is_err());
    }
}
