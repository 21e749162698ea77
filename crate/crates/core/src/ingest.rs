//! Packet sources: CSV traces and seeded synthetic generators.
//!
//! CSV traces hold one packet per line, `src_ip` for one-dimensional
//! hierarchies or `src_ip,dst_ip` for two-dimensional ones, in dotted-quad
//! form. Blank lines and lines starting with `#` are skipped.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Zipf};
use rand_pcg::Pcg64;
use rustc_hash::FxHashSet;

use crate::error::{Error, Result};
use crate::hierarchy::PacketKey;

/// Where packets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Csv(PathBuf),
    Zipf {
        alpha: f64,
        universe: u64,
        n: u64,
        seed: u64,
    },
    Uniform {
        universe: u64,
        n: u64,
        seed: u64,
    },
}

impl TraceSource {
    /// Materializes the whole stream. Every call yields the same sequence.
    pub fn load(&self, dims: u8) -> Result<Vec<PacketKey>> {
        match self {
            TraceSource::Csv(path) => read_csv(path, dims),
            TraceSource::Zipf {
                alpha,
                universe,
                n,
                seed,
            } => gen_zipf(*alpha, *universe, *n, *seed, dims),
            TraceSource::Uniform { universe, n, seed } => gen_uniform(*universe, *n, *seed, dims),
        }
    }

    /// Same source with a different length; CSV traces are unaffected.
    pub fn with_len(&self, len: u64) -> TraceSource {
        let mut s = self.clone();
        match &mut s {
            TraceSource::Csv(_) => {}
            TraceSource::Zipf { n, .. } | TraceSource::Uniform { n, .. } => *n = len,
        }
        s
    }
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSource::Csv(p) => write!(f, "csv:{}", p.display()),
            TraceSource::Zipf {
                alpha,
                universe,
                n,
                seed,
            } => write!(f, "zipf:alpha={alpha},universe={universe},n={n},seed={seed}"),
            TraceSource::Uniform { universe, n, seed } => {
                write!(f, "uniform:universe={universe},n={n},seed={seed}")
            }
        }
    }
}

impl FromStr for TraceSource {
    type Err = Error;

    /// `csv:PATH`, `zipf:alpha=A,universe=U,n=N[,seed=S]` or `uniform:universe=U,n=N[,seed=S]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::usage(format!("source {s:?} lacks a kind prefix (csv:, zipf:, uniform:)")))?;
        if kind == "csv" {
            if rest.is_empty() {
                return Err(Error::usage("csv source needs a path"));
            }
            return Ok(TraceSource::Csv(PathBuf::from(rest)));
        }
        let mut alpha = None;
        let mut universe = None;
        let mut n = None;
        let mut seed = 1u64;
        for field in rest.split(',').filter(|f| !f.is_empty()) {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("expected key=value, got {field:?}")))?;
            let bad = || Error::usage(format!("bad value for {k}: {v:?}"));
            match k {
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|_| bad())?),
                "universe" => universe = Some(v.parse::<u64>().map_err(|_| bad())?),
                "n" => n = Some(v.parse::<u64>().map_err(|_| bad())?),
                "seed" => seed = v.parse().map_err(|_| bad())?,
                other => return Err(Error::usage(format!("unknown source field {other:?}"))),
            }
        }
        let universe = universe.ok_or_else(|| Error::usage("synthetic source needs universe="))?;
        let n = n.ok_or_else(|| Error::usage("synthetic source needs n="))?;
        if universe == 0 {
            return Err(Error::usage("universe must be at least 1"));
        }
        match kind {
            "zipf" => {
                let alpha = alpha.ok_or_else(|| Error::usage("zipf source needs alpha="))?;
                if alpha.is_nan() || alpha <= 0.0 {
                    return Err(Error::usage(format!("alpha must be positive, got {alpha}")));
                }
                Ok(TraceSource::Zipf {
                    alpha,
                    universe,
                    n,
                    seed,
                })
            }
            "uniform" => Ok(TraceSource::Uniform { universe, n, seed }),
            other => Err(Error::usage(format!("unknown source kind {other:?}"))),
        }
    }
}

fn parse_addr(s: &str, line: usize) -> Result<u32> {
    s.trim().parse::<Ipv4Addr>().map(u32::from).map_err(|_| Error::Parse {
        line,
        message: format!("invalid IPv4 address {:?}", s.trim()),
    })
}

/// Streaming CSV trace reader; yields keys in file order.
pub struct CsvReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    dims: u8,
}

impl<R: BufRead> CsvReader<R> {
    pub fn new(reader: R, dims: u8) -> Self {
        CsvReader {
            lines: reader.lines(),
            line: 0,
            dims,
        }
    }

    fn parse(&self, text: &str) -> Result<PacketKey> {
        let fields: Vec<&str> = text.split(',').collect();
        match (fields.len(), self.dims) {
            (1, 1) => Ok(PacketKey::one(parse_addr(fields[0], self.line)?)),
            (2, 2) => Ok(PacketKey::two(
                parse_addr(fields[0], self.line)?,
                parse_addr(fields[1], self.line)?,
            )),
            (got, want) if got <= 2 => Err(Error::usage(format!(
                "line {}: {got} address(es) but the hierarchy has {want} dimension(s)",
                self.line
            ))),
            (got, _) => Err(Error::Parse {
                line: self.line,
                message: format!("expected 1 or 2 fields, got {got}"),
            }),
        }
    }
}

impl<R: BufRead> Iterator for CsvReader<R> {
    type Item = Result<PacketKey>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let trimmed = text.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some(self.parse(trimmed));
        }
    }
}

/// Reads a whole CSV trace.
pub fn read_csv(path: impl AsRef<Path>, dims: u8) -> Result<Vec<PacketKey>> {
    let file = File::open(path.as_ref())?;
    CsvReader::new(BufReader::new(file), dims).collect()
}

fn universe_keys(universe: u64, dims: u8, rng: &mut Pcg64) -> Vec<PacketKey> {
    let mut seen = FxHashSet::default();
    let mut keys = Vec::with_capacity(universe as usize);
    while (keys.len() as u64) < universe {
        let key = if dims == 2 {
            PacketKey::two(rng.random::<u32>(), rng.random::<u32>())
        } else {
            PacketKey::one(rng.random::<u32>())
        };
        if seen.insert(key) {
            keys.push(key);
        }
    }
    keys
}

fn check_synthetic(universe: u64, dims: u8) -> Result<()> {
    if universe == 0 {
        return Err(Error::usage("universe must be at least 1"));
    }
    if dims == 1 && universe > u32::MAX as u64 {
        return Err(Error::usage("universe exceeds the IPv4 address space"));
    }
    if !(1..=2).contains(&dims) {
        return Err(Error::usage(format!("unsupported dimension count {dims}")));
    }
    Ok(())
}

/// `n` keys drawn i.i.d. from Zipf(`alpha`) over `universe` random addresses.
///
/// Rank `i` maps to the `i`-th address drawn from the seeded generator, so the
/// popularity order is a fixed random permutation of the address set.
pub fn gen_zipf(alpha: f64, universe: u64, n: u64, seed: u64, dims: u8) -> Result<Vec<PacketKey>> {
    check_synthetic(universe, dims)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::usage(format!("alpha must be positive, got {alpha}")));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let keys = universe_keys(universe, dims, &mut rng);
    let zipf = Zipf::new(universe as f64, alpha).map_err(|e| Error::usage(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let rank = zipf.sample(&mut rng) as usize;
            keys[rank.clamp(1, keys.len()) - 1]
        })
        .collect())
}

/// `n` keys drawn uniformly from `universe` random addresses.
pub fn gen_uniform(universe: u64, n: u64, seed: u64, dims: u8) -> Result<Vec<PacketKey>> {
    check_synthetic(universe, dims)?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let keys = universe_keys(universe, dims, &mut rng);
    Ok((0..n).map(|_| keys[rng.random_range(0..keys.len())]).collect())
}
