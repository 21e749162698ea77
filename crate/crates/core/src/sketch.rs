//! HHH sketches: the randomized constant-time update and the full-update baseline.
//!
//! Both keep one [`SpaceSaving`] table per lattice node and share the output
//! procedure. They differ in how packets reach the tables and in how table
//! counts are scaled back to packets:
//!
//! * [`RhhhSketch`] draws `d` uniformly from `[0, V)` per packet (`r` times) and
//!   increments table `d` only when `d < H`. Estimates are scaled by `V / r`
//!   and the conditioned frequency gets an additive sampling-confidence term.
//! * [`FullUpdateSketch`] increments all `H` tables per packet. No scaling, no
//!   sampling term.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{best_generalized_indices, glb, HierarchySpec, PacketKey, Prefix};
use crate::spacesaving::SpaceSaving;
use crate::stats::{normal_quantile, psi, ConfidenceParams};

/// Which normal quantile the additive confidence term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMode {
    /// `Z_{1 - delta/8}`, the constant the coverage argument needs.
    #[default]
    Analysis,
    /// `Z_{1 - delta}`, as the output procedure is usually written.
    Literal,
}

impl ConfidenceMode {
    pub fn quantile_level(self, delta: f64) -> f64 {
        match self {
            ConfidenceMode::Analysis => 1.0 - delta / 8.0,
            ConfidenceMode::Literal => 1.0 - delta,
        }
    }
}

/// Additive sampling term `2 * Z * sqrt(n * v)` added to conditioned-frequency estimates.
pub fn conditioned_confidence_term(n: u64, v: u64, delta: f64, mode: ConfidenceMode) -> Result<f64> {
    let z = normal_quantile(mode.quantile_level(delta))?;
    Ok(2.0 * z * ((n as f64) * (v as f64)).sqrt())
}

/// Counters per table for a sampled level: `ceil((1 + epsilon_s) / epsilon_a)`.
///
/// A level can receive up to `(1 + epsilon_s) N / V` updates, so the counter
/// error target shrinks to `epsilon_a / (1 + epsilon_s)`.
pub fn sampled_capacity(params: &ConfidenceParams) -> usize {
    ceil_tolerant((1.0 + params.epsilon_s) / params.epsilon_a)
}

/// Counters per table when every packet reaches every table: `ceil(1 / epsilon_a)`.
pub fn full_capacity(params: &ConfidenceParams) -> usize {
    ceil_tolerant(1.0 / params.epsilon_a)
}

// Absorbs rounding noise such as 1.001 / 0.001 = 1000.9999999999999.
fn ceil_tolerant(x: f64) -> usize {
    ((x - 1e-9).ceil() as usize).max(1)
}

/// One emitted prefix with its scaled frequency bounds and conditioned estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HhhCandidate {
    pub prefix: Prefix,
    pub lower: f64,
    pub upper: f64,
    pub conditioned: f64,
}

/// Configuration echoed in result headers; enough to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchInfo {
    pub algorithm: String,
    pub hierarchy: String,
    pub h: usize,
    pub v: u64,
    pub r: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_a: f64,
    pub epsilon_s: f64,
    pub delta_a: f64,
    pub delta_s: f64,
    pub seed: u64,
    pub counters_per_node: usize,
    pub confidence: ConfidenceMode,
    pub synthetic_candidates: bool,
}

/// Common interface over the two update strategies.
pub trait HhhSketch: Send {
    fn spec(&self) -> &HierarchySpec;

    /// Processes one packet.
    fn insert(&mut self, key: &PacketKey);

    /// Packets seen, `N`.
    fn packets(&self) -> u64;

    /// Prefixes whose conditioned-frequency estimate reaches `theta * N`.
    fn output(&self, theta: f64) -> Result<Vec<HhhCandidate>>;

    /// Scaled upper bound on the frequency of `prefix`.
    fn upper_estimate(&self, prefix: &Prefix) -> f64;

    /// Scaled lower bound on the frequency of `prefix`.
    fn lower_estimate(&self, prefix: &Prefix) -> f64;

    fn info(&self) -> SketchInfo;

    /// Total counters allocated across all lattice nodes.
    fn total_counters(&self) -> usize;

    fn extend<'a, I: IntoIterator<Item = &'a PacketKey>>(&mut self, keys: I)
    where
        Self: Sized,
    {
        for k in keys {
            self.insert(k);
        }
    }
}

#[derive(Debug, Clone)]
struct LatticeTables {
    spec: HierarchySpec,
    tables: Vec<SpaceSaving<u64>>,
}

impl LatticeTables {
    fn new(spec: HierarchySpec, capacity: usize) -> Self {
        let tables = (0..spec.h()).map(|_| SpaceSaving::new(capacity)).collect();
        LatticeTables { spec, tables }
    }

    fn node_of(&self, prefix: &Prefix) -> usize {
        self.spec
            .node_id(&prefix.pattern)
            .expect("prefix pattern belongs to the sketch's lattice")
    }

    fn upper(&self, prefix: &Prefix) -> u64 {
        self.tables[self.node_of(prefix)].upper_bound(&prefix.packed())
    }

    fn lower(&self, prefix: &Prefix) -> u64 {
        self.tables[self.node_of(prefix)].lower_bound(&prefix.packed())
    }

    fn total_counters(&self) -> usize {
        self.tables.iter().map(SpaceSaving::capacity).sum()
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("theta must be in (0, 1), got {theta}")))
    }
}

/// `-sum f_h^-` over `G(p | pset)`.
pub fn calc_pred_1d(p: &Prefix, pset: &[HhhCandidate]) -> f64 {
    let prefixes: Vec<Prefix> = pset.iter().map(|c| c.prefix).collect();
    best_generalized_indices(p, &prefixes)
        .into_iter()
        .map(|i| -pset[i].lower)
        .sum()
}

/// Two-dimensional predecessor correction: subtracts `f_h^-` for every
/// `h in G(p | pset)` and adds back `f^+` of the glb of each pair, unless a
/// third member of `G` already covers that glb.
pub fn calc_pred_2d(p: &Prefix, pset: &[HhhCandidate], upper_of: impl Fn(&Prefix) -> f64) -> f64 {
    let prefixes: Vec<Prefix> = pset.iter().map(|c| c.prefix).collect();
    let g = best_generalized_indices(p, &prefixes);
    let mut r: f64 = g.iter().map(|&i| -pset[i].lower).sum();
    for (a, &i) in g.iter().enumerate() {
        for &j in &g[a + 1..] {
            let Some(q) = glb(&prefixes[i], &prefixes[j]) else {
                continue;
            };
            let covered = g.iter().any(|&k| k != i && k != j && prefixes[k].generalizes(&q));
            if !covered {
                r += upper_of(&q);
            }
        }
    }
    r
}

struct OutputPlan {
    n: u64,
    scale: f64,
    confidence: f64,
    synthetic: bool,
}

fn run_output(tables: &LatticeTables, plan: &OutputPlan, theta: f64) -> Result<Vec<HhhCandidate>> {
    check_theta(theta)?;
    if plan.n == 0 {
        return Err(Error::usage("output requested before any packet was processed"));
    }
    let spec = &tables.spec;
    let threshold = theta * plan.n as f64;
    let upper_of = |q: &Prefix| tables.upper(q) as f64 * plan.scale;
    let mut out: Vec<HhhCandidate> = Vec::new();

    for level in 0..=spec.depth() {
        for &node in spec.node_ids_at_level(level)? {
            let table = &tables.tables[node];
            let mut bits: Vec<u64> = table.counters().map(|c| c.key).collect();
            if plan.synthetic && table.is_full() {
                let extra: Vec<u64> = out
                    .iter()
                    .filter(|c| spec.level_of(&c.prefix.pattern) < level)
                    .map(|c| {
                        let key = PacketKey {
                            src: c.prefix.src,
                            dst: c.prefix.dst,
                        };
                        spec.packed_at(&key, node)
                    })
                    .filter(|b| !table.contains(b))
                    .collect();
                bits.extend(extra);
            }
            bits.sort_unstable();
            bits.dedup();
            for b in bits {
                let prefix = spec.prefix_from_packed(node, b);
                let upper = table.upper_bound(&b) as f64 * plan.scale;
                let lower = table.lower_bound(&b) as f64 * plan.scale;
                let pred = if spec.dims() == 1 {
                    calc_pred_1d(&prefix, &out)
                } else {
                    calc_pred_2d(&prefix, &out, upper_of)
                };
                let conditioned = upper + pred + plan.confidence;
                if conditioned >= threshold {
                    out.push(HhhCandidate {
                        prefix,
                        lower,
                        upper,
                        conditioned,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Randomized sketch: each packet updates at most one lattice node per draw.
#[derive(Debug, Clone)]
pub struct RhhhSketch {
    lattice: LatticeTables,
    params: ConfidenceParams,
    v: u64,
    r: u32,
    n: u64,
    seed: u64,
    rng: Pcg64Mcg,
    slots: Uniform<u32>,
    h: u32,
    confidence: ConfidenceMode,
    synthetic: bool,
}

impl RhhhSketch {
    /// Sketch with `v` sampling slots; `v` must be at least `H`.
    pub fn new(spec: HierarchySpec, params: ConfidenceParams, v: u64, seed: u64) -> Result<Self> {
        let h = spec.h() as u64;
        if v < h {
            return Err(Error::usage(format!("V = {v} is smaller than H = {h}")));
        }
        if v > u32::MAX as u64 {
            return Err(Error::usage(format!("V = {v} is too large")));
        }
        let slots = Uniform::new(0, v as u32).map_err(|e| Error::usage(e.to_string()))?;
        let capacity = sampled_capacity(&params);
        Ok(RhhhSketch {
            lattice: LatticeTables::new(spec, capacity),
            params,
            v,
            r: 1,
            n: 0,
            seed,
            rng: Pcg64Mcg::seed_from_u64(seed),
            slots,
            h: h as u32,
            confidence: ConfidenceMode::default(),
            synthetic: false,
        })
    }

    /// Sketch with `V = ratio * H`.
    pub fn with_v_ratio(spec: HierarchySpec, params: ConfidenceParams, ratio: u64, seed: u64) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::usage("V/H ratio must be at least 1"));
        }
        let v = ratio * spec.h() as u64;
        Self::new(spec, params, v, seed)
    }

    /// Performs `r` independent draws per packet. Must be set before the first packet.
    pub fn updates_per_packet(mut self, r: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::usage("updates per packet must be at least 1"));
        }
        if self.n > 0 {
            return Err(Error::usage("updates per packet cannot change after ingestion starts"));
        }
        self.r = r;
        Ok(self)
    }

    pub fn confidence_mode(mut self, mode: ConfidenceMode) -> Self {
        self.confidence = mode;
        self
    }

    /// Also considers unmonitored generalizations of already emitted prefixes
    /// at full tables, using the table minimum as their upper bound.
    pub fn synthetic_candidates(mut self, on: bool) -> Self {
        self.synthetic = on;
        self
    }

    pub fn v(&self) -> u64 {
        self.v
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    /// Multiplier turning a table count into packets: `V / r`.
    pub fn scale(&self) -> f64 {
        self.v as f64 / self.r as f64
    }

    pub fn table(&self, node: usize) -> &SpaceSaving<u64> {
        &self.lattice.tables[node]
    }

    /// Stream length after which the sampling guarantee holds, accounting for `r`.
    pub fn psi(&self) -> Result<f64> {
        Ok(psi(&self.params, self.v)? / self.r as f64)
    }

    /// Additive term for the current packet count.
    pub fn confidence_term(&self) -> Result<f64> {
        let t = conditioned_confidence_term(self.n, self.v, self.params.delta, self.confidence)?;
        Ok(t / (self.r as f64).sqrt())
    }

    #[inline]
    pub fn update(&mut self, key: &PacketKey) {
        self.n += 1;
        for _ in 0..self.r {
            let d = self.slots.sample(&mut self.rng);
            if d < self.h {
                let d = d as usize;
                let bits = self.lattice.spec.packed_at(key, d);
                self.lattice.tables[d].increment(bits);
            }
        }
    }
}

impl HhhSketch for RhhhSketch {
    fn spec(&self) -> &HierarchySpec {
        &self.lattice.spec
    }

    fn insert(&mut self, key: &PacketKey) {
        self.update(key);
    }

    fn packets(&self) -> u64 {
        self.n
    }

    fn output(&self, theta: f64) -> Result<Vec<HhhCandidate>> {
        check_theta(theta)?;
        if self.n == 0 {
            return Err(Error::usage("output requested before any packet was processed"));
        }
        let plan = OutputPlan {
            n: self.n,
            scale: self.scale(),
            confidence: self.confidence_term()?,
            synthetic: self.synthetic,
        };
        run_output(&self.lattice, &plan, theta)
    }

    fn upper_estimate(&self, prefix: &Prefix) -> f64 {
        self.lattice.upper(prefix) as f64 * self.scale()
    }

    fn lower_estimate(&self, prefix: &Prefix) -> f64 {
        self.lattice.lower(prefix) as f64 * self.scale()
    }

    fn info(&self) -> SketchInfo {
        SketchInfo {
            algorithm: "rhhh".into(),
            hierarchy: self.lattice.spec.kind().name().into(),
            h: self.lattice.spec.h(),
            v: self.v,
            r: self.r,
            epsilon: self.params.epsilon,
            delta: self.params.delta,
            epsilon_a: self.params.epsilon_a,
            epsilon_s: self.params.epsilon_s,
            delta_a: self.params.delta_a,
            delta_s: self.params.delta_s,
            seed: self.seed,
            counters_per_node: self.lattice.tables[0].capacity(),
            confidence: self.confidence,
            synthetic_candidates: self.synthetic,
        }
    }

    fn total_counters(&self) -> usize {
        self.lattice.total_counters()
    }
}

/// Deterministic baseline: every packet updates every lattice node.
#[derive(Debug, Clone)]
pub struct FullUpdateSketch {
    lattice: LatticeTables,
    params: ConfidenceParams,
    n: u64,
    synthetic: bool,
}

impl FullUpdateSketch {
    /// Tables sized `ceil(1 / epsilon_a)`.
    pub fn new(spec: HierarchySpec, params: ConfidenceParams) -> Self {
        let capacity = full_capacity(&params);
        Self::with_capacity(spec, params, capacity)
    }

    /// Tables with an explicit counter count, e.g. large enough to count exactly.
    pub fn with_capacity(spec: HierarchySpec, params: ConfidenceParams, capacity: usize) -> Self {
        FullUpdateSketch {
            lattice: LatticeTables::new(spec, capacity),
            params,
            n: 0,
            synthetic: false,
        }
    }

    pub fn synthetic_candidates(mut self, on: bool) -> Self {
        self.synthetic = on;
        self
    }

    pub fn table(&self, node: usize) -> &SpaceSaving<u64> {
        &self.lattice.tables[node]
    }

    #[inline]
    pub fn update_all(&mut self, key: &PacketKey) {
        self.n += 1;
        let spec = &self.lattice.spec;
        for (d, table) in self.lattice.tables.iter_mut().enumerate() {
            table.increment(spec.packed_at(key, d));
        }
    }
}

impl HhhSketch for FullUpdateSketch {
    fn spec(&self) -> &HierarchySpec {
        &self.lattice.spec
    }

    fn insert(&mut self, key: &PacketKey) {
        self.update_all(key);
    }

    fn packets(&self) -> u64 {
        self.n
    }

    fn output(&self, theta: f64) -> Result<Vec<HhhCandidate>> {
        let plan = OutputPlan {
            n: self.n,
            scale: 1.0,
            confidence: 0.0,
            synthetic: self.synthetic,
        };
        run_output(&self.lattice, &plan, theta)
    }

    fn upper_estimate(&self, prefix: &Prefix) -> f64 {
        self.lattice.upper(prefix) as f64
    }

    fn lower_estimate(&self, prefix: &Prefix) -> f64 {
        self.lattice.lower(prefix) as f64
    }

    fn info(&self) -> SketchInfo {
        SketchInfo {
            algorithm: "baseline".into(),
            hierarchy: self.lattice.spec.kind().name().into(),
            h: self.lattice.spec.h(),
            v: 1,
            r: 1,
            epsilon: self.params.epsilon,
            delta: self.params.delta,
            epsilon_a: self.params.epsilon_a,
            epsilon_s: self.params.epsilon_s,
            delta_a: self.params.delta_a,
            delta_s: self.params.delta_s,
            seed: 0,
            counters_per_node: self.lattice.tables[0].capacity(),
            confidence: ConfidenceMode::Analysis,
            synthetic_candidates: self.synthetic,
        }
    }

    fn total_counters(&self) -> usize {
        self.lattice.total_counters()
    }
}
