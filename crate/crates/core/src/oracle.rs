//! Exact ground truth: frequencies, conditioned frequencies and the exact HHH set.
//!
//! Memory grows with `H` times the number of distinct keys. Meant for
//! validation on traces of up to a few million packets, not for production
//! streams.

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::Result;
use crate::hierarchy::{best_generalized, glb, HierarchySpec, PacketKey, Prefix};

/// Exact per-node prefix counts of a finite stream.
#[derive(Debug, Clone)]
pub struct ExactCounts {
    spec: HierarchySpec,
    per_node: Vec<FxHashMap<u64, u64>>,
    keys: FxHashMap<PacketKey, u64>,
    n: u64,
}

/// Counts every generalization of every packet.
pub fn count_exact<'a, I>(stream: I, spec: &HierarchySpec) -> Result<ExactCounts>
where
    I: IntoIterator<Item = &'a PacketKey>,
{
    let mut keys: FxHashMap<PacketKey, u64> = FxHashMap::default();
    let mut n = 0u64;
    for key in stream {
        spec.check_key(key)?;
        *keys.entry(*key).or_insert(0) += 1;
        n += 1;
    }
    let mut per_node = vec![FxHashMap::default(); spec.h()];
    for (key, &f) in &keys {
        for (node, map) in per_node.iter_mut().enumerate() {
            *map.entry(spec.packed_at(key, node)).or_insert(0) += f;
        }
    }
    Ok(ExactCounts {
        spec: spec.clone(),
        per_node,
        keys,
        n,
    })
}

impl ExactCounts {
    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    /// Stream length.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Distinct fully specified keys and their counts.
    pub fn keys(&self) -> impl Iterator<Item = (&PacketKey, u64)> + '_ {
        self.keys.iter().map(|(k, &f)| (k, f))
    }

    pub fn distinct(&self) -> usize {
        self.keys.len()
    }

    /// Exact frequency `f_p`.
    pub fn frequency(&self, p: &Prefix) -> u64 {
        self.spec
            .node_id(&p.pattern)
            .and_then(|node| self.per_node[node].get(&p.packed()))
            .copied()
            .unwrap_or(0)
    }

    /// Non-zero prefixes at one lattice node.
    pub fn node_counts(&self, node: usize) -> impl Iterator<Item = (Prefix, u64)> + '_ {
        self.per_node[node]
            .iter()
            .map(move |(&bits, &f)| (self.spec.prefix_from_packed(node, bits), f))
    }

    /// Conditioned frequency by the closed form: `f_q - sum_{G} f_h`, plus
    /// `sum f_glb(h, h')` over unordered pairs of `G` in two dimensions.
    pub fn conditioned_exact(&self, q: &Prefix, pset: &[Prefix]) -> i64 {
        let g = best_generalized(q, pset);
        let mut c = self.frequency(q) as i64;
        c -= g.iter().map(|h| self.frequency(h) as i64).sum::<i64>();
        if self.spec.dims() == 2 {
            for (i, h) in g.iter().enumerate() {
                for h2 in &g[i + 1..] {
                    if let Some(m) = glb(h, h2) {
                        c += self.frequency(&m) as i64;
                    }
                }
            }
        }
        c
    }

    /// Conditioned frequency by definition: the traffic of keys under `q` that
    /// no member of `pset` covers.
    pub fn conditioned_by_definition(&self, q: &Prefix, pset: &[Prefix]) -> u64 {
        self.keys
            .iter()
            .filter(|(k, _)| q.covers_key(k) && !pset.iter().any(|p| p.covers_key(k)))
            .map(|(_, &f)| f)
            .sum()
    }

    fn covered(&self, key: &PacketKey, members: &[FxHashSet<u64>]) -> bool {
        members
            .iter()
            .enumerate()
            .any(|(node, set)| !set.is_empty() && set.contains(&self.spec.packed_at(key, node)))
    }

    fn member_sets(&self, pset: &[Prefix]) -> Vec<FxHashSet<u64>> {
        let mut sets = vec![FxHashSet::default(); self.spec.h()];
        for p in pset {
            if let Some(node) = self.spec.node_id(&p.pattern) {
                sets[node].insert(p.packed());
            }
        }
        sets
    }

    /// `C_{q | pset}` for every prefix `q` generalizing an observed key and not
    /// in `pset`, skipping zeros. Computed from the definition in one pass.
    pub fn conditioned_all(&self, pset: &[Prefix]) -> Vec<(Prefix, u64)> {
        let members = self.member_sets(pset);
        let mut acc: Vec<FxHashMap<u64, u64>> = vec![FxHashMap::default(); self.spec.h()];
        for (key, &f) in &self.keys {
            if self.covered(key, &members) {
                continue;
            }
            for (node, map) in acc.iter_mut().enumerate() {
                *map.entry(self.spec.packed_at(key, node)).or_insert(0) += f;
            }
        }
        let mut out = Vec::new();
        for (node, map) in acc.into_iter().enumerate() {
            for (bits, c) in map {
                if !members[node].contains(&bits) {
                    out.push((self.spec.prefix_from_packed(node, bits), c));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Exact HHH set, built level by level from the fully specified keys up.
    ///
    /// A prefix at level `l` joins when its conditioned frequency with respect
    /// to the HHHs of levels below `l` reaches `theta * n`. Returned in
    /// level order, lattice node order, then address order.
    pub fn exact_hhh(&self, theta: f64) -> Result<Vec<Prefix>> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(crate::Error::usage(format!("theta must be in (0, 1), got {theta}")));
        }
        let threshold = theta * self.n as f64;
        let mut members: Vec<FxHashSet<u64>> = vec![FxHashSet::default(); self.spec.h()];
        let mut out = Vec::new();
        for level in 0..=self.spec.depth() {
            let nodes = self.spec.node_ids_at_level(level)?;
            let mut acc: Vec<FxHashMap<u64, u64>> = vec![FxHashMap::default(); nodes.len()];
            for (key, &f) in &self.keys {
                if self.covered(key, &members) {
                    continue;
                }
                for (slot, &node) in nodes.iter().enumerate() {
                    *acc[slot].entry(self.spec.packed_at(key, node)).or_insert(0) += f;
                }
            }
            let mut added = Vec::new();
            for (slot, &node) in nodes.iter().enumerate() {
                let mut hits: Vec<u64> = acc[slot]
                    .iter()
                    .filter(|(_, &c)| c as f64 >= threshold)
                    .map(|(&b, _)| b)
                    .collect();
                hits.sort_unstable();
                for b in hits {
                    added.push((node, b));
                    out.push(self.spec.prefix_from_packed(node, b));
                }
            }
            for (node, b) in added {
                members[node].insert(b);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchyKind;

    fn p(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn ip(s: &str) -> u32 {
        u32::from(s.parse::<std::net::Ipv4Addr>().unwrap())
    }

    #[test]
    fn counts_small_stream() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        let a = PacketKey::one(ip("1.2.3.4"));
        let b = PacketKey::one(ip("1.2.3.5"));
        let c = count_exact(&[a, a, b], &spec).unwrap();
        assert_eq!(c.frequency(&p("1.2.3.4")), 2);
        assert_eq!(c.frequency(&p("1.2.3.5")), 1);
        assert_eq!(c.frequency(&p("1.2.3.0/24")), 3);
        assert_eq!(c.frequency(&spec.root()), 3);
        assert_eq!(c.frequency(&p("9.9.9.9")), 0);
        assert_eq!(c.n(), 3);
        let total: u64 = c.keys().map(|(_, f)| f).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let err = count_exact(&[PacketKey::one(1u32)], &spec).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn conditioned_with_empty_set_is_frequency() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        let keys: Vec<_> = (0..50u32).map(|i| PacketKey::one(i * 7919)).collect();
        let c = count_exact(&keys, &spec).unwrap();
        let q = spec.root();
        assert_eq!(c.conditioned_exact(&q, &[]), 50);
        assert_eq!(c.conditioned_by_definition(&q, &[]), 50);
    }

    #[test]
    fn single_flow_only_the_flow_is_hhh() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        let keys = vec![PacketKey::one(ip("10.20.30.40")); 17];
        let c = count_exact(&keys, &spec).unwrap();
        assert_eq!(c.exact_hhh(0.5).unwrap(), vec![p("10.20.30.40")]);
    }

    #[test]
    fn high_theta_gives_nothing() {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let keys: Vec<_> = (0..200u32)
            .map(|i| PacketKey::two(i.wrapping_mul(0x9E37_79B9), i.wrapping_mul(0x85EB_CA6B)))
            .collect();
        let c = count_exact(&keys, &spec).unwrap();
        // Every prefix at level >= 1 is hit by few keys except the root,
        // but the root has all 200 packets; theta 0.99 still admits it.
        assert_eq!(c.exact_hhh(0.99).unwrap(), vec![spec.root()]);
        assert!(c.exact_hhh(1.0).is_err());
    }

    #[test]
    fn two_dimensional_overlap_matches_definition() {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let k = |s: &str, d: &str| PacketKey::two(ip(s), ip(d));
        // Four flows: under (1.2.*, *) only, under (*, 5.6.*) only, under both, under neither.
        let mut keys = Vec::new();
        keys.extend(std::iter::repeat_n(k("1.2.9.9", "7.7.7.7"), 5));
        keys.extend(std::iter::repeat_n(k("3.3.3.3", "5.6.1.1"), 4));
        keys.extend(std::iter::repeat_n(k("1.2.3.4", "5.6.7.8"), 3));
        keys.extend(std::iter::repeat_n(k("8.8.8.8", "8.8.4.4"), 2));
        let c = count_exact(&keys, &spec).unwrap();
        let pset = [p("1.2.0.0/16|0.0.0.0/0"), p("0.0.0.0/0|5.6.0.0/16")];
        let q = spec.root();
        assert_eq!(c.conditioned_exact(&q, &pset), 14 - 8 - 7 + 3);
        assert_eq!(c.conditioned_by_definition(&q, &pset), 2);
    }

    #[test]
    fn conditioned_all_agrees_with_definition() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        let keys: Vec<_> = (0..400u32)
            .map(|i| PacketKey::one((i % 13) << 24 | (i % 5) << 16 | (i % 3)))
            .collect();
        let c = count_exact(&keys, &spec).unwrap();
        let pset = [p("1.0.0.0/8"), p("2.3.0.0/16"), p("4.4.0.2")];
        for (q, v) in c.conditioned_all(&pset) {
            assert_eq!(v, c.conditioned_by_definition(&q, &pset), "{q}");
            assert!(!pset.contains(&q));
        }
    }
}
