//! IP prefix lattices.
//!
//! A lattice node is a [`PrefixPattern`]: one prefix length per dimension. A
//! [`Prefix`] is a pattern together with masked address bits. `p.generalizes(q)`
//! holds when, in every dimension, `p`'s bits are a (possibly equal) prefix of
//! `q`'s bits; fully specified keys sit at level 0 and the all-wildcard prefix
//! sits at level `L`.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step between adjacent lattice levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Byte,
    Bit,
}

impl Granularity {
    pub fn step(self) -> u8 {
        match self {
            Granularity::Byte => 8,
            Granularity::Bit => 1,
        }
    }
}

/// The hierarchies the library builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HierarchyKind {
    /// Source address, byte steps (H = 5).
    #[serde(rename = "src-byte")]
    SrcByte,
    /// Source address, bit steps (H = 33).
    #[serde(rename = "src-bit")]
    SrcBit,
    /// Source and destination, byte steps (H = 25).
    #[serde(rename = "2d-byte")]
    TwoDByte,
}

impl HierarchyKind {
    pub fn name(self) -> &'static str {
        match self {
            HierarchyKind::SrcByte => "src-byte",
            HierarchyKind::SrcBit => "src-bit",
            HierarchyKind::TwoDByte => "2d-byte",
        }
    }

    pub fn dims(self) -> u8 {
        match self {
            HierarchyKind::TwoDByte => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for HierarchyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HierarchyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "src-byte" => Ok(HierarchyKind::SrcByte),
            "src-bit" => Ok(HierarchyKind::SrcBit),
            "2d-byte" => Ok(HierarchyKind::TwoDByte),
            other => Err(Error::usage(format!(
                "unknown hierarchy {other:?}; expected src-byte, src-bit or 2d-byte"
            ))),
        }
    }
}

/// One packet: a source address and, for two-dimensional hierarchies, a destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketKey {
    pub src: u32,
    pub dst: Option<u32>,
}

impl PacketKey {
    pub fn one(src: impl Into<u32>) -> Self {
        PacketKey {
            src: src.into(),
            dst: None,
        }
    }

    pub fn two(src: impl Into<u32>, dst: impl Into<u32>) -> Self {
        PacketKey {
            src: src.into(),
            dst: Some(dst.into()),
        }
    }

    pub fn dims(&self) -> u8 {
        if self.dst.is_some() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for PacketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Ipv4Addr::from(self.src))?;
        if let Some(dst) = self.dst {
            write!(f, ",{}", Ipv4Addr::from(dst))?;
        }
        Ok(())
    }
}

/// A lattice node: the prefix length kept in each dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrefixPattern {
    pub src_len: u8,
    pub dst_len: Option<u8>,
}

impl PrefixPattern {
    pub fn one(src_len: u8) -> Self {
        PrefixPattern { src_len, dst_len: None }
    }

    pub fn two(src_len: u8, dst_len: u8) -> Self {
        PrefixPattern {
            src_len,
            dst_len: Some(dst_len),
        }
    }

    pub fn dims(&self) -> u8 {
        if self.dst_len.is_some() {
            2
        } else {
            1
        }
    }

    pub fn src_mask(&self) -> u32 {
        mask(self.src_len)
    }

    pub fn dst_mask(&self) -> u32 {
        self.dst_len.map_or(0, mask)
    }
}

/// Network mask with the top `len` bits set.
pub fn mask(len: u8) -> u32 {
    match len {
        0 => 0,
        32.. => u32::MAX,
        l => u32::MAX << (32 - l),
    }
}

/// A masked key: the unit the lattice generalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix {
    pub pattern: PrefixPattern,
    pub src: u32,
    pub dst: Option<u32>,
}

fn covers(len_a: u8, bits_a: u32, len_b: u8, bits_b: u32) -> bool {
    len_a <= len_b && (bits_b & mask(len_a)) == bits_a
}

impl Prefix {
    /// Builds a prefix, zeroing any bits outside the pattern.
    pub fn new(pattern: PrefixPattern, src: u32, dst: Option<u32>) -> Self {
        Prefix {
            pattern,
            src: src & pattern.src_mask(),
            dst: pattern.dst_len.map(|l| dst.unwrap_or(0) & mask(l)),
        }
    }

    /// True when `self` is an ancestor of, or equal to, `other` in every dimension.
    pub fn generalizes(&self, other: &Prefix) -> bool {
        if !covers(self.pattern.src_len, self.src, other.pattern.src_len, other.src) {
            return false;
        }
        match (self.pattern.dst_len, other.pattern.dst_len) {
            (None, None) => true,
            (Some(la), Some(lb)) => covers(la, self.dst.unwrap_or(0), lb, other.dst.unwrap_or(0)),
            _ => false,
        }
    }

    /// True when `other` is an ancestor of, or equal to, `self`.
    pub fn is_generalized_by(&self, other: &Prefix) -> bool {
        other.generalizes(self)
    }

    /// Strict version of [`Prefix::generalizes`].
    pub fn strictly_generalizes(&self, other: &Prefix) -> bool {
        self != other && self.generalizes(other)
    }

    /// True when the fully specified key falls under this prefix.
    pub fn covers_key(&self, key: &PacketKey) -> bool {
        if (key.src & self.pattern.src_mask()) != self.src {
            return false;
        }
        match (self.pattern.dst_len, key.dst) {
            (None, None) => true,
            (Some(l), Some(d)) => (d & mask(l)) == self.dst.unwrap_or(0),
            _ => false,
        }
    }

    /// Bits packed into one word, used as the key inside a node's counter table.
    pub fn packed(&self) -> u64 {
        pack(self.src, self.dst.unwrap_or(0))
    }
}

pub(crate) fn pack(src: u32, dst: u32) -> u64 {
    ((src as u64) << 32) | dst as u64
}

pub(crate) fn unpack(bits: u64) -> (u32, u32) {
    ((bits >> 32) as u32, bits as u32)
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", Ipv4Addr::from(self.src), self.pattern.src_len)?;
        if let (Some(l), Some(d)) = (self.pattern.dst_len, self.dst) {
            write!(f, "|{}/{}", Ipv4Addr::from(d), l)?;
        }
        Ok(())
    }
}

fn parse_part(s: &str) -> Result<(u32, u8)> {
    let (addr, len) = match s.split_once('/') {
        Some((a, l)) => {
            let len: u8 = l
                .parse()
                .map_err(|_| Error::usage(format!("bad prefix length in {s:?}")))?;
            (a, len)
        }
        None => (s, 32),
    };
    if len > 32 {
        return Err(Error::usage(format!("prefix length above 32 in {s:?}")));
    }
    let addr: Ipv4Addr = addr
        .parse()
        .map_err(|_| Error::usage(format!("bad IPv4 address in {s:?}")))?;
    Ok((u32::from(addr), len))
}

impl FromStr for Prefix {
    type Err = Error;

    /// Parses `a.b.c.d/len` or `a.b.c.d/len|e.f.g.h/len`; a missing length means /32.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('|') {
            None => {
                let (src, l) = parse_part(s)?;
                Ok(Prefix::new(PrefixPattern::one(l), src, None))
            }
            Some((a, b)) => {
                let (src, ls) = parse_part(a)?;
                let (dst, ld) = parse_part(b)?;
                Ok(Prefix::new(PrefixPattern::two(ls, ld), src, Some(dst)))
            }
        }
    }
}

/// Greatest common descendant of two prefixes, or `None` when they share no
/// descendant (such a pair contributes a count of zero).
pub fn glb(h: &Prefix, h2: &Prefix) -> Option<Prefix> {
    fn meet(la: u8, a: u32, lb: u8, b: u32) -> Option<(u8, u32)> {
        let common = mask(la.min(lb));
        if (a & common) != (b & common) {
            return None;
        }
        Some(if la >= lb { (la, a) } else { (lb, b) })
    }
    let (src_len, src) = meet(h.pattern.src_len, h.src, h2.pattern.src_len, h2.src)?;
    match (h.pattern.dst_len, h2.pattern.dst_len) {
        (None, None) => Some(Prefix::new(PrefixPattern::one(src_len), src, None)),
        (Some(la), Some(lb)) => {
            let (dst_len, dst) = meet(la, h.dst.unwrap_or(0), lb, h2.dst.unwrap_or(0))?;
            Some(Prefix::new(PrefixPattern::two(src_len, dst_len), src, Some(dst)))
        }
        _ => None,
    }
}

/// Indices of the members of `pset` most closely generalized by `q`: those
/// strictly below `q` with no other member of `pset` strictly between them and `q`.
pub fn best_generalized_indices(q: &Prefix, pset: &[Prefix]) -> Vec<usize> {
    let below: Vec<usize> = (0..pset.len()).filter(|&i| q.strictly_generalizes(&pset[i])).collect();
    below
        .iter()
        .copied()
        .filter(|&i| !below.iter().any(|&j| j != i && pset[j].strictly_generalizes(&pset[i])))
        .collect()
}

/// `G(q | pset)` as prefixes.
pub fn best_generalized(q: &Prefix, pset: &[Prefix]) -> Vec<Prefix> {
    best_generalized_indices(q, pset).into_iter().map(|i| pset[i]).collect()
}

/// A complete lattice with its nodes, levels and per-node masks.
#[derive(Debug, Clone)]
pub struct HierarchySpec {
    kind: HierarchyKind,
    granularity: Granularity,
    nodes: Vec<PrefixPattern>,
    levels: Vec<Vec<usize>>,
    masks: Vec<(u32, u32)>,
    index: HashMap<PrefixPattern, usize>,
}

impl HierarchySpec {
    pub fn new(kind: HierarchyKind) -> Self {
        let granularity = match kind {
            HierarchyKind::SrcBit => Granularity::Bit,
            _ => Granularity::Byte,
        };
        Self::build(kind, kind.dims(), granularity).expect("preset lattices are valid")
    }

    /// Builds a lattice from its dimension count and granularity.
    ///
    /// Two-dimensional bit lattices are not supported.
    pub fn from_shape(dims: u8, granularity: Granularity) -> Result<Self> {
        let kind = match (dims, granularity) {
            (1, Granularity::Byte) => HierarchyKind::SrcByte,
            (1, Granularity::Bit) => HierarchyKind::SrcBit,
            (2, Granularity::Byte) => HierarchyKind::TwoDByte,
            (2, Granularity::Bit) => {
                return Err(Error::usage(
                    "two-dimensional bit-granularity lattices are not supported",
                ))
            }
            (d, _) => return Err(Error::usage(format!("unsupported dimension count {d}"))),
        };
        Self::build(kind, dims, granularity)
    }

    fn build(kind: HierarchyKind, dims: u8, granularity: Granularity) -> Result<Self> {
        let step = granularity.step();
        let lens: Vec<u8> = (0..=32 / step).map(|i| i * step).collect();
        let mut nodes: Vec<PrefixPattern> = match dims {
            1 => lens.iter().map(|&s| PrefixPattern::one(s)).collect(),
            2 => lens
                .iter()
                .flat_map(|&s| lens.iter().map(move |&d| PrefixPattern::two(s, d)))
                .collect(),
            d => return Err(Error::usage(format!("unsupported dimension count {d}"))),
        };
        let level = |p: &PrefixPattern| level_with_step(p, step);
        nodes.sort_by(|a, b| {
            level(a)
                .cmp(&level(b))
                .then(b.src_len.cmp(&a.src_len))
                .then(b.dst_len.cmp(&a.dst_len))
        });
        let depth = level(nodes.last().expect("lattice has nodes"));
        let mut levels = vec![Vec::new(); depth + 1];
        for (i, p) in nodes.iter().enumerate() {
            levels[level(p)].push(i);
        }
        let masks = nodes.iter().map(|p| (p.src_mask(), p.dst_mask())).collect();
        let index = nodes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Ok(HierarchySpec {
            kind,
            granularity,
            nodes,
            levels,
            masks,
            index,
        })
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    pub fn dims(&self) -> u8 {
        self.kind.dims()
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Number of lattice nodes, `H`.
    pub fn h(&self) -> usize {
        self.nodes.len()
    }

    /// Hierarchy depth `L`: the level of the all-wildcard node.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn nodes(&self) -> &[PrefixPattern] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> PrefixPattern {
        self.nodes[id]
    }

    pub fn node_id(&self, pattern: &PrefixPattern) -> Option<usize> {
        self.index.get(pattern).copied()
    }

    /// Number of single-step generalizations separating `pattern` from a fully specified key.
    pub fn level_of(&self, pattern: &PrefixPattern) -> usize {
        level_with_step(pattern, self.granularity.step())
    }

    /// Node ids at level `l`, in lattice order.
    pub fn node_ids_at_level(&self, l: usize) -> Result<&[usize]> {
        self.levels
            .get(l)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::usage(format!("level {l} outside 0..={}", self.depth())))
    }

    pub fn nodes_at_level(&self, l: usize) -> Result<Vec<PrefixPattern>> {
        Ok(self.node_ids_at_level(l)?.iter().map(|&i| self.nodes[i]).collect())
    }

    /// Checks that the key has as many addresses as the lattice has dimensions.
    pub fn check_key(&self, key: &PacketKey) -> Result<()> {
        if key.dims() != self.dims() {
            return Err(Error::usage(format!(
                "key {key} has {} dimension(s) but the {} hierarchy has {}",
                key.dims(),
                self.kind,
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn generalize(&self, key: &PacketKey, pattern: &PrefixPattern) -> Result<Prefix> {
        self.check_key(key)?;
        if pattern.dims() != self.dims() {
            return Err(Error::usage(format!(
                "pattern has {} dimension(s) but the {} hierarchy has {}",
                pattern.dims(),
                self.kind,
                self.dims()
            )));
        }
        Ok(Prefix::new(*pattern, key.src, key.dst))
    }

    /// Generalization to node `id` without validation.
    pub fn generalize_node(&self, key: &PacketKey, id: usize) -> Prefix {
        Prefix::new(self.nodes[id], key.src, key.dst)
    }

    /// Packed bits of the key's generalization at node `id`.
    #[inline]
    pub fn packed_at(&self, key: &PacketKey, id: usize) -> u64 {
        let (sm, dm) = self.masks[id];
        pack(key.src & sm, key.dst.unwrap_or(0) & dm)
    }

    pub(crate) fn prefix_from_packed(&self, id: usize, bits: u64) -> Prefix {
        let (src, dst) = unpack(bits);
        let pattern = self.nodes[id];
        Prefix::new(pattern, src, pattern.dst_len.map(|_| dst))
    }

    /// The all-wildcard prefix.
    pub fn root(&self) -> Prefix {
        let pattern = self.nodes[self.h() - 1];
        Prefix::new(pattern, 0, pattern.dst_len.map(|_| 0))
    }
}

fn level_with_step(p: &PrefixPattern, step: u8) -> usize {
    let s = ((32 - p.src_len) / step) as usize;
    let d = p.dst_len.map_or(0, |l| ((32 - l) / step) as usize);
    s + d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn ip(s: &str) -> u32 {
        u32::from(s.parse::<Ipv4Addr>().unwrap())
    }

    #[test]
    fn preset_sizes() {
        let cases = [
            (HierarchyKind::SrcByte, 5, 4),
            (HierarchyKind::SrcBit, 33, 32),
            (HierarchyKind::TwoDByte, 25, 8),
        ];
        for (kind, h, l) in cases {
            let spec = HierarchySpec::new(kind);
            assert_eq!(spec.h(), h, "{kind}");
            assert_eq!(spec.depth(), l, "{kind}");
            let total: usize = (0..=l).map(|i| spec.nodes_at_level(i).unwrap().len()).sum();
            assert_eq!(total, h);
        }
        assert!(HierarchySpec::from_shape(2, Granularity::Bit).is_err());
    }

    #[test]
    fn generalize_examples() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        let key = PacketKey::one(ip("181.7.20.6"));
        let g = spec.generalize(&key, &PrefixPattern::one(16)).unwrap();
        assert_eq!(g, p("181.7.0.0/16"));
        assert_eq!(g.to_string(), "181.7.0.0/16");
        let root = spec.generalize(&key, &PrefixPattern::one(0)).unwrap();
        assert_eq!(root, spec.root());

        let spec2 = HierarchySpec::new(HierarchyKind::TwoDByte);
        let key2 = PacketKey::two(ip("181.7.20.6"), ip("208.67.222.222"));
        let g2 = spec2.generalize(&key2, &PrefixPattern::two(24, 32)).unwrap();
        assert_eq!(g2.to_string(), "181.7.20.0/24|208.67.222.222/32");
        assert!(spec2.generalize(&key, &PrefixPattern::two(24, 32)).is_err());
        assert!(spec.generalize(&key2, &PrefixPattern::one(8)).is_err());
    }

    #[test]
    fn generalization_examples() {
        assert!(p("181.7.0.0/16").generalizes(&p("181.7.20.6/32")));
        assert!(!p("181.8.0.0/16").generalizes(&p("181.7.20.6/32")));
        assert!(p("181.7.0.0/16|0.0.0.0/0").generalizes(&p("181.7.20.6/32|208.67.222.222/32")));
        assert!(p("181.7.20.6/32").is_generalized_by(&p("181.7.0.0/16")));
        assert!(!p("181.7.0.0/16").strictly_generalizes(&p("181.7.0.0/16")));
    }

    #[test]
    fn level_examples() {
        let spec = HierarchySpec::new(HierarchyKind::SrcByte);
        assert_eq!(spec.level_of(&PrefixPattern::one(32)), 0);
        assert_eq!(spec.level_of(&PrefixPattern::one(0)), 4);
        let spec2 = HierarchySpec::new(HierarchyKind::TwoDByte);
        assert_eq!(spec2.level_of(&PrefixPattern::two(24, 8)), 4);
        assert_eq!(spec2.nodes_at_level(0).unwrap(), vec![PrefixPattern::two(32, 32)]);
        assert_eq!(spec2.nodes_at_level(8).unwrap(), vec![PrefixPattern::two(0, 0)]);
        assert!(spec2.nodes_at_level(9).is_err());
    }

    #[test]
    fn lattice_order_within_level() {
        let spec2 = HierarchySpec::new(HierarchyKind::TwoDByte);
        assert_eq!(
            spec2.nodes_at_level(1).unwrap(),
            vec![PrefixPattern::two(32, 24), PrefixPattern::two(24, 32)]
        );
        for (i, n) in spec2.nodes().iter().enumerate() {
            assert_eq!(spec2.node_id(n), Some(i));
        }
    }

    #[test]
    fn best_generalized_examples() {
        let pset = vec![p("142.14.13.0/24"), p("142.14.13.14/32")];
        assert_eq!(best_generalized(&p("142.14.0.0/16"), &pset), vec![p("142.14.13.0/24")]);
        assert!(best_generalized(&p("142.14.0.0/16"), &[]).is_empty());
        assert!(best_generalized(&p("142.14.13.14/32"), &pset).is_empty());
    }

    #[test]
    fn glb_examples() {
        assert_eq!(
            glb(&p("1.2.0.0/16|0.0.0.0/0"), &p("0.0.0.0/0|5.6.0.0/16")),
            Some(p("1.2.0.0/16|5.6.0.0/16"))
        );
        assert_eq!(
            glb(&p("1.2.0.0/16|5.0.0.0/8"), &p("1.2.3.0/24|0.0.0.0/0")),
            Some(p("1.2.3.0/24|5.0.0.0/8"))
        );
        assert_eq!(glb(&p("1.2.0.0/16|0.0.0.0/0"), &p("1.3.0.0/16|0.0.0.0/0")), None);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("300.1.1.1/8".parse::<Prefix>().is_err());
        assert!("1.1.1.1/33".parse::<Prefix>().is_err());
        assert!("1.1.1.1/x".parse::<Prefix>().is_err());
    }

    #[test]
    fn new_zeroes_bits_outside_pattern() {
        let q = Prefix::new(PrefixPattern::two(8, 16), ip("10.1.2.3"), Some(ip("20.30.40.50")));
        assert_eq!(q.src, ip("10.0.0.0"));
        assert_eq!(q.dst, Some(ip("20.30.0.0")));
    }
}
