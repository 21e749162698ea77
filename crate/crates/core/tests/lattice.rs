mod support;

use proptest::prelude::*;
use rhhh::hierarchy::{best_generalized, glb, HierarchyKind, HierarchySpec, PacketKey, Prefix};
use support::prefix;

fn all_generalizations(spec: &HierarchySpec, keys: &[PacketKey]) -> Vec<Prefix> {
    let mut out: Vec<Prefix> = keys
        .iter()
        .flat_map(|k| (0..spec.h()).map(move |n| spec.generalize_node(k, n)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn key_strategy() -> impl Strategy<Value = PacketKey> {
    // Small pools make shared prefixes likely.
    let part = (0u32..3, 0u32..3, 0u32..3, 0u32..3).prop_map(|(a, b, c, d)| a << 24 | b << 16 | c << 8 | d);
    (part.clone(), part).prop_map(|(s, d)| PacketKey::two(s, d))
}

proptest! {
    #[test]
    fn generalization_is_a_partial_order(keys in prop::collection::vec(key_strategy(), 1..4)) {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let ps = all_generalizations(&spec, &keys);
        for a in &ps {
            prop_assert!(a.generalizes(a));
            for b in &ps {
                if a.generalizes(b) && b.generalizes(a) {
                    prop_assert_eq!(a, b);
                }
                if a.generalizes(b) {
                    for c in &ps {
                        if b.generalizes(c) {
                            prop_assert!(a.generalizes(c));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn glb_is_the_greatest_common_descendant(keys in prop::collection::vec(key_strategy(), 1..4)) {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let ps = all_generalizations(&spec, &keys);
        // Every lattice point with bits drawn from the keys' generalizations.
        let universe: Vec<Prefix> = ps.clone();
        for h in &ps {
            for h2 in &ps {
                let common: Vec<&Prefix> = universe
                    .iter()
                    .filter(|d| h.generalizes(d) && h2.generalizes(d))
                    .collect();
                match glb(h, h2) {
                    Some(m) => {
                        prop_assert!(h.generalizes(&m) && h2.generalizes(&m));
                        for d in common {
                            prop_assert!(m.generalizes(d));
                        }
                    }
                    None => prop_assert!(common.is_empty()),
                }
            }
        }
    }

    #[test]
    fn best_generalized_members_are_incomparable(
        keys in prop::collection::vec(key_strategy(), 1..6),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..12),
    ) {
        let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
        let ps = all_generalizations(&spec, &keys);
        let pset: Vec<Prefix> = picks.iter().map(|i| ps[i.index(ps.len())]).collect();
        for q in &ps {
            let g = best_generalized(q, &pset);
            for a in &g {
                prop_assert!(q.strictly_generalizes(a));
                for b in &g {
                    if a != b {
                        prop_assert!(!a.generalizes(b));
                    }
                }
            }
        }
    }
}

#[test]
fn single_step_adds_one_level() {
    for kind in [HierarchyKind::SrcByte, HierarchyKind::SrcBit, HierarchyKind::TwoDByte] {
        let spec = HierarchySpec::new(kind);
        let step = spec.granularity().step();
        for n in spec.nodes() {
            let l = spec.level_of(n);
            if n.src_len >= step {
                let mut up = *n;
                up.src_len -= step;
                assert_eq!(spec.level_of(&up), l + 1);
            }
            if let Some(d) = n.dst_len.filter(|&d| d >= step) {
                let mut up = *n;
                up.dst_len = Some(d - step);
                assert_eq!(spec.level_of(&up), l + 1);
            }
        }
    }
}

#[test]
fn maximal_chain_length_matches_level() {
    // (/24, /8) in 2D bytes: one src step and three dst steps below the key.
    let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
    let p = prefix("1.2.3.0/24|5.0.0.0/8");
    let mut chain = 0;
    let mut cur = p.pattern;
    while cur.src_len < 32 || cur.dst_len.unwrap() < 32 {
        if cur.src_len < 32 {
            cur.src_len += 8;
        } else {
            cur.dst_len = Some(cur.dst_len.unwrap() + 8);
        }
        chain += 1;
    }
    assert_eq!(chain, 4);
    assert_eq!(spec.level_of(&p.pattern), 4);
}
