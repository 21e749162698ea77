mod support;

use rhhh::experiment::run_seeds;
use rhhh::ingest::gen_zipf;
use rhhh::metrics::aggregate;
use rhhh::{
    count_exact, Algorithm, ConfidenceParams, FullUpdateSketch, HhhSketch, HierarchyKind, HierarchySpec, RhhhSketch,
    SketchConfig,
};
use support::{prefix, worked_example_stream, WORKED_EXAMPLE_THETA};

fn params(eps: f64, delta: f64) -> ConfidenceParams {
    ConfidenceParams::from_totals(eps, delta).unwrap()
}

#[test]
fn baseline_reports_the_worked_example() {
    let spec = HierarchySpec::new(HierarchyKind::SrcByte);
    for theta in [WORKED_EXAMPLE_THETA, 0.1] {
        let mut b = FullUpdateSketch::new(spec.clone(), params(0.01, 0.05));
        b.extend(&worked_example_stream());
        let out = b.output(theta).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].prefix, prefix("101.102.0.0/16"));
        assert_eq!((out[0].lower, out[0].upper), (102.0, 102.0));
    }
}

#[test]
fn tiny_baseline_keeps_bounds() {
    // Four counters per node cannot hold the stream; bounds must still bracket.
    let spec = HierarchySpec::new(HierarchyKind::SrcByte);
    let stream = worked_example_stream();
    let counts = count_exact(&stream, &spec).unwrap();
    let mut b = FullUpdateSketch::with_capacity(spec.clone(), params(0.5, 0.05), 4);
    b.extend(&stream);
    for node in 0..spec.h() {
        for (p, f) in counts.node_counts(node) {
            let (lo, hi) = (b.lower_estimate(&p), b.upper_estimate(&p));
            assert!(lo <= f as f64 && f as f64 <= hi, "{p}: {lo} {f} {hi}");
            assert!(hi - f as f64 <= 108.0 / 4.0);
        }
    }
}

#[test]
fn sampled_sketch_finds_a_dominant_prefix() {
    let spec = HierarchySpec::new(HierarchyKind::TwoDByte);
    let heavy = rhhh::PacketKey::two(support::ip("10.1.2.3"), support::ip("20.1.2.3"));
    let noise = gen_zipf(0.8, 50_000, 150_000, 5, 2).unwrap();
    let stream: Vec<_> = noise
        .iter()
        .enumerate()
        .map(|(i, k)| if i % 4 == 0 { heavy } else { *k })
        .collect();
    let mut s = RhhhSketch::with_v_ratio(spec, params(0.05, 0.05), 1, 11).unwrap();
    s.extend(&stream);
    let out = s.output(0.2).unwrap();
    let heavy_prefix = prefix("10.1.2.3/32|20.1.2.3/32");
    assert!(out.iter().any(|c| c.prefix == heavy_prefix));
    let est = s.upper_estimate(&heavy_prefix);
    assert!((est - 37_500.0).abs() < 0.05 * 150_000.0, "{est}");
}

#[test]
fn monte_carlo_accuracy_and_coverage() {
    let p = params(0.05, 0.05);
    let n = 4 * rhhh::stats::psi(&p, 5).unwrap() as u64;
    let stream = gen_zipf(1.0, 10_000, n, 3, 1).unwrap();
    let spec = HierarchySpec::new(HierarchyKind::SrcByte);
    let counts = count_exact(&stream, &spec).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    for r in [1, 4] {
        let mut cfg = SketchConfig::new(HierarchyKind::SrcByte, Algorithm::Rhhh, p);
        cfg.r = r;
        let agg = aggregate(&run_seeds(&cfg, &stream, &counts, 0.1, &seeds).unwrap()).unwrap();
        assert!(agg.accuracy_violation_rate <= 0.05, "{agg:?}");
        assert!(agg.coverage_failure_rate <= 0.05, "{agg:?}");
        assert_eq!(agg.recall, 1.0);
    }
}

#[test]
fn baseline_on_short_zipf_is_exact() {
    let spec = HierarchySpec::new(HierarchyKind::SrcByte);
    let stream = gen_zipf(1.0, 50, 1000, 9, 1).unwrap();
    let counts = count_exact(&stream, &spec).unwrap();
    let cfg = SketchConfig::new(HierarchyKind::SrcByte, Algorithm::Baseline, params(0.01, 0.05));
    let reps = run_seeds(&cfg, &stream, &counts, 0.05, &[1]).unwrap();
    assert_eq!(reps[0].accuracy_violation_rate, 0.0);
    assert_eq!(reps[0].coverage_failure_rate, 0.0);
}

#[test]
fn conditioned_estimates_are_conservative() {
    let p = params(0.05, 0.05);
    let spec = HierarchySpec::new(HierarchyKind::SrcByte);
    let n = 2 * rhhh::stats::psi(&p, 5).unwrap() as u64;
    let stream = gen_zipf(1.0, 10_000, n, 8, 1).unwrap();
    let counts = count_exact(&stream, &spec).unwrap();
    let (mut total, mut under) = (0usize, 0usize);
    for seed in 0..20 {
        let mut s = RhhhSketch::with_v_ratio(spec.clone(), p, 1, seed).unwrap();
        s.extend(&stream);
        let out = s.output(0.05).unwrap();
        for (i, c) in out.iter().enumerate() {
            let before: Vec<_> = out[..i].iter().map(|c| c.prefix).collect();
            let exact = counts.conditioned_by_definition(&c.prefix, &before) as f64;
            total += 1;
            under += usize::from(c.conditioned < exact);
        }
    }
    assert!(total > 0);
    assert!((under as f64) <= 0.05 * total as f64, "{under} of {total}");
}
