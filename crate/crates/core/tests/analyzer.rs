use ldfnet_core::analyzer::{benchmark, check_reported_ordering, flops_estimate, shape_trace, ParamGate};
use ldfnet_core::autodiff::Conv2dParams;
use ldfnet_core::nn::{Conv2d, ParamRegistry};
use ldfnet_core::{build_model, ModelConfig, Variant};

fn count(v: Variant) -> usize {
    build_model(&ModelConfig::new(v)).unwrap().parameter_count().total
}

#[test]
fn pointwise_conv_mac_count() {
    let mut reg = ParamRegistry::new();
    let conv = Conv2d::new(&mut reg, "c", (64, 64), (1, 1), Conv2dParams::default(), true);
    assert_eq!(conv.macs([1, 64, 128, 256]), 134_217_728);
}

#[test]
fn gated_variants_fall_within_tolerance() {
    for v in [Variant::LdfNet, Variant::ErfNetRgb] {
        let gate = ParamGate::new(v, count(v));
        assert!(gate.gated && gate.passes(), "{}", gate.to_record());
        assert!(gate.to_record().ends_with("gate=pass"));
    }
    let off = ParamGate::new(Variant::LdfNet, 3_000_000);
    assert!(!off.passes());
    assert!(off.to_record().ends_with("gate=fail"));
    assert!(ParamGate::new(Variant::LdfNonDense, 1).to_record().ends_with("gate=ungated"));
}

#[test]
fn all_nine_variants_follow_the_reported_ordering() {
    let counts: Vec<(Variant, usize)> = Variant::ALL.iter().map(|&v| (v, count(v))).collect();
    check_reported_ordering(&counts).unwrap();
    let by = |v| counts.iter().find(|c| c.0 == v).unwrap().1;
    assert!(by(Variant::ErfNetRgb) < by(Variant::LdfWoShallow));
    assert!(by(Variant::LdfWoShallow) < by(Variant::LdfNet));
    assert!(by(Variant::LdfNet) < by(Variant::Ldf58WoShallow));
    assert!(by(Variant::Ldf58WoShallow) < by(Variant::LdfNonDense));
    let mut swapped = counts.clone();
    for c in &mut swapped {
        if c.0 == Variant::LdfNonDense {
            c.1 = by(Variant::ErfNetRgb) - 1;
        }
    }
    assert!(check_reported_ordering(&swapped).is_err());
}

#[test]
fn trace_report_is_consistent() {
    let g = build_model(&ModelConfig::new(Variant::LdfNet)).unwrap();
    let report = shape_trace(&g, (512, 1024)).unwrap();
    assert_eq!(report.total_params(), g.parameter_count().total);
    assert_eq!(report.total_macs(), flops_estimate(&g, (512, 1024)).unwrap());
    let stages = report.stage_totals();
    assert_eq!(stages.iter().map(|s| s.1).sum::<usize>(), report.total_params());
    assert!(stages.iter().any(|s| s.0 == "fusion"));
    let records = report.to_records();
    assert_eq!(records.lines().filter(|l| l.starts_with("layer=")).count(), report.layers.len());
    assert!(records.contains("total_params="));
    let half = shape_trace(&g, (256, 512)).unwrap();
    assert_eq!(4 * half.total_macs(), report.total_macs());
    assert!(shape_trace(&g, (500, 1000)).is_err());
}

#[test]
fn benchmark_reports_ordered_percentiles() {
    let g = build_model(&ModelConfig::new(Variant::ErfNetRgb).with_classes(4)).unwrap();
    let params = g.init_params(0);
    let stats = benchmark(&g, &params, (32, 64), 1, 5, 1).unwrap();
    assert!(stats.p5_fps > 0.0 && stats.p5_fps <= stats.median_fps && stats.median_fps <= stats.p95_fps);
    assert!(stats.to_record().starts_with("threads=1 iterations=5"));
    assert!(benchmark(&g, &params, (32, 64), 0, 0, 1).is_err());
}
