//! The verification suite at reference resolution.

use travelling_string::verify::{check_inlet_variant, run_suite, Numerics, VerificationReport};
use travelling_string::{InitialData, Preset, StringParams};

fn report(v: f64, eta: f64, preset: Preset) -> VerificationReport {
    let p = StringParams::new(1.0, v, eta).unwrap();
    let n = Numerics::default();
    let d = InitialData::from_preset(preset, &p, n.grid).unwrap();
    run_suite(&p, &d, &n).unwrap()
}

fn failures(r: &VerificationReport) -> String {
    r.checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{}: measured {:e}, threshold {:e} ({})",
                c.name, c.measured, c.threshold, c.detail
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn undamped_reference_run_passes() {
    let r = report(0.3, 0.0, Preset::Cos);
    assert!(r.overall, "{}", failures(&r));
    for name in [
        "conservation",
        "stab_bounds",
        "periodicity",
        "observability",
        "oracle_equivalence",
    ] {
        assert!(r.check(name).is_some(), "{name} missing");
    }
}

#[test]
fn damped_reference_run_passes() {
    let r = report(0.25, 0.5, Preset::Cos);
    assert!(r.overall, "{}", failures(&r));
    for name in [
        "est0_envelope",
        "stab0_envelope",
        "stab1_envelope",
        "s_invariance",
        "decay_rate_fit",
        "parseval",
        "oracle_equivalence",
    ] {
        assert!(r.check(name).is_some(), "{name} missing");
    }
}

#[test]
fn overdamped_runs_pass() {
    for (v, preset) in [(0.5, Preset::Cos), (0.25, Preset::Bump)] {
        let r = report(v, 3.0, preset);
        assert!(r.overall, "v = {v}, {preset}: {}", failures(&r));
    }
}

#[test]
fn transparent_reference_run_passes() {
    let r = report(0.4, 1.0, Preset::Cos);
    assert!(r.overall, "{}", failures(&r));
    assert!(r.check("extinction").is_some());
    for name in [
        "parseval",
        "s_invariance",
        "decay_rate_fit",
        "oracle_equivalence",
    ] {
        assert!(
            r.skipped.iter().any(|s| s == name),
            "{name} not reported as skipped"
        );
    }
}

#[test]
fn inlet_variant_keeps_rate_and_bounds() {
    let p = StringParams::new(1.0, 0.4, 0.5).unwrap();
    let n = Numerics::default();
    let d = InitialData::from_preset(Preset::Cos, &p, n.grid).unwrap();
    let c = check_inlet_variant(&p, &d, &n);
    assert!(c.passed, "{c:?}");
    assert!(c.measured < 0.02);
}

#[test]
fn report_json_is_stable() {
    let a = report(0.2, 3.0, Preset::Cos).to_json();
    let b = report(0.2, 3.0, Preset::Cos).to_json();
    assert_eq!(a, b);
    let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
    let first = &parsed["checks"][0];
    for key in ["name", "passed", "measured", "threshold", "detail"] {
        assert!(first.get(key).is_some(), "{key} missing");
    }
}
