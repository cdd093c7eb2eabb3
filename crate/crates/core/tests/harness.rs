use std::sync::Arc;

use mavguard::attestor::Decision;
use mavguard::dsl::{parse_spec, ProtocolSpec, DEFAULT_SPEC};
use mavguard::gateway::GatewayMode;
use mavguard::harness::*;

fn spec() -> Arc<ProtocolSpec> {
    Arc::new(parse_spec(DEFAULT_SPEC).unwrap())
}

fn script_decisions(r: &RunReport) -> Vec<(usize, Option<Decision>, Option<String>)> {
    r.script.iter().map(|o| (o.index, o.verdict, o.rule.clone())).collect()
}

#[test]
fn latency_stats_match_hand_computation() {
    let s = latency_stats(&[1000, 2000, 3000, 6000]).unwrap();
    assert_eq!(s.n, 4);
    assert!((s.mean_ms - 3.0).abs() < 1e-12);
    // sample variance: (4 + 1 + 0 + 9) / 3
    let sd = (14.0f64 / 3.0).sqrt();
    assert!((s.sd_ms - sd).abs() < 1e-12);
    assert!((s.ci95_ms - 1.96 * sd / 2.0).abs() < 1e-12);
    assert!((s.median_ms - 2.5).abs() < 1e-12);
    assert_eq!(s.to_string(), format!("3.000 ± {:.3}", 1.96 * sd / 2.0));

    let one = latency_stats(&[500]).unwrap();
    assert_eq!((one.sd_ms, one.ci95_ms, one.median_ms), (0.0, 0.0, 0.5));
    assert!(latency_stats(&[]).is_err());
}

#[test]
fn builtin_scenarios_are_valid() {
    let all = Scenario::builtin_all();
    assert_eq!(all.len(), 4);
    for s in &all {
        s.validate().unwrap();
    }
    let benign = Scenario::builtin("benign_mission_25").unwrap();
    assert!(!benign.is_attack());
    assert!(plan_uplink(&benign).len() >= 5000);
    assert_eq!(all.iter().filter(|s| s.is_attack()).count(), 3);
}

#[test]
fn plan_is_seeded_and_keeps_script_order() {
    let s = Scenario::builtin("attack_mission_overflow").unwrap();
    let a = plan_uplink(&s);
    assert_eq!(a, plan_uplink(&s));
    let order: Vec<usize> = a.iter().filter_map(|p| p.script_index).collect();
    assert_eq!(order, (0..s.gcs_script.len()).collect::<Vec<_>>());
    assert!(a.windows(2).all(|w| w[0].at_ms <= w[1].at_ms));

    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(a, plan_uplink(&other));
}

#[test]
fn invalid_scenarios_are_refused() {
    let mut s = Scenario::builtin("attack_parachute").unwrap();
    s.expected.push(Expectation { index: 99, verdict: Decision::Reject, rule: None });
    assert!(s.validate().is_err());
    assert!(Scenario::from_json("{\"time_scale\": -1}").is_err());
    assert!(Scenario::from_json("not json").is_err());
}

#[test]
fn empty_scenario_reports_zero_counts() {
    let s = Scenario { name: "empty".into(), padding_hz: 0.0, ..Default::default() };
    let r = run_scenario(&s, spec(), &RunConfig::new(GatewayMode::GatewaySpec)).unwrap();
    assert_eq!((r.sent, r.forwarded, r.rejected, r.dropped), (0, 0, 0, 0));
    assert!(r.conservation_ok && r.fifo_ok && r.assertions_ok);
    assert!(r.latency.is_none());
}

#[test]
fn verdicts_are_reproducible() {
    let s = Scenario::builtin("attack_mission_overflow").unwrap();
    let cfg = RunConfig::new(GatewayMode::GatewaySpec);
    let a = run_scenario(&s, spec(), &cfg).unwrap();
    let b = run_scenario(&s, spec(), &cfg).unwrap();
    assert!(a.assertions_ok, "{:?}", a.assertions);
    assert_eq!(script_decisions(&a), script_decisions(&b));
    assert_eq!(a.rejected_indices(), vec![6, 7]);
    assert_eq!(a.audit_violations, Some(0));
    assert!(a.conservation_ok && a.fifo_ok);
}

#[test]
fn only_the_spec_configuration_detects_the_parachute_attack() {
    let s = Scenario::builtin("attack_parachute").unwrap();
    let mut detected = Vec::new();
    for mode in GatewayMode::ALL {
        let r = run_scenario(&s, spec(), &RunConfig::new(mode)).unwrap();
        assert!(r.conservation_ok, "{mode}");
        detected.push((mode, r.attack_detected));
    }
    assert_eq!(
        detected,
        vec![(GatewayMode::Passthrough, false), (GatewayMode::Gateway, false), (GatewayMode::GatewaySpec, true)]
    );
}
