mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use mavguard::attestor::*;
use mavguard::codec::*;
use mavguard::dsl::{parse_spec, DEFAULT_SPEC};
use proptest::prelude::*;

fn default_monitor() -> Monitor {
    Monitor::new(Arc::new(parse_spec(DEFAULT_SPEC).unwrap()), MonitorConfig::default())
}

fn param_set(name: &str, v: f32) -> MavMessage {
    MavMessage::ParamSet(ParamSet {
        target_system: 1,
        target_component: 1,
        param_id: CharArray::new(name).unwrap(),
        param_value: v,
        param_type: 9,
    })
}

fn chute(action: f32) -> MavMessage {
    MavMessage::CommandLong(CommandLong { command: 208, param1: action, ..Default::default() })
}

fn heartbeat(armed: bool, mode: u32) -> MavMessage {
    MavMessage::Heartbeat(Heartbeat {
        base_mode: if armed { 0x80 } else { 0 },
        custom_mode: mode,
        mav_type: 2,
        autopilot: 3,
        system_status: 4,
        mavlink_version: 3,
    })
}

fn position(alt_mm: i32, vz_cms: i16) -> MavMessage {
    MavMessage::GlobalPositionInt(GlobalPositionInt { relative_alt: alt_mm, vz: vz_cms, ..Default::default() })
}

const T: Duration = Duration::from_secs(100);

#[test]
fn mission_upload_matches_automaton() {
    let (checked, bad) = mission_oracle_check(&default_monitor(), 3, 5);
    assert!(bad.is_empty(), "{bad:#?}");
    assert!(checked > 60_000);
}

#[test]
fn replay_is_deterministic_and_reset_restores_initial_state() {
    let msgs = vec![
        param_set("MC_PITCH_P", 2.0),
        param_set("MC_PITCHRATE_MAX", 70.0),
        param_set("MC_PITCHRATE_MAX", 1000.0),
        Sym::Count(2).message(),
        Sym::Item(1).message(),
        Sym::Item(1).message(),
        Sym::Item(0).message(),
        chute(2.0),
        chute(5.0),
    ];
    let run = |m: &mut Monitor| {
        msgs.iter()
            .enumerate()
            .map(|(i, msg)| {
                let v = m.attest_at(msg, Duration::from_millis(i as u64));
                (v.decision, v.rule, v.reason)
            })
            .collect::<Vec<_>>()
    };
    let mut a = default_monitor();
    let mut b = default_monitor();
    let first = run(&mut a);
    assert_eq!(first, run(&mut b));
    a.reset();
    assert_eq!(first, run(&mut a));
    let decisions: Vec<bool> = first.iter().map(|v| v.0 == Decision::Accept).collect();
    assert_eq!(decisions, vec![true, true, false, true, true, false, true, false, false]);
}

#[test]
fn parachute_release_oracle() {
    for armed in [false, true] {
        for mode in [0u32, 1, 4, 14] {
            for alt_mm in [0, 9_999, 10_000, 10_001, 50_000] {
                for vz in [-200i16, -1, 0, 1, 200] {
                    for action in [0.0f32, 1.0, 2.0, 3.0] {
                        let mut m = default_monitor();
                        m.observe_at(&heartbeat(armed, mode), T);
                        m.observe_at(&position(alt_mm, vz), T);
                        let v = m.attest_at(&chute(action), T);
                        let climb = -f64::from(vz) / 100.0;
                        let alt = f64::from(alt_mm) / 1000.0;
                        let want = match action as u32 {
                            0 | 1 => true,
                            2 => armed && mode != 1 && mode != 14 && climb <= 0.0 && alt > 10.0,
                            _ => false,
                        };
                        assert_eq!(
                            v.is_accept(),
                            want,
                            "armed={armed} mode={mode} alt={alt_mm} vz={vz} action={action}: {v:?}"
                        );
                        if !want {
                            assert_eq!(v.rule.as_deref(), Some("parachute"));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn stale_telemetry_fails_closed() {
    let mut m = default_monitor();
    m.observe_at(&heartbeat(true, 4), T);
    m.observe_at(&position(50_000, 0), T);
    assert!(m.attest_at(&chute(2.0), T + Duration::from_secs(5)).is_accept());
    let v = m.attest_at(&chute(2.0), T + Duration::from_millis(5001));
    assert!(!v.is_accept());
    assert!(v.reason.contains(REASON_STALE), "{}", v.reason);
    // Branches that do not read telemetry are unaffected.
    assert!(m.attest_at(&chute(1.0), T + Duration::from_secs(60)).is_accept());
    // Never observed at all.
    assert!(!default_monitor().attest_at(&chute(2.0), T).is_accept());
}

#[test]
fn evaluation_errors_reject() {
    let spec = parse_spec("rule r: on PARAM_SET(param_value->v)\n  require 1 / v > 0\n").unwrap();
    let mut m = Monitor::new(Arc::new(spec), MonitorConfig::default());
    let v = m.attest_at(&param_set("X", 0.0), T);
    assert!(!v.is_accept());
    assert_eq!(v.rule.as_deref(), Some("r"));
    assert!(m.attest_at(&param_set("X", 2.0), T).is_accept());
}

#[test]
fn default_deny_rejects_unmatched() {
    let spec = Arc::new(parse_spec(DEFAULT_SPEC).unwrap());
    let mut m = Monitor::new(spec, MonitorConfig { default_deny: true, ..Default::default() });
    let v = m.attest_at(&heartbeat(false, 0), T);
    assert_eq!(v.rule.as_deref(), Some(RULE_DEFAULT_DENY));
    assert!(!m.attest_opaque_at(9999, T).is_accept());
    assert!(m.attest_at(&param_set("MC_PITCH_P", 3.0), T).is_accept());
}

#[test]
fn rejected_commands_leave_state_untouched() {
    let mut m = default_monitor();
    let before = m.state().clone();
    assert!(!m.attest_at(&param_set("MC_PITCH_P", 13.0), T).is_accept());
    assert!(!m.attest_at(&param_set("MC_PITCHRATE_MAX", 500.0), T).is_accept());
    assert_eq!(m.state(), &before);
}

#[test]
fn idle_upload_expires() {
    let mut m = default_monitor();
    assert!(m.attest_at(&Sym::Count(3).message(), T).is_accept());
    assert!(m.attest_at(&Sym::Item(0).message(), T + Duration::from_secs(9)).is_accept());
    let after = T + Duration::from_secs(9) + Duration::from_millis(10_001);
    assert!(!m.attest_at(&Sym::Item(1).message(), after).is_accept());
    let expired = m.drain_expired();
    assert_eq!(expired.len(), 1);
    assert_eq!((expired[0].received, expired[0].expected), (1, 3));
    assert!(m.attest_at(&Sym::Count(1).message(), after).is_accept());
}

fn gains() -> impl Strategy<Value = (f32, f32)> {
    (0.0f32..=12.0, 0.0f32..=0.6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pitchrate_bound_oracle((p, rp) in gains(), v in -100.0f32..2500.0) {
        let mut m = default_monitor();
        prop_assert!(m.attest_at(&param_set("MC_PITCH_P", p), T).is_accept());
        prop_assert!(m.attest_at(&param_set("MC_PITCHRATE_P", rp), T).is_accept());
        let (p, rp, v) = (f64::from(p), f64::from(rp), f64::from(v));
        let bound = (10.0 * p) * (25.0 * rp) * (1.0 * 0.0 + 1.0);
        let want = v <= bound && (0.0..=1800.0).contains(&v);
        let got = m.attest_at(&param_set("MC_PITCHRATE_MAX", v as f32), T);
        prop_assert_eq!(got.is_accept(), want, "bound {} v {} {:?}", bound, v, got);
    }

    #[test]
    fn bounds_are_monotone((p, rp) in gains(), a in 0.0f32..1800.0, b in 0.0f32..1800.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut m = default_monitor();
        m.attest_at(&param_set("MC_PITCH_P", p), T);
        m.attest_at(&param_set("MC_PITCHRATE_P", rp), T);
        let probe = |v| m.clone().attest_at(&param_set("MC_PITCHRATE_MAX", v), T).is_accept();
        prop_assert!(!probe(hi) || probe(lo));
    }

    #[test]
    fn raising_gains_never_tightens((p, rp) in gains(), dp in 0.0f32..2.0, v in 0.0f32..1800.0) {
        let accepted_with = |p: f32| {
            let mut m = default_monitor();
            m.attest_at(&param_set("MC_PITCH_P", p), T);
            m.attest_at(&param_set("MC_PITCHRATE_P", rp), T);
            m.attest_at(&param_set("MC_PITCHRATE_MAX", v), T).is_accept()
        };
        let p2 = (p + dp).min(12.0);
        prop_assert!(!accepted_with(p) || accepted_with(p2));
    }
}
