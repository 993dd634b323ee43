use serde_json::json;

use super::*;
use crate::signal::{encode_reading, validate_reading, ValidationBounds};

fn device(id: &str, x: f64, caps: &[&str], period: u64) -> serde_json::Value {
    let periods: serde_json::Map<String, serde_json::Value> = caps
        .iter()
        .map(|c| (c.to_string(), json!(period)))
        .collect();
    json!({
        "device_id": id, "model_name": "Pixel", "position": {"x": x, "y": 0.0},
        "capabilities": caps, "report_period_ms": periods, "active_interface": caps[0],
    })
}

fn ap(bssid: &str, x: f64, tx: f64) -> serde_json::Value {
    json!({"source_id": bssid, "kind": "wifi", "position": {"x": x, "y": 0.0}, "tx_power_dbm": tx,
           "ssid": "campus", "channel": 6, "frequency_mhz": 2437.0})
}

fn cell(id: &str, x: f64) -> serde_json::Value {
    json!({"source_id": id, "kind": "cellular", "position": {"x": x, "y": 0.0}, "tx_power_dbm": -40.0,
           "network_type": "LTE", "frequency_mhz": 1800.0})
}

fn scenario(
    devices: Vec<serde_json::Value>,
    sources: Vec<serde_json::Value>,
    events: serde_json::Value,
) -> ScenarioSpec {
    let doc = json!({
        "rng_seed": 11, "duration_s": 30, "tick_interval_ms": 500,
        "devices": devices, "sources": sources, "events": events,
    });
    ScenarioSpec::from_json(&doc.to_string()).unwrap()
}

fn command(device: &str, action: Action) -> ActionCommand {
    ActionCommand {
        device_id: device.into(),
        action,
        issued_by: "test".into(),
        issued_at: 1,
    }
}

#[test]
fn path_loss_examples() {
    assert_eq!(rssi_at(-40.0, 2.0, 10.0, 0.0), -60.0);
    assert_eq!(rssi_at(-40.0, 2.0, 1.0, 0.0), -40.0);
    assert_eq!(rssi_at(-40.0, 2.0, 0.0, 0.0), rssi_at(-40.0, 2.0, 0.1, 0.0));
    assert_eq!(rssi_at(-40.0, 3.0, 100.0, 1.5), -40.0 - 60.0 + 1.5);
}

#[test]
fn one_device_one_ap_one_boundary() {
    let spec = scenario(
        vec![device("d1", 0.0, &["wifi"], 1000)],
        vec![ap("aa:aa:aa:aa:aa:01", 5.0, -40.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    let out = sim.step(1000);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].kind(), SignalKind::WiFi);
    assert_eq!(out[0].timestamp_ms, 1_700_000_001_000);
}

#[test]
fn source_below_threshold_is_not_reported() {
    // -40 - 20·log10(d) = -110 at d ≈ 3162 m
    let spec = scenario(
        vec![device("d1", 0.0, &["wifi"], 1000)],
        vec![ap("aa:aa:aa:aa:aa:01", 3200.0, -40.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    assert!(sim.mean_rssi(&sim.spec().sources[0], &Position::default()) < -100.0);
    assert!(sim.step(5000).is_empty());
}

#[test]
fn readings_multiply_devices_by_sources() {
    let spec = scenario(
        vec![
            device("d1", 0.0, &["cellular"], 1000),
            device("d2", 3.0, &["cellular"], 1000),
        ],
        vec![cell("c1", 10.0), cell("c2", 20.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    let out = sim.step(1000);
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|r| matches!(&r.metrics, Metrics::Cellular(m) if m.rsrp_dbm == Some(round_to(m.rssi_dbm - 30.0, 1)))));
}

#[test]
fn same_seed_same_bytes() {
    let run = || {
        let mut sim = Simulator::new(ScenarioSpec::ubikampus_demo());
        sim.step(20_000)
            .iter()
            .map(encode_reading)
            .collect::<Vec<_>>()
    };
    let a = run();
    assert!(!a.is_empty());
    assert_eq!(a, run());

    let mut other = ScenarioSpec::ubikampus_demo();
    other.rng_seed += 1;
    let mut sim = Simulator::new(other);
    let b: Vec<String> = sim.step(20_000).iter().map(encode_reading).collect();
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
}

#[test]
fn stepping_in_chunks_matches_one_step() {
    let mut whole = Simulator::new(ScenarioSpec::ubikampus_demo());
    let a: Vec<String> = whole.step(15_000).iter().map(encode_reading).collect();
    let mut chunked = Simulator::new(ScenarioSpec::ubikampus_demo());
    let mut b = Vec::new();
    for t in (500..=15_000).step_by(500) {
        b.extend(chunked.step(t).iter().map(encode_reading));
    }
    assert_eq!(a, b);
}

#[test]
fn set_primary_interface_shows_in_next_readings() {
    let spec = scenario(
        vec![device("d1", 0.0, &["cellular", "wifi"], 1000)],
        vec![cell("c1", 10.0), ap("aa:aa:aa:aa:aa:01", 5.0, -40.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    assert!(sim
        .step(1000)
        .iter()
        .all(|r| r.device.active_interface == Some(SignalKind::Cellular)));
    sim.apply_action(&command(
        "d1",
        Action::SetPrimaryInterface {
            interface: SignalKind::WiFi,
        },
    ))
    .unwrap();
    let out = sim.step(2000);
    assert!(!out.is_empty());
    assert!(out
        .iter()
        .all(|r| r.device.active_interface == Some(SignalKind::WiFi)));
    assert!(encode_reading(&out[0]).contains(r#""active_interface":"wifi""#));
}

#[test]
fn action_errors() {
    let spec = scenario(
        vec![device("d1", 0.0, &["cellular", "wifi"], 1000)],
        vec![cell("c1", 10.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    assert_eq!(
        sim.apply_action(&command(
            "d1",
            Action::SetPrimaryInterface {
                interface: SignalKind::Bluetooth
            }
        )),
        Err(SimError::InvalidInterface {
            device: "d1".into(),
            kind: SignalKind::Bluetooth
        })
    );
    assert_eq!(
        sim.apply_action(&command("ghost", Action::Pause)),
        Err(SimError::UnknownDevice("ghost".into()))
    );
}

#[test]
fn pause_and_resume() {
    let spec = scenario(
        vec![device("d1", 0.0, &["cellular"], 1000)],
        vec![cell("c1", 10.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    sim.apply_action(&command("d1", Action::Pause)).unwrap();
    assert!(sim.step(3000).is_empty());
    sim.apply_action(&command("d1", Action::Resume)).unwrap();
    assert_eq!(sim.step(4000).len(), 1);
}

#[test]
fn report_period_change_applies_to_next_step() {
    let spec = scenario(
        vec![device("d1", 0.0, &["cellular"], 1000)],
        vec![cell("c1", 10.0)],
        json!([]),
    );
    let mut sim = Simulator::new(spec);
    sim.apply_action(&command(
        "d1",
        Action::SetReportPeriod {
            kind: SignalKind::Cellular,
            period_ms: 250,
        },
    ))
    .unwrap();
    assert_eq!(sim.step(1000).len(), 4);
}

#[test]
fn ground_truth_follows_events() {
    let spec = scenario(
        vec![
            device("d1", 0.0, &["cellular"], 1000),
            device("d2", 2.0, &["cellular"], 1000),
        ],
        vec![cell("c1", 10.0), cell("c2", 20.0), cell("c3", 30.0)],
        json!([
            {"type": "join", "at_ms": 5000, "device_id": "d2"},
            {"type": "leave", "at_ms": 8000, "device_id": "d1"},
        ]),
    );
    let sim = Simulator::new(spec);
    let early = sim.ground_truth(4000);
    assert!(early.devices.contains("d1"));
    assert!(!early.devices.contains("d2"));
    assert_eq!(early.pairs.len(), 3);

    let both = sim.ground_truth(6000);
    assert_eq!(both.pairs.len(), 6);

    let after = sim.ground_truth(9000);
    assert!(after.pairs.iter().all(|(d, _)| d != "d1"));
    assert_eq!(after.pairs.len(), 3);
    assert_eq!(
        after.mean_rssi_dbm[&("d2".into(), "c1".into())],
        rssi_at(-40.0, 2.0, 8.0, 0.0)
    );
}

#[test]
fn demo_output_always_validates() {
    let mut sim = Simulator::new(ScenarioSpec::ubikampus_demo());
    let bounds = ValidationBounds::default();
    let out = sim.step(60_000);
    assert!(out.len() > 1000);
    for r in &out {
        assert!(
            validate_reading(r, &bounds).is_accept(),
            "{}",
            encode_reading(r)
        );
        assert_eq!(
            crate::signal::decode_reading(&encode_reading(r)).unwrap(),
            *r
        );
    }
}

/// Independent recount: walk every millisecond and count what should fire.
fn brute_force_count(spec: &ScenarioSpec, until_ms: u64) -> usize {
    let present = |id: &str, t: u64| {
        let mut evs: Vec<_> = spec.events.iter().filter(|e| e.device_id() == id).collect();
        evs.sort_by_key(|e| e.at_ms());
        let mut p = !matches!(evs.first(), Some(ScenarioEvent::Join { .. }));
        for e in evs.iter().filter(|e| e.at_ms() <= t) {
            p = matches!(e, ScenarioEvent::Join { .. });
        }
        p
    };
    let mut n = 0;
    for t in 1..=until_ms {
        for d in &spec.devices {
            if !present(&d.device_id, t) {
                continue;
            }
            for (kind, p) in &d.report_period_ms {
                if t % p != 0 {
                    continue;
                }
                n += spec
                    .sources
                    .iter()
                    .filter(|s| s.kind() == *kind)
                    .filter(|s| {
                        let dist = ((s.position.x - d.position.x).powi(2)
                            + (s.position.y - d.position.y).powi(2))
                        .sqrt()
                        .max(0.1);
                        s.tx_power_dbm - 10.0 * spec.radio.path_loss_exponent * dist.log10()
                            >= spec.radio.detection_threshold_dbm
                    })
                    .count();
            }
        }
        n += spec
            .env_sensors
            .iter()
            .filter(|s| t % s.report_period_ms == 0)
            .count();
    }
    n
}

#[test]
fn emitted_count_matches_brute_force_recount() {
    let spec = ScenarioSpec::ubikampus_demo();
    let mut sim = Simulator::new(spec.clone());
    assert_eq!(sim.step(30_000).len(), brute_force_count(&spec, 30_000));

    let small = scenario(
        vec![
            device("d1", 0.0, &["cellular", "wifi"], 700),
            device("d2", 2.0, &["wifi"], 1300),
        ],
        vec![
            cell("c1", 10.0),
            ap("aa:aa:aa:aa:aa:01", 5.0, -40.0),
            ap("aa:aa:aa:aa:aa:02", 4000.0, -40.0),
        ],
        json!([
            {"type": "join", "at_ms": 2100, "device_id": "d2"},
            {"type": "leave", "at_ms": 6000, "device_id": "d2"},
            {"type": "leave", "at_ms": 3000, "device_id": "d1"},
            {"type": "join", "at_ms": 4000, "device_id": "d1"},
        ]),
    );
    let mut sim = Simulator::new(small.clone());
    let mut total = 0;
    for t in [333, 1000, 2500, 7777, 9000] {
        total += sim.step(t).len();
    }
    assert_eq!(total, brute_force_count(&small, 9000));
}

#[test]
fn faults_are_injected_only_when_flagged() {
    let mut spec = ScenarioSpec::ubikampus_demo();
    spec.faults = FaultSpec {
        out_of_bounds_prob: 0.1,
        duplicate_prob: 0.1,
        stale_prob: 0.1,
        stale_lag_ms: 20_000,
    };
    let mut faulty = Simulator::new(spec.clone());
    let out = faulty.step(20_000);
    let bounds = ValidationBounds::default();
    assert!(out
        .iter()
        .any(|r| !validate_reading(r, &bounds).is_accept()));
    assert!(out.len() > brute_force_count(&spec, 20_000));
}
