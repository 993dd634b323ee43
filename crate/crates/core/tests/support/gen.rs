//! Proptest strategies for readings and raw documents.

use std::collections::{BTreeMap, BTreeSet};

use netwin_core::signal::{
    BluetoothMetrics, CellularMetrics, DeviceDescriptor, EnvironmentMetrics, Metrics, SignalKind,
    SignalReading, WiFiMetrics,
};
use proptest::prelude::*;

pub const EPOCH: u64 = 1_700_000_000_000;

/// Values on a 0.1 grid, like the simulator emits.
pub fn tenth(low: i32, high: i32) -> impl Strategy<Value = f64> {
    (low * 10..=high * 10).prop_map(|x| f64::from(x) / 10.0)
}

pub fn mac(octet_pool: u8) -> impl Strategy<Value = String> {
    (0..octet_pool, any::<bool>()).prop_map(|(last, upper)| {
        let s = format!("aa:bb:cc:dd:ee:{last:02x}");
        if upper {
            s.to_uppercase()
        } else {
            s
        }
    })
}

pub fn device(id_pool: u8) -> impl Strategy<Value = DeviceDescriptor> {
    (
        0..id_pool,
        prop::option::of(prop::sample::select(SignalKind::RADIOS.to_vec())),
        0..2u8,
    )
        .prop_map(|(n, active_interface, version)| DeviceDescriptor {
            device_id: format!("d{n}"),
            model_name: "PixelSim".into(),
            capabilities: SignalKind::RADIOS.into_iter().collect::<BTreeSet<_>>(),
            app_version: format!("1.{version}.0"),
            active_interface,
        })
}

pub fn metrics(kind: SignalKind) -> BoxedStrategy<(String, Metrics)> {
    match kind {
        SignalKind::Cellular => (
            0..3u8,
            tenth(-130, -10),
            tenth(-150, -40),
            prop::sample::select(vec!["LTE", "nr"]),
        )
            .prop_map(|(c, rssi, rsrp, net)| {
                let cell = format!("c{c}");
                (
                    cell.clone(),
                    Metrics::Cellular(CellularMetrics {
                        network_type: net.to_string(),
                        frequency_mhz: 1800.0,
                        rssi_dbm: rssi,
                        rsrp_dbm: Some(rsrp),
                        rsrq_db: None,
                        cell_id: cell,
                    }),
                )
            })
            .boxed(),
        SignalKind::WiFi => (
            mac(4),
            tenth(-130, -10),
            prop::sample::select(vec!["eduroam", " lab "]),
        )
            .prop_map(|(bssid, rssi, ssid)| {
                (
                    bssid.clone(),
                    Metrics::WiFi(WiFiMetrics {
                        ssid: ssid.to_string(),
                        bssid,
                        frequency_mhz: 5180.0,
                        rssi_dbm: rssi,
                        channel: 36,
                    }),
                )
            })
            .boxed(),
        SignalKind::Bluetooth => (
            mac(4),
            tenth(-130, -10),
            prop::option::of(Just("beacon".to_string())),
        )
            .prop_map(|(peer, rssi, device_name)| {
                (
                    peer.clone(),
                    Metrics::Bluetooth(BluetoothMetrics {
                        peer_address: peer,
                        rssi_dbm: rssi,
                        device_name,
                    }),
                )
            })
            .boxed(),
        SignalKind::Environment => (0..2u8, tenth(0, 1200), tenth(0, 12_000), 0..40u64)
            .prop_map(|(s, pm25, co2, motion)| {
                (
                    format!("s{s}"),
                    Metrics::Environment(EnvironmentMetrics {
                        pm25_ugm3: pm25,
                        co2_ppm: co2,
                        motion_count: motion,
                    }),
                )
            })
            .boxed(),
    }
}

/// Any decodable reading; values may fall outside the default bounds.
pub fn reading() -> impl Strategy<Value = SignalReading> {
    (
        prop::sample::select(SignalKind::ALL.to_vec()),
        device(3),
        1..120_000u64,
    )
        .prop_flat_map(|(kind, device, offset)| {
            metrics(kind).prop_map(move |(source_id, metrics)| SignalReading {
                device: device.clone(),
                timestamp_ms: EPOCH + offset,
                source_id,
                metrics,
                curated: false,
                smoothed: BTreeMap::new(),
            })
        })
}

/// A curated reading carrying smoothed siblings for every signal value.
pub fn curated_reading() -> impl Strategy<Value = SignalReading> {
    (reading(), -3.0..3.0f64).prop_map(|(mut r, delta)| {
        r.curated = true;
        r.smoothed = r
            .metrics
            .signal_values()
            .into_iter()
            .map(|(name, v)| (name.to_string(), ((v + delta) * 10.0).round() / 10.0))
            .collect();
        r
    })
}
