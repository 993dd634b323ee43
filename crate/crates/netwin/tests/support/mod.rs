#![allow(dead_code)]

pub mod broker;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use netwin::config::GatewayConfig;
use netwin::gateway::{Gateway, RunningGateway};
use netwin_core::analytics::AnalyticsConfig;
use netwin_core::bus::{filter, EventBus, InMemoryBroker, SharedBus, Subscription};
use netwin_core::signal::{
    CellularMetrics, DeviceDescriptor, EnvironmentMetrics, Metrics, SignalKind, SignalReading,
    WiFiMetrics,
};
use netwin_core::twin::{Authenticator, Session, TwinController, TwinStore};
use serde_json::Value;

pub const TOKEN: &str = "test-token";
pub const EPOCH: u64 = 1_700_000_000_000;

pub fn device(id: &str, active: SignalKind) -> DeviceDescriptor {
    DeviceDescriptor {
        device_id: id.to_string(),
        model_name: "PixelSim".into(),
        capabilities: SignalKind::RADIOS.into_iter().collect(),
        app_version: "1.4.0".into(),
        active_interface: Some(active),
    }
}

/// Curated reading; the smoothed value equals the raw one.
fn curated(device: DeviceDescriptor, source_id: &str, ts: u64, metrics: Metrics) -> SignalReading {
    let smoothed: BTreeMap<String, f64> = metrics
        .signal_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    SignalReading {
        device,
        timestamp_ms: ts,
        source_id: source_id.to_string(),
        metrics,
        curated: true,
        smoothed,
    }
}

pub fn cellular(dev: &str, cell: &str, ts: u64, rssi: f64) -> SignalReading {
    let metrics = Metrics::Cellular(CellularMetrics {
        network_type: "LTE".into(),
        frequency_mhz: 1800.0,
        rssi_dbm: rssi,
        rsrp_dbm: Some(rssi - 30.0),
        rsrq_db: None,
        cell_id: cell.into(),
    });
    curated(device(dev, SignalKind::Cellular), cell, ts, metrics)
}

pub fn wifi(dev: &str, bssid: &str, ts: u64, rssi: f64) -> SignalReading {
    let metrics = Metrics::WiFi(WiFiMetrics {
        ssid: "eduroam".into(),
        bssid: bssid.into(),
        frequency_mhz: 5180.0,
        rssi_dbm: rssi,
        channel: 36,
    });
    curated(device(dev, SignalKind::Cellular), bssid, ts, metrics)
}

pub fn environment(sensor: &str, ts: u64, pm25: f64, co2: f64, motion: u64) -> SignalReading {
    let dev = DeviceDescriptor {
        device_id: sensor.into(),
        model_name: "EnvSim".into(),
        capabilities: [SignalKind::Environment].into_iter().collect(),
        app_version: "0.3.1".into(),
        active_interface: None,
    };
    let metrics = Metrics::Environment(EnvironmentMetrics {
        pm25_ugm3: pm25,
        co2_ppm: co2,
        motion_count: motion,
    });
    curated(dev, sensor, ts, metrics)
}

/// Gateway over a directly driven controller and an in-memory bus.
pub struct Harness {
    pub broker: InMemoryBroker,
    pub controller: TwinController,
    pub session: Session,
    pub gateway: RunningGateway,
    pub http: reqwest::Client,
}

impl Harness {
    pub async fn start(config: GatewayConfig) -> Self {
        let broker = InMemoryBroker::new();
        let controller =
            TwinController::new(TwinStore::default(), Authenticator::new([TOKEN], 3_600_000));
        let bus: SharedBus = Arc::new(broker.client());
        Self::with_bus(broker, controller, bus, config).await
    }

    pub async fn with_bus(
        broker: InMemoryBroker,
        controller: TwinController,
        bus: SharedBus,
        config: GatewayConfig,
    ) -> Self {
        let session = controller.authenticate(TOKEN).unwrap();
        let gateway = Gateway::new(
            controller.clone(),
            bus,
            None,
            config,
            AnalyticsConfig::default(),
        )
        .await
        .unwrap()
        .bind("127.0.0.1:0")
        .await
        .unwrap();
        Harness {
            broker,
            controller,
            session,
            gateway,
            http: reqwest::Client::new(),
        }
    }

    pub fn reconcile(&self, r: &SignalReading) {
        self.controller.reconcile(&self.session, r).unwrap();
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.gateway.url(), path)
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/stream", self.gateway.addr)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.http.get(self.url(path)).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value, token: Option<&str>) -> (u16, Value) {
        let mut req = self.http.post(self.url(path)).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn tap(&self, f: &str) -> Subscription {
        self.broker.client().subscribe(&filter(f)).await.unwrap()
    }
}

/// Everything already delivered to `sub`, waiting `quiet` for stragglers.
pub async fn drain(sub: &mut Subscription, quiet: Duration) -> Vec<netwin_core::bus::BusMessage> {
    let mut out = Vec::new();
    while let Ok(Some(m)) = tokio::time::timeout(quiet, sub.recv()).await {
        out.push(m);
    }
    out
}
