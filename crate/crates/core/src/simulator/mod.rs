//! Simulated end-devices and environmental sensors on a 2-D floor plan.
//!
//! [`Simulator`] is the deterministic engine: given a [`ScenarioSpec`] and the
//! sequence of applied actions, the readings emitted by [`Simulator::step`]
//! are a pure function of the seed. [`SimulatorNode`] wires it to the bus.

mod node;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::action::{Action, ActionCommand};
use crate::signal::{
    BluetoothMetrics, CellularMetrics, DeviceDescriptor, EnvironmentMetrics, Metrics, SignalKind,
    SignalReading, ValidationBounds, WiFiMetrics,
};

pub use node::{ClockMode, SimulatorNode, SimulatorStats};
pub use scenario::{
    DeviceSpec, EnvSensorSpec, FaultSpec, Gaussian, OccupancyPhase, Position, RadioParams,
    ScenarioError, ScenarioEvent, ScenarioSpec, SourceAttributes, SourceSpec, UBIKAMPUS_DEMO,
};

const MIN_DISTANCE_M: f64 = 0.1;
const FAULT_SEED_SALT: u64 = 0x5eed_fa17;

/// Log-distance path loss: `tx − 10·n·log10(d / 1 m) + noise`, with `d`
/// clamped below at 0.1 m.
pub fn rssi_at(tx_power_dbm: f64, exponent: f64, distance_m: f64, noise_db: f64) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M);
    tx_power_dbm - 10.0 * exponent * d.log10() + noise_db
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unsupported command `{0}`")]
    UnsupportedCommand(String),
    #[error("device `{device}` has no {kind} interface")]
    InvalidInterface { device: String, kind: SignalKind },
}

/// Expected twin-graph shape at one instant, computed without noise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub devices: BTreeSet<String>,
    /// (device id, source id) pairs whose noiseless mean is detectable.
    pub pairs: BTreeSet<(String, String)>,
    pub sources: BTreeSet<String>,
    pub env_sensors: BTreeSet<String>,
    /// Noiseless mean strength per pair.
    pub mean_rssi_dbm: BTreeMap<(String, String), f64>,
}

#[derive(Debug, Clone)]
struct DeviceState {
    spec: DeviceSpec,
    paused: bool,
}

/// Something that reports at a fixed period.
#[derive(Debug, Clone, Copy)]
enum Emitter {
    Device { index: usize, kind: SignalKind },
    Sensor { index: usize },
}

pub struct Simulator {
    spec: ScenarioSpec,
    devices: Vec<DeviceState>,
    rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    noise: Normal<f64>,
    bounds: ValidationBounds,
    /// Simulation time covered so far; the next step starts after it.
    elapsed_ms: u64,
}

/// Rounds to `decimals` places; dividing by an exact power of ten keeps the
/// result the closest double, so it survives a JSON round trip.
fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

impl Simulator {
    pub fn new(spec: ScenarioSpec) -> Self {
        let noise = Normal::new(0.0, spec.radio.noise_sigma_db.max(0.0)).expect("finite sigma");
        let devices = spec
            .devices
            .iter()
            .map(|d| DeviceState {
                spec: d.clone(),
                paused: false,
            })
            .collect();
        Simulator {
            rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
            fault_rng: ChaCha8Rng::seed_from_u64(spec.rng_seed ^ FAULT_SEED_SALT),
            noise,
            devices,
            bounds: ValidationBounds::default(),
            elapsed_ms: 0,
            spec,
        }
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.elapsed_ms
    }

    pub fn device(&self, device_id: &str) -> Option<&DeviceSpec> {
        self.devices
            .iter()
            .find(|d| d.spec.device_id == device_id)
            .map(|d| &d.spec)
    }

    pub fn is_paused(&self, device_id: &str) -> bool {
        self.devices
            .iter()
            .any(|d| d.spec.device_id == device_id && d.paused)
    }

    /// Whether scripted events have the device on the floor at `t_ms`.
    pub fn is_present(&self, device_id: &str, t_ms: u64) -> bool {
        let mut events: Vec<&ScenarioEvent> = self
            .spec
            .events
            .iter()
            .filter(|e| e.device_id() == device_id)
            .collect();
        events.sort_by_key(|e| e.at_ms());
        let mut present = !matches!(events.first(), Some(ScenarioEvent::Join { .. }));
        for e in events {
            if e.at_ms() > t_ms {
                break;
            }
            present = matches!(e, ScenarioEvent::Join { .. });
        }
        present
    }

    /// Start of the presence interval containing `t_ms` (0 if present from the start).
    fn present_since(&self, device_id: &str, t_ms: u64) -> u64 {
        self.spec
            .events
            .iter()
            .filter(|e| e.device_id() == device_id && e.at_ms() <= t_ms)
            .filter_map(|e| match e {
                ScenarioEvent::Join { at_ms, .. } => Some(*at_ms),
                ScenarioEvent::Leave { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn mean_rssi(&self, source: &SourceSpec, position: &Position) -> f64 {
        rssi_at(
            source.tx_power_dbm,
            self.spec.radio.path_loss_exponent,
            source.position.distance(position),
            0.0,
        )
    }

    fn detectable_sources<'a>(
        &'a self,
        device: &'a DeviceSpec,
        kind: SignalKind,
    ) -> impl Iterator<Item = &'a SourceSpec> + 'a {
        let threshold = self.spec.radio.detection_threshold_dbm;
        self.spec
            .sources
            .iter()
            .filter(move |s| s.kind() == kind && self.mean_rssi(s, &device.position) >= threshold)
    }

    /// Applies an action; the change shows in the next [`Simulator::step`].
    pub fn apply_action(&mut self, command: &ActionCommand) -> Result<(), SimError> {
        let dev = self
            .devices
            .iter_mut()
            .find(|d| d.spec.device_id == command.device_id)
            .ok_or_else(|| SimError::UnknownDevice(command.device_id.clone()))?;
        match &command.action {
            Action::SetPrimaryInterface { interface } => {
                if !dev.spec.capabilities.contains(interface) {
                    return Err(SimError::InvalidInterface {
                        device: dev.spec.device_id.clone(),
                        kind: *interface,
                    });
                }
                dev.spec.active_interface = *interface;
            }
            Action::SetReportPeriod { kind, period_ms } => {
                if !dev.spec.capabilities.contains(kind) {
                    return Err(SimError::InvalidInterface {
                        device: dev.spec.device_id.clone(),
                        kind: *kind,
                    });
                }
                if *period_ms == 0 {
                    return Err(SimError::UnsupportedCommand("set_report_period 0".into()));
                }
                dev.spec.report_period_ms.insert(*kind, *period_ms);
            }
            Action::Pause => dev.paused = true,
            Action::Resume => dev.paused = false,
        }
        Ok(())
    }

    fn period(&self, e: Emitter) -> u64 {
        match e {
            Emitter::Device { index, kind } => self.devices[index].spec.report_period_ms[&kind],
            Emitter::Sensor { index } => self.spec.env_sensors[index].report_period_ms,
        }
    }

    /// Emits every reading due in `(elapsed, until_ms]`, ordered by time, then
    /// by device order, kind and source order, then sensors.
    pub fn step(&mut self, until_ms: u64) -> Vec<SignalReading> {
        let from = self.elapsed_ms;
        if until_ms <= from {
            return Vec::new();
        }
        let mut emitters = Vec::new();
        for (index, d) in self.devices.iter().enumerate() {
            for kind in &d.spec.capabilities {
                emitters.push(Emitter::Device { index, kind: *kind });
            }
        }
        for index in 0..self.spec.env_sensors.len() {
            emitters.push(Emitter::Sensor { index });
        }

        let mut due: Vec<(u64, usize)> = Vec::new();
        for (order, e) in emitters.iter().enumerate() {
            let p = self.period(*e);
            let mut b = (from / p + 1) * p;
            while b <= until_ms {
                due.push((b, order));
                b += p;
            }
        }
        due.sort_unstable();

        let mut out = Vec::new();
        for (t, order) in due {
            match emitters[order] {
                Emitter::Device { index, kind } => self.emit_device(index, kind, t, &mut out),
                Emitter::Sensor { index } => self.emit_sensor(index, t, &mut out),
            }
        }
        self.elapsed_ms = until_ms;
        out
    }

    fn emit_device(
        &mut self,
        index: usize,
        kind: SignalKind,
        t: u64,
        out: &mut Vec<SignalReading>,
    ) {
        let dev = self.devices[index].clone();
        if dev.paused || !self.is_present(&dev.spec.device_id, t) {
            return;
        }
        let descriptor = DeviceDescriptor {
            device_id: dev.spec.device_id.clone(),
            model_name: dev.spec.model_name.clone(),
            capabilities: dev.spec.capabilities.clone(),
            app_version: dev.spec.app_version.clone(),
            active_interface: Some(dev.spec.active_interface),
        };
        let sources: Vec<SourceSpec> = self.detectable_sources(&dev.spec, kind).cloned().collect();
        for source in sources {
            let mean = self.mean_rssi(&source, &dev.spec.position);
            let noise = self.noise.sample(&mut self.rng);
            let rssi = self.bounds.rssi_dbm.clamp(round_to(mean + noise, 1));
            let metrics = match &source.attributes {
                SourceAttributes::Cellular {
                    network_type,
                    frequency_mhz,
                } => {
                    let reports_rsrp =
                        matches!(network_type.to_ascii_uppercase().as_str(), "LTE" | "NR");
                    Metrics::Cellular(CellularMetrics {
                        network_type: network_type.clone(),
                        frequency_mhz: *frequency_mhz,
                        rssi_dbm: rssi,
                        rsrp_dbm: reports_rsrp.then(|| {
                            self.bounds
                                .rsrp_dbm
                                .clamp(round_to(rssi - self.spec.radio.rsrp_offset_db, 1))
                        }),
                        rsrq_db: None,
                        cell_id: source.source_id.clone(),
                    })
                }
                SourceAttributes::WiFi {
                    ssid,
                    channel,
                    frequency_mhz,
                } => Metrics::WiFi(WiFiMetrics {
                    ssid: ssid.clone(),
                    bssid: source.source_id.clone(),
                    frequency_mhz: *frequency_mhz,
                    rssi_dbm: rssi,
                    channel: *channel,
                }),
                SourceAttributes::Bluetooth { device_name } => {
                    Metrics::Bluetooth(BluetoothMetrics {
                        peer_address: source.source_id.clone(),
                        rssi_dbm: rssi,
                        device_name: device_name.clone(),
                    })
                }
            };
            let reading = SignalReading {
                device: descriptor.clone(),
                timestamp_ms: self.spec.epoch_ms + t,
                source_id: source.source_id.clone(),
                metrics,
                curated: false,
                smoothed: BTreeMap::new(),
            };
            self.push_with_faults(reading, out);
        }
    }

    fn emit_sensor(&mut self, index: usize, t: u64, out: &mut Vec<SignalReading>) {
        let sensor = self.spec.env_sensors[index].clone();
        let pm25 = sample_gaussian(&mut self.rng, sensor.pm25_ugm3);
        let co2 = sample_gaussian(&mut self.rng, sensor.co2_ppm);
        let rate = sensor.occupancy_rate(t);
        let motion = if rate > 0.0 {
            Poisson::new(rate)
                .map(|p| p.sample(&mut self.rng) as u64)
                .unwrap_or(0)
        } else {
            0
        };
        let reading = SignalReading {
            device: DeviceDescriptor {
                device_id: sensor.sensor_id.clone(),
                model_name: sensor.model_name.clone(),
                capabilities: [SignalKind::Environment].into_iter().collect(),
                app_version: "1.0.0".to_string(),
                active_interface: None,
            },
            timestamp_ms: self.spec.epoch_ms + t,
            source_id: sensor.sensor_id.clone(),
            metrics: Metrics::Environment(EnvironmentMetrics {
                pm25_ugm3: self.bounds.pm25_ugm3.clamp(round_to(pm25, 1)),
                co2_ppm: self.bounds.co2_ppm.clamp(round_to(co2, 0)),
                motion_count: motion,
            }),
            curated: false,
            smoothed: BTreeMap::new(),
        };
        self.push_with_faults(reading, out);
    }

    fn push_with_faults(&mut self, mut reading: SignalReading, out: &mut Vec<SignalReading>) {
        let faults = self.spec.faults.clone();
        if !faults.is_active() {
            out.push(reading);
            return;
        }
        if self.fault_rng.random::<f64>() < faults.out_of_bounds_prob {
            match &mut reading.metrics {
                Metrics::Cellular(m) => m.rssi_dbm = -200.0,
                Metrics::WiFi(m) => m.rssi_dbm = -200.0,
                Metrics::Bluetooth(m) => m.rssi_dbm = -200.0,
                Metrics::Environment(m) => m.co2_ppm = 50_000.0,
            }
        }
        let stale = (self.fault_rng.random::<f64>() < faults.stale_prob).then(|| {
            let mut r = reading.clone();
            r.timestamp_ms = r.timestamp_ms.saturating_sub(faults.stale_lag_ms).max(1);
            r
        });
        let duplicate = self.fault_rng.random::<f64>() < faults.duplicate_prob;
        out.push(reading.clone());
        if duplicate {
            out.push(reading);
        }
        if let Some(r) = stale {
            out.push(r);
        }
    }

    /// Expected graph at simulation time `t_ms`: every present device paired
    /// with each detectable source of a capability that has reported at least
    /// once since the device (re)joined, plus sensors that have reported.
    pub fn ground_truth(&self, t_ms: u64) -> GroundTruth {
        let mut gt = GroundTruth::default();
        for dev in &self.devices {
            let id = &dev.spec.device_id;
            if !self.is_present(id, t_ms) {
                continue;
            }
            let since = self.present_since(id, t_ms);
            for kind in &dev.spec.capabilities {
                let p = dev.spec.report_period_ms[kind];
                let first_report = (since.div_ceil(p) * p).max(p);
                if first_report > t_ms {
                    continue;
                }
                for s in self.detectable_sources(&dev.spec, *kind) {
                    let key = (id.clone(), s.source_id.clone());
                    gt.mean_rssi_dbm
                        .insert(key.clone(), self.mean_rssi(s, &dev.spec.position));
                    gt.pairs.insert(key);
                    gt.sources.insert(s.source_id.clone());
                    gt.devices.insert(id.clone());
                }
            }
        }
        for s in &self.spec.env_sensors {
            if s.report_period_ms <= t_ms {
                gt.env_sensors.insert(s.sensor_id.clone());
            }
        }
        gt
    }
}

fn sample_gaussian(rng: &mut ChaCha8Rng, g: Gaussian) -> f64 {
    match Normal::new(g.mean, g.sigma.max(0.0)) {
        Ok(n) => n.sample(rng),
        Err(_) => g.mean,
    }
}

#[cfg(test)]
mod tests;
