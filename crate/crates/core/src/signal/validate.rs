use serde::{Deserialize, Serialize};

use super::{is_mac_address, Metrics, SignalKind, SignalReading};

/// Closed interval `[low, high]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    low: f64,
    high: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("empty interval [{0}, {1}]")]
pub struct EmptyInterval(pub f64, pub f64);

impl Interval {
    pub fn new(low: f64, high: f64) -> Result<Self, EmptyInterval> {
        if low <= high {
            Ok(Interval { low, high })
        } else {
            Err(EmptyInterval(low, high))
        }
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    /// NaN is never contained.
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = EmptyInterval;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.low, i.high]
    }
}

fn iv(low: f64, high: f64) -> Interval {
    Interval { low, high }
}

/// Admissible range for each signal metric. Missing keys in a configuration
/// document take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationBounds {
    pub rssi_dbm: Interval,
    pub rsrp_dbm: Interval,
    pub rsrq_db: Interval,
    pub pm25_ugm3: Interval,
    pub co2_ppm: Interval,
    pub motion_count: Interval,
}

impl Default for ValidationBounds {
    fn default() -> Self {
        ValidationBounds {
            rssi_dbm: iv(-120.0, -20.0),
            rsrp_dbm: iv(-140.0, -44.0),
            rsrq_db: iv(-24.0, 0.0),
            pm25_ugm3: iv(0.0, 1000.0),
            co2_ppm: iv(0.0, 10_000.0),
            motion_count: iv(0.0, 100_000.0),
        }
    }
}

impl ValidationBounds {
    pub fn for_metric(&self, metric: &str) -> Option<Interval> {
        Some(match metric {
            "rssi_dbm" => self.rssi_dbm,
            "rsrp_dbm" => self.rsrp_dbm,
            "rsrq_db" => self.rsrq_db,
            "pm25_ugm3" => self.pm25_ugm3,
            "co2_ppm" => self.co2_ppm,
            "motion_count" => self.motion_count,
            _ => return None,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationVerdict {
    Accept,
    Reject {
        metric: &'static str,
        value: f64,
        interval: Interval,
    },
}

impl ValidationVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ValidationVerdict::Accept)
    }
}

/// Checks every signal metric against `bounds` in the order given by
/// [`Metrics::signal_values`] and reports the first violation.
pub fn validate_reading(reading: &SignalReading, bounds: &ValidationBounds) -> ValidationVerdict {
    for (metric, value) in reading.metrics.signal_values() {
        let interval = bounds
            .for_metric(metric)
            .expect("every signal metric has bounds");
        if !interval.contains(value) {
            return ValidationVerdict::Reject {
                metric,
                value,
                interval,
            };
        }
    }
    ValidationVerdict::Accept
}

/// Canonicalizes representational variants: addresses lower-cased, network
/// type upper-cased, SSID trimmed. Numbers are left untouched.
pub fn normalize_reading(reading: &SignalReading) -> SignalReading {
    let mut out = reading.clone();
    match &mut out.metrics {
        Metrics::Cellular(c) => c.network_type = c.network_type.to_ascii_uppercase(),
        Metrics::WiFi(w) => {
            w.bssid = w.bssid.to_ascii_lowercase();
            w.ssid = w.ssid.trim().to_string();
        }
        Metrics::Bluetooth(b) => b.peer_address = b.peer_address.to_ascii_lowercase(),
        Metrics::Environment(_) => {}
    }
    // Wi-Fi and Bluetooth sources are keyed by their address.
    if matches!(out.kind(), SignalKind::WiFi | SignalKind::Bluetooth)
        && is_mac_address(&out.source_id)
    {
        out.source_id = out.source_id.to_ascii_lowercase();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fixtures;

    #[test]
    fn in_bounds_cellular_accepted() {
        let r = fixtures::cellular(-75.0, -105.0);
        assert_eq!(
            validate_reading(&r, &ValidationBounds::default()),
            ValidationVerdict::Accept
        );
    }

    #[test]
    fn low_rsrp_rejected_with_interval() {
        let r = fixtures::cellular(-75.0, -150.0);
        assert_eq!(
            validate_reading(&r, &ValidationBounds::default()),
            ValidationVerdict::Reject {
                metric: "rsrp_dbm",
                value: -150.0,
                interval: Interval::new(-140.0, -44.0).unwrap(),
            }
        );
    }

    #[test]
    fn first_violation_in_field_order_wins() {
        let r = fixtures::cellular(-200.0, -150.0);
        match validate_reading(&r, &ValidationBounds::default()) {
            ValidationVerdict::Reject { metric, .. } => assert_eq!(metric, "rssi_dbm"),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn zero_environment_values_accepted() {
        let r = fixtures::environment(3.0, 0.0, 0);
        assert!(validate_reading(&r, &ValidationBounds::default()).is_accept());
    }

    #[test]
    fn nan_is_rejected() {
        let r = fixtures::cellular(f64::NAN, -100.0);
        assert!(!validate_reading(&r, &ValidationBounds::default()).is_accept());
    }

    #[test]
    fn bounds_config_partial_override() {
        let b = ValidationBounds::from_json(r#"{"rssi_dbm":[-100,-30]}"#).unwrap();
        assert_eq!(b.rssi_dbm, Interval::new(-100.0, -30.0).unwrap());
        assert_eq!(b.co2_ppm, ValidationBounds::default().co2_ppm);
        assert!(ValidationBounds::from_json(r#"{"rssi_dbm":[-10,-30]}"#).is_err());
        assert!(ValidationBounds::from_json(r#"{"snr_db":[0,1]}"#).is_err());
    }

    #[test]
    fn normalization_rules() {
        let mut r = fixtures::wifi("AA:BB:CC:00:11:22", -75.0);
        if let Metrics::WiFi(w) = &mut r.metrics {
            w.ssid = "  eduroam ".into();
        }
        let n = normalize_reading(&r);
        match &n.metrics {
            Metrics::WiFi(w) => {
                assert_eq!(w.bssid, "aa:bb:cc:00:11:22");
                assert_eq!(w.ssid, "eduroam");
                assert_eq!(w.rssi_dbm, -75.0);
            }
            _ => unreachable!(),
        }
        assert_eq!(n.source_id, "aa:bb:cc:00:11:22");

        let mut c = fixtures::cellular(-75.0, -105.0);
        if let Metrics::Cellular(m) = &mut c.metrics {
            m.network_type = "lte".into();
        }
        match normalize_reading(&c).metrics {
            Metrics::Cellular(m) => {
                assert_eq!(m.network_type, "LTE");
                assert_eq!(m.rssi_dbm, -75.0);
            }
            _ => unreachable!(),
        }
    }
}
