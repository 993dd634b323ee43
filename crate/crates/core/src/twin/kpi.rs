use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KpiKey {
    /// Relationship id or twin id.
    pub entity: String,
    pub metric: String,
}

impl KpiKey {
    pub fn new(entity: impl Into<String>, metric: impl Into<String>) -> Self {
        KpiKey {
            entity: entity.into(),
            metric: metric.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp_ms: u64,
    pub value: f64,
}

/// Bounded, timestamp-ordered ring. When full the oldest sample goes.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiSeries {
    capacity: usize,
    samples: VecDeque<Sample>,
}

impl KpiSeries {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "KPI capacity must be positive");
        KpiSeries {
            capacity,
            samples: VecDeque::new(),
        }
    }

    /// Rebuilds a series from stored samples; `None` if they are unordered,
    /// repeated or over capacity.
    pub fn from_samples(capacity: usize, samples: Vec<Sample>) -> Option<Self> {
        let ordered = samples.windows(2).all(|w| {
            w[0].timestamp_ms < w[1].timestamp_ms
                || (w[0].timestamp_ms == w[1].timestamp_ms
                    && w[0].value.to_bits() != w[1].value.to_bits())
        });
        (capacity > 0 && samples.len() <= capacity && ordered).then(|| KpiSeries {
            capacity,
            samples: samples.into(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Inserts in timestamp order. An exact repeat of a retained sample is
    /// ignored, so redelivered readings do not skew the series. Returns
    /// whether the series changed.
    pub fn append(&mut self, timestamp_ms: u64, value: f64) -> bool {
        let start = self
            .samples
            .partition_point(|s| s.timestamp_ms < timestamp_ms);
        let end = self
            .samples
            .partition_point(|s| s.timestamp_ms <= timestamp_ms);
        if (start..end).any(|i| self.samples[i].value.to_bits() == value.to_bits()) {
            return false;
        }
        if self.samples.len() == self.capacity && end == 0 {
            // Older than everything in a full ring: it would be evicted at once.
            return false;
        }
        self.samples.insert(
            end,
            Sample {
                timestamp_ms,
                value,
            },
        );
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
        true
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn range(&self, from: u64, to: u64) -> Vec<Sample> {
        let start = self.samples.partition_point(|s| s.timestamp_ms < from);
        self.samples
            .iter()
            .skip(start)
            .take_while(|s| s.timestamp_ms <= to)
            .copied()
            .collect()
    }

    pub fn latest(&self) -> Option<Sample> {
        self.samples.back().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_range_returns_all_in_order() {
        let mut s = KpiSeries::new(10);
        s.append(3, 3.0);
        s.append(1, 1.0);
        s.append(2, 2.0);
        let ts: Vec<u64> = s
            .range(0, u64::MAX)
            .iter()
            .map(|x| x.timestamp_ms)
            .collect();
        assert_eq!(ts, [1, 2, 3]);
        assert!(s.range(4, 9).is_empty());
        assert_eq!(s.range(2, 2).len(), 1);
    }

    #[test]
    fn capacity_one_keeps_newest() {
        let mut s = KpiSeries::new(1);
        s.append(1, -70.0);
        s.append(2, -71.0);
        assert_eq!(
            s.range(0, 10),
            vec![Sample {
                timestamp_ms: 2,
                value: -71.0
            }]
        );
        assert!(!s.append(1, -72.0));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn exact_repeat_is_ignored() {
        let mut s = KpiSeries::new(10);
        assert!(s.append(1, -70.0));
        assert!(!s.append(1, -70.0));
        assert!(s.append(1, -71.0));
        assert_eq!(s.len(), 2);
    }
}
