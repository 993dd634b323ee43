use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::signal::SignalKind;

const SLOTS: usize = 5;
const UNKNOWN_SLOT: usize = 4;

fn slot(kind: Option<SignalKind>) -> usize {
    match kind {
        Some(SignalKind::Cellular) => 0,
        Some(SignalKind::WiFi) => 1,
        Some(SignalKind::Bluetooth) => 2,
        Some(SignalKind::Environment) => 3,
        None => UNKNOWN_SLOT,
    }
}

fn slot_name(i: usize) -> &'static str {
    match i {
        0 => "cellular",
        1 => "wifi",
        2 => "bluetooth",
        3 => "environment",
        _ => "unknown",
    }
}

#[derive(Debug, Default)]
struct Counters {
    consumed: AtomicU64,
    accepted: AtomicU64,
    rejected_decode: AtomicU64,
    rejected_out_of_bounds: AtomicU64,
    duplicates_dropped: AtomicU64,
    stale_dropped: AtomicU64,
    published: AtomicU64,
}

/// Lock-free per-kind counters. Undecodable messages whose topic does not
/// name a kind are counted under `unknown`.
#[derive(Debug, Default)]
pub struct HandlerStats {
    slots: [Counters; SLOTS],
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounters {
    pub consumed: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
    pub duplicates_dropped: u64,
    pub stale_dropped: u64,
    pub published: u64,
}

impl KindCounters {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    /// accepted + rejected + duplicates + stale == consumed
    pub fn identity_holds(&self) -> bool {
        self.accepted + self.rejected_total() + self.duplicates_dropped + self.stale_dropped
            == self.consumed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub kinds: BTreeMap<String, KindCounters>,
}

impl StatsSnapshot {
    pub fn total(&self) -> KindCounters {
        let mut t = KindCounters::default();
        for c in self.kinds.values() {
            t.consumed += c.consumed;
            t.accepted += c.accepted;
            t.duplicates_dropped += c.duplicates_dropped;
            t.stale_dropped += c.stale_dropped;
            t.published += c.published;
            for (k, v) in &c.rejected {
                *t.rejected.entry(k.clone()).or_default() += v;
            }
        }
        t
    }
}

impl HandlerStats {
    fn bump(&self, kind: Option<SignalKind>, f: impl Fn(&Counters) -> &AtomicU64) {
        let c = &self.slots[slot(kind)];
        f(c).fetch_add(1, Ordering::SeqCst);
        c.consumed.fetch_add(1, Ordering::SeqCst);
    }

    pub fn record_accepted(&self, kind: SignalKind) {
        self.bump(Some(kind), |c| &c.accepted);
    }

    pub fn record_out_of_bounds(&self, kind: SignalKind) {
        self.bump(Some(kind), |c| &c.rejected_out_of_bounds);
    }

    pub fn record_stale(&self, kind: SignalKind) {
        self.bump(Some(kind), |c| &c.stale_dropped);
    }

    pub fn record_duplicate(&self, kind: SignalKind) {
        self.bump(Some(kind), |c| &c.duplicates_dropped);
    }

    pub fn record_undecodable(&self, kind: Option<SignalKind>) {
        self.bump(kind, |c| &c.rejected_decode);
    }

    /// Counts a curated reading that reached the bus.
    pub fn record_published(&self, kind: SignalKind) {
        self.slots[slot(Some(kind))]
            .published
            .fetch_add(1, Ordering::SeqCst);
    }

    pub fn consumed(&self) -> u64 {
        self.slots
            .iter()
            .map(|c| c.consumed.load(Ordering::SeqCst))
            .sum()
    }

    pub fn accepted(&self) -> u64 {
        self.slots
            .iter()
            .map(|c| c.accepted.load(Ordering::SeqCst))
            .sum()
    }

    pub fn published(&self) -> u64 {
        self.slots
            .iter()
            .map(|c| c.published.load(Ordering::SeqCst))
            .sum()
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let mut kinds = BTreeMap::new();
        for (i, c) in self.slots.iter().enumerate() {
            let load = |a: &AtomicU64| a.load(Ordering::SeqCst);
            let mut rejected = BTreeMap::new();
            rejected.insert("decode".to_string(), load(&c.rejected_decode));
            rejected.insert("out_of_bounds".to_string(), load(&c.rejected_out_of_bounds));
            kinds.insert(
                slot_name(i).to_string(),
                KindCounters {
                    consumed: load(&c.consumed),
                    accepted: load(&c.accepted),
                    rejected,
                    duplicates_dropped: load(&c.duplicates_dropped),
                    stale_dropped: load(&c.stale_dropped),
                    published: load(&c.published),
                },
            );
        }
        StatsSnapshot { kinds }
    }
}
