//! Topic-based publish/subscribe transport.
//!
//! Two interchangeable implementations share the [`EventBus`] contract:
//! [`InMemoryBroker`] for single-process runs and tests, and [`MqttBus`] for
//! components talking through an external MQTT 3.1.1 broker.
//!
//! Topics follow `netwin/<stage>/<device_id>[/<kind>]`; see [`topic_for`].

mod memory;
mod mqtt;

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use tokio::sync::mpsc;

use crate::signal::SignalKind;

pub use memory::{InMemoryBroker, InMemoryBus};
pub use mqtt::MqttBus;

pub const TOPIC_ROOT: &str = "netwin";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("invalid topic `{0}`: {1}")]
    InvalidTopic(String, &'static str),
    #[error("invalid topic filter `{0}`: {1}")]
    InvalidFilter(String, &'static str),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unsupported bus url `{0}`")]
    UnsupportedUrl(String),
}

/// Concrete topic: non-empty `/`-separated segments without wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topic(String);

impl Topic {
    pub fn new(s: impl Into<String>) -> Result<Self, BusError> {
        let s = s.into();
        if s.split('/').any(str::is_empty) {
            return Err(BusError::InvalidTopic(s, "empty segment"));
        }
        if s.contains(['+', '#']) {
            return Err(BusError::InvalidTopic(s, "wildcard in concrete topic"));
        }
        Ok(Topic(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Subscription filter with MQTT wildcards: `+` for one level, trailing `#`
/// for any number of levels (including none).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(s: impl Into<String>) -> Result<Self, BusError> {
        let s = s.into();
        let segments: Vec<&str> = s.split('/').collect();
        let last = segments.len() - 1;
        for (i, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                return Err(BusError::InvalidFilter(s, "empty segment"));
            }
            if seg.contains('#') && (*seg != "#" || i != last) {
                return Err(BusError::InvalidFilter(
                    s,
                    "`#` only allowed as the whole last segment",
                ));
            }
            if seg.contains('+') && *seg != "+" {
                return Err(BusError::InvalidFilter(
                    s,
                    "`+` must occupy a whole segment",
                ));
            }
        }
        Ok(TopicFilter(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        topic_matches(&self.0, &topic.0)
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// MQTT wildcard match of a (well-formed) filter against a concrete topic.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(fs), Some(ts)) if fs == ts => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Raw,
    Curated,
    Actions,
    Events,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Curated => "curated",
            Stage::Actions => "actions",
            Stage::Events => "events",
        }
    }
}

/// `netwin/<stage>/<device_id>[/<kind>]`. Actions and events never carry a kind.
pub fn topic_for(
    stage: Stage,
    device_id: &str,
    kind: Option<SignalKind>,
) -> Result<Topic, BusError> {
    let mut s = format!("{TOPIC_ROOT}/{}/{device_id}", stage.as_str());
    if let (Some(k), Stage::Raw | Stage::Curated) = (kind, stage) {
        s.push('/');
        s.push_str(k.as_str());
    }
    if device_id.contains('/') {
        return Err(BusError::InvalidTopic(s, "device id contains `/`"));
    }
    Topic::new(s)
}

/// Topic carrying graph ChangeSets for live consumers.
pub fn graph_events_topic() -> Topic {
    Topic(format!("{TOPIC_ROOT}/events/graph"))
}

pub fn filter(s: &str) -> TopicFilter {
    TopicFilter::new(s).expect("static filter is well-formed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    pub topic: Topic,
    pub payload: Vec<u8>,
    /// Strictly increasing per publisher connection. Over MQTT the broker does
    /// not carry it, so subscribers see their own receive order instead.
    pub publish_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishAck {
    pub publish_seq: u64,
}

/// One connection to the bus.
#[async_trait]
pub trait EventBus: Send + Sync + 'static {
    async fn publish(&self, topic: &Topic, payload: Vec<u8>) -> Result<PublishAck, BusError>;

    async fn subscribe(&self, filter: &TopicFilter) -> Result<Subscription, BusError>;
}

pub type SharedBus = Arc<dyn EventBus>;

/// Stream of messages matching a filter. Dropping or closing unsubscribes.
pub struct Subscription {
    rx: mpsc::UnboundedReceiver<BusMessage>,
    _guard: Option<Box<dyn Send + Sync>>,
}

impl Subscription {
    pub(crate) fn new(
        rx: mpsc::UnboundedReceiver<BusMessage>,
        guard: Option<Box<dyn Send + Sync>>,
    ) -> Self {
        Subscription { rx, _guard: guard }
    }

    /// Next message, or `None` once the bus connection is gone.
    pub async fn recv(&mut self) -> Option<BusMessage> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<BusMessage> {
        self.rx.try_recv().ok()
    }

    pub fn close(self) {}
}

/// Connects according to a bus URL: `memory` (requires `broker`) or
/// `mqtt://host[:port]`.
pub async fn connect(
    url: &str,
    client_id: &str,
    broker: Option<&InMemoryBroker>,
) -> Result<SharedBus, BusError> {
    if url == "memory" || url.starts_with("memory:") {
        let broker = broker.ok_or_else(|| BusError::UnsupportedUrl(url.to_string()))?;
        return Ok(Arc::new(broker.client()));
    }
    if url.starts_with("mqtt://") || url.starts_with("tcp://") {
        return Ok(Arc::new(MqttBus::connect(url, client_id).await?));
    }
    Err(BusError::UnsupportedUrl(url.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topic_convention() {
        assert_eq!(
            topic_for(Stage::Raw, "d1", Some(SignalKind::Cellular))
                .unwrap()
                .as_str(),
            "netwin/raw/d1/cellular"
        );
        assert_eq!(
            topic_for(Stage::Actions, "d1", None).unwrap().as_str(),
            "netwin/actions/d1"
        );
        assert_eq!(
            topic_for(Stage::Curated, "d1", Some(SignalKind::WiFi))
                .unwrap()
                .as_str(),
            "netwin/curated/d1/wifi"
        );
        assert_eq!(
            topic_for(Stage::Actions, "d1", Some(SignalKind::WiFi))
                .unwrap()
                .as_str(),
            "netwin/actions/d1"
        );
        assert!(topic_for(Stage::Raw, "a/b", None).is_err());
        assert!(topic_for(Stage::Raw, "d+", None).is_err());
    }

    #[test]
    fn topic_and_filter_validation() {
        assert!(Topic::new("a//b").is_err());
        assert!(Topic::new("a/+").is_err());
        assert!(TopicFilter::new("a/#/b").is_err());
        assert!(TopicFilter::new("a/b#").is_err());
        assert!(TopicFilter::new("a/x+").is_err());
        assert!(TopicFilter::new("+/+/#").is_ok());
    }

    #[test]
    fn wildcard_semantics() {
        assert!(topic_matches(
            "netwin/raw/+/cellular",
            "netwin/raw/d1/cellular"
        ));
        assert!(!topic_matches(
            "netwin/raw/d1/wifi",
            "netwin/raw/d1/cellular"
        ));
        assert!(topic_matches("netwin/raw/#", "netwin/raw/d1/cellular"));
        assert!(topic_matches("netwin/raw/#", "netwin/raw"));
        assert!(topic_matches("#", "a"));
        assert!(!topic_matches("a/+", "a"));
        assert!(!topic_matches("a", "a/b"));
    }
}
