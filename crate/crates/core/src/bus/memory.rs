use std::sync::{Arc, Mutex, Weak};

use async_trait::async_trait;
use tokio::sync::mpsc;

use super::{BusError, BusMessage, EventBus, PublishAck, Subscription, Topic, TopicFilter};

struct Entry {
    id: u64,
    filter: TopicFilter,
    tx: mpsc::UnboundedSender<BusMessage>,
}

#[derive(Default)]
struct State {
    entries: Vec<Entry>,
    next_sub: u64,
    next_client: u64,
}

/// Process-local broker. Delivery happens synchronously inside `publish`, so a
/// message is queued on every matching subscription before the call returns.
#[derive(Clone, Default)]
pub struct InMemoryBroker {
    state: Arc<Mutex<State>>,
}

impl InMemoryBroker {
    pub fn new() -> Self {
        Self::default()
    }

    /// A new publisher connection with its own sequence counter.
    pub fn client(&self) -> InMemoryBus {
        let mut st = self.state.lock().unwrap();
        st.next_client += 1;
        InMemoryBus {
            state: self.state.clone(),
            client_id: st.next_client,
            seq: Mutex::new(0),
        }
    }

    pub fn subscriber_count(&self) -> usize {
        let st = self.state.lock().unwrap();
        st.entries.iter().filter(|e| !e.tx.is_closed()).count()
    }
}

pub struct InMemoryBus {
    state: Arc<Mutex<State>>,
    client_id: u64,
    seq: Mutex<u64>,
}

impl InMemoryBus {
    pub fn client_id(&self) -> u64 {
        self.client_id
    }
}

struct Unsubscribe {
    state: Weak<Mutex<State>>,
    id: u64,
}

impl Drop for Unsubscribe {
    fn drop(&mut self) {
        if let Some(state) = self.state.upgrade() {
            if let Ok(mut st) = state.lock() {
                st.entries.retain(|e| e.id != self.id);
            }
        }
    }
}

#[async_trait]
impl EventBus for InMemoryBus {
    async fn publish(&self, topic: &Topic, payload: Vec<u8>) -> Result<PublishAck, BusError> {
        // Sequence assignment and fan-out share one critical section so
        // concurrent publishers on this connection stay ordered.
        let mut seq = self.seq.lock().unwrap();
        let mut st = self.state.lock().unwrap();
        *seq += 1;
        let msg = BusMessage {
            topic: topic.clone(),
            payload,
            publish_seq: *seq,
        };
        st.entries.retain(|e| !e.tx.is_closed());
        for e in st.entries.iter().filter(|e| e.filter.matches(topic)) {
            let _ = e.tx.send(msg.clone());
        }
        Ok(PublishAck { publish_seq: *seq })
    }

    async fn subscribe(&self, filter: &TopicFilter) -> Result<Subscription, BusError> {
        let (tx, rx) = mpsc::unbounded_channel();
        let mut st = self.state.lock().unwrap();
        st.next_sub += 1;
        let id = st.next_sub;
        st.entries.push(Entry {
            id,
            filter: filter.clone(),
            tx,
        });
        let guard = Unsubscribe {
            state: Arc::downgrade(&self.state),
            id,
        };
        Ok(Subscription::new(rx, Some(Box::new(guard))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::filter;

    #[tokio::test]
    async fn dropping_subscription_unregisters() {
        let broker = InMemoryBroker::new();
        let bus = broker.client();
        let sub = bus.subscribe(&filter("a/#")).await.unwrap();
        assert_eq!(broker.subscriber_count(), 1);
        drop(sub);
        assert_eq!(broker.subscriber_count(), 0);
    }

    #[tokio::test]
    async fn sequence_is_per_connection() {
        let broker = InMemoryBroker::new();
        let a = broker.client();
        let b = broker.client();
        let t = Topic::new("x/y").unwrap();
        assert_eq!(a.publish(&t, vec![]).await.unwrap().publish_seq, 1);
        assert_eq!(a.publish(&t, vec![]).await.unwrap().publish_seq, 2);
        assert_eq!(b.publish(&t, vec![]).await.unwrap().publish_seq, 1);
    }
}
