//! MQTT 3.1.1 adapter: QoS 1, no retained messages, clean sessions.
//!
//! A background task drives the rumqttc event loop. Publish and subscribe
//! calls resolve once the broker acknowledges them (PUBACK / SUBACK), which
//! gives the same "delivered to every subscriber matching at publish time"
//! guarantee the in-memory bus has.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use rumqttc::{AsyncClient, Event, EventLoop, MqttOptions, Outgoing, Packet, QoS};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use super::{BusError, BusMessage, EventBus, PublishAck, Subscription, Topic, TopicFilter};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(3);
const ACK_TIMEOUT: Duration = Duration::from_secs(10);

type Waiter = oneshot::Sender<Result<(), BusError>>;

struct Route {
    id: u64,
    filter: TopicFilter,
    tx: mpsc::UnboundedSender<BusMessage>,
}

#[derive(Default)]
struct Pending {
    /// Waiters in request order, before the event loop assigns a packet id.
    queued: VecDeque<Waiter>,
    inflight: HashMap<u16, Waiter>,
}

impl Pending {
    fn fail_all(&mut self, err: &BusError) {
        for w in self.queued.drain(..) {
            let _ = w.send(Err(err.clone()));
        }
        for (_, w) in self.inflight.drain() {
            let _ = w.send(Err(err.clone()));
        }
    }
}

#[derive(Default)]
struct Shared {
    routes: Mutex<Vec<Route>>,
    publishes: Mutex<Pending>,
    subscribes: Mutex<Pending>,
    connected: AtomicBool,
    next_route: AtomicU64,
    recv_seq: AtomicU64,
}

pub struct MqttBus {
    client: AsyncClient,
    shared: Arc<Shared>,
    /// Serializes request submission so waiter order matches packet order.
    submit: tokio::sync::Mutex<()>,
    seq: AtomicU64,
    task: JoinHandle<()>,
}

fn parse_url(url: &str) -> Result<(String, u16), BusError> {
    let rest = url
        .strip_prefix("mqtt://")
        .or_else(|| url.strip_prefix("tcp://"))
        .ok_or_else(|| BusError::UnsupportedUrl(url.to_string()))?;
    let rest = rest.trim_end_matches('/');
    match rest.rsplit_once(':') {
        Some((host, port)) => {
            let port = port
                .parse()
                .map_err(|_| BusError::UnsupportedUrl(url.to_string()))?;
            Ok((host.to_string(), port))
        }
        None if !rest.is_empty() => Ok((rest.to_string(), 1883)),
        None => Err(BusError::UnsupportedUrl(url.to_string())),
    }
}

impl MqttBus {
    /// Connects and waits for CONNACK; an unreachable broker is a
    /// [`BusError::Transport`].
    pub async fn connect(url: &str, client_id: &str) -> Result<Self, BusError> {
        let (host, port) = parse_url(url)?;
        let mut opts = MqttOptions::new(client_id, host, port);
        opts.set_clean_session(true)
            .set_keep_alive(Duration::from_secs(5))
            .set_max_packet_size(1 << 20, 1 << 20);
        let (client, eventloop) = AsyncClient::new(opts, 1024);
        let shared = Arc::new(Shared::default());
        let (ready_tx, ready_rx) = oneshot::channel();
        let task = tokio::spawn(drive(eventloop, client.clone(), shared.clone(), ready_tx));

        let outcome = tokio::time::timeout(CONNECT_TIMEOUT, ready_rx).await;
        match outcome {
            Ok(Ok(Ok(()))) => Ok(MqttBus {
                client,
                shared,
                submit: tokio::sync::Mutex::new(()),
                seq: AtomicU64::new(0),
                task,
            }),
            Ok(Ok(Err(e))) => {
                task.abort();
                Err(e)
            }
            _ => {
                task.abort();
                Err(BusError::Transport(format!("no CONNACK from {url}")))
            }
        }
    }

    pub fn is_connected(&self) -> bool {
        self.shared.connected.load(Ordering::SeqCst)
    }

    async fn await_ack(rx: oneshot::Receiver<Result<(), BusError>>) -> Result<(), BusError> {
        match tokio::time::timeout(ACK_TIMEOUT, rx).await {
            Ok(Ok(r)) => r,
            Ok(Err(_)) => Err(BusError::Transport("connection task ended".into())),
            Err(_) => Err(BusError::Transport("acknowledgement timed out".into())),
        }
    }
}

impl Drop for MqttBus {
    fn drop(&mut self) {
        let _ = self.client.try_disconnect();
        self.task.abort();
    }
}

async fn drive(
    mut eventloop: EventLoop,
    client: AsyncClient,
    shared: Arc<Shared>,
    ready: oneshot::Sender<Result<(), BusError>>,
) {
    let mut ready = Some(ready);
    loop {
        match eventloop.poll().await {
            Ok(Event::Incoming(Packet::ConnAck(_))) => {
                let was_up = shared.connected.swap(true, Ordering::SeqCst);
                if let Some(r) = ready.take() {
                    let _ = r.send(Ok(()));
                } else if !was_up {
                    // Clean session: re-establish broker-side subscriptions.
                    let filters: Vec<String> = {
                        let routes = shared.routes.lock().unwrap();
                        let mut f: Vec<String> = routes
                            .iter()
                            .map(|r| r.filter.as_str().to_string())
                            .collect();
                        f.sort();
                        f.dedup();
                        f
                    };
                    for f in filters {
                        let _ = client.try_subscribe(f, QoS::AtLeastOnce);
                    }
                }
            }
            Ok(Event::Incoming(Packet::Publish(p))) => {
                let Ok(topic) = Topic::new(p.topic.clone()) else {
                    continue;
                };
                let payload = p.payload.to_vec();
                let routes = shared.routes.lock().unwrap();
                for r in routes.iter().filter(|r| r.filter.matches(&topic)) {
                    let seq = shared.recv_seq.fetch_add(1, Ordering::SeqCst) + 1;
                    let _ = r.tx.send(BusMessage {
                        topic: topic.clone(),
                        payload: payload.clone(),
                        publish_seq: seq,
                    });
                }
            }
            Ok(Event::Incoming(Packet::PubAck(ack))) => {
                if let Some(w) = shared.publishes.lock().unwrap().inflight.remove(&ack.pkid) {
                    let _ = w.send(Ok(()));
                }
            }
            Ok(Event::Incoming(Packet::SubAck(ack))) => {
                if let Some(w) = shared.subscribes.lock().unwrap().inflight.remove(&ack.pkid) {
                    let _ = w.send(Ok(()));
                }
            }
            Ok(Event::Outgoing(Outgoing::Publish(pkid))) => {
                let mut p = shared.publishes.lock().unwrap();
                if let Some(w) = p.queued.pop_front() {
                    p.inflight.insert(pkid, w);
                }
            }
            Ok(Event::Outgoing(Outgoing::Subscribe(pkid))) => {
                let mut s = shared.subscribes.lock().unwrap();
                if let Some(w) = s.queued.pop_front() {
                    s.inflight.insert(pkid, w);
                }
            }
            Ok(_) => {}
            Err(e) => {
                let err = BusError::Transport(e.to_string());
                shared.connected.store(false, Ordering::SeqCst);
                shared.publishes.lock().unwrap().fail_all(&err);
                shared.subscribes.lock().unwrap().fail_all(&err);
                if let Some(r) = ready.take() {
                    let _ = r.send(Err(err));
                    return;
                }
                tracing::warn!(error = %e, "mqtt connection error, retrying");
                tokio::time::sleep(Duration::from_millis(200)).await;
            }
        }
    }
}

struct RouteGuard {
    shared: std::sync::Weak<Shared>,
    client: AsyncClient,
    id: u64,
}

impl Drop for RouteGuard {
    fn drop(&mut self) {
        let Some(shared) = self.shared.upgrade() else {
            return;
        };
        let mut routes = shared.routes.lock().unwrap();
        let Some(pos) = routes.iter().position(|r| r.id == self.id) else {
            return;
        };
        let route = routes.remove(pos);
        if !routes.iter().any(|r| r.filter == route.filter) {
            let _ = self.client.try_unsubscribe(route.filter.as_str());
        }
    }
}

#[async_trait]
impl EventBus for MqttBus {
    async fn publish(&self, topic: &Topic, payload: Vec<u8>) -> Result<PublishAck, BusError> {
        if !self.is_connected() {
            return Err(BusError::Transport("not connected".into()));
        }
        let (tx, rx) = oneshot::channel();
        let seq = {
            let _order = self.submit.lock().await;
            self.shared.publishes.lock().unwrap().queued.push_back(tx);
            if let Err(e) = self
                .client
                .publish(topic.as_str(), QoS::AtLeastOnce, false, payload)
                .await
            {
                self.shared.publishes.lock().unwrap().queued.pop_back();
                return Err(BusError::Transport(e.to_string()));
            }
            self.seq.fetch_add(1, Ordering::SeqCst) + 1
        };
        Self::await_ack(rx).await?;
        Ok(PublishAck { publish_seq: seq })
    }

    async fn subscribe(&self, filter: &TopicFilter) -> Result<Subscription, BusError> {
        if !self.is_connected() {
            return Err(BusError::Transport("not connected".into()));
        }
        let (msg_tx, msg_rx) = mpsc::unbounded_channel();
        let id = self.shared.next_route.fetch_add(1, Ordering::SeqCst);
        let already = {
            let mut routes = self.shared.routes.lock().unwrap();
            let already = routes.iter().any(|r| r.filter == *filter);
            routes.push(Route {
                id,
                filter: filter.clone(),
                tx: msg_tx,
            });
            already
        };
        let guard = RouteGuard {
            shared: Arc::downgrade(&self.shared),
            client: self.client.clone(),
            id,
        };
        if !already {
            let (tx, rx) = oneshot::channel();
            {
                let _order = self.submit.lock().await;
                self.shared.subscribes.lock().unwrap().queued.push_back(tx);
                if let Err(e) = self
                    .client
                    .subscribe(filter.as_str(), QoS::AtLeastOnce)
                    .await
                {
                    self.shared.subscribes.lock().unwrap().queued.pop_back();
                    return Err(BusError::Transport(e.to_string()));
                }
            }
            Self::await_ack(rx).await?;
        }
        Ok(Subscription::new(msg_rx, Some(Box::new(guard))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_parsing() {
        assert_eq!(
            parse_url("mqtt://localhost:1884").unwrap(),
            ("localhost".into(), 1884)
        );
        assert_eq!(parse_url("mqtt://broker").unwrap(), ("broker".into(), 1883));
        assert!(parse_url("http://x").is_err());
        assert!(parse_url("mqtt://").is_err());
    }

    #[tokio::test]
    async fn unreachable_broker_is_transport_error() {
        // Port 9 (discard) is almost never listening.
        let err = MqttBus::connect("mqtt://127.0.0.1:9", "t")
            .await
            .err()
            .unwrap();
        assert!(matches!(err, BusError::Transport(_)), "{err:?}");
    }
}
