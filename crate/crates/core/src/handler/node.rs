use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::{decode_message, record, CleanOutcome, HandlerConfig, HandlerStats, KindProcessor};
use crate::bus::{filter, topic_for, BusError, SharedBus, Stage};
use crate::signal::{encode_reading, SignalKind, SignalReading};

/// Bus-attached handler. A dispatcher task decodes raw readings and feeds one
/// worker task per kind, so a slow or poisoned stream never blocks another.
pub struct HandlerNode {
    stats: Arc<HandlerStats>,
    kinds: Arc<Mutex<Vec<SignalKind>>>,
    tasks: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl HandlerNode {
    /// Subscribes to `netwin/raw/#` and starts processing.
    pub async fn spawn(bus: SharedBus, config: HandlerConfig) -> Result<Self, BusError> {
        let mut sub = bus.subscribe(&filter("netwin/raw/#")).await?;
        let stats = Arc::new(HandlerStats::default());
        let kinds = Arc::new(Mutex::new(Vec::new()));
        let tasks: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();

        let dispatcher = {
            let stats = stats.clone();
            let kinds = kinds.clone();
            let tasks = tasks.clone();
            tokio::spawn(async move {
                let mut workers: BTreeMap<SignalKind, mpsc::UnboundedSender<SignalReading>> =
                    BTreeMap::new();
                while let Some(msg) = sub.recv().await {
                    let reading = match decode_message(&msg) {
                        Ok(r) => r,
                        Err((kind, err)) => {
                            stats.record_undecodable(kind);
                            tracing::debug!(topic = %msg.topic, error = %err, "dropping undecodable reading");
                            continue;
                        }
                    };
                    let kind = reading.kind();
                    let tx = workers.entry(kind).or_insert_with(|| {
                        let (tx, rx) = mpsc::unbounded_channel();
                        let processor = KindProcessor::new(kind, &config);
                        let worker =
                            tokio::spawn(run_worker(processor, rx, bus.clone(), stats.clone()));
                        tasks.lock().unwrap().push(worker);
                        kinds.lock().unwrap().push(kind);
                        tx
                    });
                    let _ = tx.send(reading);
                }
            })
        };
        tasks.lock().unwrap().push(dispatcher);
        Ok(HandlerNode {
            stats,
            kinds,
            tasks,
        })
    }

    pub fn stats(&self) -> Arc<HandlerStats> {
        self.stats.clone()
    }

    /// Kinds that have a processor, in creation order.
    pub fn processor_kinds(&self) -> Vec<SignalKind> {
        self.kinds.lock().unwrap().clone()
    }

    pub fn shutdown(&self) {
        for t in self.tasks.lock().unwrap().iter() {
            t.abort();
        }
    }
}

impl Drop for HandlerNode {
    fn drop(&mut self) {
        self.shutdown();
    }
}

async fn run_worker(
    mut processor: KindProcessor,
    mut rx: mpsc::UnboundedReceiver<SignalReading>,
    bus: SharedBus,
    stats: Arc<HandlerStats>,
) {
    let kind = processor.kind();
    while let Some(reading) = rx.recv().await {
        let outcome = processor.process(&reading);
        record(&stats, kind, &outcome);
        let CleanOutcome::Accept(curated) = outcome else {
            continue;
        };
        let topic = match topic_for(Stage::Curated, &curated.device.device_id, Some(kind)) {
            Ok(t) => t,
            Err(e) => {
                tracing::warn!(error = %e, "cannot route curated reading");
                continue;
            }
        };
        match bus
            .publish(&topic, encode_reading(&curated).into_bytes())
            .await
        {
            Ok(_) => stats.record_published(kind),
            Err(e) => tracing::warn!(error = %e, "curated publish failed"),
        }
    }
}
