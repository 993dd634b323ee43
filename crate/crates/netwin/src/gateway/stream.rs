//! `/stream`: graph change sets for everyone, KPI ticks for subscribers.
//!
//! Frames are JSON text:
//! - `{"type": "changeset", "changeset": {...}}`
//! - `{"type": "kpi", "entity": "dev-01", "series": [{"entity", "metric", "samples": [[ts, v], ...]}]}`
//!
//! A client picks entities with `{"subscribe": ["dev-01", ...]}`. An entity
//! is a twin id, a relationship id, or a bare device id (which covers the
//! device twin and its relationships). Anything else from the client closes
//! the connection with 1002; a client that falls a full queue behind is
//! closed with 1008.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use futures::{SinkExt, StreamExt};
use netwin_core::json;
use netwin_core::twin::{device_twin_id, KpiKey, TwinStore};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use super::AppState;

pub const CLOSE_PROTOCOL_ERROR: u16 = 1002;
pub const CLOSE_POLICY: u16 = 1008;

pub(super) fn changeset_frame(payload: &[u8]) -> Option<Arc<str>> {
    let cs: Value = serde_json::from_slice(payload).ok()?;
    if !cs.is_object() {
        return None;
    }
    Some(json::to_canonical_string(&json!({ "type": "changeset", "changeset": cs })).into())
}

/// Parses `{"subscribe": [string, ...]}`.
pub fn parse_subscribe(text: &str) -> Result<Vec<String>, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("frame must be an object")?;
    if obj.len() != 1 {
        return Err("frame must contain only `subscribe`".into());
    }
    let list = obj
        .get("subscribe")
        .and_then(Value::as_array)
        .ok_or("`subscribe` must be an array")?;
    list.iter()
        .map(|e| {
            e.as_str()
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| "entities must be non-empty strings".to_string())
        })
        .collect()
}

fn matches(store: &TwinStore, key: &KpiKey, entity: &str, device_twin: &str) -> bool {
    key.entity == entity
        || key.entity == device_twin
        || store
            .relationship(&key.entity)
            .is_some_and(|r| r.source_twin == entity || r.source_twin == device_twin)
}

/// Samples newer than the last tick for each subscribed entity. On the first
/// tick only the latest sample of each series is sent.
fn kpi_frames(
    store: &TwinStore,
    entities: &[String],
    sent: &mut BTreeMap<KpiKey, u64>,
) -> Vec<String> {
    let mut frames = Vec::new();
    for entity in entities {
        let device_twin = device_twin_id(entity);
        let mut series = Vec::new();
        for key in store
            .series_keys()
            .filter(|k| matches(store, k, entity, &device_twin))
        {
            let Some(s) = store.series(key) else { continue };
            let fresh: Vec<Value> = match sent.get(key) {
                Some(&last) => s
                    .samples()
                    .filter(|x| x.timestamp_ms > last)
                    .map(|x| json!([x.timestamp_ms, json::number(x.value)]))
                    .collect(),
                None => s
                    .latest()
                    .map(|x| json!([x.timestamp_ms, json::number(x.value)]))
                    .into_iter()
                    .collect(),
            };
            if let Some(latest) = s.latest() {
                sent.insert(key.clone(), latest.timestamp_ms);
            }
            if !fresh.is_empty() {
                series
                    .push(json!({ "entity": key.entity, "metric": key.metric, "samples": fresh }));
            }
        }
        if !series.is_empty() {
            frames.push(json::to_canonical_string(&json!({
                "type": "kpi",
                "entity": entity,
                "series": series,
            })));
        }
    }
    frames
}

pub async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn close(sink: &mut futures::stream::SplitSink<WebSocket, Message>, code: u16, reason: &str) {
    let frame = CloseFrame {
        code,
        reason: reason.to_string().into(),
    };
    let _ = sink.send(Message::Close(Some(frame))).await;
}

async fn client(socket: WebSocket, state: AppState) {
    state.shared.stream_clients.fetch_add(1, Ordering::SeqCst);
    let (mut sink, mut source) = socket.split();
    let mut frames = state.shared.frames.subscribe();
    let mut entities: Vec<String> = Vec::new();
    let mut sent: BTreeMap<KpiKey, u64> = BTreeMap::new();
    let mut ticker = tokio::time::interval(Duration::from_millis(state.shared.config.kpi_tick_ms));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    loop {
        tokio::select! {
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => match parse_subscribe(text.as_str()) {
                    Ok(list) => {
                        let unique: BTreeSet<String> = list.into_iter().collect();
                        entities = unique.into_iter().collect();
                        sent.clear();
                    }
                    Err(reason) => {
                        close(&mut sink, CLOSE_PROTOCOL_ERROR, &reason).await;
                        break;
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    close(&mut sink, CLOSE_PROTOCOL_ERROR, "binary frames are not supported").await;
                    break;
                }
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_)) | Err(_)) | None => break,
            },
            frame = frames.recv() => match frame {
                Ok(text) => {
                    if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    close(&mut sink, CLOSE_POLICY, "client too slow").await;
                    break;
                }
                Err(RecvError::Closed) => break,
            },
            _ = ticker.tick(), if !entities.is_empty() => {
                let out = state.controller().read(|store| kpi_frames(store, &entities, &mut sent));
                for text in out {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        state.shared.stream_clients.fetch_sub(1, Ordering::SeqCst);
                        return;
                    }
                }
            }
        }
    }
    state.shared.stream_clients.fetch_sub(1, Ordering::SeqCst);
}
