use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{SimError, Simulator};
use crate::action::ActionCommand;
use crate::bus::{filter, topic_for, BusError, SharedBus, Stage, Subscription};
use crate::handler::{Dispatch, HandlerConfig, HandlerStats, Placement, SignalHandler};
use crate::signal::{encode_reading, SignalReading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// One tick per `tick_interval_ms` of wall time.
    Realtime,
    /// Ticks back to back.
    #[default]
    Fast,
}

#[derive(Debug, Default)]
pub struct SimulatorStats {
    published: AtomicU64,
    actions_applied: AtomicU64,
    actions_rejected: AtomicU64,
    sim_time_ms: AtomicU64,
}

impl SimulatorStats {
    /// Messages put on the bus (raw, or curated when the handler is embedded).
    pub fn published(&self) -> u64 {
        self.published.load(Ordering::SeqCst)
    }

    pub fn actions_applied(&self) -> u64 {
        self.actions_applied.load(Ordering::SeqCst)
    }

    pub fn actions_rejected(&self) -> u64 {
        self.actions_rejected.load(Ordering::SeqCst)
    }

    pub fn sim_time_ms(&self) -> u64 {
        self.sim_time_ms.load(Ordering::SeqCst)
    }
}

/// Bus-attached simulator. Owns the engine; actions arrive on
/// `netwin/actions/+` and are applied before the next step.
pub struct SimulatorNode {
    sim: Simulator,
    bus: SharedBus,
    actions: Subscription,
    handler: Option<SignalHandler>,
    stats: Arc<SimulatorStats>,
}

impl SimulatorNode {
    /// With [`Placement::Device`] the handler runs in-process and curated
    /// readings are published directly.
    pub async fn new(
        sim: Simulator,
        bus: SharedBus,
        handler: Option<HandlerConfig>,
    ) -> Result<Self, BusError> {
        let actions = bus.subscribe(&filter("netwin/actions/+")).await?;
        let handler = handler
            .filter(|c| c.placement == Placement::Device)
            .map(SignalHandler::new);
        Ok(SimulatorNode {
            sim,
            bus,
            actions,
            handler,
            stats: Arc::default(),
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn stats(&self) -> Arc<SimulatorStats> {
        self.stats.clone()
    }

    pub fn handler_stats(&self) -> Option<Arc<HandlerStats>> {
        self.handler.as_ref().map(SignalHandler::stats)
    }

    /// Applies every action already delivered; returns how many were applied.
    pub fn drain_actions(&mut self) -> usize {
        let mut applied = 0;
        while let Some(msg) = self.actions.try_recv() {
            let outcome = std::str::from_utf8(&msg.payload)
                .map_err(|_| SimError::UnsupportedCommand("non UTF-8 payload".into()))
                .and_then(|text| {
                    ActionCommand::decode(text)
                        .map_err(|e| SimError::UnsupportedCommand(e.to_string()))
                })
                .and_then(|cmd| self.sim.apply_action(&cmd));
            match outcome {
                Ok(()) => {
                    applied += 1;
                    self.stats.actions_applied.fetch_add(1, Ordering::SeqCst);
                }
                Err(e) => {
                    self.stats.actions_rejected.fetch_add(1, Ordering::SeqCst);
                    tracing::warn!(topic = %msg.topic, error = %e, "action rejected");
                }
            }
        }
        applied
    }

    /// Applies pending actions, steps to `t_ms` and publishes the output.
    pub async fn advance_to(&mut self, t_ms: u64) -> Result<usize, BusError> {
        self.drain_actions();
        let readings = self.sim.step(t_ms);
        let mut sent = 0;
        for r in readings {
            if self.publish(r).await? {
                sent += 1;
            }
        }
        self.stats
            .sim_time_ms
            .store(self.sim.elapsed_ms(), Ordering::SeqCst);
        Ok(sent)
    }

    async fn publish(&mut self, reading: SignalReading) -> Result<bool, BusError> {
        let kind = reading.kind();
        let (stage, out) = match &mut self.handler {
            None => (Stage::Raw, reading),
            Some(h) => match h.handle_reading(&reading) {
                Dispatch::Curated(c) => (Stage::Curated, c),
                _ => return Ok(false),
            },
        };
        let topic = topic_for(stage, &out.device.device_id, Some(kind))?;
        self.bus
            .publish(&topic, encode_reading(&out).into_bytes())
            .await?;
        self.stats.published.fetch_add(1, Ordering::SeqCst);
        if let Some(h) = &self.handler {
            h.stats().record_published(kind);
        }
        Ok(true)
    }

    /// Runs the scenario to its end, one tick at a time.
    pub async fn run(&mut self, mode: ClockMode) -> Result<(), BusError> {
        let tick = self.sim.spec().tick_interval_ms.max(1);
        let end = self.sim.spec().duration_ms();
        let mut interval = tokio::time::interval(Duration::from_millis(tick));
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let mut t = self.sim.elapsed_ms();
        while t < end {
            match mode {
                ClockMode::Realtime => {
                    interval.tick().await;
                }
                ClockMode::Fast => tokio::task::yield_now().await,
            }
            t = (t + tick).min(end);
            self.advance_to(t).await?;
        }
        Ok(())
    }
}
