use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use super::auth::DEFAULT_SESSION_TTL_MS;
use super::{
    Authenticator, ChangeSet, GraphFilter, GraphView, PropertySchema, Sample, Session, TwinError,
    TwinStore, DEFAULT_KPI_CAPACITY,
};
use crate::bus::{filter, graph_events_topic, BusError, SharedBus};
use crate::signal::{decode_reading, SignalReading};

/// What drives eviction sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvictionClock {
    /// Latest curated timestamp seen; replays evict exactly as live runs.
    #[default]
    Data,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub ttl_ms: u64,
    pub sweep_interval_ms: u64,
    pub kpi_capacity: usize,
    pub tokens: Vec<String>,
    pub session_ttl_ms: u64,
    pub eviction_clock: EvictionClock,
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            ttl_ms: 60_000,
            sweep_interval_ms: 10_000,
            kpi_capacity: DEFAULT_KPI_CAPACITY,
            tokens: vec!["netwin-dev-token".to_string()],
            session_ttl_ms: DEFAULT_SESSION_TTL_MS,
            eviction_clock: EvictionClock::Data,
            snapshot_dir: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct ControllerStats {
    consumed: AtomicU64,
    rejected: AtomicU64,
    changesets: AtomicU64,
    sweeps: AtomicU64,
    data_time_ms: AtomicU64,
}

impl ControllerStats {
    pub fn consumed(&self) -> u64 {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::SeqCst)
    }

    pub fn changesets(&self) -> u64 {
        self.changesets.load(Ordering::SeqCst)
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps.load(Ordering::SeqCst)
    }

    pub fn data_time_ms(&self) -> u64 {
        self.data_time_ms.load(Ordering::SeqCst)
    }
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    store: RwLock<TwinStore>,
    auth: Authenticator,
    clock: Clock,
    changes: broadcast::Sender<ChangeSet>,
    stats: ControllerStats,
}

/// Session-gated access to the twin store. Mutations are serialized by the
/// write lock; readers see consistent point-in-time views.
#[derive(Clone)]
pub struct TwinController {
    inner: Arc<Inner>,
}

impl TwinController {
    pub fn new(store: TwinStore, auth: Authenticator) -> Self {
        Self::with_clock(store, auth, Arc::new(wall_clock_ms))
    }

    /// `clock` decides session expiry.
    pub fn with_clock(store: TwinStore, auth: Authenticator, clock: Clock) -> Self {
        let (changes, _) = broadcast::channel(1024);
        TwinController {
            inner: Arc::new(Inner {
                store: RwLock::new(store),
                auth,
                clock,
                changes,
                stats: ControllerStats::default(),
            }),
        }
    }

    pub fn from_config(config: &ControllerConfig) -> Result<Self, TwinError> {
        let store = match &config.snapshot_dir {
            Some(dir) => TwinStore::load_snapshot(dir)?
                .unwrap_or_else(|| TwinStore::new(config.kpi_capacity)),
            None => TwinStore::new(config.kpi_capacity),
        };
        Ok(Self::new(
            store,
            Authenticator::new(config.tokens.iter().cloned(), config.session_ttl_ms),
        ))
    }

    pub fn now_ms(&self) -> u64 {
        (self.inner.clock)()
    }

    pub fn authenticator(&self) -> &Authenticator {
        &self.inner.auth
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.inner.stats
    }

    pub fn authenticate(&self, token: &str) -> Result<Session, TwinError> {
        self.inner.auth.authenticate(token, self.now_ms())
    }

    fn check(&self, session: &Session) -> Result<(), TwinError> {
        self.inner.auth.check(session, self.now_ms())
    }

    /// Live graph changes, one per non-empty mutation.
    pub fn subscribe_changes(&self) -> broadcast::Receiver<ChangeSet> {
        self.inner.changes.subscribe()
    }

    fn announce(&self, cs: &ChangeSet) {
        if !cs.is_empty() {
            self.inner.stats.changesets.fetch_add(1, Ordering::SeqCst);
            let _ = self.inner.changes.send(cs.clone());
        }
    }

    pub fn ensure_model(
        &self,
        session: &Session,
        name: &str,
        schema: PropertySchema,
    ) -> Result<String, TwinError> {
        self.check(session)?;
        self.inner.store.write().unwrap().ensure_model(name, schema)
    }

    pub fn reconcile(
        &self,
        session: &Session,
        reading: &SignalReading,
    ) -> Result<ChangeSet, TwinError> {
        self.check(session)?;
        let cs = self.inner.store.write().unwrap().reconcile(reading)?;
        self.announce(&cs);
        Ok(cs)
    }

    pub fn evict_stale(
        &self,
        session: &Session,
        now_ms: u64,
        ttl_ms: u64,
    ) -> Result<ChangeSet, TwinError> {
        self.check(session)?;
        let cs = self
            .inner
            .store
            .write()
            .unwrap()
            .evict_stale(now_ms, ttl_ms);
        self.announce(&cs);
        Ok(cs)
    }

    pub fn restore(&self, session: &Session, document: &str) -> Result<(), TwinError> {
        self.check(session)?;
        let restored = TwinStore::restore(document)?;
        *self.inner.store.write().unwrap() = restored;
        Ok(())
    }

    pub fn persist_snapshot(&self, session: &Session, dir: &Path) -> Result<PathBuf, TwinError> {
        self.check(session)?;
        self.inner.store.write().unwrap().persist_snapshot(dir)
    }

    pub fn snapshot(&self) -> String {
        self.inner.store.read().unwrap().snapshot()
    }

    pub fn query_graph(&self, filter: &GraphFilter) -> Result<GraphView, TwinError> {
        self.inner.store.read().unwrap().query_graph(filter)
    }

    pub fn query_kpis(
        &self,
        entity: &str,
        metric: &str,
        from: u64,
        to: u64,
    ) -> Result<Vec<Sample>, TwinError> {
        self.inner
            .store
            .read()
            .unwrap()
            .query_kpis(entity, metric, from, to)
    }

    /// Runs `f` against a consistent view of the store.
    pub fn read<R>(&self, f: impl FnOnce(&TwinStore) -> R) -> R {
        f(&self.inner.store.read().unwrap())
    }
}

/// Bus-attached controller: consumes `netwin/curated/#` in arrival order and
/// publishes each change set on `netwin/events/graph`.
pub struct ControllerNode {
    task: JoinHandle<()>,
}

struct Runner {
    bus: SharedBus,
    controller: TwinController,
    config: ControllerConfig,
    token: String,
    session: Session,
    next_sweep_ms: Option<u64>,
}

impl Runner {
    fn session(&mut self) -> Result<Session, TwinError> {
        if !self.session.is_live(self.controller.now_ms()) {
            self.session = self.controller.authenticate(&self.token)?;
        }
        Ok(self.session.clone())
    }

    async fn publish(&self, cs: &ChangeSet) {
        if cs.is_empty() {
            return;
        }
        if let Err(e) = self
            .bus
            .publish(&graph_events_topic(), cs.to_canonical_json().into_bytes())
            .await
        {
            tracing::warn!(error = %e, "graph event publish failed");
        }
    }

    async fn sweep(&mut self, now_ms: u64) {
        let Ok(session) = self.session() else {
            tracing::error!("controller token rejected; skipping sweep");
            return;
        };
        match self
            .controller
            .evict_stale(&session, now_ms, self.config.ttl_ms)
        {
            Ok(cs) => self.publish(&cs).await,
            Err(e) => tracing::error!(error = %e, "eviction failed"),
        }
        if let Some(dir) = &self.config.snapshot_dir {
            if let Err(e) = self.controller.persist_snapshot(&session, dir) {
                tracing::warn!(error = %e, "snapshot failed");
            }
        }
        self.controller
            .stats()
            .sweeps
            .fetch_add(1, Ordering::SeqCst);
    }

    async fn handle(&mut self, payload: &[u8]) {
        let controller = self.controller.clone();
        let stats = controller.stats();
        let reading = match std::str::from_utf8(payload).ok().map(decode_reading) {
            Some(Ok(r)) if r.curated => r,
            _ => {
                stats.rejected.fetch_add(1, Ordering::SeqCst);
                stats.consumed.fetch_add(1, Ordering::SeqCst);
                return;
            }
        };
        let ts = reading.timestamp_ms;
        match self
            .session()
            .and_then(|s| self.controller.reconcile(&s, &reading))
        {
            Ok(cs) => self.publish(&cs).await,
            Err(e) => {
                stats.rejected.fetch_add(1, Ordering::SeqCst);
                tracing::warn!(error = %e, "reconcile failed");
            }
        }
        let now = stats.data_time_ms.fetch_max(ts, Ordering::SeqCst).max(ts);
        if self.config.eviction_clock == EvictionClock::Data {
            let interval = self.config.sweep_interval_ms.max(1);
            let due = *self
                .next_sweep_ms
                .get_or_insert((now / interval + 1) * interval);
            if now >= due {
                self.sweep(now).await;
                self.next_sweep_ms = Some((now / interval + 1) * interval);
            }
        }
        stats.consumed.fetch_add(1, Ordering::SeqCst);
    }
}

impl ControllerNode {
    pub async fn spawn(
        bus: SharedBus,
        controller: TwinController,
        config: ControllerConfig,
        token: &str,
    ) -> Result<Self, TwinError> {
        let session = controller.authenticate(token)?;
        let mut sub = bus
            .subscribe(&filter("netwin/curated/#"))
            .await
            .map_err(|e: BusError| TwinError::Transport(e.to_string()))?;
        let mut runner = Runner {
            bus,
            controller,
            config,
            token: token.to_string(),
            session,
            next_sweep_ms: None,
        };
        let task = tokio::spawn(async move {
            let period = Duration::from_millis(runner.config.sweep_interval_ms.max(1));
            let mut ticker = tokio::time::interval(period);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    msg = sub.recv() => match msg {
                        Some(m) => runner.handle(&m.payload).await,
                        None => break,
                    },
                    _ = ticker.tick(), if runner.config.eviction_clock == EvictionClock::Wall => {
                        runner.sweep(wall_clock_ms()).await;
                    }
                }
            }
        });
        Ok(ControllerNode { task })
    }

    pub fn shutdown(&self) {
        self.task.abort();
    }
}

impl Drop for ControllerNode {
    fn drop(&mut self) {
        self.task.abort();
    }
}
