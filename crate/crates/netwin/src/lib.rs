//! Gateway, runtime wiring and configuration for the `netwin` binary.
//!
//! The [`gateway`] exposes the twin graph, KPI series, analytics and action
//! dispatch over HTTP and a WebSocket feed. [`runtime`] starts components
//! either all in one process over the in-memory bus or one at a time against
//! an MQTT broker.

pub mod config;
pub mod gateway;
pub mod runtime;
