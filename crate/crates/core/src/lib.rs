//! Core of the netwin network digital twin.
//!
//! Readings flow from simulated end-devices ([`simulator`]) over the
//! [`bus`] to the [`handler`], which cleans and smooths them, and on to the
//! [`twin`] controller, which reconciles them into a graph of devices, signal
//! sources and `detects` relationships with KPI time series. The
//! [`analytics`] pipeline runs descriptive, diagnostic, predictive and
//! prescriptive stages over that graph, and its recommendations travel back to
//! devices as [`action`] commands.

pub mod action;
pub mod analytics;
pub mod bus;
pub mod handler;
pub mod json;
pub mod signal;
pub mod simulator;
pub mod twin;
