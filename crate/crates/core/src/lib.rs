//! Core of the continuum resource manager: domain model, transactional
//! store, in-process event bus, simulated provider drivers, deployment
//! engine, metrics store with collector, and SLO alerting.

pub mod alerting;
pub mod bus;
pub mod clock;
pub mod domain;
pub mod engine;
pub mod sim;
pub mod store;
pub mod tsdb;
