//! HTTP service for the resource manager: configuration, ordered boot and
//! the REST routes.

pub mod api;
pub mod boot;
pub mod config;
pub mod wiring;

pub use boot::{boot, boot_from_env, AppState, BootError, BootStep, Running, COMPONENTS};
pub use config::{ConfigError, GlobalConfig, UserConfig};
