//! Node runtime: on-disk storage, the TCP peer transport, the HTTP API, and
//! the single-writer loop that drives a consensus replica.

pub mod api;
pub mod config;
pub mod error;
pub mod runtime;
pub mod storage;
pub mod transport;

pub use config::NodeConfig;
pub use error::NodeError;
pub use runtime::{start, start_with_listeners, NodeHandle};
