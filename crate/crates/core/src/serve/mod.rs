//! Batch-inference service: a bounded request queue in front of one model
//! executor that groups concurrent requests into dynamic batches.

pub mod protocol;
pub mod service;
pub mod tcp;

pub use protocol::{PackageEta, PredictRequest, PredictResponse, Request, Response, ServiceStats, PROTOCOL_VERSION};
pub use service::{BatchConfig, Pending, Service};
pub use tcp::Server;
