//! Request queue and the single batching executor.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TrySendError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{
    delivery_etas, Envelope, PredictRequest, PredictResponse, Request, Response, ServiceStats, PROTOCOL_VERSION,
};
use crate::data::features::{EncodedSample, FeatureStats};
use crate::data::mobility::MobilityTensors;
use crate::data::schema::Sample;
use crate::error::{config, Result};
use crate::model::Model;

/// Dynamic batching limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    /// Largest batch one execution takes.
    pub max_batch: usize,
    /// How long the executor waits for a batch to fill after its first request.
    pub flush_ms: u64,
    /// Requests that may wait in the queue before new ones are rejected.
    pub queue_capacity: usize,
    /// Retry hint sent with rejections.
    pub retry_after_ms: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            max_batch: 16,
            flush_ms: 20,
            queue_capacity: 1024,
            retry_after_ms: 20,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_batch == 0 || self.queue_capacity == 0 {
            return config("max_batch and queue_capacity must be at least 1");
        }
        Ok(())
    }
}

struct Job {
    id: String,
    sample: Sample,
    encoded: EncodedSample,
    reply: Sender<Response>,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    rejected: AtomicU64,
    executions: AtomicU64,
    predicted: AtomicU64,
}

struct Shared {
    features: FeatureStats,
    mobility: RwLock<Option<Arc<MobilityTensors>>>,
    mobility_path: Option<PathBuf>,
    counters: Counters,
}

/// What submitting a line produced: an answer now, or one to wait for.
pub enum Pending {
    Ready(Response),
    Queued(Receiver<Response>),
}

impl Pending {
    /// Blocks until the response is available.
    pub fn wait(self) -> Response {
        match self {
            Self::Ready(r) => r,
            Self::Queued(rx) => rx
                .recv()
                .unwrap_or_else(|_| Response::error(None, "the executor stopped before answering")),
        }
    }
}

/// A model behind a bounded queue, drained by one executor thread that
/// forms batches of up to `max_batch` requests or flushes after `flush_ms`.
pub struct Service {
    tx: Option<SyncSender<Job>>,
    shared: Arc<Shared>,
    config: BatchConfig,
    executor: Option<JoinHandle<()>>,
}

impl Service {
    /// Starts the executor. `mobility_path`, when given, is where `reload`
    /// reads fresh mobility tensors from.
    pub fn start(
        model: Model,
        features: FeatureStats,
        model_version: String,
        mobility: Option<MobilityTensors>,
        mobility_path: Option<PathBuf>,
        config: BatchConfig,
    ) -> Result<Self> {
        config.validate()?;
        if model.config.use_mobility && mobility.is_none() {
            return crate::error::config("this model uses mobility tensors; none were given");
        }
        let shared = Arc::new(Shared {
            features,
            mobility: RwLock::new(mobility.map(Arc::new)),
            mobility_path,
            counters: Counters::default(),
        });
        let (tx, rx) = mpsc::sync_channel(config.queue_capacity);
        let executor = {
            let shared = shared.clone();
            let config = config.clone();
            std::thread::Builder::new()
                .name("parcel-executor".into())
                .spawn(move || run_executor(rx, model, model_version, shared, config))?
        };
        Ok(Self {
            tx: Some(tx),
            shared,
            config,
            executor: Some(executor),
        })
    }

    pub fn config(&self) -> &BatchConfig {
        &self.config
    }

    fn n_aoi(&self) -> Option<usize> {
        self.mobility().map(|m| m.n_aoi)
    }

    fn mobility(&self) -> Option<Arc<MobilityTensors>> {
        self.shared.mobility.read().expect("mobility lock").clone()
    }

    /// Validates and enqueues one request. Invalid requests and queue
    /// overflow are answered immediately.
    pub fn submit(&self, req: PredictRequest) -> Pending {
        let sample = match req.to_sample(self.n_aoi()) {
            Ok(s) => s,
            Err(problems) => return Pending::Ready(Response::error(Some(req.id), problems.join("; "))),
        };
        let encoded = self.shared.features.encode(&sample);
        let (reply, rx) = mpsc::channel();
        let job = Job {
            id: req.id,
            sample,
            encoded,
            reply,
        };
        let tx = self.tx.as_ref().expect("running");
        match tx.try_send(job) {
            Ok(()) => {
                self.shared.counters.accepted.fetch_add(1, Ordering::Relaxed);
                Pending::Queued(rx)
            }
            Err(TrySendError::Full(job)) => {
                self.shared.counters.rejected.fetch_add(1, Ordering::Relaxed);
                Pending::Ready(Response::Error {
                    id: Some(job.id),
                    message: "queue full".into(),
                    retry_after_ms: Some(self.config.retry_after_ms),
                })
            }
            Err(TrySendError::Disconnected(job)) => {
                Pending::Ready(Response::error(Some(job.id), "the executor has stopped"))
            }
        }
    }

    /// Submits and waits.
    pub fn predict(&self, req: PredictRequest) -> Response {
        self.submit(req).wait()
    }

    /// Re-reads the mobility tensors. Requests already queued may see
    /// either version; the swap itself is atomic.
    pub fn reload(&self) -> Response {
        let Some(path) = &self.shared.mobility_path else {
            return Response::error(None, "no mobility file to reload from");
        };
        match MobilityTensors::read(path) {
            Ok(m) => {
                let n_aoi = m.n_aoi;
                *self.shared.mobility.write().expect("mobility lock") = Some(Arc::new(m));
                Response::Reloaded { n_aoi }
            }
            Err(e) => Response::error(None, format!("reload failed: {e}")),
        }
    }

    pub fn stats(&self) -> ServiceStats {
        let c = &self.shared.counters;
        ServiceStats {
            accepted: c.accepted.load(Ordering::Relaxed),
            rejected: c.rejected.load(Ordering::Relaxed),
            executions: c.executions.load(Ordering::Relaxed),
            predicted: c.predicted.load(Ordering::Relaxed),
        }
    }

    /// Handles one protocol line.
    pub fn handle_line(&self, line: &str) -> Pending {
        let env: Envelope<Request> = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(e) => return Pending::Ready(Response::error(None, format!("malformed request: {e}"))),
        };
        if env.v != PROTOCOL_VERSION {
            return Pending::Ready(Response::error(None, format!("unsupported protocol version {}", env.v)));
        }
        match env.body {
            Request::Predict(req) => self.submit(req),
            Request::Reload => Pending::Ready(self.reload()),
            Request::Stats => Pending::Ready(Response::Stats(self.stats())),
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.executor.take() {
            let _ = h.join();
        }
    }
}

fn run_executor(rx: Receiver<Job>, model: Model, version: String, shared: Arc<Shared>, config: BatchConfig) {
    let flush = Duration::from_millis(config.flush_ms);
    while let Ok(first) = rx.recv() {
        let mut batch = vec![first];
        let deadline = Instant::now() + flush;
        while batch.len() < config.max_batch {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            match rx.recv_timeout(deadline - now) {
                Ok(job) => batch.push(job),
                Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => break,
            }
        }
        let mobility = shared.mobility.read().expect("mobility lock").clone();
        let samples: Vec<&EncodedSample> = batch.iter().map(|j| &j.encoded).collect();
        let results = model.predict_batch(&samples, mobility.as_deref());
        shared.counters.executions.fetch_add(1, Ordering::Relaxed);
        shared.counters.predicted.fetch_add(batch.len() as u64, Ordering::Relaxed);
        match results {
            Ok(results) => {
                for (job, result) in batch.into_iter().zip(results) {
                    let response = match result {
                        Ok(p) => Response::Prediction(PredictResponse {
                            deliveries: delivery_etas(&job.sample, &p.route, &p.minutes),
                            truncated: job.sample.pending.len() - p.route.len(),
                            id: job.id.clone(),
                            model_version: version.clone(),
                        }),
                        Err(e) => Response::error(Some(job.id.clone()), e.to_string()),
                    };
                    // The caller may have gone away; nothing to do then.
                    let _ = job.reply.send(response);
                }
            }
            Err(e) => {
                for job in batch {
                    let _ = job.reply.send(Response::error(Some(job.id.clone()), e.to_string()));
                }
            }
        }
    }
}
