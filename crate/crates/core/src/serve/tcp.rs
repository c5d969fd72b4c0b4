//! Line-delimited JSON over TCP. Each connection gets a reader that submits
//! requests and a writer that answers them in arrival order, so one client
//! can pipeline many requests into the same batch.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use super::protocol::{Envelope, Response};
use super::service::{Pending, Service};
use crate::error::Result;

pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` and starts accepting connections in the background.
    pub fn bind(addr: impl ToSocketAddrs, service: Arc<Service>) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let stop = stop.clone();
            std::thread::Builder::new()
                .name("parcel-accept".into())
                .spawn(move || accept_loop(listener, service, stop))?
        };
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting; open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, service: Arc<Service>, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let service = service.clone();
        let _ = std::thread::Builder::new()
            .name("parcel-conn".into())
            .spawn(move || handle_connection(stream, service));
    }
}

fn write_response<W: Write>(w: &mut W, r: &Response) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, &Envelope::new(r))?;
    w.write_all(b"\n")?;
    w.flush()
}

fn handle_connection(stream: TcpStream, service: Arc<Service>) {
    let Ok(write_half) = stream.try_clone() else { return };
    let (tx, rx) = mpsc::channel::<Pending>();
    let writer = std::thread::spawn(move || {
        let mut out = BufWriter::new(write_half);
        for pending in rx {
            if write_response(&mut out, &pending.wait()).is_err() {
                break;
            }
        }
    });
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if tx.send(service.handle_line(&line)).is_err() {
            break;
        }
    }
    drop(tx);
    let _ = writer.join();
}
