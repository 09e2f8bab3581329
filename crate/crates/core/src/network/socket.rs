//! TCP transport. Each frame is a 4-byte big-endian length followed by the
//! envelope as UTF-8 JSON.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{Envelope, LinkConfig, PeerDelivery, Transport};

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

pub fn encode_frame(envelope: &Envelope) -> Vec<u8> {
    let body = envelope.to_json();
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Splits one frame off the front of `bytes`: `(body, rest)`, or `None` if incomplete.
pub fn decode_frame(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let end = 4usize.checked_add(len)?;
    (bytes.len() >= end).then(|| (&bytes[4..end], &bytes[end..]))
}

pub fn write_frame(w: &mut impl Write, envelope: &Envelope) -> io::Result<()> {
    w.write_all(&encode_frame(envelope))?;
    w.flush()
}

/// Reads one frame body. `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes"),
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Accepts connections on a background thread and hands every frame body to `sink`.
pub struct SocketListener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl SocketListener {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SocketListener {
    fn drop(&mut self) {
        if self.handle.is_some() {
            self.stop_inner();
        }
    }
}

pub fn listen<F>(addr: SocketAddr, sink: F) -> io::Result<SocketListener>
where
    F: Fn(Vec<u8>) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let sink = Arc::new(sink);
    let stop_flag = stop.clone();
    let handle = std::thread::Builder::new()
        .name(format!("listen-{addr}"))
        .spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = conn else { continue };
                let sink = sink.clone();
                let stop = stop_flag.clone();
                std::thread::spawn(move || {
                    let _ = stream.set_read_timeout(Some(Duration::from_millis(500)));
                    loop {
                        match read_frame(&mut stream) {
                            Ok(Some(body)) => sink(body),
                            Ok(None) => break,
                            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                                if stop.load(Ordering::SeqCst) {
                                    break;
                                }
                            }
                            Err(e) => {
                                log::debug!("dropping connection: {e}");
                                break;
                            }
                        }
                    }
                    let _ = stream.shutdown(Shutdown::Both);
                });
            }
        })?;
    Ok(SocketListener {
        addr,
        stop,
        handle: Some(handle),
    })
}

/// Sends frames over one cached connection per peer. Ordering per peer is
/// preserved while a connection lives; a reconnect may reorder.
#[derive(Debug)]
pub struct SocketTransport {
    connections: HashMap<SocketAddr, TcpStream>,
    connect_timeout: Duration,
}

impl Default for SocketTransport {
    fn default() -> Self {
        SocketTransport {
            connections: HashMap::new(),
            connect_timeout: Duration::from_secs(1),
        }
    }
}

impl SocketTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn send(&mut self, address: SocketAddr, frame: &[u8]) -> io::Result<()> {
        for attempt in 0..2 {
            if !self.connections.contains_key(&address) {
                let stream = TcpStream::connect_timeout(&address, self.connect_timeout)?;
                stream.set_nodelay(true)?;
                self.connections.insert(address, stream);
            }
            let stream = self.connections.get_mut(&address).expect("inserted");
            match stream.write_all(frame).and_then(|_| stream.flush()) {
                Ok(()) => return Ok(()),
                Err(e) => {
                    self.connections.remove(&address);
                    if attempt == 1 {
                        return Err(e);
                    }
                }
            }
        }
        unreachable!("loop returns on second attempt")
    }
}

impl Transport for SocketTransport {
    fn offer(
        &mut self,
        _from: &str,
        to: &str,
        address: SocketAddr,
        _link: &LinkConfig,
        envelope: &Envelope,
    ) -> PeerDelivery {
        let started = Instant::now();
        let result = self.send(address, &encode_frame(envelope));
        if let Err(e) = &result {
            log::warn!("send to {to} at {address} failed: {e}");
        }
        PeerDelivery {
            peer: to.to_string(),
            delivered: result.is_ok(),
            latency_ms: result.is_ok().then(|| started.elapsed().as_secs_f64() * 1000.0),
            deliver_at_ms: None,
        }
    }
}
