use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::oneshot;
use tower_http::cors::CorsLayer;

use super::{ExperimentConfig, ExperimentError};
use crate::backend::{Backend, GroundTruth};
use crate::network::{
    deliver_simulated, listen, AddressPool, Envelope, MessageType, SocketListener, SocketTransport, Topology, Transport,
};
use crate::node::{Alert, Observation, RsuNode, Snapshot, StateQuery};
use crate::segments::{parse_manifest, split_segment, Segment};

enum Command {
    Process(Segment, oneshot::Sender<Result<Vec<Alert>, String>>),
    Observe(Observation, oneshot::Sender<Result<String, String>>),
    Query(StateQuery, oneshot::Sender<Snapshot>),
    Message(Vec<u8>),
    Shutdown,
}

/// Client side of one running node's event loop.
#[derive(Clone)]
pub struct NodeHandle {
    id: String,
    tx: mpsc::Sender<Command>,
    http: SocketAddr,
    peer: SocketAddr,
    truth: GroundTruth,
}

impl std::fmt::Debug for NodeHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeHandle")
            .field("id", &self.id)
            .field("http", &self.http)
            .field("peer", &self.peer)
            .finish()
    }
}

impl NodeHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http
    }

    pub fn peer_addr(&self) -> SocketAddr {
        self.peer
    }

    fn send<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Command,
    ) -> Result<oneshot::Receiver<T>, ExperimentError> {
        let (tx, rx) = oneshot::channel();
        self.tx
            .send(make(tx))
            .map_err(|_| ExperimentError::NodeGone(self.id.clone()))?;
        Ok(rx)
    }

    fn gone(&self) -> ExperimentError {
        ExperimentError::NodeGone(self.id.clone())
    }

    fn submit(&self, segment: Segment) -> Result<oneshot::Receiver<Result<Vec<Alert>, String>>, ExperimentError> {
        self.truth.insert_segment(&segment);
        self.send(|tx| Command::Process(segment, tx))
    }

    /// Processes a segment part and returns the alerts it raised. Blocking.
    pub fn process(&self, segment: Segment) -> Result<Vec<Alert>, ExperimentError> {
        self.submit(segment)?
            .blocking_recv()
            .map_err(|_| self.gone())?
            .map_err(ExperimentError::Config)
    }

    /// Queues an observation and returns its id. Blocking.
    pub fn observe(&self, observation: Observation) -> Result<String, ExperimentError> {
        self.send(|tx| Command::Observe(observation, tx))?
            .blocking_recv()
            .map_err(|_| self.gone())?
            .map_err(ExperimentError::Config)
    }

    /// Blocking snapshot query.
    pub fn query(&self, kind: StateQuery) -> Result<Snapshot, ExperimentError> {
        self.send(|tx| Command::Query(kind, tx))?
            .blocking_recv()
            .map_err(|_| self.gone())
    }
}

/// A queued outgoing envelope, released once its link delay has passed.
struct Outgoing {
    at: Instant,
    order: u64,
    peer: String,
    addr: SocketAddr,
    envelope: Envelope,
}

impl PartialEq for Outgoing {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}

impl Eq for Outgoing {}

impl PartialOrd for Outgoing {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Outgoing {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

/// Sends a node's broadcasts over TCP after the simulated link delay.
/// Deliveries to one peer keep their order.
fn outbox_loop(origin: String, topology: Arc<Topology>, rx: mpsc::Receiver<Envelope>) {
    let mut transport = SocketTransport::new();
    let mut queue: BinaryHeap<Reverse<Outgoing>> = BinaryHeap::new();
    let mut tails: HashMap<String, Instant> = HashMap::new();
    let mut order = 0u64;
    loop {
        let wait = queue.peek().map_or(Duration::from_secs(3600), |o| {
            o.0.at.saturating_duration_since(Instant::now())
        });
        match rx.recv_timeout(wait) {
            Ok(envelope) => {
                let now = Instant::now();
                for (peer, addr) in topology.peers(&origin) {
                    let link = topology.link(&origin, peer);
                    let outcome = deliver_simulated(link, &envelope, peer);
                    if !outcome.delivered {
                        continue;
                    }
                    let mut at = now + Duration::from_millis(outcome.latency_ms);
                    if let Some(&tail) = tails.get(peer) {
                        at = at.max(tail);
                    }
                    tails.insert(peer.to_string(), at);
                    order += 1;
                    queue.push(Reverse(Outgoing {
                        at,
                        order,
                        peer: peer.to_string(),
                        addr,
                        envelope: envelope.clone(),
                    }));
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => return,
        }
        let now = Instant::now();
        while queue.peek().is_some_and(|o| o.0.at <= now) {
            let Reverse(o) = queue.pop().expect("peeked");
            let link = topology.link(&origin, &o.peer);
            transport.offer(&origin, &o.peer, o.addr, link, &o.envelope);
        }
    }
}

fn node_loop(
    mut node: RsuNode,
    mut backend: Box<dyn Backend>,
    rx: mpsc::Receiver<Command>,
    outbox: mpsc::Sender<Envelope>,
    started: Instant,
) {
    let now = || started.elapsed().as_millis() as u64;
    let up = node.seal(MessageType::Status, serde_json::json!({ "state": "up" }), now());
    let _ = outbox.send(up);
    while let Ok(cmd) = rx.recv() {
        match cmd {
            Command::Process(segment, reply) => {
                let t = now();
                let result = node.process_segment(&segment, &mut *backend, t);
                if let Ok(alerts) = &result {
                    for alert in alerts {
                        let env = node.seal(MessageType::Alert, alert, t);
                        let _ = outbox.send(env);
                    }
                }
                let _ = reply.send(result.map_err(|e| e.to_string()));
            }
            Command::Observe(mut observation, reply) => {
                if observation.received_at == 0 {
                    observation.received_at = now();
                }
                let _ = reply.send(node.accept_observation(observation).map_err(|e| e.to_string()));
            }
            Command::Query(kind, reply) => {
                let _ = reply.send(node.query_state(kind));
            }
            Command::Message(bytes) => {
                node.handle_raw(&bytes);
            }
            Command::Shutdown => break,
        }
    }
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct StateParams {
    kind: Option<String>,
}

async fn get_state(State(node): State<NodeHandle>, Query(params): Query<StateParams>) -> Response {
    let kind = match params.kind.as_deref().unwrap_or("latest").parse::<StateQuery>() {
        Ok(k) => k,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let rx = match node.send(|tx| Command::Query(kind, tx)) {
        Ok(rx) => rx,
        Err(e) => return error_response(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    };
    match rx.await {
        Ok(snapshot) => Json(snapshot).into_response(),
        Err(_) => error_response(StatusCode::SERVICE_UNAVAILABLE, node.gone().to_string()),
    }
}

async fn post_observe(State(node): State<NodeHandle>, Json(observation): Json<Observation>) -> Response {
    let rx = match node.send(|tx| Command::Observe(observation, tx)) {
        Ok(rx) => rx,
        Err(e) => return error_response(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    };
    match rx.await {
        Ok(Ok(id)) => Json(serde_json::json!({ "observation_id": id })).into_response(),
        Ok(Err(e)) => error_response(StatusCode::BAD_REQUEST, e),
        Err(_) => error_response(StatusCode::SERVICE_UNAVAILABLE, node.gone().to_string()),
    }
}

/// Body: manifest lines. Every segment is processed by this node.
async fn post_ingest(State(node): State<NodeHandle>, body: String) -> Response {
    let segments = match parse_manifest(&body) {
        Ok(s) => s,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let mut raised = Vec::new();
    for segment in segments {
        let rx = match node.submit(segment) {
            Ok(rx) => rx,
            Err(e) => return error_response(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        };
        match rx.await {
            Ok(Ok(alerts)) => raised.extend(alerts),
            Ok(Err(e)) => return error_response(StatusCode::BAD_REQUEST, e),
            Err(_) => return error_response(StatusCode::SERVICE_UNAVAILABLE, node.gone().to_string()),
        }
    }
    Json(serde_json::json!({ "alerts": raised })).into_response()
}

fn router(node: NodeHandle) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/observe", post(post_observe))
        .route("/ingest", post(post_ingest))
        .layer(CorsLayer::permissive())
        .with_state(node)
}

fn port_addr(bind: &str, base: u16, i: usize) -> Result<SocketAddr, ExperimentError> {
    let port = if base == 0 {
        0
    } else {
        u16::try_from(i)
            .ok()
            .and_then(|i| base.checked_add(i))
            .ok_or_else(|| ExperimentError::Config(format!("port {base} + {i} out of range")))?
    };
    format!("{bind}:{port}")
        .parse()
        .map_err(|e| ExperimentError::Config(format!("bind address {bind:?}: {e}")))
}

/// Live RSU nodes, each with its own event loop thread, peer socket and HTTP endpoint.
pub struct Cluster {
    runtime: Option<tokio::runtime::Runtime>,
    handles: Vec<NodeHandle>,
    threads: Vec<JoinHandle<()>>,
    listeners: Vec<SocketListener>,
    http_stop: Vec<oneshot::Sender<()>>,
}

impl Cluster {
    pub fn start(config: &ExperimentConfig) -> Result<Cluster, ExperimentError> {
        config.validate()?;
        let taxonomy = Arc::new(config.load_taxonomy()?);
        let segments = config.load_segments(&taxonomy)?;
        let ids = config.node_ids();
        let truth = GroundTruth::new();
        let backend_config = config.effective_backend();

        let mut commands = Vec::new();
        let mut listeners = Vec::new();
        for i in 0..ids.len() {
            let (tx, rx) = mpsc::channel::<Command>();
            let addr = port_addr(&config.serve.bind, config.serve.peer_base_port, i)?;
            let sink = tx.clone();
            let listener = listen(addr, move |bytes| {
                let _ = sink.send(Command::Message(bytes));
            })
            .map_err(|source| ExperimentError::Bind {
                addr: addr.to_string(),
                source,
            })?;
            listeners.push(listener);
            commands.push((tx, rx));
        }

        let pool = AddressPool::Explicit {
            addresses: listeners.iter().map(SocketListener::local_addr).collect(),
        };
        let mut topology = Topology::new(pool, config.effective_link())?;
        for id in &ids {
            topology.register_node(id)?;
        }
        let topology = Arc::new(topology);

        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| ExperimentError::Config(format!("starting runtime: {e}")))?;

        let started = Instant::now();
        let mut handles = Vec::new();
        let mut threads = Vec::new();
        let mut http_stop = Vec::new();
        for (i, (id, (tx, rx))) in ids.iter().zip(commands).enumerate() {
            let node = RsuNode::new(id.clone(), taxonomy.clone(), config.node_config(true))?;
            let backend = backend_config.build(taxonomy.clone(), truth.clone())?;

            let http_addr = port_addr(&config.serve.bind, config.serve.http_base_port, i)?;
            let std_listener = std::net::TcpListener::bind(http_addr).map_err(|source| ExperimentError::Bind {
                addr: http_addr.to_string(),
                source,
            })?;
            let bind_err = |source| ExperimentError::Bind {
                addr: http_addr.to_string(),
                source,
            };
            std_listener.set_nonblocking(true).map_err(bind_err)?;
            let http = std_listener.local_addr().map_err(bind_err)?;

            let handle = NodeHandle {
                id: id.clone(),
                tx,
                http,
                peer: listeners[i].local_addr(),
                truth: truth.clone(),
            };

            let (out_tx, out_rx) = mpsc::channel();
            let origin = id.clone();
            let topo = topology.clone();
            threads.push(
                std::thread::Builder::new()
                    .name(format!("{id}-outbox"))
                    .spawn(move || outbox_loop(origin, topo, out_rx))
                    .expect("spawn outbox"),
            );
            threads.push(
                std::thread::Builder::new()
                    .name(id.clone())
                    .spawn(move || node_loop(node, backend, rx, out_tx, started))
                    .expect("spawn node"),
            );

            let (stop_tx, stop_rx) = oneshot::channel::<()>();
            let app = router(handle.clone());
            let listener = {
                let _guard = runtime.enter();
                tokio::net::TcpListener::from_std(std_listener).map_err(bind_err)?
            };
            runtime.spawn(async move {
                let served = axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = stop_rx.await;
                    })
                    .await;
                if let Err(e) = served {
                    log::error!("http server stopped: {e}");
                }
            });
            http_stop.push(stop_tx);
            log::info!("{id}: http {http}, peers {}", handle.peer);
            handles.push(handle);
        }

        let cluster = Cluster {
            runtime: Some(runtime),
            handles,
            threads,
            listeners,
            http_stop,
        };
        if config.serve.replay {
            for segment in &segments {
                cluster.dispatch(segment)?;
            }
        }
        Ok(cluster)
    }

    pub fn nodes(&self) -> &[NodeHandle] {
        &self.handles
    }

    pub fn node(&self, id: &str) -> Option<&NodeHandle> {
        self.handles.iter().find(|h| h.id == id)
    }

    /// Splits a clip across the nodes in order, lets them process their
    /// parts concurrently and returns every alert raised.
    pub fn dispatch(&self, segment: &Segment) -> Result<Vec<Alert>, ExperimentError> {
        let parts = split_segment(segment, self.handles.len()).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let pending = self
            .handles
            .iter()
            .zip(parts)
            .map(|(h, part)| h.submit(part).map(|rx| (h, rx)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut alerts = Vec::new();
        for (h, rx) in pending {
            alerts.extend(
                rx.blocking_recv()
                    .map_err(|_| h.gone())?
                    .map_err(ExperimentError::Config)?,
            );
        }
        Ok(alerts)
    }

    /// Blocks until Ctrl-C.
    pub fn wait_for_interrupt(&self) {
        if let Some(rt) = &self.runtime {
            if let Err(e) = rt.block_on(tokio::signal::ctrl_c()) {
                log::error!("waiting for interrupt: {e}");
            }
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for stop in self.http_stop.drain(..) {
            let _ = stop.send(());
        }
        for h in &self.handles {
            let _ = h.tx.send(Command::Shutdown);
        }
        for l in self.listeners.drain(..) {
            l.shutdown();
        }
        // listener sinks held command senders; drop ours so loops can end
        self.handles.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_secs(2));
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts a cluster and runs it until interrupted.
pub fn serve(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    let cluster = Cluster::start(config)?;
    for h in cluster.nodes() {
        println!("{} http://{} peer {}", h.id(), h.http_addr(), h.peer_addr());
    }
    cluster.wait_for_interrupt();
    cluster.shutdown();
    Ok(())
}
