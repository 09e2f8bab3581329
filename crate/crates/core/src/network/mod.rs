//! Message transport between RSUs.
//!
//! Every RSU is registered in a [`Topology`] that hands out addresses from a
//! pool and implies a full mesh. [`broadcast`] offers an [`Envelope`] to each
//! peer through a [`Transport`]: either the virtual-time [`SimTransport`],
//! whose links drop and delay messages from a seeded generator, or the real
//! length-prefixed TCP [`SocketTransport`].

mod envelope;
mod sim;
mod socket;
mod topology;

use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use envelope::{Envelope, MessageType, Sequencer};
pub use sim::{deliver_simulated, Delivery, LatencyModel, LinkConfig, LinkOutcome, SimTransport};
pub use socket::{
    decode_frame, encode_frame, listen, read_frame, write_frame, SocketListener, SocketTransport, MAX_FRAME_LEN,
};
pub use topology::{AddressPool, Topology};

pub type RsuId = String;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("node {0:?} is already registered")]
    DuplicateNode(RsuId),
    #[error("node {0:?} is not registered")]
    UnknownNode(RsuId),
    #[error("address pool exhausted after {0} addresses")]
    PoolExhausted(usize),
    #[error("invalid link configuration: {0}")]
    InvalidLink(String),
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of offering one envelope to one peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerDelivery {
    pub peer: RsuId,
    pub delivered: bool,
    pub latency_ms: Option<f64>,
    /// Delivery instant on the transport's clock, when delivered.
    pub deliver_at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub origin: RsuId,
    pub seq: u64,
    pub peers: Vec<PeerDelivery>,
}

impl DeliveryReport {
    pub fn delivered(&self) -> usize {
        self.peers.iter().filter(|p| p.delivered).count()
    }

    pub fn dropped(&self) -> usize {
        self.peers.len() - self.delivered()
    }
}

pub trait Transport {
    fn offer(
        &mut self,
        from: &str,
        to: &str,
        address: SocketAddr,
        link: &LinkConfig,
        envelope: &Envelope,
    ) -> PeerDelivery;
}

/// Offers `envelope` to every registered node other than its origin, in id order.
pub fn broadcast(
    topology: &Topology,
    envelope: &Envelope,
    transport: &mut dyn Transport,
) -> Result<DeliveryReport, NetworkError> {
    if topology.address(&envelope.origin).is_none() {
        return Err(NetworkError::UnknownNode(envelope.origin.clone()));
    }
    let peers = topology
        .peers(&envelope.origin)
        .map(|(peer, addr)| {
            let link = topology.link(&envelope.origin, peer);
            transport.offer(&envelope.origin, peer, addr, link, envelope)
        })
        .collect();
    Ok(DeliveryReport {
        origin: envelope.origin.clone(),
        seq: envelope.seq,
        peers,
    })
}
