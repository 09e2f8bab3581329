use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::net::SocketAddr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Envelope, NetworkError, PeerDelivery, RsuId, Transport};

/// One-way delay distribution in whole milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyModel {
    Fixed(u64),
    /// Uniform over `[lo, hi]` inclusive.
    Uniform(u64, u64),
}

impl LatencyModel {
    pub fn mean_ms(self) -> f64 {
        match self {
            LatencyModel::Fixed(ms) => ms as f64,
            LatencyModel::Uniform(lo, hi) => (lo + hi) as f64 / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub latency: LatencyModel,
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig::fixed(20)
    }
}

impl LinkConfig {
    pub fn fixed(ms: u64) -> Self {
        LinkConfig {
            latency: LatencyModel::Fixed(ms),
            drop_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if let LatencyModel::Uniform(lo, hi) = self.latency {
            if lo > hi {
                return Err(NetworkError::InvalidLink(format!(
                    "uniform latency [{lo}, {hi}] has lo > hi"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(NetworkError::InvalidLink(format!(
                "drop_rate {} outside [0, 1]",
                self.drop_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkOutcome {
    pub delivered: bool,
    pub latency_ms: u64,
}

fn mix(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h = (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Samples the link for one (envelope, receiver) pair. The outcome is a pure
/// function of the link seed, the envelope's origin and seq, and the receiver.
pub fn deliver_simulated(link: &LinkConfig, envelope: &Envelope, to: &str) -> LinkOutcome {
    let mut key = mix(
        0xcbf2_9ce4_8422_2325 ^ link.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        envelope.origin.as_bytes(),
    );
    key = mix(key, &[0xff]);
    key = mix(key, to.as_bytes());
    key = mix(key, &envelope.seq.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let delivered = rng.random::<f64>() >= link.drop_rate;
    let latency_ms = match link.latency {
        LatencyModel::Fixed(ms) => ms,
        LatencyModel::Uniform(lo, hi) => rng.random_range(lo..=hi),
    };
    LinkOutcome { delivered, latency_ms }
}

/// A message that reached its receiver on the virtual clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub to: RsuId,
    pub at_ms: u64,
    pub envelope: Envelope,
}

#[derive(Debug)]
struct Pending {
    at_ms: u64,
    order: u64,
    delivery: Delivery,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.at_ms, self.order) == (other.at_ms, other.order)
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_ms, self.order).cmp(&(other.at_ms, other.order))
    }
}

/// Discrete-event transport on a virtual millisecond clock.
///
/// Deliveries on one (origin, receiver) channel never overtake each other:
/// a message is delivered no earlier than the previous one on its channel.
#[derive(Debug, Default)]
pub struct SimTransport {
    now_ms: u64,
    order: u64,
    queue: BinaryHeap<Reverse<Pending>>,
    channel_tail: HashMap<(RsuId, RsuId), u64>,
}

impl SimTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_ms(&self) -> Option<u64> {
        self.queue.peek().map(|p| p.0.at_ms)
    }

    /// Moves the clock forward without delivering anything.
    pub fn set_now(&mut self, now_ms: u64) {
        self.now_ms = self.now_ms.max(now_ms);
    }

    /// Pops every delivery due at or before `t` in delivery order and sets the clock to `t`.
    pub fn advance_to(&mut self, t: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(Reverse(p)) = self.queue.peek() {
            if p.at_ms > t {
                break;
            }
            let Reverse(p) = self.queue.pop().expect("peeked");
            out.push(p.delivery);
        }
        self.set_now(t);
        out
    }

    /// Delivers everything still in flight.
    pub fn drain(&mut self) -> Vec<Delivery> {
        let until = self.queue.iter().map(|p| p.0.at_ms).max().unwrap_or(self.now_ms);
        self.advance_to(until)
    }
}

impl Transport for SimTransport {
    fn offer(
        &mut self,
        from: &str,
        to: &str,
        _address: SocketAddr,
        link: &LinkConfig,
        envelope: &Envelope,
    ) -> PeerDelivery {
        let outcome = deliver_simulated(link, envelope, to);
        if !outcome.delivered {
            return PeerDelivery {
                peer: to.to_string(),
                delivered: false,
                latency_ms: None,
                deliver_at_ms: None,
            };
        }
        let channel = (from.to_string(), to.to_string());
        let tail = self.channel_tail.get(&channel).copied().unwrap_or(0);
        let at_ms = (self.now_ms + outcome.latency_ms).max(tail);
        self.channel_tail.insert(channel, at_ms);
        self.order += 1;
        self.queue.push(Reverse(Pending {
            at_ms,
            order: self.order,
            delivery: Delivery {
                to: to.to_string(),
                at_ms,
                envelope: envelope.clone(),
            },
        }));
        PeerDelivery {
            peer: to.to_string(),
            delivered: true,
            latency_ms: Some((at_ms - self.now_ms) as f64),
            deliver_at_ms: Some(at_ms),
        }
    }
}
