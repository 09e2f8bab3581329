use serde::{Deserialize, Serialize};

use super::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageType {
    Alert,
    Status,
    ObservationRelay,
}

/// Wire envelope. Field names are part of the socket protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub msg_type: MessageType,
    pub origin: String,
    pub seq: u64,
    pub payload: serde_json::Value,
    pub sent_at: u64,
}

impl Envelope {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelope serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Envelope, NetworkError> {
        serde_json::from_slice(bytes).map_err(|e| NetworkError::Malformed(e.to_string()))
    }

    pub fn payload_as<T: serde::de::DeserializeOwned>(&self) -> Result<T, NetworkError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| NetworkError::Malformed(e.to_string()))
    }
}

/// Stamps outgoing envelopes of one origin with strictly increasing `seq`.
#[derive(Debug, Clone)]
pub struct Sequencer {
    origin: String,
    next: u64,
}

impl Sequencer {
    pub fn new(origin: impl Into<String>) -> Self {
        Sequencer {
            origin: origin.into(),
            next: 0,
        }
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn seal(&mut self, msg_type: MessageType, payload: impl Serialize, sent_at: u64) -> Envelope {
        let seq = self.next;
        self.next += 1;
        Envelope {
            msg_type,
            origin: self.origin.clone(),
            seq,
            payload: serde_json::to_value(payload).expect("payload serializes"),
            sent_at,
        }
    }
}
