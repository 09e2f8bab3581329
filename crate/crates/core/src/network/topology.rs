use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};

use serde::{Deserialize, Serialize};

use super::{LinkConfig, NetworkError, RsuId};

/// Source of node addresses handed out at registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AddressPool {
    /// `base`, `base + 1`, ... on a fixed port.
    Subnet { base: Ipv4Addr, size: usize, port: u16 },
    /// 127.0.0.1 on `base_port`, `base_port + 1`, ...
    Loopback { base_port: u16, size: usize },
    /// A fixed list, consumed in order.
    Explicit { addresses: Vec<SocketAddr> },
}

impl Default for AddressPool {
    fn default() -> Self {
        AddressPool::Subnet {
            base: Ipv4Addr::new(10, 45, 0, 2),
            size: 250,
            port: 7400,
        }
    }
}

impl AddressPool {
    pub fn capacity(&self) -> usize {
        match self {
            AddressPool::Subnet { size, .. } | AddressPool::Loopback { size, .. } => *size,
            AddressPool::Explicit { addresses } => addresses.len(),
        }
    }

    fn nth(&self, n: usize) -> Option<SocketAddr> {
        if n >= self.capacity() {
            return None;
        }
        match self {
            AddressPool::Subnet { base, port, .. } => {
                let ip = u32::from(*base).checked_add(u32::try_from(n).ok()?)?;
                Some(SocketAddr::new(IpAddr::V4(Ipv4Addr::from(ip)), *port))
            }
            AddressPool::Loopback { base_port, .. } => {
                let port = base_port.checked_add(u16::try_from(n).ok()?)?;
                Some(SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), port))
            }
            AddressPool::Explicit { addresses } => addresses.get(n).copied(),
        }
    }
}

/// Registered nodes and the links between them. Every pair of nodes is
/// connected; pairs without an override use the default link.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: BTreeMap<RsuId, SocketAddr>,
    default_link: LinkConfig,
    overrides: BTreeMap<(RsuId, RsuId), LinkConfig>,
    pool: AddressPool,
    allocated: usize,
}

impl Topology {
    pub fn new(pool: AddressPool, default_link: LinkConfig) -> Result<Self, NetworkError> {
        default_link.validate()?;
        Ok(Topology {
            nodes: BTreeMap::new(),
            default_link,
            overrides: BTreeMap::new(),
            pool,
            allocated: 0,
        })
    }

    /// Allocates the next free pool address for `rsu_id`.
    ///
    /// Announcing the newcomer to its peers is up to the caller, which owns
    /// the node's [`super::Sequencer`].
    pub fn register_node(&mut self, rsu_id: &str) -> Result<SocketAddr, NetworkError> {
        if self.nodes.contains_key(rsu_id) {
            return Err(NetworkError::DuplicateNode(rsu_id.to_string()));
        }
        loop {
            let addr = self
                .pool
                .nth(self.allocated)
                .ok_or(NetworkError::PoolExhausted(self.pool.capacity()))?;
            self.allocated += 1;
            // explicit pools may repeat an address; skip ones already taken
            if !self.nodes.values().any(|a| *a == addr) {
                self.nodes.insert(rsu_id.to_string(), addr);
                return Ok(addr);
            }
        }
    }

    pub fn set_link(&mut self, a: &str, b: &str, link: LinkConfig) -> Result<(), NetworkError> {
        link.validate()?;
        self.overrides.insert(Self::pair(a, b), link);
        Ok(())
    }

    fn pair(a: &str, b: &str) -> (RsuId, RsuId) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn link(&self, a: &str, b: &str) -> &LinkConfig {
        self.overrides.get(&Self::pair(a, b)).unwrap_or(&self.default_link)
    }

    pub fn address(&self, rsu_id: &str) -> Option<SocketAddr> {
        self.nodes.get(rsu_id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, SocketAddr)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Every node except `origin`, in id order.
    pub fn peers<'a>(&'a self, origin: &'a str) -> impl Iterator<Item = (&'a str, SocketAddr)> + 'a {
        self.nodes().filter(move |(id, _)| *id != origin)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn three_registrations_get_distinct_addresses() {
        let mut t = Topology::new(AddressPool::default(), LinkConfig::default()).unwrap();
        let addrs: HashSet<_> = ["rsu-1", "rsu-2", "rsu-3"]
            .iter()
            .map(|id| t.register_node(id).unwrap())
            .collect();
        assert_eq!(addrs.len(), 3);
        assert_eq!(t.len(), 3);
        assert_eq!(t.address("rsu-1").unwrap().to_string(), "10.45.0.2:7400");
        let peers: Vec<_> = t.peers("rsu-2").map(|(id, _)| id).collect();
        assert_eq!(peers, ["rsu-1", "rsu-3"]);
    }

    #[test]
    fn duplicate_registration() {
        let mut t = Topology::new(AddressPool::default(), LinkConfig::default()).unwrap();
        t.register_node("a").unwrap();
        assert!(matches!(t.register_node("a"), Err(NetworkError::DuplicateNode(_))));
    }

    #[test]
    fn pool_exhaustion() {
        let pool = AddressPool::Loopback {
            base_port: 9000,
            size: 1,
        };
        let mut t = Topology::new(pool, LinkConfig::default()).unwrap();
        t.register_node("a").unwrap();
        assert!(matches!(t.register_node("b"), Err(NetworkError::PoolExhausted(1))));
    }

    #[test]
    fn link_overrides_are_symmetric() {
        let mut t = Topology::new(AddressPool::default(), LinkConfig::fixed(20)).unwrap();
        t.set_link("b", "a", LinkConfig::fixed(5)).unwrap();
        assert_eq!(t.link("a", "b"), &LinkConfig::fixed(5));
        assert_eq!(t.link("a", "c"), &LinkConfig::fixed(20));
    }
}
