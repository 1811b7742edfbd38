//! Network model: node geometry, path loss, and pairwise received powers.
//!
//! A [`Network`] holds everything the rate machinery needs: pairwise
//! distances (either derived from 2-D positions or supplied directly for
//! abstract topologies), per-node transmit powers and noise variances, and
//! the path loss parameters kappa and eta. The received power at node `t`
//! from node `i` is `kappa * d_it^(-eta) * P_i`, precomputed once into a
//! [`GainMatrix`].
//!
//! All powers and noises are linear-scale; dB conversion is presentation
//! only and lives in the CLI.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based node identifier. Node 1 is the source; node D is the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(usize);

impl NodeId {
    /// Creates a node id; indices start at 1.
    pub fn new(index: usize) -> Option<Self> {
        (index >= 1).then_some(Self(index))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based index for matrix lookups.
    pub(crate) fn idx0(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    /// Two nodes share a position, which would make the received power infinite.
    #[error("nodes {0} and {1} are at identical positions (zero distance)")]
    CoincidentNodes(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("distance matrix mismatch: {0}")]
    DistanceMismatch(String),
    #[error("malformed network file: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Immutable D-node Gaussian multiple-relay network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    positions: Option<Vec<(f64, f64)>>,
    /// Row-major D x D symmetric distance matrix with zero diagonal.
    distances: Vec<f64>,
    powers: Vec<f64>,
    noises: Vec<f64>,
    kappa: f64,
    eta: f64,
}

impl Network {
    /// Builds a network from 2-D node positions in meters.
    pub fn from_positions(
        positions: &[(f64, f64)],
        powers: &[f64],
        noises: &[f64],
        kappa: f64,
        eta: f64,
    ) -> Result<Self, NetworkError> {
        let d = positions.len();
        for (k, &(x, y)) in positions.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(NetworkError::InvalidParameter(format!(
                    "position of node {} is not finite",
                    k + 1
                )));
            }
        }
        let mut distances = vec![0.0; d * d];
        for i in 0..d {
            for t in (i + 1)..d {
                let dx = positions[i].0 - positions[t].0;
                let dy = positions[i].1 - positions[t].1;
                let dist = dx.hypot(dy);
                if dist == 0.0 {
                    return Err(NetworkError::CoincidentNodes(i + 1, t + 1));
                }
                distances[i * d + t] = dist;
                distances[t * d + i] = dist;
            }
        }
        let net = Self::from_parts(
            d,
            Some(positions.to_vec()),
            distances,
            powers,
            noises,
            kappa,
            eta,
        )?;
        Ok(net)
    }

    /// Builds a network from an explicit distance matrix (row-major D x D),
    /// for abstract topologies without coordinates.
    pub fn from_distances(
        distances: Vec<f64>,
        powers: &[f64],
        noises: &[f64],
        kappa: f64,
        eta: f64,
    ) -> Result<Self, NetworkError> {
        let d = powers.len();
        if distances.len() != d * d {
            return Err(NetworkError::InvalidParameter(format!(
                "distance matrix has {} entries, expected {}x{}",
                distances.len(),
                d,
                d
            )));
        }
        for i in 0..d {
            if distances[i * d + i] != 0.0 {
                return Err(NetworkError::InvalidParameter(format!(
                    "distance diagonal entry ({},{}) must be zero",
                    i + 1,
                    i + 1
                )));
            }
            for t in (i + 1)..d {
                let a = distances[i * d + t];
                let b = distances[t * d + i];
                if !a.is_finite() || a <= 0.0 {
                    if a == 0.0 {
                        return Err(NetworkError::CoincidentNodes(i + 1, t + 1));
                    }
                    return Err(NetworkError::InvalidParameter(format!(
                        "distance ({},{}) must be finite and positive",
                        i + 1,
                        t + 1
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(NetworkError::InvalidParameter(format!(
                        "distance matrix is not symmetric at ({},{})",
                        i + 1,
                        t + 1
                    )));
                }
            }
        }
        Self::from_parts(d, None, distances, powers, noises, kappa, eta)
    }

    fn from_parts(
        d: usize,
        positions: Option<Vec<(f64, f64)>>,
        distances: Vec<f64>,
        powers: &[f64],
        noises: &[f64],
        kappa: f64,
        eta: f64,
    ) -> Result<Self, NetworkError> {
        if d < 2 {
            return Err(NetworkError::InvalidParameter(format!(
                "need at least 2 nodes, got {d}"
            )));
        }
        if powers.len() != d || noises.len() != d {
            return Err(NetworkError::InvalidParameter(format!(
                "positions, powers and noises must have equal length (got {}, {}, {})",
                d,
                powers.len(),
                noises.len()
            )));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(NetworkError::InvalidParameter("kappa must be positive".into()));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(NetworkError::InvalidParameter("eta must be positive".into()));
        }
        for (k, &p) in powers.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(NetworkError::InvalidParameter(format!(
                    "power of node {} must be finite and non-negative",
                    k + 1
                )));
            }
        }
        for (k, &n) in noises.iter().enumerate() {
            if !(n.is_finite() && n > 0.0) {
                return Err(NetworkError::InvalidParameter(format!(
                    "noise variance of node {} must be finite and positive",
                    k + 1
                )));
            }
        }
        Ok(Self {
            node_count: d,
            positions,
            distances,
            powers: powers.to_vec(),
            noises: noises.to_vec(),
            kappa,
            eta,
        })
    }

    /// Samples a network with `d` nodes placed independently and uniformly in
    /// a `side x side` square; source/relay/destination roles are assigned by
    /// a uniformly random permutation. Deterministic for a fixed seed.
    ///
    /// Returns the network together with the number of resamples forced by
    /// coincident positions (measure-zero; almost always 0).
    pub fn random(
        d: usize,
        side: f64,
        kappa: f64,
        eta: f64,
        power: f64,
        noise: f64,
        seed: u64,
    ) -> Result<(Self, u32), NetworkError> {
        if !(side.is_finite() && side > 0.0) {
            return Err(NetworkError::InvalidParameter("side length must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let powers = vec![power; d];
        let noises = vec![noise; d];
        let mut resamples = 0u32;
        loop {
            let mut points: Vec<(f64, f64)> = (0..d)
                .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
                .collect();
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(&mut rng);
            let assigned: Vec<(f64, f64)> = order.iter().map(|&k| points[k]).collect();
            points.clear();
            match Self::from_positions(&assigned, &powers, &noises, kappa, eta) {
                Ok(net) => return Ok((net, resamples)),
                Err(NetworkError::CoincidentNodes(..)) => resamples += 1,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> NodeId {
        NodeId(1)
    }

    pub fn destination(&self) -> NodeId {
        NodeId(self.node_count)
    }

    /// All node ids 1..=D in order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (1..=self.node_count).map(NodeId)
    }

    pub fn distance(&self, i: NodeId, t: NodeId) -> f64 {
        self.distances[i.idx0() * self.node_count + t.idx0()]
    }

    pub fn power(&self, i: NodeId) -> f64 {
        self.powers[i.idx0()]
    }

    pub fn noise(&self, t: NodeId) -> f64 {
        self.noises[t.idx0()]
    }

    pub fn noises(&self) -> &[f64] {
        &self.noises
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn positions(&self) -> Option<&[(f64, f64)]> {
        self.positions.as_deref()
    }

    /// Non-fatal validation warnings (e.g. eta below the free-space exponent).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.eta < 2.0 {
            out.push(format!(
                "path loss exponent eta={} is below 2 (free-space value); \
                 the model accepts it but results may not be physical",
                self.eta
            ));
        }
        out
    }

    /// Precomputes the received-power matrix `kappa * d_it^(-eta) * P_i`.
    pub fn gain_matrix(&self) -> GainMatrix {
        let d = self.node_count;
        let mut gains = vec![0.0; d * d];
        for i in 0..d {
            for t in 0..d {
                if i != t {
                    gains[i * d + t] =
                        self.kappa * self.distances[i * d + t].powf(-self.eta) * self.powers[i];
                }
            }
        }
        GainMatrix { node_count: d, gains }
    }
}

/// Received powers `P_it` between every ordered node pair; diagonal entries
/// are stored as zero and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    node_count: usize,
    gains: Vec<f64>,
}

impl GainMatrix {
    /// Received power at `t` from transmitter `i`.
    pub fn gain(&self, i: NodeId, t: NodeId) -> f64 {
        self.gains[i.idx0() * self.node_count + t.idx0()]
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

// --- JSON file format -------------------------------------------------------
//
// {"kappa": f, "eta": f, "nodes": [{"id": 1, "x": f, "y": f, "power": f,
//  "noise": f}, ...]} with ids 1..D dense. An explicit "distances" field
// (row-major D x D) replaces coordinates for abstract topologies; when both
// are present they must agree to 1e-12 relative.

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    kappa: f64,
    eta: f64,
    nodes: Vec<NodeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distances: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct NodeEntry {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    power: f64,
    noise: f64,
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let d = file.nodes.len();
        for (k, node) in file.nodes.iter().enumerate() {
            if node.id != k + 1 {
                return Err(NetworkError::Schema(format!(
                    "node ids must be dense 1..{} in order; entry {} has id {}",
                    d,
                    k + 1,
                    node.id
                )));
            }
        }
        let powers: Vec<f64> = file.nodes.iter().map(|n| n.power).collect();
        let noises: Vec<f64> = file.nodes.iter().map(|n| n.noise).collect();
        let has_coords = file.nodes.iter().all(|n| n.x.is_some() && n.y.is_some());
        let any_coords = file.nodes.iter().any(|n| n.x.is_some() || n.y.is_some());
        if any_coords && !has_coords {
            return Err(NetworkError::Schema(
                "either every node carries x/y coordinates or none does".into(),
            ));
        }
        match (has_coords, file.distances) {
            (true, maybe_dist) => {
                let positions: Vec<(f64, f64)> = file
                    .nodes
                    .iter()
                    .map(|n| (n.x.unwrap(), n.y.unwrap()))
                    .collect();
                let net =
                    Self::from_positions(&positions, &powers, &noises, file.kappa, file.eta)?;
                if let Some(dist) = maybe_dist {
                    if dist.len() != d * d {
                        return Err(NetworkError::Schema(format!(
                            "distances array has {} entries, expected {}",
                            dist.len(),
                            d * d
                        )));
                    }
                    for i in 0..d {
                        for t in 0..d {
                            let given = dist[i * d + t];
                            let computed = net.distances[i * d + t];
                            if (given - computed).abs()
                                > 1e-12 * computed.abs().max(given.abs())
                            {
                                return Err(NetworkError::DistanceMismatch(format!(
                                    "entry ({},{}): given {} vs computed {}",
                                    i + 1,
                                    t + 1,
                                    given,
                                    computed
                                )));
                            }
                        }
                    }
                }
                Ok(net)
            }
            (false, Some(dist)) => Self::from_distances(dist, &powers, &noises, file.kappa, file.eta),
            (false, None) => Err(NetworkError::Schema(
                "network file needs node coordinates or a distances matrix".into(),
            )),
        }
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Serializes to the JSON file format. Floating values round-trip
    /// bit-exactly (serde_json emits the shortest decimal that reparses to
    /// the same f64).
    pub fn to_json(&self) -> String {
        let d = self.node_count;
        let nodes: Vec<NodeEntry> = (0..d)
            .map(|k| NodeEntry {
                id: k + 1,
                x: self.positions.as_ref().map(|p| p[k].0),
                y: self.positions.as_ref().map(|p| p[k].1),
                power: self.powers[k],
                noise: self.noises[k],
            })
            .collect();
        let file = NetworkFile {
            kappa: self.kappa,
            eta: self.eta,
            nodes,
            distances: if self.positions.is_none() {
                Some(self.distances.clone())
            } else {
                None
            },
        };
        serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
    }
}

/// The 4-node line network at x = 0, 1, 2, 3 with kappa=1, eta=2, unit powers
/// and noises; used as a known-answer fixture throughout the test suite.
#[cfg(test)]
pub(crate) fn canonical_line_network() -> Network {
    Network::from_positions(
        &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
        &[1.0; 4],
        &[1.0; 4],
        1.0,
        2.0,
    )
    .expect("canonical network is valid")
}
