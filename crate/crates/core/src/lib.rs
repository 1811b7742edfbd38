//! Decode-and-forward (DF) rate computation and route selection on the
//! Gaussian multiple-relay channel.
//!
//! The crate models a D-node network under the standard path loss model,
//! evaluates the DF rate supported by a route (max-min power allocation over
//! sub-codeword splits, or the independent-codeword closed form), and finds
//! rate-maximizing routes four ways:
//!
//! - brute force over every ordered relay selection,
//! - the nearest neighbor algorithm (NNA),
//! - the nearest neighbor set algorithm (NNSA),
//! - the maximum sum-of-received-power heuristic (MSPA).
//!
//! [`experiments`] adds a seeded Monte Carlo harness that measures MSPA
//! solution quality and NNSA candidate-set sizes over random networks, with
//! CSV/JSON output for downstream analysis.

pub mod experiments;
pub mod network;
pub mod rate;
pub mod routing;

pub use network::{GainMatrix, Network, NetworkError, NodeId};
pub use rate::{
    df_rate, grid_oracle_df_rate, min_reception_rate, reception_rate, three_node_closed_form,
    OptimizerConfig, OptimizerDiagnostics, PowerSplit, RateError, RateMode, RateResult, Route,
};
pub use routing::{
    brute_force_optimal, enumerate_routes, mspa, nearest_neighbor, nearest_neighbor_set, nna,
    nnsa_candidates, nnsa_optimal, pi_size, BruteForceResult, CandidateSet, NearestNeighborSet,
    NnaOutcome, NnsaResult, PartialRoute, RoutingError,
};
