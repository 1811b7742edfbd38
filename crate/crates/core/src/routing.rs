//! Route selection: full enumeration of the route space, brute-force optimal
//! search, the nearest neighbor algorithm (NNA), the nearest neighbor set
//! algorithm (NNSA), and the maximum sum-of-received-power heuristic (MSPA).
//!
//! The route space contains every ordered selection of relays between the
//! source and the destination, so its size grows factorially; NNSA prunes it
//! to the candidates reachable by always extending with a nearest-neighbor-set
//! member (which provably contains an optimal route), and MSPA collapses the
//! branching to a single greedy route.

use crate::network::{GainMatrix, Network, NodeId};
use crate::rate::{evaluate_sequence, OptimizerConfig, RateMode, Route};
use itertools::Itertools;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error(
        "route space for {node_count} nodes exceeds the {mode} search guard (D <= {guard}); \
         pass force to search anyway"
    )]
    SearchSpaceTooLarge { node_count: usize, guard: usize, mode: &'static str },
    #[error("NNSA candidate count exceeded the cap of {cap} ({generated} candidates generated)")]
    CandidateExplosion { cap: usize, generated: usize },
    #[error(transparent)]
    Rate(#[from] crate::rate::RateError),
}

/// A route under construction: starts at the source, all entries distinct,
/// the destination appears only as a final element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct PartialRoute {
    nodes: Vec<NodeId>,
}

impl PartialRoute {
    /// The one-node prefix `{1}`.
    pub fn source() -> Self {
        Self { nodes: vec![NodeId::new(1).unwrap()] }
    }

    /// Validates an explicit prefix against a `node_count`-node network.
    pub fn new(nodes: Vec<NodeId>, node_count: usize) -> Result<Self, RoutingError> {
        let invalid = |msg: String| RoutingError::Rate(crate::rate::RateError::InvalidRoute(msg));
        if nodes.is_empty() || nodes[0].get() != 1 {
            return Err(invalid("partial route must start at the source (node 1)".into()));
        }
        let mut seen = vec![false; node_count];
        for (k, &n) in nodes.iter().enumerate() {
            if n.get() > node_count {
                return Err(invalid(format!("node {n} outside 1..={node_count}")));
            }
            if seen[n.idx0()] {
                return Err(invalid(format!("duplicate node {n}")));
            }
            if n.get() == node_count && k + 1 != nodes.len() {
                return Err(invalid("destination may only appear last".into()));
            }
            seen[n.idx0()] = true;
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    fn extended(&self, node: NodeId) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.push(node);
        Self { nodes }
    }
}

/// Streams every route of a `d`-node network exactly once: relay subsets by
/// size then lexicographic, permutations of each subset lexicographic.
///
/// Panics if `d < 2`.
pub fn enumerate_routes(d: usize) -> impl Iterator<Item = Route> + Send {
    assert!(d >= 2, "route enumeration needs at least source and destination");
    let relays: Vec<usize> = (2..d).collect();
    let relay_count = relays.len();
    (0..=relay_count).flat_map(move |k| {
        let relays = relays.clone();
        relays
            .clone()
            .into_iter()
            .combinations(k)
            .flat_map(move |subset| subset.into_iter().permutations(k))
            .map(move |perm| {
                let mut nodes = Vec::with_capacity(perm.len() + 2);
                nodes.push(NodeId::new(1).unwrap());
                nodes.extend(perm.into_iter().map(|i| NodeId::new(i).unwrap()));
                nodes.push(NodeId::new(d).unwrap());
                Route::new(nodes, d).expect("enumeration yields valid routes")
            })
    })
}

/// Number of routes in a `d`-node network:
/// `sum_{k=0}^{d-2} (d-2)! / (d-2-k)!` (ordered relay selections of every
/// size). Exact for any `d` via big-integer accumulation.
pub fn pi_size(d: usize) -> BigUint {
    assert!(d >= 2, "route counting needs at least source and destination");
    let relays = (d - 2) as u64;
    let mut total = BigUint::from(1u32); // k = 0: direct route
    let mut term = BigUint::from(1u32);
    for k in 1..=relays {
        term *= relays - k + 1; // falling factorial (d-2)(d-3)...
        total += &term;
    }
    total
}

/// `pi_size` as f64 for fraction reporting (exact up to f64 rounding).
pub fn pi_size_f64(d: usize) -> f64 {
    pi_size(d).to_f64().unwrap_or(f64::INFINITY)
}

/// Outcome of a brute-force search: every route tied (within 1e-9) with the
/// maximum, in enumeration order, plus the maximum itself.
#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub best_routes: Vec<Route>,
    pub max_rate: f64,
    pub evaluated: usize,
}

const BRUTE_GUARD_INDEPENDENT: usize = 12;
const BRUTE_GUARD_COHERENT: usize = 6;

/// Evaluates every route in the network and returns the optimal set.
///
/// Guarded at D <= 12 (independent mode) / D <= 6 (coherent mode) unless
/// `force` is set; rate evaluation fans out across the rayon pool and the
/// result is independent of worker count.
pub fn brute_force_optimal(
    network: &Network,
    mode: RateMode,
    cfg: &OptimizerConfig,
    force: bool,
) -> Result<BruteForceResult, RoutingError> {
    let d = network.node_count();
    let (guard, label) = match mode {
        RateMode::IndependentCodewords => (BRUTE_GUARD_INDEPENDENT, "independent"),
        RateMode::Coherent => (BRUTE_GUARD_COHERENT, "coherent"),
    };
    if d > guard && !force {
        return Err(RoutingError::SearchSpaceTooLarge { node_count: d, guard, mode: label });
    }
    let gains = network.gain_matrix();
    let noises = network.noises();
    let routes: Vec<Route> = enumerate_routes(d).collect();
    let rates: Vec<f64> = routes
        .par_iter()
        .map(|route| evaluate_sequence(&gains, noises, route.nodes(), mode, cfg).rate)
        .collect();
    let max_rate = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_routes: Vec<Route> = routes
        .iter()
        .zip(&rates)
        .filter(|&(_, &r)| r >= max_rate - 1e-9)
        .map(|(route, _)| route.clone())
        .collect();
    Ok(BruteForceResult { best_routes, max_rate, evaluated: routes.len() })
}

/// The unique node (if any) whose received power from every route node
/// dominates that of every other unvisited node. Exact float ties count as
/// non-strict, so two identical candidates leave no unique neighbor.
pub fn nearest_neighbor(gains: &GainMatrix, partial: &PartialRoute) -> Option<NodeId> {
    let d = gains.node_count();
    let outside: Vec<NodeId> =
        (1..=d).map(|i| NodeId::new(i).unwrap()).filter(|&n| !partial.contains(n)).collect();
    let mut satisfying = None;
    for &candidate in &outside {
        let dominates_all = outside.iter().all(|&other| {
            other == candidate
                || partial
                    .nodes()
                    .iter()
                    .all(|&m| gains.gain(m, candidate) >= gains.gain(m, other))
        });
        if dominates_all {
            if satisfying.is_some() {
                return None; // at least two satisfy the condition: no unique neighbor
            }
            satisfying = Some(candidate);
        }
    }
    satisfying
}

/// Result of the nearest neighbor algorithm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NnaOutcome {
    /// The destination was reached; the route is optimal for DF.
    Complete { route: Route },
    /// No unique nearest neighbor existed at some step; the prefix built so
    /// far is returned. A modeled outcome, not an error.
    Premature { partial: PartialRoute },
}

/// Nearest neighbor algorithm: repeatedly append the unique nearest neighbor
/// until the destination is appended or none exists.
pub fn nna(network: &Network) -> NnaOutcome {
    let gains = network.gain_matrix();
    let destination = network.destination();
    let mut partial = PartialRoute::source();
    loop {
        match nearest_neighbor(&gains, &partial) {
            Some(next) => {
                partial = partial.extended(next);
                if next == destination {
                    let route = Route::new(partial.nodes.clone(), network.node_count())
                        .expect("nna builds valid routes");
                    return NnaOutcome::Complete { route };
                }
            }
            None => return NnaOutcome::Premature { partial },
        }
    }
}

/// The smallest set of unvisited nodes that collectively dominate all other
/// unvisited nodes, with at least one strict inequality per (member,
/// non-member) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearestNeighborSet {
    /// Members sorted by node id.
    pub members: Vec<NodeId>,
    /// The prefix the set was computed against.
    pub context: PartialRoute,
}

/// Computes the nearest neighbor set of a prefix. Candidates are sorted by
/// descending total received power; dominance with a strict inequality
/// forces a strictly larger total, so every valid set is a prefix of that
/// order and the shortest valid prefix is the unique smallest set. The full
/// candidate set is vacuously valid, so the result always exists.
pub fn nearest_neighbor_set(gains: &GainMatrix, partial: &PartialRoute) -> NearestNeighborSet {
    let d = gains.node_count();
    let mut candidates: Vec<(NodeId, f64)> = (1..=d)
        .map(|i| NodeId::new(i).unwrap())
        .filter(|&n| !partial.contains(n))
        .map(|n| (n, partial.nodes().iter().map(|&m| gains.gain(m, n)).sum::<f64>()))
        .collect();
    debug_assert!(!candidates.is_empty(), "nearest neighbor set needs unvisited nodes");
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let dominated_with_strict = |inside: NodeId, outside: NodeId| {
        let mut strict = false;
        for &m in partial.nodes() {
            let (gi, go) = (gains.gain(m, inside), gains.gain(m, outside));
            if gi < go {
                return false;
            }
            if gi > go {
                strict = true;
            }
        }
        strict
    };

    let mut size = candidates.len();
    for k in 1..candidates.len() {
        let valid = candidates[..k].iter().all(|&(n, _)| {
            candidates[k..].iter().all(|&(a, _)| dominated_with_strict(n, a))
        });
        if valid {
            size = k;
            break;
        }
    }
    let mut members: Vec<NodeId> = candidates[..size].iter().map(|&(n, _)| n).collect();
    members.sort();
    NearestNeighborSet { members, context: partial.clone() }
}

/// Full routes produced by the NNSA branching recursion.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateSet {
    /// Complete routes in generation order (breadth-first, children by
    /// ascending node id); free of duplicates by construction.
    pub routes: Vec<Route>,
}

impl CandidateSet {
    pub fn size(&self) -> usize {
        self.routes.len()
    }
}

/// Nearest neighbor set algorithm: from each prefix, branch to one child per
/// nearest-neighbor-set member until the destination terminates every
/// branch. Errors out once more than `cap` complete candidates exist.
pub fn nnsa_candidates(network: &Network, cap: usize) -> Result<CandidateSet, RoutingError> {
    let gains = network.gain_matrix();
    let destination = network.destination();
    let node_count = network.node_count();
    let mut frontier = VecDeque::from([PartialRoute::source()]);
    let mut routes = Vec::new();
    while let Some(prefix) = frontier.pop_front() {
        let set = nearest_neighbor_set(&gains, &prefix);
        for &member in &set.members {
            if member == destination {
                if routes.len() == cap {
                    return Err(RoutingError::CandidateExplosion {
                        cap,
                        generated: routes.len() + 1,
                    });
                }
                let route = Route::new(prefix.extended(member).nodes, node_count)
                    .expect("nnsa builds valid routes");
                debug_assert!(!routes.contains(&route), "branches never repeat a prefix");
                routes.push(route);
            } else {
                frontier.push_back(prefix.extended(member));
            }
        }
    }
    Ok(CandidateSet { routes })
}

pub const DEFAULT_CANDIDATE_CAP: usize = 1_000_000;

/// Best NNSA candidate and its rate (an optimal DF route).
#[derive(Debug, Clone, Serialize)]
pub struct NnsaResult {
    pub route: Route,
    pub rate: f64,
    pub candidate_count: usize,
}

/// Evaluates every NNSA candidate and returns an argmax, ties broken by
/// shortest route then lexicographic node order. Deterministic for any
/// worker count.
pub fn nnsa_optimal(
    network: &Network,
    mode: RateMode,
    cfg: &OptimizerConfig,
    cap: usize,
) -> Result<NnsaResult, RoutingError> {
    let candidates = nnsa_candidates(network, cap)?;
    let gains = network.gain_matrix();
    let noises = network.noises();
    let rates: Vec<f64> = candidates
        .routes
        .par_iter()
        .map(|route| evaluate_sequence(&gains, noises, route.nodes(), mode, cfg).rate)
        .collect();
    let mut best = 0;
    for k in 1..rates.len() {
        let better = rates[k] > rates[best]
            || (rates[k] == rates[best]
                && (candidates.routes[k].len(), candidates.routes[k].nodes())
                    < (candidates.routes[best].len(), candidates.routes[best].nodes()));
        if better {
            best = k;
        }
    }
    Ok(NnsaResult {
        route: candidates.routes[best].clone(),
        rate: rates[best],
        candidate_count: candidates.routes.len(),
    })
}

/// Maximum sum-of-received-power heuristic: repeatedly append the node with
/// the greatest total received power from the current prefix (smallest id on
/// ties) until the destination is appended. O(D^2) with incremental sums.
pub fn mspa(network: &Network) -> Route {
    let gains = network.gain_matrix();
    let d = network.node_count();
    let destination = network.destination();
    let source = network.source();
    let mut in_route = vec![false; d];
    in_route[source.idx0()] = true;
    let mut nodes = vec![source];
    // running sum of received power from the prefix, per node
    let mut sums: Vec<f64> = (1..=d)
        .map(|i| {
            let n = NodeId::new(i).unwrap();
            if n == source {
                f64::NEG_INFINITY
            } else {
                gains.gain(source, n)
            }
        })
        .collect();
    loop {
        let mut best: Option<NodeId> = None;
        let mut best_sum = f64::NEG_INFINITY;
        for i in 1..=d {
            let n = NodeId::new(i).unwrap();
            if !in_route[n.idx0()] && sums[n.idx0()] > best_sum {
                best_sum = sums[n.idx0()];
                best = Some(n); // ascending scan: first maximum = smallest id
            }
        }
        let chosen = best.expect("destination is always reachable");
        in_route[chosen.idx0()] = true;
        nodes.push(chosen);
        if chosen == destination {
            return Route::new(nodes, d).expect("mspa builds valid routes");
        }
        for i in 1..=d {
            let n = NodeId::new(i).unwrap();
            if !in_route[n.idx0()] {
                sums[n.idx0()] += gains.gain(chosen, n);
            }
        }
    }
}
