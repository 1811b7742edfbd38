//! DF achievable rate of a route: per-node reception rates, the max-min
//! power-split optimization, the independent-codeword closed form, and two
//! independent oracles (a 3-node bisection closed form and a brute-force
//! grid search) used to validate the optimizer.
//!
//! On route `M = {m_1, ..., m_n}` node `m_i` splits its power over
//! sub-codewords aimed at downstream nodes: fraction `alpha_{m_i m_j}` helps
//! `m_j` decode. The reception rate of `m_t` is
//!
//! ```text
//! R_{m_t} = L( (1/N_{m_t}) * sum_{j=2..t} ( sum_{i=1..j-1} sqrt(alpha_{m_i m_j} P_{m_i m_t}) )^2 )
//! L(x) = 0.5 * log2(1 + x)
//! ```
//!
//! and the DF rate supported by the route is the maximum over feasible
//! splits of the minimum reception rate.

mod optimizer;
mod oracle;

pub use oracle::{grid_oracle_df_rate, three_node_closed_form};
#[cfg(test)]
pub(crate) use oracle::grid_oracle_sequence;

use crate::network::{GainMatrix, Network, NodeId};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("reception index {t_index} outside [2, {route_len}]")]
    IndexOutOfRange { t_index: usize, route_len: usize },
    #[error("power split shaped for route length {split_len}, route has length {route_len}")]
    SplitMismatch { split_len: usize, route_len: usize },
    #[error("invalid power split: {0}")]
    InvalidSplit(String),
    #[error("grid oracle supports routes of length <= 4, got {route_len}")]
    TooManyVariables { route_len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `L(x) = 0.5 * log2(1 + x)`, the rate of a Gaussian channel at SNR `x`,
/// in bits per channel use.
pub(crate) fn half_log2_1p(x: f64) -> f64 {
    0.5 * x.ln_1p() / std::f64::consts::LN_2
}

/// Ordered node sequence from the source (node 1) to the destination
/// (node D), all entries distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Route {
    nodes: Vec<NodeId>,
}

impl Route {
    /// Validates and builds a route for a `node_count`-node network.
    pub fn new(nodes: Vec<NodeId>, node_count: usize) -> Result<Self, RateError> {
        if nodes.len() < 2 {
            return Err(RateError::InvalidRoute(format!(
                "route must contain at least source and destination, got {} node(s)",
                nodes.len()
            )));
        }
        if nodes.len() > node_count {
            return Err(RateError::InvalidRoute(format!(
                "route has {} nodes but the network only {}",
                nodes.len(),
                node_count
            )));
        }
        if nodes[0].get() != 1 {
            return Err(RateError::InvalidRoute("route must start at the source (node 1)".into()));
        }
        if nodes[nodes.len() - 1].get() != node_count {
            return Err(RateError::InvalidRoute(format!(
                "route must end at the destination (node {node_count})"
            )));
        }
        let mut seen = vec![false; node_count];
        for &n in &nodes {
            if n.get() > node_count {
                return Err(RateError::InvalidRoute(format!(
                    "node {} outside 1..={}",
                    n, node_count
                )));
            }
            if seen[n.idx0()] {
                return Err(RateError::InvalidRoute(format!("duplicate node {n}")));
            }
            seen[n.idx0()] = true;
        }
        Ok(Self { nodes })
    }

    /// Parses a comma-separated node list such as `"1,2,4"`.
    pub fn parse(text: &str, node_count: usize) -> Result<Self, RateError> {
        let nodes = text
            .split(',')
            .map(|part| {
                let idx: usize = part
                    .trim()
                    .parse()
                    .map_err(|_| RateError::InvalidRoute(format!("bad node index {part:?}")))?;
                NodeId::new(idx)
                    .ok_or_else(|| RateError::InvalidRoute("node indices start at 1".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(nodes, node_count)
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

    /// Checks the route against a concrete network.
    pub fn check_for(&self, network: &Network) -> Result<(), RateError> {
        if self.nodes.last().map(|n| n.get()) != Some(network.node_count()) {
            return Err(RateError::InvalidRoute(format!(
                "route destination {} does not match network destination {}",
                self.nodes.last().unwrap(),
                network.node_count()
            )));
        }
        if self.nodes.iter().any(|n| n.get() > network.node_count()) {
            return Err(RateError::InvalidRoute("route references unknown nodes".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for n in &self.nodes {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
            first = false;
        }
        Ok(())
    }
}

/// Power-split table for a route of length `n`: row `i` (1-based transmit
/// position, `i < n`) holds `alpha_{m_i m_j}` for `j = i+1..=n`. Every entry
/// is non-negative and each row sums to at most 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSplit {
    rows: Vec<Vec<f64>>,
}

impl PowerSplit {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, RateError> {
        let split = Self { rows };
        split.validate()?;
        Ok(split)
    }

    /// All-zero split for a route of length `route_len`.
    pub fn zeros(route_len: usize) -> Self {
        Self {
            rows: (0..route_len.saturating_sub(1))
                .map(|i| vec![0.0; route_len - 1 - i])
                .collect(),
        }
    }

    /// Independent-codeword split: `alpha_{m_i m_{i+1}} = 1`, all else 0.
    pub fn independent(route_len: usize) -> Self {
        let mut split = Self::zeros(route_len);
        for row in &mut split.rows {
            row[0] = 1.0;
        }
        split
    }

    /// Route length this split is shaped for.
    pub fn route_len(&self) -> usize {
        self.rows.len() + 1
    }

    /// `alpha_{m_i m_j}` by 1-based route positions, `1 <= i < j <= n`.
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.rows[i - 1][j - i - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn validate(&self) -> Result<(), RateError> {
        let n = self.route_len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n - 1 - i {
                return Err(RateError::InvalidSplit(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    n - 1 - i
                )));
            }
            let mut sum = 0.0;
            for &a in row {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(RateError::InvalidSplit(format!(
                        "negative or non-finite fraction in row {}",
                        i + 1
                    )));
                }
                sum += a;
            }
            if sum > 1.0 + 1e-9 {
                return Err(RateError::InvalidSplit(format!(
                    "row {} allocates {} > 1 of its power",
                    i + 1,
                    sum
                )));
            }
        }
        Ok(())
    }

    /// Square roots of the entries, flattened row-major (the optimizer's
    /// amplitude parametrization).
    #[cfg(test)]
    pub(crate) fn to_beta(&self) -> Vec<f64> {
        self.rows.iter().flatten().map(|&a| a.sqrt()).collect()
    }

    pub(crate) fn from_beta(beta: &[f64], route_len: usize) -> Self {
        let mut rows = Vec::with_capacity(route_len - 1);
        let mut k = 0;
        for i in 0..route_len - 1 {
            let width = route_len - 1 - i;
            rows.push(beta[k..k + width].iter().map(|&b| b * b).collect());
            k += width;
        }
        Self { rows }
    }
}

/// Whether the max-min power-split optimization runs, or the
/// independent-codeword pattern is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Optimize all power splits (coherent combining).
    Coherent,
    /// Fix `alpha_{m_i m_{i+1}} = 1`, everything else 0 — the phase-fading /
    /// independent-codeword operating point; the rate has a closed form.
    IndependentCodewords,
}

/// Settings for the coherent max-min optimizer: multi-start projected
/// gradient ascent on a soft-min surrogate followed by direct min-rate
/// polishing with backtracking line search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    /// Random restarts in addition to the independent-codeword start.
    pub random_starts: usize,
    /// Per-start iteration budget across both phases.
    pub max_iters: usize,
    /// A start is converged once the best min-rate improves by less than
    /// `tol` over `patience` consecutive polish iterations.
    pub tol: f64,
    pub patience: usize,
    /// Base seed; the effective stream also mixes in the route content so
    /// evaluation order never matters.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { random_starts: 20, max_iters: 2000, tol: 1e-9, patience: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OptimizerDiagnostics {
    /// Total iterations summed over restarts.
    pub iterations: usize,
    /// Starts actually run (0 when the rate has a closed form).
    pub restarts: usize,
    /// True when the winning start met the improvement criterion instead of
    /// exhausting its budget. A false value still yields a valid lower bound.
    pub converged: bool,
}

impl OptimizerDiagnostics {
    fn exact() -> Self {
        Self { iterations: 0, restarts: 0, converged: true }
    }
}

/// Result of a route rate evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct RateResult {
    /// Supported DF rate in bits per channel use: the minimum of
    /// `reception_rates`.
    pub rate: f64,
    /// Reception rate per non-source route position (positions 2..=n).
    pub reception_rates: Vec<f64>,
    /// Power split achieving `rate`.
    pub split: PowerSplit,
    pub diagnostics: OptimizerDiagnostics,
}

/// Reception rate of the node at 1-based position `t_index` of the route,
/// for a given power split.
pub fn reception_rate(
    gains: &GainMatrix,
    noises: &[f64],
    route: &Route,
    split: &PowerSplit,
    t_index: usize,
) -> Result<f64, RateError> {
    let n = route.len();
    if t_index < 2 || t_index > n {
        return Err(RateError::IndexOutOfRange { t_index, route_len: n });
    }
    if split.route_len() != n {
        return Err(RateError::SplitMismatch { split_len: split.route_len(), route_len: n });
    }
    split.validate()?;
    let nodes = route.nodes();
    let receiver = nodes[t_index - 1];
    let mut total = 0.0;
    for j in 2..=t_index {
        let mut amplitude = 0.0;
        for i in 1..j {
            let alpha = split.alpha(i, j);
            if alpha > 0.0 {
                amplitude += (alpha * gains.gain(nodes[i - 1], receiver)).sqrt();
            }
        }
        total += amplitude * amplitude;
    }
    Ok(half_log2_1p(total / noises[receiver.idx0()]))
}

/// Minimum reception rate over all non-source positions of the route.
pub fn min_reception_rate(
    gains: &GainMatrix,
    noises: &[f64],
    route: &Route,
    split: &PowerSplit,
) -> Result<f64, RateError> {
    let mut min = f64::INFINITY;
    for t in 2..=route.len() {
        min = min.min(reception_rate(gains, noises, route, split, t)?);
    }
    Ok(min)
}

/// DF rate supported by `route`: the max-min over power splits in
/// [`RateMode::Coherent`], or the exact closed form in
/// [`RateMode::IndependentCodewords`].
pub fn df_rate(
    network: &Network,
    route: &Route,
    mode: RateMode,
    cfg: &OptimizerConfig,
) -> Result<RateResult, RateError> {
    route.check_for(network)?;
    let gains = network.gain_matrix();
    Ok(evaluate_sequence(&gains, network.noises(), route.nodes(), mode, cfg))
}

/// Direct-link rate `L(P_1D / N_D)`; shared so the two-node route is
/// bit-identical across every code path.
fn direct_rate(gains: &GainMatrix, noises: &[f64], src: NodeId, dst: NodeId) -> f64 {
    half_log2_1p(gains.gain(src, dst) / noises[dst.idx0()])
}

/// Rate of an arbitrary decoding order (last node acts as receiver only).
/// Public entry points wrap this with [`Route`] validation; routing-side
/// property tests use it on partial orders directly.
pub(crate) fn evaluate_sequence(
    gains: &GainMatrix,
    noises: &[f64],
    nodes: &[NodeId],
    mode: RateMode,
    cfg: &OptimizerConfig,
) -> RateResult {
    let n = nodes.len();
    debug_assert!(n >= 2);
    if n == 2 {
        let rate = direct_rate(gains, noises, nodes[0], nodes[1]);
        return RateResult {
            rate,
            reception_rates: vec![rate],
            split: PowerSplit::independent(2),
            diagnostics: OptimizerDiagnostics::exact(),
        };
    }
    match mode {
        RateMode::IndependentCodewords => independent_rate(gains, noises, nodes),
        RateMode::Coherent => {
            let problem = optimizer::Problem::new(gains, noises, nodes);
            let seed = route_stream_seed(cfg.seed, nodes);
            let (beta, diagnostics) = optimizer::maximize(&problem, cfg, seed);
            let reception_rates = problem.reception_rates(&beta);
            let rate = min_of(&reception_rates);
            RateResult {
                rate,
                reception_rates,
                split: PowerSplit::from_beta(&beta, n),
                diagnostics,
            }
        }
    }
}

/// Independent-codeword closed form: the reception rate at position `t`
/// collapses to `L( sum_{i<t} P_{m_i m_t} / N_{m_t} )`.
fn independent_rate(gains: &GainMatrix, noises: &[f64], nodes: &[NodeId]) -> RateResult {
    let n = nodes.len();
    let reception_rates: Vec<f64> = (1..n)
        .map(|t| {
            let receiver = nodes[t];
            let sum: f64 = (0..t).map(|i| gains.gain(nodes[i], receiver)).sum();
            half_log2_1p(sum / noises[receiver.idx0()])
        })
        .collect();
    RateResult {
        rate: min_of(&reception_rates),
        reception_rates,
        split: PowerSplit::independent(n),
        diagnostics: OptimizerDiagnostics::exact(),
    }
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Mixes the base seed with the route content so each route gets its own
/// reproducible stream regardless of evaluation order or worker count.
fn route_stream_seed(base: u64, nodes: &[NodeId]) -> u64 {
    let mut h = splitmix64(base ^ 0x9e37_79b9_7f4a_7c15);
    for n in nodes {
        h = splitmix64(h ^ n.get() as u64);
    }
    h
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
