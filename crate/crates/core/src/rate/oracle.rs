//! Independent oracles for the max-min power-split problem, used to
//! validate the optimizer rather than sharing code with it.
//!
//! - [`grid_oracle_df_rate`]: brute-force search over a simplex grid of
//!   splits for routes of length <= 4.
//! - [`three_node_closed_form`]: the 3-node problem reduces to one split
//!   variable whose max-min point is a curve crossing, solved by bisection.

use super::optimizer::Problem;
use super::{
    half_log2_1p, OptimizerDiagnostics, PowerSplit, RateError, RateResult, Route,
};
use crate::network::{GainMatrix, Network, NodeId};

/// Exhaustive grid search over the simplex-constrained splits of `route`,
/// `resolution` steps per variable. Every reception rate is non-decreasing
/// in every split fraction, so only full-power rows (`sum alpha = 1`) need
/// enumeration: each interior grid point is dominated by a face point of the
/// same grid.
///
/// The result is monotone non-decreasing when the resolution is refined by
/// an integer factor (the coarse grid embeds in the fine one).
pub fn grid_oracle_df_rate(
    network: &Network,
    route: &Route,
    resolution: u32,
) -> Result<RateResult, RateError> {
    route.check_for(network)?;
    let gains = network.gain_matrix();
    grid_oracle_sequence(&gains, network.noises(), route.nodes(), resolution)
}

pub(crate) fn grid_oracle_sequence(
    gains: &GainMatrix,
    noises: &[f64],
    nodes: &[NodeId],
    resolution: u32,
) -> Result<RateResult, RateError> {
    let n = nodes.len();
    if n > 4 {
        return Err(RateError::TooManyVariables { route_len: n });
    }
    if resolution == 0 {
        return Err(RateError::InvalidParameter("grid resolution must be >= 1".into()));
    }
    if n == 2 {
        // single variable, optimum at full power: identical to df_rate
        let rate = half_log2_1p(gains.gain(nodes[0], nodes[1]) / noises[nodes[1].idx0()]);
        return Ok(RateResult {
            rate,
            reception_rates: vec![rate],
            split: PowerSplit::independent(2),
            diagnostics: OptimizerDiagnostics { iterations: 1, restarts: 0, converged: true },
        });
    }

    let problem = Problem::new(gains, noises, nodes);
    // Per-row candidates: integer compositions of `resolution`, as exact
    // fractions for reporting and as sqrt amplitudes for evaluation.
    let rows: Vec<Vec<Vec<u32>>> =
        (0..n - 1).map(|i| compositions(resolution, n - 1 - i)).collect();
    let row_betas: Vec<Vec<Vec<f64>>> = rows
        .iter()
        .map(|cands| {
            cands
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|&s| (s as f64 / resolution as f64).sqrt())
                        .collect()
                })
                .collect()
        })
        .collect();

    struct GridSearch<'a> {
        problem: &'a Problem,
        row_betas: &'a [Vec<Vec<f64>>],
        beta: Vec<f64>,
        choice: Vec<usize>,
        best_choice: Vec<usize>,
        best_snr: f64,
        evaluated: usize,
    }

    impl GridSearch<'_> {
        /// Odometer over row candidates, innermost row varying fastest.
        fn run(&mut self, row: usize, offset: usize) {
            if row == self.row_betas.len() {
                let snr = self.problem.min_snr(&self.beta);
                self.evaluated += 1;
                if snr > self.best_snr {
                    self.best_snr = snr;
                    self.best_choice.copy_from_slice(&self.choice);
                }
                return;
            }
            let width = self.row_betas[row][0].len();
            for k in 0..self.row_betas[row].len() {
                self.beta[offset..offset + width].copy_from_slice(&self.row_betas[row][k]);
                self.choice[row] = k;
                self.run(row + 1, offset + width);
            }
        }
    }

    let mut search = GridSearch {
        problem: &problem,
        row_betas: &row_betas,
        beta: vec![0.0; problem.nvars()],
        choice: vec![0usize; n - 1],
        best_choice: vec![0usize; n - 1],
        best_snr: f64::NEG_INFINITY,
        evaluated: 0,
    };
    search.run(0, 0);
    let GridSearch { mut beta, best_choice, evaluated, .. } = search;

    // reconstruct the winning split with exact fractions
    let mut offset = 0;
    let mut split_rows = Vec::with_capacity(n - 1);
    for (row, &k) in best_choice.iter().enumerate() {
        let width = n - 1 - row;
        beta[offset..offset + width].copy_from_slice(&row_betas[row][k]);
        split_rows.push(
            rows[row][k]
                .iter()
                .map(|&s| s as f64 / resolution as f64)
                .collect::<Vec<f64>>(),
        );
        offset += width;
    }
    let reception_rates = problem.reception_rates(&beta);
    let rate = reception_rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RateResult {
        rate,
        reception_rates,
        split: PowerSplit::new(split_rows)?,
        diagnostics: OptimizerDiagnostics { iterations: evaluated, restarts: 0, converged: true },
    })
}

/// All length-`parts` vectors of non-negative integers summing to `total`,
/// in lexicographic order by leading entry descending.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn fill(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            fill(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Global optimum of the 3-node max-min problem on route `{1,2,3}`, by
/// bisection on the crossing of the two reception-rate curves.
///
/// With full-power rows the only free variable is the source fraction
/// `a = alpha_12` (so `alpha_13 = 1 - a`, `alpha_23 = 1`):
///
/// ```text
/// R_2(a) = L(a P_12 / N_2)                                   increasing
/// R_3(a) = L((P_13 + P_23 + 2 sqrt((1-a) P_13 P_23)) / N_3)  decreasing
/// ```
pub fn three_node_closed_form(network: &Network) -> Result<f64, RateError> {
    if network.node_count() != 3 {
        return Err(RateError::InvalidParameter(format!(
            "closed form requires a 3-node network, got {}",
            network.node_count()
        )));
    }
    let gains = network.gain_matrix();
    let id = |i| NodeId::new(i).unwrap();
    let p12 = gains.gain(id(1), id(2));
    let p13 = gains.gain(id(1), id(3));
    let p23 = gains.gain(id(2), id(3));
    let inv_n2 = 1.0 / network.noise(id(2));
    let inv_n3 = 1.0 / network.noise(id(3));

    let r2 = |a: f64| half_log2_1p(a * p12 * inv_n2);
    let r3 = |a: f64| half_log2_1p((p13 + p23 + 2.0 * ((1.0 - a) * p13 * p23).sqrt()) * inv_n3);

    if r2(1.0) <= r3(1.0) {
        // R_2 stays the bottleneck on [0,1]; push everything to the relay.
        return Ok(r2(1.0));
    }
    if r2(0.0) >= r3(0.0) {
        // R_3 stays the bottleneck; full coherent boost to the destination.
        return Ok(r3(0.0));
    }
    // crossing: f(a) = R_2 - R_3 is increasing with f(0) < 0 < f(1)
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if r2(mid) - r3(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok(r2(mid).min(r3(mid)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::rate::{df_rate, OptimizerConfig, RateMode};

    fn route(ids: &[usize], d: usize) -> Route {
        Route::new(ids.iter().map(|&i| NodeId::new(i).unwrap()).collect(), d).unwrap()
    }

    fn three_node_canonical() -> Network {
        // gains P_12 = 1, P_13 = 1/4, P_23 = 1
        Network::from_positions(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            &[1.0; 3],
            &[1.0; 3],
            1.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn compositions_count_and_sum() {
        let c = compositions(5, 3);
        assert_eq!(c.len(), 21); // C(7,2)
        assert!(c.iter().all(|v| v.iter().sum::<u32>() == 5));
        assert_eq!(compositions(4, 1), vec![vec![4]]);
    }

    #[test]
    fn closed_form_canonical_value() {
        // R_2(1) = L(1) = 0.5 < R_3(1) = L(1.25): boundary optimum at a = 1
        let rate = three_node_closed_form(&three_node_canonical()).unwrap();
        assert_eq!(rate, 0.5);
    }

    #[test]
    fn closed_form_zero_source_power() {
        let net = Network::from_positions(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            &[0.0, 1.0, 1.0],
            &[1.0; 3],
            1.0,
            2.0,
        )
        .unwrap();
        assert_eq!(three_node_closed_form(&net).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_relay_adjacent_to_source() {
        // P_12 huge: optimum approaches the fully coherent direct-link bound
        let net = Network::from_positions(
            &[(0.0, 0.0), (1e-6, 0.0), (1.0, 0.0)],
            &[1.0; 3],
            &[1.0; 3],
            1.0,
            2.0,
        )
        .unwrap();
        let gains = net.gain_matrix();
        let id = |i| NodeId::new(i).unwrap();
        let (p13, p23) = (gains.gain(id(1), id(3)), gains.gain(id(2), id(3)));
        let bound = half_log2_1p(p13 + p23 + 2.0 * (p13 * p23).sqrt());
        let rate = three_node_closed_form(&net).unwrap();
        assert!(rate <= bound + 1e-12);
        assert!((rate - bound).abs() < 1e-9);
    }

    #[test]
    fn closed_form_agrees_with_grid() {
        let net = three_node_canonical();
        let grid = grid_oracle_df_rate(&net, &route(&[1, 2, 3], 3), 100_000).unwrap();
        let closed = three_node_closed_form(&net).unwrap();
        assert!((grid.rate - closed).abs() < 1e-6);
        // interior-crossing geometry: relay close to the source
        let (net, _) = Network::random(3, 1.0, 1.0, 2.0, 1.0, 1.0, 12).unwrap();
        let closed = three_node_closed_form(&net).unwrap();
        let grid = grid_oracle_df_rate(&net, &route(&[1, 2, 3], 3), 100_000).unwrap();
        assert!(grid.rate <= closed + 1e-12, "grid is a restriction, cannot beat the optimum");
        assert!((grid.rate - closed).abs() < 1e-4);
    }

    #[test]
    fn grid_direct_route_equals_df_rate_exactly() {
        let (net, _) = Network::random(2, 1.0, 1.0, 2.0, 1.0, 1.0, 4).unwrap();
        let r = route(&[1, 2], 2);
        let grid = grid_oracle_df_rate(&net, &r, 7).unwrap();
        let exact = df_rate(&net, &r, RateMode::Coherent, &OptimizerConfig::default()).unwrap();
        assert_eq!(grid.rate, exact.rate);
    }

    #[test]
    fn grid_refinement_is_monotone() {
        let (net, _) = Network::random(4, 1.0, 1.0, 2.0, 1.0, 1.0, 8).unwrap();
        let r = route(&[1, 2, 3, 4], 4);
        let coarse = grid_oracle_df_rate(&net, &r, 40).unwrap();
        let fine = grid_oracle_df_rate(&net, &r, 80).unwrap();
        assert!(fine.rate >= coarse.rate);
    }

    #[test]
    fn grid_rejects_long_routes() {
        let (net, _) = Network::random(5, 1.0, 1.0, 2.0, 1.0, 1.0, 8).unwrap();
        let r = route(&[1, 2, 3, 4, 5], 5);
        assert!(matches!(
            grid_oracle_df_rate(&net, &r, 10),
            Err(RateError::TooManyVariables { route_len: 5 })
        ));
    }
}
