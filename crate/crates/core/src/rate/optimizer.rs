//! Max-min power-split optimizer.
//!
//! Variables are the amplitudes `beta_{ij} = sqrt(alpha_{ij})`, so each
//! transmit row lives in the non-negative part of the unit ball
//! (`sum_j beta_{ij}^2 <= 1`) and projection is a clamp followed by radial
//! scaling. Every reception rate is non-decreasing in every `beta`, which
//! keeps the feasible optimum on the row spheres but the min-rate surface is
//! still non-convex, hence the multi-start scheme:
//!
//! 1. projected gradient ascent on a log-sum-exp soft-min of the reception
//!    rates, sharpened over a temperature ladder, then
//! 2. direct polishing of the exact min rate: ascent along the min-norm
//!    point of the active gradients with a backtracking line search.
//!
//! The independent-codeword split is always one of the starts and every
//! probed point participates in the final argmax, so the result can never
//! fall below it.

use super::{half_log2_1p, OptimizerConfig, OptimizerDiagnostics};
use crate::network::{GainMatrix, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOFTMIN_STAGES: [f64; 4] = [4.0, 16.0, 64.0, 256.0];
const SOFTMIN_ITERS: usize = 50;
const LINE_SEARCH_SHRINKS: usize = 40;

/// A route's rate landscape: amplitude gains between route positions and
/// inverse noises, with `beta` flattened row-major.
pub(crate) struct Problem {
    len: usize,
    /// `amp[i * len + t] = sqrt(P_{m_i m_t})` for positions `i < t`.
    amp: Vec<f64>,
    /// `1 / N_{m_t}` per route position.
    inv_noise: Vec<f64>,
    offsets: Vec<usize>,
    nvars: usize,
}

impl Problem {
    pub fn new(gains: &GainMatrix, noises: &[f64], nodes: &[NodeId]) -> Self {
        let len = nodes.len();
        let mut amp = vec![0.0; len * len];
        for i in 0..len {
            for t in (i + 1)..len {
                amp[i * len + t] = gains.gain(nodes[i], nodes[t]).sqrt();
            }
        }
        let inv_noise: Vec<f64> = nodes.iter().map(|n| 1.0 / noises[n.idx0()]).collect();
        let mut offsets = Vec::with_capacity(len - 1);
        let mut acc = 0;
        for i in 0..len - 1 {
            offsets.push(acc);
            acc += len - 1 - i;
        }
        Self { len, amp, inv_noise, offsets, nvars: acc }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Flat index of `beta_{ij}` for 0-based positions `i < j`.
    fn idx(&self, i: usize, j: usize) -> usize {
        self.offsets[i] + (j - i - 1)
    }

    /// SNR at each receiving position (1-based position t stored at t-1).
    fn snrs(&self, beta: &[f64], out: &mut [f64]) {
        let len = self.len;
        for t in 1..len {
            let mut total = 0.0;
            for j in 1..=t {
                let mut c = 0.0;
                for i in 0..j {
                    c += beta[self.idx(i, j)] * self.amp[i * len + t];
                }
                total += c * c;
            }
            out[t - 1] = total * self.inv_noise[t];
        }
    }

    /// Minimum SNR over receivers; cheaper than rates on the line-search path
    /// (the min rate is `L` of the min SNR since `L` is increasing).
    pub(crate) fn min_snr(&self, beta: &[f64]) -> f64 {
        let len = self.len;
        let mut min = f64::INFINITY;
        for t in 1..len {
            let mut total = 0.0;
            for j in 1..=t {
                let mut c = 0.0;
                for i in 0..j {
                    c += beta[self.idx(i, j)] * self.amp[i * len + t];
                }
                total += c * c;
            }
            min = min.min(total * self.inv_noise[t]);
        }
        min
    }

    /// SNRs plus the sub-codeword amplitude sums `c[j * len + t]` needed for
    /// gradients.
    fn snrs_and_amplitudes(&self, beta: &[f64], snr_out: &mut [f64], c_out: &mut [f64]) {
        let len = self.len;
        for t in 1..len {
            let mut total = 0.0;
            for j in 1..=t {
                let mut c = 0.0;
                for i in 0..j {
                    c += beta[self.idx(i, j)] * self.amp[i * len + t];
                }
                c_out[j * len + t] = c;
                total += c * c;
            }
            snr_out[t - 1] = total * self.inv_noise[t];
        }
    }

    /// Gradient of `sum_t weights[t-1] * R_t` with respect to `beta`.
    fn weighted_grad(
        &self,
        snrs: &[f64],
        c: &[f64],
        weights: &[f64],
        grad_out: &mut [f64],
    ) {
        let len = self.len;
        grad_out.fill(0.0);
        for t in 1..len {
            let w = weights[t - 1];
            if w == 0.0 {
                continue;
            }
            // dR_t/dbeta_ij = c_{j,t} * amp_{i,t} * invN_t / (ln2 * (1 + snr_t))
            let factor = w * self.inv_noise[t] / (std::f64::consts::LN_2 * (1.0 + snrs[t - 1]));
            for j in 1..=t {
                let cj = factor * c[j * len + t];
                if cj == 0.0 {
                    continue;
                }
                for i in 0..j {
                    grad_out[self.idx(i, j)] += cj * self.amp[i * len + t];
                }
            }
        }
    }

    /// Gradient of a single reception rate.
    fn rate_grad(&self, snrs: &[f64], c: &[f64], t: usize, grad_out: &mut [f64]) {
        let len = self.len;
        grad_out.fill(0.0);
        let factor = self.inv_noise[t] / (std::f64::consts::LN_2 * (1.0 + snrs[t - 1]));
        for j in 1..=t {
            let cj = factor * c[j * len + t];
            for i in 0..j {
                grad_out[self.idx(i, j)] += cj * self.amp[i * len + t];
            }
        }
    }

    /// Euclidean projection onto the feasible set, row by row: clamp to the
    /// non-negative orthant, then scale rows whose norm exceeds 1.
    fn project(&self, beta: &mut [f64]) {
        let len = self.len;
        for i in 0..len - 1 {
            let start = self.offsets[i];
            let row = &mut beta[start..start + (len - 1 - i)];
            let mut sq: f64 = 0.0;
            for b in row.iter_mut() {
                if *b < 0.0 {
                    *b = 0.0;
                }
                sq += *b * *b;
            }
            if sq > 1.0 {
                let scale = 1.0 / sq.sqrt();
                for b in row.iter_mut() {
                    *b *= scale;
                }
            }
        }
    }

    pub fn independent_start(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.nvars];
        for i in 0..self.len - 1 {
            beta[self.idx(i, i + 1)] = 1.0;
        }
        beta
    }

    /// Random full-power start: each row uniform on the non-negative part of
    /// its unit sphere (up to the direction distribution; exactness is not
    /// needed, coverage is).
    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut beta = vec![0.0; self.nvars];
        for i in 0..self.len - 1 {
            let start = self.offsets[i];
            let row = &mut beta[start..start + (self.len - 1 - i)];
            let mut sq: f64 = 0.0;
            for b in row.iter_mut() {
                *b = rng.gen_range(0.0..1.0);
                sq += *b * *b;
            }
            if sq < 1e-24 {
                row[0] = 1.0;
            } else {
                let scale = 1.0 / sq.sqrt();
                for b in row.iter_mut() {
                    *b *= scale;
                }
            }
        }
        beta
    }

    /// Reception rates at a feasible point, one per receiving position.
    pub fn reception_rates(&self, beta: &[f64]) -> Vec<f64> {
        let mut snrs = vec![0.0; self.len - 1];
        self.snrs(beta, &mut snrs);
        snrs.iter().map(|&x| half_log2_1p(x)).collect()
    }
}

/// Maximizes the minimum reception rate. Returns the best feasible point
/// found and diagnostics; the value at the returned point is exact.
pub(crate) fn maximize(
    problem: &Problem,
    cfg: &OptimizerConfig,
    seed: u64,
) -> (Vec<f64>, OptimizerDiagnostics) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total_iters = 0usize;
    let starts = 1 + cfg.random_starts;
    let mut best: Option<StartOutcome> = None;

    let mut scratch = Scratch::new(problem);
    for start_index in 0..starts {
        let beta0 = if start_index == 0 {
            problem.independent_start()
        } else {
            problem.random_start(&mut rng)
        };
        let outcome = run_start(problem, cfg, beta0, &mut scratch);
        total_iters += outcome.iterations;
        // strict improvement only: on ties the earliest start keeps ownership
        if best.as_ref().is_none_or(|b| outcome.snr > b.snr) {
            best = Some(outcome);
        }
    }

    let best = best.expect("at least the independent start runs");
    (
        best.beta,
        OptimizerDiagnostics {
            iterations: total_iters,
            restarts: starts,
            converged: best.converged,
        },
    )
}

struct StartOutcome {
    beta: Vec<f64>,
    snr: f64,
    converged: bool,
    iterations: usize,
}

struct Scratch {
    snrs: Vec<f64>,
    c: Vec<f64>,
    grad: Vec<f64>,
    dir: Vec<f64>,
    trial: Vec<f64>,
    rates: Vec<f64>,
    weights: Vec<f64>,
    active_grads: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(problem: &Problem) -> Self {
        let receivers = problem.len - 1;
        Self {
            snrs: vec![0.0; receivers],
            c: vec![0.0; problem.len * problem.len],
            grad: vec![0.0; problem.nvars],
            dir: vec![0.0; problem.nvars],
            trial: vec![0.0; problem.nvars],
            rates: vec![0.0; receivers],
            weights: vec![0.0; receivers],
            active_grads: Vec::new(),
        }
    }
}

fn run_start(
    problem: &Problem,
    cfg: &OptimizerConfig,
    mut beta: Vec<f64>,
    s: &mut Scratch,
) -> StartOutcome {
    let mut iterations = 0usize;
    let mut best_beta = beta.clone();
    let mut best_snr = problem.min_snr(&beta);

    // Phase 1: soft-min ascent over a sharpening temperature ladder.
    problem.snrs(&beta, &mut s.snrs);
    for (r, &x) in s.rates.iter_mut().zip(s.snrs.iter()) {
        *r = half_log2_1p(x);
    }
    let mean_rate = s.rates.iter().sum::<f64>() / s.rates.len() as f64;
    let rate_scale = mean_rate.max(1e-2);
    'stages: for &sharpness in &SOFTMIN_STAGES {
        let tau = sharpness / rate_scale;
        let mut step = 0.1;
        let mut value = softmin_value(problem, &beta, tau, s);
        for _ in 0..SOFTMIN_ITERS {
            if iterations >= cfg.max_iters {
                break 'stages;
            }
            iterations += 1;
            softmin_grad(problem, tau, s);
            let norm = norm2(&s.grad).sqrt();
            if norm < 1e-15 {
                break;
            }
            for (d, g) in s.dir.iter_mut().zip(&s.grad) {
                *d = g / norm;
            }
            step_project(problem, &beta, &s.dir, step, &mut s.trial);
            let trial_value = softmin_value_at(problem, &s.trial, tau, &mut s.weights);
            if trial_value > value {
                beta.copy_from_slice(&s.trial);
                value = trial_value;
                // refresh caches for the next gradient
                problem.snrs_and_amplitudes(&beta, &mut s.snrs, &mut s.c);
                for (r, &x) in s.rates.iter_mut().zip(s.snrs.iter()) {
                    *r = half_log2_1p(x);
                }
                step = (step * 1.3).min(0.5);
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
        let snr = problem.min_snr(&beta);
        if snr > best_snr {
            best_snr = snr;
            best_beta.copy_from_slice(&beta);
        }
    }
    {
        // budget may cut a stage short of its post-stage bookkeeping
        let snr = problem.min_snr(&beta);
        if snr > best_snr {
            best_snr = snr;
            best_beta.copy_from_slice(&beta);
        }
    }

    // Phase 2: polish the exact min rate.
    let mut converged = false;
    let mut step = 0.05;
    let mut anchor_rate = half_log2_1p(best_snr);
    let mut anchor_iter = iterations;
    while iterations < cfg.max_iters {
        iterations += 1;
        problem.snrs_and_amplitudes(&beta, &mut s.snrs, &mut s.c);
        for (r, &x) in s.rates.iter_mut().zip(s.snrs.iter()) {
            *r = half_log2_1p(x);
        }
        let current_snr = s.snrs.iter().copied().fold(f64::INFINITY, f64::min);
        let current_rate = half_log2_1p(current_snr);
        let scale = current_rate.max(1e-9);

        let mut improved = false;
        for delta_mult in [1e-9, 1e-6, 1e-3, 3e-2] {
            let threshold = current_rate + delta_mult * scale;
            s.active_grads.clear();
            for t in 1..problem.len {
                if s.rates[t - 1] <= threshold {
                    let mut g = vec![0.0; problem.nvars];
                    problem.rate_grad(&s.snrs, &s.c, t, &mut g);
                    s.active_grads.push(g);
                }
            }
            min_norm_point(&s.active_grads, &mut s.dir);
            let norm = norm2(&s.dir).sqrt();
            if norm < 1e-14 {
                continue; // no ascent direction from this active set
            }
            for d in s.dir.iter_mut() {
                *d /= norm;
            }
            let mut trial_step = step;
            for _ in 0..LINE_SEARCH_SHRINKS {
                step_project(problem, &beta, &s.dir, trial_step, &mut s.trial);
                let trial_snr = problem.min_snr(&s.trial);
                if trial_snr > current_snr {
                    beta.copy_from_slice(&s.trial);
                    step = (trial_step * 1.5).min(1.0);
                    improved = true;
                    if trial_snr > best_snr {
                        best_snr = trial_snr;
                        best_beta.copy_from_slice(&beta);
                    }
                    break;
                }
                trial_step *= 0.4;
                if trial_step < 1e-14 {
                    break;
                }
            }
            if improved {
                break;
            }
        }

        if !improved {
            // no feasible ascent at any active-set width: stationary
            converged = true;
            break;
        }
        let best_rate = half_log2_1p(best_snr);
        if best_rate >= anchor_rate + cfg.tol {
            anchor_rate = best_rate;
            anchor_iter = iterations;
        } else if iterations - anchor_iter >= cfg.patience {
            converged = true;
            break;
        }
    }

    StartOutcome { beta: best_beta, snr: best_snr, converged, iterations }
}

/// `beta + step * dir`, projected. Writes into `out`.
fn step_project(problem: &Problem, beta: &[f64], dir: &[f64], step: f64, out: &mut [f64]) {
    for ((o, &b), &d) in out.iter_mut().zip(beta).zip(dir) {
        *o = b + step * d;
    }
    problem.project(out);
}

/// Soft minimum of the reception rates, `-ln(sum exp(-tau R_t)) / tau`,
/// evaluated with caches refreshed for `beta`.
fn softmin_value(problem: &Problem, beta: &[f64], tau: f64, s: &mut Scratch) -> f64 {
    problem.snrs_and_amplitudes(beta, &mut s.snrs, &mut s.c);
    for (r, &x) in s.rates.iter_mut().zip(s.snrs.iter()) {
        *r = half_log2_1p(x);
    }
    softmin_from_rates(&s.rates, tau)
}

/// Soft minimum at a trial point without disturbing the gradient caches;
/// `buf` is clobbered with the trial rates.
fn softmin_value_at(problem: &Problem, beta: &[f64], tau: f64, buf: &mut [f64]) -> f64 {
    problem.snrs(beta, buf);
    for x in buf.iter_mut() {
        *x = half_log2_1p(*x);
    }
    softmin_from_rates(buf, tau)
}

fn softmin_from_rates(rates: &[f64], tau: f64) -> f64 {
    let m = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = rates.iter().map(|&r| (-tau * (r - m)).exp()).sum();
    m - sum.ln() / tau
}

/// Gradient of the soft minimum using the cached snrs/amplitudes/rates.
fn softmin_grad(problem: &Problem, tau: f64, s: &mut Scratch) {
    let m = s.rates.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (w, &r) in s.weights.iter_mut().zip(s.rates.iter()) {
        *w = (-tau * (r - m)).exp();
        total += *w;
    }
    for w in s.weights.iter_mut() {
        *w /= total;
    }
    let weights = std::mem::take(&mut s.weights);
    problem.weighted_grad(&s.snrs, &s.c, &weights, &mut s.grad);
    s.weights = weights;
}

/// Min-norm point of the convex hull of `points` (Frank-Wolfe, a handful of
/// vectors in a handful of dimensions). The result is the steepest common
/// ascent direction for the active rates; a vanishing norm certifies local
/// stationarity.
fn min_norm_point(points: &[Vec<f64>], out: &mut [f64]) {
    debug_assert!(!points.is_empty());
    out.copy_from_slice(&points[0]);
    if points.len() == 1 {
        return;
    }
    for _ in 0..40 {
        let pp = norm2(out);
        let mut best_dot = f64::INFINITY;
        let mut best = 0;
        for (k, g) in points.iter().enumerate() {
            let d = dot(g, out);
            if d < best_dot {
                best_dot = d;
                best = k;
            }
        }
        if best_dot >= pp - 1e-18 - 1e-12 * pp {
            break; // optimality: no vertex improves
        }
        let g = &points[best];
        // gamma minimizing ||(1-gamma) p + gamma g||^2
        let mut diff_norm2 = 0.0;
        let mut diff_dot_p = 0.0;
        for (pi, gi) in out.iter().zip(g) {
            let d = pi - gi;
            diff_norm2 += d * d;
            diff_dot_p += d * pi;
        }
        if diff_norm2 <= 0.0 {
            break;
        }
        let gamma = (diff_dot_p / diff_norm2).clamp(0.0, 1.0);
        for (pi, gi) in out.iter_mut().zip(g) {
            *pi = (1.0 - gamma) * *pi + gamma * gi;
        }
        if gamma == 0.0 {
            break;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    fn problem_for(net: &Network, ids: &[usize]) -> Problem {
        let nodes: Vec<NodeId> = ids.iter().map(|&i| NodeId::new(i).unwrap()).collect();
        Problem::new(&net.gain_matrix(), net.noises(), &nodes)
    }

    #[test]
    fn projection_clamps_and_scales() {
        let (net, _) = Network::random(4, 1.0, 1.0, 2.0, 1.0, 1.0, 1).unwrap();
        let p = problem_for(&net, &[1, 2, 3, 4]);
        let mut beta = vec![-0.5, 2.0, 2.0, 0.3, 0.4, 0.9];
        p.project(&mut beta);
        assert_eq!(beta[0], 0.0);
        let row0: f64 = beta[0..3].iter().map(|b| b * b).sum();
        assert!((row0 - 1.0).abs() < 1e-12);
        let row1: f64 = beta[3..5].iter().map(|b| b * b).sum();
        assert!(row1 <= 1.0); // already feasible, untouched
        assert_eq!(beta[3], 0.3);
    }

    #[test]
    fn independent_start_matches_closed_form() {
        let (net, _) = Network::random(5, 1.0, 1.0, 2.0, 1.0, 1.0, 2).unwrap();
        let p = problem_for(&net, &[1, 2, 3, 4, 5]);
        let beta = p.independent_start();
        let rates = p.reception_rates(&beta);
        let gains = net.gain_matrix();
        let ids: Vec<NodeId> = (1..=5).map(|i| NodeId::new(i).unwrap()).collect();
        for t in 1..5 {
            let sum: f64 = (0..t).map(|i| gains.gain(ids[i], ids[t])).sum();
            let expected = half_log2_1p(sum / net.noise(ids[t]));
            assert!((rates[t - 1] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn min_norm_point_two_vectors() {
        // opposite vectors: hull contains the origin
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let mut out = vec![0.0; 2];
        min_norm_point(&pts, &mut out);
        assert!(norm2(&out) < 1e-12);
        // same half-space: interpolates to the perpendicular foot
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        min_norm_point(&pts, &mut out);
        assert!((out[0] - 0.5).abs() < 1e-9 && (out[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn maximize_never_below_independent_start() {
        for seed in 0..12u64 {
            let (net, _) = Network::random(5, 1.0, 1.0, 2.0, 1.0, 1.0, 100 + seed).unwrap();
            let p = problem_for(&net, &[1, 2, 3, 4, 5]);
            let independent_snr = p.min_snr(&p.independent_start());
            let cfg = OptimizerConfig::default();
            let (beta, diag) = maximize(&p, &cfg, seed);
            assert!(p.min_snr(&beta) >= independent_snr);
            assert_eq!(diag.restarts, 21);
        }
    }
}
