//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured margins (`cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance is pinned in the assertions; seeds are fixed so runs are
//! reproducible. The suites exercise the public API only.

use dfroute::experiments::{
    run_mspa_quality, run_nnsa_size, ExperimentConfig, ExperimentKind, Reference,
};
use dfroute::{
    brute_force_optimal, df_rate, enumerate_routes, grid_oracle_df_rate, mspa, nearest_neighbor_set,
    nna, nnsa_optimal, pi_size, three_node_closed_form, Network, NnaOutcome, NodeId,
    OptimizerConfig, PartialRoute, RateMode, Route,
};
use num_bigint::BigUint;
use rayon::prelude::*;

fn sample(d: usize, seed: u64) -> Network {
    let (net, _) = Network::random(d, 1.0, 1.0, 2.0, 1.0, 1.0, seed).expect("valid sample");
    net
}

fn full_route(d: usize) -> Route {
    Route::new((1..=d).map(|i| NodeId::new(i).unwrap()).collect(), d).unwrap()
}

/// |value - reference| relative to the reference.
fn rel_gap(value: f64, reference: f64) -> f64 {
    (reference - value).abs() / reference.abs().max(1e-300)
}

#[test]
fn criterion_1_oracle_equivalence() {
    let cfg = OptimizerConfig::default();

    // 100 random 3-node networks: optimizer vs the 1-D closed form
    let worst_3node = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let net = sample(3, seed);
            let opt = df_rate(&net, &full_route(3), RateMode::Coherent, &cfg).unwrap().rate;
            let oracle = three_node_closed_form(&net).unwrap();
            let gap = rel_gap(opt, oracle);
            assert!(gap <= 1e-6, "seed {seed}: optimizer {opt} vs closed form {oracle}");
            gap
        })
        .reduce(|| 0.0, f64::max);

    // 50 random 4-node networks: optimizer vs grid oracles on the full route
    let worst_4node = (11_000..11_050u64)
        .into_par_iter()
        .map(|seed| {
            let net = sample(4, seed);
            let route = full_route(4);
            let opt = df_rate(&net, &route, RateMode::Coherent, &cfg).unwrap().rate;
            let coarse = grid_oracle_df_rate(&net, &route, 40).unwrap().rate;
            let fine = grid_oracle_df_rate(&net, &route, 200).unwrap().rate;
            assert!(opt >= coarse - 1e-6, "seed {seed}: grid(40) {coarse} beats optimizer {opt}");
            let gap = rel_gap(opt, fine);
            assert!(gap <= 1e-3, "seed {seed}: optimizer {opt} vs grid(200) {fine}");
            gap
        })
        .reduce(|| 0.0, f64::max);

    println!(
        "acceptance criterion 1 (oracle equivalence): PASS \
         worst 3-node rel gap {worst_3node:.3e} (tol 1e-6), \
         worst 4-node grid-200 rel gap {worst_4node:.3e} (tol 1e-3)"
    );
}

#[test]
fn criterion_2_nna_optimality() {
    let cfg = OptimizerConfig::default();

    // coherent mode, 500 networks with D in {4, 5}
    let (normal, worst) = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let d = if k % 2 == 0 { 4 } else { 5 };
            let net = sample(d, 30_000 + k);
            match nna(&net) {
                NnaOutcome::Complete { route } => {
                    let rate = df_rate(&net, &route, RateMode::Coherent, &cfg).unwrap().rate;
                    let max =
                        brute_force_optimal(&net, RateMode::Coherent, &cfg, false).unwrap().max_rate;
                    let gap = (max - rate) / max.abs().max(1e-300);
                    assert!(gap <= 1e-6, "seed {}: nna {rate} vs brute {max}", 30_000 + k);
                    (1usize, gap)
                }
                NnaOutcome::Premature { .. } => (0usize, 0.0),
            }
        })
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));

    // independent-codeword variant, D up to 7, tolerance 1e-9
    let (normal_ind, worst_ind) = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let d = 4 + (k as usize % 4);
            let net = sample(d, 35_000 + k);
            match nna(&net) {
                NnaOutcome::Complete { route } => {
                    let rate =
                        df_rate(&net, &route, RateMode::IndependentCodewords, &cfg).unwrap().rate;
                    let max = brute_force_optimal(&net, RateMode::IndependentCodewords, &cfg, false)
                        .unwrap()
                        .max_rate;
                    let gap = (max - rate) / max.abs().max(1e-300);
                    assert!(gap <= 1e-9, "seed {}: nna {rate} vs brute {max}", 35_000 + k);
                    (1usize, gap)
                }
                NnaOutcome::Premature { .. } => (0usize, 0.0),
            }
        })
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));

    assert!(normal > 100, "too few normal NNA terminations to be meaningful");
    assert!(normal_ind > 100);
    println!(
        "acceptance criterion 2 (NNA optimality): PASS \
         coherent {normal}/500 normal terminations worst rel gap {worst:.3e} (tol 1e-6); \
         independent {normal_ind}/500 normal worst {worst_ind:.3e} (tol 1e-9)"
    );
}

#[test]
fn criterion_3_nnsa_optimality() {
    let cfg = OptimizerConfig::default();
    let cap = 1_000_000;

    let worst_coherent = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let d = 3 + (k as usize % 3); // 3, 4, 5
            let net = sample(d, 50_000 + k);
            let best = nnsa_optimal(&net, RateMode::Coherent, &cfg, cap).unwrap();
            let max = brute_force_optimal(&net, RateMode::Coherent, &cfg, false).unwrap().max_rate;
            let gap = rel_gap(best.rate, max);
            assert!(gap <= 1e-6, "seed {}: nnsa {} vs brute {max}", 50_000 + k, best.rate);
            gap
        })
        .reduce(|| 0.0, f64::max);

    let worst_independent = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let d = 4 + (k as usize % 4); // 4..7
            let net = sample(d, 60_000 + k);
            let best = nnsa_optimal(&net, RateMode::IndependentCodewords, &cfg, cap).unwrap();
            let max = brute_force_optimal(&net, RateMode::IndependentCodewords, &cfg, false)
                .unwrap()
                .max_rate;
            let gap = rel_gap(best.rate, max);
            assert!(gap <= 1e-9, "seed {}: nnsa {} vs brute {max}", 60_000 + k, best.rate);
            gap
        })
        .reduce(|| 0.0, f64::max);

    println!(
        "acceptance criterion 3 (NNSA optimality): PASS \
         coherent worst rel gap {worst_coherent:.3e} (tol 1e-6, 200 networks D<=5); \
         independent worst {worst_independent:.3e} (tol 1e-9, 200 networks D<=7)"
    );
}

#[test]
fn criterion_4_mspa_optimality_independent() {
    let cfg = OptimizerConfig::default();
    let worst = (0..1000u64)
        .into_par_iter()
        .map(|k| {
            let d = 3 + (k as usize % 5); // 3..7
            let net = sample(d, 40_000 + k);
            let route = mspa(&net);
            let rate = df_rate(&net, &route, RateMode::IndependentCodewords, &cfg).unwrap().rate;
            let max = brute_force_optimal(&net, RateMode::IndependentCodewords, &cfg, false)
                .unwrap()
                .max_rate;
            let gap = (max - rate).abs() / max.abs().max(1.0);
            assert!(gap <= 1e-9, "seed {}: mspa {rate} vs brute {max}", 40_000 + k);
            gap
        })
        .reduce(|| 0.0, f64::max);
    println!(
        "acceptance criterion 4 (MSPA optimality in independent mode): PASS \
         worst gap {worst:.3e} over 1000 networks D<=7 (tol 1e-9)"
    );
}

#[test]
fn criterion_5_mspa_quality_statistics() {
    let run = |d: usize, trials: usize| {
        let mut cfg = ExperimentConfig::new(ExperimentKind::MspaQuality, d, trials, 1);
        cfg.reference = Reference::NnsaBacked; // candidate-backed reference keeps this fast
        let (_, summary) = run_mspa_quality(&cfg).unwrap();
        assert_eq!(summary.failed, 0, "D={d}: failed trials");
        (summary.mean_ratio.unwrap(), summary.optimal_fraction.unwrap())
    };

    let (mean3, frac3) = run(3, 500);
    assert_eq!(frac3, 1.0, "D=3 optimal fraction must be exactly 1");
    assert_eq!(mean3, 1.0, "D=3 mean ratio must be exactly 1");

    let (mean4, frac4) = run(4, 1000);
    assert!(frac4 >= 0.99, "D=4 optimal fraction {frac4} < 0.99");
    assert!(mean4 >= 0.9995, "D=4 mean ratio {mean4} < 0.9995");

    let (mean5, frac5) = run(5, 300);
    assert!(frac5 >= 0.97, "D=5 optimal fraction {frac5} < 0.97");

    println!(
        "acceptance criterion 5 (MSPA quality statistics): PASS \
         D=3 {mean3}/{frac3} (exact 1/1); \
         D=4 mean {mean4:.7} (>=0.9995) fraction {frac4:.5} (>=0.99); \
         D=5 mean {mean5:.7} fraction {frac5:.5} (>=0.97)"
    );
}

#[test]
fn criterion_6_candidate_set_sizes() {
    // pi_size anchors: D=8 verified against full enumeration, D=11 by formula
    let count8 = enumerate_routes(8).count();
    assert_eq!(count8, 1957);
    assert_eq!(pi_size(8), BigUint::from(1957u32));
    assert_eq!(pi_size(11), BigUint::from(986_410u32));

    let cfg = ExperimentConfig::new(ExperimentKind::NnsaSize, 8, 1000, 2);
    let (_, summary) = run_nnsa_size(&cfg).unwrap();
    let median = summary.median_fraction.unwrap();
    assert_eq!(summary.failed, 0);
    assert_eq!(summary.censored, 0);
    assert!(median <= 0.02, "median candidate fraction {median} > 0.02");
    println!(
        "acceptance criterion 6 (candidate-set sizes): PASS \
         pi_size(8)=1957 by enumeration, pi_size(11)=986410; \
         D=8 median fraction {median:.5} (<= 0.02 over 1000 unit-square trials)"
    );
}

#[test]
fn criterion_7_property_suites() {
    let cfg = OptimizerConfig::default();

    // rate invariance under a common power/noise scale
    for &c in &[1e-3, 7.3, 1e4] {
        for (d, seed, mode) in
            [(4, 5u64, RateMode::Coherent), (6, 6, RateMode::IndependentCodewords)]
        {
            let net = sample(d, seed);
            let route = full_route(d);
            let base = df_rate(&net, &route, mode, &cfg).unwrap().rate;
            let scaled_net = Network::from_positions(
                net.positions().unwrap(),
                &vec![c; d],
                &vec![c; d],
                net.kappa(),
                net.eta(),
            )
            .unwrap();
            let scaled = df_rate(&scaled_net, &route, mode, &cfg).unwrap().rate;
            assert!(
                rel_gap(scaled, base) <= 1e-9,
                "scaling c={c} d={d}: {scaled} vs {base}"
            );
        }
    }

    // rate invariance under consistent relay relabeling
    for seed in 0..5u64 {
        let net = sample(5, 100 + seed);
        let positions = net.positions().unwrap();
        // reverse the relay block: 2,3,4 -> 4,3,2 (source and destination fixed)
        let perm = [0usize, 3, 2, 1, 4];
        let mut relabeled = vec![(0.0, 0.0); 5];
        for (old, &new) in perm.iter().enumerate() {
            relabeled[new] = positions[old];
        }
        let relabeled_net =
            Network::from_positions(&relabeled, &[1.0; 5], &[1.0; 5], 1.0, 2.0).unwrap();
        let route = Route::parse("1,2,4,5", 5).unwrap();
        let mapped = Route::new(
            route.nodes().iter().map(|n| NodeId::new(perm[n.get() - 1] + 1).unwrap()).collect(),
            5,
        )
        .unwrap();
        for (mode, tol) in
            [(RateMode::Coherent, 1e-6), (RateMode::IndependentCodewords, 1e-12)]
        {
            let a = df_rate(&net, &route, mode, &cfg).unwrap().rate;
            let b = df_rate(&relabeled_net, &mapped, mode, &cfg).unwrap().rate;
            assert!(rel_gap(b, a) <= tol, "relabel seed {seed}: {a} vs {b}");
        }
    }

    // coherent rate dominates the independent-codeword rate
    for k in 0..20u64 {
        let d = 4 + (k as usize % 2);
        let net = sample(d, 200 + k);
        let route = full_route(d);
        let coherent = df_rate(&net, &route, RateMode::Coherent, &cfg).unwrap().rate;
        let independent =
            df_rate(&net, &route, RateMode::IndependentCodewords, &cfg).unwrap().rate;
        assert!(coherent >= independent - 1e-9, "seed {}: {coherent} < {independent}", 200 + k);
    }

    // every MSPA choice lies in the nearest neighbor set (10^4 random steps)
    let mut steps = 0usize;
    let mut seed = 0u64;
    while steps < 10_000 {
        let net = sample(8, 700_000 + seed);
        let gains = net.gain_matrix();
        let route = mspa(&net);
        let mut prefix = PartialRoute::source();
        for &chosen in &route.nodes()[1..] {
            let set = nearest_neighbor_set(&gains, &prefix);
            assert!(
                set.members.contains(&chosen),
                "seed {seed}: mspa chose {chosen} outside {:?}",
                set.members
            );
            steps += 1;
            prefix = PartialRoute::new(
                prefix.nodes().iter().copied().chain([chosen]).collect(),
                8,
            )
            .unwrap();
        }
        seed += 1;
    }

    // enumeration count equals pi_size for D in [2, 8]
    for d in 2..=8usize {
        assert_eq!(BigUint::from(enumerate_routes(d).count()), pi_size(d), "d={d}");
    }

    // deterministic replay of every seeded experiment, for any worker count
    let mut mspa_cfg = ExperimentConfig::new(ExperimentKind::MspaQuality, 4, 100, 7);
    mspa_cfg.reference = Reference::NnsaBacked;
    let (r1, s1) = run_mspa_quality(&mspa_cfg).unwrap();
    let (r2, s2) = run_mspa_quality(&mspa_cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(s1, s2);
    mspa_cfg.workers = Some(1);
    let (r3, s3) = run_mspa_quality(&mspa_cfg).unwrap();
    mspa_cfg.workers = Some(4);
    let (r4, s4) = run_mspa_quality(&mspa_cfg).unwrap();
    assert_eq!(r1, r3);
    assert_eq!(r3, r4);
    assert_eq!(s3, s4);
    let nnsa_cfg = ExperimentConfig::new(ExperimentKind::NnsaSize, 6, 100, 8);
    let (n1, t1) = run_nnsa_size(&nnsa_cfg).unwrap();
    let (n2, t2) = run_nnsa_size(&nnsa_cfg).unwrap();
    assert_eq!(n1, n2);
    assert_eq!(t1, t2);

    // sampled networks always pass construction validation
    let invalid = (0..10_000u64)
        .into_par_iter()
        .filter(|&s| Network::random(6, 1.0, 1.0, 2.0, 1.0, 1.0, s).is_err())
        .count();
    assert_eq!(invalid, 0);

    println!(
        "acceptance criterion 7 (property suites): PASS \
         scaling, relabeling, coherent>=independent, mspa-in-nn-set (10^4 steps), \
         enumeration counts, deterministic replay, sampler validation (10^4 seeds)"
    );
}
