use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netspill::estimator::{residual_identity_check, prepare};
use netspill::simulate::{generate_ba_graph, simulate_replication, DgpDraw};
use netspill::{
    build_instruments, estimate, estimate_with_truth, mc_study, simulate_panel, validate_dataset,
    Group, IvOption, McSettings, SimulationConfig, TrueParams, Truth, UnitId,
};

fn config(n: usize, horizon: usize, m: usize, params: TrueParams, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(n, horizon, m, params);
    cfg.seed = seed;
    cfg
}

fn mixed_params() -> TrueParams {
    TrueParams::from_slice(&[0.3, 0.5, 0.2, -0.4, 0.1, 0.6, 1.0, -1.0]).unwrap()
}

/// Forward iteration of the outcome equations from the stored components,
/// written with explicit loops over the edge list.
fn recompose(draw: &DgpDraw) -> Vec<Vec<f64>> {
    let data = &draw.data;
    let n = data.n_units();
    let horizon = data.horizon();
    let labels = data.clusters().labels().to_vec();
    let groups: Vec<usize> = (0..n).map(|i| data.partition().group_of(UnitId(i)).index()).collect();
    let edges = draw.nets.edges();
    let p = &draw.params;
    let mut y = vec![vec![0.0; horizon + 1]; n];
    for i in 0..n {
        y[i][0] = draw.v[i] + draw.epsilon.at(i, 0, 0);
    }
    for t in 1..=horizon {
        let cluster_mean = |j: usize, y: &Vec<Vec<f64>>| {
            let members: Vec<usize> = (0..n).filter(|&k| labels[k] == labels[j]).collect();
            members.iter().map(|&k| y[k][t - 1]).sum::<f64>() / members.len() as f64
        };
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut sums = [0.0; 2];
            let mut counts = [0usize; 2];
            for e in &edges {
                if e.dst.0 == i {
                    let s = e.src.0;
                    sums[groups[s]] += y[s][t - 1] - cluster_mean(s, &y);
                    counts[groups[s]] += 1;
                }
            }
            let nbr = |g: usize| if counts[g] == 0 { 0.0 } else { sums[g] / counts[g] as f64 };
            let (a, from_b, from_f, gamma) = if groups[i] == 0 {
                (p.alpha_b, p.beta_bb, p.beta_fb, p.gamma_b)
            } else {
                (p.alpha_f, p.beta_bf, p.beta_ff, p.gamma_f)
            };
            let xs: f64 = data.x(i, t).iter().sum();
            next[i] = a * y[i][t - 1]
                + from_b * nbr(0)
                + from_f * nbr(1)
                + gamma * xs
                + draw.v[i]
                + draw.pi[t - 1][labels[i]]
                + draw.epsilon.at(i, t, 0);
        }
        for i in 0..n {
            y[i][t] = next[i];
        }
    }
    y
}

#[test]
fn outcomes_recompose_from_stored_components() {
    for seed in 0..4 {
        let draw = simulate_panel(&config(40, 4, 2, mixed_params(), seed)).unwrap();
        let y = recompose(&draw);
        for (i, row) in y.iter().enumerate() {
            for (t, &want) in row.iter().enumerate() {
                let got = draw.data.y(i, t);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "y[{i},{t}] {got} vs {want}");
            }
        }
    }
}

#[test]
fn draws_are_deterministic_per_seed_and_replication() {
    let cfg = config(50, 5, 3, mixed_params(), 9);
    let a = simulate_replication(&cfg, 4).unwrap();
    let b = simulate_replication(&cfg, 4).unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.nets.edges(), b.nets.edges());
    assert_eq!(a.v, b.v);
    assert_eq!(a.pi, b.pi);
    let c = simulate_replication(&cfg, 5).unwrap();
    assert_ne!(a.v, c.v);
}

#[test]
fn simulated_datasets_validate_cleanly() {
    for m in [1, 3, 9] {
        let draw = simulate_panel(&config(100, 3, m, TrueParams::common(1.0), m as u64)).unwrap();
        let report = validate_dataset(&draw.data, &draw.nets);
        assert!(report.is_empty(), "{:?}", report.violations);
    }
}

#[test]
fn block_in_degrees_count_each_edge_twice() {
    for (n, m) in [(30, 1), (60, 4), (100, 9)] {
        let draw = simulate_panel(&config(n, 3, m, TrueParams::common(1.0), 1)).unwrap();
        let ba_edges = m * (m + 1) / 2 + m * (n - m - 1);
        for target in Group::ALL {
            for source in Group::ALL {
                let total: usize = draw
                    .data
                    .partition()
                    .members(target)
                    .iter()
                    .map(|&u| draw.nets.in_neighbors(0, 0, u, source).len())
                    .sum();
                assert_eq!(total, 2 * ba_edges, "n {n} m {m} {source}->{target}");
            }
        }
    }
}

#[test]
fn ba_graphs_are_simple_with_expected_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, m) in [(2, 1), (10, 3), (200, 5)] {
        let edges = generate_ba_graph(n, m, &mut rng).unwrap();
        assert_eq!(edges.len(), m * (m + 1) / 2 + m * (n - m - 1));
        let mut seen = HashSet::new();
        for &(a, b) in &edges {
            assert_ne!(a, b);
            assert!(a < n && b < n);
            assert!(seen.insert((a.min(b), a.max(b))));
        }
    }
    assert!(generate_ba_graph(3, 3, &mut rng).is_err());
}

#[test]
fn noiseless_draws_are_recovered_exactly() {
    for option in IvOption::ALL {
        for m in [1, 5] {
            let mut cfg = config(100, 5, m, mixed_params(), 2);
            cfg.noiseless = true;
            let draw = simulate_panel(&cfg).unwrap();
            let res = estimate(&draw.data, &draw.nets, option, 0.05).unwrap();
            for g in Group::ALL {
                let truth = draw.params.delta(g, cfg.p);
                let err = res
                    .group(g)
                    .delta_hat
                    .iter()
                    .zip(&truth)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err <= 1e-7, "{option:?} m {m} {g}: {err}");
            }
        }
    }
}

#[test]
fn residual_identity_holds_with_simple_instruments() {
    for seed in 0..5 {
        let cfg = config(100, 5, 1, mixed_params(), seed);
        let draw = simulate_panel(&cfg).unwrap();
        let prepared = prepare(&draw.data, &draw.nets).unwrap();
        let z = build_instruments(IvOption::Simple, &prepared.regs, &prepared.w_h, draw.data.clusters()).unwrap();
        for g in Group::ALL {
            let delta = draw.params.delta(g, cfg.p);
            let check = residual_identity_check(&draw.data, &prepared, &z, g, &delta, &draw.epsilon).unwrap();
            assert!(check.rel_error <= 1e-8, "{}", check.rel_error);
            assert!(check.lhs.iter().any(|v| v.abs() > 1e-3));
        }
        let (db, df) = (draw.params.delta(Group::B, cfg.p), draw.params.delta(Group::F, cfg.p));
        let truth = Truth { epsilon: &draw.epsilon, delta_b: &db, delta_f: &df };
        let res = estimate_with_truth(&draw.data, &draw.nets, IvOption::Simple, 0.05, truth).unwrap();
        assert!(res.groups.iter().all(|g| g.diagnostics.residual_identity_gap.unwrap() <= 1e-8));
    }
}

#[test]
fn mc_reports_do_not_depend_on_worker_count() {
    let cfg = config(50, 4, 1, TrueParams::common(0.0), 17);
    let run = |jobs| {
        let settings = McSettings { reps: 24, jobs, ..McSettings::default() };
        serde_json::to_string(&mc_study(&cfg, &settings).unwrap()).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn rejection_rates_are_nondecreasing_in_level() {
    for (seed, shift) in [(1, 0.0), (2, 0.05)] {
        let cfg = config(100, 5, 1, TrueParams::common(0.0), seed);
        let settings = McSettings { reps: 60, delta_shift: shift, ..McSettings::default() };
        let report = mc_study(&cfg, &settings).unwrap();
        assert_eq!(report.n_success, 60);
        let rates: Vec<f64> = report.rejection_by_level.iter().map(|l| l.rejection_rate).collect();
        assert_eq!(report.rejection_by_level.iter().map(|l| l.level).collect::<Vec<_>>(), vec![0.01, 0.05, 0.10]);
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    }
}

#[test]
fn true_nulls_follow_the_shifted_design() {
    let cfg = config(50, 3, 1, TrueParams::common(0.0), 4);
    let settings = McSettings { reps: 4, delta_shift: 0.1, ..McSettings::default() };
    let report = mc_study(&cfg, &settings).unwrap();
    assert_eq!(report.true_beta_fb, 0.1);
    assert_eq!(report.true_nulls, vec![netspill::Hypothesis::BF]);
}

#[test]
fn estimates_fall_within_three_standard_errors() {
    let cfg = config(500, 5, 1, TrueParams::common(1.0), 0);
    let (mut inside, mut total) = (0usize, 0usize);
    for rep in 0..100 {
        let draw = simulate_replication(&cfg, rep).unwrap();
        let res = estimate(&draw.data, &draw.nets, IvOption::ProjA, 0.05).unwrap();
        for g in Group::ALL {
            let truth = draw.params.delta(g, cfg.p);
            let est = res.group(g);
            for (k, want) in truth.iter().enumerate() {
                total += 1;
                if (est.delta_hat[k] - want).abs() <= 3.0 * est.se[k] {
                    inside += 1;
                }
            }
        }
    }
    assert!(inside as f64 / total as f64 >= 0.99, "{inside} of {total}");
}
