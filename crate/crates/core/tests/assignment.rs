mod common;

use coopsense::{
    brute_force_channel_assignment, evaluate_assignment, greedy_channel_assignment, greedy_channel_assignment_with,
    hungarian_min_cost, hungarian_seed, round_robin_assignment, round_robin_with, BruteForceLimits, ChannelAssignment,
    FusionRule, OptimizerOptions, ParameterPolicy, RoundRobinPattern,
};
use proptest::prelude::*;

/// Cheapest injective channel → SU map by trying every one.
fn min_cost_by_enumeration(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], j: usize, used: &mut Vec<bool>) -> f64 {
        if j == cost[0].len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for i in 0..cost.len() {
            if !used[i] {
                used[i] = true;
                best = best.min(cost[i][j] + go(cost, j + 1, used));
                used[i] = false;
            }
        }
        best
    }
    go(cost, 0, &mut vec![false; cost.len()])
}

fn coarse() -> ParameterPolicy {
    ParameterPolicy::Optimize(OptimizerOptions::coarse())
}

proptest! {
    #[test]
    fn hungarian_matches_enumeration(n in 1usize..=6, extra in 0usize..=2, seed in any::<u64>()) {
        use rand::Rng;
        let m = n.saturating_sub(extra).max(1);
        let mut r = common::rng(seed);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.gen_range(0.0..100.0)).collect()).collect();
        let owner = hungarian_min_cost(&cost).unwrap();
        prop_assert_eq!(owner.len(), m);
        let mut seen = vec![false; n];
        for &i in &owner {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        let got: f64 = owner.iter().enumerate().map(|(j, &i)| cost[i][j]).sum();
        prop_assert!((got - min_cost_by_enumeration(&cost)).abs() < 1e-9);
    }
}

#[test]
fn wide_cost_matrices_cover_every_channel() {
    let cost = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![5.0, 4.0, 3.0, 2.0, 1.0]];
    let owner = hungarian_min_cost(&cost).unwrap();
    assert_eq!(owner.len(), 5);
    for i in 0..2 {
        let load = owner.iter().filter(|&&o| o == i).count();
        assert!((2..=3).contains(&load));
    }
}

#[test]
fn search_hierarchy_holds_on_small_instances() {
    for seed in 0..3u64 {
        let s = common::preset_style(seed, 2, 2);
        let brute = brute_force_channel_assignment(&s, &BruteForceLimits::default()).unwrap();
        let greedy = greedy_channel_assignment_with(&s, 1e-4, coarse()).unwrap();
        let (_, seed_nt) = greedy.seed.clone().unwrap();
        assert!(brute.normalized_throughput() >= greedy.normalized_throughput() - 1e-12);
        assert!(greedy.normalized_throughput() >= seed_nt);
        assert!(greedy.additions <= 4);
        assert_eq!(brute.evaluations, 16);
    }
}

#[test]
fn infinite_delta_keeps_the_seed() {
    let s = common::preset_style(3, 3, 2);
    let g = greedy_channel_assignment_with(&s, f64::INFINITY, coarse()).unwrap();
    let (seed, seed_nt) = g.seed.clone().unwrap();
    assert_eq!(g.assignment, seed);
    assert_eq!(g.additions, 0);
    assert_eq!(g.normalized_throughput(), seed_nt);
    assert_eq!(seed, hungarian_seed(&s, coarse()).unwrap());
    for j in 0..2 {
        assert_eq!(seed.reporters(j), 1);
    }
}

#[test]
fn single_pair_problem() {
    let s = common::scenario(vec![vec![-15.0]], vec![1.0], vec![0.95], FusionRule::Or);
    let g = greedy_channel_assignment(&s, 1e-4).unwrap();
    assert_eq!(g.assignment, ChannelAssignment::full(1, 1));
    let b = brute_force_channel_assignment(&s, &BruteForceLimits::full_fidelity()).unwrap();
    assert_eq!(b.assignment, g.assignment);
    assert_eq!(b.normalized_throughput(), g.normalized_throughput());
}

#[test]
fn symmetric_two_by_two_splits_the_channels() {
    let s = common::scenario(
        vec![vec![-15.0, -15.0], vec![-15.0, -15.0]],
        vec![1.0, 1.0],
        vec![0.95, 0.95],
        FusionRule::Or,
    );
    let b = brute_force_channel_assignment(&s, &BruteForceLimits::full_fidelity()).unwrap();
    for i in 0..2 {
        assert_eq!(b.assignment.channels_of(i).count(), 1, "{}", b.assignment.to_compact());
    }
    let g = greedy_channel_assignment(&s, 1e-4).unwrap();
    assert!((g.normalized_throughput() - b.normalized_throughput()).abs() < 1e-6);
}

#[test]
fn round_robin_patterns() {
    let a = round_robin_assignment(10, 4, 2).unwrap();
    assert_eq!(
        a.compact_rows(),
        ["1100", "0110", "0011", "0001", "1100", "0110", "0011", "0001", "1100", "0110"]
    );
    let c = round_robin_with(10, 4, 2, RoundRobinPattern::Cyclic).unwrap();
    assert_eq!(c.compact_rows()[3], "1001");
    assert_eq!(
        round_robin_with(3, 4, 4, RoundRobinPattern::Cyclic).unwrap(),
        ChannelAssignment::full(3, 4)
    );
    assert_eq!(round_robin_assignment(4, 4, 1).unwrap().num_pairs(), 4);
    assert!(round_robin_assignment(4, 4, 0).is_err());
    assert!(round_robin_assignment(4, 4, 5).is_err());
}

#[test]
fn fixed_policy_uses_the_given_parameters() {
    let s = coopsense::preset("paper_4x4").unwrap();
    let a = round_robin_assignment(4, 4, 1).unwrap();
    let o = evaluate_assignment(
        &s,
        &a,
        ParameterPolicy::Fixed {
            tau_fraction: 0.02,
            window: 32,
        },
        "fixed",
    )
    .unwrap();
    assert_eq!(o.design.window, 32);
    for (i, j) in a.pairs() {
        assert!((o.design.tau_us[i][j] - 2000.0).abs() < 1e-9);
    }
    assert!(evaluate_assignment(
        &s,
        &a,
        ParameterPolicy::Fixed {
            tau_fraction: 0.0,
            window: 32
        },
        "x"
    )
    .is_err());
}

#[test]
fn empty_assignment_has_zero_throughput() {
    let s = coopsense::preset("paper_4x4").unwrap();
    let o = evaluate_assignment(&s, &ChannelAssignment::empty(4, 4), coarse(), "none").unwrap();
    assert_eq!(o.normalized_throughput(), 0.0);
}

#[test]
fn brute_force_refuses_large_instances() {
    let s = coopsense::preset("paper_10x4").unwrap();
    assert!(brute_force_channel_assignment(&s, &BruteForceLimits::default()).is_err());
}
