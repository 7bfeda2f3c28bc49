use dna::corridor::LocalKey;
use dna::maps::{lake10, random_map_text, LAKE10_CELLS};
use dna::search::*;
use dna::solver::Benchmark;
use dna::{Error, GridConfig, GridMdp, GridState};
use proptest::prelude::*;

fn keys(outcome: &SearchOutcome) -> Vec<LocalKey> {
    let mut k: Vec<_> = outcome.options.iter().map(|o| o.local_key()).collect();
    k.sort();
    k
}

fn lake_search(eps: f64) -> SearchOutcome {
    let mdp = lake10().unwrap();
    let bench = Benchmark::solve(&mdp).unwrap();
    let cfg = SearchConfig::new(GridState::yx(0, 0), eps, LAKE10_CELLS, 2, 3);
    corridor_search(&mdp, &bench.q, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruning_matches_brute_force(
        seed in any::<u64>(),
        rows in 2usize..=5,
        cols in 2usize..=5,
        d in 1usize..=2,
        spacing_pick in 0usize..5,
        cells in 1usize..=3,
        eps in 0.2f64..1.0,
        slippery in any::<bool>(),
    ) {
        let spacing = 1 + spacing_pick % (2 * d + 1);
        let config = if slippery { GridConfig::default() } else { GridConfig::deterministic(0.9) };
        let mdp = GridMdp::from_text(&random_map_text(rows, cols, 0.2, seed), config).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        prop_assume!(bench.values[mdp.start()] > 0.0);
        let cfg = SearchConfig::new(GridState::yx(0, 0), eps, cells, d, spacing);
        let pruned = corridor_search(&mdp, &bench.q, &cfg).unwrap();
        let brute = brute_force_search(&mdp, &bench.q, &cfg).unwrap();
        let a: Vec<_> = pruned.options.iter().map(|o| o.corridor.clone()).collect();
        let b: Vec<_> = brute.options.iter().map(|o| o.corridor.clone()).collect();
        prop_assert_eq!(a, b);
        let r = &pruned.report;
        prop_assert!(r.solved <= r.enumerated && r.enumerated <= r.upper_bound);
        prop_assert!(brute.report.enumerated <= brute.report.upper_bound);
    }

    #[test]
    fn options_clear_epsilon_and_are_sorted(seed in any::<u64>(), eps in 0.3f64..1.0) {
        let mdp = GridMdp::from_text(&random_map_text(5, 5, 0.2, seed), GridConfig::default()).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        prop_assume!(bench.values[mdp.start()] > 0.0);
        let cfg = SearchConfig::new(GridState::yx(0, 0), eps, 2, 1, 2);
        let out = corridor_search(&mdp, &bench.q, &cfg).unwrap();
        for o in &out.options {
            prop_assert!(o.ratio >= eps - 1e-9);
            prop_assert_eq!(o.corridor.len(), 2);
            prop_assert!((o.local_value / out.benchmark_value - o.ratio).abs() < 1e-12);
        }
        for pair in out.options.windows(2) {
            prop_assert!(pair[0].ratio >= pair[1].ratio);
        }
        let unique: std::collections::BTreeSet<_> = keys(&out).into_iter().collect();
        prop_assert_eq!(unique.len(), out.options.len());
    }

    #[test]
    fn lowering_epsilon_never_removes_options(seed in any::<u64>(), hi in 0.5f64..1.0, drop in 0.0f64..0.4) {
        let mdp = GridMdp::from_text(&random_map_text(5, 5, 0.2, seed), GridConfig::default()).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        prop_assume!(bench.values[mdp.start()] > 0.0);
        let run = |eps| corridor_search(&mdp, &bench.q, &SearchConfig::new(GridState::yx(0, 0), eps, 3, 1, 2)).unwrap();
        let strict = keys(&run(hi));
        let loose = keys(&run(hi - drop));
        prop_assert!(strict.iter().all(|k| loose.contains(k)));
    }
}

#[test]
fn bundled_lake_option_counts() {
    let counts: Vec<usize> = [0.99, 0.95, 0.90].map(|e| lake_search(e).options.len()).to_vec();
    assert_eq!(counts, vec![1, 20, 24]);
}

#[test]
fn bundled_lake_sets_are_nested() {
    let sets: Vec<Vec<LocalKey>> = [0.99, 0.95, 0.90].map(|e| keys(&lake_search(e))).to_vec();
    for pair in sets.windows(2) {
        assert!(pair[0].iter().all(|k| pair[1].contains(k)));
    }
}

#[test]
fn bundled_lake_best_option() {
    let out = lake_search(0.99);
    let best = &out.options[0];
    assert_eq!(best.id(), "0,0>3,0>3,3>3,6>6,6:E");
    assert!(best.ratio >= 0.99);
    let bound = best.bound.unwrap();
    assert!(bound.raw > 0.0 && bound.raw < 1.0);
}

#[test]
fn worthless_start_is_rejected() {
    let mdp = GridMdp::from_text("SH\nHG", GridConfig::default()).unwrap();
    let bench = Benchmark::solve(&mdp).unwrap();
    let cfg = SearchConfig::new(GridState::yx(0, 0), 0.9, 2, 1, 1);
    assert!(matches!(corridor_search(&mdp, &bench.q, &cfg), Err(Error::ZeroBenchmark)));
}

#[test]
fn qlearning_mode_finds_options_on_an_open_map() {
    let mdp = dna::maps::open4().unwrap();
    let bench = Benchmark::solve(&mdp).unwrap();
    let mut cfg = SearchConfig::new(GridState::yx(0, 0), 0.9, 2, 1, 2);
    cfg.mode = SolverMode::QLearning;
    cfg.qlearn.max_episodes = 20_000;
    cfg.qlearn.seed = 4;
    let learned = corridor_search(&mdp, &bench.q, &cfg).unwrap();
    cfg.mode = SolverMode::Exact;
    let exact = corridor_search(&mdp, &bench.q, &cfg).unwrap();
    assert!(!learned.options.is_empty());
    assert!(keys(&learned).iter().all(|k| keys(&exact).contains(k)));
}
