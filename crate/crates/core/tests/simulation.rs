use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use updown::graph::{cograph_sample, UGraph};
use updown::montecarlo::*;
use updown::perm::{recursive_separable_sample, Permutation};
use updown::rational::rat;

fn config(instance: InstanceKind, n: usize, t_grid: Vec<f64>, trajectories: usize, initial: InitialState) -> SimConfig {
    SimConfig {
        instance,
        n,
        p: rat(1, 2),
        t_grid,
        trajectories,
        master_seed: 20_240_601,
        initial,
    }
}

fn one_step(n: usize) -> Vec<f64> {
    vec![1.0 / (n * (n + 1)) as f64]
}

#[test]
fn one_step_row_from_identity() {
    let c = config(InstanceKind::Perm, 3, one_step(3), 100_000, InitialState::Explicit("123".into()));
    assert_eq!(c.step_budget(), vec![1]);
    let check = distribution_check(&c, &Reference::OneStep("123".into()), 4).unwrap();
    assert!(check.max_sigma <= 4.0, "{check:?}");
    assert!(check.chi_square.pass, "{check:?}");
}

#[test]
fn one_step_rows_small_levels() {
    let cases = [
        (InstanceKind::Perm, vec!["12", "21", "132", "312", "2413", "2143", "4321"]),
        (InstanceKind::Graph, vec!["K2", "E2", "P3", "P4", "C4", "E4"]),
    ];
    for (kind, starts) in cases {
        for start in starts {
            let state = SimState::decode(kind, start).unwrap();
            let n = state.size();
            let mut c = config(kind, n, one_step(n), 20_000, InitialState::Explicit(start.into()));
            c.p = rat(1, 3);
            let encoded = state.encode().unwrap();
            let check = distribution_check(&c, &Reference::OneStep(encoded), 4).unwrap();
            assert!(check.chi_square.pass, "{kind} {start}: {:?}", check.chi_square);
        }
    }
}

#[test]
fn long_run_reaches_stationary_law() {
    for kind in [InstanceKind::Perm, InstanceKind::Graph] {
        let start = match kind {
            InstanceKind::Perm => "1234",
            InstanceKind::Graph => "E4",
        };
        let c = config(kind, 4, vec![10.0], 20_000, InitialState::Explicit(start.into()));
        let check = distribution_check(&c, &Reference::Stationary, 4).unwrap();
        assert!(check.chi_square.pass, "{kind}: {:?}", check.chi_square);
    }
}

#[test]
fn stationary_samplers_match_exact_law() {
    for kind in [InstanceKind::Perm, InstanceKind::Graph] {
        let c = config(kind, 4, vec![0.0], 100_000, InitialState::Stationary);
        let check = distribution_check(&c, &Reference::Stationary, 4).unwrap();
        assert!(check.chi_square.pass, "{kind}: {:?}", check.chi_square);
    }
}

#[test]
fn sampled_structures_avoid_forbidden_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [4, 6, 9, 12] {
        for _ in 0..200 {
            assert!(!cograph_sample(n, 0.4, &mut rng).canonical().has_induced_p4());
            assert!(recursive_separable_sample(n, 0.4, &mut rng).is_separable());
        }
    }
}

#[test]
fn increasing_density_from_reverse_start() {
    let grid: Vec<f64> = (1..=20).map(|i| i as f64 / 10.0).collect();
    let c = config(InstanceKind::Perm, 60, grid, 48, InitialState::Reverse);
    let pattern = Pattern::parse(InstanceKind::Perm, "12").unwrap();
    let curve = estimate_density_curve(&c, &pattern, 4).unwrap();
    assert_eq!(curve.initial_mean, 0.0);
    assert_eq!(curve.prediction_kind, PredictionKind::Exact);
    for i in 0..curve.t.len() {
        let predicted = 0.5 * (1.0 - (-2.0 * curve.t[i]).exp());
        assert!((curve.prediction[i].unwrap() - predicted).abs() < 1e-15);
        assert!((curve.mean[i] - predicted).abs() <= 3.0 * curve.stderr[i] + 2e-2, "t={}", curve.t[i]);
        assert!((0.0..=1.0).contains(&curve.mean[i]) && curve.stderr[i] >= 0.0);
    }
}

#[test]
fn stationary_start_is_flat() {
    let c = config(InstanceKind::Perm, 50, vec![0.0, 0.5, 1.0, 2.0], 64, InitialState::Stationary);
    let pattern = Pattern::parse(InstanceKind::Perm, "12").unwrap();
    let curve = estimate_density_curve(&c, &pattern, 4).unwrap();
    assert_eq!(curve.stationary_value, Some(0.5));
    for i in 0..curve.t.len() {
        assert!((curve.mean[i] - 0.5).abs() <= 3.0 * curve.stderr[i], "t={}", curve.t[i]);
    }
}

#[test]
fn graph_edge_density_curve() {
    let grid: Vec<f64> = vec![0.25, 0.5, 1.0, 2.0];
    let mut c = config(InstanceKind::Graph, 40, grid, 48, InitialState::Reverse);
    c.p = rat(1, 3);
    let pattern = Pattern::parse(InstanceKind::Graph, "K2").unwrap();
    let curve = estimate_density_curve(&c, &pattern, 4).unwrap();
    assert_eq!(curve.initial_mean, 1.0);
    for i in 0..curve.t.len() {
        let e = (-2.0 * curve.t[i]).exp();
        let predicted = (2.0 / 3.0) * (1.0 - e) + e;
        assert!((curve.prediction[i].unwrap() - predicted).abs() < 1e-12);
        assert!((curve.mean[i] - predicted).abs() <= 3.0 * curve.stderr[i] + 2e-2);
    }
}

#[test]
fn nonseparable_pattern_envelope() {
    let c = config(InstanceKind::Perm, 30, vec![0.05, 0.1, 0.25, 1.0], 32, InitialState::Uniform);
    let pattern = Pattern::parse(InstanceKind::Perm, "2413").unwrap();
    let curve = estimate_density_curve(&c, &pattern, 4).unwrap();
    assert_eq!(curve.prediction_kind, PredictionKind::Envelope);
    assert_eq!(curve.stationary_value, Some(0.0));
    assert_eq!(curve.decay_rate, Some(12.0));
    let last = curve.t.len() - 1;
    assert!(curve.mean[last] <= curve.prediction[last].unwrap() + 3.0 * curve.stderr[last]);
    assert!(curve.mean[0] > curve.mean[last]);
}

#[test]
fn large_patterns_are_subsampled_deterministically() {
    let c = config(InstanceKind::Perm, 80, vec![0.0, 0.1], 4, InitialState::Uniform);
    let pattern = Pattern::parse(InstanceKind::Perm, "21354").unwrap();
    let a = estimate_density_curve(&c, &pattern, 1).unwrap();
    let b = estimate_density_curve(&c, &pattern, 3).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.mean.iter().all(|m| (0.0..=1.0).contains(m)));
    let too_big = Pattern::parse(InstanceKind::Perm, "12").unwrap();
    let tiny = config(InstanceKind::Perm, 1, vec![0.0], 1, InitialState::Reverse);
    assert!(estimate_density_curve(&tiny, &too_big, 1).is_err());
}

#[test]
fn frames_are_deterministic() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let c = config(InstanceKind::Perm, 20, vec![0.0], 1, InitialState::Explicit(Permutation::identity(20).to_string()));
    let steps: Vec<u64> = (0..=10).map(|i| i * 7).collect();
    let a = emit_frames(&c, &steps, dir1.path()).unwrap();
    let b = emit_frames(&c, &steps, dir2.path()).unwrap();
    assert_eq!(a.len(), 11);
    for (x, y) in a.iter().zip(&b) {
        let bytes = std::fs::read(x).unwrap();
        assert_eq!(bytes, std::fs::read(y).unwrap());
        assert_eq!(bytes.len(), "P5\n20 20\n255\n".len() + 400);
    }
    let first = std::fs::read(&a[0]).unwrap();
    let header = "P5\n20 20\n255\n".len();
    assert_eq!(first[header + 19 * 20], 0);
    let g = config(InstanceKind::Graph, 6, vec![0.0], 1, InitialState::Explicit("E6".into()));
    let paths = emit_frames(&g, &[0], dir1.path()).unwrap();
    let bytes = std::fs::read(&paths[0]).unwrap();
    let graph_header = "P5\n6 6\n255\n".len();
    assert_eq!(bytes.len(), graph_header + 36);
    assert!(bytes[graph_header..].iter().all(|&p| p == 255));
}

#[test]
fn graph_text_names_round_trip() {
    let g: UGraph = "P4".parse().unwrap();
    let s = SimState::Graph(g.to_labeled());
    assert_eq!(s.encode().unwrap(), g.to_string());
}
