use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::agents::{Agent, DqnHyperparams, PpoHyperparams};
use crate::envs::EnvKind;
use crate::nn::{init_network, mlp_shapes, Activation, InitializerSpec};

fn net(input: usize, hidden: &[usize], seed: u64) -> MlpNetwork {
    init_network(&mlp_shapes(input, hidden, 2, Activation::Linear), InitializerSpec::glorot(seed)).unwrap()
}

fn random_obs(n: usize, d: usize, seed: u64) -> ObservationSet {
    let mut rng = seed::rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    ObservationSet::from_rows(&rows, [0; 32], seed).unwrap()
}

fn trace_of(scores: Vec<Vec<f64>>) -> ActivationTrace {
    ActivationTrace { network: NetworkHash([7; 32]), env_digest: [0; 32], observation_count: 1, scores }
}

#[test]
fn collect_cardinality_and_determinism() {
    let agent = Agent::new_dqn(EnvKind::CartPole, DqnHyperparams::default(), 1).unwrap();
    let spec = EnvSpec::new(EnvKind::CartPole);
    let a = collect_observations(&agent, &spec, 2000, 5).unwrap();
    assert_eq!(a.len(), 2000);
    assert_eq!(a.obs_dim(), 4);
    assert_eq!(a, collect_observations(&agent, &spec, 2000, 5).unwrap());
    assert_ne!(a, collect_observations(&agent, &spec, 2000, 6).unwrap());
    // The untrained agent fails fast, so many episodes make up the set.
    assert!(a.episode_of(1999) > 10);
    assert_eq!(a.env_digest(), spec.digest());
    assert!(collect_observations(&agent, &spec, 0, 5).is_err());
    assert!(collect_observations(&agent, &EnvSpec::new(EnvKind::Acrobot), 10, 5).is_err());
}

#[test]
fn dead_neuron_scores_zero() {
    let mut n = net(3, &[5], 2);
    n.set_layer_weights(0, &[2], &[vec![0.0; 3]], &[-1.0]).unwrap();
    let t = compute_activation_trace(&n, &random_obs(50, 3, 1)).unwrap();
    assert_eq!(t.scores()[0][2], 0.0);
    assert!(t.scores()[0].iter().enumerate().all(|(j, s)| j == 2 || *s >= 0.0));
}

#[test]
fn single_observation_scores_are_its_activations() {
    let n = net(3, &[6, 4], 3);
    let obs = random_obs(1, 3, 9);
    let t = compute_activation_trace(&n, &obs).unwrap();
    let f = n.forward(obs.get(0)).unwrap();
    for l in 0..2 {
        let abs: Vec<f64> = f.post[l].iter().map(|v| v.abs()).collect();
        assert_eq!(t.scores()[l], abs);
    }
    assert_eq!(t.scores().len(), 2, "output layer is not traced");
}

#[test]
fn duplicated_set_gives_identical_scores() {
    let n = net(4, &[16, 8], 4);
    for count in [1, 7, 33, 250] {
        let obs = random_obs(count, 4, count as u64);
        let a = compute_activation_trace(&n, &obs).unwrap();
        let b = compute_activation_trace(&n, &obs.duplicated()).unwrap();
        assert_eq!(a.scores(), b.scores());
        assert_eq!(b.observation_count(), 2 * count as u64);
    }
}

#[test]
fn trace_errors() {
    let n = net(3, &[4], 0);
    assert!(ObservationSet::from_rows(&[], [0; 32], 0).is_err());
    assert!(matches!(compute_activation_trace(&n, &random_obs(5, 2, 0)), Err(Error::Dimension { .. })));
    let flat = init_network(&mlp_shapes(3, &[], 2, Activation::Linear), InitializerSpec::glorot(0)).unwrap();
    assert!(compute_activation_trace(&flat, &random_obs(5, 3, 0)).is_err());
}

#[test]
fn count_formula_examples() {
    assert_eq!(hypoactive_count(10.0, 64), 6);
    assert_eq!(hypoactive_count(50.0, 64), 32);
    assert_eq!(hypoactive_count(0.0, 64), 0);
    assert_eq!(hypoactive_count(100.0, 64), 64);
    // Half-up at exact halves.
    assert_eq!(hypoactive_count(50.0, 3), 2);
    assert_eq!(hypoactive_count(12.5, 4), 1);
    assert_eq!(hypoactive_count(10.0, 5), 1);
    assert_eq!(hypoactive_count(10.0, 4), 0);
}

#[test]
fn forget_rate_zero_masks_nothing() {
    let t = compute_activation_trace(&net(3, &[8, 8], 1), &random_obs(20, 3, 2)).unwrap();
    let m = detect_minor_regions(&t, 0.0).unwrap();
    assert!(m.is_empty());
    assert_eq!(m.layers().len(), 2);
    assert!(detect_minor_regions(&t, -1.0).is_err());
    assert!(detect_minor_regions(&t, 100.5).is_err());
    assert!(detect_minor_regions(&t, f64::NAN).is_err());
}

#[test]
fn fifty_percent_of_64_matches_full_sort() {
    let n = net(4, &[64, 64], 8);
    let t = compute_activation_trace(&n, &random_obs(300, 4, 3)).unwrap();
    let m = detect_minor_regions(&t, 50.0).unwrap();
    for (l, scores) in t.scores().iter().enumerate() {
        let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected: Vec<usize> = pairs[..32].iter().map(|p| p.1).collect();
        expected.sort_unstable();
        assert_eq!(m.layers()[l], expected);
    }
}

#[test]
fn ties_go_to_lowest_index() {
    let t = trace_of(vec![vec![1.0, 0.5, 0.5, 0.5, 2.0]]);
    // 40% of 5 = 2 neurons among the three tied at 0.5.
    assert_eq!(detect_minor_regions(&t, 40.0).unwrap().layers()[0], vec![1, 2]);
}

#[test]
fn trace_file_round_trip_and_binding() {
    let spec = EnvSpec::new(EnvKind::CartPole);
    let dqn = Agent::new_dqn(EnvKind::CartPole, DqnHyperparams::default(), 1).unwrap();
    let ppo = Agent::new_ppo(EnvKind::CartPole, PpoHyperparams::default(), 1).unwrap();
    let obs = collect_observations(&dqn, &spec, 100, 0).unwrap();
    for agent in [&dqn, &ppo] {
        let set = compute_agent_trace(agent, &obs).unwrap();
        let bytes = save_trace(&set);
        let back = load_trace(&bytes, agent).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_bytes(), bytes);
    }
    let set = compute_agent_trace(&dqn, &obs).unwrap();
    let other = Agent::new_dqn(EnvKind::CartPole, DqnHyperparams::default(), 2).unwrap();
    assert!(matches!(load_trace(&set.to_bytes(), &other), Err(Error::Binding(_))));
    assert!(matches!(load_trace(&set.to_bytes(), &ppo), Err(Error::Binding(_))));
    let empty = TraceSet { traces: vec![] };
    assert!(matches!(TraceSet::from_bytes(&empty.to_bytes()), Err(Error::Corrupt(_))));
    let hollow = TraceSet { traces: vec![("q".into(), trace_of(vec![]))] };
    assert!(matches!(TraceSet::from_bytes(&hollow.to_bytes()), Err(Error::Corrupt(_))));
    let bytes = set.to_bytes();
    assert!(TraceSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

/// Permutes hidden layer `l`'s neurons: rows of W[l], b[l] and columns of
/// W[l+1]. `perm[new] = old`.
fn permute_layer(n: &MlpNetwork, l: usize, perm: &[usize]) -> MlpNetwork {
    let mut out = n.clone();
    let src = &n.layers()[l];
    let rows: Vec<Vec<f64>> = perm.iter().map(|&o| src.weights.row(o).to_vec()).collect();
    let biases: Vec<f64> = perm.iter().map(|&o| src.biases[o]).collect();
    let idx: Vec<usize> = (0..perm.len()).collect();
    out.set_layer_weights(l, &idx, &rows, &biases).unwrap();
    let next = &n.layers()[l + 1];
    for (new, &old) in perm.iter().enumerate() {
        out.set_layer_column(l + 1, new, &next.weights.column(old).to_vec()).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_minimality_and_count_law(
        widths in proptest::collection::vec(1usize..40, 1..4),
        forget_rate in 0.0f64..=100.0,
        seed in any::<u64>(),
        tie_levels in 1u32..6,
    ) {
        // Scores drawn from few levels to exercise ties.
        let mut rng = seed::rng(seed);
        let scores: Vec<Vec<f64>> = widths
            .iter()
            .map(|&w| (0..w).map(|_| f64::from(rng.gen_range(0..tie_levels)) * 0.5).collect())
            .collect();
        let t = trace_of(scores.clone());
        let m = detect_minor_regions(&t, forget_rate).unwrap();
        prop_assert_eq!(m.layers().len(), widths.len());
        for (l, sel) in m.layers().iter().enumerate() {
            let w = widths[l];
            let k = hypoactive_count(forget_rate, w);
            prop_assert!((k as f64 - forget_rate * w as f64 / 100.0).abs() <= 0.5 + 1e-9);
            prop_assert_eq!(sel.len(), k);
            prop_assert!(sel.windows(2).all(|p| p[0] < p[1]));
            let unselected: Vec<usize> = (0..w).filter(|j| !sel.contains(j)).collect();
            for &s in sel {
                for &u in &unselected {
                    let (a, b) = (scores[l][s], scores[l][u]);
                    prop_assert!(a < b || (a == b && s < u));
                }
            }
        }
    }

    #[test]
    fn integer_rates_match_integer_rounding(forget_rate in 0u32..=100, width in 0usize..300) {
        let exact = (forget_rate as usize * width * 2 + 100) / 200;
        prop_assert_eq!(hypoactive_count(f64::from(forget_rate), width), exact);
    }

    #[test]
    fn masks_grow_with_forget_rate(seed in any::<u64>(), a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut rng = seed::rng(seed);
        let t = trace_of(vec![(0..33).map(|_| f64::from(rng.gen_range(0..8u32))).collect(), (0..12).map(|_| rng.gen()).collect()]);
        let small = detect_minor_regions(&t, lo).unwrap();
        let big = detect_minor_regions(&t, hi).unwrap();
        for (s, b) in small.layers().iter().zip(big.layers()) {
            prop_assert!(s.iter().all(|j| b.contains(j)));
        }
    }

    #[test]
    fn masks_follow_neuron_permutations(seed in any::<u64>(), forget_rate in 0.0f64..=100.0) {
        let n = net(3, &[10, 7], seed);
        let obs = random_obs(40, 3, seed ^ 1);
        let mut rng = seed::rng(seed);
        let mut perm: Vec<usize> = (0..10).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let p = permute_layer(&n, 0, &perm);
        let before = detect_minor_regions(&compute_activation_trace(&n, &obs).unwrap(), forget_rate).unwrap();
        let after = detect_minor_regions(&compute_activation_trace(&p, &obs).unwrap(), forget_rate).unwrap();
        let mut mapped: Vec<usize> = after.layers()[0].iter().map(|&new| perm[new]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(&mapped, &before.layers()[0]);
        prop_assert_eq!(&after.layers()[1], &before.layers()[1]);
    }

    #[test]
    fn output_layer_never_masked(hidden in proptest::collection::vec(1usize..12, 1..4), seed in any::<u64>()) {
        let n = net(2, &hidden, seed);
        let t = compute_activation_trace(&n, &random_obs(5, 2, seed)).unwrap();
        let m = detect_minor_regions(&t, 100.0).unwrap();
        prop_assert_eq!(m.layers().len(), hidden.len());
        for (l, sel) in m.layers().iter().enumerate() {
            prop_assert_eq!(sel.len(), hidden[l]);
        }
        let relu_nonneg = t.scores().iter().flatten().all(|s| *s >= 0.0);
        prop_assert!(relu_nonneg);
    }
}
