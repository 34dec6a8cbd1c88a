use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

use super::*;

fn net(shapes: &[LayerShape], seed: u64) -> MlpNetwork {
    init_network(shapes, InitializerSpec::glorot(seed)).unwrap()
}

fn single(w: f64, b: f64, act: Activation) -> MlpNetwork {
    let layer = Dense { weights: array![[w]], biases: array![b], activation: act };
    MlpNetwork::from_layers(vec![layer], InitializerSpec::glorot(0)).unwrap()
}

/// Loss `sum_i c_i * a_i` over the output, so dL/da = c.
fn linear_loss(net: &MlpNetwork, x: &[f64], c: &[f64]) -> f64 {
    net.predict(x).unwrap().iter().zip(c).map(|(a, c)| a * c).sum()
}

/// Max relative error of backward() against central differences of
/// `linear_loss`.
fn fd_max_rel_error(net: &MlpNetwork, x: &[f64], c: &[f64], h: f64) -> f64 {
    let trace = net.forward(x).unwrap();
    let grads = net.backward(&trace, c).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weights.dim();
        let mut entries: Vec<(usize, Option<usize>)> =
            (0..rows).flat_map(|r| (0..cols).map(move |k| (r, Some(k)))).collect();
        entries.extend((0..rows).map(|r| (r, None)));
        for (r, k) in entries {
            let orig = match k {
                Some(k) => probe.layers()[l].weights[[r, k]],
                None => probe.layers()[l].biases[r],
            };
            let set = |p: &mut MlpNetwork, v: f64| match k {
                Some(k) => p.layers_mut()[l].weights[[r, k]] = v,
                None => p.layers_mut()[l].biases[r] = v,
            };
            set(&mut probe, orig + h);
            let up = linear_loss(&probe, x, c);
            set(&mut probe, orig - h);
            let down = linear_loss(&probe, x, c);
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = match k {
                Some(k) => grads.weights[l][[r, k]],
                None => grads.biases[l][r],
            };
            // central differences carry about 1e-10 absolute roundoff at h = 1e-6
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn glorot_bound_on_64x64() {
    let n = net(&[LayerShape::new(64, 64, Activation::Relu)], 3);
    let bound = (6.0f64 / 128.0).sqrt();
    assert!(n.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    assert!(n.layers()[0].biases.iter().all(|b| *b == 0.0));
}

#[test]
fn init_is_seed_deterministic() {
    let shapes = mlp_shapes(4, &[64, 64], 2, Activation::Linear);
    assert_eq!(net(&shapes, 5).to_bytes(), net(&shapes, 5).to_bytes());
    assert_ne!(net(&shapes, 5).to_bytes(), net(&shapes, 6).to_bytes());
}

#[test]
fn init_rejects_bad_shapes() {
    let g = InitializerSpec::glorot(0);
    assert!(init_network(&[LayerShape::new(0, 3, Activation::Relu)], g).is_err());
    assert!(matches!(
        init_network(&[LayerShape::new(2, 3, Activation::Relu), LayerShape::new(4, 1, Activation::Linear)], g),
        Err(Error::Dimension { expected: 3, got: 4 })
    ));
    assert!(init_network(
        &[LayerShape::new(2, 3, Activation::Softmax), LayerShape::new(3, 1, Activation::Linear)],
        g
    )
    .is_err());
}

#[test]
fn zero_relu_net_outputs_zero() {
    let mut n = net(&mlp_shapes(3, &[5], 2, Activation::Relu), 1);
    for l in n.layers_mut() {
        l.weights.fill(0.0);
    }
    let t = n.forward(&[1.0, -2.0, 3.0]).unwrap();
    assert!(t.post.iter().flatten().all(|a| *a == 0.0));
}

#[test]
fn identity_linear_passthrough() {
    let layer = Dense { weights: Array2::eye(2), biases: array![0.0, 0.0], activation: Activation::Linear };
    let n = MlpNetwork::from_layers(vec![layer], InitializerSpec::glorot(0)).unwrap();
    assert_eq!(n.predict(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
}

#[test]
fn hand_arithmetic_relu() {
    let t = single(2.0, 1.0, Activation::Relu).forward(&[3.0]).unwrap();
    assert_eq!(t.pre[0], vec![7.0]);
    assert_eq!(t.post[0], vec![7.0]);
}

#[test]
fn forward_rejects_bad_input() {
    let n = single(1.0, 0.0, Activation::Linear);
    assert!(matches!(n.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    assert!(matches!(n.forward(&[f64::NAN]), Err(Error::NonFinite(_))));
}

#[test]
fn linear_unit_gradient() {
    let n = single(5.0, 0.0, Activation::Linear);
    let g = n.backward(&n.forward(&[1.5]).unwrap(), &[1.0]).unwrap();
    assert_eq!(g.weights[0][[0, 0]], 1.5);
    assert_eq!(g.biases[0][0], 1.0);
}

#[test]
fn dead_relu_blocks_gradient() {
    let n = single(1.0, -10.0, Activation::Relu);
    let g = n.backward(&n.forward(&[2.0]).unwrap(), &[1.0]).unwrap();
    assert_eq!(g.weights[0][[0, 0]], 0.0);
    assert_eq!(g.biases[0][0], 0.0);
}

#[test]
fn backward_matches_finite_differences_4_8_3() {
    let shapes = vec![LayerShape::new(4, 8, Activation::Tanh), LayerShape::new(8, 3, Activation::Softmax)];
    let n = net(&shapes, 11);
    let err = fd_max_rel_error(&n, &[0.3, -1.2, 0.7, 2.0], &[0.5, -1.0, 2.0], 1e-6);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn batch_backward_sums_single_backward() {
    let n = net(&mlp_shapes(3, &[6, 5], 2, Activation::Linear), 2);
    let xs = array![[0.1, 0.2, -0.3], [1.0, -1.0, 0.5], [0.0, 0.4, 2.0]];
    let gs = array![[1.0, -0.5], [0.2, 0.3], [-1.0, 1.0]];
    let batch = n.backward_batch(&n.forward_batch(&xs).unwrap(), &gs).unwrap();
    let mut sum = GradientSet::zeros_like(&n);
    for i in 0..3 {
        let x: Vec<f64> = xs.row(i).to_vec();
        let g = n.backward(&n.forward(&x).unwrap(), &gs.row(i).to_vec()).unwrap();
        for l in 0..3 {
            sum.weights[l] += &g.weights[l];
            sum.biases[l] += &g.biases[l];
        }
    }
    for l in 0..3 {
        assert!(batch.weights[l].iter().zip(sum.weights[l].iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(batch.biases[l].iter().zip(sum.biases[l].iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    let single = n.predict(&xs.row(1).to_vec()).unwrap();
    let batched = n.predict_batch(&xs).unwrap();
    assert!(single.iter().zip(batched.row(1)).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn sgd_step() {
    let mut n = single(1.0, 0.0, Activation::Linear);
    let mut o = Optimizer::new(OptimizerConfig::sgd(0.1)).unwrap();
    let g = GradientSet { weights: vec![array![[2.0]]], biases: vec![array![0.0]] };
    o.apply(&mut n, &g).unwrap();
    assert!((n.layers()[0].weights[[0, 0]] - 0.8).abs() < 1e-15);
}

#[test]
fn zero_gradient_is_a_no_op() {
    let shapes = mlp_shapes(3, &[4], 2, Activation::Linear);
    for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(0.1)] {
        let mut n = net(&shapes, 9);
        let before = n.to_bytes();
        let mut o = Optimizer::new(cfg).unwrap();
        let zero = GradientSet::zeros_like(&n);
        o.apply(&mut n, &zero).unwrap();
        assert_eq!(n.to_bytes(), before);
    }
}

#[test]
fn adam_first_step_matches_hand_evaluation() {
    let (w0, g, lr) = (0.7, -0.25, 0.01);
    let mut n = single(w0, 0.0, Activation::Linear);
    let mut o = Optimizer::new(OptimizerConfig::adam(lr)).unwrap();
    let grads = GradientSet { weights: vec![array![[g]]], biases: vec![array![0.0]] };
    o.apply(&mut n, &grads).unwrap();
    // m1 = 0.1 g, v1 = 0.001 g^2; bias correction divides by 0.1 and 0.001.
    let m_hat = (0.1 * g) / (1.0 - 0.9);
    let v_hat = (0.001 * g * g) / (1.0 - 0.999);
    let expected = w0 - lr * m_hat / (v_hat.sqrt() + 1e-8);
    assert!((n.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
    assert!((n.layers()[0].weights[[0, 0]] - (w0 + lr)).abs() < 1e-9);
    assert_eq!(o.step_count(), 1);
}

#[test]
fn non_finite_gradient_aborts() {
    let mut n = single(1.0, 0.0, Activation::Linear);
    let before = n.clone();
    let mut o = Optimizer::new(OptimizerConfig::sgd(0.1)).unwrap();
    let g = GradientSet { weights: vec![array![[f64::INFINITY]]], biases: vec![array![0.0]] };
    assert!(matches!(o.apply(&mut n, &g), Err(Error::TrainingAborted(_))));
    assert_eq!(n, before);
}

#[test]
fn grad_clipping_caps_the_norm() {
    let mut n = single(0.0, 0.0, Activation::Linear);
    let mut cfg = OptimizerConfig::sgd(1.0);
    cfg.max_grad_norm = Some(1.0);
    let mut o = Optimizer::new(cfg).unwrap();
    let g = GradientSet { weights: vec![array![[3.0]]], biases: vec![array![4.0]] };
    o.apply(&mut n, &g).unwrap();
    assert!((n.layers()[0].weights[[0, 0]] + 0.6).abs() < 1e-15);
    assert!((n.layers()[0].biases[0] + 0.8).abs() < 1e-15);
}

#[test]
fn set_layer_weights_touches_only_named_rows() {
    let mut n = net(&mlp_shapes(4, &[6], 2, Activation::Linear), 4);
    let before = n.clone();
    n.set_layer_weights(0, &[], &[], &[]).unwrap();
    assert_eq!(n.to_bytes(), before.to_bytes());
    n.set_layer_weights(0, &[3], &[vec![9.0; 4]], &[1.0]).unwrap();
    for r in 0..6 {
        let same = n.layers()[0].weights.row(r).iter().zip(before.layers()[0].weights.row(r).iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert_eq!(same, r != 3);
        assert_eq!(n.layers()[0].biases[r] == before.layers()[0].biases[r], r != 3);
    }
    assert_eq!(n.layers()[1], before.layers()[1]);
    assert!(matches!(n.set_layer_weights(0, &[6], &[vec![0.0; 4]], &[0.0]), Err(Error::IndexOutOfRange(_))));
    assert!(matches!(n.set_layer_weights(2, &[0], &[vec![0.0; 4]], &[0.0]), Err(Error::IndexOutOfRange(_))));
    assert!(n.set_layer_weights(0, &[0], &[vec![f64::NAN; 4]], &[0.0]).is_err());
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let n = net(&mlp_shapes(4, &[8, 8], 3, Activation::Softmax), 21);
    let bytes = n.to_bytes();
    let back = MlpNetwork::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.initializer(), n.initializer());
    assert_eq!(back.hash(), n.hash());
    assert!(matches!(MlpNetwork::from_bytes(&bytes[..bytes.len() - 5]), Err(Error::Corrupt(_))));
    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(MlpNetwork::from_bytes(&future), Err(Error::Version { found: 2, supported: 1 })));
}

/// One hidden linear neuron with incoming weights scaled by `s`: the
/// gradient on its outgoing weight shrinks with `s`.
#[test]
fn outgoing_gradient_grows_with_incoming_scale() {
    let x = [0.8, -0.3, 0.5];
    let base_in = [0.4, 0.9, -0.2];
    let grad_at = |s: f64| {
        let l1 = Dense {
            weights: Array2::from_shape_vec((2, 3), [base_in.map(|w| s * w), [0.3, -0.1, 0.6]].concat()).unwrap(),
            biases: array![0.0, 0.0],
            activation: Activation::Linear,
        };
        let l2 = Dense { weights: array![[0.7, -0.4]], biases: array![0.0], activation: Activation::Linear };
        let n = MlpNetwork::from_layers(vec![l1, l2], InitializerSpec::glorot(0)).unwrap();
        let g = n.backward(&n.forward(&x).unwrap(), &[1.0]).unwrap();
        g.weights[1][[0, 0]].abs()
    };
    let scales = [1.0, 0.5, 0.1, 0.01, 1e-4, 0.0];
    let grads: Vec<f64> = scales.iter().map(|&s| grad_at(s)).collect();
    for w in grads.windows(2) {
        assert!(w[1] <= w[0], "{grads:?}");
    }
    assert!(grads[4] < 1e-3 * grads[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_nets_match_finite_differences(seed in any::<u64>(), depth in 1usize..=3) {
        let mut rng = crate::seed::rng(seed);
        let acts = [Activation::Relu, Activation::Tanh, Activation::Linear];
        let mut dims = vec![rng.gen_range(1..=6)];
        for _ in 0..depth {
            dims.push(rng.gen_range(1..=8));
        }
        let out_act = [Activation::Linear, Activation::Softmax, Activation::Tanh][rng.gen_range(0..3)];
        let shapes: Vec<LayerShape> = dims.windows(2).enumerate().map(|(i, w)| {
            let act = if i + 2 == dims.len() { out_act } else { acts[rng.gen_range(0..3)] };
            LayerShape::new(w[0], w[1], act)
        }).collect();
        let n = net(&shapes, seed);
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Skip inputs that land within h of a relu kink.
        let t = n.forward(&x).unwrap();
        let near_kink = t.pre.iter().zip(n.layers()).any(|(z, l)| {
            l.activation == Activation::Relu && z.iter().any(|v| v.abs() < 1e-4)
        });
        prop_assume!(!near_kink);
        let err = fd_max_rel_error(&n, &x, &c, 1e-6);
        prop_assert!(err < 1e-5, "max relative error {}", err);
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>()) {
        let n = net(&mlp_shapes(3, &[5, 4], 2, Activation::Softmax), seed);
        let x = [0.2, -0.7, 1.1];
        let a = n.forward(&x).unwrap();
        let b = n.forward(&x).unwrap();
        prop_assert_eq!(a, b);
    }
}
