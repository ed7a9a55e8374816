use ebdnn::neuralnet::*;
use ebdnn::synth::{Dataset, NetShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(rng: &mut ChaCha8Rng) -> Network {
    let d = rng.random_range(1..4);
    let depth = rng.random_range(1..4);
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..7)).collect();
    let shape = NetShape::new(d, widths).unwrap();
    let params: Vec<f64> = (0..shape.parameter_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Network::from_parameters(shape, params).unwrap()
}

fn mse_at(net: &Network, params: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let mut probe = net.clone();
    probe.set_parameters(params).unwrap();
    let d = net.shape().input_width;
    xs.chunks(d).zip(ys).map(|(x, y)| (y - probe.predict(x)).powi(2)).sum::<f64>() / ys.len() as f64
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let mut checked = 0;
    for _ in 0..20 {
        let net = random_net(&mut rng);
        assert!(net.parameters().len() <= 200);
        let d = net.shape().input_width;
        let m = 5;
        let xs: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (loss, grad) = net.mse_gradient(&xs, &ys).unwrap();
        assert!((loss - mse_at(&net, net.parameters(), &xs, &ys)).abs() < 1e-12);
        let base = net.parameters().to_vec();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let up = mse_at(&net, &p, &xs, &ys);
            p[i] -= 2.0 * h;
            let down = mse_at(&net, &p, &xs, &ys);
            let fd = (up - down) / (2.0 * h);
            if grad[i].abs() > 1e-8 {
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs());
                assert!(rel < 1e-4, "param {i}: backprop {} vs fd {fd}", grad[i]);
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn first_layer_scaling_is_positively_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = NetShape::new(2, vec![6]).unwrap();
    let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = Network::from_layers(shape.clone(), vec![(w.clone(), Some(vec![0.0; 6])), (out.clone(), None)]).unwrap();
    let scaled_w: Vec<f64> = w.iter().map(|v| v * 2.5).collect();
    let scaled = Network::from_layers(shape, vec![(scaled_w, Some(vec![0.0; 6])), (out, None)]).unwrap();
    for x in [[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]] {
        let a = base.forward(&x).unwrap().1;
        let b = scaled.forward(&x).unwrap().1;
        for (u, v) in a.iter().zip(&b) {
            assert!((2.5 * u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn student_recovers_noiseless_teacher() {
    let shape = NetShape::new(1, vec![8]).unwrap();
    let teacher = init_network(shape.clone(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<f64> = (0..256).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| teacher.predict(&[x])).collect();
    let data = Dataset::new(1, xs, ys, 0.0, 12).unwrap();
    let student = init_network(shape, 13);
    let opts = TrainOptions { epochs: 500, batch_size: 32, learning_rate: 1e-2, seed: 1, ..Default::default() };
    let out = train(student, &data, &opts).unwrap();
    assert!(out.final_mse() < 1e-2, "final mse {}", out.final_mse());
}

#[test]
fn extraction_leaves_parameters_untouched() {
    let shape = NetShape::new(1, vec![10, 4]).unwrap();
    let f = ebdnn::synth::TargetFunction::f1(100).unwrap();
    let data = ebdnn::synth::generate_dataset(&f, 64, 1.0, 0).unwrap();
    let out = train(init_network(shape, 0), &data, &TrainOptions { epochs: 3, batch_size: 16, ..Default::default() }).unwrap();
    let before = out.network.parameters().to_vec();
    let basis = extract_basis(&out.network);
    assert_eq!(basis.len(), 4);
    assert_eq!(out.network.parameters(), before.as_slice());
    assert_eq!(basis.network().unwrap().parameters(), before.as_slice());
}

#[test]
fn sgd_and_adam_both_descend() {
    let f = ebdnn::synth::TargetFunction::f2(100).unwrap();
    let data = ebdnn::synth::generate_dataset(&f, 200, 0.1, 9).unwrap();
    let net = init_network(NetShape::new(1, vec![16, 8]).unwrap(), 4);
    let start = net.mse(&data);
    for (optimizer, lr) in [(Optimizer::Sgd, 1e-2), (Optimizer::Adam, 1e-3)] {
        let opts = TrainOptions { epochs: 30, batch_size: 20, learning_rate: lr, optimizer, seed: 2, clip_sup: None };
        let out = train(net.clone(), &data, &opts).unwrap();
        assert!(out.final_mse() < start, "{optimizer:?}: {} vs {start}", out.final_mse());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        prop_assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn swapped_output_map_is_a_basis_combination(seed in any::<u64>(), x in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = init_network(NetShape::new(1, vec![5, 3]).unwrap(), seed);
        let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let phi = extract_basis(&net).eval(&[x]).unwrap();
        let comb: f64 = phi.iter().zip(&theta).map(|(p, t)| p * t).sum();
        let out = net.with_output_weights(&theta).unwrap().forward(&[x]).unwrap().0;
        prop_assert!((comb - out).abs() <= 1e-12 * (1.0 + comb.abs()));
    }

    #[test]
    fn sparsity_verdict_definition(seed in any::<u64>(), s_bound in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let r = check_sparsity(&net, s_bound);
        let nonzero = net.parameters().iter().filter(|&&p| p != 0.0).count();
        prop_assert_eq!(r.nonzero_count, nonzero);
        prop_assert_eq!(r.is_s_sparse, nonzero <= s_bound && r.max_abs_param <= 1.0);
    }
}
