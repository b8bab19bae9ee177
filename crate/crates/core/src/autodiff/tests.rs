use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_batch(n: usize, d: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.random_range(-2.0..2.0))
}

/// Plain loop evaluation of a tanh network, independent of the matrix code.
fn reference_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = net.weights().len() - 1;
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        let mut next = vec![0.0; w.ncols()];
        for (j, out) in next.iter_mut().enumerate() {
            let mut s = b[(0, j)];
            for (i, hi) in h.iter().enumerate() {
                s += hi * w[(i, j)];
            }
            *out = if l < last { s.tanh() } else { s };
        }
        h = next;
    }
    h
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

#[test]
fn zero_single_layer_outputs_zero() {
    let net = DenseNet::zeros(&[4, 3], Activation::Tanh).unwrap();
    assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);
}

#[test]
fn identity_layer_is_identity() {
    let net = DenseNet::identity(3).unwrap();
    assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
}

#[test]
fn forward_matches_reference() {
    let mut r = rng(1);
    let net = DenseNet::xavier(&[5, 7, 6, 2], Activation::Tanh, &mut r).unwrap();
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = reference_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-13);
        }
    }
    assert!(net.forward(&[1.0; 4]).is_err());
}

#[test]
fn parameter_count_and_round_trip() {
    let mut r = rng(2);
    let net = DenseNet::xavier(&[3, 8, 2], Activation::Tanh, &mut r).unwrap();
    assert_eq!(net.n_params(), 4 * 8 + 9 * 2);
    let p = ParamVector::pack(&[&net]);
    let mut other = DenseNet::zeros(&[3, 8, 2], Activation::Tanh).unwrap();
    p.unpack(&mut [&mut other]).unwrap();
    assert_eq!(other, net);
    assert!(ParamVector(vec![0.0; 3]).unpack(&mut [&mut other]).is_err());
}

/// Loss through a network and a Lyapunov head; returns the value and the flat gradient.
fn composite(net: &DenseNet, head: &LyapunovHead, x: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let bn = net.bind(&mut tape);
    let bl = head.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let y = bn.forward(&mut tape, xv);
    let v = bl.forward(&mut tape, y);
    let shifted = tape.affine(v, 1.0, -0.5);
    let hinge = tape.relu(shifted);
    let h = tape.mean(hinge);
    let m = tape.mean_sq(y);
    let a = tape.mean_abs(y);
    let mx = tape.max_abs(y);
    let loss = tape.weighted_sum(&[(1.0, h), (0.3, m), (0.2, a), (0.1, mx)]);
    let mut grads = tape.backward(loss);
    let mut g = Vec::new();
    bn.write_grads(&tape, &mut grads, &mut g);
    bl.phi().write_grads(&tape, &mut grads, &mut g);
    (tape.scalar_value(loss), g)
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(3);
    let mut worst = 0.0_f64;
    for draw in 0..100 {
        let net = DenseNet::xavier(&[4, 6, 3], Activation::Tanh, &mut r).unwrap();
        let head = LyapunovHead::xavier(3, &[5], 0.01, 100.0, &mut r).unwrap();
        let x = random_batch(3 + draw % 4, 4, &mut r);
        let (_, g) = composite(&net, &head, &x);
        let p0 = ParamVector::pack(&[&net, head.phi()]);
        let f = |p: &[f64]| {
            let mut n = net.clone();
            let mut hd = head.clone();
            ParamVector(p.to_vec()).unpack(&mut [&mut n, hd.phi_mut()]).unwrap();
            composite(&n, &hd, &x).0
        };
        let fd = finite_difference(f, p0.as_slice(), 1e-5);
        worst = worst.max(rel_err(&g, &fd));
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn lyapunov_structure() {
    let mut r = rng(4);
    let head = LyapunovHead::xavier(4, &[8, 8], 0.01, 100.0, &mut r).unwrap();
    assert_eq!(head.value(&[0.0; 4]).unwrap(), 0.0);
    let flat = LyapunovHead::new(0.01, 100.0, DenseNet::zeros(&[4, 1], Activation::Tanh).unwrap()).unwrap();
    let g = [1.0, -2.0, 0.5, 3.0];
    let n2: f64 = g.iter().map(|x| x * x).sum();
    assert!((flat.value(&g).unwrap() - 50.005 * n2).abs() < 1e-12);
    assert!(LyapunovHead::new(1.0, 0.5, DenseNet::zeros(&[4, 1], Activation::Tanh).unwrap()).is_err());
}

#[test]
fn lyapunov_bounds_hold_on_a_million_samples() {
    let mut r = rng(5);
    let head = LyapunovHead::xavier(6, &[16, 16], 0.01, 100.0, &mut r).unwrap();
    for _ in 0..100 {
        let g = DMatrix::from_fn(10_000, 6, |_, _| r.random_range(-5.0..5.0));
        let v = head.value_batch(&g).unwrap();
        for i in 0..g.nrows() {
            let n2 = g.row(i).norm_squared();
            assert!(v[i] > 0.01 * n2 && v[i] < 100.0 * n2);
        }
    }
}

proptest! {
    #[test]
    fn lyapunov_bounds(g in prop::collection::vec(-50.0..50.0f64, 3), seed in 0u64..1000) {
        let head = LyapunovHead::xavier(3, &[8], 0.01, 100.0, &mut rng(seed)).unwrap();
        let v = head.value(&g).unwrap();
        let n2: f64 = g.iter().map(|x| x * x).sum();
        prop_assert!(v >= 0.01 * n2 && v <= 100.0 * n2);
    }
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut r = rng(6);
        let mut net = DenseNet::xavier(&[2, 8, 1], Activation::Tanh, &mut r).unwrap();
        let x = random_batch(32, 2, &mut r);
        let target = x.column(0).component_mul(&x.column(1));
        let mut state = AdamState::new(net.n_params());
        let cfg = AdamConfig { lr: 1e-2, ..AdamConfig::default() };
        for _ in 0..50 {
            let mut tape = Tape::new();
            let bn = net.bind(&mut tape);
            let xv = tape.leaf(x.clone());
            let y = bn.forward(&mut tape, xv);
            let t = tape.leaf(DMatrix::from_column_slice(32, 1, target.as_slice()));
            let e = tape.sub(y, t);
            let loss = tape.mean_sq(e);
            let mut grads = tape.backward(loss);
            let mut g = Vec::new();
            bn.write_grads(&tape, &mut grads, &mut g);
            let mut p = ParamVector::pack(&[&net]);
            adam_step(&mut p.0, &g, &mut state, &cfg);
            p.unpack(&mut [&mut net]).unwrap();
        }
        ParamVector::pack(&[&net]).0
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
