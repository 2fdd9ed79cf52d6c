use pdyn::autodiff::{Tape, Tensor};
use pdyn::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct quadruple loop with circular indexing.
fn reference_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (cin, h, w) = x.chw().unwrap();
    let [cout, _, kh, kw] = k.shape()[..] else { panic!() };
    let (ho, wo) = (h / stride, w / stride);
    let mut out = vec![0.0; cout * ho * wo];
    for o in 0..cout {
        for oi in 0..ho {
            for oj in 0..wo {
                let mut s = b.data()[o];
                for c in 0..cin {
                    for a in 0..kh {
                        for bb in 0..kw {
                            let i = (oi * stride + a) as isize - (kh / 2) as isize;
                            let j = (oj * stride + bb) as isize - (kw / 2) as isize;
                            let i = i.rem_euclid(h as isize) as usize;
                            let j = j.rem_euclid(w as isize) as usize;
                            s += k.data()[((o * cin + c) * kh + a) * kw + bb] * x.data()[(c * h + i) * w + j];
                        }
                    }
                }
                out[(o * ho + oi) * wo + oj] = s;
            }
        }
    }
    Tensor::new(vec![cout, ho, wo], out).unwrap()
}

fn conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
    let out = tape.conv2d(xv, kv, Some(bv), stride).unwrap();
    tape.value(out).clone()
}

#[test]
fn pointwise_identity_kernel() {
    let x = random(&[1, 5, 6], 1);
    let k = Tensor::full(&[1, 1, 1, 1], 1.0);
    assert_eq!(conv(&x, &k, &Tensor::zeros(&[1]), 1), x);
}

#[test]
fn box_filter_preserves_constants() {
    let x = Tensor::full(&[1, 6, 6], 2.5);
    let k = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0);
    let y = conv(&x, &k, &Tensor::zeros(&[1]), 1);
    assert!(y.data().iter().all(|v| (v - 2.5).abs() < 1e-14));
}

#[test]
fn conv_matches_reference_loop() {
    let x = random(&[2, 5, 5], 2);
    let k = random(&[3, 2, 3, 3], 3);
    let b = random(&[3], 4);
    let d = conv(&x, &k, &b, 1).sub(&reference_conv(&x, &k, &b, 1));
    assert!(d.max_abs() < 1e-12);

    let x = random(&[2, 6, 8], 5);
    let d = conv(&x, &k, &b, 2).sub(&reference_conv(&x, &k, &b, 2));
    assert!(d.max_abs() < 1e-12);
    assert_eq!(conv(&x, &k, &b, 2).shape(), &[3, 3, 4]);
}

#[test]
fn conv_shape_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(random(&[2, 5, 5], 1));
    let bad_k = tape.constant(random(&[3, 1, 3, 3], 2));
    assert!(matches!(tape.conv2d(x, bad_k, None, 1), Err(Error::Shape(_))));
    let k = tape.constant(random(&[3, 2, 3, 3], 2));
    // odd spatial size cannot be halved
    assert!(tape.conv2d(x, k, None, 2).is_err());
    assert!(tape.conv2d(x, k, None, 3).is_err());
}

fn upsample(x: &Tensor<f64>) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let y = tape.upsample2x(xv).unwrap();
    tape.value(y).clone()
}

fn avg_pool2(x: &Tensor<f64>) -> Tensor<f64> {
    let (c, h, w) = x.chw().unwrap();
    let mut out = vec![0.0; c * h * w / 4];
    for ch in 0..c {
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                let at = |a: usize, b: usize| x.data()[(ch * h + a) * w + b];
                out[(ch * h / 2 + i) * w / 2 + j] =
                    0.25 * (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1));
            }
        }
    }
    Tensor::new(vec![c, h / 2, w / 2], out).unwrap()
}

#[test]
fn upsample_constant_and_linear() {
    let c = Tensor::full(&[2, 4, 4], -1.25);
    let up = upsample(&c);
    assert_eq!(up.shape(), &[2, 8, 8]);
    assert!(up.data().iter().all(|v| (v + 1.25).abs() < 1e-15));

    // linear in the row index; the seam rows wrap and are excluded
    let lin = Tensor::new(vec![1, 4, 4], (0..16).map(|v| (v / 4) as f64).collect()).unwrap();
    let back = avg_pool2(&upsample(&lin));
    for i in 1..3 {
        for j in 0..4 {
            assert!((back.data()[i * 4 + j] - i as f64).abs() < 1e-15);
        }
    }
}

#[test]
fn upsample_impulse_is_tent() {
    let mut x = Tensor::zeros(&[1, 4, 4]);
    x.data_mut()[5] = 1.0; // (1, 1)
    let up = upsample(&x);
    assert!((up.sum() - 4.0).abs() < 1e-15);
    let w1 = [0.25, 0.75, 0.75, 0.25];
    for (a, wa) in w1.iter().enumerate() {
        for (b, wb) in w1.iter().enumerate() {
            // input pixel 1 feeds output pixels 1..=4 along each axis
            assert!((up.data()[(1 + a) * 8 + 1 + b] - wa * wb).abs() < 1e-15);
        }
    }
}

#[test]
fn elementwise_primitives() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(vec![3], vec![0.0, 1.0, -1.0]).unwrap());
    let y = tape.leaky_relu(x, 0.2);
    assert_eq!(tape.value(y).data(), &[0.0, 1.0, -0.2]);
    let z = tape.constant(Tensor::zeros(&[3]));
    let s = tape.add(x, z).unwrap();
    assert_eq!(tape.value(s), tape.value(x));
    let one = tape.scale(x, 1.0);
    assert_eq!(tape.value(one), tape.value(x));
}

#[test]
fn sum_gradient_is_ones() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(&[2, 3, 3], 9), true);
    let s = tape.sum(x);
    let g = tape.backward(s, Tensor::scalar(1.0)).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn double_backward_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(&[4], 1), true);
    let s = tape.sum(x);
    tape.backward(s, Tensor::scalar(1.0)).unwrap();
    assert!(matches!(tape.backward(s, Tensor::scalar(1.0)), Err(Error::TapeConsumed)));
}

/// Loss = <w, net(x; k1, k2)> for conv -> leaky relu -> conv.
fn composed_loss(x: &Tensor<f64>, k1: &Tensor<f64>, k2: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    let mut tape = Tape::new();
    let (xv, k1v, k2v) = (tape.constant(x.clone()), tape.constant(k1.clone()), tape.constant(k2.clone()));
    let h = tape.conv2d(xv, k1v, None, 2).unwrap();
    let a = tape.leaky_relu(h, 0.2);
    let u = tape.upsample2x(a).unwrap();
    let y = tape.conv2d(u, k2v, None, 1).unwrap();
    tape.value(y).dot(w)
}

fn perturbed(t: &Tensor<f64>, i: usize, eps: f64) -> Tensor<f64> {
    let mut p = t.clone();
    p.data_mut()[i] += eps;
    p
}

#[test]
fn conv_parameter_gradient_matches_finite_differences() {
    let x = random(&[2, 6, 6], 10);
    let k = random(&[3, 2, 3, 3], 11);
    let b = random(&[3], 12);
    let w = random(&[3, 6, 6], 13);

    let mut tape = Tape::new();
    let (xv, kv, bv) = (tape.leaf(x.clone(), true), tape.leaf(k.clone(), true), tape.leaf(b.clone(), true));
    let y = tape.conv2d(xv, kv, Some(bv), 1).unwrap();
    let g = tape.backward(y, w.clone()).unwrap();

    let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| conv(x, k, b, 1).dot(&w);
    let eps = 1e-5;
    for i in 0..k.len() {
        let fd = (loss(&x, &perturbed(&k, i, eps), &b) - loss(&x, &perturbed(&k, i, -eps), &b)) / (2.0 * eps);
        let an = g.get(kv).unwrap().data()[i];
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "k[{i}] {fd} vs {an}");
    }
    for i in 0..b.len() {
        let fd = (loss(&x, &k, &perturbed(&b, i, eps)) - loss(&x, &k, &perturbed(&b, i, -eps))) / (2.0 * eps);
        assert!((fd - g.get(bv).unwrap().data()[i]).abs() <= 1e-6);
    }
    for i in (0..x.len()).step_by(7) {
        let fd = (loss(&perturbed(&x, i, eps), &k, &b) - loss(&perturbed(&x, i, -eps), &k, &b)) / (2.0 * eps);
        assert!((fd - g.get(xv).unwrap().data()[i]).abs() <= 1e-6);
    }
}

#[test]
fn composed_network_gradient_matches_finite_differences() {
    let x = random(&[2, 8, 8], 20);
    let k1 = random(&[4, 2, 3, 3], 21);
    let k2 = random(&[2, 4, 3, 3], 22);
    let w = random(&[2, 8, 8], 23);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let (k1v, k2v) = (tape.leaf(k1.clone(), true), tape.leaf(k2.clone(), true));
    let h = tape.conv2d(xv, k1v, None, 2).unwrap();
    let a = tape.leaky_relu(h, 0.2);
    let u = tape.upsample2x(a).unwrap();
    let y = tape.conv2d(u, k2v, None, 1).unwrap();
    let g = tape.backward(y, w.clone()).unwrap();

    let eps = 1e-5;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k1.len() {
        let fd = (composed_loss(&x, &perturbed(&k1, i, eps), &k2, &w)
            - composed_loss(&x, &perturbed(&k1, i, -eps), &k2, &w))
            / (2.0 * eps);
        let an = g.get(k1v).unwrap().data()[i];
        num += (fd - an).powi(2);
        den += an * an;
    }
    for i in 0..k2.len() {
        let fd = (composed_loss(&x, &k1, &perturbed(&k2, i, eps), &w)
            - composed_loss(&x, &k1, &perturbed(&k2, i, -eps), &w))
            / (2.0 * eps);
        let an = g.get(k2v).unwrap().data()[i];
        num += (fd - an).powi(2);
        den += an * an;
    }
    assert!((num / den).sqrt() <= 1e-6, "relative error {}", (num / den).sqrt());
}

#[test]
fn channel_ops_backward() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(random(&[2, 4, 4], 1), true);
    let b = tape.leaf(random(&[1, 4, 4], 2), true);
    let c = tape.concat_channels(&[a, b]).unwrap();
    let s = tape.select_channels(c, &[2, 0]).unwrap();
    let e = tape.embed_channels(s, &[0, 1], 3).unwrap();
    let o = tape.overwrite_channels(e, &[1], &Tensor::zeros(&[1, 4, 4])).unwrap();
    let g = tape.backward(o, Tensor::full(&[3, 4, 4], 1.0)).unwrap();
    // only the path c[2] -> s[0] -> e[0] survives the overwrite
    assert!(g.get(b).unwrap().data().iter().all(|&v| v == 1.0));
    assert!(g.get(a).unwrap().data().iter().all(|&v| v == 0.0));
}

fn jvp_vjp_gap(seed: u64) -> f64 {
    let x = random(&[2, 8, 8], seed);
    let k1 = random(&[3, 2, 3, 3], seed + 1);
    let k2 = random(&[2, 3, 3, 3], seed + 2);
    let lambda = random(&[2, 8, 8], seed + 3);
    let delta = random(&[2, 8, 8], seed + 4);
    // the network is piecewise linear, so a tiny forward difference is exact away from kinks
    let f = |x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let (xv, k1v, k2v) = (tape.constant(x.clone()), tape.constant(k1.clone()), tape.constant(k2.clone()));
        let h = tape.conv2d(xv, k1v, None, 1).unwrap();
        let a = tape.leaky_relu(h, 0.2);
        let y = tape.conv2d(a, k2v, None, 1).unwrap();
        tape.value(y).clone()
    };
    let eps = 1e-7;
    let mut xp = x.clone();
    xp.axpy_assign(eps, &delta);
    let jd = f(&xp).sub(&f(&x)).scale(1.0 / eps);

    let mut tape = Tape::new();
    let (xv, k1v, k2v) = (tape.leaf(x.clone(), true), tape.constant(k1.clone()), tape.constant(k2.clone()));
    let h = tape.conv2d(xv, k1v, None, 1).unwrap();
    let a = tape.leaky_relu(h, 0.2);
    let y = tape.conv2d(a, k2v, None, 1).unwrap();
    let jt = tape.backward(y, lambda.clone()).unwrap().take(xv).unwrap();
    let (lhs, rhs) = (lambda.dot(&jd), jt.dot(&delta));
    (lhs - rhs).abs() / rhs.abs().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn vjp_jvp_duality(seed in 0u64..10_000) {
        prop_assert!(jvp_vjp_gap(seed) < 1e-6);
    }

    #[test]
    fn backward_is_linear_in_cotangent(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
        let x = random(&[2, 4, 4], seed);
        let k = random(&[2, 2, 3, 3], seed + 1);
        let (l1, l2) = (random(&[2, 4, 4], seed + 2), random(&[2, 4, 4], seed + 3));
        let pull = |l: Tensor<f64>| {
            let mut tape = Tape::new();
            let (xv, kv) = (tape.leaf(x.clone(), true), tape.leaf(k.clone(), true));
            let h = tape.conv2d(xv, kv, None, 1).unwrap();
            let y = tape.leaky_relu(h, 0.2);
            let mut g = tape.backward(y, l).unwrap();
            (g.take(xv).unwrap(), g.take(kv).unwrap())
        };
        let mut comb = l1.clone();
        comb.axpy_assign(alpha, &l2);
        let (gx, gk) = pull(comb);
        let (ax, ak) = pull(l1);
        let (bx, bk) = pull(l2);
        let mut ex = ax; ex.axpy_assign(alpha, &bx);
        let mut ek = ak; ek.axpy_assign(alpha, &bk);
        prop_assert!(gx.sub(&ex).max_abs() < 1e-12);
        prop_assert!(gk.sub(&ek).max_abs() < 1e-12);
    }
}

#[test]
fn gradients_are_bit_deterministic() {
    let run = || {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(random(&[3, 8, 8], 1).cast(), true);
        let k = tape.leaf(random(&[4, 3, 3, 3], 2).cast(), true);
        let y = tape.conv2d(x, k, None, 2).unwrap();
        let a = tape.leaky_relu(y, 0.2);
        let u = tape.upsample2x(a).unwrap();
        let mut g = tape.backward(u, random(&[4, 8, 8], 3).cast()).unwrap();
        (g.take(x).unwrap(), g.take(k).unwrap())
    };
    assert_eq!(run(), run());
}
