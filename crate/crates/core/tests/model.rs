use pdyn::autodiff::{vjp, vjp_state, Network, ParamVars, ParameterVector, Tape, Tensor, Var};
use pdyn::model::{init_orthogonal, DynamicsConfig, DynamicsModel, OUTPUT_GAIN};
use pdyn::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(channels: usize) -> DynamicsConfig {
    DynamicsConfig { state_channels: channels, width: 4, n_down: 1, n_blocks: 1, kernel_size: 3 }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_f64(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
}

#[test]
fn kernels_are_orthogonal_and_biases_zero() {
    let cfg = DynamicsConfig::new(3);
    let p = init_orthogonal::<f64>(&cfg, 11).unwrap();
    for name in p.names().map(str::to_owned).collect::<Vec<_>>() {
        let shape = p.shape_of(&name).unwrap().to_vec();
        let v = p.slice(&name).unwrap();
        if name.ends_with(".b") {
            assert!(v.iter().all(|&x| x == 0.0));
            continue;
        }
        let rows = shape[0];
        let cols = v.len() / rows;
        let (n, len, get): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if rows <= cols {
            (rows, cols, Box::new(|a, l| v[a * cols + l]))
        } else {
            (cols, rows, Box::new(|a, l| v[l * cols + a]))
        };
        for a in 0..n {
            for b in 0..n {
                let g: f64 = (0..len).map(|l| get(a, l) * get(b, l)).sum();
                let gain = if name == "out.k" { OUTPUT_GAIN } else { 1.0 };
                let e = if a == b { gain * gain } else { 0.0 };
                assert!((g - e).abs() < 1e-6, "{name} gram[{a},{b}] = {g}");
            }
        }
    }
}

#[test]
fn init_is_deterministic_per_seed() {
    let cfg = tiny(2);
    let a = init_orthogonal::<f64>(&cfg, 4).unwrap();
    let b = init_orthogonal::<f64>(&cfg, 4).unwrap();
    let c = init_orthogonal::<f64>(&cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.flat(), c.flat());
}

#[test]
fn zero_is_a_fixed_point_and_shape_is_preserved() {
    let m = DynamicsModel::<f64>::new(DynamicsConfig::new(3), 0).unwrap();
    let out = m.evaluate(&Tensor::zeros(&[3, 32, 32])).unwrap();
    assert_eq!(out.shape(), &[3, 32, 32]);
    assert!(out.data().iter().all(|&v| v == 0.0));
    let out = m.evaluate(&random(&[3, 32, 32], 1)).unwrap();
    assert_eq!(out.shape(), &[3, 32, 32]);
    assert!(out.is_finite());
}

#[test]
fn vjp_matches_brute_force_jacobian() {
    let m = DynamicsModel::<f64>::new(tiny(1), 3).unwrap();
    let x = random(&[1, 8, 8], 2);
    let n = x.len();
    let eps = 1e-6;
    // column j of the Jacobian by central differences
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.data_mut()[j] += eps;
        xm.data_mut()[j] -= eps;
        let fp = m.evaluate(&xp).unwrap();
        let fm = m.evaluate(&xm).unwrap();
        for i in 0..n {
            jac[i * n + j] = (fp.data()[i] - fm.data()[i]) / (2.0 * eps);
        }
    }
    for seed in 0..3 {
        let lam = random(&[1, 8, 8], 100 + seed);
        let got = vjp_state(&m, &x, &lam).unwrap();
        let want: Vec<f64> = (0..n).map(|j| (0..n).map(|i| jac[i * n + j] * lam.data()[i]).sum()).collect();
        let err: f64 = got.data().iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * scale.max(1.0), "err {err} scale {scale}");
    }
}

/// One bias-free convolution: a linear map whose matrix we can write down.
struct LinearConv {
    params: ParameterVector<f64>,
}

impl Network<f64> for LinearConv {
    fn params(&self) -> &ParameterVector<f64> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParameterVector<f64> {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape<f64>, p: &ParamVars, x: Var) -> Result<Var> {
        tape.conv2d(x, p.get("k")?, None, 1)
    }
}

#[test]
fn vjp_of_linear_model_is_transpose() {
    let kernel = random(&[1, 1, 3, 3], 9);
    let mut params = ParameterVector::new();
    params.push("k", kernel.clone()).unwrap();
    let net = LinearConv { params };
    let (h, w) = (4usize, 4usize);
    let n = h * w;
    let mut mat = vec![0.0; n * n];
    for i in 0..h {
        for j in 0..w {
            for a in 0..3 {
                for b in 0..3 {
                    let si = (i + h + a - 1) % h;
                    let sj = (j + w + b - 1) % w;
                    mat[(i * w + j) * n + si * w + sj] += kernel.data()[a * 3 + b];
                }
            }
        }
    }
    let x = random(&[1, 4, 4], 1);
    let lam = random(&[1, 4, 4], 2);
    let r = vjp(&net, &x, &lam, None).unwrap();
    for j in 0..n {
        let want: f64 = (0..n).map(|i| mat[i * n + j] * lam.data()[i]).sum();
        assert!((r.state.data()[j] - want).abs() < 1e-12);
    }
    for i in 0..n {
        let want: f64 = (0..n).map(|j| mat[i * n + j] * x.data()[j]).sum();
        assert!((r.output.data()[i] - want).abs() < 1e-12);
    }
}
