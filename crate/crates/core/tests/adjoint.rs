use pdyn::adjoint::*;
use pdyn::autodiff::{Network, ParamVars, ParameterVector, Tape, Tensor, Var};
use pdyn::model::{DynamicsConfig, DynamicsModel, EncoderConfig, InitialInputs, InitialStateModel};
use pdyn::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_f64(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
}

fn tiny(seed: u64) -> DynamicsModel<f64> {
    let cfg = DynamicsConfig { state_channels: 2, width: 8, n_down: 2, n_blocks: 1, kernel_size: 3 };
    DynamicsModel::new(cfg, seed).unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

/// `F(X) = a X` as a bias-free 1x1 convolution.
#[derive(Clone)]
struct Scalar {
    params: ParameterVector<f64>,
}

impl Scalar {
    fn new(a: f64) -> Self {
        let mut params = ParameterVector::new();
        params.push("a", Tensor::from_f64(&[1, 1, 1, 1], &[a]).unwrap()).unwrap();
        Self { params }
    }
}

impl Network<f64> for Scalar {
    fn params(&self) -> &ParameterVector<f64> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParameterVector<f64> {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape<f64>, p: &ParamVars, x: Var) -> Result<Var> {
        tape.conv2d(x, p.get("a")?, None, 1)
    }
}

fn backprop<N: Network<f64>>(m: &N, init: &InitialStateModel<f64>, obs: &ObservationOperator, s: &Schedule, p: &Problem<'_, f64>) -> Gradient<f64> {
    loss_and_grad(m, init, obs, s, p).unwrap().1
}

fn adjoint<N: Network<f64>>(m: &N, init: &InitialStateModel<f64>, obs: &ObservationOperator, s: &Schedule, p: &Problem<'_, f64>) -> Gradient<f64> {
    let (roll, _) = rollout(m, init, obs, s, p).unwrap();
    grad_continuous_adjoint(m, init, obs, s, p, &roll).unwrap()
}

#[test]
fn zero_model_keeps_the_state_constant() {
    let mut m = tiny(1);
    let n = m.params().len();
    m.params_mut().set_flat(&vec![0.0; n]).unwrap();
    let x0 = random(&[2, 8, 8], 2);
    let targets: Vec<_> = (0..4).map(|k| random(&[1, 8, 8], 10 + k)).collect();
    let obs = ObservationOperator::new(vec![1], 2).unwrap();
    let s = Schedule::dense(4, 3);
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };
    let init = InitialStateModel::identity();
    let (roll, report) = rollout(&m, &init, &obs, &s, &p).unwrap();
    assert!(roll.states.iter().all(|x| x == &x0));
    assert_eq!(roll.states.len(), 13);
    let mut want = 0.0;
    for y in &targets {
        let d: f64 = x0.channel(1).iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum();
        want += d / 64.0;
    }
    assert!((report.total - want / 4.0).abs() < 1e-12);
}

#[test]
fn matching_targets_give_zero_loss_and_gradient() {
    let m = tiny(3);
    let x0 = random(&[2, 8, 8], 4);
    let obs = ObservationOperator::new(vec![0], 2).unwrap();
    let s = Schedule::dense(3, 3);
    let init = InitialStateModel::identity();
    let dummy: Vec<_> = (0..3).map(|_| Tensor::zeros(&[1, 8, 8])).collect();
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &dummy, resets: &[] };
    let (roll, _) = rollout(&m, &init, &obs, &s, &p).unwrap();
    let own: Vec<_> = roll.at_targets().into_iter().map(|x| obs.observe(x).unwrap()).collect();
    let p = Problem { targets: &own, ..p };
    let (report, g) = loss_and_grad(&m, &init, &obs, &s, &p).unwrap();
    assert_eq!(report.total, 0.0);
    assert!(g.dynamics.iter().all(|&v| v == 0.0));
    assert!(adjoint(&m, &init, &obs, &s, &p).dynamics.iter().all(|&v| v == 0.0));
}

#[test]
fn scalar_linear_probe_matches_closed_form() {
    let (a, c, y): (f64, f64, f64) = (0.7, 1.3, 2.0);
    let x0 = Tensor::full(&[1, 4, 4], c);
    let targets = [Tensor::full(&[1, 4, 4], y)];
    let obs = ObservationOperator::identity(1);
    let init = InitialStateModel::identity();
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };
    let exact = {
        // d/da (c e^a - y)^2 at T = 1
        let xt = c * a.exp();
        2.0 * (xt - y) * xt
    };
    let mut errs = Vec::new();
    for n in [4usize, 8, 16] {
        let s = Schedule::dense(1, n);
        let dt = 1.0 / n as f64;
        let growth = 1.0 + a * dt;
        let xn = c * growth.powi(n as i32);
        let m = Scalar::new(a);
        assert!((loss(&m, &init, &obs, &s, &p).unwrap() - (xn - y).powi(2)).abs() < 1e-12);
        let want = 2.0 * (xn - y) * c * n as f64 * growth.powi(n as i32 - 1) * dt;
        let bp = backprop(&m, &init, &obs, &s, &p).dynamics[0];
        let adj = adjoint(&m, &init, &obs, &s, &p).dynamics[0];
        assert!((bp - want).abs() < 1e-12 * want.abs());
        // for a linear scalar tendency the two quadratures coincide
        assert!((adj - want).abs() < 1e-12 * want.abs());
        errs.push((bp - exact).abs());
    }
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((1.7..2.3).contains(&r), "ratio {r}");
    }
}

#[test]
fn backprop_matches_finite_differences_and_adjoint_converges() {
    let r = gradcheck(&GradCheckConfig::default(), None).unwrap();
    assert!(r.coords.len() >= 20);
    assert!(r.fd_rel_error <= 1e-6, "{r:?}");
    assert!(r.gap <= 5e-2, "{r:?}");
    assert!((1.5..=2.5).contains(&r.ratio), "{r:?}");
}

#[test]
fn corrupted_backprop_fails_the_check() {
    let r = gradcheck(&GradCheckConfig::default(), Some(pdyn::autodiff::Fault::ScaledKernelGrad)).unwrap();
    assert!(!r.fd_pass);
    assert!(!r.passed());
}

#[test]
fn recording_is_single_use() {
    let m = tiny(1);
    let x0 = random(&[2, 8, 8], 1);
    let targets = [random(&[1, 8, 8], 2)];
    let obs = ObservationOperator::new(vec![0], 2).unwrap();
    let init = InitialStateModel::identity();
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };
    let mut rec = record(&m, &init, &obs, &Schedule::dense(1, 3), &p).unwrap();
    let g = grad_backprop(&mut rec, &m, &init).unwrap();
    // identity g has no parameters
    assert!(g.initial.is_empty());
    assert!(rec.is_consumed());
    assert!(matches!(grad_backprop(&mut rec, &m, &init), Err(Error::TapeConsumed)));
}

#[test]
fn finite_difference_error_is_second_order() {
    let (a, c, y) = (0.4, 0.9, -0.5);
    let x0 = Tensor::full(&[1, 4, 4], c);
    let targets = [Tensor::full(&[1, 4, 4], y), Tensor::full(&[1, 4, 4], 0.3)];
    let obs = ObservationOperator::identity(1);
    let init = InitialStateModel::identity();
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };
    let s = Schedule::dense(2, 3);
    let m = Scalar::new(a);
    let bp = backprop(&m, &init, &obs, &s, &p).dynamics[0];
    let fd_err = |eps: f64| {
        let g = finite_difference_gradient(
            |t| {
                let mut m = m.clone();
                m.params_mut().set_flat(t)?;
                loss(&m, &init, &obs, &s, &p)
            },
            &[a],
            &[0],
            eps,
        )
        .unwrap();
        (g[0] - bp).abs()
    };
    let r = fd_err(4e-2) / fd_err(2e-2);
    assert!((3.6..4.4).contains(&r), "ratio {r}");
}

#[test]
fn resets_are_differentiated_consistently() {
    let m = tiny(5);
    let x0 = random(&[2, 8, 8], 6);
    let targets: Vec<_> = (0..4).map(|k| random(&[1, 8, 8], 20 + k)).collect();
    let resets = [false, true, false, true];
    let obs = ObservationOperator::new(vec![0], 2).unwrap();
    let init = InitialStateModel::identity();
    let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &resets };
    let s = Schedule::dense(4, 3);
    let (roll, _) = rollout(&m, &init, &obs, &s, &p).unwrap();
    // states are stored before the overwrite
    assert_ne!(roll.states[6].channel(0), targets[1].channel(0));

    let bp = backprop(&m, &init, &obs, &s, &p).dynamics;
    let coords: Vec<usize> = (0..m.params().len()).step_by(97).collect();
    let fd = finite_difference_gradient(
        |t| {
            let mut m = m.clone();
            m.params_mut().set_flat(t)?;
            loss(&m, &init, &obs, &s, &p)
        },
        m.params().flat(),
        &coords,
        1e-6,
    )
    .unwrap();
    let probe: Vec<f64> = coords.iter().map(|&i| bp[i]).collect();
    assert!(rel(&fd, &probe) < 1e-6);

    let gap = |sub: usize| {
        let s = Schedule::dense(4, sub);
        rel(&adjoint(&m, &init, &obs, &s, &p).dynamics, &backprop(&m, &init, &obs, &s, &p).dynamics)
    };
    let (g1, g2) = (gap(3), gap(6));
    assert!(g1 < 0.1 && (1.5..2.5).contains(&(g1 / g2)), "{g1} {g2}");
}

#[test]
fn encoder_gradients() {
    let m = tiny(7);
    let enc = EncoderConfig { state_channels: 2, observed: vec![0], proxy: vec![], history_len: 2, width: 4, kernel_size: 3 };
    let init = InitialStateModel::encoder(enc, 8).unwrap();
    let frames: Vec<_> = (0..2).map(|k| random(&[1, 8, 8], 30 + k)).collect();
    let targets: Vec<_> = (0..3).map(|k| random(&[1, 8, 8], 40 + k)).collect();
    let obs = ObservationOperator::new(vec![0], 2).unwrap();
    let p = Problem { inputs: InitialInputs::History { frames: &frames, proxy: None }, targets: &targets, resets: &[] };
    let s = Schedule::dense(3, 3);
    let g = backprop(&m, &init, &obs, &s, &p);
    assert_eq!(g.initial.len(), init.params().len());

    let coords: Vec<usize> = (0..init.params().len()).step_by(23).collect();
    let fd = finite_difference_gradient(
        |t| {
            let mut i2 = init.clone();
            i2.params_mut().set_flat(t)?;
            loss(&m, &i2, &obs, &s, &p)
        },
        init.params().flat(),
        &coords,
        1e-6,
    )
    .unwrap();
    let probe: Vec<f64> = coords.iter().map(|&i| g.initial[i]).collect();
    assert!(rel(&fd, &probe) < 1e-6, "{}", rel(&fd, &probe));

    let gap = |sub: usize| {
        let s = Schedule::dense(3, sub);
        rel(&adjoint(&m, &init, &obs, &s, &p).to_f64(), &backprop(&m, &init, &obs, &s, &p).to_f64())
    };
    let (g1, g2) = (gap(3), gap(6));
    assert!(g2 < g1 && g1 < 0.1, "{g1} {g2}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn gradient_chain_holds_across_seeds(seed in 0u64..10_000) {
        let cfg = GradCheckConfig { seed, n_coords: 20, ..GradCheckConfig::default() };
        let r = gradcheck(&cfg, None).unwrap();
        prop_assert!(r.fd_rel_error <= 1e-6, "{:?}", r);
        prop_assert!(r.gap_half < r.gap);
    }

    #[test]
    fn gradient_is_linear_in_the_residual(seed in 0u64..10_000, alpha in 0.25f64..4.0) {
        let m = tiny(seed);
        let x0 = random(&[2, 8, 8], seed + 1);
        let targets: Vec<_> = (0..3).map(|k| random(&[1, 8, 8], seed + 10 + k)).collect();
        let obs = ObservationOperator::new(vec![0], 2).unwrap();
        let init = InitialStateModel::identity();
        let s = Schedule::dense(3, 3);
        let p = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };
        let (roll, _) = rollout(&m, &init, &obs, &s, &p).unwrap();
        // H X - Y' = alpha (H X - Y)
        let scaled: Vec<_> = roll.at_targets().iter().zip(&targets).map(|(x, y)| {
            let hx = obs.observe(*x).unwrap();
            hx.add(&y.sub(&hx).scale(alpha))
        }).collect();
        let p2 = Problem { targets: &scaled, ..p };
        for (g1, g2) in [
            (backprop(&m, &init, &obs, &s, &p).dynamics, backprop(&m, &init, &obs, &s, &p2).dynamics),
            (adjoint(&m, &init, &obs, &s, &p).dynamics, adjoint(&m, &init, &obs, &s, &p2).dynamics),
        ] {
            let want: Vec<f64> = g1.iter().map(|v| alpha * v).collect();
            prop_assert!(rel(&g2, &want) < 1e-10);
        }
    }
}
