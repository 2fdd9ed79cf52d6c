//! Forecast skill of a briefly trained model against persistence, plus a
//! PNG of one rollout (truth on top, prediction below).
//!
//! cargo run --example forecast [out.png]

use pdyn::evaluation::{evaluate_forecasts, forecast_frames, EvalConfig};
use pdyn::io::plot::{grid_image, render_scalar, render_velocity};
use pdyn::io::RunConfig;
use pdyn::simulators::{generate_dataset, Split};
use pdyn::training::{train, NetworkConfig, TrainConfig};

fn main() -> pdyn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("pdyn_forecast.png").display().to_string());
    let mut rc = RunConfig::preset("desk_sw32")?;
    rc.sim.nx = 16;
    rc.sim.ny = 16;
    let data = generate_dataset(&rc.sim, Split { train: 200, test: 60 })?;
    rc.model.network = NetworkConfig { width: 16, n_blocks: 2, ..NetworkConfig::default() };
    let cfg = TrainConfig { lr: 1e-4, epochs: 4, iters_per_epoch: Some(30), validation_windows: 8, ..rc.train };
    let (model, _) = train::<f32>(&data, &rc.model, cfg, &mut |_| {})?;

    let ecfg = EvalConfig { horizons: vec![1, 5, 10], substeps: 3, window_stride: 2 };
    let r = evaluate_forecasts(&model, &data, data.test_range(), &ecfg)?;
    println!("{:>3} {:>12} {:>12} {:>8}", "K", "mse", "persistence", "cosine");
    for (i, k) in r.horizons.iter().enumerate() {
        println!("{k:>3} {:>12.4e} {:>12.4e} {:>8.3}", r.mse[i], r.baseline_mse[i], r.cosine[i].unwrap_or(f64::NAN));
    }

    let start = data.test_range().start;
    let pred = forecast_frames(&model, &data, start, 6, 3)?;
    let truth: Vec<_> = (1..=6).map(|k| data.frame(start + k)).collect();
    let hmax = truth.iter().map(|x| x.channel(2).max_abs()).fold(0.0, f64::max);
    let vmax = truth.iter().map(|x| x.channel(0).max_abs().hypot(x.channel(1).max_abs())).fold(0.0, f64::max);
    let row = |xs: &[pdyn::fields::StateField], vel: bool| {
        xs.iter()
            .map(|x| if vel { render_velocity(x.channel(0), x.channel(1), vmax, 6) } else { render_scalar(x.channel(2), -hmax, hmax, 6) })
            .collect::<Vec<_>>()
    };
    let img = grid_image(&[row(&truth, false), row(&pred, false), row(&truth, true), row(&pred, true)], 4);
    img.save_png(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
