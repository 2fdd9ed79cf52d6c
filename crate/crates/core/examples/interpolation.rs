//! Supervision on every third frame only, then errors at the frames in
//! between; the true right-hand side gives the reference.
//!
//! cargo run --example interpolation

use pdyn::evaluation::{interpolation_eval, oracle_interpolation};
use pdyn::io::RunConfig;
use pdyn::simulators::{generate_dataset, Split};
use pdyn::training::{train, NetworkConfig, TrainConfig};

fn main() -> pdyn::Result<()> {
    let mut rc = RunConfig::preset("desk_sw32")?;
    rc.sim.nx = 16;
    rc.sim.ny = 16;
    let oracle = oracle_interpolation(&rc.sim, &rc.model.observed, 3, 9, 3, 4)?;
    println!("true F:  seen {:.3e}  unseen {:.3e}  dt-vs-dt/2 {:.3e}  ratio {:.2}", oracle.seen_mse, oracle.unseen_mse, oracle.discretization_mse, oracle.ratio);

    let data = generate_dataset(&rc.sim, Split { train: 200, test: 60 })?;
    rc.model.network = NetworkConfig { width: 16, n_blocks: 2, ..NetworkConfig::default() };
    let cfg = TrainConfig { lr: 1e-4, target_len: 3, target_stride: 3, epochs: 4, iters_per_epoch: Some(30), validation_windows: 8, ..rc.train };
    let (model, _) = train::<f32>(&data, &rc.model, cfg, &mut |_| {})?;
    let r = interpolation_eval(&model, &data, data.test_range(), 3, 9, 3, 2)?;
    println!("learned: seen {:.3e}  unseen {:.3e}", r.seen_mse, r.unseen_mse);
    println!("persistence: seen {:.3e}  unseen {:.3e}", r.seen_persistence, r.unseen_persistence);
    for (o, (m, p)) in r.mse.iter().zip(&r.persistence).enumerate() {
        let tag = if r.seen.contains(&(o + 1)) { "seen" } else { "" };
        println!("  offset {:>2} {:>11.4e} {:>11.4e} {tag}", o + 1, m, p);
    }
    Ok(())
}
