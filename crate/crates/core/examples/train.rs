//! Trains a small model on a freshly simulated 16x16 basin and saves a
//! checkpoint. The training loss climbs while scheduled sampling decays,
//! since fewer targets get reset to the observation; validation is the
//! number to watch.
//!
//! cargo run --example train [checkpoint path]

use std::time::Instant;

use pdyn::io::RunConfig;
use pdyn::simulators::{generate_dataset, Split};
use pdyn::training::{Checkpoint, LogRecord, NetworkConfig, TrainConfig, Trainer};

fn main() -> pdyn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("pdyn_example.ckpt").display().to_string());
    let mut rc = RunConfig::preset("desk_sw32")?;
    rc.sim.nx = 16;
    rc.sim.ny = 16;
    let data = generate_dataset(&rc.sim, Split { train: 200, test: 50 })?;
    rc.model.network = NetworkConfig { width: 16, n_blocks: 2, ..NetworkConfig::default() };
    let cfg = TrainConfig { lr: 1e-4, epochs: 5, iters_per_epoch: Some(30), validation_windows: 8, ..rc.train };
    let mut t = Trainer::<f32>::new(&data, &rc.model, cfg)?;
    println!("{} parameters", t.model.n_params());
    let start = Instant::now();
    while !t.finished() {
        let mut sum = 0.0;
        let mut n = 0;
        t.run_epoch(&data, start, &mut |r| match r {
            LogRecord::Iter { loss, .. } => {
                sum += loss;
                n += 1;
            }
            LogRecord::Epoch { epoch, val_loss, wall_s, .. } => {
                println!("epoch {epoch}: train {:.4e} validation {val_loss:.4e} ({wall_s:.1} s)", sum / n as f64)
            }
        })?;
    }
    Checkpoint::from_trainer(&t).save(out.as_ref())?;
    println!("saved {out}");
    Ok(())
}
