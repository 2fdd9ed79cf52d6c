//! Simulates a small shallow-water dataset and writes it to disk.
//!
//! cargo run --example generate [out.pdyn]

use pdyn::autodiff::DType;
use pdyn::io::{generate_to_file, read_dataset, RunConfig};
use pdyn::simulators::Split;

fn main() -> pdyn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("pdyn_example.pdyn").display().to_string());
    let cfg = RunConfig::preset("desk_sw32")?;
    let split = Split { train: 120, test: 40 };
    let side = generate_to_file(&cfg.sim, split, out.as_ref(), DType::F32)?;
    println!("{} frames of {:?} on {}x{}, one every {} s", side.frames, side.meta.channels, side.meta.nx, side.meta.ny, side.meta.frame_dt);
    println!("sha256 {}", side.sha256);
    let (data, _) = read_dataset(out.as_ref())?;
    let h = data.frame(data.len() - 1);
    println!("last frame: h rms {:.3} m, u max {:.3} m/s", h.channel(2).rms(), h.channel(0).max_abs());
    println!("wrote {out}");
    Ok(())
}
