//! Renders a strip of simulated frames: velocity on top, then each scalar.
//!
//! cargo run --example plot [out.png]

use pdyn::io::plot::{grid_image, render_scalar, render_velocity};
use pdyn::io::RunConfig;
use pdyn::simulators::{generate_dataset, Split};

fn main() -> pdyn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("pdyn_frames.png").display().to_string());
    for preset in ["desk_sw32", "euler64"] {
        let mut sim = RunConfig::preset(preset)?.sim;
        sim.nx = 32;
        sim.ny = 32;
        sim.save_every *= 4;
        let data = generate_dataset(&sim, Split { train: 6, test: 0 })?;
        let frames: Vec<_> = (0..data.len()).map(|k| data.frame(k)).collect();
        let vmax = frames.iter().map(|x| x.channel(0).max_abs().hypot(x.channel(1).max_abs())).fold(0.0, f64::max);
        let smax = frames.iter().map(|x| x.channel(2).max_abs()).fold(0.0, f64::max);
        let rows = vec![
            frames.iter().map(|x| render_velocity(x.channel(0), x.channel(1), vmax, 4)).collect(),
            frames.iter().map(|x| render_scalar(x.channel(2), -smax, smax, 4)).collect(),
        ];
        let path = out.replace(".png", &format!("_{preset}.png"));
        grid_image(&rows, 4).save_png(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
