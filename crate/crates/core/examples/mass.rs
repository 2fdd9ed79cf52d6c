//! Mass and energy budgets of the shallow-water simulator. With forcing and
//! friction off, mass stays fixed to roundoff while forward Euler amplifies
//! the undamped waves, so the energy grows.
//!
//! cargo run --example mass

use pdyn::io::RunConfig;
use pdyn::simulators::*;

fn main() -> pdyn::Result<()> {
    let mut cfg = RunConfig::preset("desk_sw32")?.sim;
    cfg.shallow_water.gamma = 0.0;
    cfg.shallow_water.nu = 0.0;
    cfg.shallow_water.tau0 = 0.0;
    let p = cfg.shallow_water.clone();
    let x0 = cfg.initial_state()?;
    let mass = |x: &pdyn::fields::StateField| x.channel(2).values().iter().map(|h| p.h_mean + h).sum::<f64>();
    let m0 = mass(&x0);
    let run = Integration { dt: cfg.dt_sim, n_steps: 100, save_every: 10, scheme: Scheme::Euler };
    println!("{:>5} {:>14} {:>14}", "step", "rel. mass drift", "energy");
    integrate_with(cfg.rhs(), &x0, &run, |t, x| {
        let step = (t / cfg.dt_sim).round() as usize;
        println!("{step:>5} {:>14.3e} {:>14.6e}", (mass(x) - m0) / m0, shallow_water_energy(x, &p)?);
        Ok(())
    })?;
    Ok(())
}
