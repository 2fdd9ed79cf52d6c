//! Finite differences vs backprop vs continuous adjoint on a tiny model.
//!
//! cargo run --example gradcheck [seed]

use pdyn::adjoint::{gradcheck, GradCheckConfig};

fn main() -> pdyn::Result<()> {
    let mut cfg = GradCheckConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed.parse().expect("seed must be an integer");
    }
    let start = std::time::Instant::now();
    let r = gradcheck(&cfg, None)?;
    println!("parameters        {}", r.n_params);
    println!("fd vs backprop    {:.3e} over {} coordinates", r.fd_rel_error, r.coords.len());
    println!("adjoint gap dt    {:.4}", r.gap);
    println!("adjoint gap dt/2  {:.4}", r.gap_half);
    println!("ratio             {:.3}", r.ratio);
    println!("{} in {:.1?}", if r.passed() { "PASS" } else { "FAIL" }, start.elapsed());
    Ok(())
}
