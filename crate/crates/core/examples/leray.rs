//! Helmholtz-Leray projection on a random periodic velocity field.
//!
//! cargo run --example leray

use pdyn::fields::{divergence, leray_project, Field2D, Grid2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pdyn::Result<()> {
    let g = Grid2D::unit_square(32, 32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = Field2D::from_index_fn(g, |_, _| rng.random_range(-1.0..1.0));
    let v = Field2D::from_index_fn(g, |_, _| rng.random_range(-1.0..1.0));

    let (pu, pv) = leray_project(&u, &v);
    let (ppu, ppv) = leray_project(&pu, &pv);
    println!("divergence before     {:.3e}", divergence(&u, &v).max_abs());
    println!("divergence after      {:.3e}", divergence(&pu, &pv).max_abs());
    println!("idempotence defect    {:.3e}", ppu.sub(&pu).max_abs().max(ppv.sub(&pv).max_abs()));
    println!("mean flow kept        {:.3e}", (pu.mean() - u.mean()).abs().max((pv.mean() - v.mean()).abs()));
    let removed = u.sub(&pu).rms().hypot(v.sub(&pv).rms());
    println!("gradient part removed {removed:.3}");
    Ok(())
}
