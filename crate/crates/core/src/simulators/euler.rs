//! Inviscid incompressible flow with a passively advected density on the
//! periodic unit square, velocity kept divergence free by the Leray projector.

use crate::error::Result;
use crate::fields::{ddx, ddy, leray_project, Field2D, StateField};

pub const CHANNELS: [&str; 3] = ["u", "v", "rho"];

/// `(u . grad) q` in the skew-symmetric split
/// `((u . grad) q + div(u q)) / 2`. Summation by parts makes
/// `sum q * advect_skew(u, v, q)` vanish for any `u`, so the discrete
/// energy and density variance are not pumped up by the centered stencils.
fn advect_skew(u: &Field2D, v: &Field2D, q: &Field2D) -> Field2D {
    let adv = u.zip_with(&ddx(q), |a, b| a * b).add(&v.zip_with(&ddy(q), |a, b| a * b));
    let flux = ddx(&u.zip_with(q, |a, b| a * b)).add(&ddy(&v.zip_with(q, |a, b| a * b)));
    adv.add(&flux).scale(0.5)
}

/// Tendencies `(-P[(u.grad)u], -(u.grad) rho)`.
pub fn euler_rhs(x: &StateField) -> Result<StateField> {
    x.expect_channels(&CHANNELS)?;
    let (u, v, rho) = (x.channel(0), x.channel(1), x.channel(2));
    let au = advect_skew(u, v, u);
    let av = advect_skew(u, v, v);
    let (pu, pv) = leray_project(&au, &av);
    let arho = advect_skew(u, v, rho);
    StateField::new(vec![
        ("u".into(), pu.scale(-1.0)),
        ("v".into(), pv.scale(-1.0)),
        ("rho".into(), arho.scale(-1.0)),
    ])
}

/// Velocity `(-d psi/dy, d psi/dx)` of a stream function; discretely
/// divergence free because the centered differences commute.
pub fn velocity_from_streamfunction(psi: &Field2D) -> (Field2D, Field2D) {
    (ddy(psi).scale(-1.0), ddx(psi))
}
