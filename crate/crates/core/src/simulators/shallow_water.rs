//! Reduced-gravity shallow water on a doubly periodic Arakawa C-grid.
//!
//! Cell `(i, j)` covers `[i dx, (i+1) dx] x [j dy, (j+1) dy]`. The height
//! anomaly `h` lives at the cell center, `u` on the west face
//! `(i dx, (j+1/2) dy)`, `v` on the south face `((i+1/2) dx, j dy)` and the
//! relative vorticity on the south-west corner `(i dx, j dy)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field2D, Grid2D, StateField};

pub const CHANNELS: [&str; 3] = ["u", "v", "h"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShallowWaterParams {
    /// Reduced gravity, m/s^2.
    pub g_star: f64,
    /// Mean mixed-layer depth, m.
    pub h_mean: f64,
    /// Water density, kg/m^3.
    pub rho0: f64,
    /// Linear drag, 1/s.
    pub gamma: f64,
    /// Lateral diffusion, m^2/s.
    pub nu: f64,
    /// Wind stress amplitude.
    pub tau0: f64,
    /// Coriolis parameter at `yc`, 1/s.
    pub f0: f64,
    /// Meridional Coriolis gradient, 1/(m s).
    pub beta: f64,
    pub lx: f64,
    pub ly: f64,
    /// Reference latitude of the beta plane; `None` means the domain center.
    pub yc: Option<f64>,
}

impl Default for ShallowWaterParams {
    fn default() -> Self {
        Self {
            g_star: 0.02,
            h_mean: 500.0,
            rho0: 1000.0,
            gamma: 2e-7,
            nu: 0.72,
            tau0: 0.15,
            f0: 1e-4,
            beta: 2e-11,
            lx: 1.6e6,
            ly: 1.6e6,
            yc: None,
        }
    }
}

impl ShallowWaterParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.h_mean > 0.0
            && self.rho0 > 0.0
            && self.nu >= 0.0
            && self.gamma >= 0.0
            && self.lx > 0.0
            && self.ly > 0.0
            && self.g_star > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid shallow-water parameters {self:?}")));
        }
        Ok(())
    }

    pub fn y_center(&self) -> f64 {
        self.yc.unwrap_or(0.5 * self.ly)
    }

    pub fn grid(&self, nx: usize, ny: usize) -> Result<Grid2D> {
        Grid2D::with_extent(nx, ny, self.lx, self.ly)
    }

    /// `tau0 sin(2 pi (y - yc) / Ly)`
    pub fn tau_x(&self, y: f64) -> f64 {
        self.tau0 * (2.0 * std::f64::consts::PI * (y - self.y_center()) / self.ly).sin()
    }
}

/// Zonal wind stress sampled at the `u` points of `grid`; depends on `y` only.
pub fn wind_forcing(grid: &Grid2D, p: &ShallowWaterParams) -> Field2D {
    Field2D::from_index_fn(*grid, |_, j| p.tau_x((j as f64 + 0.5) * grid.dy))
}

/// Tendencies of the staggered state `(u, v, h)`.
pub fn shallow_water_rhs(x: &StateField, p: &ShallowWaterParams) -> Result<StateField> {
    x.expect_channels(&CHANNELS)?;
    let g = *x.grid();
    let (nx, ny, dx, dy) = (g.nx, g.ny, g.dx, g.dy);
    let (u, v, h) = (x.channel(0).values(), x.channel(1).values(), x.channel(2).values());
    let at = |i: usize, j: usize| i * ny + j;
    let im = |i: usize| (i + nx - 1) % nx;
    let ip = |i: usize| (i + 1) % nx;
    let jm = |j: usize| (j + ny - 1) % ny;
    let jp = |j: usize| (j + 1) % ny;

    for i in 0..nx {
        for j in 0..ny {
            let t = p.h_mean + h[at(i, j)];
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::NonPositiveThickness { i, j, thickness: t });
            }
        }
    }

    let n = g.len();
    // Bernoulli function at centers, absolute vorticity at corners, face fluxes
    let mut bern = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut flux_u = vec![0.0; n];
    let mut flux_v = vec![0.0; n];
    let yc = p.y_center();
    for i in 0..nx {
        for j in 0..ny {
            let k = at(i, j);
            let ke = 0.25 * (u[k] * u[k] + u[at(ip(i), j)].powi(2) + v[k] * v[k] + v[at(i, jp(j))].powi(2));
            bern[k] = p.g_star * h[k] + ke;
            let zeta = (v[k] - v[at(im(i), j)]) / dx - (u[k] - u[at(i, jm(j))]) / dy;
            q[k] = p.f0 + p.beta * (j as f64 * dy - yc) + zeta;
            flux_u[k] = u[k] * (p.h_mean + 0.5 * (h[at(im(i), j)] + h[k]));
            flux_v[k] = v[k] * (p.h_mean + 0.5 * (h[at(i, jm(j))] + h[k]));
        }
    }

    let lap = |f: &[f64], i: usize, j: usize| {
        let c = f[at(i, j)];
        (f[at(ip(i), j)] - 2.0 * c + f[at(im(i), j)]) / (dx * dx)
            + (f[at(i, jp(j))] - 2.0 * c + f[at(i, jm(j))]) / (dy * dy)
    };

    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut dh = vec![0.0; n];
    for i in 0..nx {
        for j in 0..ny {
            let k = at(i, j);
            // u point (i dx, (j+1/2) dy): corners (i, j) and (i, j+1)
            let qv = 0.5
                * (q[k] * 0.5 * (v[at(im(i), j)] + v[k])
                    + q[at(i, jp(j))] * 0.5 * (v[at(im(i), jp(j))] + v[at(i, jp(j))]));
            let hu = p.h_mean + 0.5 * (h[at(im(i), j)] + h[k]);
            let tau = p.tau_x((j as f64 + 0.5) * dy);
            du[k] = qv - (bern[k] - bern[at(im(i), j)]) / dx + tau / (p.rho0 * hu) - p.gamma * u[k]
                + p.nu * lap(u, i, j);
            // v point ((i+1/2) dx, j dy): corners (i, j) and (i+1, j)
            let qu = 0.5
                * (q[k] * 0.5 * (u[at(i, jm(j))] + u[k])
                    + q[at(ip(i), j)] * 0.5 * (u[at(ip(i), jm(j))] + u[at(ip(i), j)]));
            dv[k] = -qu - (bern[k] - bern[at(i, jm(j))]) / dy - p.gamma * v[k] + p.nu * lap(v, i, j);
            dh[k] = -(flux_u[at(ip(i), j)] - flux_u[k]) / dx - (flux_v[at(i, jp(j))] - flux_v[k]) / dy;
        }
    }
    StateField::new(vec![
        ("u".into(), Field2D::from_raw(g, du)),
        ("v".into(), Field2D::from_raw(g, dv)),
        ("h".into(), Field2D::from_raw(g, dh)),
    ])
}

/// Moves staggered velocities to cell centers; `h` is already there.
pub fn to_cell_centers(x: &StateField) -> Result<StateField> {
    x.expect_channels(&CHANNELS)?;
    let g = *x.grid();
    let (u, v) = (x.channel(0), x.channel(1));
    let uc = Field2D::from_index_fn(g, |i, j| 0.5 * (u.at(i, j) + u.at((i + 1) % g.nx, j)));
    let vc = Field2D::from_index_fn(g, |i, j| 0.5 * (v.at(i, j) + v.at(i, (j + 1) % g.ny)));
    StateField::new(vec![("u".into(), uc), ("v".into(), vc), ("h".into(), x.channel(2).clone())])
}

/// `sum (H+h)(u^2+v^2)/2 + g* h^2/2` times the cell area, with face values
/// averaged to centers.
pub fn energy(x: &StateField, p: &ShallowWaterParams) -> Result<f64> {
    x.expect_channels(&CHANNELS)?;
    let g = *x.grid();
    let (u, v, h) = (x.channel(0), x.channel(1), x.channel(2));
    let mut e = 0.0;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let u2 = 0.5 * (u.at(i, j).powi(2) + u.at((i + 1) % g.nx, j).powi(2));
            let v2 = 0.5 * (v.at(i, j).powi(2) + v.at(i, (j + 1) % g.ny).powi(2));
            let hh = h.at(i, j);
            e += 0.5 * (p.h_mean + hh) * (u2 + v2) + 0.5 * p.g_star * hh * hh;
        }
    }
    Ok(e * g.dx * g.dy)
}
