use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Field2D, Grid2D};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place 2D FFT over an x-major `nx * ny` buffer. The inverse is normalized.
fn fft2(grid: &Grid2D, data: &mut [Complex64], dir: Direction) {
    let (nx, ny) = (grid.nx, grid.ny);
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let (fy, fx) = match dir {
            Direction::Forward => (p.plan_fft_forward(ny), p.plan_fft_forward(nx)),
            Direction::Inverse => (p.plan_fft_inverse(ny), p.plan_fft_inverse(nx)),
        };
        fy.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = data[i * ny + j];
            }
            fx.process(&mut col);
            for i in 0..nx {
                data[i * ny + j] = col[i];
            }
        }
    });
    if let Direction::Inverse = dir {
        let s = 1.0 / (nx * ny) as f64;
        data.iter_mut().for_each(|c| *c *= s);
    }
}

fn forward(f: &Field2D) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(f.grid(), &mut data, Direction::Forward);
    data
}

fn inverse_real(grid: Grid2D, mut data: Vec<Complex64>) -> Field2D {
    fft2(&grid, &mut data, Direction::Inverse);
    Field2D::from_raw(grid, data.into_iter().map(|c| c.re).collect())
}

/// Fourier symbol of the centered first difference, divided by `i`:
/// `sin(2 pi m / n) / h`. Zero at the mean and Nyquist modes.
fn centered_symbol(m: usize, n: usize, h: f64) -> f64 {
    if m == 0 || 2 * m == n {
        0.0
    } else {
        (2.0 * PI * m as f64 / n as f64).sin() / h
    }
}

/// Fourier symbol of the 1D three-point second difference: `-4 sin^2(pi m / n) / h^2`.
fn second_difference_symbol(m: usize, n: usize, h: f64) -> f64 {
    let s = (PI * m as f64 / n as f64).sin();
    -4.0 * s * s / (h * h)
}

/// Solves `laplacian(phi) = rhs` on the periodic grid, where `laplacian` is the
/// five-point stencil. The result has zero mean.
pub fn poisson_solve(rhs: &Field2D) -> Result<Field2D> {
    let g = *rhs.grid();
    let mean = rhs.mean();
    let scale = rhs.rms().max(f64::MIN_POSITIVE);
    if mean.abs() > 1e-8 * scale {
        return Err(Error::IncompatiblePoisson { mean });
    }
    let mut hat = forward(rhs);
    let sx: Vec<f64> = (0..g.nx).map(|m| second_difference_symbol(m, g.nx, g.dx)).collect();
    let sy: Vec<f64> = (0..g.ny).map(|m| second_difference_symbol(m, g.ny, g.dy)).collect();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let k = g.idx(i, j);
            let sym = sx[i] + sy[j];
            hat[k] = if i == 0 && j == 0 { Complex64::new(0.0, 0.0) } else { hat[k] / sym };
        }
    }
    Ok(inverse_real(g, hat))
}

/// Helmholtz-Leray projection onto discretely divergence-free fields.
///
/// Returns `(u, v) - grad(phi)` with `div(grad(phi)) = div(u, v)`, where `grad`
/// and `div` are the centered stencils of this module. Modes whose centered
/// symbol vanishes (the mean flow and the Nyquist lines) are passed through.
pub fn leray_project(u: &Field2D, v: &Field2D) -> (Field2D, Field2D) {
    let g = *u.grid();
    debug_assert_eq!(g, *v.grid());
    let mut uh = forward(u);
    let mut vh = forward(v);
    let kx: Vec<f64> = (0..g.nx).map(|m| centered_symbol(m, g.nx, g.dx)).collect();
    let ky: Vec<f64> = (0..g.ny).map(|m| centered_symbol(m, g.ny, g.dy)).collect();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let k2 = kx[i] * kx[i] + ky[j] * ky[j];
            if k2 == 0.0 {
                continue;
            }
            let idx = g.idx(i, j);
            let proj = (uh[idx] * kx[i] + vh[idx] * ky[j]) / k2;
            uh[idx] -= proj * kx[i];
            vh[idx] -= proj * ky[j];
        }
    }
    (inverse_real(g, uh), inverse_real(g, vh))
}
