use super::Field2D;

/// Centered difference along x: `(f[i+1] - f[i-1]) / (2 dx)`.
pub fn ddx(f: &Field2D) -> Field2D {
    let g = *f.grid();
    let v = f.values();
    let inv = 1.0 / (2.0 * g.dx);
    Field2D::from_index_fn(g, |i, j| (v[g.wrap(i, j, 1, 0)] - v[g.wrap(i, j, -1, 0)]) * inv)
}

/// Centered difference along y: `(f[j+1] - f[j-1]) / (2 dy)`.
pub fn ddy(f: &Field2D) -> Field2D {
    let g = *f.grid();
    let v = f.values();
    let inv = 1.0 / (2.0 * g.dy);
    Field2D::from_index_fn(g, |i, j| (v[g.wrap(i, j, 0, 1)] - v[g.wrap(i, j, 0, -1)]) * inv)
}

/// Five-point Laplacian.
pub fn laplacian(f: &Field2D) -> Field2D {
    let g = *f.grid();
    let v = f.values();
    let (ix2, iy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    Field2D::from_index_fn(g, |i, j| {
        let c = v[g.idx(i, j)];
        (v[g.wrap(i, j, 1, 0)] - 2.0 * c + v[g.wrap(i, j, -1, 0)]) * ix2
            + (v[g.wrap(i, j, 0, 1)] - 2.0 * c + v[g.wrap(i, j, 0, -1)]) * iy2
    })
}

pub fn divergence(u: &Field2D, v: &Field2D) -> Field2D {
    ddx(u).add(&ddy(v))
}

pub fn vorticity(u: &Field2D, v: &Field2D) -> Field2D {
    ddx(v).sub(&ddy(u))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fields::Grid2D;

    fn impulse(g: Grid2D, at: (usize, usize)) -> Field2D {
        Field2D::from_index_fn(g, |i, j| if (i, j) == at { 1.0 } else { 0.0 })
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let g = Grid2D::unit_square(8, 6).unwrap();
        let c = Field2D::constant(g, 3.5);
        assert_eq!(ddx(&c).max_abs(), 0.0);
        assert_eq!(ddy(&c).max_abs(), 0.0);
        assert_eq!(laplacian(&c).max_abs(), 0.0);
        assert_eq!(divergence(&c, &c).max_abs(), 0.0);
        assert_eq!(vorticity(&c, &c).max_abs(), 0.0);
    }

    #[test]
    fn ddx_impulse_response() {
        let g = Grid2D::new(8, 8, 0.5, 1.0).unwrap();
        let d = ddx(&impulse(g, (3, 2)));
        // (f[i+1] - f[i-1]) / (2 dx): the impulse at i=3 shows up at i=2 (+) and i=4 (-)
        assert_eq!(d.at(2, 2), 1.0);
        assert_eq!(d.at(4, 2), -1.0);
        assert_eq!(d.values().iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn ddx_wraps_around_the_seam() {
        let g = Grid2D::unit_square(4, 4).unwrap();
        let d = ddx(&impulse(g, (0, 0)));
        assert!(d.at(3, 0) > 0.0);
        assert!(d.at(1, 0) < 0.0);
    }

    #[test]
    fn laplacian_impulse_is_five_point() {
        let g = Grid2D::new(6, 6, 0.5, 0.5).unwrap();
        let l = laplacian(&impulse(g, (2, 3)));
        let s = 1.0 / 0.25;
        assert_eq!(l.at(2, 3), -4.0 * s);
        for (i, j) in [(1, 3), (3, 3), (2, 2), (2, 4)] {
            assert_eq!(l.at(i, j), s);
        }
        assert_eq!(l.values().iter().filter(|v| **v != 0.0).count(), 5);
    }

    fn sine_ddx_error(n: usize) -> f64 {
        let lx = 2.0;
        let g = Grid2D::with_extent(n, n, lx, 1.0).unwrap();
        let k = 2.0 * PI / lx;
        let f = Field2D::from_fn(g, |x, _| (k * x).sin());
        let exact = Field2D::from_fn(g, |x, _| k * (k * x).cos());
        ddx(&f).sub(&exact).max_abs()
    }

    #[test]
    fn ddx_is_second_order() {
        let e32 = sine_ddx_error(32);
        let e64 = sine_ddx_error(64);
        let e128 = sine_ddx_error(128);
        assert!(e64 < 1e-2);
        // truncation error (k dx)^2 / 6 * k
        for ratio in [e32 / e64, e64 / e128] {
            assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_of_sine_is_eigenfunction() {
        let g = Grid2D::with_extent(64, 64, 3.0, 1.0).unwrap();
        let k = 2.0 * PI / 3.0;
        let f = Field2D::from_fn(g, |x, _| (k * x).sin());
        let err = laplacian(&f).sub(&f.scale(-k * k)).max_abs();
        let kdx = k * g.dx;
        let leading = kdx * kdx * k * k / 12.0;
        assert!(err < 1.05 * leading, "{err} vs {leading}");
    }

    #[test]
    fn divergence_of_sawtooth_ramp() {
        // u = i (periodic sawtooth); interior centered difference is exactly 1/dx per index step
        let g = Grid2D::new(8, 8, 0.25, 0.25).unwrap();
        let slope_per_cell = 0.3;
        let u = Field2D::from_index_fn(g, |i, _| slope_per_cell * i as f64);
        let v = Field2D::zeros(g);
        let d = divergence(&u, &v);
        for i in 1..7 {
            for j in 0..8 {
                assert!((d.at(i, j) - slope_per_cell / 0.25).abs() < 1e-14);
            }
        }
        // at the seam the ramp jumps back: (u1 - u7) / (2 dx)
        assert!((d.at(0, 0) - (0.3 - 2.1) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn rigid_rotation_has_vorticity_two_omega() {
        let g = Grid2D::unit_square(32, 32).unwrap();
        let omega = 1.7;
        let (xc, yc) = (0.5, 0.5);
        let u = Field2D::from_fn(g, |_, y| -omega * (y - yc));
        let v = Field2D::from_fn(g, |x, _| omega * (x - xc));
        let z = vorticity(&u, &v);
        for i in 2..30 {
            for j in 2..30 {
                assert!((z.at(i, j) - 2.0 * omega).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_field_is_nearly_curl_free() {
        let g = Grid2D::unit_square(64, 64).unwrap();
        let phi = Field2D::from_fn(g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let z = vorticity(&ddx(&phi), &ddy(&phi));
        // centered stencils commute on a periodic grid
        assert!(z.max_abs() < 1e-10, "{}", z.max_abs());
    }
}
