use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Real, Tensor};

/// Random matrix with orthonormal rows (`rows <= cols`) or orthonormal
/// columns (`rows > cols`), row-major.
pub fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (short, long) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(short);
    while q.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        // two Gram-Schmidt sweeps keep the basis orthonormal to roundoff
        for _ in 0..2 {
            for b in &q {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        q.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (s, vec) in q.iter().enumerate() {
        for (l, &x) in vec.iter().enumerate() {
            if rows <= cols {
                out[s * cols + l] = x;
            } else {
                out[l * cols + s] = x;
            }
        }
    }
    out
}

/// Convolution kernel `(out, in, k, k)` whose `out x (in*k*k)` reshaping is orthogonal.
pub fn orthogonal_kernel<T: Real>(out: usize, inp: usize, k: usize, rng: &mut impl Rng) -> Tensor<T> {
    let m = orthogonal_matrix(out, inp * k * k, rng);
    Tensor::from_f64(&[out, inp, k, k], &m).expect("kernel shape")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn gram(m: &[f64], rows: usize, cols: usize, by_rows: bool) -> Vec<f64> {
        let n = if by_rows { rows } else { cols };
        let get = |a: usize, l: usize| if by_rows { m[a * cols + l] } else { m[l * cols + a] };
        let len = if by_rows { cols } else { rows };
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = (0..len).map(|l| get(a, l) * get(b, l)).sum();
            }
        }
        g
    }

    #[test]
    fn orthonormal_in_the_short_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(4, 27), (27, 4), (9, 9), (32, 288)] {
            let m = orthogonal_matrix(r, c, &mut rng);
            let g = gram(&m, r, c, r <= c);
            let n = r.min(c);
            for a in 0..n {
                for b in 0..n {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((g[a * n + b] - expect).abs() < 1e-10);
                }
            }
        }
    }
}
