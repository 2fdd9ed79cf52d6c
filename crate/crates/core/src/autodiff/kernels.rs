//! Numeric kernels behind the tape primitives. Convolutions go through
//! im2col and a single gemm; all padding is circular.

use super::{Real, Tensor};
use crate::error::{Error, Result};

pub(crate) struct ConvGeometry {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new<T: Real>(x: &Tensor<T>, k: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize) -> Result<Self> {
        let (cin, h, w) = x.chw()?;
        let [cout, kin, kh, kw] = k.shape()[..] else {
            return Err(Error::Shape(format!("kernel must be (out, in, kh, kw), got {:?}", k.shape())));
        };
        if kin != cin {
            return Err(Error::Shape(format!("kernel expects {kin} input channels, input has {cin}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Shape(format!("kernel size must be odd, got {kh}x{kw}")));
        }
        if !(stride == 1 || stride == 2) || h % stride != 0 || w % stride != 0 {
            return Err(Error::Shape(format!("stride {stride} does not tile a {h}x{w} input")));
        }
        if let Some(b) = b {
            if b.shape() != [cout] {
                return Err(Error::Shape(format!("bias must be ({cout},), got {:?}", b.shape())));
            }
        }
        Ok(Self { cin, cout, h, w, kh, kw, stride })
    }

    pub fn ho(&self) -> usize {
        self.h / self.stride
    }

    pub fn wo(&self) -> usize {
        self.w / self.stride
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.ho() * self.wo()
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }

    /// Source index along one axis for output position `o` and tap `a`.
    fn taps(n: usize, k: usize, stride: usize, n_out: usize) -> Vec<usize> {
        let pad = (k / 2) as isize;
        let mut out = Vec::with_capacity(k * n_out);
        for a in 0..k as isize {
            for o in 0..n_out as isize {
                out.push((o * stride as isize + a - pad).rem_euclid(n as isize) as usize);
            }
        }
        out
    }
}

fn im2col<T: Real>(g: &ConvGeometry, x: &[T]) -> Vec<T> {
    let (ho, wo) = (g.ho(), g.wo());
    let ti = ConvGeometry::taps(g.h, g.kh, g.stride, ho);
    let tj = ConvGeometry::taps(g.w, g.kw, g.stride, wo);
    let mut cols = Vec::with_capacity(g.patch() * g.pixels());
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for a in 0..g.kh {
            for b in 0..g.kw {
                for oi in 0..ho {
                    let row = &plane[ti[a * ho + oi] * g.w..][..g.w];
                    cols.extend(tj[b * wo..(b + 1) * wo].iter().map(|&j| row[j]));
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let (ho, wo) = (g.ho(), g.wo());
    let ti = ConvGeometry::taps(g.h, g.kh, g.stride, ho);
    let tj = ConvGeometry::taps(g.w, g.kw, g.stride, wo);
    let mut r = 0;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for a in 0..g.kh {
            for b in 0..g.kw {
                let src = &cols[r * ho * wo..(r + 1) * ho * wo];
                for oi in 0..ho {
                    let row = &mut plane[ti[a * ho + oi] * g.w..][..g.w];
                    for (oj, &j) in tj[b * wo..(b + 1) * wo].iter().enumerate() {
                        row[j] += src[oi * wo + oj];
                    }
                }
                r += 1;
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    g: &ConvGeometry,
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Tensor<T> {
    let (m, kk, n) = (g.cout, g.patch(), g.pixels());
    let mut out = vec![T::zero(); m * n];
    if let Some(b) = b {
        for (o, row) in out.chunks_mut(n).enumerate() {
            row.fill(b.data()[o]);
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    let owned;
    let cols: &[T] = if g.is_pointwise() {
        x.data()
    } else {
        owned = im2col(g, x.data());
        &owned
    };
    T::gemm(m, kk, n, T::one(), k.data(), (kk as isize, 1), cols, (n as isize, 1), beta, &mut out, (n as isize, 1));
    Tensor::new(vec![g.cout, g.ho(), g.wo()], out).expect("conv output shape")
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dk: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    x: &Tensor<T>,
    k: &Tensor<T>,
    dout: &Tensor<T>,
    want: (bool, bool, bool),
) -> ConvGrads<T> {
    let (m, kk, n) = (g.cout, g.patch(), g.pixels());
    let d = dout.data();
    let mut grads = ConvGrads { dx: None, dk: None, db: None };
    if want.1 {
        let owned;
        let cols: &[T] = if g.is_pointwise() {
            x.data()
        } else {
            owned = im2col(g, x.data());
            &owned
        };
        let mut dk = vec![T::zero(); m * kk];
        // dK = dOut . cols^T
        T::gemm(m, n, kk, T::one(), d, (n as isize, 1), cols, (1, n as isize), T::zero(), &mut dk, (kk as isize, 1));
        grads.dk = Some(Tensor::new(k.shape().to_vec(), dk).expect("kernel grad shape"));
    }
    if want.0 {
        let mut dcols = vec![T::zero(); kk * n];
        // dCols = K^T . dOut
        T::gemm(kk, m, n, T::one(), k.data(), (1, kk as isize), d, (n as isize, 1), T::zero(), &mut dcols, (n as isize, 1));
        let dx = if g.is_pointwise() {
            dcols
        } else {
            let mut dx = vec![T::zero(); g.cin * g.h * g.w];
            col2im(g, &dcols, &mut dx);
            dx
        };
        grads.dx = Some(Tensor::new(vec![g.cin, g.h, g.w], dx).expect("input grad shape"));
    }
    if want.2 {
        let db = d.chunks(n).map(|row| row.iter().copied().sum()).collect();
        grads.db = Some(Tensor::new(vec![m], db).expect("bias grad shape"));
    }
    grads
}

/// Periodic bilinear 2x upsampling along one axis of a strided line.
/// Output sample `2m` sits at input coordinate `m - 1/4`, `2m + 1` at `m + 1/4`.
fn upsample_line<T: Real>(src: &[T], dst: &mut [T]) {
    let n = src.len();
    let (near, far) = (T::lit(0.75), T::lit(0.25));
    for m in 0..n {
        let prev = src[(m + n - 1) % n];
        let next = src[(m + 1) % n];
        dst[2 * m] = near * src[m] + far * prev;
        dst[2 * m + 1] = near * src[m] + far * next;
    }
}

/// Transpose of [`upsample_line`].
fn upsample_line_adjoint<T: Real>(dout: &[T], dsrc: &mut [T]) {
    let n = dsrc.len();
    let (near, far) = (T::lit(0.75), T::lit(0.25));
    for m in 0..n {
        let from_next = dout[(2 * m + 2) % (2 * n)];
        let from_prev = dout[(2 * m + 2 * n - 1) % (2 * n)];
        dsrc[m] = near * (dout[2 * m] + dout[2 * m + 1]) + far * (from_next + from_prev);
    }
}

fn separable<T: Real>(
    x: &Tensor<T>,
    (ho, wo): (usize, usize),
    line: fn(&[T], &mut [T]),
) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    let mut mid = vec![T::zero(); c * h * wo];
    for (src, dst) in x.data().chunks(w).zip(mid.chunks_mut(wo)) {
        line(src, dst);
    }
    let mut out = vec![T::zero(); c * ho * wo];
    let mut col_in = vec![T::zero(); h];
    let mut col_out = vec![T::zero(); ho];
    for ch in 0..c {
        let plane_in = &mid[ch * h * wo..(ch + 1) * h * wo];
        let plane_out = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for j in 0..wo {
            for i in 0..h {
                col_in[i] = plane_in[i * wo + j];
            }
            line(&col_in, &mut col_out);
            for i in 0..ho {
                plane_out[i * wo + j] = col_out[i];
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

pub(crate) fn upsample2x<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, h, w) = x.chw()?;
    separable(x, (2 * h, 2 * w), upsample_line)
}

pub(crate) fn upsample2x_adjoint<T: Real>(dout: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, h, w) = dout.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("cannot pool an odd {h}x{w} map")));
    }
    separable(dout, (h / 2, w / 2), upsample_line_adjoint)
}
