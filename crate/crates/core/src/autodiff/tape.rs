use super::kernels::{self, ConvGeometry};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, k: Var, b: Option<Var>, stride: usize },
    Upsample2x { x: Var },
    LeakyRelu { x: Var, slope: T },
    Add { a: Var, b: Var },
    Scale { x: Var, alpha: T },
    Sum { x: Var },
    Concat { parts: Vec<Var> },
    Select { x: Var, idx: Vec<usize> },
    Embed { x: Var, idx: Vec<usize> },
    /// Channels in `idx` replaced by constants; no gradient flows through them.
    Overwrite { x: Var, idx: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Deliberate defects for exercising the verification harness.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Kernel gradients come back scaled by `1 + 1e-3`.
    ScaledKernelGrad,
}

/// Record of executed primitives, replayed in reverse by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    fault: Option<Fault>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Cotangents of the leaves that required gradients.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false, fault: None }
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self { nodes: Vec::new(), consumed: false, fault }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Cross-correlation with circular padding; stride 1 preserves the
    /// spatial size, stride 2 halves it.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (xv, kv) = (self.value(x), self.value(k));
        let bv = b.map(|b| self.value(b));
        let g = ConvGeometry::new(xv, kv, bv, stride)?;
        let out = kernels::conv2d_forward(&g, xv, kv, bv);
        let rg = self.any_grad(&[x, k]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(Op::Conv2d { x, k, b, stride }, out, rg))
    }

    /// Periodic bilinear upsampling by two in both directions.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let out = kernels::upsample2x(self.value(x))?;
        let rg = self.requires_grad(x);
        Ok(self.push(Op::Upsample2x { x }, out, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > T::zero() { v } else { slope * v }).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.requires_grad(x);
        self.push(Op::LeakyRelu { x, slope }, out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).same_shape(self.value(b))?;
        let out = self.value(a).add(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Add { a, b }, out, rg))
    }

    pub fn scale(&mut self, x: Var, alpha: T) -> Var {
        let out = self.value(x).scale(alpha);
        let rg = self.requires_grad(x);
        self.push(Op::Scale { x, alpha }, out, rg)
    }

    /// `a + alpha * b`
    pub fn axpy(&mut self, a: Var, alpha: T, b: Var) -> Result<Var> {
        let sb = self.scale(b, alpha);
        self.add(a, sb)
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.requires_grad(x);
        self.push(Op::Sum { x }, out, rg)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, out, rg))
    }

    pub fn select_channels(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let out = self.value(x).select_channels(idx)?;
        let rg = self.requires_grad(x);
        Ok(self.push(Op::Select { x, idx: idx.to_vec() }, out, rg))
    }

    pub fn embed_channels(&mut self, x: Var, idx: &[usize], total: usize) -> Result<Var> {
        let out = self.value(x).embed_channels(idx, total)?;
        let rg = self.requires_grad(x);
        Ok(self.push(Op::Embed { x, idx: idx.to_vec() }, out, rg))
    }

    /// Replaces channels `idx` of `x` with `values` (one channel per index).
    pub fn overwrite_channels(&mut self, x: Var, idx: &[usize], values: &Tensor<T>) -> Result<Var> {
        let mut out = self.value(x).clone();
        let (c, h, w) = out.chw()?;
        let (vc, vh, vw) = values.chw()?;
        if vc != idx.len() || (vh, vw) != (h, w) || idx.iter().any(|&k| k >= c) {
            return Err(Error::Shape(format!("cannot overwrite channels {idx:?} with {:?}", values.shape())));
        }
        for (src, &dst) in idx.iter().enumerate() {
            out.channel_mut(dst).copy_from_slice(values.channel(src));
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Op::Overwrite { x, idx: idx.to_vec() }, out, rg))
    }

    /// Reverse pass seeded with `cotangent` at `output`.
    pub fn backward(&mut self, output: Var, cotangent: Tensor<T>) -> Result<Gradients<T>> {
        self.backward_from(vec![(output, cotangent)])
    }

    /// Reverse pass with several seeded outputs; seeds on the same variable add.
    /// The tape can be replayed only once.
    pub fn backward_from(&mut self, seeds: Vec<(Var, Tensor<T>)>) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        for (v, seed) in seeds {
            self.value(v).same_shape(&seed)?;
            accumulate(&mut grads[v.0], seed);
        }
        for i in (0..n).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, stride } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let geom = ConvGeometry::new(xv, kv, b.map(|b| self.value(b)), *stride)?;
                let want_b = b.is_some_and(|b| wants(&b));
                let cg = kernels::conv2d_backward(&geom, xv, kv, &g, (wants(x), wants(k), want_b));
                if let Some(dx) = cg.dx {
                    accumulate(&mut grads[x.0], dx);
                }
                if let Some(mut dk) = cg.dk {
                    if self.fault == Some(Fault::ScaledKernelGrad) {
                        dk = dk.scale(T::lit(1.0 + 1e-3));
                    }
                    accumulate(&mut grads[k.0], dk);
                }
                if let (Some(db), Some(b)) = (cg.db, b) {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Upsample2x { x } => accumulate(&mut grads[x.0], kernels::upsample2x_adjoint(&g)?),
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xi, &gi)| if xi > T::zero() { gi } else { *slope * gi })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Add { a, b } => {
                if wants(b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
                if wants(a) {
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::Scale { x, alpha } => accumulate(&mut grads[x.0], g.scale(*alpha)),
            Op::Sum { x } => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(&mut grads[x.0], Tensor::full(&shape, g.data()[0]));
            }
            Op::Concat { parts } => {
                let mut start = 0;
                for p in parts {
                    let c = self.value(*p).chw()?.0;
                    if wants(p) {
                        let idx: Vec<usize> = (start..start + c).collect();
                        accumulate(&mut grads[p.0], g.select_channels(&idx)?);
                    }
                    start += c;
                }
            }
            Op::Select { x, idx } => {
                let total = self.value(*x).chw()?.0;
                accumulate(&mut grads[x.0], g.embed_channels(idx, total)?);
            }
            Op::Embed { x, idx } => accumulate(&mut grads[x.0], g.select_channels(idx)?),
            Op::Overwrite { x, idx } => {
                let mut g = g;
                for &k in idx {
                    g.channel_mut(k).fill(T::zero());
                }
                accumulate(&mut grads[x.0], g);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
