//! Small reverse-mode differentiation engine.
//!
//! A [`Tape`] records primitive operations on [`Tensor`]s in execution
//! order; [`Tape::backward`] replays it once in reverse and returns the
//! cotangents of every leaf that required a gradient. The primitive set is
//! just what the dynamics and encoder networks need: circular-padded
//! convolution (stride 1 or 2), periodic bilinear upsampling, leaky ReLU,
//! addition, scaling and a few channel bookkeeping ops.

mod kernels;
mod params;
mod real;
mod tape;
mod tensor;

pub use params::{ParamVars, ParameterVector};
pub use real::{DType, Real};
pub use tape::{Fault, Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// A parameterized map recorded on a tape, such as the learned tendency.
pub trait Network<T: Real> {
    fn params(&self) -> &ParameterVector<T>;

    fn params_mut(&mut self) -> &mut ParameterVector<T>;

    fn forward(&self, tape: &mut Tape<T>, params: &ParamVars, x: Var) -> Result<Var>;

    /// Plain evaluation, discarding the tape.
    fn evaluate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let pv = self.params().register(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &pv, xv)?;
        Ok(tape.value(out).clone())
    }
}

/// Output value and both pullbacks of one network evaluation.
#[derive(Debug, Clone)]
pub struct Vjp<T> {
    pub output: Tensor<T>,
    /// `(d F / d x)^T lambda`
    pub state: Tensor<T>,
    /// `(d F / d theta)^T lambda`, flat in the parameter layout.
    pub params: Vec<T>,
}

/// Evaluates `net` at `x` and pulls `cotangent` back to the input and the
/// parameters.
pub fn vjp<T: Real, N: Network<T> + ?Sized>(
    net: &N,
    x: &Tensor<T>,
    cotangent: &Tensor<T>,
    fault: Option<Fault>,
) -> Result<Vjp<T>> {
    let mut tape = Tape::with_fault(fault);
    let pv = net.params().register(&mut tape);
    let xv = tape.leaf(x.clone(), true);
    let out = net.forward(&mut tape, &pv, xv)?;
    let output = tape.value(out).clone();
    let mut grads = tape.backward(out, cotangent.clone())?;
    let state = grads.take(xv).unwrap_or_else(|| Tensor::zeros(x.shape()));
    let params = net.params().gather_grad(&pv, &grads);
    Ok(Vjp { output, state, params })
}

/// `(d F / d x)^T lambda` only.
pub fn vjp_state<T: Real, N: Network<T> + ?Sized>(net: &N, x: &Tensor<T>, lambda: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(vjp(net, x, lambda, None)?.state)
}

/// `(d F / d theta)^T lambda` only.
pub fn vjp_params<T: Real, N: Network<T> + ?Sized>(net: &N, x: &Tensor<T>, lambda: &Tensor<T>) -> Result<Vec<T>> {
    Ok(vjp(net, x, lambda, None)?.params)
}
