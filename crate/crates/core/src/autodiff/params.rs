use super::{Gradients, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// Named tensors backed by one flat buffer; the named and flat views share
/// storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector<T> {
    entries: Vec<Entry>,
    flat: Vec<T>,
}

impl<T: Real> ParameterVector<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), flat: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Shape(format!("duplicate parameter {name:?}")));
        }
        let offset = self.flat.len();
        self.entries.push(Entry { name, shape: value.shape().to_vec(), offset, len: value.len() });
        self.flat.extend_from_slice(value.data());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn n_tensors(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn flat(&self) -> &[T] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [T] {
        &mut self.flat
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.flat.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.flat.len(), values.len())));
        }
        self.flat.copy_from_slice(values);
        Ok(())
    }

    fn entry(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Shape(format!("no parameter named {name:?}")))
    }

    pub fn shape_of(&self, name: &str) -> Result<&[usize]> {
        Ok(&self.entry(name)?.shape)
    }

    pub fn slice(&self, name: &str) -> Result<&[T]> {
        let e = self.entry(name)?;
        Ok(&self.flat[e.offset..e.offset + e.len])
    }

    pub fn slice_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let e = self.entry(name)?.clone();
        Ok(&mut self.flat[e.offset..e.offset + e.len])
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor<T>> {
        let e = self.entry(name)?;
        Tensor::new(e.shape.clone(), self.flat[e.offset..e.offset + e.len].to_vec())
    }

    /// Same layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self { entries: self.entries.clone(), flat: vec![T::zero(); self.flat.len()] }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries == other.entries
    }

    /// Records every parameter as a gradient-carrying leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> ParamVars {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                let t = Tensor::new(e.shape.clone(), self.flat[e.offset..e.offset + e.len].to_vec())
                    .expect("entry shape");
                tape.leaf(t, true)
            })
            .collect();
        ParamVars { vars, names: self.entries.iter().map(|e| e.name.clone()).collect() }
    }

    /// Flat gradient in this vector's layout; parameters the pass never
    /// touched get zero.
    pub fn gather_grad(&self, vars: &ParamVars, grads: &Gradients<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.flat.len()];
        for (e, v) in self.entries.iter().zip(&vars.vars) {
            if let Some(g) = grads.get(*v) {
                out[e.offset..e.offset + e.len].copy_from_slice(g.data());
            }
        }
        out
    }
}

/// Tape handles for the tensors of a [`ParameterVector`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<Var>,
    names: Vec<String>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Shape(format!("no parameter named {name:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_named_views_alias() {
        let mut p = ParameterVector::<f64>::new();
        p.push("k", Tensor::new(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap()).unwrap();
        p.push("b", Tensor::new(vec![1], vec![3.0]).unwrap()).unwrap();
        assert!(p.push("b", Tensor::zeros(&[1])).is_err());
        p.flat_mut()[1] = 5.0;
        assert_eq!(p.slice("k").unwrap(), &[1.0, 5.0]);
        p.slice_mut("b").unwrap()[0] = -1.0;
        assert_eq!(p.flat(), &[1.0, 5.0, -1.0]);
        assert_eq!(p.tensor("k").unwrap().shape(), &[1, 1, 1, 2]);
        assert!(p.set_flat(&[0.0]).is_err());
    }
}
