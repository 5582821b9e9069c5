use std::collections::BTreeMap;

use crate::{Error, Result};

use super::Tensor4;

/// One named parameter with its gradient slot. Frozen entries (e.g. random
/// Fourier matrices) keep a gradient slot too but are skipped by optimizers.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor4,
    pub grad: Tensor4,
    pub trainable: bool,
}

/// Named parameter map. Keys are unique path strings; iteration order is the
/// sorted key order, which keeps initialization and updates deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, value: Tensor4, trainable: bool) -> Result<()> {
        if self.entries.contains_key(path) {
            return Err(Error::config(format!("duplicate parameter path {path:?}")));
        }
        let grad = Tensor4::zeros(value.shape());
        self.entries.insert(path.to_string(), Param { value, grad, trainable });
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Param> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::config(format!("unknown parameter path {path:?}")))
    }

    pub fn value(&self, path: &str) -> Result<&Tensor4> {
        self.get(path).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(path)
            .ok_or_else(|| Error::config(format!("unknown parameter path {path:?}")))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, path: &str, grad: &Tensor4) -> Result<()> {
        let p = self.get_mut(path)?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::config(format!(
                "gradient shape {:?} != parameter shape {:?} for {path:?}",
                grad.shape(),
                p.grad.shape()
            )));
        }
        p.grad.add_assign(grad)
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_paths_and_matching_grad_slots() {
        let mut s = ParamStore::new();
        s.insert("a.weight", Tensor4::zeros([1, 2, 3, 4]), true).unwrap();
        assert!(s.insert("a.weight", Tensor4::zeros([1, 1, 1, 1]), true).is_err());
        let p = s.get("a.weight").unwrap();
        assert_eq!(p.value.shape(), p.grad.shape());
        assert!(s.get("missing").is_err());
    }

    #[test]
    fn grad_accumulation_checks_shape() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor4::zeros([1, 1, 1, 2]), true).unwrap();
        assert!(s.accumulate_grad("w", &Tensor4::filled([1, 1, 1, 2], 1.0)).is_ok());
        assert!(s.accumulate_grad("w", &Tensor4::zeros([1, 1, 2, 1])).is_err());
        assert_eq!(s.get("w").unwrap().grad.data(), &[1.0, 1.0]);
    }
}
