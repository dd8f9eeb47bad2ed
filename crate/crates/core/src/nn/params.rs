use std::collections::HashMap;

use super::{NnError, Scalar, Tensor};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named trainable tensors with gradients, iterated in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = self.params.len();
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value, grad });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NnError> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| NnError::UnknownParam(name.into()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    /// Adds `g` into the accumulated gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) -> Result<(), NnError> {
        self.params[id.0].grad.add_assign(g)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Replaces a parameter value, keeping its shape fixed.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), NnError> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(NnError::Shape(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Same names and values at another precision, gradients zeroed.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.cast()).expect("names are unique");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(ps.add("w", Tensor::zeros(&[2])), Err(NnError::DuplicateParam(_))));
    }

    #[test]
    fn shapes_are_fixed() {
        let mut ps = ParamSet::<f32>::new();
        let id = ps.add("w", Tensor::zeros(&[2, 3])).unwrap();
        assert!(ps.set_value(id, Tensor::zeros(&[3, 2])).is_err());
        assert!(ps.set_value(id, Tensor::full(&[2, 3], 1.0)).is_ok());
    }

    #[test]
    fn iteration_follows_insertion_order() {
        let mut ps = ParamSet::<f64>::new();
        for name in ["z", "a", "m"] {
            ps.add(name, Tensor::zeros(&[1])).unwrap();
        }
        let names: Vec<_> = ps.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["z", "a", "m"]);
    }
}
