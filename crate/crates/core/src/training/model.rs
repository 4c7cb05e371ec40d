use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// A named set of tensors that is frozen or trained as a unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub tensors: Vec<Tensor>,
    pub frozen: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub groups: Vec<ParamGroup>,
}

impl Params {
    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParamGroup> {
        self.groups.iter_mut().find(|g| g.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &ParamGroup> {
        self.groups.iter().filter(|g| !g.frozen)
    }

    pub fn numel(&self) -> usize {
        self.groups.iter().flat_map(|g| &g.tensors).map(Tensor::numel).sum()
    }

    /// Zero gradient buffers for the trainable groups.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            groups: self
                .trainable()
                .map(|g| (g.name.clone(), g.tensors.iter().map(|t| vec![0.0; t.numel()]).collect()))
                .collect(),
        }
    }
}

/// Per-tensor gradient buffers keyed by group name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub groups: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Gradients {
    /// Checks that the buffers cover exactly the trainable groups of `params`
    /// with matching sizes.
    pub fn check_against(&self, params: &Params) -> Result<()> {
        let trainable: Vec<&ParamGroup> = params.trainable().collect();
        let mismatch = |msg: String| Error::validation("gradient_shape_mismatch", msg);
        if trainable.len() != self.groups.len() {
            return Err(mismatch(format!(
                "gradient has {} groups, model has {} trainable groups",
                self.groups.len(),
                trainable.len()
            )));
        }
        for g in trainable {
            let bufs = self
                .groups
                .get(&g.name)
                .ok_or_else(|| mismatch(format!("no gradient for group {:?}", g.name)))?;
            if bufs.len() != g.tensors.len()
                || bufs.iter().zip(&g.tensors).any(|(b, t)| b.len() != t.numel())
            {
                return Err(mismatch(format!("gradient for group {:?} has the wrong shape", g.name)));
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (name, bufs) in &mut self.groups {
            if let Some(o) = other.groups.get(name) {
                for (b, ob) in bufs.iter_mut().zip(o) {
                    for (x, y) in b.iter_mut().zip(ob) {
                        *x += scale * y;
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.groups.values_mut().flatten().flatten() {
            *v *= s;
        }
    }

    pub fn fill_zero(&mut self) {
        for v in self.groups.values_mut().flatten().flatten() {
            *v = 0.0;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.groups.values().flatten().flatten().copied().collect()
    }
}

/// Anything with named parameter groups the trainer can update.
pub trait TrainableModel {
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;
}

impl TrainableModel for Params {
    fn params(&self) -> &Params {
        self
    }

    fn params_mut(&mut self) -> &mut Params {
        self
    }
}
