use std::collections::BTreeMap;

use crate::diffcore::{Gradients, Tape, Tensor, Var};
use crate::{Error, Result};

pub const SHARED_ENCODER: &str = "shared_encoder";
pub const SHARED_DECODER: &str = "shared_decoder";

/// A named group of trainable tensors with one freeze flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub name: String,
    pub tensors: Vec<Tensor>,
    pub frozen: bool,
}

impl Partition {
    pub fn new(name: impl Into<String>, tensors: Vec<Tensor>) -> Self {
        Self {
            name: name.into(),
            tensors,
            frozen: false,
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

/// Ordered collection of partitions; every tensor belongs to exactly one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    partitions: Vec<Partition>,
}

/// Per-partition gradients for the partitions that were trainable.
pub type ParamGrads = BTreeMap<String, Vec<Tensor>>;

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.partitions.iter().map(|p| p.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.partitions.iter().any(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Partition> {
        self.partitions
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Lookup(format!("no partition named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Partition> {
        self.partitions
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Lookup(format!("no partition named `{name}`")))
    }

    /// Adds or replaces a partition.
    pub fn insert(&mut self, partition: Partition) {
        match self.partitions.iter_mut().find(|p| p.name == partition.name) {
            Some(slot) => *slot = partition,
            None => self.partitions.push(partition),
        }
    }

    pub fn remove(&mut self, name: &str) -> Result<Partition> {
        let i = self
            .partitions
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::Lookup(format!("no partition named `{name}`")))?;
        Ok(self.partitions.remove(i))
    }

    /// Marks partitions as frozen. Fails without changes if any name is unknown.
    pub fn freeze<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        self.set_frozen(names, true)
    }

    pub fn unfreeze<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        self.set_frozen(names, false)
    }

    fn set_frozen<S: AsRef<str>>(&mut self, names: &[S], frozen: bool) -> Result<()> {
        for n in names {
            self.get(n.as_ref())?;
        }
        for n in names {
            self.get_mut(n.as_ref())?.frozen = frozen;
        }
        Ok(())
    }

    pub fn freeze_all(&mut self) {
        for p in &mut self.partitions {
            p.frozen = true;
        }
    }

    pub fn total_count(&self) -> usize {
        self.partitions.iter().map(Partition::param_count).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.partitions
            .iter()
            .filter(|p| !p.frozen)
            .map(Partition::param_count)
            .sum()
    }

    /// Records the selected partitions as leaves; frozen ones do not require grad.
    pub fn bind(&self, tape: &mut Tape, select: impl Fn(&str) -> bool) -> Bound {
        self.bind_with(tape, select, |p| !p.frozen)
    }

    /// Records the selected partitions as constants, regardless of freezing.
    pub fn bind_constants(&self, tape: &mut Tape, select: impl Fn(&str) -> bool) -> Bound {
        self.bind_with(tape, select, |_| false)
    }

    fn bind_with(
        &self,
        tape: &mut Tape,
        select: impl Fn(&str) -> bool,
        grad: impl Fn(&Partition) -> bool,
    ) -> Bound {
        let mut vars = BTreeMap::new();
        for p in self.partitions.iter().filter(|p| select(&p.name)) {
            let g = grad(p);
            let vs = p.tensors.iter().map(|t| tape.leaf(t.clone(), g)).collect();
            vars.insert(p.name.clone(), vs);
        }
        Bound { vars }
    }

    pub fn bind_all(&self, tape: &mut Tape) -> Bound {
        self.bind(tape, |_| true)
    }

    /// Gradients of every bound, unfrozen partition (zeros where unused).
    pub fn collect_grads(&self, bound: &Bound, grads: &mut Gradients) -> Result<ParamGrads> {
        let mut out = ParamGrads::new();
        for (name, vars) in &bound.vars {
            let part = self.get(name)?;
            if part.frozen {
                continue;
            }
            let gs = vars
                .iter()
                .zip(&part.tensors)
                .map(|(v, t)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            out.insert(name.clone(), gs);
        }
        Ok(out)
    }
}

/// Tape variables of bound partitions.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Vec<Var>>,
}

impl Bound {
    /// Binds partitions to existing tape leaves.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Vec<Var>)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&[Var]> {
        self.vars
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("partition `{name}` is not bound")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freeze_rejects_unknown_names_atomically() {
        let mut ps = ParameterSet::new();
        ps.insert(Partition::new("a", vec![Tensor::zeros(&[2])]));
        ps.insert(Partition::new("b", vec![Tensor::zeros(&[3])]));
        assert!(matches!(ps.freeze(&["a", "zzz"]), Err(Error::Lookup(_))));
        assert!(!ps.get("a").unwrap().frozen);
        ps.freeze(&["a"]).unwrap();
        assert_eq!(ps.trainable_count(), 3);
        assert_eq!(ps.total_count(), 5);
    }
}
