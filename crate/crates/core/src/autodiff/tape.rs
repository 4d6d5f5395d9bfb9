use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Local backward rule: given the gradient of the node output and a mask of
/// which parents need a gradient, return one optional gradient per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Result<Vec<Option<Tensor<T>>>>>;

/// A deliberately wrong backward rule, used to prove the gradient checker
/// catches faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// ELU backward returns half the true derivative on the negative branch.
    EluBackward,
}

struct Node<T> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
    shape: Vec<usize>,
}

/// Records differentiable operations in execution order.
///
/// Node ids are assigned on push, so every node's parents precede it and a
/// reverse sweep over ids is a valid topological order.
pub struct Tape<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<IndexMap<String, usize>>,
    recording: bool,
    fault: Option<Fault>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(IndexMap::new()),
            recording: true,
            fault: None,
        }
    }

    /// A tape that records nothing; every op runs forward only.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn with_fault(fault: Fault) -> Self {
        Self {
            fault: Some(fault),
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub(crate) fn fault(&self) -> Option<Fault> {
        self.fault
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        Var {
            tape: self,
            id: None,
            value: Rc::new(value),
        }
    }

    /// An anonymous differentiable leaf; query its gradient with
    /// [`Gradients::of`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        if !self.recording {
            return self.constant(value);
        }
        let id = self.push(Node {
            parents: Vec::new(),
            backward: None,
            shape: value.shape().to_vec(),
        });
        Var {
            tape: self,
            id: Some(id),
            value: Rc::new(value),
        }
    }

    /// A named trainable parameter. Every registered parameter gets an entry
    /// in [`Gradients::params`], zero if it did not influence the output.
    pub fn param(&self, name: &str, value: Tensor<T>) -> Var<'_, T> {
        let v = self.leaf(value);
        if let Some(id) = v.id {
            self.params.borrow_mut().insert(name.to_string(), id);
        }
        v
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Appends an op result. The backward rule is dropped when no parent
    /// needs a gradient.
    pub(crate) fn record<'t>(
        &'t self,
        value: impl Into<Rc<Tensor<T>>>,
        parents: &[&Var<'t, T>],
        backward: BackwardFn<T>,
    ) -> Var<'t, T> {
        let value = value.into();
        let ids: Vec<Option<usize>> = parents.iter().map(|p| p.id).collect();
        if !self.recording || ids.iter().all(Option::is_none) {
            return Var {
                tape: self,
                id: None,
                value,
            };
        }
        let id = self.push(Node {
            parents: ids,
            backward: Some(backward),
            shape: value.shape().to_vec(),
        });
        Var {
            tape: self,
            id: Some(id),
            value,
        }
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, output: &Var<'_, T>) -> Result<Gradients<T>> {
        if output.value.len() != 1 {
            return Err(Error::NonScalar(output.value.shape().to_vec()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        let mut leaves = HashMap::new();
        if let Some(out) = output.id {
            grads[out] = Some(Tensor::full(output.value.shape(), T::one()));
            for id in (0..=out).rev() {
                let Some(g) = grads[id].take() else { continue };
                let node = &nodes[id];
                match &node.backward {
                    None => {
                        leaves.insert(id, g);
                    }
                    Some(rule) => {
                        let needs: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
                        let parent_grads = rule(&g, &needs)?;
                        for (pid, pg) in node.parents.iter().zip(parent_grads) {
                            let (Some(pid), Some(pg)) = (pid, pg) else { continue };
                            debug_assert_eq!(pg.shape(), nodes[*pid].shape.as_slice());
                            match &mut grads[*pid] {
                                Some(acc) => acc.add_assign(&pg),
                                slot @ None => *slot = Some(pg),
                            }
                        }
                    }
                }
            }
        }
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(name, &id)| {
                let g = leaves
                    .get(&id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&nodes[id].shape));
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients { leaves, params })
    }
}

/// A tensor value on a tape. Cloning is cheap (shared value).
#[derive(Clone)]
pub struct Var<'t, T: Scalar = f32> {
    tape: &'t Tape<T>,
    id: Option<usize>,
    value: Rc<Tensor<T>>,
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub(crate) fn shared(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.id.is_some()
    }

    pub fn item(&self) -> Option<T> {
        self.value.item()
    }
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({:?}, {:?})", self.id, self.value)
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f32> {
    leaves: HashMap<usize, Tensor<T>>,
    params: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; zeros when the leaf did not reach the output.
    pub fn of(&self, var: &Var<'_, T>) -> Tensor<T> {
        var.id
            .and_then(|id| self.leaves.get(&id).cloned())
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn params(&self) -> &IndexMap<String, Tensor<T>> {
        &self.params
    }

    pub fn into_params(self) -> IndexMap<String, Tensor<T>> {
        self.params
    }
}
