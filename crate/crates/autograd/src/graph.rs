use std::cell::RefCell;
use std::rc::Rc;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// A define-by-run tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backpropagation.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf_rc(Rc::new(value), true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf_rc(Rc::new(value), false)
    }

    pub fn leaf_rc(&self, value: Rc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Vec::new(), None, requires_grad)
    }

    pub(crate) fn push(
        &self,
        value: Rc<Tensor<T>>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, parents, backward, requires_grad });
        Var { graph: self, id }
    }

    /// Record the result of an op. The backward closure is dropped when no
    /// parent requires a gradient.
    pub(crate) fn op<'g>(
        &'g self,
        value: Tensor<T>,
        parents: &[Var<'g, T>],
        backward: impl Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'g, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        let ids = parents.iter().map(|p| p.id).collect();
        let bw: Option<BackwardFn<T>> =
            if requires_grad { Some(Box::new(backward)) } else { None };
        self.push(Rc::new(value), ids, bw, requires_grad)
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode sweep from a scalar output.
    pub fn backward(&self, output: Var<'_, T>) -> Gradients<T> {
        let seed = {
            let nodes = self.nodes.borrow();
            let v = &nodes[output.id].value;
            assert_eq!(v.numel(), 1, "backward() needs a scalar output, got {:?}", v.shape());
            Tensor::full(v.shape(), T::one())
        };
        self.backward_with(output, seed)
    }

    /// Reverse-mode sweep with an explicit output cotangent.
    pub fn backward_with(&self, output: Var<'_, T>, seed: Tensor<T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.shape(), seed.shape(), "seed shape");
        let mut grads: Vec<Option<Tensor<T>>> = (0..=output.id).map(|_| None).collect();
        grads[output.id] = Some(seed);
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Some(bw) = &node.backward {
                let parent_grads = bw(&g);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !nodes[pid].requires_grad {
                        continue;
                    }
                    debug_assert_eq!(pg.shape(), nodes[pid].value.shape(), "grad shape of node {pid}");
                    match &mut grads[pid] {
                        Some(acc) => acc.add_assign(&pg),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            if node.parents.is_empty() && node.requires_grad {
                grads[id] = Some(g);
            }
        }
        Gradients { grads }
    }
}

/// Gradients of leaves after a backward sweep.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }

    /// Gradient of `var`, or zeros of its shape if it did not influence the output.
    pub fn get_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    /// Scalar value of a single-element node.
    pub fn item(&self) -> T {
        self.value().item()
    }
}
