use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any autodiff lineage on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Vector-Jacobian product of one recorded op: maps the output gradient to
/// one optional gradient per parent, in parent order.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct Lineage {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<f64>>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
    lineage: Option<Lineage>,
}

/// Dense row-major `f64` array with an optional gradient slot and the
/// record of the op that produced it.
///
/// Cloning is cheap: clones share storage.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, lineage: Option<Lineage>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
            lineage,
        }))
    }

    /// A constant tensor (no gradient is ever accumulated into it).
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A trainable leaf.
    pub fn parameter(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// Result of a differentiable op. Lineage is kept only when gradients are
    /// enabled and at least one parent needs them.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        op: &'static str,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(Tensor::requires_grad);
        if track {
            let lineage = Lineage {
                op,
                parents,
                backward: Box::new(backward),
            };
            Self::build(shape, data, true, Some(lineage))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.lineage.is_none()
    }

    /// Name of the op that produced this tensor, if it has lineage.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.lineage.as_ref().map(|l| l.op)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data()[0]
    }

    /// Overwrites the values in place. Used by optimisers and for
    /// running statistics; shape is fixed.
    pub fn set_data(&self, values: &[f64]) -> Result<()> {
        let mut data = self.0.data.write().expect("tensor data lock poisoned");
        if data.len() != values.len() {
            return Err(Error::Dimension(format!(
                "set_data: expected {} values, got {}",
                data.len(),
                values.len()
            )));
        }
        data.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        let mut data = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut data);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// A constant copy sharing no lineage.
    pub fn detach(&self) -> Tensor {
        Tensor::build(self.0.shape.clone(), self.to_vec(), false, None)
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar. Gradients are added into the grad
    /// slot of every reachable trainable leaf.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage("backward on a tensor without lineage".into()));
        }
        if self.is_leaf() {
            self.accumulate_grad(&[1.0]);
            return Ok(());
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.0.id, vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.0.id) else {
                continue;
            };
            let lineage = node.0.lineage.as_ref().expect("topo order holds interior nodes only");
            let parent_grads = (lineage.backward)(&g);
            debug_assert_eq!(parent_grads.len(), lineage.parents.len(), "op {}", lineage.op);
            for (parent, pg) in lineage.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                if parent.is_leaf() {
                    parent.accumulate_grad(&pg);
                } else {
                    match pending.get_mut(&parent.0.id) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(parent.0.id, pg);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Interior nodes reachable from `self`, parents before children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.0.id) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(lineage) = &node.0.lineage {
                for p in &lineage.parents {
                    if p.requires_grad() && !p.is_leaf() && !visited.contains(&p.0.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Dimension(format!("zero extent in shape {shape:?}")));
    }
    if numel(shape) != len {
        return Err(Error::Dimension(format!(
            "shape {shape:?} needs {} values, got {len}",
            numel(shape)
        )));
    }
    Ok(())
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.op_name())
            .field("data", &preview)
            .finish()
    }
}
