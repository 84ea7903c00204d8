use std::collections::BTreeMap;

use super::{NnError, Tensor};

/// One named parameter with its optional gradient and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub momentum: Vec<f64>,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let n = value.len();
        Param {
            value,
            grad: None,
            momentum: vec![0.0; n],
        }
    }
}

/// Named parameter store. BTreeMap keeps iteration order deterministic, which
/// the checkpoint format and the optimizer rely on.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.params.insert(name.to_string(), Param::new(value));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .value
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Adds `grad` into the parameter's gradient accumulator.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) {
        let p = self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"));
        assert_eq!(p.value.shape, grad.shape, "grad shape mismatch for '{name}'");
        match &mut p.grad {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(grad.data.iter()) {
                    *a += b;
                }
            }
            None => p.grad = Some(grad.clone()),
        }
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|p| p.grad.as_ref())
    }

    /// Checkpoint: one length-prefixed name per tensor, each followed by a
    /// TEN1 blob, in sorted name order.
    pub fn write_checkpoint<W: std::io::Write>(&self, w: &mut W) -> Result<(), NnError> {
        for (name, p) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            p.value.write_ten1(w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: std::io::Read>(r: &mut R) -> Result<Self, NnError> {
        let mut store = ParamStore::new();
        loop {
            let mut b4 = [0u8; 4];
            match r.read_exact(&mut b4) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = u32::from_le_bytes(b4) as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| NnError::Format("non-utf8 parameter name".into()))?;
            let value = Tensor::read_ten1(r)?;
            store.insert(&name, value);
        }
        Ok(store)
    }
}

/// Rescale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> Result<f64, NnError> {
    let mut sq = 0.0;
    for (name, p) in store.params.iter() {
        let g = p
            .grad
            .as_ref()
            .ok_or_else(|| NnError::MissingGrad(name.clone()))?;
        sq += g.data.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for p in store.params.values_mut() {
            if let Some(g) = p.grad.as_mut() {
                for v in g.data.iter_mut() {
                    *v *= scale;
                }
            }
        }
    }
    Ok(norm)
}

/// SGD with momentum: v <- momentum * v + g; p <- p - lr * v.
pub fn sgd_momentum_step(store: &mut ParamStore, lr: f64, momentum: f64) -> Result<(), NnError> {
    for (name, p) in store.params.iter_mut() {
        let g = p
            .grad
            .as_ref()
            .ok_or_else(|| NnError::MissingGrad(name.clone()))?;
        for i in 0..p.value.len() {
            p.momentum[i] = momentum * p.momentum[i] + g.data[i];
            p.value.data[i] -= lr * p.momentum[i];
        }
    }
    Ok(())
}
