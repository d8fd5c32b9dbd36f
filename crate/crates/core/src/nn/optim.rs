//! Named parameters with Adam moments.

use std::collections::BTreeMap;

use super::{Gradients, NnError, Tape, Tensor, Var};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let [r, c] = value.shape();
        Self { value, m: Tensor::zeros(r, c), v: Tensor::zeros(r, c) }
    }
}

/// Parameter collection keyed by name, plus the optimizer step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelState {
    params: BTreeMap<String, Param>,
    step: u64,
}

/// Parameters of a [`ModelState`] recorded on a tape.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    /// Panics on unknown names; parameter sets are fixed by each model.
    pub fn get(&self, name: &str) -> Var<'t> {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(k, v)| (k.clone(), grads.wrt(*v))).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl ModelState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub(crate) fn insert_param(&mut self, name: String, param: Param) {
        self.params.insert(name, param);
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params.get(name).map(|p| &p.value).ok_or_else(|| NnError::MissingParam(name.to_string()))
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, p)| (k.as_str(), p))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound { vars: self.params.iter().map(|(k, p)| (k.clone(), tape.param(p.value.clone()))).collect() }
    }

    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound { vars: self.params.iter().map(|(k, p)| (k.clone(), tape.constant(p.value.clone()))).collect() }
    }
}

/// One Adam update. `weight_decay · θ` is added to each gradient before
/// the moment updates; parameters missing from `grads` see a zero gradient.
pub fn adam_step(
    state: &mut ModelState,
    grads: &BTreeMap<String, Tensor>,
    lr: f64,
    weight_decay: f64,
) -> Result<(), NnError> {
    for (name, g) in grads {
        let param = state.params.get(name).ok_or_else(|| NnError::MissingParam(name.clone()))?;
        if g.shape() != param.value.shape() {
            return Err(NnError::Shape {
                op: "adam_step",
                detail: format!("gradient {:?} for parameter {name} {:?}", g.shape(), param.value.shape()),
            });
        }
        if !g.is_finite() {
            return Err(NnError::Optimizer(format!("non-finite gradient for {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    for (name, p) in state.params.iter_mut() {
        let grad = grads.get(name);
        let Param { value, m, v } = p;
        for i in 0..value.len() {
            let theta = value.data()[i];
            let g = grad.map_or(0.0, |g| g.data()[i]) + weight_decay * theta;
            let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * g;
            let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            value.data_mut()[i] = theta - lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(name: &str, g: Tensor) -> BTreeMap<String, Tensor> {
        BTreeMap::from([(name.to_string(), g)])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = ModelState::new();
        s.insert("w", Tensor::column(vec![1.0, -2.0]));
        adam_step(&mut s, &grads("w", Tensor::zeros(2, 1)), 0.1, 0.0).unwrap();
        assert_eq!(s.get("w").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δθ = -lr·g/(|g| + ε).
        for g in [0.3, -4.0, 1e-3] {
            let mut s = ModelState::new();
            s.insert("w", Tensor::scalar(0.5));
            adam_step(&mut s, &grads("w", Tensor::scalar(g)), 0.01, 0.0).unwrap();
            let expected = 0.5 - 0.01 * g / (g.abs() + EPSILON);
            assert!((s.get("w").unwrap().get(0, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_decay_enters_gradient() {
        let mut s = ModelState::new();
        s.insert("w", Tensor::scalar(2.0));
        adam_step(&mut s, &grads("w", Tensor::scalar(0.0)), 0.01, 0.5).unwrap();
        // effective gradient 1.0 → step of -lr
        assert!((s.get("w").unwrap().get(0, 0) - (2.0 - 0.01 / (1.0 + EPSILON))).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = ModelState::new();
        s.insert("w", Tensor::scalar(2.0));
        let before = s.clone();
        assert!(adam_step(&mut s, &grads("w", Tensor::scalar(f64::NAN)), 0.01, 0.0).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn identical_updates_are_deterministic() {
        let mut a = ModelState::new();
        a.insert("w", Tensor::column(vec![0.1, 0.2, 0.3]));
        let mut b = a.clone();
        let g = grads("w", Tensor::column(vec![0.5, -0.1, 2.0]));
        for _ in 0..5 {
            adam_step(&mut a, &g, 0.05, 1e-3).unwrap();
            adam_step(&mut b, &g, 0.05, 1e-3).unwrap();
        }
        assert_eq!(a, b);
    }
}
