use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub velocity: ModelParams,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::ConfigInvalid(format!("momentum {momentum} not in [0, 1)")));
        }
        Ok(Self { velocity: params.zeros_like(), momentum })
    }
}

/// `v ← μ·v + g`, `p ← p − lr·v`, in place.
pub fn sgd_momentum_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if !params.same_shapes(grads) || !params.same_shapes(&state.velocity) {
        return Err(Error::ShapeMismatch("parameters, gradients and velocity must share shapes".into()));
    }
    let mu = state.momentum;
    let grads = grads.tensors();
    for ((p, v), (_, g)) in params.tensors_mut().into_iter().zip(state.velocity.tensors_mut()).zip(grads) {
        for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
