use super::{Gradients, ParamSet};
use crate::{Error, Result};

/// Global gradient-norm cap applied before every update.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Plain SGD: `p ← p − lr·g` for every trainable parameter.
pub fn sgd_update(params: &mut ParamSet, grads: &Gradients, lr: f64) -> Result<()> {
    let ids: Vec<_> = params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for &id in &ids {
        let want = params.get(id).tensor.shape();
        match grads.get(id) {
            Some(g) if g.shape() == want => {}
            Some(g) => {
                return Err(Error::Shape(format!(
                    "gradient for {} has shape {:?}, parameter has {want:?}",
                    params.get(id).name,
                    g.shape()
                )))
            }
            None => {
                return Err(Error::Contract(format!(
                    "missing gradient for trainable parameter {}",
                    params.get(id).name
                )))
            }
        }
    }
    if lr == 0.0 {
        return Ok(());
    }
    for id in ids {
        let g = grads.get(id).expect("checked above");
        for (p, g) in params.get_mut(id).tensor.data_mut().iter_mut().zip(g.data()) {
            *p -= lr * g;
        }
    }
    Ok(())
}
