use super::gcn::GcnParams;
use crate::error::{Result, UplError};

/// Adam with bias correction. L2 regularisation on the first-layer weight is
/// folded into its gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: GcnParams,
    second_moment: GcnParams,
    step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &GcnParams, lr: f64) -> Self {
        Self {
            first_moment: shape.zeros_like(),
            second_moment: shape.zeros_like(),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &GcnParams {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &GcnParams {
        &self.second_moment
    }

    /// Applies one update to `params`. `weight_decay_first_layer` only touches `w1`.
    pub fn step(
        &mut self,
        params: &mut GcnParams,
        gradients: &GcnParams,
        weight_decay_first_layer: f64,
    ) -> Result<()> {
        let shapes = |p: &GcnParams| p.buffers().map(<[f64]>::len);
        if shapes(params) != shapes(gradients) || shapes(params) != shapes(&self.first_moment) {
            return Err(UplError::DimensionMismatch {
                context: "adam_step",
                expected: format!("{:?}", shapes(&self.first_moment)),
                actual: format!("params {:?}, gradients {:?}", shapes(params), shapes(gradients)),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);

        let params_buf = params.buffers_mut();
        let grads_buf = gradients.buffers();
        let m_buf = self.first_moment.buffers_mut();
        let v_buf = self.second_moment.buffers_mut();
        for (layer, (((w, g), m), v)) in params_buf
            .into_iter()
            .zip(grads_buf)
            .zip(m_buf)
            .zip(v_buf)
            .enumerate()
        {
            let decay = if layer == 0 { weight_decay_first_layer } else { 0.0 };
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g + decay * *w;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let update = lr * (*m / bias1) / ((*v / bias2).sqrt() + eps);
                if !update.is_finite() {
                    return Err(UplError::NonFinite("Adam update".into()));
                }
                *w -= update;
            }
        }
        Ok(())
    }
}
