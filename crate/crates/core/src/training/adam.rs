use crate::model::{OptimizerState, ParamSet};

pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam without weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(params: &ParamSet<f32>, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            state: OptimizerState {
                step: 0,
                first_moment: params.zeros_like(),
                second_moment: params.zeros_like(),
            },
        }
    }

    /// Applies one bias-corrected update in place.
    pub fn update(&mut self, params: &mut ParamSet<f32>, grads: &ParamSet<f32>) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        for i in 0..params.tensors().len() {
            let g = grads.data(i);
            let m = self.state.first_moment.data_mut(i);
            for (m, &g) in m.iter_mut().zip(g) {
                *m = (b1 * *m as f64 + (1.0 - b1) * g as f64) as f32;
            }
            let v = self.state.second_moment.data_mut(i);
            for (v, &g) in v.iter_mut().zip(g) {
                *v = (b2 * *v as f64 + (1.0 - b2) * (g as f64).powi(2)) as f32;
            }
            let m = self.state.first_moment.data(i);
            let v = self.state.second_moment.data(i);
            for ((p, &m), &v) in params.data_mut(i).iter_mut().zip(m).zip(v) {
                let step = lr * (m as f64 / c1) / ((v as f64 / c2).sqrt() + ADAM_EPSILON);
                *p = (*p as f64 - step) as f32;
            }
        }
    }
}
