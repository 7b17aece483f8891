use super::NumError;

/// Adam with bias correction, decoupled weight decay and a piecewise-constant
/// learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub base_learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `(epoch, multiplier)`: the multiplier applies from that epoch onward.
    pub schedule: Vec<(usize, f64)>,
}

impl AdamState {
    pub fn new(param_count: usize, base_learning_rate: f64, weight_decay: f64, schedule: Vec<(usize, f64)>) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            base_learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn param_count(&self) -> usize {
        self.first_moment.len()
    }

    pub fn effective_learning_rate(&self, epoch: usize) -> f64 {
        scheduled_rate(self.base_learning_rate, &self.schedule, epoch)
    }
}

/// `base` times every schedule multiplier whose epoch is `<= epoch`.
pub fn scheduled_rate(base: f64, schedule: &[(usize, f64)], epoch: usize) -> f64 {
    schedule
        .iter()
        .filter(|(at, _)| *at <= epoch)
        .fold(base, |lr, (_, m)| lr * m)
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, current_epoch: usize) -> Result<(), NumError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NumError::DimensionMismatch {
            context: "adam buffers",
            expected: params.len(),
            found: if grads.len() != params.len() {
                grads.len()
            } else {
                state.first_moment.len()
            },
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NumError::NonFinite {
            context: "gradient",
            index,
        });
    }
    let lr = state.effective_learning_rate(current_epoch);
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * state.weight_decay;
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
