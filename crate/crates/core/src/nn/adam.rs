use super::layer::{round_f32, Param};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

/// One bias-corrected Adam update over `params`, in order.
///
/// Moment buffers are created on the first call. A non-finite gradient
/// leaves every parameter untouched and returns an error.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState, lr: f64) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len()) {
        return Err(Error::invalid("adam state does not match the parameter list"));
    }
    if let Some(i) = params.iter().position(|p| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite(format!("gradient of parameter block {i} is not finite")));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correct1 = 1.0 - b1.powi(t);
    let correct2 = 1.0 - b2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            p.value[i] = round_f32(p.value[i] - lr * m_hat / (v_hat.sqrt() + state.eps));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grads: &[f64]) -> Param {
        Param {
            value: values.to_vec(),
            grad: grads.to_vec(),
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = param(&[0.5, -0.25], &[0.0, 0.0]);
        let mut s = AdamState::new();
        adam_step(&mut [&mut p], &mut s, 0.001).unwrap();
        assert_eq!(p.value, vec![0.5, -0.25]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = param(&[1.0, 1.0], &[3.0, -0.02]);
        let mut s = AdamState::new();
        adam_step(&mut [&mut p], &mut s, 0.01).unwrap();
        // m_hat = g, v_hat = g^2: step is lr * sign(g) up to eps
        assert!((p.value[0] - 0.99).abs() < 1e-6);
        assert!((p.value[1] - 1.01).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut p = param(&[0.125], &[5.0]);
        let mut s = AdamState::new();
        adam_step(&mut [&mut p], &mut s, 0.0).unwrap();
        assert_eq!(p.value, vec![0.125]);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = param(&[0.125, 1.0], &[f64::NAN, 1.0]);
        let mut s = AdamState::new();
        assert!(matches!(adam_step(&mut [&mut p], &mut s, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(p.value, vec![0.125, 1.0]);
    }

    #[test]
    fn matches_hand_rolled_second_step() {
        let mut p = param(&[0.0], &[1.0]);
        let mut s = AdamState::new();
        adam_step(&mut [&mut p], &mut s, 0.1).unwrap();
        p.grad = vec![-2.0];
        adam_step(&mut [&mut p], &mut s, 0.1).unwrap();
        let m: f64 = 0.9 * 0.1 + 0.1 * -2.0;
        let v: f64 = 0.999 * 0.001 + 0.001 * 4.0;
        let want = -0.1 + -0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p.value[0] - want).abs() < 1e-6, "{} vs {want}", p.value[0]);
    }
}
