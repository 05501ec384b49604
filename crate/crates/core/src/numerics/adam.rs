use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Moment estimates for a fixed list of parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &[Tensor], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// Outcome of one optimiser step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub updated: usize,
    /// Indices of parameters skipped because their gradient was not finite.
    pub skipped: Vec<usize>,
}

/// One bias-corrected Adam update using the gradients currently held by
/// `params`. Parameters without a gradient are left alone; parameters with a
/// non-finite gradient are skipped and reported.
pub fn adam_step(params: &[Tensor], state: &mut AdamState, lr: f64) -> Result<StepReport> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be non-negative, got {lr}")));
    }
    if params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} parameters but state tracks {}",
            params.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    let mut report = StepReport::default();

    for (i, p) in params.iter().enumerate() {
        let Some(g) = p.grad() else { continue };
        if state.m[i].len() != g.len() {
            return Err(Error::Dimension(format!("adam: parameter {i} changed size")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            log::warn!("adam: non-finite gradient for parameter {i}, update skipped");
            report.skipped.push(i);
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        p.update_data(|theta| {
            for j in 0..theta.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                theta[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        report.updated += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Tensor {
        Tensor::parameter(vec![v], &[1]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let p = Tensor::parameter(vec![0.5, -1.0], &[2]).unwrap();
        p.scale(0.0).sum().backward().unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p));
        adam_step(std::slice::from_ref(&p), &mut st, 0.1).unwrap();
        assert_eq!(p.to_vec(), vec![0.5, -1.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = scalar_param(2.0);
        p.sum().backward().unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p));
        adam_step(std::slice::from_ref(&p), &mut st, 0.01).unwrap();
        assert!((p.item() - (2.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn quadratic_trajectory_matches_scalar_oracle() {
        let p = scalar_param(1.0);
        let mut st = AdamState::new(std::slice::from_ref(&p));
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            p.zero_grad();
            p.mul(&p).unwrap().sum().backward().unwrap();
            adam_step(std::slice::from_ref(&p), &mut st, 0.1).unwrap();

            let g = 2.0 * theta;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.item() - theta).abs() < 1e-12, "step {t}: {} vs {theta}", p.item());
        }
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let good = scalar_param(1.0);
        let bad = scalar_param(0.0);
        good.sum().backward().unwrap();
        let inf = Tensor::parameter(vec![f64::INFINITY], &[1]).unwrap();
        bad.mul(&inf.detach()).unwrap().sum().backward().unwrap();
        let params = [good.clone(), bad.clone()];
        let mut st = AdamState::new(&params);
        let report = adam_step(&params, &mut st, 0.1).unwrap();
        assert_eq!(report.skipped, vec![1]);
        assert_eq!(bad.item(), 0.0);
        assert!(good.item() < 1.0);
    }
}
