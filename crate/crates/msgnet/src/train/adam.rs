//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weights::NetworkWeights;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPSILON: f32 = 1e-8;

/// Per-parameter first/second moment buffers plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    t: u64,
    moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

impl AdamState {
    /// Zero-initialized moments matching the parameter set.
    pub fn new(weights: &NetworkWeights) -> Self {
        let moments = weights
            .tensors()
            .iter()
            .map(|(n, t)| (n.clone(), vec![0.0f32; t.numel()], vec![0.0f32; t.numel()]))
            .collect();
        AdamState { t: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over every parameter, consuming the gradient stored on
    /// each tensor. The step counter increments once per call.
    pub fn step(&mut self, weights: &mut NetworkWeights, lr: f32) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - (ADAM_BETA1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (ADAM_BETA2 as f64).powi(self.t as i32);
        for ((name, m, v), (have, tensor)) in
            self.moments.iter_mut().zip(weights.tensors_mut())
        {
            if name != have {
                return Err(Error::config(format!(
                    "optimizer state holds {name:?} where parameters hold {have:?}"
                )));
            }
            let grad = tensor
                .grad()
                .ok_or_else(|| {
                    Error::numeric(format!("adam: parameter {name:?} has no gradient"))
                })?
                .to_vec();
            if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "adam: non-finite gradient {bad} for parameter {name:?}"
                )));
            }
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[i] as f64;
                let mi = ADAM_BETA1 as f64 * m[i] as f64 + (1.0 - ADAM_BETA1 as f64) * g;
                let vi = ADAM_BETA2 as f64 * v[i] as f64 + (1.0 - ADAM_BETA2 as f64) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *p = (*p as f64 - lr as f64 * m_hat / (v_hat.sqrt() + ADAM_EPSILON as f64)) as f32;
            }
        }
        Ok(())
    }

    /// Serialize the moments into `target` as `adam.m.*` / `adam.v.*`
    /// tensors plus the step counter in metadata.
    pub fn write_into(&self, target: &mut NetworkWeights) -> Result<()> {
        for (name, m, v) in &self.moments {
            target.insert(
                format!("adam.m.{name}"),
                Tensor::new(vec![m.len()], m.clone())?,
            )?;
            target.insert(
                format!("adam.v.{name}"),
                Tensor::new(vec![v.len()], v.clone())?,
            )?;
        }
        target.set_meta("train.adam_t", self.t.to_string())?;
        Ok(())
    }

    /// Rebuild the state from a checkpoint container for the given
    /// parameter set.
    pub fn read_from(container: &NetworkWeights, weights: &NetworkWeights) -> Result<Self> {
        let t = container
            .require_meta("train.adam_t")?
            .parse::<u64>()
            .map_err(|_| Error::format("train.adam_t is not a number"))?;
        let mut moments = Vec::with_capacity(weights.len());
        for (name, tensor) in weights.tensors() {
            let m = container.require(&format!("adam.m.{name}"))?;
            let v = container.require(&format!("adam.v.{name}"))?;
            if m.numel() != tensor.numel() || v.numel() != tensor.numel() {
                return Err(Error::format(format!(
                    "adam moments for {name:?} have wrong size"
                )));
            }
            moments.push((name.clone(), m.data().to_vec(), v.data().to_vec()));
        }
        Ok(AdamState { t, moments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f32) -> NetworkWeights {
        let mut w = NetworkWeights::new();
        w.insert("p", Tensor::scalar(value).with_grad()).unwrap();
        w
    }

    fn set_grad(w: &mut NetworkWeights, g: f32) {
        w.get_mut("p").unwrap().set_grad(vec![g]).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut w = single_param(0.5);
        set_grad(&mut w, 0.0);
        let mut adam = AdamState::new(&w);
        adam.step(&mut w, 1e-3).unwrap();
        assert_eq!(w.get("p").unwrap().data(), &[0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // At t=1 the bias-corrected update is lr * g / (|g| + eps),
        // approximately lr * sign(g).
        for g in [0.3f32, -1.7] {
            let mut w = single_param(1.0);
            set_grad(&mut w, g);
            let mut adam = AdamState::new(&w);
            let lr = 1e-3;
            adam.step(&mut w, lr).unwrap();
            let delta = w.get("p").unwrap().data()[0] - 1.0;
            let expected = -lr * g / (g.abs() + ADAM_EPSILON);
            assert!(
                (delta - expected).abs() < 1e-6,
                "g={g}: delta {delta} vs {expected}"
            );
            assert!((delta + lr * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn momentum_state_carries_across_steps() {
        // Under a constant gradient, bias-corrected Adam is exactly linear
        // in the learning rate (m_hat = g and v_hat = g^2 at every step), so
        // two unit steps equal one doubled step. The moment buffers show up
        // once the gradient changes: stepping with +g then -g does not
        // cancel, while two independent fresh steps would.
        let lr = 1e-3;
        let mut w = single_param(1.0);
        set_grad(&mut w, 0.4);
        let mut adam = AdamState::new(&w);
        adam.step(&mut w, lr).unwrap();
        set_grad(&mut w, -0.4);
        adam.step(&mut w, lr).unwrap();
        let with_state = w.get("p").unwrap().data()[0];

        let mut w_fresh = single_param(1.0);
        set_grad(&mut w_fresh, 0.4);
        AdamState::new(&w_fresh).step(&mut w_fresh, lr).unwrap();
        set_grad(&mut w_fresh, -0.4);
        AdamState::new(&w_fresh).step(&mut w_fresh, lr).unwrap();
        let stateless = w_fresh.get("p").unwrap().data()[0];

        // Stateless steps cancel back to the start; stateful ones do not.
        assert!((stateless - 1.0).abs() < 1e-6);
        assert!(
            (with_state - 1.0).abs() > lr / 2.0,
            "momentum should keep the second step aligned with the first: {with_state}"
        );
        assert_ne!(with_state, stateless);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut w = single_param(1.0);
        set_grad(&mut w, f32::NAN);
        let mut adam = AdamState::new(&w);
        let err = adam.step(&mut w, 1e-3).unwrap_err();
        assert!(err.to_string().contains("\"p\""), "{err}");
    }

    #[test]
    fn state_round_trips_through_container() {
        let mut w = single_param(1.0);
        set_grad(&mut w, 0.25);
        let mut adam = AdamState::new(&w);
        adam.step(&mut w, 1e-3).unwrap();
        let mut container = NetworkWeights::new();
        adam.write_into(&mut container).unwrap();
        let bytes = container.save();
        let reloaded =
            AdamState::read_from(&NetworkWeights::load(&bytes).unwrap(), &w).unwrap();
        assert_eq!(reloaded, adam);
    }
}
