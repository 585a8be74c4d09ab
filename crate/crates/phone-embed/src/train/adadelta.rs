//! The Adadelta optimizer with a constant global scale.
//!
//! Canonical Adadelta has no learning rate; the reference setup's "initial
//! learning rate" is interpreted as a constant factor `lr` on the update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetParams, ParamGrads, Tensor};

fn default_rho() -> f64 {
    0.95
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_lr() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    /// Decay of the running squared-gradient and squared-update averages.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Stabilizer inside both square roots.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Global scale on the update; 1e-4 in the reference setup.
    #[serde(default = "default_lr")]
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> AdadeltaConfig {
        AdadeltaConfig {
            rho: default_rho(),
            epsilon: default_epsilon(),
            lr: default_lr(),
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("adadelta rho must be in [0, 1)"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("adadelta epsilon must be positive"));
        }
        if self.lr <= 0.0 {
            return Err(Error::invalid("adadelta lr must be positive"));
        }
        Ok(())
    }
}

/// Per-tensor accumulators `E[g^2]` and `E[dx^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    config: AdadeltaConfig,
    accum_grad: Vec<Tensor>,
    accum_update: Vec<Tensor>,
}

impl AdadeltaState {
    pub fn new(params: &NetParams, config: AdadeltaConfig) -> Result<AdadeltaState> {
        config.validate()?;
        Ok(AdadeltaState {
            config,
            accum_grad: params.zero_grads(),
            accum_update: params.zero_grads(),
        })
    }

    pub fn config(&self) -> &AdadeltaConfig {
        &self.config
    }

    /// One optimizer step, applied in place:
    /// `E[g^2] <- rho E[g^2] + (1-rho) g^2`,
    /// `dx = -lr * sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps) * g`,
    /// `E[dx^2] <- rho E[dx^2] + (1-rho) dx^2`,
    /// `param += dx`.
    pub fn step(&mut self, params: &mut NetParams, grads: &ParamGrads) -> Result<()> {
        if grads.len() != self.accum_grad.len() {
            return Err(Error::DimensionMismatch {
                context: "adadelta gradients",
                expected: self.accum_grad.len(),
                got: grads.len(),
            });
        }
        let AdadeltaConfig { rho, epsilon, lr } = self.config;
        for (bi, grad) in grads.iter().enumerate() {
            if grad.data.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(grad.name.clone()));
            }
            let block = &mut params.blocks_mut()[bi];
            if block.data.len() != grad.data.len() {
                return Err(Error::DimensionMismatch {
                    context: "adadelta tensor shape",
                    expected: block.data.len(),
                    got: grad.data.len(),
                });
            }
            let eg = &mut self.accum_grad[bi].data;
            let ex = &mut self.accum_update[bi].data;
            for (i, &g) in grad.data.iter().enumerate() {
                eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
                let dx = -lr * ((ex[i] + epsilon).sqrt() / (eg[i] + epsilon).sqrt()) * g;
                ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
                block.data[i] += dx;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    fn scalar_setup(config: AdadeltaConfig) -> (NetParams, AdadeltaState) {
        // a 1x1 network is overkill; use the smallest valid net and poke
        // one element
        let net_config = NetConfig {
            input_dims: 1,
            hidden_per_direction: 1,
            num_bilstm_layers: 1,
            fc_dims: vec![1],
            dropout_prob: 0.0,
        };
        let params = NetParams::zeros(&net_config).unwrap();
        let state = AdadeltaState::new(&params, config).unwrap();
        (params, state)
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_accumulators() {
        let (mut params, mut state) = scalar_setup(AdadeltaConfig::default());
        // seed the accumulators with one nonzero step first
        let mut grads = params.zero_grads();
        grads[0].data[0] = 1.0;
        state.step(&mut params, &grads).unwrap();
        let accum_before = state.accum_grad[0].data[0];
        let params_before = params.clone();

        let zero = params.zero_grads();
        state.step(&mut params, &zero).unwrap();
        assert_eq!(params, params_before);
        assert!((state.accum_grad[0].data[0] - 0.95 * accum_before).abs() < 1e-18);
    }

    #[test]
    fn first_scalar_step_matches_the_formula() {
        // rho=0.95, eps=1e-6, lr=1e-4, g=1:
        // E[g^2]=0.05, dx = -1e-4 * sqrt(1e-6)/sqrt(0.05+1e-6)
        let (mut params, mut state) = scalar_setup(AdadeltaConfig::default());
        let mut grads = params.zero_grads();
        grads[0].data[0] = 1.0;
        state.step(&mut params, &grads).unwrap();
        let expected = -1e-4 * (1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        let got = params.blocks()[0].data[0];
        assert!((got - expected).abs() < 1e-18, "{got} vs {expected}");
        assert!((got - (-4.4721e-7)).abs() < 1e-10);
    }

    #[test]
    fn identical_states_step_identically() {
        let (mut p1, mut s1) = scalar_setup(AdadeltaConfig::default());
        let (mut p2, mut s2) = scalar_setup(AdadeltaConfig::default());
        let mut grads = p1.zero_grads();
        for (i, block) in grads.iter_mut().enumerate() {
            for (j, v) in block.data.iter_mut().enumerate() {
                *v = ((i * 7 + j * 3) as f64 * 0.77).sin();
            }
        }
        for _ in 0..5 {
            s1.step(&mut p1, &grads).unwrap();
            s2.step(&mut p2, &grads).unwrap();
        }
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let (mut params, mut state) = scalar_setup(AdadeltaConfig::default());
        let mut grads = params.zero_grads();
        let name = grads[2].name.clone();
        grads[2].data[0] = f64::NAN;
        match state.step(&mut params, &grads).unwrap_err() {
            Error::NonFiniteGradient(n) => assert_eq!(n, name),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn epsilon_must_be_positive() {
        let config = AdadeltaConfig {
            epsilon: 0.0,
            ..AdadeltaConfig::default()
        };
        let net_config = NetConfig::toy(2);
        let params = NetParams::zeros(&net_config).unwrap();
        assert!(AdadeltaState::new(&params, config).is_err());
    }
}
