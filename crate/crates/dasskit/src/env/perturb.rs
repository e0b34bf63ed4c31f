//! Perturbation wrapper: action noise, mass scaling and periodic pushes.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Environment, Step, StyleKind, StyleReward, TerminationRule};
use crate::error::{Error, Result};
use crate::rng;

/// Periodic external push: `force` applied for `duration_steps` out of every
/// `period_steps`, starting at each episode's first step.
#[derive(Debug, Clone, PartialEq)]
pub struct PushConfig {
    pub force: Vec<f64>,
    pub duration_steps: usize,
    pub period_steps: usize,
}

impl PushConfig {
    /// Derive the step schedule from wall-clock durations, rounding to the
    /// nearest step.
    pub fn from_seconds(force: Vec<f64>, for_seconds: f64, every_seconds: f64, dt: f64) -> Self {
        PushConfig {
            force,
            duration_steps: (for_seconds / dt).round() as usize,
            period_steps: (every_seconds / dt).round() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    /// Standard deviation of Gaussian noise added to incoming actions.
    pub action_noise_std: f64,
    /// Multiplier applied to the environment's mass parameter.
    pub mass_scale: f64,
    pub push: Option<PushConfig>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            action_noise_std: 0.0,
            mass_scale: 1.0,
            push: None,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self, act_dim: usize) -> Result<()> {
        if !(self.action_noise_std >= 0.0 && self.action_noise_std.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "action_noise_std must be a finite non-negative value, got {}",
                self.action_noise_std
            )));
        }
        if !(self.mass_scale > 0.0 && self.mass_scale.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "mass_scale must be positive, got {}",
                self.mass_scale
            )));
        }
        if let Some(push) = &self.push {
            if push.force.len() != act_dim {
                return Err(Error::invalid_argument(format!(
                    "push force has {} entries, environment expects {act_dim}",
                    push.force.len()
                )));
            }
            if push.period_steps == 0 || push.duration_steps >= push.period_steps {
                return Err(Error::invalid_argument(format!(
                    "push needs duration_steps < period_steps, got {}/{}",
                    push.duration_steps, push.period_steps
                )));
            }
        }
        Ok(())
    }
}

/// An environment with a perturbation layer in front of it.
#[derive(Clone)]
pub struct Perturbed {
    inner: Box<dyn Environment>,
    cfg: PerturbationConfig,
    noise_rng: rng::Stream,
    steps_in_episode: usize,
}

/// Wrap `env` so that actions receive Gaussian noise, the mass is scaled and
/// periodic pushes apply an external force. The noise stream is derived from
/// `seed`.
pub fn wrap_perturbed(
    mut env: Box<dyn Environment>,
    cfg: PerturbationConfig,
    seed: u64,
) -> Result<Box<dyn Environment>> {
    cfg.validate(env.act_dim())?;
    env.scale_mass(cfg.mass_scale);
    Ok(Box::new(Perturbed {
        inner: env,
        cfg,
        noise_rng: rng::stream(seed, "perturb/action-noise"),
        steps_in_episode: 0,
    }))
}

impl Environment for Perturbed {
    fn env_id(&self) -> &str {
        self.inner.env_id()
    }

    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.inner.act_dim()
    }

    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn angular_rate(&self, command: f64) -> f64 {
        self.inner.angular_rate(command)
    }

    fn command_range(&self) -> (f64, f64) {
        self.inner.command_range()
    }

    fn phase(&self) -> f64 {
        self.inner.phase()
    }

    fn command(&self) -> f64 {
        self.inner.command()
    }

    fn reference_state(&self, phase: f64, command: f64) -> Vec<f64> {
        self.inner.reference_state(phase, command)
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.steps_in_episode = 0;
        self.inner.reset(rng)
    }

    fn reset_to(&mut self, phase: f64, command: f64) -> Vec<f64> {
        self.steps_in_episode = 0;
        self.inner.reset_to(phase, command)
    }

    fn observe(&self) -> Vec<f64> {
        self.inner.observe()
    }

    fn tracking_reward(&self) -> f64 {
        self.inner.tracking_reward()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if let Some(push) = &self.cfg.push {
            if self.steps_in_episode % push.period_steps < push.duration_steps {
                self.inner.set_external_force(Some(&push.force));
            } else {
                self.inner.set_external_force(None);
            }
        }
        let step = if self.cfg.action_noise_std > 0.0 {
            let std = self.cfg.action_noise_std;
            let noisy: Vec<f64> = action
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut self.noise_rng);
                    a + std * z
                })
                .collect();
            self.inner.step(&noisy)
        } else {
            self.inner.step(action)
        }?;
        self.steps_in_episode += 1;
        Ok(step)
    }

    fn mirror_obs(&self, obs: &[f64]) -> Vec<f64> {
        self.inner.mirror_obs(obs)
    }

    fn mirror_action(&self, action: &[f64]) -> Vec<f64> {
        self.inner.mirror_action(action)
    }

    fn scale_mass(&mut self, factor: f64) {
        self.inner.scale_mass(factor);
    }

    fn set_external_force(&mut self, force: Option<&[f64]>) {
        self.inner.set_external_force(force);
    }

    fn style(&self) -> &StyleReward {
        self.inner.style()
    }

    fn set_style(&mut self, style: StyleReward) {
        self.inner.set_style(style);
    }

    fn termination(&self) -> &TerminationRule {
        self.inner.termination()
    }

    fn default_style(&self, kind: StyleKind) -> StyleReward {
        self.inner.default_style(kind)
    }

    fn velocity_dims(&self) -> Vec<usize> {
        self.inner.velocity_dims()
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
