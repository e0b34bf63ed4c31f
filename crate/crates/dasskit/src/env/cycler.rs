//! Planar point mass tracking a circular reference.
//!
//! Robot state `x = (p, v)` in R^2 x R^2, reference `phat = R (cos phi, sin phi)`
//! traversed at `omega = 2 pi c` for speed command `c` (cycles per second).
//! The action is a positional offset added to the reference before the PD
//! controller, and the mass is integrated with explicit Euler at `dt`.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    check_action_dim, EpisodeCore, Environment, Step, StepInfo, StyleKind, StyleReward,
    TerminationRule,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CyclerConfig {
    pub radius: f64,
    /// Default speed command (cycles/s) when the range collapses to a point.
    pub command_min: f64,
    pub command_max: f64,
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    pub mass: f64,
    pub u_max: f64,
    pub reset_noise_std: f64,
    pub max_episode_steps: usize,
    pub reward_threshold: f64,
    /// Tracking-error bound; defaults to `radius`.
    pub error_bound: Option<f64>,
    /// Tracking-reward length scale; defaults to `0.5 * radius`.
    pub d0: Option<f64>,
}

impl Default for CyclerConfig {
    fn default() -> Self {
        CyclerConfig {
            radius: 1.0,
            command_min: 0.5,
            command_max: 0.5,
            dt: 0.03,
            kp: 100.0,
            kd: 20.0,
            mass: 1.0,
            u_max: 50.0,
            reset_noise_std: 0.02,
            max_episode_steps: 400,
            reward_threshold: 0.3,
            error_bound: None,
            d0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cycler {
    cfg: CyclerConfig,
    termination: TerminationRule,
    style: StyleReward,
    d0: f64,
    mass_scale: f64,
    external_force: Option<Vec<f64>>,
    // Robot state.
    pos: [f64; 2],
    vel: [f64; 2],
    core: EpisodeCore,
}

impl Cycler {
    pub fn new(cfg: CyclerConfig) -> Result<Self> {
        if cfg.radius <= 0.0 || cfg.dt <= 0.0 || cfg.mass <= 0.0 {
            return Err(Error::invalid_argument(
                "radius, dt and mass must be positive",
            ));
        }
        if cfg.command_min > cfg.command_max {
            return Err(Error::invalid_argument("command_min > command_max"));
        }
        let termination = TerminationRule::new(
            cfg.reward_threshold,
            cfg.error_bound.unwrap_or(cfg.radius),
        )?;
        let d0 = cfg.d0.unwrap_or(0.5 * cfg.radius);
        if d0 <= 0.0 {
            return Err(Error::invalid_argument("d0 must be positive"));
        }
        let command = 0.5 * (cfg.command_min + cfg.command_max);
        let mut env = Cycler {
            cfg,
            termination,
            style: StyleReward::TrackOnly,
            d0,
            mass_scale: 1.0,
            external_force: None,
            pos: [0.0; 2],
            vel: [0.0; 2],
            core: EpisodeCore::start(0.0, command),
        };
        env.place_on_reference(0.0, command);
        Ok(env)
    }

    pub fn config(&self) -> &CyclerConfig {
        &self.cfg
    }

    fn omega(&self, command: f64) -> f64 {
        std::f64::consts::TAU * command
    }

    fn reference(&self, phase: f64, command: f64) -> [f64; 4] {
        let r = self.cfg.radius;
        let w = self.omega(command);
        [
            r * phase.cos(),
            r * phase.sin(),
            -r * w * phase.sin(),
            r * w * phase.cos(),
        ]
    }

    fn place_on_reference(&mut self, phase: f64, command: f64) {
        let reference = self.reference(phase, command);
        self.pos = [reference[0], reference[1]];
        self.vel = [reference[2], reference[3]];
        self.core = EpisodeCore::start(phase, command);
        self.core.note_amplitude(self.amplitude());
    }

    fn amplitude(&self) -> f64 {
        (self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1]).sqrt()
    }

    fn track_error(&self) -> f64 {
        let reference = self.reference(self.core.phase, self.core.command);
        let dx = self.pos[0] - reference[0];
        let dy = self.pos[1] - reference[1];
        (dx * dx + dy * dy).sqrt()
    }

    fn track_reward_of(&self, err: f64) -> f64 {
        let z = err / self.d0;
        (-z * z).exp()
    }

    fn pack_obs(&self) -> Vec<f64> {
        let reference = self.reference(self.core.phase, self.core.command);
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            reference[0],
            reference[1],
            reference[2],
            reference[3],
        ]
    }
}

impl Environment for Cycler {
    fn env_id(&self) -> &str {
        "cycler"
    }

    fn obs_dim(&self) -> usize {
        8
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    fn angular_rate(&self, command: f64) -> f64 {
        self.omega(command)
    }

    fn command_range(&self) -> (f64, f64) {
        (self.cfg.command_min, self.cfg.command_max)
    }

    fn phase(&self) -> f64 {
        self.core.phase
    }

    fn command(&self) -> f64 {
        self.core.command
    }

    fn reference_state(&self, phase: f64, command: f64) -> Vec<f64> {
        self.reference(phase, command).to_vec()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut rng = rng;
        let phase = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
        let command = if self.cfg.command_min == self.cfg.command_max {
            self.cfg.command_min
        } else {
            rand::Rng::random_range(&mut rng, self.cfg.command_min..=self.cfg.command_max)
        };
        self.place_on_reference(phase, command);
        if self.cfg.reset_noise_std > 0.0 {
            let std = self.cfg.reset_noise_std;
            for v in self.pos.iter_mut().chain(self.vel.iter_mut()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += std * z;
            }
        }
        self.pack_obs()
    }

    fn reset_to(&mut self, phase: f64, command: f64) -> Vec<f64> {
        self.place_on_reference(phase.rem_euclid(std::f64::consts::TAU), command);
        self.pack_obs()
    }

    fn observe(&self) -> Vec<f64> {
        self.pack_obs()
    }

    fn tracking_reward(&self) -> f64 {
        self.track_reward_of(self.track_error())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.core.terminated {
            return Err(Error::invalid_state(
                "episode is terminated; call reset before stepping",
            ));
        }
        check_action_dim(action, 2)?;

        // PD toward the action-offset reference target, force clipped.
        let reference = self.reference(self.core.phase, self.core.command);
        let mass = self.cfg.mass * self.mass_scale;
        let mut u = [0.0; 2];
        for i in 0..2 {
            let target = reference[i] + action[i];
            let raw = self.cfg.kp * (target - self.pos[i])
                + self.cfg.kd * (reference[2 + i] - self.vel[i]);
            u[i] = raw.clamp(-self.cfg.u_max, self.cfg.u_max);
            if let Some(f) = &self.external_force {
                u[i] += f[i];
            }
        }

        // Explicit Euler.
        let old_vel = self.vel;
        for i in 0..2 {
            self.pos[i] += self.vel[i] * self.cfg.dt;
        }
        for i in 0..2 {
            self.vel[i] += u[i] / mass * self.cfg.dt;
        }
        self.core
            .advance_phase(self.omega(self.core.command), self.cfg.dt);
        self.core.steps += 1;
        self.core.note_amplitude(self.amplitude());

        let da_sq = self.core.action_change_sq(action);
        let dv_sq: f64 = (0..2).map(|i| (self.vel[i] - old_vel[i]).powi(2)).sum();
        let track_err = self.track_error();
        let info = StepInfo {
            track_err,
            track_reward: self.track_reward_of(track_err),
            dv_sq,
            da_sq,
            cycle_amp: self.core.cycle_amplitude(),
        };
        let reward = self.style.reward(&info);
        let done =
            reward < self.termination.reward_threshold || track_err > self.termination.error_bound;
        let truncated = !done && self.core.steps >= self.cfg.max_episode_steps;
        if done {
            self.core.terminated = true;
        }

        Ok(Step {
            obs: self.pack_obs(),
            reward,
            done,
            truncated,
            info,
        })
    }

    fn mirror_obs(&self, obs: &[f64]) -> Vec<f64> {
        // Point reflection: the reference half a cycle later is exactly the
        // negated reference, so negating state and action maps valid
        // transitions onto valid transitions.
        obs.iter().map(|v| -v).collect()
    }

    fn mirror_action(&self, action: &[f64]) -> Vec<f64> {
        action.iter().map(|v| -v).collect()
    }

    fn scale_mass(&mut self, factor: f64) {
        self.mass_scale *= factor;
    }

    fn set_external_force(&mut self, force: Option<&[f64]>) {
        self.external_force = force.map(|f| f.to_vec());
    }

    fn style(&self) -> &StyleReward {
        &self.style
    }

    fn set_style(&mut self, style: StyleReward) {
        self.style = style;
    }

    fn termination(&self) -> &TerminationRule {
        &self.termination
    }

    fn default_style(&self, kind: StyleKind) -> StyleReward {
        match kind {
            StyleKind::Track => StyleReward::TrackOnly,
            StyleKind::Stable => StyleReward::StableBody { sigma_sq: 0.09 },
            StyleKind::MinAccel => StyleReward::MinAccel { sigma_sq: 0.01 },
            StyleKind::HighStep => StyleReward::HighStep {
                target_amp: 1.15 * self.cfg.radius,
                penalty: 1.0,
            },
        }
    }

    fn velocity_dims(&self) -> Vec<usize> {
        vec![2, 3]
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
