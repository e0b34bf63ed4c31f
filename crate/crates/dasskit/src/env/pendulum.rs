//! Damped pendulum tracking a sinusoidal angle reference.
//!
//! Dynamics: `theta_dd = -(g/l) sin(theta) - b theta_d + u / (m l^2)`,
//! reference `theta_hat = A sin(phi)` with `phi` advancing at `2 pi c`.

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
pub struct PendulumConfig {
    pub amplitude: f64,
    pub command_min: f64,
    pub command_max: f64,
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    pub mass: f64,
    pub length: f64,
    pub damping: f64,
    pub gravity: f64,
    pub u_max: f64,
    pub reset_noise_std: f64,
    pub max_episode_steps: usize,
    pub reward_threshold: f64,
    pub error_bound: Option<f64>,
    pub d0: Option<f64>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            amplitude: 0.8,
            // 0.8 cycles/s sits away from the pendulum's natural frequency,
            // so tracking needs active torque.
            command_min: 0.8,
            command_max: 0.8,
            dt: 0.03,
            kp: 40.0,
            kd: 5.0,
            mass: 1.0,
            length: 1.0,
            damping: 0.5,
            gravity: 9.81,
            u_max: 20.0,
            reset_noise_std: 0.02,
            max_episode_steps: 400,
            reward_threshold: 0.3,
            error_bound: None,
            d0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PendulumTrack {
    cfg: PendulumConfig,
    termination: TerminationRule,
    style: StyleReward,
    d0: f64,
    mass_scale: f64,
    external_force: Option<Vec<f64>>,
    theta: f64,
    theta_dot: f64,
    core: EpisodeCore,
}

impl PendulumTrack {
    pub fn new(cfg: PendulumConfig) -> Result<Self> {
        if cfg.amplitude <= 0.0 || cfg.dt <= 0.0 || cfg.mass <= 0.0 || cfg.length <= 0.0 {
            return Err(Error::invalid_argument(
                "amplitude, dt, mass and length must be positive",
            ));
        }
        if cfg.command_min > cfg.command_max {
            return Err(Error::invalid_argument("command_min > command_max"));
        }
        let termination = TerminationRule::new(
            cfg.reward_threshold,
            cfg.error_bound.unwrap_or(cfg.amplitude),
        )?;
        let d0 = cfg.d0.unwrap_or(0.5 * cfg.amplitude);
        if d0 <= 0.0 {
            return Err(Error::invalid_argument("d0 must be positive"));
        }
        let command = 0.5 * (cfg.command_min + cfg.command_max);
        let mut env = PendulumTrack {
            cfg,
            termination,
            style: StyleReward::TrackOnly,
            d0,
            mass_scale: 1.0,
            external_force: None,
            theta: 0.0,
            theta_dot: 0.0,
            core: EpisodeCore::start(0.0, command),
        };
        env.place_on_reference(0.0, command);
        Ok(env)
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.cfg
    }

    fn omega(&self, command: f64) -> f64 {
        std::f64::consts::TAU * command
    }

    fn reference(&self, phase: f64, command: f64) -> [f64; 2] {
        let a = self.cfg.amplitude;
        let w = self.omega(command);
        [a * phase.sin(), a * w * phase.cos()]
    }

    fn place_on_reference(&mut self, phase: f64, command: f64) {
        let reference = self.reference(phase, command);
        self.theta = reference[0];
        self.theta_dot = reference[1];
        self.core = EpisodeCore::start(phase, command);
        self.core.note_amplitude(self.theta.abs());
    }

    fn track_error(&self) -> f64 {
        let reference = self.reference(self.core.phase, self.core.command);
        (self.theta - reference[0]).abs()
    }

    fn track_reward_of(&self, err: f64) -> f64 {
        let z = err / self.d0;
        (-z * z).exp()
    }

    fn pack_obs(&self) -> Vec<f64> {
        let reference = self.reference(self.core.phase, self.core.command);
        vec![self.theta, self.theta_dot, reference[0], reference[1]]
    }
}

impl Environment for PendulumTrack {
    fn env_id(&self) -> &str {
        "pendulum-track"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        1
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
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            self.theta += std * z0;
            self.theta_dot += std * z1;
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
        check_action_dim(action, 1)?;

        let reference = self.reference(self.core.phase, self.core.command);
        let target = reference[0] + action[0];
        let mut u = (self.cfg.kp * (target - self.theta)
            + self.cfg.kd * (reference[1] - self.theta_dot))
            .clamp(-self.cfg.u_max, self.cfg.u_max);
        if let Some(f) = &self.external_force {
            u += f[0];
        }

        let mass = self.cfg.mass * self.mass_scale;
        let ml2 = mass * self.cfg.length * self.cfg.length;
        let accel = -(self.cfg.gravity / self.cfg.length) * self.theta.sin()
            - self.cfg.damping * self.theta_dot
            + u / ml2;

        let old_vel = self.theta_dot;
        self.theta += self.theta_dot * self.cfg.dt;
        self.theta_dot += accel * self.cfg.dt;
        self.core
            .advance_phase(self.omega(self.core.command), self.cfg.dt);
        self.core.steps += 1;
        self.core.note_amplitude(self.theta.abs());

        let da_sq = self.core.action_change_sq(action);
        let dv = self.theta_dot - old_vel;
        let track_err = self.track_error();
        let info = StepInfo {
            track_err,
            track_reward: self.track_reward_of(track_err),
            dv_sq: dv * dv,
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
            StyleKind::Stable => StyleReward::StableBody { sigma_sq: 0.05 },
            StyleKind::MinAccel => StyleReward::MinAccel { sigma_sq: 0.01 },
            StyleKind::HighStep => StyleReward::HighStep {
                target_amp: 1.15 * self.cfg.amplitude,
                penalty: 1.0,
            },
        }
    }

    fn velocity_dims(&self) -> Vec<usize> {
        vec![1]
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn env() -> PendulumTrack {
        PendulumTrack::new(PendulumConfig::default()).unwrap()
    }

    #[test]
    fn hand_computed_euler_step() {
        let mut e = env();
        e.reset_to(0.0, 0.5);
        let step = e.step(&[0.0]).unwrap();

        // At phase 0: theta = 0, theta_dot = A w = 0.8 pi, u = 0.
        // theta_dd = -9.81 sin(0) - 0.5 * 0.8 pi = -0.4 pi.
        let pi = std::f64::consts::PI;
        let theta_dot0 = 0.8 * pi;
        let expect_theta = theta_dot0 * 0.03;
        let expect_theta_dot = theta_dot0 + (-0.5 * theta_dot0) * 0.03;
        assert!((step.obs[0] - expect_theta).abs() < 1e-14);
        assert!((step.obs[1] - expect_theta_dot).abs() < 1e-14);
        assert!((e.phase() - pi * 0.03).abs() < 1e-15);
        assert!(step.info.track_err < 0.01);
    }

    #[test]
    fn mirrored_reference_matches_half_period_shift() {
        let e = env();
        for k in 0..16 {
            let phase = k as f64 * 0.4;
            let reference = e.reference_state(phase, 0.5);
            let mirrored: Vec<f64> = reference.iter().map(|v| -v).collect();
            let shifted = e.reference_state(phase + std::f64::consts::PI, 0.5);
            for i in 0..2 {
                assert!((mirrored[i] - shifted[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reset_noise_perturbs_only_the_robot_part() {
        let mut e = env();
        let mut r = rng::stream(1, "reset");
        let obs = e.reset(&mut r);
        let reference = e.reference_state(e.phase(), e.command());
        assert_eq!(obs[2], reference[0]);
        assert_eq!(obs[3], reference[1]);
    }

    #[test]
    fn gravity_requires_active_compensation() {
        // Holding zero action, the tracking error grows past what a
        // gravity-compensating action could hold; the policy has something
        // to learn here.
        let mut e = env();
        e.reset_to(0.0, e.command());
        let mut worst: f64 = 0.0;
        for _ in 0..120 {
            let step = e.step(&[0.0]).unwrap();
            worst = worst.max(step.info.track_err);
            if step.done {
                break;
            }
        }
        assert!(worst > 0.1, "zero action tracks too well: {worst}");
    }

    #[test]
    fn determinism_under_equal_action_sequences() {
        let run = || {
            let mut e = env();
            let mut r = rng::stream(2, "reset");
            let mut trace = vec![e.reset(&mut r)];
            for k in 0..50 {
                let a = 0.2 * (k as f64 * 0.3).sin();
                let s = e.step(&[a]).unwrap();
                trace.push(s.obs.clone());
                if s.done {
                    trace.push(e.reset(&mut r));
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
