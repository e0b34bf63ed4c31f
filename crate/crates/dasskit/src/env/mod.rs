//! Desk-scale limit-cycle tracking environments.
//!
//! Both built-in environments follow the same scheme: the observation packs
//! the robot state `x` with a reference state `xhat` of identical layout,
//! the action is added to the reference position to form the target of an
//! internal PD loop, and the reference advances deterministically at a rate
//! set by a speed command. Episodes terminate when the per-step reward falls
//! below a threshold or the tracking error leaves a bounded region.
//!
//! * `cycler`: planar point mass tracking a circle.
//! * `pendulum-track`: damped pendulum tracking a sinusoidal angle.

use rand::RngCore;

use crate::error::{Error, Result};

mod cycler;
mod pendulum;
mod perturb;

pub use cycler::{Cycler, CyclerConfig};
pub use pendulum::{PendulumConfig, PendulumTrack};
pub use perturb::{wrap_perturbed, Perturbed, PerturbationConfig, PushConfig};

/// Result of one control step.
#[derive(Debug, Clone)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The next state is in the termination set (reward below threshold or
    /// tracking error outside the bound).
    pub done: bool,
    /// The episode step cap was reached; not a termination-set event.
    pub truncated: bool,
    pub info: StepInfo,
}

/// Per-step diagnostics, also used by the style rewards.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    /// Distance between the robot and the reference (position part).
    pub track_err: f64,
    /// exp(-(track_err / d0)^2), in (0, 1].
    pub track_reward: f64,
    /// Squared per-step change of the velocity sub-vector.
    pub dv_sq: f64,
    /// Squared per-step change of the action.
    pub da_sq: f64,
    /// Peak amplitude over the most recent full reference cycle.
    pub cycle_amp: f64,
}

/// Episode termination rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationRule {
    /// Terminate when the per-step reward falls below this (default 0.3).
    pub reward_threshold: f64,
    /// Terminate when the tracking error exceeds this.
    pub error_bound: f64,
}

impl TerminationRule {
    pub fn new(reward_threshold: f64, error_bound: f64) -> Result<Self> {
        if !(reward_threshold > 0.0 && reward_threshold < 1.0) {
            return Err(Error::invalid_argument(format!(
                "reward_threshold must lie in (0,1), got {reward_threshold}"
            )));
        }
        if !(error_bound > 0.0) {
            return Err(Error::invalid_argument(format!(
                "error_bound must be positive, got {error_bound}"
            )));
        }
        Ok(TerminationRule {
            reward_threshold,
            error_bound,
        })
    }
}

/// Reward variants. Each declares a bounded range (`bounds`).
#[derive(Debug, Clone, PartialEq)]
pub enum StyleReward {
    /// r = exp(-(err/d0)^2)
    TrackOnly,
    /// r = 0.5 exp(-|dv|^2 / sigma_sq) + 0.5 r_track
    StableBody { sigma_sq: f64 },
    /// r = exp(-|da|^2 / sigma_sq), nothing else.
    MinAccel { sigma_sq: f64 },
    /// r = r_track - penalty * max(0, target_amp - cycle amplitude)
    HighStep { target_amp: f64, penalty: f64 },
}

impl StyleReward {
    pub fn kind(&self) -> &'static str {
        match self {
            StyleReward::TrackOnly => "track",
            StyleReward::StableBody { .. } => "stable",
            StyleReward::MinAccel { .. } => "minaccel",
            StyleReward::HighStep { .. } => "highstep",
        }
    }

    pub fn reward(&self, info: &StepInfo) -> f64 {
        match self {
            StyleReward::TrackOnly => info.track_reward,
            StyleReward::StableBody { sigma_sq } => {
                0.5 * (-info.dv_sq / sigma_sq).exp() + 0.5 * info.track_reward
            }
            StyleReward::MinAccel { sigma_sq } => (-info.da_sq / sigma_sq).exp(),
            StyleReward::HighStep {
                target_amp,
                penalty,
            } => info.track_reward - penalty * (target_amp - info.cycle_amp).max(0.0),
        }
    }

    /// Declared value range `[lo, 1]`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            StyleReward::TrackOnly => (0.0, 1.0),
            StyleReward::StableBody { .. } => (0.0, 1.0),
            StyleReward::MinAccel { .. } => (0.0, 1.0),
            StyleReward::HighStep {
                target_amp,
                penalty,
            } => (-penalty * target_amp, 1.0),
        }
    }
}

/// Named style selection, mapped to env-scale defaults by each environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StyleKind {
    Track,
    Stable,
    MinAccel,
    HighStep,
}

impl StyleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "track" => Ok(StyleKind::Track),
            "stable" => Ok(StyleKind::Stable),
            "minaccel" => Ok(StyleKind::MinAccel),
            "highstep" => Ok(StyleKind::HighStep),
            _ => Err(Error::invalid_argument(format!(
                "unknown reward {s:?} (expected track|stable|minaccel|highstep)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StyleKind::Track => "track",
            StyleKind::Stable => "stable",
            StyleKind::MinAccel => "minaccel",
            StyleKind::HighStep => "highstep",
        }
    }
}

/// An episodic MDP with a phase-indexed reference motion.
///
/// Instances are not stepped concurrently; clone one per worker and give
/// each its own RNG stream.
pub trait Environment: Send + Sync {
    fn env_id(&self) -> &str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn dt(&self) -> f64;

    /// Phase advance rate (rad/s) for a given speed command.
    fn angular_rate(&self, command: f64) -> f64;
    fn command_range(&self) -> (f64, f64);
    fn phase(&self) -> f64;
    fn command(&self) -> f64;

    /// Reference sub-state (same layout as the robot sub-state) at a phase.
    fn reference_state(&self, phase: f64, command: f64) -> Vec<f64>;

    /// Reference-state initialization: uniform phase, command from the
    /// configured range, robot state perturbed around the reference.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Deterministic reset exactly onto the reference at a given phase and
    /// command (used by evaluation).
    fn reset_to(&mut self, phase: f64, command: f64) -> Vec<f64>;

    /// Current packed observation `x ++ xhat`.
    fn observe(&self) -> Vec<f64>;

    /// Tracking reward of the current state (1.0 exactly on the reference).
    fn tracking_reward(&self) -> f64;

    fn step(&mut self, action: &[f64]) -> Result<Step>;

    fn mirror_obs(&self, obs: &[f64]) -> Vec<f64>;
    fn mirror_action(&self, action: &[f64]) -> Vec<f64>;

    fn scale_mass(&mut self, factor: f64);
    fn set_external_force(&mut self, force: Option<&[f64]>);

    fn style(&self) -> &StyleReward;
    fn set_style(&mut self, style: StyleReward);
    fn termination(&self) -> &TerminationRule;

    /// Environment-scale default parameters for a named style.
    fn default_style(&self, kind: StyleKind) -> StyleReward;

    /// Indices of the robot velocity components within the observation.
    fn velocity_dims(&self) -> Vec<usize>;

    fn box_clone(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Build a built-in environment by id with default configuration.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "cycler" => Ok(Box::new(Cycler::new(CyclerConfig::default())?)),
        "pendulum-track" => Ok(Box::new(PendulumTrack::new(PendulumConfig::default())?)),
        _ => Err(Error::invalid_argument(format!(
            "unknown environment id {id:?} (expected \"cycler\" or \"pendulum-track\")"
        ))),
    }
}

/// Shared per-episode bookkeeping: phase, command, action memory and
/// cycle-amplitude tracking.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeCore {
    pub phase: f64,
    pub command: f64,
    pub steps: usize,
    pub terminated: bool,
    pub prev_action: Option<Vec<f64>>,
    cycle_running_max: f64,
    completed_cycle_amp: Option<f64>,
}

impl EpisodeCore {
    pub fn start(phase: f64, command: f64) -> Self {
        EpisodeCore {
            phase,
            command,
            steps: 0,
            terminated: false,
            prev_action: None,
            cycle_running_max: 0.0,
            completed_cycle_amp: None,
        }
    }

    /// Advance the phase by `omega * dt`, wrapping modulo 2 pi.
    pub fn advance_phase(&mut self, omega: f64, dt: f64) {
        let next = self.phase + omega * dt;
        let tau = std::f64::consts::TAU;
        let wrapped = next.rem_euclid(tau);
        if next >= tau || next < 0.0 {
            // Full cycle completed: freeze its amplitude.
            self.completed_cycle_amp = Some(self.cycle_running_max);
            self.cycle_running_max = 0.0;
        }
        self.phase = wrapped;
    }

    pub fn note_amplitude(&mut self, amp: f64) {
        if amp > self.cycle_running_max {
            self.cycle_running_max = amp;
        }
    }

    /// Amplitude of the last completed cycle; the running maximum before the
    /// first cycle finishes.
    pub fn cycle_amplitude(&self) -> f64 {
        self.completed_cycle_amp.unwrap_or(self.cycle_running_max)
    }

    /// Squared action change versus the previous step; records the action.
    pub fn action_change_sq(&mut self, action: &[f64]) -> f64 {
        let da_sq = match &self.prev_action {
            Some(prev) => prev
                .iter()
                .zip(action)
                .map(|(p, a)| (a - p) * (a - p))
                .sum(),
            None => 0.0,
        };
        self.prev_action = Some(action.to_vec());
        da_sq
    }
}

pub(crate) fn check_action_dim(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::invalid_argument(format!(
            "action has {} entries, environment expects {dim}",
            action.len()
        )));
    }
    Ok(())
}
