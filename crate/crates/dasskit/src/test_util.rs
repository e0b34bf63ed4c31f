//! Shared helpers for unit tests.
#![cfg(test)]

use rand::RngCore;

use crate::env::{Environment, Step, StyleKind, StyleReward, TerminationRule};
use crate::error::Result;
use crate::net::Mlp;
use crate::policy::{GaussianPolicy, DEFAULT_LOG_STD};

/// Teacher whose mean is identically zero; the PD loop alone keeps the
/// cycler near its reference, so this stands in for a trained policy in
/// dataset-level tests.
pub fn zero_teacher(env_id: &str, obs_dim: usize, act_dim: usize) -> GaussianPolicy {
    GaussianPolicy::new(
        env_id,
        Mlp::zeros(&[obs_dim, act_dim]).unwrap(),
        DEFAULT_LOG_STD,
    )
}

/// Wrapper that forces `done = true` on every step (and quietly re-arms the
/// inner environment so it can be stepped again after the caller resets).
#[derive(Clone)]
pub struct AlwaysDone(pub Box<dyn Environment>);

impl Environment for AlwaysDone {
    fn env_id(&self) -> &str {
        self.0.env_id()
    }
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }
    fn act_dim(&self) -> usize {
        self.0.act_dim()
    }
    fn dt(&self) -> f64 {
        self.0.dt()
    }
    fn angular_rate(&self, c: f64) -> f64 {
        self.0.angular_rate(c)
    }
    fn command_range(&self) -> (f64, f64) {
        self.0.command_range()
    }
    fn phase(&self) -> f64 {
        self.0.phase()
    }
    fn command(&self) -> f64 {
        self.0.command()
    }
    fn reference_state(&self, p: f64, c: f64) -> Vec<f64> {
        self.0.reference_state(p, c)
    }
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.0.reset(rng)
    }
    fn reset_to(&mut self, p: f64, c: f64) -> Vec<f64> {
        self.0.reset_to(p, c)
    }
    fn observe(&self) -> Vec<f64> {
        self.0.observe()
    }
    fn tracking_reward(&self) -> f64 {
        self.0.tracking_reward()
    }
    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let mut s = self.0.step(action)?;
        s.done = true;
        s.truncated = false;
        self.0.reset_to(self.0.phase(), self.0.command());
        Ok(s)
    }
    fn mirror_obs(&self, o: &[f64]) -> Vec<f64> {
        self.0.mirror_obs(o)
    }
    fn mirror_action(&self, a: &[f64]) -> Vec<f64> {
        self.0.mirror_action(a)
    }
    fn scale_mass(&mut self, f: f64) {
        self.0.scale_mass(f)
    }
    fn set_external_force(&mut self, f: Option<&[f64]>) {
        self.0.set_external_force(f)
    }
    fn style(&self) -> &StyleReward {
        self.0.style()
    }
    fn set_style(&mut self, s: StyleReward) {
        self.0.set_style(s)
    }
    fn termination(&self) -> &TerminationRule {
        self.0.termination()
    }
    fn default_style(&self, k: StyleKind) -> StyleReward {
        self.0.default_style(k)
    }
    fn velocity_dims(&self) -> Vec<usize> {
        self.0.velocity_dims()
    }
    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

/// Wrapper that zeroes every reward (and never terminates on the reward
/// rule), for recovering the pure imitation problem in tests.
#[derive(Clone)]
pub struct ZeroReward(pub Box<dyn Environment>);

impl Environment for ZeroReward {
    fn env_id(&self) -> &str {
        self.0.env_id()
    }
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }
    fn act_dim(&self) -> usize {
        self.0.act_dim()
    }
    fn dt(&self) -> f64 {
        self.0.dt()
    }
    fn angular_rate(&self, c: f64) -> f64 {
        self.0.angular_rate(c)
    }
    fn command_range(&self) -> (f64, f64) {
        self.0.command_range()
    }
    fn phase(&self) -> f64 {
        self.0.phase()
    }
    fn command(&self) -> f64 {
        self.0.command()
    }
    fn reference_state(&self, p: f64, c: f64) -> Vec<f64> {
        self.0.reference_state(p, c)
    }
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.0.reset(rng)
    }
    fn reset_to(&mut self, p: f64, c: f64) -> Vec<f64> {
        self.0.reset_to(p, c)
    }
    fn observe(&self) -> Vec<f64> {
        self.0.observe()
    }
    fn tracking_reward(&self) -> f64 {
        self.0.tracking_reward()
    }
    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let mut s = self.0.step(action)?;
        s.reward = 0.0;
        if s.done {
            // Re-arm the inner env so the episode keeps going; the state
            // content is irrelevant to zero-reward tests.
            self.0.reset_to(self.0.phase(), self.0.command());
        }
        s.done = false;
        Ok(s)
    }
    fn mirror_obs(&self, o: &[f64]) -> Vec<f64> {
        self.0.mirror_obs(o)
    }
    fn mirror_action(&self, a: &[f64]) -> Vec<f64> {
        self.0.mirror_action(a)
    }
    fn scale_mass(&mut self, f: f64) {
        self.0.scale_mass(f)
    }
    fn set_external_force(&mut self, f: Option<&[f64]>) {
        self.0.set_external_force(f)
    }
    fn style(&self) -> &StyleReward {
        self.0.style()
    }
    fn set_style(&mut self, s: StyleReward) {
        self.0.set_style(s)
    }
    fn termination(&self) -> &TerminationRule {
        self.0.termination()
    }
    fn default_style(&self, k: StyleKind) -> StyleReward {
        self.0.default_style(k)
    }
    fn velocity_dims(&self) -> Vec<usize> {
        self.0.velocity_dims()
    }
    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
