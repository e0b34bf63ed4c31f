//! On-policy actor-critic training with a clipped surrogate objective and
//! generalized advantage estimation.
//!
//! The same engine drives plain from-scratch training and anchored
//! refinement: refinement adds a supervised mean-matching gradient from a
//! DASS dataset to every actor minibatch (see [`crate::refine`]). With an
//! anchor weight of zero the two paths perform bit-identical arithmetic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamState, Gradients, Mlp};
use crate::policy::{fit_observation_normalization, GaussianPolicy, DEFAULT_LOG_STD};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Hidden sizes for both the mean network and the value network.
    pub hidden_sizes: Vec<usize>,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub steps_per_iteration: usize,
    pub max_iterations: usize,
    /// Double each minibatch with mirrored (obs, action) pairs sharing the
    /// original advantage.
    pub symmetry_augmentation: bool,
    /// Environment steps used to fit the observation normalization before
    /// training starts.
    pub normalization_steps: usize,
    /// Set from the run's global seed, not from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden_sizes: vec![64, 64],
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            epochs: 10,
            minibatch_size: 256,
            steps_per_iteration: 3000,
            max_iterations: 300,
            symmetry_augmentation: true,
            normalization_steps: 10_000,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::invalid_argument("gamma and gae_lambda must lie in [0,1]"));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::invalid_argument("clip_ratio must lie in (0,1)"));
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::invalid_argument("epochs and minibatch_size must be positive"));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::invalid_argument("hidden sizes must be positive"));
        }
        Ok(())
    }
}

/// One on-policy transition, with advantage and return target filled in by
/// [`compute_gae`].
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    /// Critic estimate at the successor state (bootstrap for truncation).
    pub next_value: f64,
    /// Successor state lies in the termination set.
    pub done: bool,
    /// Episode ended here for any reason (termination or step cap).
    pub boundary: bool,
    pub advantage: f64,
    pub return_target: f64,
    pub info: crate::env::StepInfo,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    /// Returns and lengths of episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
    pub episode_lens: Vec<usize>,
    pub gae_done: bool,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_return(&self) -> f64 {
        if self.episode_returns.is_empty() {
            self.transitions.iter().map(|t| t.reward).sum()
        } else {
            self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64
        }
    }

    pub fn mean_episode_len(&self) -> f64 {
        if self.episode_lens.is_empty() {
            self.transitions.len() as f64
        } else {
            self.episode_lens.iter().sum::<usize>() as f64 / self.episode_lens.len() as f64
        }
    }
}

fn critic_value(value_net: &Mlp<f64>, policy: &GaussianPolicy, obs: &[f64]) -> Result<f64> {
    Ok(value_net.forward(&policy.normalize(obs))?[0])
}

/// Run the stochastic policy for exactly `n_steps` transitions, resetting
/// from the initial state distribution whenever an episode ends.
pub fn collect_rollouts(
    env: &mut dyn Environment,
    policy: &GaussianPolicy,
    value_net: &Mlp<f64>,
    n_steps: usize,
    rng: &mut Stream,
) -> Result<RolloutBatch> {
    let mut batch = RolloutBatch::default();
    if n_steps == 0 {
        return Ok(batch);
    }
    let sigmas: Vec<f64> = policy.log_std().iter().map(|ls| ls.exp()).collect();
    let mut obs = env.reset(rng);
    let mut episode_return = 0.0;
    let mut episode_len = 0usize;
    for _ in 0..n_steps {
        let mean = policy.mean(&obs)?;
        let mut action = mean.clone();
        for (a, s) in action.iter_mut().zip(&sigmas) {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            *a += s * z;
        }
        let log_prob = policy.log_prob_given_mean(&mean, &action);
        let value = critic_value(value_net, policy, &obs)?;
        let step = env.step(&action)?;
        let next_value = critic_value(value_net, policy, &step.obs)?;
        let boundary = step.done || step.truncated;
        episode_return += step.reward;
        episode_len += 1;
        batch.transitions.push(Transition {
            obs,
            action,
            reward: step.reward,
            log_prob,
            value,
            next_value,
            done: step.done,
            boundary,
            advantage: 0.0,
            return_target: 0.0,
            info: step.info,
        });
        obs = if boundary {
            batch.episode_returns.push(episode_return);
            batch.episode_lens.push(episode_len);
            episode_return = 0.0;
            episode_len = 0;
            env.reset(rng)
        } else {
            step.obs
        };
    }
    Ok(batch)
}

/// Fill advantages (normalized to zero mean, unit variance) and return
/// targets:
/// `delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)`,
/// `A_t = sum_k (gamma lambda)^k delta_{t+k}` within episodes,
/// `returns_t = A_t + V(s_t)` (raw advantage).
pub fn compute_gae(batch: &mut RolloutBatch, gamma: f64, lambda: f64) {
    let n = batch.transitions.len();
    if n == 0 {
        batch.gae_done = true;
        return;
    }
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let tr = &batch.transitions[t];
        let not_done = if tr.done { 0.0 } else { 1.0 };
        let continues = if tr.boundary { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * tr.next_value * not_done - tr.value;
        carry = delta + gamma * lambda * continues * carry;
        let tr = &mut batch.transitions[t];
        tr.advantage = carry;
        tr.return_target = carry + tr.value;
    }
    let mean: f64 = batch.transitions.iter().map(|t| t.advantage).sum::<f64>() / n as f64;
    let var: f64 = batch
        .transitions
        .iter()
        .map(|t| (t.advantage - mean) * (t.advantage - mean))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std > 1e-8 {
        for tr in &mut batch.transitions {
            tr.advantage = (tr.advantage - mean) / std;
        }
    } else {
        // Degenerate batch (e.g. all-zero rewards with a zero critic): no
        // usable policy-gradient signal.
        for tr in &mut batch.transitions {
            tr.advantage = 0.0;
        }
    }
    batch.gae_done = true;
}

/// Gradient (and loss) of the clipped surrogate
/// `-mean(min(rho A, clip(rho, 1 +- eps) A))` with respect to the mean
/// network parameters, over an assembled minibatch.
pub fn clipped_surrogate_gradient(
    policy: &GaussianPolicy,
    xs_norm: &[f64],
    actions: &[f64],
    logp_old: &[f64],
    advantages: &[f64],
    n: usize,
    clip_ratio: f64,
) -> Result<(Gradients<f64>, SurrogateStats)> {
    let act_dim = policy.act_dim();
    let means = policy.mean_net().forward_batch(xs_norm, n)?;
    let inv_var: Vec<f64> = policy
        .log_std()
        .iter()
        .map(|ls| (-2.0 * ls).exp())
        .collect();
    let mut dys = vec![0.0; n * act_dim];
    let mut loss = 0.0;
    let mut clipped = 0usize;
    for i in 0..n {
        let mean = &means[i * act_dim..(i + 1) * act_dim];
        let action = &actions[i * act_dim..(i + 1) * act_dim];
        let logp_new = policy.log_prob_given_mean(mean, action);
        let ratio = (logp_new - logp_old[i]).exp();
        let adv = advantages[i];
        let surr = ratio * adv;
        let surr_clip = ratio.clamp(1.0 - clip_ratio, 1.0 + clip_ratio) * adv;
        loss -= surr.min(surr_clip);
        if surr <= surr_clip {
            let coeff = -adv * ratio;
            for j in 0..act_dim {
                dys[i * act_dim + j] = coeff * (action[j] - mean[j]) * inv_var[j];
            }
        } else {
            // Clipped and not improving: zero gradient.
            clipped += 1;
        }
    }
    loss /= n as f64;
    let grads = policy.mean_net().backward_batch(xs_norm, &dys, n)?;
    Ok((
        grads,
        SurrogateStats {
            loss,
            clip_fraction: clipped as f64 / n as f64,
        },
    ))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateStats {
    pub loss: f64,
    pub clip_fraction: f64,
}

/// Anchor tuples for refinement, pre-normalized with the trained policy's
/// observation map.
pub struct AnchorBatch<'a> {
    pub xs_norm: &'a [f64],
    pub targets: &'a [f64],
    pub n: usize,
    pub weight: f64,
    pub rng: &'a mut Stream,
}

/// Mutable pieces the updater threads through iterations.
pub struct UpdateContext<'a> {
    pub actor_adam: &'a mut AdamState<f64>,
    pub critic_adam: &'a mut AdamState<f64>,
    pub shuffle_rng: &'a mut Stream,
    pub anchor: Option<AnchorBatch<'a>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    pub supervised_loss: Option<f64>,
}

/// Flat per-batch buffers the minibatch loop gathers from.
struct BatchArrays {
    xs_norm: Vec<f64>,
    xs_mirror_norm: Vec<f64>,
    actions: Vec<f64>,
    actions_mirror: Vec<f64>,
    logp_old: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

fn flatten_batch(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    batch: &RolloutBatch,
    mirrored: bool,
) -> BatchArrays {
    let n = batch.len();
    let obs_dim = policy.obs_dim();
    let act_dim = policy.act_dim();
    let mut arrays = BatchArrays {
        xs_norm: Vec::with_capacity(n * obs_dim),
        xs_mirror_norm: Vec::with_capacity(if mirrored { n * obs_dim } else { 0 }),
        actions: Vec::with_capacity(n * act_dim),
        actions_mirror: Vec::with_capacity(if mirrored { n * act_dim } else { 0 }),
        logp_old: Vec::with_capacity(n),
        advantages: Vec::with_capacity(n),
        returns: Vec::with_capacity(n),
    };
    for tr in &batch.transitions {
        arrays.xs_norm.extend_from_slice(&policy.normalize(&tr.obs));
        arrays.actions.extend_from_slice(&tr.action);
        arrays.logp_old.push(tr.log_prob);
        arrays.advantages.push(tr.advantage);
        arrays.returns.push(tr.return_target);
        if mirrored {
            // Mirror the raw observation, then normalize.
            arrays
                .xs_mirror_norm
                .extend_from_slice(&policy.normalize(&env.mirror_obs(&tr.obs)));
            arrays
                .actions_mirror
                .extend_from_slice(&env.mirror_action(&tr.action));
        }
    }
    arrays
}

/// Assembled actor/critic minibatch. With symmetry augmentation the row
/// count is exactly twice the index count: each original row is followed by
/// its mirrored twin sharing advantage, old log-probability and return.
struct Minibatch {
    rows: usize,
    xs: Vec<f64>,
    actions: Vec<f64>,
    logp_old: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

fn assemble_minibatch(
    arrays: &BatchArrays,
    indices: &[usize],
    obs_dim: usize,
    act_dim: usize,
    augmented: bool,
) -> Minibatch {
    let per = if augmented { 2 } else { 1 };
    let rows = indices.len() * per;
    let mut mb = Minibatch {
        rows,
        xs: Vec::with_capacity(rows * obs_dim),
        actions: Vec::with_capacity(rows * act_dim),
        logp_old: Vec::with_capacity(rows),
        advantages: Vec::with_capacity(rows),
        returns: Vec::with_capacity(rows),
    };
    for &i in indices {
        mb.xs
            .extend_from_slice(&arrays.xs_norm[i * obs_dim..(i + 1) * obs_dim]);
        mb.actions
            .extend_from_slice(&arrays.actions[i * act_dim..(i + 1) * act_dim]);
        mb.logp_old.push(arrays.logp_old[i]);
        mb.advantages.push(arrays.advantages[i]);
        mb.returns.push(arrays.returns[i]);
        if augmented {
            mb.xs
                .extend_from_slice(&arrays.xs_mirror_norm[i * obs_dim..(i + 1) * obs_dim]);
            mb.actions
                .extend_from_slice(&arrays.actions_mirror[i * act_dim..(i + 1) * act_dim]);
            mb.logp_old.push(arrays.logp_old[i]);
            mb.advantages.push(arrays.advantages[i]);
            mb.returns.push(arrays.returns[i]);
        }
    }
    mb
}

/// One PPO update pass over a collected batch: `epochs` sweeps of shuffled
/// minibatches, a clipped-surrogate Adam step on the actor (plus the
/// weighted anchor gradient when refining) and a squared-error Adam step on
/// the critic. The fixed `log_std` is never touched.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value_net: &mut Mlp<f64>,
    env: &dyn Environment,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    ctx: &mut UpdateContext,
) -> Result<UpdateStats> {
    if !batch.gae_done {
        return Err(Error::invalid_state(
            "compute_gae must run before ppo_update",
        ));
    }
    if batch.is_empty() {
        return Ok(UpdateStats::default());
    }
    let obs_dim = policy.obs_dim();
    let act_dim = policy.act_dim();
    let arrays = flatten_batch(env, policy, batch, cfg.symmetry_augmentation);

    let n = batch.len();
    let base_indices: Vec<usize> = (0..n).collect();

    // Anchor minibatches walk a reshuffled copy of the anchor subsample each
    // epoch, wrapping around when the subsample is smaller than the demand.
    let mut anchor_order: Vec<usize> = match &ctx.anchor {
        Some(a) => (0..a.n).collect(),
        None => Vec::new(),
    };

    let mut actor_loss_sum = 0.0;
    let mut critic_loss_sum = 0.0;
    let mut clip_sum = 0.0;
    let mut sup_loss_sum = 0.0;
    let mut minibatches = 0usize;
    let mut anchor_minibatches = 0usize;

    let mut anchor_xs = Vec::new();
    let mut anchor_targets = Vec::new();

    for _ in 0..cfg.epochs {
        let mut order = base_indices.clone();
        order.shuffle(ctx.shuffle_rng);
        let mut anchor_cursor = 0usize;
        if let Some(anchor) = &mut ctx.anchor {
            anchor_order.shuffle(anchor.rng);
        }

        for chunk in order.chunks(cfg.minibatch_size) {
            let mb = assemble_minibatch(&arrays, chunk, obs_dim, act_dim, cfg.symmetry_augmentation);

            let (mut g_actor, stats) = clipped_surrogate_gradient(
                policy,
                &mb.xs,
                &mb.actions,
                &mb.logp_old,
                &mb.advantages,
                mb.rows,
                cfg.clip_ratio,
            )?;

            if let Some(anchor) = &ctx.anchor {
                if anchor.weight != 0.0 {
                    let m = chunk.len();
                    anchor_xs.clear();
                    anchor_targets.clear();
                    for k in 0..m {
                        let i = anchor_order[(anchor_cursor + k) % anchor_order.len()];
                        anchor_xs
                            .extend_from_slice(&anchor.xs_norm[i * obs_dim..(i + 1) * obs_dim]);
                        anchor_targets
                            .extend_from_slice(&anchor.targets[i * act_dim..(i + 1) * act_dim]);
                    }
                    anchor_cursor += m;
                    let (g_sup, sup_loss) = crate::distill::mean_action_mse_gradient(
                        policy.mean_net(),
                        &anchor_xs,
                        &anchor_targets,
                        m,
                    )?;
                    g_actor.add_scaled(&g_sup, anchor.weight)?;
                    sup_loss_sum += sup_loss;
                    anchor_minibatches += 1;
                }
            }

            if !stats.loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "actor loss became non-finite ({})",
                    stats.loss
                )));
            }
            adam_step(policy.mean_net_mut(), &g_actor, ctx.actor_adam)?;

            // Critic regression toward the return targets.
            let values = value_net.forward_batch(&mb.xs, mb.rows)?;
            let mut dys = vec![0.0; mb.rows];
            let mut critic_loss = 0.0;
            for i in 0..mb.rows {
                let diff = values[i] - mb.returns[i];
                critic_loss += diff * diff;
                dys[i] = 2.0 * diff;
            }
            critic_loss /= mb.rows as f64;
            if !critic_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "critic loss became non-finite ({critic_loss})"
                )));
            }
            let g_critic = value_net.backward_batch(&mb.xs, &dys, mb.rows)?;
            adam_step(value_net, &g_critic, ctx.critic_adam)?;

            actor_loss_sum += stats.loss;
            critic_loss_sum += critic_loss;
            clip_sum += stats.clip_fraction;
            minibatches += 1;
        }
    }

    Ok(UpdateStats {
        actor_loss: actor_loss_sum / minibatches as f64,
        critic_loss: critic_loss_sum / minibatches as f64,
        clip_fraction: clip_sum / minibatches as f64,
        supervised_loss: if anchor_minibatches > 0 {
            Some(sup_loss_sum / anchor_minibatches as f64)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub iteration: usize,
    pub mean_return: f64,
    pub mean_episode_len: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub supervised_loss: Option<f64>,
    pub style_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
}

impl TrainLog {
    /// CSV rendering; the refinement columns appear only when present.
    pub fn to_csv(&self) -> String {
        let extended = self
            .rows
            .iter()
            .any(|r| r.supervised_loss.is_some() || r.style_metric.is_some());
        let mut out = String::from("iteration,mean_return,mean_episode_len,actor_loss,critic_loss");
        if extended {
            out.push_str(",supervised_loss,style_metric");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.iteration, r.mean_return, r.mean_episode_len, r.actor_loss, r.critic_loss
            ));
            if extended {
                out.push_str(&format!(
                    ",{},{}",
                    r.supervised_loss.map_or(String::new(), |v| v.to_string()),
                    r.style_metric.map_or(String::new(), |v| v.to_string())
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Policy after the final iteration.
    pub policy: GaussianPolicy,
    /// Policy of the iteration with the highest mean episode return.
    pub best_policy: GaussianPolicy,
    pub value_net: Mlp<f64>,
    pub log: TrainLog,
}

/// Anchoring spec for refinement runs.
#[derive(Debug, Clone)]
pub struct AnchorSpec<'a> {
    pub dataset: &'a crate::dass::DassDataset,
    pub weight: f64,
    /// Anchor tuples drawn per iteration (the whole set when it is at least
    /// this large).
    pub n_per_iteration: usize,
}

/// Internal knobs shared by `train`, `refine` and the fine-tuning baseline.
pub(crate) struct TrainSetup<'a> {
    pub init_policy: Option<GaussianPolicy>,
    pub anchor: Option<AnchorSpec<'a>>,
}

/// Train a policy from scratch with PPO.
pub fn train(env: &mut dyn Environment, cfg: &PpoConfig) -> Result<TrainResult> {
    run_training(
        env,
        cfg,
        TrainSetup {
            init_policy: None,
            anchor: None,
        },
    )
}

pub(crate) fn run_training(
    env: &mut dyn Environment,
    cfg: &PpoConfig,
    setup: TrainSetup,
) -> Result<TrainResult> {
    cfg.validate()?;
    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();

    let mut policy = match setup.init_policy {
        Some(p) => {
            if p.obs_dim() != obs_dim || p.act_dim() != act_dim {
                return Err(Error::invalid_argument(
                    "initial policy dimensions do not match the environment",
                ));
            }
            p
        }
        None => {
            let mut sizes = vec![obs_dim];
            sizes.extend_from_slice(&cfg.hidden_sizes);
            sizes.push(act_dim);
            let net = Mlp::init(&sizes, rng::sub_seed(cfg.seed, "train/init-actor"))?;
            let mut p = GaussianPolicy::new(env.env_id(), net, DEFAULT_LOG_STD);
            let mut norm_rng = rng::stream(cfg.seed, "train/normalize");
            fit_observation_normalization(&mut p, env, cfg.normalization_steps, &mut norm_rng)?;
            p
        }
    };
    policy.provenance.seed = cfg.seed;

    let mut value_sizes = vec![obs_dim];
    value_sizes.extend_from_slice(&cfg.hidden_sizes);
    value_sizes.push(1);
    let mut value_net: Mlp<f64> =
        Mlp::init(&value_sizes, rng::sub_seed(cfg.seed, "train/init-critic"))?;

    let mut actor_adam = AdamState::new(policy.mean_net(), cfg.actor_lr);
    let mut critic_adam = AdamState::new(&value_net, cfg.critic_lr);
    let mut rollout_rng = rng::stream(cfg.seed, "train/rollout");
    let mut shuffle_rng = rng::stream(cfg.seed, "train/shuffle");
    let mut anchor_rng = rng::stream(cfg.seed, "train/anchor");

    // Pre-normalize the anchor set once; the normalization is frozen.
    let anchor_data = match &setup.anchor {
        Some(spec) => {
            if spec.dataset.obs_dim != obs_dim || spec.dataset.act_dim != act_dim {
                return Err(Error::invalid_argument(
                    "anchor dataset dimensions do not match the environment",
                ));
            }
            if spec.dataset.is_empty() {
                return Err(Error::invalid_argument("anchor dataset is empty"));
            }
            let mut xs = Vec::with_capacity(spec.dataset.len() * obs_dim);
            let mut targets = Vec::with_capacity(spec.dataset.len() * act_dim);
            for t in &spec.dataset.tuples {
                xs.extend_from_slice(&policy.normalize(&t.obs));
                targets.extend_from_slice(&t.mean_action);
            }
            Some((xs, targets, spec.weight, spec.n_per_iteration))
        }
        None => None,
    };

    let style_kind = env.style().kind().to_string();
    let mut log = TrainLog::default();
    let mut best_policy = policy.clone();
    let mut best_return = f64::NEG_INFINITY;

    for iteration in 0..cfg.max_iterations {
        let mut batch =
            collect_rollouts(env, &policy, &value_net, cfg.steps_per_iteration, &mut rollout_rng)?;
        compute_gae(&mut batch, cfg.gamma, cfg.gae_lambda);

        // Per-iteration anchor subsample (the whole set when big enough).
        let iteration_anchor = match &anchor_data {
            Some((xs, targets, weight, n_per_iter)) => {
                let total = targets.len() / act_dim;
                if *n_per_iter >= total {
                    Some((xs.clone(), targets.clone(), *weight, total))
                } else {
                    let mut sub_xs = Vec::with_capacity(n_per_iter * obs_dim);
                    let mut sub_t = Vec::with_capacity(n_per_iter * act_dim);
                    for _ in 0..*n_per_iter {
                        let i = anchor_rng.random_range(0..total);
                        sub_xs.extend_from_slice(&xs[i * obs_dim..(i + 1) * obs_dim]);
                        sub_t.extend_from_slice(&targets[i * act_dim..(i + 1) * act_dim]);
                    }
                    Some((sub_xs, sub_t, *weight, *n_per_iter))
                }
            }
            None => None,
        };

        let mut ctx = UpdateContext {
            actor_adam: &mut actor_adam,
            critic_adam: &mut critic_adam,
            shuffle_rng: &mut shuffle_rng,
            anchor: iteration_anchor.as_ref().map(|(xs, targets, weight, n)| AnchorBatch {
                xs_norm: xs,
                targets,
                n: *n,
                weight: *weight,
                rng: &mut anchor_rng,
            }),
        };
        let stats = ppo_update(&mut policy, &mut value_net, env, &batch, cfg, &mut ctx)?;

        if !policy.mean_net().all_finite() || !value_net.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameters after iteration {iteration}"
            )));
        }

        let n = batch.len().max(1) as f64;
        let style_metric = match style_kind.as_str() {
            "stable" => Some(batch.transitions.iter().map(|t| t.info.dv_sq).sum::<f64>() / n),
            "minaccel" => Some(batch.transitions.iter().map(|t| t.info.da_sq).sum::<f64>() / n),
            "highstep" => Some(batch.transitions.iter().map(|t| t.info.cycle_amp).sum::<f64>() / n),
            _ => None,
        };

        let mean_return = batch.mean_return();
        log.rows.push(TrainRow {
            iteration,
            mean_return,
            mean_episode_len: batch.mean_episode_len(),
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            supervised_loss: stats.supervised_loss,
            style_metric,
        });

        if mean_return > best_return {
            best_return = mean_return;
            best_policy = policy.clone();
        }
    }

    Ok(TrainResult {
        policy,
        best_policy,
        value_net,
        log,
    })
}
