//! Supervised compression and distillation of DASS datasets into a student
//! policy: minimize the mean squared error between the student's mean action
//! and the stored teacher means.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dass::DassDataset;
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamState, Gradients, Mlp};
use crate::policy::GaussianPolicy;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub hidden_sizes: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop when the best minibatch loss has not improved by at least this
    /// much ...
    pub min_improvement: f64,
    /// ... over this many consecutive iterations.
    pub window: usize,
    pub max_iterations: usize,
    /// Set from the run's global seed, not from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            hidden_sizes: vec![16, 16],
            batch_size: 128,
            learning_rate: 1e-3,
            min_improvement: 1e-5,
            window: 1000,
            max_iterations: 20_000,
            seed: 0,
        }
    }
}

impl DistillConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.window == 0 {
            return Err(Error::invalid_argument(
                "batch_size and window must be positive",
            ));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::invalid_argument("hidden sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DistillReport {
    pub final_train_loss: f64,
    pub final_validation_loss: f64,
    pub iterations: usize,
    /// Minibatch loss per iteration.
    pub train_curve: Vec<f64>,
    /// Best-so-far curve (monotone non-increasing).
    pub best_curve: Vec<f64>,
}

impl DistillReport {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,best_loss\n");
        for (i, (loss, best)) in self.train_curve.iter().zip(&self.best_curve).enumerate() {
            out.push_str(&format!("{i},{loss},{best}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "iterations {}\nfinal_train_loss {}\nfinal_validation_loss {}\n",
            self.iterations, self.final_train_loss, self.final_validation_loss
        )
    }
}

/// Mean-action MSE gradient over a normalized minibatch.
///
/// Loss: mean over samples and action dimensions of the squared difference
/// between the network output and the target. Returns the averaged gradient
/// and the minibatch loss.
pub fn mean_action_mse_gradient(
    net: &Mlp<f64>,
    xs_norm: &[f64],
    targets: &[f64],
    n: usize,
) -> Result<(Gradients<f64>, f64)> {
    let act_dim = net.output_dim();
    let outputs = net.forward_batch(xs_norm, n)?;
    let mut loss = 0.0;
    let mut dys = vec![0.0; n * act_dim];
    let scale = 1.0 / act_dim as f64;
    for i in 0..n * act_dim {
        let diff = outputs[i] - targets[i];
        loss += diff * diff;
        dys[i] = 2.0 * diff * scale;
    }
    loss /= (n * act_dim) as f64;
    let grads = net.backward_batch(xs_norm, &dys, n)?;
    Ok((grads, loss))
}

/// Exact mean squared mean-action error over a whole dataset.
pub fn evaluate_loss(policy: &GaussianPolicy, dataset: &DassDataset) -> Result<f64> {
    if policy.obs_dim() != dataset.obs_dim || policy.act_dim() != dataset.act_dim {
        return Err(Error::invalid_argument(
            "policy and dataset dimensions do not match",
        ));
    }
    if dataset.is_empty() {
        return Err(Error::invalid_argument("dataset is empty"));
    }
    let mut total = 0.0;
    for t in &dataset.tuples {
        let mean = policy.mean(&t.obs)?;
        for (m, a) in mean.iter().zip(&t.mean_action) {
            let d = m - a;
            total += d * d;
        }
    }
    Ok(total / (dataset.len() * dataset.act_dim) as f64)
}

/// Distill `train` into a fresh student (see [`distill_with_init`]).
pub fn distill(
    train: &DassDataset,
    validation: &DassDataset,
    cfg: &DistillConfig,
) -> Result<(GaussianPolicy, DistillReport)> {
    distill_with_init(train, validation, cfg, None)
}

/// Distill with an explicit student initialization (used by tests and by
/// tooling that warm-starts a student).
pub fn distill_with_init(
    train: &DassDataset,
    validation: &DassDataset,
    cfg: &DistillConfig,
    init: Option<GaussianPolicy>,
) -> Result<(GaussianPolicy, DistillReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid_argument("training dataset is empty"));
    }
    if validation.is_empty() {
        return Err(Error::invalid_argument("validation dataset is empty"));
    }
    if train.obs_dim != validation.obs_dim || train.act_dim != validation.act_dim {
        return Err(Error::invalid_argument(
            "train and validation dimensions do not match",
        ));
    }

    let mut student = match init {
        Some(p) => {
            if p.obs_dim() != train.obs_dim || p.act_dim() != train.act_dim {
                return Err(Error::invalid_argument(
                    "initial student dimensions do not match the dataset",
                ));
            }
            p
        }
        None => {
            let mut sizes = vec![train.obs_dim];
            sizes.extend_from_slice(&cfg.hidden_sizes);
            sizes.push(train.act_dim);
            let net = Mlp::init(&sizes, rng::sub_seed(cfg.seed, "distill/init"))?;
            let mut p = GaussianPolicy::new(&train.env_id, net, 0.0);
            // Students copy the teacher's fixed covariance and normalization.
            p = p.with_log_std(train.provenance.log_std.clone())?;
            p.set_normalization(
                train.provenance.obs_shift.clone(),
                train.provenance.obs_scale.clone(),
            )?;
            p
        }
    };
    student.provenance.parent = Some(train.content_hash());
    student.provenance.seed = cfg.seed;

    // Pre-normalized inputs and flat targets.
    let n = train.len();
    let obs_dim = train.obs_dim;
    let act_dim = train.act_dim;
    let mut xs_all = Vec::with_capacity(n * obs_dim);
    let mut targets_all = Vec::with_capacity(n * act_dim);
    for t in &train.tuples {
        xs_all.extend_from_slice(&student.normalize(&t.obs));
        targets_all.extend_from_slice(&t.mean_action);
    }

    let mut shuffle = rng::stream(cfg.seed, "distill/shuffle");
    let mut adam = AdamState::new(student.mean_net(), cfg.learning_rate);
    let b = cfg.batch_size;
    let mut xs = vec![0.0; b * obs_dim];
    let mut targets = vec![0.0; b * act_dim];

    let mut train_curve = Vec::new();
    let mut best_curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut iterations = 0usize;

    while iterations < cfg.max_iterations {
        // Uniform minibatch: distinct indices when the dataset is large
        // enough, with replacement otherwise.
        let indices: Vec<usize> = if n >= b {
            rand::seq::index::sample(&mut shuffle, n, b).into_vec()
        } else {
            (0..b).map(|_| shuffle.random_range(0..n)).collect()
        };
        for (slot, &idx) in indices.iter().enumerate() {
            xs[slot * obs_dim..(slot + 1) * obs_dim]
                .copy_from_slice(&xs_all[idx * obs_dim..(idx + 1) * obs_dim]);
            targets[slot * act_dim..(slot + 1) * act_dim]
                .copy_from_slice(&targets_all[idx * act_dim..(idx + 1) * act_dim]);
        }

        let (grads, loss) = mean_action_mse_gradient(student.mean_net(), &xs, &targets, b)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "distillation loss became non-finite at iteration {iterations}"
            )));
        }
        adam_step(student.mean_net_mut(), &grads, &mut adam)?;
        iterations += 1;

        if best - loss >= cfg.min_improvement {
            best = loss;
            since_improvement = 0;
        } else {
            best = best.min(loss);
            since_improvement += 1;
        }
        train_curve.push(loss);
        best_curve.push(best);
        if since_improvement >= cfg.window {
            break;
        }
    }

    let report = DistillReport {
        final_train_loss: evaluate_loss(&student, train)?,
        final_validation_loss: evaluate_loss(&student, validation)?,
        iterations,
        train_curve,
        best_curve,
    };
    Ok((student, report))
}
