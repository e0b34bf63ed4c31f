//! Fixed-covariance Gaussian policy over environment observations.
//!
//! The mean is an [`Mlp`] applied to a normalized observation; the
//! per-dimension log standard deviation is a fixed vector (default -2
//! everywhere) that no training path ever touches. Policies serialize to a
//! versioned text file whose floats carry 17 significant digits, so a
//! save -> load -> save round trip is byte-identical.

use std::fs;
use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::net::{Activation, Mlp};
use crate::rng::Stream;
use crate::textio::{fmt_f64_slice, hex, parse_f64, parse_u64, parse_usize};

pub const POLICY_FORMAT_VERSION: &str = "v1";

/// Default fixed log standard deviation per action dimension.
pub const DEFAULT_LOG_STD: f64 = -2.0;

const LN_2PI: f64 = 1.8378770664093453;

/// Where an artifact came from: the exact command line, the root seed and
/// the content hash of the parent artifact (if any).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    env_id: String,
    mean_net: Mlp<f64>,
    log_std: Vec<f64>,
    obs_shift: Vec<f64>,
    obs_scale: Vec<f64>,
    pub provenance: Provenance,
}

impl GaussianPolicy {
    /// A policy with identity observation normalization and uniform
    /// `log_std`.
    pub fn new(env_id: &str, mean_net: Mlp<f64>, log_std: f64) -> Self {
        let obs_dim = mean_net.input_dim();
        let act_dim = mean_net.output_dim();
        GaussianPolicy {
            env_id: env_id.to_string(),
            log_std: vec![log_std; act_dim],
            obs_shift: vec![0.0; obs_dim],
            obs_scale: vec![1.0; obs_dim],
            mean_net,
            provenance: Provenance::default(),
        }
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean_net(&self) -> &Mlp<f64> {
        &self.mean_net
    }

    pub fn mean_net_mut(&mut self) -> &mut Mlp<f64> {
        &mut self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn obs_shift(&self) -> &[f64] {
        &self.obs_shift
    }

    pub fn obs_scale(&self) -> &[f64] {
        &self.obs_scale
    }

    /// Replace the fixed log standard deviation (test and tooling hook; the
    /// training paths never call this).
    pub fn with_log_std(mut self, log_std: Vec<f64>) -> Result<Self> {
        if log_std.len() != self.act_dim() {
            return Err(Error::invalid_argument("log_std length != action dim"));
        }
        self.log_std = log_std;
        Ok(self)
    }

    pub fn set_normalization(&mut self, shift: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        if shift.len() != self.obs_dim() || scale.len() != self.obs_dim() {
            return Err(Error::invalid_argument(
                "normalization length != observation dim",
            ));
        }
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid_argument("obs_scale must be strictly positive"));
        }
        self.obs_shift = shift;
        self.obs_scale = scale;
        Ok(())
    }

    /// `(obs - shift) / scale`, the network's input.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.obs_shift.iter().zip(&self.obs_scale))
            .map(|(o, (sh, sc))| (o - sh) / sc)
            .collect()
    }

    /// Deterministic mean action.
    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim() {
            return Err(Error::invalid_argument(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.obs_dim()
            )));
        }
        self.mean_net.forward(&self.normalize(obs))
    }

    /// Stochastic action: mean + exp(log_std) * z.
    pub fn sample(&self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut a = self.mean(obs)?;
        let mut rng = rng;
        for (v, ls) in a.iter_mut().zip(&self.log_std) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += ls.exp() * z;
        }
        Ok(a)
    }

    /// Diagonal-Gaussian log density of `action` at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean(obs)?;
        if action.len() != mean.len() {
            return Err(Error::invalid_argument("action length != action dim"));
        }
        Ok(self.log_prob_given_mean(&mean, action))
    }

    /// Log density when the mean is already known (used by the updaters).
    pub fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for j in 0..mean.len() {
            let sigma = self.log_std[j].exp();
            let z = (action[j] - mean[j]) / sigma;
            lp -= self.log_std[j] + 0.5 * LN_2PI + 0.5 * z * z;
        }
        lp
    }

    /// sha256 over the functional part of the serialization (everything that
    /// defines the policy as a function; provenance excluded).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_body().as_bytes());
        hex(&hasher.finalize())
    }

    fn canonical_body(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("env_id {}\n", self.env_id));
        let sizes: Vec<String> = self.mean_net.layer_sizes().iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("layer_sizes {}\n", sizes.join(" ")));
        out.push_str(&format!(
            "activation {}\n",
            self.mean_net.hidden_activation().as_str()
        ));
        out.push_str(&format!("log_std {}\n", fmt_f64_slice(&self.log_std)));
        out.push_str(&format!("obs_shift {}\n", fmt_f64_slice(&self.obs_shift)));
        out.push_str(&format!("obs_scale {}\n", fmt_f64_slice(&self.obs_scale)));
        for l in 0..self.mean_net.n_layers() {
            out.push_str(&format!(
                "weights {l} {}\n",
                fmt_f64_slice(&self.mean_net.weights()[l])
            ));
            out.push_str(&format!(
                "biases {l} {}\n",
                fmt_f64_slice(&self.mean_net.biases()[l])
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.mean_net.all_finite() {
            return Err(Error::Numerical(
                "refusing to save a policy with non-finite parameters".into(),
            ));
        }
        let mut out = format!("policy {POLICY_FORMAT_VERSION}\n");
        out.push_str(&self.canonical_body());
        out.push_str(&format!("provenance_command {}\n", self.provenance.command));
        out.push_str(&format!("provenance_seed {}\n", self.provenance.seed));
        out.push_str(&format!(
            "provenance_parent {}\n",
            self.provenance.parent.as_deref().unwrap_or("-")
        ));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<GaussianPolicy> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();

        let mut next_field = |field: &'static str| -> Result<(usize, String)> {
            match lines.next() {
                Some((idx, line)) => {
                    let lineno = idx + 1;
                    if line == field {
                        return Ok((lineno, String::new()));
                    }
                    match line.strip_prefix(&format!("{field} ")) {
                        Some(rest) => Ok((lineno, rest.to_string())),
                        None => Err(Error::parse(
                            path,
                            lineno,
                            format!("expected field {field:?}, found {line:?}"),
                        )),
                    }
                }
                None => Err(Error::parse(
                    path,
                    0,
                    format!("file ends before field {field:?}"),
                )),
            }
        };

        let (line, version) = next_field("policy")?;
        if version != POLICY_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: if version.is_empty() {
                    format!("(missing, line {line})")
                } else {
                    version
                },
                expected: POLICY_FORMAT_VERSION.to_string(),
            });
        }

        let (_, env_id) = next_field("env_id")?;
        let (line, sizes_str) = next_field("layer_sizes")?;
        let layer_sizes: Vec<usize> = sizes_str
            .split_whitespace()
            .map(|t| parse_usize(path, line, "layer_sizes", t))
            .collect::<Result<_>>()?;
        let (line, act_str) = next_field("activation")?;
        if Activation::parse(&act_str).is_none() {
            return Err(Error::parse(
                path,
                line,
                format!("field \"activation\": unknown activation {act_str:?}"),
            ));
        }

        let parse_vec = |line: usize, field: &str, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| parse_f64(path, line, field, t))
                .collect()
        };

        let (line, s) = next_field("log_std")?;
        let log_std = parse_vec(line, "log_std", &s)?;
        let (line, s) = next_field("obs_shift")?;
        let obs_shift = parse_vec(line, "obs_shift", &s)?;
        let (line, s) = next_field("obs_scale")?;
        let obs_scale = parse_vec(line, "obs_scale", &s)?;

        if layer_sizes.len() < 2 {
            return Err(Error::parse(path, line, "layer_sizes needs >= 2 entries"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (line, s) = next_field("weights")?;
            let mut toks = s.splitn(2, ' ');
            let idx = toks.next().unwrap_or("");
            if parse_usize(path, line, "weights", idx)? != l {
                return Err(Error::parse(path, line, format!("expected weights {l}")));
            }
            weights.push(parse_vec(line, "weights", toks.next().unwrap_or(""))?);

            let (line, s) = next_field("biases")?;
            let mut toks = s.splitn(2, ' ');
            let idx = toks.next().unwrap_or("");
            if parse_usize(path, line, "biases", idx)? != l {
                return Err(Error::parse(path, line, format!("expected biases {l}")));
            }
            biases.push(parse_vec(line, "biases", toks.next().unwrap_or(""))?);
        }

        let (_, command) = next_field("provenance_command")?;
        let (line, seed_str) = next_field("provenance_seed")?;
        let seed = parse_u64(path, line, "provenance_seed", &seed_str)?;
        let (_, parent_str) = next_field("provenance_parent")?;
        let parent = if parent_str == "-" {
            None
        } else {
            Some(parent_str)
        };

        let mean_net = Mlp::from_parameters(layer_sizes, weights, biases).map_err(|e| {
            Error::parse(path, 0, format!("inconsistent network parameters: {e}"))
        })?;
        let act_dim = mean_net.output_dim();
        let obs_dim = mean_net.input_dim();
        if log_std.len() != act_dim {
            return Err(Error::parse(path, 0, "log_std length != action dim"));
        }
        if obs_shift.len() != obs_dim || obs_scale.len() != obs_dim {
            return Err(Error::parse(path, 0, "normalization length != obs dim"));
        }
        if obs_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::parse(path, 0, "obs_scale must be strictly positive"));
        }

        Ok(GaussianPolicy {
            env_id,
            mean_net,
            log_std,
            obs_shift,
            obs_scale,
            provenance: Provenance {
                command,
                seed,
                parent,
            },
        })
    }
}

/// Estimate per-dimension observation statistics by running the (stochastic)
/// policy for `n_steps` environment steps, then freeze them into the policy.
/// This runs once before training; the map is never updated afterwards.
pub fn fit_observation_normalization(
    policy: &mut GaussianPolicy,
    env: &mut dyn Environment,
    n_steps: usize,
    rng: &mut Stream,
) -> Result<()> {
    let dim = env.obs_dim();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut obs = env.reset(rng);
    for _ in 0..n_steps {
        for (i, v) in obs.iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
        let action = policy.sample(&obs, rng)?;
        let step = env.step(&action)?;
        obs = if step.done || step.truncated {
            env.reset(rng)
        } else {
            step.obs
        };
    }
    let n = n_steps as f64;
    let shift: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let scale: Vec<f64> = sum_sq
        .iter()
        .zip(&shift)
        .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt().max(1e-6))
        .collect();
    policy.set_normalization(shift, scale)
}
