//! Robustness evaluation: run the deterministic mean policy from a grid of
//! initial phases under a named perturbation protocol and aggregate
//! cumulative rewards and style metrics.

use std::fs;
use std::path::Path;

use crate::env::{wrap_perturbed, Environment, PerturbationConfig, PushConfig};
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;
use crate::rng;
use crate::textio::{fmt_f64, fmt_f64_csv, parse_f64, parse_f64_list, parse_u64, parse_usize};

pub const EVALREPORT_FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolKind {
    NoNoise,
    ActionNoise { std: f64 },
    MassPerturb { scale: f64 },
    Pushes(PushConfig),
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::NoNoise => "none",
            ProtocolKind::ActionNoise { .. } => "action-noise",
            ProtocolKind::MassPerturb { .. } => "mass",
            ProtocolKind::Pushes(_) => "pushes",
        }
    }

    fn perturbation(&self) -> PerturbationConfig {
        match self {
            ProtocolKind::NoNoise => PerturbationConfig::default(),
            ProtocolKind::ActionNoise { std } => PerturbationConfig {
                action_noise_std: *std,
                ..PerturbationConfig::default()
            },
            ProtocolKind::MassPerturb { scale } => PerturbationConfig {
                mass_scale: *scale,
                ..PerturbationConfig::default()
            },
            ProtocolKind::Pushes(push) => PerturbationConfig {
                push: Some(push.clone()),
                ..PerturbationConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    /// Control steps per episode.
    pub horizon: usize,
    /// Evenly spaced initial phases replacing random resets.
    pub phases: usize,
    pub episodes_per_phase: usize,
    /// Speed command; defaults to the midpoint of the env's range.
    pub command: Option<f64>,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            kind: ProtocolKind::NoNoise,
            horizon: 400,
            phases: 8,
            episodes_per_phase: 5,
            command: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub phase: f64,
    pub rep: usize,
    pub steps: usize,
    pub cumulative_reward: f64,
    pub mean_dv_sq: f64,
    pub mean_da_sq: f64,
    pub min_cycle_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub env_id: String,
    pub policy_hash: String,
    pub protocol: EvalProtocol,
    pub command_line: String,
    pub episodes: Vec<EpisodeResult>,
    pub mean: f64,
    pub std: f64,
    pub mean_dv_sq: f64,
    pub mean_da_sq: f64,
    pub min_cycle_amp: f64,
}

fn run_episode(
    policy: &GaussianPolicy,
    base_env: &dyn Environment,
    protocol: &EvalProtocol,
    phase: f64,
    rep_index: usize,
    episode_seed: u64,
) -> Result<EpisodeResult> {
    let mut env = wrap_perturbed(base_env.box_clone(), protocol.kind.perturbation(), episode_seed)?;
    let command = protocol.command.unwrap_or_else(|| {
        let (lo, hi) = env.command_range();
        0.5 * (lo + hi)
    });
    let mut obs = env.reset_to(phase, command);

    // The running-max amplitude is only meaningful once a full reference
    // cycle has elapsed.
    let steps_per_cycle =
        (std::f64::consts::TAU / (env.angular_rate(command) * env.dt())).ceil() as usize;

    let mut cumulative = 0.0;
    let mut dv_sum = 0.0;
    let mut da_sum = 0.0;
    let mut min_amp = f64::INFINITY;
    let mut steps = 0usize;
    for t in 0..protocol.horizon {
        let action = policy.mean(&obs)?;
        let step = env.step(&action)?;
        cumulative += step.reward;
        dv_sum += step.info.dv_sq;
        da_sum += step.info.da_sq;
        if t + 1 >= steps_per_cycle {
            min_amp = min_amp.min(step.info.cycle_amp);
        }
        steps += 1;
        obs = step.obs;
        if step.done || step.truncated {
            break;
        }
    }
    if !min_amp.is_finite() {
        min_amp = 0.0;
    }
    Ok(EpisodeResult {
        phase,
        rep: rep_index,
        steps,
        cumulative_reward: cumulative,
        mean_dv_sq: if steps > 0 { dv_sum / steps as f64 } else { 0.0 },
        mean_da_sq: if steps > 0 { da_sum / steps as f64 } else { 0.0 },
        min_cycle_amp: min_amp,
    })
}

/// Evaluate the deterministic mean policy under a protocol. Episodes ending
/// early contribute their truncated cumulative reward.
pub fn evaluate(
    policy: &GaussianPolicy,
    env: &dyn Environment,
    protocol: &EvalProtocol,
) -> Result<EvalReport> {
    evaluate_jobs(policy, env, protocol, 1)
}

/// Same as [`evaluate`] with episodes fanned out over `jobs` threads.
/// Results are merged in episode order, so the report does not depend on
/// the degree of parallelism.
pub fn evaluate_jobs(
    policy: &GaussianPolicy,
    env: &dyn Environment,
    protocol: &EvalProtocol,
    jobs: usize,
) -> Result<EvalReport> {
    if policy.obs_dim() != env.obs_dim() || policy.act_dim() != env.act_dim() {
        return Err(Error::invalid_argument(
            "policy and environment dimensions do not match",
        ));
    }
    if protocol.horizon == 0 || protocol.phases == 0 || protocol.episodes_per_phase == 0 {
        return Err(Error::invalid_argument(
            "horizon, phases and episodes_per_phase must be positive",
        ));
    }

    let tau = std::f64::consts::TAU;
    let specs: Vec<(usize, usize)> = (0..protocol.phases)
        .flat_map(|p| (0..protocol.episodes_per_phase).map(move |r| (p, r)))
        .collect();

    let run_one = |&(p, r): &(usize, usize)| -> Result<EpisodeResult> {
        let phase = p as f64 / protocol.phases as f64 * tau;
        let episode_seed = rng::sub_seed(protocol.seed, &format!("eval/{p}/{r}"));
        run_episode(policy, env, protocol, phase, r, episode_seed)
    };

    let episodes: Vec<EpisodeResult> = if jobs <= 1 {
        specs.iter().map(run_one).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<EpisodeResult>>> = Vec::new();
        slots.resize_with(specs.len(), || None);
        let chunk = specs.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            for (spec_chunk, slot_chunk) in specs.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (spec, slot) in spec_chunk.iter().zip(slot_chunk.iter_mut()) {
                        *slot = Some(run_one(spec));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("episode slot filled"))
            .collect::<Result<_>>()?
    };

    let n = episodes.len() as f64;
    let mean = episodes.iter().map(|e| e.cumulative_reward).sum::<f64>() / n;
    let var = episodes
        .iter()
        .map(|e| (e.cumulative_reward - mean) * (e.cumulative_reward - mean))
        .sum::<f64>()
        / n;
    let mean_dv_sq = episodes.iter().map(|e| e.mean_dv_sq).sum::<f64>() / n;
    let mean_da_sq = episodes.iter().map(|e| e.mean_da_sq).sum::<f64>() / n;
    let min_cycle_amp = episodes
        .iter()
        .map(|e| e.min_cycle_amp)
        .fold(f64::INFINITY, f64::min);

    Ok(EvalReport {
        label: String::new(),
        env_id: env.env_id().to_string(),
        policy_hash: policy.content_hash(),
        protocol: protocol.clone(),
        command_line: String::new(),
        episodes,
        mean,
        std: var.sqrt(),
        mean_dv_sq,
        mean_da_sq,
        min_cycle_amp,
    })
}

/// Deterministic trajectory export: CSV with step, phase, every observation
/// dimension, every action dimension, reward and per-step velocity change.
pub fn export_trajectory(
    policy: &GaussianPolicy,
    env: &mut dyn Environment,
    n_steps: usize,
    path: &Path,
) -> Result<()> {
    if policy.obs_dim() != env.obs_dim() || policy.act_dim() != env.act_dim() {
        return Err(Error::invalid_argument(
            "policy and environment dimensions do not match",
        ));
    }
    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();
    let mut out = String::from("step,phase");
    for i in 0..obs_dim {
        out.push_str(&format!(",x{i}"));
    }
    for i in 0..act_dim {
        out.push_str(&format!(",a{i}"));
    }
    out.push_str(",reward,dv_norm\n");

    let (lo, hi) = env.command_range();
    let command = 0.5 * (lo + hi);
    let mut obs = env.reset_to(0.0, command);
    for step_idx in 1..=n_steps {
        let action = policy.mean(&obs)?;
        let step = env.step(&action)?;
        out.push_str(&format!("{step_idx},{}", fmt_f64(env.phase())));
        for v in &step.obs {
            out.push_str(&format!(",{}", fmt_f64(*v)));
        }
        for a in &action {
            out.push_str(&format!(",{}", fmt_f64(*a)));
        }
        out.push_str(&format!(
            ",{},{}\n",
            fmt_f64(step.reward),
            fmt_f64(step.info.dv_sq.sqrt())
        ));
        obs = step.obs;
        if step.done || step.truncated {
            break;
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Side-by-side comparison of reports: aligned text table plus CSV.
pub fn compare(reports: &[&EvalReport]) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(Error::invalid_argument("compare needs at least one report"));
    }
    let mut rows: Vec<[String; 7]> = vec![[
        "label".into(),
        "protocol".into(),
        "mean".into(),
        "std".into(),
        "mean_dv_sq".into(),
        "mean_da_sq".into(),
        "min_cycle_amp".into(),
    ]];
    for r in reports {
        rows.push([
            if r.label.is_empty() { r.policy_hash[..12].to_string() } else { r.label.clone() },
            r.protocol.kind.name().to_string(),
            format!("{:.4}", r.mean),
            format!("{:.4}", r.std),
            format!("{:.6}", r.mean_dv_sq),
            format!("{:.6}", r.mean_da_sq),
            format!("{:.4}", r.min_cycle_amp),
        ]);
    }
    let mut widths = [0usize; 7];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut table = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        table.push_str(line.join("  ").trim_end());
        table.push('\n');
    }

    let mut csv = String::from("label,protocol,mean,std,mean_dv_sq,mean_da_sq,min_cycle_amp\n");
    for r in reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            if r.label.is_empty() { &r.policy_hash[..12] } else { r.label.as_str() },
            r.protocol.kind.name(),
            r.mean,
            r.std,
            r.mean_dv_sq,
            r.mean_da_sq,
            r.min_cycle_amp
        ));
    }
    Ok((table, csv))
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let p = &self.protocol;
        let (noise_std, mass_scale, push) = match &p.kind {
            ProtocolKind::NoNoise => (0.0, 1.0, None),
            ProtocolKind::ActionNoise { std } => (*std, 1.0, None),
            ProtocolKind::MassPerturb { scale } => (0.0, *scale, None),
            ProtocolKind::Pushes(push) => (0.0, 1.0, Some(push)),
        };
        let mut out = format!("evalreport {EVALREPORT_FORMAT_VERSION}\n");
        out.push_str(&format!("label {}\n", self.label));
        out.push_str(&format!("env_id {}\n", self.env_id));
        out.push_str(&format!("policy_hash {}\n", self.policy_hash));
        out.push_str(&format!("protocol {}\n", p.kind.name()));
        out.push_str(&format!("action_noise_std {}\n", fmt_f64(noise_std)));
        out.push_str(&format!("mass_scale {}\n", fmt_f64(mass_scale)));
        match push {
            Some(push) => {
                out.push_str(&format!("push_force {}\n", fmt_f64_csv(&push.force)));
                out.push_str(&format!("push_duration_steps {}\n", push.duration_steps));
                out.push_str(&format!("push_period_steps {}\n", push.period_steps));
            }
            None => {
                out.push_str("push_force -\n");
                out.push_str("push_duration_steps 0\n");
                out.push_str("push_period_steps 0\n");
            }
        }
        out.push_str(&format!("horizon {}\n", p.horizon));
        out.push_str(&format!("phases {}\n", p.phases));
        out.push_str(&format!("episodes_per_phase {}\n", p.episodes_per_phase));
        out.push_str(&format!(
            "command {}\n",
            p.command.map_or("-".to_string(), fmt_f64)
        ));
        out.push_str(&format!("seed {}\n", p.seed));
        out.push_str(&format!("provenance_command {}\n", self.command_line));
        out.push_str(&format!("episodes {}\n", self.episodes.len()));
        for e in &self.episodes {
            out.push_str(&format!(
                "episode {} {} {} {} {} {} {}\n",
                fmt_f64(e.phase),
                e.rep,
                e.steps,
                fmt_f64(e.cumulative_reward),
                fmt_f64(e.mean_dv_sq),
                fmt_f64(e.mean_da_sq),
                fmt_f64(e.min_cycle_amp)
            ));
        }
        out.push_str(&format!("mean {}\n", fmt_f64(self.mean)));
        out.push_str(&format!("std {}\n", fmt_f64(self.std)));
        out.push_str(&format!("mean_dv_sq {}\n", fmt_f64(self.mean_dv_sq)));
        out.push_str(&format!("mean_da_sq {}\n", fmt_f64(self.mean_da_sq)));
        out.push_str(&format!("min_cycle_amp {}\n", fmt_f64(self.min_cycle_amp)));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let mut field = |name: &'static str| -> Result<(usize, String)> {
            match lines.next() {
                Some((idx, line)) => {
                    let lineno = idx + 1;
                    if line == name {
                        return Ok((lineno, String::new()));
                    }
                    line.strip_prefix(&format!("{name} "))
                        .map(|rest| (lineno, rest.to_string()))
                        .ok_or_else(|| {
                            Error::parse(path, lineno, format!("expected field {name:?}, found {line:?}"))
                        })
                }
                None => Err(Error::parse(path, 0, format!("file ends before field {name:?}"))),
            }
        };

        let (_, version) = field("evalreport")?;
        if version != EVALREPORT_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
                expected: EVALREPORT_FORMAT_VERSION.to_string(),
            });
        }
        let (_, label) = field("label")?;
        let (_, env_id) = field("env_id")?;
        let (_, policy_hash) = field("policy_hash")?;
        let (_, protocol_name) = field("protocol")?;
        let (line, noise) = field("action_noise_std")?;
        let noise = parse_f64(path, line, "action_noise_std", &noise)?;
        let (line, mass) = field("mass_scale")?;
        let mass = parse_f64(path, line, "mass_scale", &mass)?;
        let (line, force) = field("push_force")?;
        let force = if force == "-" {
            None
        } else {
            Some(parse_f64_list(path, line, "push_force", &force, ',')?)
        };
        let (line, dur) = field("push_duration_steps")?;
        let dur = parse_usize(path, line, "push_duration_steps", &dur)?;
        let (line, per) = field("push_period_steps")?;
        let per = parse_usize(path, line, "push_period_steps", &per)?;
        let (line, horizon) = field("horizon")?;
        let horizon = parse_usize(path, line, "horizon", &horizon)?;
        let (line, phases) = field("phases")?;
        let phases = parse_usize(path, line, "phases", &phases)?;
        let (line, reps) = field("episodes_per_phase")?;
        let reps = parse_usize(path, line, "episodes_per_phase", &reps)?;
        let (line, command) = field("command")?;
        let command = if command == "-" {
            None
        } else {
            Some(parse_f64(path, line, "command", &command)?)
        };
        let (line, seed) = field("seed")?;
        let seed = parse_u64(path, line, "seed", &seed)?;
        let (_, command_line) = field("provenance_command")?;
        let (line, n_eps) = field("episodes")?;
        let n_eps = parse_usize(path, line, "episodes", &n_eps)?;

        let kind = match protocol_name.as_str() {
            "none" => ProtocolKind::NoNoise,
            "action-noise" => ProtocolKind::ActionNoise { std: noise },
            "mass" => ProtocolKind::MassPerturb { scale: mass },
            "pushes" => ProtocolKind::Pushes(PushConfig {
                force: force.unwrap_or_default(),
                duration_steps: dur,
                period_steps: per,
            }),
            other => {
                return Err(Error::parse(path, 5, format!("unknown protocol {other:?}")));
            }
        };

        let mut episodes = Vec::with_capacity(n_eps);
        for _ in 0..n_eps {
            let (line, rec) = field("episode")?;
            let toks: Vec<&str> = rec.split(' ').collect();
            if toks.len() != 7 {
                return Err(Error::parse(path, line, "episode record needs 7 fields"));
            }
            episodes.push(EpisodeResult {
                phase: parse_f64(path, line, "episode.phase", toks[0])?,
                rep: parse_usize(path, line, "episode.rep", toks[1])?,
                steps: parse_usize(path, line, "episode.steps", toks[2])?,
                cumulative_reward: parse_f64(path, line, "episode.reward", toks[3])?,
                mean_dv_sq: parse_f64(path, line, "episode.dv", toks[4])?,
                mean_da_sq: parse_f64(path, line, "episode.da", toks[5])?,
                min_cycle_amp: parse_f64(path, line, "episode.amp", toks[6])?,
            });
        }
        let (line, mean) = field("mean")?;
        let mean = parse_f64(path, line, "mean", &mean)?;
        let (line, std) = field("std")?;
        let std = parse_f64(path, line, "std", &std)?;
        let (line, dv) = field("mean_dv_sq")?;
        let mean_dv_sq = parse_f64(path, line, "mean_dv_sq", &dv)?;
        let (line, da) = field("mean_da_sq")?;
        let mean_da_sq = parse_f64(path, line, "mean_da_sq", &da)?;
        let (line, amp) = field("min_cycle_amp")?;
        let min_cycle_amp = parse_f64(path, line, "min_cycle_amp", &amp)?;

        Ok(EvalReport {
            label,
            env_id,
            policy_hash,
            protocol: EvalProtocol {
                kind,
                horizon,
                phases,
                episodes_per_phase: reps,
                command,
                seed,
            },
            command_line,
            episodes,
            mean,
            std,
            mean_dv_sq,
            mean_da_sq,
            min_cycle_amp,
        })
    }
}
