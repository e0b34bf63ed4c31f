//! Deterministic Action Stochastic State datasets.
//!
//! A dataset captures a teacher policy as tuples `(s, m(s))`: the states are
//! visited by *executing the stochastic policy* (so the data covers a tube
//! around the limit cycle, including the feedback needed to return to it),
//! while the recorded actions are the noise-free means. The noise-free
//! variant (`collect_cloning`) executes the mean instead and serves as the
//! behavior-cloning baseline: it only ever sees the cycle itself.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;
use crate::rng::Stream;
use crate::textio::{fmt_f64_csv, fmt_f64_slice, hex, parse_f64, parse_f64_list, parse_u64, parse_usize};

pub const DASS_FORMAT_VERSION: &str = "v1";

/// One (state, deterministic mean action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DassTuple {
    pub obs: Vec<f64>,
    pub mean_action: Vec<f64>,
}

/// Lineage of one collection run.
#[derive(Debug, Clone, PartialEq)]
pub struct DassSource {
    pub teacher_hash: String,
    /// Std of the action noise executed during collection (0 for cloning).
    pub noise_std: f64,
    pub seed: u64,
    pub terminations: u64,
    pub tuples: usize,
}

/// Teacher-side metadata a student needs: normalization and log_std are
/// copied into distilled policies.
#[derive(Debug, Clone, PartialEq)]
pub struct DassProvenance {
    pub sources: Vec<DassSource>,
    pub log_std: Vec<f64>,
    pub obs_shift: Vec<f64>,
    pub obs_scale: Vec<f64>,
    /// Command line that produced the file (may be empty for in-memory use).
    pub command: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DassDataset {
    pub env_id: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub tuples: Vec<DassTuple>,
    pub provenance: DassProvenance,
}

/// Per-dimension statistics over the stored states.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn check_compat(teacher: &GaussianPolicy, env: &dyn Environment) -> Result<()> {
    if teacher.env_id() != env.env_id() {
        return Err(Error::invalid_argument(format!(
            "teacher is for env {:?}, environment is {:?}",
            teacher.env_id(),
            env.env_id()
        )));
    }
    if teacher.obs_dim() != env.obs_dim() || teacher.act_dim() != env.act_dim() {
        return Err(Error::invalid_argument(
            "teacher and environment dimensions do not match",
        ));
    }
    Ok(())
}

fn collect_impl(
    teacher: &GaussianPolicy,
    env: &mut dyn Environment,
    n: usize,
    rng: &mut Stream,
    stochastic: bool,
    seed_label: u64,
) -> Result<DassDataset> {
    check_compat(teacher, env)?;
    if n == 0 {
        return Err(Error::invalid_argument("need at least one tuple"));
    }
    let mut tuples = Vec::with_capacity(n);
    let mut terminations = 0u64;
    let mut obs = env.reset(rng);
    for _ in 0..n {
        let mean = teacher.mean(&obs)?;
        let executed = if stochastic {
            teacher.sample(&obs, rng)?
        } else {
            mean.clone()
        };
        tuples.push(DassTuple {
            obs: obs.clone(),
            mean_action: mean,
        });
        let step = env.step(&executed)?;
        if step.done {
            terminations += 1;
        }
        obs = if step.done || step.truncated {
            env.reset(rng)
        } else {
            step.obs
        };
    }
    let noise_std = if stochastic {
        let k = teacher.log_std().len() as f64;
        teacher.log_std().iter().map(|ls| ls.exp()).sum::<f64>() / k
    } else {
        0.0
    };
    Ok(DassDataset {
        env_id: env.env_id().to_string(),
        obs_dim: env.obs_dim(),
        act_dim: env.act_dim(),
        tuples,
        provenance: DassProvenance {
            sources: vec![DassSource {
                teacher_hash: teacher.content_hash(),
                noise_std,
                seed: seed_label,
                terminations,
                tuples: n,
            }],
            log_std: teacher.log_std().to_vec(),
            obs_shift: teacher.obs_shift().to_vec(),
            obs_scale: teacher.obs_scale().to_vec(),
            command: String::new(),
        },
    })
}

/// Collect `n` tuples: record the mean, execute the stochastic policy,
/// reset from the initial state distribution whenever an episode ends.
pub fn collect(
    teacher: &GaussianPolicy,
    env: &mut dyn Environment,
    n: usize,
    rng: &mut Stream,
    seed_label: u64,
) -> Result<DassDataset> {
    collect_impl(teacher, env, n, rng, true, seed_label)
}

/// Behavior-cloning baseline: identical to [`collect`] but the executed
/// action is the mean itself (no injected noise).
pub fn collect_cloning(
    teacher: &GaussianPolicy,
    env: &mut dyn Environment,
    n: usize,
    rng: &mut Stream,
    seed_label: u64,
) -> Result<DassDataset> {
    collect_impl(teacher, env, n, rng, false, seed_label)
}

/// Union of datasets over the same environment, order preserving.
pub fn merge(datasets: &[&DassDataset]) -> Result<DassDataset> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::invalid_argument("merge needs at least one dataset"))?;
    for d in datasets {
        if d.env_id != first.env_id || d.obs_dim != first.obs_dim || d.act_dim != first.act_dim {
            return Err(Error::invalid_argument(format!(
                "cannot merge datasets for {:?} and {:?}",
                first.env_id, d.env_id
            )));
        }
    }
    let total: usize = datasets.iter().map(|d| d.tuples.len()).sum();
    let mut tuples = Vec::with_capacity(total);
    let mut sources = Vec::new();
    let mut log_std = vec![0.0; first.provenance.log_std.len()];
    let mut obs_shift = vec![0.0; first.obs_dim];
    let mut obs_scale = vec![0.0; first.obs_dim];
    for d in datasets {
        tuples.extend(d.tuples.iter().cloned());
        sources.extend(d.provenance.sources.iter().cloned());
        // Tuple-count-weighted pooling; exact copy when all parents agree.
        let w = d.tuples.len() as f64 / total as f64;
        for (acc, v) in log_std.iter_mut().zip(&d.provenance.log_std) {
            *acc += w * v;
        }
        for (acc, v) in obs_shift.iter_mut().zip(&d.provenance.obs_shift) {
            *acc += w * v;
        }
        for (acc, v) in obs_scale.iter_mut().zip(&d.provenance.obs_scale) {
            *acc += w * v;
        }
    }
    // Bit-exact passthrough for the common single-teacher pipelines.
    if datasets
        .iter()
        .all(|d| d.provenance.log_std == first.provenance.log_std
            && d.provenance.obs_shift == first.provenance.obs_shift
            && d.provenance.obs_scale == first.provenance.obs_scale)
    {
        log_std = first.provenance.log_std.clone();
        obs_shift = first.provenance.obs_shift.clone();
        obs_scale = first.provenance.obs_scale.clone();
    }
    Ok(DassDataset {
        env_id: first.env_id.clone(),
        obs_dim: first.obs_dim,
        act_dim: first.act_dim,
        tuples,
        provenance: DassProvenance {
            sources,
            log_std,
            obs_shift,
            obs_scale,
            command: String::new(),
        },
    })
}

/// Shuffle and split off `n_validation` tuples: disjoint and exhaustive.
pub fn split(
    dataset: &DassDataset,
    n_validation: usize,
    rng: &mut Stream,
) -> Result<(DassDataset, DassDataset)> {
    let n = dataset.tuples.len();
    if n_validation == 0 || n_validation >= n {
        return Err(Error::invalid_argument(format!(
            "n_validation must lie in (0, {n}), got {n_validation}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let pick = |idx: &[usize]| DassDataset {
        env_id: dataset.env_id.clone(),
        obs_dim: dataset.obs_dim,
        act_dim: dataset.act_dim,
        tuples: idx.iter().map(|&i| dataset.tuples[i].clone()).collect(),
        provenance: DassProvenance {
            command: String::new(),
            ..dataset.provenance.clone()
        },
    };
    let validation = pick(&order[..n_validation]);
    let train = pick(&order[n_validation..]);
    Ok((train, validation))
}

/// Per-dimension mean/variance/min/max over the stored states.
pub fn coverage_stats(dataset: &DassDataset) -> CoverageStats {
    let dim = dataset.obs_dim;
    let n = dataset.tuples.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for t in &dataset.tuples {
        for (i, v) in t.obs.iter().enumerate() {
            mean[i] += v;
            min[i] = min[i].min(*v);
            max[i] = max[i].max(*v);
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut variance = vec![0.0; dim];
    for t in &dataset.tuples {
        for (i, v) in t.obs.iter().enumerate() {
            let d = v - mean[i];
            variance[i] += d * d;
        }
    }
    for v in variance.iter_mut() {
        *v /= n;
    }
    CoverageStats {
        mean,
        variance,
        min,
        max,
    }
}

impl DassDataset {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    fn header_line(&self, with_command: bool) -> String {
        let sources: Vec<String> = self
            .provenance
            .sources
            .iter()
            .map(|s| {
                format!(
                    "{}:{}:{}:{}:{}",
                    s.teacher_hash,
                    crate::textio::fmt_f64(s.noise_std),
                    s.seed,
                    s.terminations,
                    s.tuples
                )
            })
            .collect();
        let mut line = format!(
            "dass {DASS_FORMAT_VERSION} env_id={} obs_dim={} act_dim={} tuples={} log_std={} obs_shift={} obs_scale={} sources={}",
            self.env_id,
            self.obs_dim,
            self.act_dim,
            self.tuples.len(),
            fmt_f64_csv(&self.provenance.log_std),
            fmt_f64_csv(&self.provenance.obs_shift),
            fmt_f64_csv(&self.provenance.obs_scale),
            sources.join(","),
        );
        if with_command {
            line.push_str(&format!(" command={}", self.provenance.command));
        }
        line
    }

    /// sha256 over the canonical serialization, command line excluded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.header_line(false).as_bytes());
        hasher.update(b"\n");
        for t in &self.tuples {
            hasher.update(fmt_f64_slice(&t.obs).as_bytes());
            hasher.update(b" ");
            hasher.update(fmt_f64_slice(&t.mean_action).as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.header_line(true);
        out.push('\n');
        for t in &self.tuples {
            out.push_str(&fmt_f64_slice(&t.obs));
            out.push(' ');
            out.push_str(&fmt_f64_slice(&t.mean_action));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DassDataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?;

        let rest = header
            .strip_prefix("dass ")
            .ok_or_else(|| Error::parse(path, 1, "not a dass dataset file"))?;
        let (version, rest) = rest
            .split_once(' ')
            .ok_or_else(|| Error::parse(path, 1, "truncated header"))?;
        if version != DASS_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version.to_string(),
                expected: DASS_FORMAT_VERSION.to_string(),
            });
        }

        // `command=` soaks up the rest of the line (it may contain spaces).
        let (fields_part, command) = match rest.split_once(" command=") {
            Some((f, c)) => (f, c.to_string()),
            None => (rest, String::new()),
        };

        let mut env_id = None;
        let mut obs_dim = None;
        let mut act_dim = None;
        let mut n_tuples = None;
        let mut log_std = None;
        let mut obs_shift = None;
        let mut obs_scale = None;
        let mut sources_raw = None;
        for token in fields_part.split(' ') {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::parse(path, 1, format!("malformed header token {token:?}"))
            })?;
            match key {
                "env_id" => env_id = Some(value.to_string()),
                "obs_dim" => obs_dim = Some(parse_usize(path, 1, key, value)?),
                "act_dim" => act_dim = Some(parse_usize(path, 1, key, value)?),
                "tuples" => n_tuples = Some(parse_usize(path, 1, key, value)?),
                "log_std" => log_std = Some(parse_f64_list(path, 1, key, value, ',')?),
                "obs_shift" => obs_shift = Some(parse_f64_list(path, 1, key, value, ',')?),
                "obs_scale" => obs_scale = Some(parse_f64_list(path, 1, key, value, ',')?),
                "sources" => sources_raw = Some(value.to_string()),
                _ => {
                    return Err(Error::parse(
                        path,
                        1,
                        format!("unknown header field {key:?}"),
                    ))
                }
            }
        }
        let missing = |field: &str| Error::parse(path, 1, format!("missing header field {field:?}"));
        let env_id = env_id.ok_or_else(|| missing("env_id"))?;
        let obs_dim = obs_dim.ok_or_else(|| missing("obs_dim"))?;
        let act_dim = act_dim.ok_or_else(|| missing("act_dim"))?;
        let n_tuples = n_tuples.ok_or_else(|| missing("tuples"))?;
        let log_std = log_std.ok_or_else(|| missing("log_std"))?;
        let obs_shift = obs_shift.ok_or_else(|| missing("obs_shift"))?;
        let obs_scale = obs_scale.ok_or_else(|| missing("obs_scale"))?;
        let sources_raw = sources_raw.ok_or_else(|| missing("sources"))?;

        let mut sources = Vec::new();
        for part in sources_raw.split(',') {
            let bits: Vec<&str> = part.split(':').collect();
            if bits.len() != 5 {
                return Err(Error::parse(
                    path,
                    1,
                    format!("malformed source record {part:?}"),
                ));
            }
            sources.push(DassSource {
                teacher_hash: bits[0].to_string(),
                noise_std: parse_f64(path, 1, "sources", bits[1])?,
                seed: parse_u64(path, 1, "sources", bits[2])?,
                terminations: parse_u64(path, 1, "sources", bits[3])?,
                tuples: parse_usize(path, 1, "sources", bits[4])?,
            });
        }

        let mut tuples = Vec::with_capacity(n_tuples);
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| parse_f64(path, lineno, "tuple", t))
                .collect::<Result<_>>()?;
            if values.len() != obs_dim + act_dim {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "tuple has {} values, expected {}",
                        values.len(),
                        obs_dim + act_dim
                    ),
                ));
            }
            tuples.push(DassTuple {
                obs: values[..obs_dim].to_vec(),
                mean_action: values[obs_dim..].to_vec(),
            });
        }
        if tuples.len() != n_tuples {
            return Err(Error::parse(
                path,
                1,
                format!("header declares {n_tuples} tuples, file has {}", tuples.len()),
            ));
        }

        Ok(DassDataset {
            env_id,
            obs_dim,
            act_dim,
            tuples,
            provenance: DassProvenance {
                sources,
                log_std,
                obs_shift,
                obs_scale,
                command,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, Cycler, CyclerConfig};
    use crate::net::Mlp;
    use crate::rng;
    use crate::test_util::AlwaysDone;

    /// Zero-mean teacher: the PD loop alone keeps the mass near the circle,
    /// so low-noise collections hug the limit cycle.
    fn zero_teacher() -> GaussianPolicy {
        crate::test_util::zero_teacher("cycler", 8, 2)
    }

    #[test]
    fn collect_records_exact_teacher_means() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(0, "collect");
        let ds = collect(&teacher, env.as_mut(), 50, &mut r, 0).unwrap();
        assert_eq!(ds.len(), 50);
        for t in &ds.tuples {
            let requery = teacher.mean(&t.obs).unwrap();
            assert_eq!(requery, t.mean_action, "tuple exactness is bitwise");
        }
    }

    #[test]
    fn collect_is_reproducible() {
        let teacher = zero_teacher();
        let run = || {
            let mut env = make_env("cycler").unwrap();
            let mut r = rng::stream(3, "collect");
            collect(&teacher, env.as_mut(), 40, &mut r, 3).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cloning_records_what_it_executes() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(1, "collect");
        let ds = collect_cloning(&teacher, env.as_mut(), 30, &mut r, 1).unwrap();
        assert_eq!(ds.provenance.sources[0].noise_std, 0.0);
        for t in &ds.tuples {
            assert_eq!(t.mean_action, teacher.mean(&t.obs).unwrap());
        }
    }

    #[test]
    fn stochastic_states_cover_more_than_cloned_states() {
        let teacher = zero_teacher();
        let quiet = teacher.clone().with_log_std(vec![-30.0, -30.0]).unwrap();

        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(2, "collect");
        let noisy = collect(&teacher, env.as_mut(), 600, &mut r, 2).unwrap();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(2, "collect");
        let tight = collect(&quiet, env.as_mut(), 600, &mut r, 2).unwrap();

        let noisy_stats = coverage_stats(&noisy);
        let tight_stats = coverage_stats(&tight);
        for &d in &env.velocity_dims() {
            assert!(
                noisy_stats.variance[d] >= tight_stats.variance[d],
                "velocity dim {d}: {} < {}",
                noisy_stats.variance[d],
                tight_stats.variance[d]
            );
        }
    }

    #[test]
    fn terminating_every_step_counts_resets() {
        let teacher = zero_teacher();
        let mut env = AlwaysDone(make_env("cycler").unwrap());
        let mut r = rng::stream(4, "collect");
        let ds = collect(&teacher, &mut env, 3, &mut r, 4).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.provenance.sources[0].terminations, 3);
    }

    #[test]
    fn merge_concatenates_and_checks_env() {
        let teacher = zero_teacher();
        let collect_at = |cmd: f64, seed: u64| {
            let mut env = Cycler::new(CyclerConfig {
                command_min: cmd,
                command_max: cmd,
                ..CyclerConfig::default()
            })
            .unwrap();
            let mut r = rng::stream(seed, "collect");
            collect(&teacher, &mut env, 40, &mut r, seed).unwrap()
        };
        let d1 = collect_at(0.3, 0);
        let d2 = collect_at(0.5, 1);
        let d3 = collect_at(0.8, 2);

        let merged = merge(&[&d1, &d2, &d3]).unwrap();
        assert_eq!(merged.len(), 120);
        assert_eq!(merge(&[&d1]).unwrap().tuples, d1.tuples);

        // The command is implicit in the state: |ref velocity| = R * 2 pi c.
        let tau = std::f64::consts::TAU;
        for (k, expect) in [(0usize, 0.3f64), (40, 0.5), (80, 0.8)] {
            let obs = &merged.tuples[k + 5].obs;
            let speed = (obs[6] * obs[6] + obs[7] * obs[7]).sqrt();
            let cmd = speed / tau;
            assert!((cmd - expect).abs() < 1e-9, "recovered {cmd} vs {expect}");
        }

        let mut env = make_env("pendulum-track").unwrap();
        let pend_teacher =
            GaussianPolicy::new("pendulum-track", Mlp::zeros(&[4, 1]).unwrap(), -2.0);
        let mut r = rng::stream(9, "collect");
        let dp = collect(&pend_teacher, env.as_mut(), 10, &mut r, 9).unwrap();
        assert!(matches!(
            merge(&[&d1, &dp]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_reproducible() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(5, "collect");
        let ds = collect(&teacher, env.as_mut(), 100, &mut r, 5).unwrap();

        let mut r1 = rng::stream(6, "split");
        let (train, val) = split(&ds, 30, &mut r1).unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(val.len(), 30);

        let key = |t: &DassTuple| {
            t.obs
                .iter()
                .chain(&t.mean_action)
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        let mut all: Vec<_> = train.tuples.iter().chain(&val.tuples).map(key).collect();
        all.sort();
        let mut orig: Vec<_> = ds.tuples.iter().map(key).collect();
        orig.sort();
        assert_eq!(all, orig);

        let mut r2 = rng::stream(6, "split");
        let (train2, val2) = split(&ds, 30, &mut r2).unwrap();
        assert_eq!(train.tuples, train2.tuples);
        assert_eq!(val.tuples, val2.tuples);

        assert!(split(&ds, 0, &mut r1).is_err());
        assert!(split(&ds, 100, &mut r1).is_err());
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(7, "collect");
        let mut ds = collect(&teacher, env.as_mut(), 20, &mut r, 7).unwrap();
        ds.provenance.command = "collect --env cycler --n 20".into();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.dass");
        let p2 = dir.path().join("b.dass");
        ds.save(&p1).unwrap();
        let loaded = DassDataset::load(&p1).unwrap();
        assert_eq!(loaded, ds);
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.content_hash(), ds.content_hash());
    }

    #[test]
    fn malformed_tuple_line_reports_line_number() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(8, "collect");
        let ds = collect(&teacher, env.as_mut(), 5, &mut r, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.dass");
        ds.save(&path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("dass v1", "dass v1", 1);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = "0.1 0.2 not-a-number".into();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match DassDataset::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(8, "collect");
        let ds = collect(&teacher, env.as_mut(), 5, &mut r, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.dass");
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("dass v1", "dass v7", 1)).unwrap();
        assert!(matches!(
            DassDataset::load(&path),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn coverage_stats_match_naive_recomputation() {
        let teacher = zero_teacher();
        let mut env = make_env("cycler").unwrap();
        let mut r = rng::stream(10, "collect");
        let ds = collect(&teacher, env.as_mut(), 64, &mut r, 10).unwrap();
        let stats = coverage_stats(&ds);
        for d in 0..ds.obs_dim {
            let vals: Vec<f64> = ds.tuples.iter().map(|t| t.obs[d]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            assert!((stats.mean[d] - mean).abs() < 1e-12);
            assert!((stats.variance[d] - var).abs() < 1e-12);
            assert_eq!(
                stats.min[d],
                vals.iter().cloned().fold(f64::INFINITY, f64::min)
            );
            assert_eq!(
                stats.max[d],
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            );
        }
    }

    #[test]
    fn single_tuple_stats_have_zero_variance() {
        let ds = DassDataset {
            env_id: "cycler".into(),
            obs_dim: 2,
            act_dim: 1,
            tuples: vec![DassTuple {
                obs: vec![0.5, -1.5],
                mean_action: vec![0.25],
            }],
            provenance: DassProvenance {
                sources: vec![],
                log_std: vec![-2.0],
                obs_shift: vec![0.0, 0.0],
                obs_scale: vec![1.0, 1.0],
                command: String::new(),
            },
        };
        let stats = coverage_stats(&ds);
        assert_eq!(stats.mean, vec![0.5, -1.5]);
        assert_eq!(stats.variance, vec![0.0, 0.0]);
        assert_eq!(stats.min, stats.max);
    }
}
