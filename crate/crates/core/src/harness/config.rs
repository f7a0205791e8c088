//! Plain-text `key = value` run configuration.
//!
//! Recognized keys (all optional unless noted):
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `class_file` | path to a class file (relative to the config file) | generated class |
//! | `class_kind` | `uniform`, `gapped` or `separated` | `uniform` |
//! | `num_functions`, `num_contexts`, `num_actions` | generated class shape | 20, 4, 5 |
//! | `bound` | reward bound `B` of a generated class | 1 |
//! | `min_gap` | per-context best-vs-second gap of the truth (`gapped`) | 0.2 |
//! | `margin` | per-cell separation from the truth (`separated`) | 0.3 |
//! | `class_seed` | seed of the class generator | the run seed |
//! | `truth_id` | row of the class used as the true mean | 0 |
//! | `contexts` | `iid`, `cycle` or `list:2,0,1,...` | `iid` |
//! | `noise` | `rademacher`, `truncated_gaussian` or `zero` | `rademacher` |
//! | `sigma`, `sigma_list`, `sigma_phase` | noise scale schedule (exactly one) | `sigma = 0` |
//! | `horizon` | number of rounds (required) | |
//! | `seed` | run seed | 0 |
//! | `policy` | `ols`, `sols_known`, `sols_estimated`, `sols_unknown`, `greedy`, `uniform` | `ols` |
//! | `sigma2` | variance bound for `sols_known` | |
//! | `delta` | confidence parameter | 0.1 |
//! | `c`, `c_prime`, `c_sigma` | radius constants | 1 |
//! | `per_round_union` | per-round δ split for threshold sets | `false` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::environment::{ContextProcess, NoiseKind, NoiseModel, SigmaSchedule};
use crate::error::{Error, Result};
use crate::policies::{PolicyKind, PolicyParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassKind {
    Uniform,
    Gapped { min_gap: f64 },
    Separated { margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassSource {
    File(PathBuf),
    Generated {
        kind: ClassKind,
        num_functions: usize,
        num_contexts: usize,
        num_actions: usize,
        bound: f64,
        /// `None` derives the class from the run seed.
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub class: ClassSource,
    pub truth: usize,
    pub contexts: ContextProcess,
    pub noise: NoiseModel,
    pub horizon: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    /// Variance bound handed to `sols_known` (kept so sweeps can switch policies).
    pub sigma2: Option<f64>,
    pub delta: f64,
    pub c: f64,
    pub c_prime: f64,
    pub c_sigma: f64,
    pub per_round_union: bool,
}

impl RunConfig {
    /// Defaults for everything except the horizon.
    pub fn new(horizon: usize) -> Self {
        Self {
            class: ClassSource::Generated {
                kind: ClassKind::Uniform,
                num_functions: 20,
                num_contexts: 4,
                num_actions: 5,
                bound: 1.0,
                seed: None,
            },
            truth: 0,
            contexts: ContextProcess::IidUniform,
            noise: NoiseModel {
                kind: NoiseKind::Rademacher,
                schedule: SigmaSchedule::Constant(0.0),
            },
            horizon,
            seed: 0,
            policy: PolicyKind::Ols,
            sigma2: None,
            delta: 0.1,
            c: 1.0,
            c_prime: 1.0,
            c_sigma: 1.0,
            per_round_union: false,
        }
    }

    pub fn policy_params(&self, bound: f64) -> PolicyParams {
        let mut p = PolicyParams::new(bound, self.delta);
        p.radius.c = self.c;
        p.radius.c_prime = self.c_prime;
        p.radius.per_round_union = self.per_round_union;
        p.c_sigma = self.c_sigma;
        p
    }

    /// Same configuration with another policy, reusing `sigma2` for `sols_known`.
    pub fn with_policy(&self, name: &str) -> Result<Self> {
        let mut c = self.clone();
        c.policy = PolicyKind::parse(name, self.sigma2)?;
        Ok(c)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses config text; `base` resolves relative `class_file` paths.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = k.trim().to_string();
            if entries
                .insert(key.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        let mut reader = Reader {
            entries,
            origin: origin.to_path_buf(),
        };
        let cfg = reader.build(base)?;
        if let Some((key, (line, _))) = reader.entries.iter().next() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: *line,
                msg: format!("unknown key {key:?}"),
            });
        }
        Ok(cfg)
    }
}

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    origin: PathBuf,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn err(&self, line: usize, msg: String) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line,
            msg,
        }
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.err(line, format!("bad value for {key}: {v:?} ({e})"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, line: usize, v: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| self.err(line, format!("bad entry {s:?} in {key}: {e}")))
            })
            .collect()
    }

    fn build(&mut self, base: &Path) -> Result<RunConfig> {
        let horizon: usize = self
            .get("horizon")?
            .ok_or_else(|| Error::Config("missing required key `horizon`".into()))?;
        let mut cfg = RunConfig::new(horizon);

        let kind = match self.take("class_kind") {
            None => ClassKind::Uniform,
            Some((line, v)) => match v.as_str() {
                "uniform" => ClassKind::Uniform,
                "gapped" => ClassKind::Gapped {
                    min_gap: self.get("min_gap")?.unwrap_or(0.2),
                },
                "separated" => ClassKind::Separated {
                    margin: self.get("margin")?.unwrap_or(0.3),
                },
                other => return Err(self.err(line, format!("unknown class_kind {other:?}"))),
            },
        };
        let generated = ClassSource::Generated {
            kind,
            num_functions: self.get("num_functions")?.unwrap_or(20),
            num_contexts: self.get("num_contexts")?.unwrap_or(4),
            num_actions: self.get("num_actions")?.unwrap_or(5),
            bound: self.get("bound")?.unwrap_or(1.0),
            seed: self.get("class_seed")?,
        };
        cfg.class = match self.take("class_file") {
            Some((_, path)) => ClassSource::File(base.join(path)),
            None => generated,
        };

        cfg.truth = self.get("truth_id")?.unwrap_or(0);
        if let Some((line, v)) = self.take("contexts") {
            cfg.contexts = match v.as_str() {
                "iid" => ContextProcess::IidUniform,
                "cycle" => ContextProcess::Cycle,
                s if s.starts_with("list:") => {
                    ContextProcess::Listed(self.list("contexts", line, &s["list:".len()..])?)
                }
                other => return Err(self.err(line, format!("unknown contexts {other:?}"))),
            };
        }

        if let Some((line, v)) = self.take("noise") {
            cfg.noise.kind = v.parse().map_err(|e: Error| self.err(line, e.to_string()))?;
        }
        let mut schedules = Vec::new();
        if let Some(s) = self.get::<f64>("sigma")? {
            schedules.push(SigmaSchedule::Constant(s));
        }
        if let Some((line, v)) = self.take("sigma_list") {
            schedules.push(SigmaSchedule::Listed(self.list("sigma_list", line, &v)?));
        }
        if let Some((line, v)) = self.take("sigma_phase") {
            let mut phases = Vec::new();
            for piece in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (until, s) = piece
                    .split_once(':')
                    .ok_or_else(|| self.err(line, format!("sigma_phase piece {piece:?} needs T:s")))?;
                let until = until
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| self.err(line, format!("bad round in {piece:?}: {e}")))?;
                let s = s
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| self.err(line, format!("bad sigma in {piece:?}: {e}")))?;
                phases.push((until, s));
            }
            schedules.push(SigmaSchedule::Phases(phases));
        }
        match schedules.len() {
            0 => {}
            1 => cfg.noise.schedule = schedules.pop().expect("one schedule"),
            _ => {
                return Err(Error::Config(
                    "give at most one of sigma, sigma_list, sigma_phase".into(),
                ))
            }
        }

        cfg.seed = self.get("seed")?.unwrap_or(0);
        cfg.sigma2 = self.get("sigma2")?;
        if let Some((line, v)) = self.take("policy") {
            cfg.policy =
                PolicyKind::parse(&v, cfg.sigma2).map_err(|e| self.err(line, e.to_string()))?;
        }
        cfg.delta = self.get("delta")?.unwrap_or(0.1);
        cfg.c = self.get("c")?.unwrap_or(1.0);
        cfg.c_prime = self.get("c_prime")?.unwrap_or(1.0);
        cfg.c_sigma = self.get("c_sigma")?.unwrap_or(1.0);
        cfg.per_round_union = self.get("per_round_union")?.unwrap_or(false);
        Ok(cfg)
    }
}
