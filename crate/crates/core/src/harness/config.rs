//! Flat `key = value` scenario files with dotted section keys.
//!
//! ```text
//! id = planted
//! generator = planted_margin
//! generator.n = 20
//! train.eta0 = 0.1
//! checks = norm_growth, direction
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::loss::LossKind;
use crate::predictors::Activation;
use crate::trainer::{Schedule, SnapshotCadence, TrainConfig};

pub const SEED_ENV: &str = "MARGINLAB_SEED";

/// Parsed `key = value` pairs, with `#` comments and blank lines skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(LabError::config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(LabError::config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| LabError::config(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| LabError::config(format!("`{key}`: cannot parse `{s}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    SymmetricPair,
    /// Points with `min_i y_i theta^T x_i = gamma` exactly, all norms below `radius`.
    PlantedMargin { gamma: f64, n: usize, d: usize, radius: f64 },
    ConflictPair { w_plus: f64, w_minus: f64 },
    /// Separable points with positive first coordinate plus a conflicting pair at `(0, 1)`.
    MixedSepNonsep { n_sep: usize },
    /// Isotropic Gaussians, labels `sign(x_0)`, truncated at `truncation * sigma` from the mean.
    GaussianShift { mu_s: Vec<f64>, mu_t: Vec<f64>, sigma: f64, n: usize, truncation: f64 },
    /// Two Gaussian blobs at `+-center`, one per class.
    TwoClusters { n: usize, center: Vec<f64>, spread: f64 },
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::SymmetricPair => "symmetric_pair",
            Generator::PlantedMargin { .. } => "planted_margin",
            Generator::ConflictPair { .. } => "conflict_pair",
            Generator::MixedSepNonsep { .. } => "mixed_sep_nonsep",
            Generator::GaussianShift { .. } => "gaussian_shift",
            Generator::TwoClusters { .. } => "two_clusters",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::SymmetricPair | Generator::MixedSepNonsep { .. } => 2,
            Generator::PlantedMargin { d, .. } => *d,
            Generator::ConflictPair { .. } => 1,
            Generator::GaussianShift { mu_s, .. } => mu_s.len(),
            Generator::TwoClusters { center, .. } => center.len(),
        }
    }

    pub fn has_ratios(&self) -> bool {
        matches!(self, Generator::GaussianShift { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    Uniform,
    /// `clamp(eta_i, 1/M, M)`.
    AlignedWithRatios { m: f64 },
    /// `clamp(1/eta_i, 1/M, M)`.
    InvertedRatios { m: f64 },
    /// Log-uniform on `[1/M, M]`.
    RandomBox { m: f64 },
    Explicit { values: Vec<f64>, m: Option<f64> },
    /// Weights chosen by the generator (the conflict pair's `w_plus, w_minus`).
    FromGenerator,
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::AlignedWithRatios { .. } => "aligned",
            WeightScheme::InvertedRatios { .. } => "inverted",
            WeightScheme::RandomBox { .. } => "random_box",
            WeightScheme::Explicit { .. } => "explicit",
            WeightScheme::FromGenerator => "generator",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Linear,
    /// Hidden widths; input width comes from the generator and output width is 1.
    Mlp { hidden: Vec<usize>, activation: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    NormGrowth,
    Direction,
    NonsepLimit,
    PathMargin,
    TargetBound,
    Envelope,
}

impl Check {
    pub const ALL: [Check; 6] =
        [Check::NormGrowth, Check::Direction, Check::NonsepLimit, Check::PathMargin, Check::TargetBound, Check::Envelope];

    pub fn name(self) -> &'static str {
        match self {
            Check::NormGrowth => "norm_growth",
            Check::Direction => "direction",
            Check::NonsepLimit => "nonsep_limit",
            Check::PathMargin => "path_margin",
            Check::TargetBound => "target_bound",
            Check::Envelope => "envelope",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Per-check knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Final norm the divergence check requires.
    pub norm_growth_min_norm: f64,
    /// Tolerance on `|P theta(T) - theta_tilde|`.
    pub nonsep_tol: f64,
    /// First step at which the `log^2 t / t` envelope is enforced.
    pub nonsep_rate_from: usize,
    pub path_slack: f64,
    pub path_fraction: f64,
    pub path_floor_c: f64,
    pub path_floor_tau: f64,
    pub bound_delta: f64,
    pub bound_test_samples: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            norm_growth_min_norm: 0.0,
            nonsep_tol: 1e-2,
            nonsep_rate_from: 1000,
            path_slack: 1e-3,
            path_fraction: 0.95,
            path_floor_c: 0.1,
            path_floor_tau: 2.0,
            bound_delta: 0.05,
            bound_test_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub generator: Generator,
    pub weights: WeightScheme,
    pub predictor: PredictorSpec,
    pub train: TrainConfig,
    pub lambda_schedule: Option<Vec<f64>>,
    pub checks: Vec<Check>,
    pub options: CheckOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::config(format!("`{key}` must be positive, got {v}")))
    }
}

fn parse_generator(kv: &KeyValues) -> Result<Generator> {
    let kind = kv.get("generator").ok_or_else(|| LabError::config("missing `generator`"))?;
    Ok(match kind.to_ascii_lowercase().as_str() {
        "symmetric_pair" => Generator::SymmetricPair,
        "planted_margin" => {
            let g = Generator::PlantedMargin {
                gamma: positive("generator.gamma", kv.or("generator.gamma", 0.5)?)?,
                n: kv.or("generator.n", 20)?,
                d: kv.or("generator.d", 2)?,
                radius: positive("generator.radius", kv.or("generator.radius", 5.0)?)?,
            };
            if let Generator::PlantedMargin { gamma, n, d, radius } = g {
                if n < 2 {
                    return Err(LabError::config("planted_margin needs n >= 2"));
                }
                if d < 2 {
                    return Err(LabError::config("planted_margin needs d >= 2"));
                }
                if gamma >= radius {
                    return Err(LabError::config(format!("planted margin {gamma} must be below radius {radius}")));
                }
            }
            g
        }
        "conflict_pair" => Generator::ConflictPair {
            w_plus: positive("generator.w_plus", kv.or("generator.w_plus", 1.0)?)?,
            w_minus: positive("generator.w_minus", kv.or("generator.w_minus", 1.0)?)?,
        },
        "mixed_sep_nonsep" => Generator::MixedSepNonsep { n_sep: kv.or("generator.n_sep", 6)? },
        "gaussian_shift" => {
            let mu_s = kv.list("generator.mu_s")?.unwrap_or_else(|| vec![0.0, 0.0]);
            let mu_t = kv.list("generator.mu_t")?.unwrap_or_else(|| vec![0.5, 0.0]);
            if mu_s.len() != mu_t.len() || mu_s.is_empty() {
                return Err(LabError::config("`generator.mu_s` and `generator.mu_t` need equal, nonzero length"));
            }
            Generator::GaussianShift {
                mu_s,
                mu_t,
                sigma: positive("generator.sigma", kv.or("generator.sigma", 1.0)?)?,
                n: kv.or("generator.n", 200)?,
                truncation: positive("generator.truncation", kv.or("generator.truncation", 10.0)?)?,
            }
        }
        "two_clusters" => {
            let center = kv.list("generator.center")?.unwrap_or_else(|| vec![1.0, 0.5]);
            if center.iter().all(|c| *c == 0.0) {
                return Err(LabError::config("`generator.center` must be nonzero"));
            }
            Generator::TwoClusters {
                n: kv.or("generator.n", 16)?,
                center,
                spread: positive("generator.spread", kv.or("generator.spread", 0.3)?)?,
            }
        }
        other => return Err(LabError::config(format!("unknown generator `{other}`"))),
    })
}

fn parse_weights(kv: &KeyValues, generator: &Generator) -> Result<WeightScheme> {
    let default = if matches!(generator, Generator::ConflictPair { .. }) { "generator" } else { "uniform" };
    let kind = kv.get("weights").unwrap_or(default).to_ascii_lowercase();
    let m = || -> Result<f64> {
        let m: f64 = kv.or("weights.m", 10.0)?;
        if m < 1.0 {
            return Err(LabError::config("`weights.m` must be >= 1"));
        }
        Ok(m)
    };
    let scheme = match kind.as_str() {
        "uniform" => WeightScheme::Uniform,
        "aligned" | "aligned_with_ratios" => WeightScheme::AlignedWithRatios { m: m()? },
        "inverted" | "inverted_ratios" => WeightScheme::InvertedRatios { m: m()? },
        "random_box" => WeightScheme::RandomBox { m: m()? },
        "explicit" => WeightScheme::Explicit {
            values: kv.list("weights.values")?.ok_or_else(|| LabError::config("explicit weights need `weights.values`"))?,
            m: kv.parsed("weights.m")?,
        },
        "generator" => WeightScheme::FromGenerator,
        other => return Err(LabError::config(format!("unknown weight scheme `{other}`"))),
    };
    let needs_ratios = matches!(scheme, WeightScheme::AlignedWithRatios { .. } | WeightScheme::InvertedRatios { .. });
    if needs_ratios && !generator.has_ratios() {
        return Err(LabError::config(format!("weight scheme `{}` needs a generator with density ratios", scheme.name())));
    }
    if scheme == WeightScheme::FromGenerator && !matches!(generator, Generator::ConflictPair { .. }) {
        return Err(LabError::config("generator weights are only defined for conflict_pair"));
    }
    Ok(scheme)
}

fn parse_predictor(kv: &KeyValues) -> Result<PredictorSpec> {
    match kv.get("predictor").unwrap_or("linear").to_ascii_lowercase().as_str() {
        "linear" => Ok(PredictorSpec::Linear),
        "mlp" => {
            let hidden: Vec<usize> = match kv.get("predictor.hidden") {
                Some(v) => v
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| LabError::config(format!("bad hidden width `{s}`"))))
                    .collect::<Result<_>>()?,
                None => vec![16],
            };
            let activation = match kv.get("predictor.activation") {
                Some(a) => Activation::parse(a).ok_or_else(|| LabError::config(format!("unknown activation `{a}`")))?,
                None => Activation::Relu,
            };
            Ok(PredictorSpec::Mlp { hidden, activation })
        }
        other => Err(LabError::config(format!("unknown predictor `{other}`"))),
    }
}

fn parse_train(kv: &KeyValues, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cadence = match kv.get("train.snapshot") {
        None | Some("pow2") | Some("powers_of_two") => SnapshotCadence::PowersOfTwo,
        Some(v) => SnapshotCadence::Every(
            v.trim_start_matches("every:")
                .parse()
                .map_err(|_| LabError::config(format!("`train.snapshot`: expected pow2 or every:K, got `{v}`")))?,
        ),
    };
    let cfg = TrainConfig {
        eta0: kv.or("train.eta0", d.eta0)?,
        schedule: match kv.get("train.schedule") {
            Some(s) => Schedule::parse(s).ok_or_else(|| LabError::config(format!("unknown schedule `{s}`")))?,
            None => d.schedule,
        },
        max_steps: kv.or::<f64>("train.max_steps", d.max_steps as f64)? as usize,
        lambda: kv.or("train.lambda", d.lambda)?,
        r: kv.or("train.r", d.r)?,
        loss: match kv.get("train.loss") {
            Some(s) => LossKind::parse(s).ok_or_else(|| LabError::config(format!("unknown loss `{s}`")))?,
            None => d.loss,
        },
        cadence,
        seed,
        init_scale: kv.or("train.init_scale", d.init_scale)?,
        stop_grad_norm: kv.or("train.stop_grad_norm", d.stop_grad_norm)?,
        stop_log_risk: kv.parsed("train.stop_log_risk")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_checks(kv: &KeyValues) -> Result<Vec<Check>> {
    let mut checks: Vec<Check> = match kv.get("checks") {
        Some(v) => v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Check::parse(s).ok_or_else(|| LabError::config(format!("unknown check `{s}`"))))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    checks.sort();
    checks.dedup();
    Ok(checks)
}

const KNOWN_KEYS: &[&str] = &[
    "id",
    "seed",
    "out_dir",
    "generator",
    "weights",
    "predictor",
    "checks",
    "generator.gamma",
    "generator.n",
    "generator.d",
    "generator.radius",
    "generator.w_plus",
    "generator.w_minus",
    "generator.n_sep",
    "generator.mu_s",
    "generator.mu_t",
    "generator.sigma",
    "generator.truncation",
    "generator.center",
    "generator.spread",
    "weights.m",
    "weights.values",
    "predictor.hidden",
    "predictor.activation",
    "train.eta0",
    "train.schedule",
    "train.max_steps",
    "train.lambda",
    "train.r",
    "train.loss",
    "train.snapshot",
    "train.init_scale",
    "train.stop_grad_norm",
    "train.stop_log_risk",
    "path.lambdas",
    "check.norm_growth.min_norm",
    "check.nonsep_limit.tol",
    "check.nonsep_limit.rate_from",
    "check.path_margin.slack",
    "check.path_margin.fraction",
    "check.path_margin.floor_c",
    "check.path_margin.floor_tau",
    "check.target_bound.delta",
    "check.target_bound.test_samples",
];

/// Free-form keys, ignored by the runner.
const NOTE_PREFIX: &str = "note.";

impl ScenarioSpec {
    /// Builds a spec from parsed keys; `seed_override` wins over `seed`.
    pub fn from_key_values(kv: &KeyValues, seed_override: Option<u64>) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !KNOWN_KEYS.contains(k) && !k.starts_with(NOTE_PREFIX)) {
            return Err(LabError::config(format!("unknown key `{k}`")));
        }
        let id = kv.get("id").unwrap_or("scenario").to_string();
        if id.contains(['/', '\\']) {
            return Err(LabError::config("`id` must not contain path separators"));
        }
        let seed = match seed_override {
            Some(s) => s,
            None => kv.or("seed", 0u64)?,
        };
        let generator = parse_generator(kv)?;
        let weights = parse_weights(kv, &generator)?;
        let predictor = parse_predictor(kv)?;
        let train = parse_train(kv, seed)?;
        let lambda_schedule = kv.list("path.lambdas")?;
        let checks = parse_checks(kv)?;
        let d = CheckOptions::default();
        let options = CheckOptions {
            norm_growth_min_norm: kv.or("check.norm_growth.min_norm", d.norm_growth_min_norm)?,
            nonsep_tol: kv.or("check.nonsep_limit.tol", d.nonsep_tol)?,
            nonsep_rate_from: kv.or("check.nonsep_limit.rate_from", d.nonsep_rate_from)?,
            path_slack: kv.or("check.path_margin.slack", d.path_slack)?,
            path_fraction: kv.or("check.path_margin.fraction", d.path_fraction)?,
            path_floor_c: kv.or("check.path_margin.floor_c", d.path_floor_c)?,
            path_floor_tau: kv.or("check.path_margin.floor_tau", d.path_floor_tau)?,
            bound_delta: kv.or("check.target_bound.delta", d.bound_delta)?,
            bound_test_samples: kv.or("check.target_bound.test_samples", d.bound_test_samples)?,
        };
        let out_dir = PathBuf::from(kv.get("out_dir").map_or_else(|| format!("out/{id}"), str::to_string));
        Ok(Self { id, generator, weights, predictor, train, lambda_schedule, checks, options, seed, out_dir })
    }

    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?, seed_override)
    }

    /// Reads a scenario file, honoring `MARGINLAB_SEED`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text, env_seed()?)
    }
}

/// Seed from `MARGINLAB_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| LabError::config(format!("{SEED_ENV} = `{v}` is not an integer"))),
        _ => Ok(None),
    }
}

/// Scenario paths from a sweep list file, relative to the list's directory.
pub fn read_sweep_list(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect())
}
