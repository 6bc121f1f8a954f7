//! Flat `key = value` experiment configuration.

use std::fmt;
use std::str::FromStr;

use crate::fp::{FloatFormat, RangeMode, RoundingMode};
use crate::linalg::{PolicyMode, PrecisionPolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn bad(key: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Simo,
    Miso,
    MuSimo,
    MuMiso,
}

impl Scenario {
    pub fn is_multi_user(&self) -> bool {
        matches!(self, Scenario::MuSimo | Scenario::MuMiso)
    }

    pub fn is_uplink(&self) -> bool {
        matches!(self, Scenario::Simo | Scenario::MuSimo)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Simo => "SIMO",
            Scenario::Miso => "MISO",
            Scenario::MuSimo => "MU-SIMO",
            Scenario::MuMiso => "MU-MISO",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().replace('_', "-").as_str() {
            "SIMO" => Ok(Scenario::Simo),
            "MISO" => Ok(Scenario::Miso),
            "MU-SIMO" | "MUSIMO" => Ok(Scenario::MuSimo),
            "MU-MISO" | "MUMISO" => Ok(Scenario::MuMiso),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Channel knowledge at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Csi {
    Perfect,
    /// Pilot-based MMSE estimate; `coherence` symbols per block, `pilots` of them training.
    ImperfectMmse {
        coherence: usize,
        pilots: usize,
    },
}

impl Csi {
    /// Fraction of each coherence block left for data.
    pub fn data_fraction(&self) -> f64 {
        match *self {
            Csi::Perfect => 1.0,
            Csi::ImperfectMmse { coherence, pilots } => {
                (coherence - pilots) as f64 / coherence as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub m_grid: Vec<usize>,
    pub k: usize,
    pub rho_db_grid: Vec<f64>,
    pub policy: PrecisionPolicy,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
    pub csi: Csi,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Simo,
            m_grid: vec![16, 32, 64, 128, 256, 512, 1024],
            k: 4,
            rho_db_grid: vec![10.0],
            policy: PrecisionPolicy::uniform(FloatFormat::FP16),
            lambda: 1.0,
            trials: 500,
            seed: 0,
            csi: Csi::Perfect,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
    let items = items.map_err(|e| bad(key, e))?;
    if items.is_empty() {
        return Err(bad(key, "empty list"));
    }
    Ok(items)
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| bad(key, e))
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn mode_label(policy: &PrecisionPolicy) -> &'static str {
    match policy.mode {
        PolicyMode::UniformLow => "uniform",
        PolicyMode::UniformHigh => "high",
        PolicyMode::Mixed { .. } => "mixed",
    }
}

/// `fp16`, or `fp16/fp32` for a mixed policy.
pub fn format_label(policy: &PrecisionPolicy) -> String {
    match policy.mode {
        PolicyMode::UniformLow => policy.low.to_string(),
        PolicyMode::UniformHigh => policy.high.to_string(),
        PolicyMode::Mixed { .. } => format!("{}/{}", policy.low, policy.high),
    }
}

impl ExperimentConfig {
    /// Parses the flat text format; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut mode = "uniform".to_string();
        let mut block_size = 32usize;
        let mut csi = "perfect".to_string();
        let mut coherence = 196usize;
        let mut pilots: Option<usize> = None;
        let mut high_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = k.trim().to_ascii_lowercase();
            let v = v.trim();
            match key.as_str() {
                "scenario" => cfg.scenario = parse_one(&key, v)?,
                "m" | "m_grid" => cfg.m_grid = parse_list(&key, v)?,
                "k" => cfg.k = parse_one(&key, v)?,
                "rho_db" | "rho_db_grid" => cfg.rho_db_grid = parse_list(&key, v)?,
                "format" | "low_format" => {
                    cfg.policy.low = FloatFormat::from_name(v).map_err(|e| bad(&key, e))?
                }
                "high_format" => {
                    cfg.policy.high = FloatFormat::from_name(v).map_err(|e| bad(&key, e))?;
                    high_given = true;
                }
                "mode" => mode = v.to_ascii_lowercase(),
                "block_size" | "b" => block_size = parse_one(&key, v)?,
                "rounding" => {
                    cfg.policy.rounding = match v.to_ascii_lowercase().as_str() {
                        "nearest" | "nearest_even" => RoundingMode::NearestEven,
                        s => match s.split_once(':') {
                            Some(("stochastic", seed)) => RoundingMode::Stochastic {
                                seed: parse_one(&key, seed)?,
                            },
                            _ if s == "stochastic" => RoundingMode::Stochastic { seed: 0 },
                            _ => {
                                return Err(bad(&key, "expected `nearest` or `stochastic[:seed]`"))
                            }
                        },
                    }
                }
                "range" => {
                    cfg.policy.range = match v.to_ascii_lowercase().as_str() {
                        "unbounded" => RangeMode::Unbounded,
                        "strict" | "strict_ieee" | "strictieee" => RangeMode::StrictIeee,
                        _ => return Err(bad(&key, "expected `unbounded` or `strict`")),
                    }
                }
                "lambda" => cfg.lambda = parse_one(&key, v)?,
                "trials" => cfg.trials = parse_one(&key, v)?,
                "seed" => cfg.seed = parse_one(&key, v)?,
                "csi" => csi = v.to_ascii_lowercase(),
                "t" | "coherence" => coherence = parse_one(&key, v)?,
                "tau" | "pilots" => pilots = Some(parse_one(&key, v)?),
                _ => return Err(ConfigError::UnknownKey(k.trim().to_string())),
            }
        }
        cfg.policy.mode = match mode.as_str() {
            "uniform" | "low" => PolicyMode::UniformLow,
            "high" => PolicyMode::UniformHigh,
            "mixed" => PolicyMode::Mixed { block_size },
            other => {
                return Err(bad(
                    "mode",
                    format!("expected uniform, high or mixed, got `{other}`"),
                ))
            }
        };
        if !high_given {
            let low = cfg.policy.low;
            let widen = matches!(cfg.policy.mode, PolicyMode::Mixed { .. })
                && low.significand_bits() < FloatFormat::FP32.significand_bits();
            cfg.policy.high = if widen { FloatFormat::FP32 } else { low };
        }
        cfg.csi = match csi.as_str() {
            "perfect" => Csi::Perfect,
            "mmse" | "imperfect" => Csi::ImperfectMmse {
                coherence,
                pilots: pilots.unwrap_or(cfg.users()),
            },
            other => {
                return Err(bad(
                    "csi",
                    format!("expected perfect or mmse, got `{other}`"),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Users actually served: one for the single-user scenarios.
    pub fn users(&self) -> usize {
        if self.scenario.is_multi_user() {
            self.k
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |s: String| Err(ConfigError::Invalid(s));
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.m_grid.is_empty() || self.rho_db_grid.is_empty() {
            return invalid("grids must be nonempty".into());
        }
        if self.k == 0 {
            return invalid("K must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(&m) = self
            .m_grid
            .iter()
            .find(|&&m| m < self.users() + usize::from(self.scenario.is_multi_user()))
        {
            return invalid(format!("M = {m} is too small for {} users", self.users()));
        }
        if self.rho_db_grid.iter().any(|r| !r.is_finite()) {
            return invalid("SNR grid must be finite".into());
        }
        self.policy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Csi::ImperfectMmse { coherence, pilots } = self.csi {
            if pilots < self.users() {
                return invalid(format!(
                    "tau = {pilots} is below the number of users {}",
                    self.users()
                ));
            }
            if pilots >= coherence {
                return invalid(format!("tau = {pilots} leaves no data in T = {coherence}"));
            }
            if !self.scenario.is_uplink() {
                return invalid("imperfect CSI is modeled for the uplink scenarios only".into());
            }
        }
        Ok(())
    }

    /// The configuration in the same text format [`ExperimentConfig::parse`] reads.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let p = &self.policy;
        let mut kv = vec![
            ("scenario", self.scenario.to_string()),
            ("M", join(&self.m_grid)),
            ("K", self.k.to_string()),
            ("rho_db", join(&self.rho_db_grid)),
            ("format", p.low.to_string()),
            ("high_format", p.high.to_string()),
            ("mode", mode_label(p).to_string()),
            (
                "block_size",
                p.block_size().map_or("none".into(), |b| b.to_string()),
            ),
            (
                "rounding",
                match p.rounding {
                    RoundingMode::NearestEven => "nearest".into(),
                    RoundingMode::Stochastic { seed } => format!("stochastic:{seed}"),
                },
            ),
            (
                "range",
                match p.range {
                    RangeMode::Unbounded => "unbounded",
                    RangeMode::StrictIeee => "strict",
                }
                .into(),
            ),
            ("lambda", self.lambda.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
        ];
        match self.csi {
            Csi::Perfect => kv.push(("csi", "perfect".into())),
            Csi::ImperfectMmse { coherence, pilots } => {
                kv.push(("csi", "mmse".into()));
                kv.push(("T", coherence.to_string()));
                kv.push(("tau", pilots.to_string()));
            }
        }
        // a mixed-free config has no block size to echo back
        kv.into_iter()
            .filter(|(k, v)| !(*k == "block_size" && v == "none"))
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
