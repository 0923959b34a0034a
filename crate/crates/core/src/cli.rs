//! Run configuration: config files, flag overrides and defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{EquiwaveError, Result};
use crate::grid::ModelParams;

pub const DEFAULT_N: u32 = 1;
pub const DEFAULT_K: u32 = 1;
pub const DEFAULT_RADIUS: f64 = 40.0;
pub const DEFAULT_INTERVALS: usize = 1024;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT_DIR: &str = "out";
/// Overrides the default output directory; an explicit `--out` wins over it.
pub const OUT_DIR_ENV: &str = "EQUIWAVE_OUT";

/// Values read from a config file, keyed by flag name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig(pub BTreeMap<String, Value>);

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// A JSON object, or `key = value` lines with `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let v: Value = serde_json::from_str(trimmed)?;
            let Value::Object(map) = v else {
                return Err(EquiwaveError::Format("JSON config must be an object".into()));
            };
            return Ok(FileConfig(map.into_iter().map(|(k, v)| (normalize(&k), v)).collect()));
        }
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(EquiwaveError::Format(format!("config line {}: expected key = value", lineno + 1)));
            };
            let value = value.trim();
            let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            map.insert(normalize(key.trim()), parsed);
        }
        Ok(FileConfig(map))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(&normalize(key))
    }
}

fn normalize(key: &str) -> String {
    key.trim_start_matches("--").replace('_', "-")
}

/// Model flags shared by every subcommand; `None` means not given.
#[derive(Clone, Debug, Default)]
pub struct CommonArgs {
    pub n: Option<u32>,
    pub k: Option<u32>,
    pub radius: Option<f64>,
    pub intervals: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved configuration, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: ModelParams,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Subcommand options after resolution, in the order flag, file, default.
    pub options: BTreeMap<String, Value>,
    #[serde(skip)]
    file: FileConfig,
}

fn from_file<T: serde::de::DeserializeOwned>(file: &FileConfig, key: &str) -> Result<Option<T>> {
    match file.get(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| EquiwaveError::Format(format!("config key {key:?}: {e}"))),
    }
}

/// Flags override the file, the file overrides defaults. `env_out` is the value of
/// [`OUT_DIR_ENV`], if set.
pub fn parse_config(subcommand: &str, args: &CommonArgs, file: Option<FileConfig>, env_out: Option<PathBuf>) -> Result<RunConfig> {
    let file = file.unwrap_or_default();
    let n = args.n.map_or_else(|| from_file(&file, "n"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_N);
    let k = args.k.map_or_else(|| from_file(&file, "k"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_K);
    let radius = args.radius.map_or_else(|| from_file(&file, "R"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_RADIUS);
    let intervals = args.intervals.map_or_else(|| from_file(&file, "M"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_INTERVALS);
    let seed = args.seed.map_or_else(|| from_file(&file, "seed"), |v| Ok(Some(v)))?.unwrap_or(DEFAULT_SEED);
    let out_dir = match &args.out {
        Some(p) => p.clone(),
        None => match env_out {
            Some(p) => p,
            None => from_file::<PathBuf>(&file, "out")?.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        },
    };
    let params = ModelParams::new(n, k, radius, intervals)?;
    Ok(RunConfig { subcommand: subcommand.to_string(), params, seed, out_dir, options: BTreeMap::new(), file })
}

impl RunConfig {
    /// Resolves a subcommand option and records it.
    pub fn option<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: Serialize + serde::de::DeserializeOwned,
    {
        let value = match flag {
            Some(v) => v,
            None => from_file(&self.file, key)?.unwrap_or(default),
        };
        self.options.insert(key.to_string(), serde_json::to_value(&value)?);
        Ok(value)
    }

    /// Like [`RunConfig::option`] without a default; absent values are recorded as null.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: Serialize + serde::de::DeserializeOwned,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => from_file(&self.file, key)?,
        };
        self.options.insert(key.to_string(), serde_json::to_value(&value)?);
        Ok(value)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| EquiwaveError::InvalidArgument(format!("bad list entry {t:?}"))))
        .collect()
}
