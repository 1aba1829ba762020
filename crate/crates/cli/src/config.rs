//! Flat dotted-key configuration files (`region.alpha = 0.5`, `run.seed = 7`).
//!
//! Files are TOML; nested tables are flattened into dotted keys and checked
//! against the keys this tool understands. Command-line flags override file
//! values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "region.alpha",
    "region.a_coef",
    "region.dim",
    "run.seed",
    "run.method",
    "run.statistic",
    "run.thresholds",
    "run.paths",
    "run.n_per_level",
    "run.start",
    "run.dt_max",
    "run.kappa",
    "run.eps_shell",
    "output.path",
    "pde.s_values",
    "pde.nv",
    "pde.length",
    "pde.eps_kind",
    "pde.eps_value",
    "pde.eps_rate",
    "pde.eps_frequency",
    "pde.eps_origin",
    "carleman.grid",
    "carleman.k_scale",
    "carleman.lambda1",
    "fit.q",
];

/// Values read from a configuration file, keyed by dotted path.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, toml::Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (key, value) in table {
        let full = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(inner) => flatten(&full, inner, out),
            other => {
                out.insert(full, other.clone());
            }
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config(format!("cannot parse config file: {e}")))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        if let Some(unknown) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::config(format!("unknown config key `{unknown}`")));
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.values.get(key)
    }

    fn type_error(key: &str, want: &str) -> CliError {
        CliError::config(format!("config key `{key}` must be {want}"))
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(Self::type_error(key, "a number")),
        }
    }

    pub fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(Self::type_error(key, "a non-negative integer")),
        }
    }

    pub fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn string(&self, key: &str) -> CliResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Self::type_error(key, "a string")),
        }
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(Self::type_error(key, "a list of numbers")),
                })
                .collect::<CliResult<Vec<f64>>>()
                .map(Some),
            Some(_) => Err(Self::type_error(key, "a list of numbers")),
        }
    }
}
