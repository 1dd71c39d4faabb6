//! Plain-text run configuration with dotted keys (`section.key = value`),
//! diff-friendly and hand-editable. Parsing then serializing is idempotent,
//! so config snapshots are stable across reruns.

use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed line {line}: expected `section.key = value`")]
    MalformedLine { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value}")]
    InvalidValue { key: String, value: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}

/// Full description of one CLI run; the snapshot written to the output
/// directory and the unit the subcommands execute against.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub mem_cap: u64,
    pub quick: bool,
    pub d: usize,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k_min: u32,
    pub k_max: u32,
    pub reps: usize,
    pub quantile: f64,
    /// `lambda` or `dgamma` figure table for the bounds subcommand.
    pub figure: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: "estimate".into(),
            out: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            mem_cap: 4 * 1024 * 1024 * 1024,
            quick: false,
            d: 2,
            xi: vec![0.0],
            gamma: Vec::new(),
            k_min: 5,
            k_max: 9,
            reps: 20,
            quantile: 0.5,
            figure: None,
        }
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers < 1 {
            return Err(ConfigError::Invalid("workers must be >= 1"));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(ConfigError::Invalid("quantile must lie in (0,1)"));
        }
        if self.k_max < self.k_min {
            return Err(ConfigError::Invalid("k range is empty"));
        }
        if self.xi.iter().any(|x| !(*x >= 0.0)) {
            return Err(ConfigError::Invalid("xi values must be >= 0"));
        }
        Ok(())
    }

    /// Serializes to sorted `section.key = value` lines.
    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        kv.insert("params.d".into(), self.d.to_string());
        kv.insert("params.k".into(), format!("{}..{}", self.k_min, self.k_max));
        kv.insert("params.quantile".into(), self.quantile.to_string());
        kv.insert("params.reps".into(), self.reps.to_string());
        kv.insert("params.xi".into(), join_floats(&self.xi));
        if !self.gamma.is_empty() {
            kv.insert("params.gamma".into(), join_floats(&self.gamma));
        }
        if let Some(fig) = &self.figure {
            kv.insert("bounds.figure".into(), fig.clone());
        }
        kv.insert("run.mem_cap".into(), self.mem_cap.to_string());
        kv.insert("run.out".into(), self.out.display().to_string());
        kv.insert("run.quick".into(), self.quick.to_string());
        kv.insert("run.seed".into(), self.seed.to_string());
        kv.insert("run.subcommand".into(), self.subcommand.clone());
        kv.insert("run.workers".into(), self.workers.to_string());
        let mut text = String::new();
        for (k, v) in kv {
            text.push_str(&k);
            text.push_str(" = ");
            text.push_str(&v);
            text.push('\n');
        }
        text
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.gamma.clear();
        let mut saw_subcommand = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MalformedLine { line: i + 1 })?;
            let key = key.trim();
            let value = value.trim();
            let bad = || ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "run.subcommand" => {
                    cfg.subcommand = value.to_string();
                    saw_subcommand = true;
                }
                "run.out" => cfg.out = PathBuf::from(value),
                "run.seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "run.workers" => cfg.workers = value.parse().map_err(|_| bad())?,
                "run.mem_cap" => cfg.mem_cap = value.parse().map_err(|_| bad())?,
                "run.quick" => cfg.quick = value.parse().map_err(|_| bad())?,
                "params.d" => cfg.d = value.parse().map_err(|_| bad())?,
                "params.xi" => cfg.xi = parse_float_list(value).ok_or_else(bad)?,
                "params.gamma" => cfg.gamma = parse_float_list(value).ok_or_else(bad)?,
                "params.k" => {
                    let (lo, hi) = parse_k_range(value).ok_or_else(bad)?;
                    cfg.k_min = lo;
                    cfg.k_max = hi;
                }
                "params.reps" => cfg.reps = value.parse().map_err(|_| bad())?,
                "params.quantile" => cfg.quantile = value.parse().map_err(|_| bad())?,
                "bounds.figure" => cfg.figure = Some(value.to_string()),
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        if !saw_subcommand {
            return Err(ConfigError::MissingKey("run.subcommand"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a comma list (`0.1,0.25`) or an `a:b:step` range, both inclusive
/// of the right endpoint up to rounding.
pub fn parse_float_list(text: &str) -> Option<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return None;
        }
        let a: f64 = parts[0].trim().parse().ok()?;
        let b: f64 = parts[1].trim().parse().ok()?;
        let step: f64 = parts[2].trim().parse().ok()?;
        if !(step > 0.0 && b >= a) {
            return None;
        }
        let n = ((b - a) / step).round() as usize;
        return Some((0..=n).map(|i| a + i as f64 * step).collect());
    }
    let mut out = Vec::new();
    for part in text.split(',') {
        out.push(part.trim().parse().ok()?);
    }
    Some(out)
}

/// Parses `a..b` (inclusive) or a single integer `a` as `a..a`.
pub fn parse_k_range(text: &str) -> Option<(u32, u32)> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo.trim().parse().ok()?;
        let hi: u32 = hi.trim().parse().ok()?;
        if hi < lo {
            return None;
        }
        Some((lo, hi))
    } else {
        let k: u32 = text.parse().ok()?;
        Some((k, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = RunConfig::default();
        cfg.subcommand = "estimate".into();
        cfg.xi = vec![0.0, 0.25, 0.4082];
        cfg.seed = 7;
        cfg.figure = Some("lambda".into());
        cfg.gamma = vec![0.5, 1.0];
        let text = cfg.to_text();
        let parsed = RunConfig::from_text(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            RunConfig::from_text("run.subcommand estimate\n"),
            Err(ConfigError::MalformedLine { line: 1 })
        ));
        assert!(matches!(
            RunConfig::from_text("run.subcommand = x\nbogus.key = 1\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_text("run.subcommand = x\nparams.d = two\n"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            RunConfig::from_text("params.d = 2\n"),
            Err(ConfigError::MissingKey(_))
        ));
        // comments and blank lines are fine
        let cfg =
            RunConfig::from_text("# comment\n\nrun.subcommand = verify\n").unwrap();
        assert_eq!(cfg.subcommand, "verify");
    }

    #[test]
    fn float_list_and_range_parsing() {
        assert_eq!(parse_float_list("0.1, 0.25"), Some(vec![0.1, 0.25]));
        let r = parse_float_list("0:0.2:0.1").unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[2] - 0.2).abs() < 1e-12);
        assert!(parse_float_list("1:0:0.1").is_none());
        assert!(parse_float_list("a,b").is_none());
        assert_eq!(parse_k_range("5..9"), Some((5, 9)));
        assert_eq!(parse_k_range("7"), Some((7, 7)));
        assert!(parse_k_range("9..5").is_none());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.workers = 0;
        assert!(cfg.validate().is_err());
        cfg = RunConfig::default();
        cfg.quantile = 0.0;
        assert!(cfg.validate().is_err());
        cfg = RunConfig::default();
        cfg.xi = vec![-0.1];
        assert!(cfg.validate().is_err());
    }
}
