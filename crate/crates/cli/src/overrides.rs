use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{Map, Value};

use sea_core::harness::{grid_range, MetricSplit};
use sea_core::{ExperimentConfig, Method};

/// A problem with the invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Flags that replace individual configuration keys.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Comma-separated ensemble sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Comma-separated hidden widths; `none` for a linear model.
    #[arg(long, value_parser = parse_hidden)]
    pub hidden: Option<Hidden>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Parallel jobs (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Split the boundary curve is read from.
    #[arg(long, value_parser = parse_split)]
    pub metric: Option<MetricSplit>,
    /// Output directory (default: config, then $SEA_OUTPUT_DIR, then `results`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parameter grid given as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

/// Hidden widths given as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden(pub Vec<usize>);

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sea_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<MetricSplit, String> {
    match s {
        "test" => Ok(MetricSplit::Test),
        "train" => Ok(MetricSplit::Train),
        _ => Err(format!("expected `test` or `train`, got `{s}`")),
    }
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, step] => grid_range(num(lo)?, num(hi)?, num(step)?).map_err(|e| e.to_string()),
        [list] => list.split(',').map(num).collect(),
        _ => Err(format!("expected lo:hi:step or a list, got `{s}`")),
    };
    values.map(Grid)
}

fn parse_hidden(s: &str) -> Result<Hidden, String> {
    if s == "none" {
        return Ok(Hidden(Vec::new()));
    }
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Hidden)
}

impl Overrides {
    fn apply(&self, obj: &mut Map<String, Value>) {
        let mut set = |key: &str, v: Value| {
            obj.insert(key.to_string(), v);
        };
        if let Some(m) = self.method {
            set("method", serde_json::to_value(m).expect("serialisable"));
        }
        if let Some(Grid(g)) = &self.grid {
            set("grid", g.clone().into());
        }
        if let Some(s) = &self.sizes {
            set("sizes", s.clone().into());
        }
        if let Some(v) = self.folds {
            set("folds", v.into());
        }
        if let Some(v) = self.epochs {
            set("epochs", v.into());
        }
        if let Some(v) = self.learning_rate {
            set("learning_rate", v.into());
        }
        if let Some(Hidden(h)) = &self.hidden {
            set("hidden", h.clone().into());
        }
        if let Some(v) = self.seed {
            set("seed", v.into());
        }
        if let Some(v) = self.batch_size {
            set("batch_size", v.into());
        }
        if let Some(v) = self.workers {
            set("workers", v.into());
        }
        if let Some(m) = self.metric {
            set(
                "boundary_metric",
                serde_json::to_value(m).expect("serialisable"),
            );
        }
        if let Some(o) = &self.out {
            set("output_dir", o.to_string_lossy().into_owned().into());
        }
    }
}

/// Reads the JSON config at `path`, applies flag overrides, fills a missing
/// `output_dir` from the environment and resolves relative data paths
/// against the config file's directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| usage(format!("config {} must be a JSON object", path.display())))?;
    overrides.apply(obj);
    if !obj.contains_key("output_dir") {
        let out = super::default_out();
        obj.insert(
            "output_dir".into(),
            out.to_string_lossy().into_owned().into(),
        );
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(base) = path.parent() {
        cfg.data.rebase(base);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0:1:0.5").unwrap().0, vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0, 0.3,2").unwrap().0, vec![0.0, 0.3, 2.0]);
        assert_eq!(parse_grid("0").unwrap().0, vec![0.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn hidden_forms() {
        assert_eq!(parse_hidden("10,10").unwrap().0, vec![10, 10]);
        assert!(parse_hidden("none").unwrap().0.is_empty());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut obj = Map::new();
        obj.insert("epochs".into(), 5.into());
        let o = Overrides {
            epochs: Some(9),
            method: Some(Method::NclStar),
            ..Default::default()
        };
        o.apply(&mut obj);
        assert_eq!(obj["epochs"], 9);
        assert_eq!(obj["method"], "nclstar");
    }
}
