//! TOML experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{GridPoint, Mode};
use crate::inference::STRATEGY_NAMES;
use crate::io::ViewSplit;
use crate::model::{HyperParams, Neighborhood};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    /// Comma-delimited file whose last field is the label.
    Path(PathBuf),
    Table {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        /// 0-based label fields; negative values count from the end.
        #[serde(default = "default_label_columns")]
        labels: Vec<isize>,
    },
}

fn default_delimiter() -> char {
    ','
}

fn default_label_columns() -> Vec<isize> {
    vec![-1]
}

impl DataSource {
    pub fn path(&self) -> &Path {
        match self {
            DataSource::Path(p) | DataSource::Table { path: p, .. } => p,
        }
    }

    pub fn delimiter(&self) -> char {
        match self {
            DataSource::Path(_) => default_delimiter(),
            DataSource::Table { delimiter, .. } => *delimiter,
        }
    }

    pub fn label_columns(&self) -> Vec<isize> {
        match self {
            DataSource::Path(_) => default_label_columns(),
            DataSource::Table { labels, .. } => labels.clone(),
        }
    }

    fn rebase(&mut self, base: &Path) {
        match self {
            DataSource::Path(p) | DataSource::Table { path: p, .. } => {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// A single weight shared by every view/task, or one per view/task.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Scalar(f64),
    List(Vec<f64>),
}

impl Weights {
    fn expand(&self, count: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Weights::Scalar(x) => Ok(vec![*x; count]),
            Weights::List(v) if v.len() == count => Ok(v.clone()),
            Weights::List(v) => Err(Error::Config(format!(
                "{} {what} weights given for {count} {what}s",
                v.len()
            ))),
        }
    }
}

/// A positive number, or the string `"inf"` for hard label constraints.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Finite(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NeighborhoodSpec {
    Nearest(usize),
    Named(String),
}

impl NeighborhoodSpec {
    fn resolve(&self) -> Result<Neighborhood> {
        match self {
            NeighborhoodSpec::Nearest(k) => Ok(Neighborhood::Nearest(*k)),
            NeighborhoodSpec::Named(s) if s == "full" => Ok(Neighborhood::Full),
            NeighborhoodSpec::Named(s) => Err(Error::Config(format!(
                "neighborhood must be \"full\" or an integer, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub view_split: ViewSplit,
    pub label_fraction: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alpha: Option<Weights>,
    #[serde(default)]
    pub beta: Option<Weights>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub gamma: Option<Gamma>,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_z")]
    pub z: usize,
    #[serde(default)]
    pub neighborhood: Option<NeighborhoodSpec>,
    #[serde(default = "default_inference")]
    pub inference: String,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub cp_grid: Option<Vec<GridPoint>>,
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_mode() -> Mode {
    Mode::Multiview
}
fn default_trials() -> usize {
    1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_xi() -> f64 {
    HyperParams::DEFAULT_XI
}
fn default_z() -> usize {
    2
}
fn default_inference() -> String {
    "batch".into()
}
fn default_max_iters() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-6
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.data.rebase(base);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.label_fraction > 0.0 && self.label_fraction < 1.0) {
            return Err(Error::Config(format!(
                "label_fraction must lie in (0, 1), got {}",
                self.label_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !STRATEGY_NAMES.contains(&self.inference.as_str()) {
            return Err(Error::Config(format!(
                "unknown inference {:?} (available: {})",
                self.inference,
                STRATEGY_NAMES.join(", ")
            )));
        }
        if self.embed_dim == Some(0) {
            return Err(Error::Config("embed_dim must be at least 1".into()));
        }
        if matches!(&self.cp_grid, Some(g) if g.is_empty()) {
            return Err(Error::Config("cp_grid must not be empty".into()));
        }
        self.gamma()?;
        if let Some(n) = &self.neighborhood {
            n.resolve()?;
        }
        Ok(())
    }

    pub fn gamma(&self) -> Result<Option<f64>> {
        match &self.gamma {
            None => Ok(None),
            Some(Gamma::Named(s)) if s == "inf" => Ok(None),
            Some(Gamma::Finite(g)) if *g > 0.0 && g.is_finite() => Ok(Some(*g)),
            Some(other) => Err(Error::Config(format!(
                "gamma must be a positive number or \"inf\", got {other:?}"
            ))),
        }
    }

    /// Hyperparameters for a dataset with `q` views and `p` tasks.
    pub fn hyper_params(&self, q: usize, p: usize) -> Result<HyperParams> {
        let mut hp = HyperParams::new(q, p);
        if let Some(a) = &self.alpha {
            hp.alphas = a.expand(q, "view")?;
        }
        if let Some(b) = &self.beta {
            hp.betas = b.expand(p, "task")?;
        }
        hp.lambda = self.lambda;
        hp.gamma = self.gamma()?;
        hp.xi = self.xi;
        hp.z = self.z;
        if let Some(n) = &self.neighborhood {
            hp.neighborhood = n.resolve()?;
        }
        hp.inference = self.inference.clone();
        hp.max_iters = self.max_iters;
        hp.tol = self.tol;
        Ok(hp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
data = { path = "d.csv", delimiter = ";", labels = [0, -1] }
mode = "multitask"
view_split = [[1, 2], [3, 4]]
label_fraction = 0.1
trials = 3
seed = 9
alpha = [1.0, 0.5]
beta = 0.25
lambda = 2.0
gamma = "inf"
xi = 1e-5
z = 3
neighborhood = 5
inference = "progressive"
max_iters = 4
tol = 1e-3
cp_grid = [{ alpha = [1.0, 1.0] }, { beta = [0.5, 0.5] }]
embed_dim = 2
out = "results"
"#;
        let cfg = ExperimentConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.data.path(), Path::new("/base/d.csv"));
        assert_eq!(cfg.data.delimiter(), ';');
        assert_eq!(cfg.out, PathBuf::from("/base/results"));
        let hp = cfg.hyper_params(2, 2).unwrap();
        assert_eq!(hp.alphas, vec![1.0, 0.5]);
        assert_eq!(hp.betas, vec![0.25, 0.25]);
        assert_eq!(hp.gamma, None);
        assert_eq!(hp.neighborhood, Neighborhood::Nearest(5));
        assert!(cfg.hyper_params(3, 2).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let base = Path::new(".");
        assert!(ExperimentConfig::parse("data = \"x\"\nlabel_fraction = 0.1\nbogus = 1\n", base).is_err());
        assert!(ExperimentConfig::parse("data = \"x\"\nlabel_fraction = 1.5\n", base).is_err());
        assert!(ExperimentConfig::parse("data = \"x\"\nlabel_fraction = 0.1\ngamma = -1\n", base).is_err());
        assert!(ExperimentConfig::parse("data = \"x\"\nlabel_fraction = 0.1\nneighborhood = \"all\"\n", base).is_err());
        let cfg = ExperimentConfig::parse("data = \"x\"\nlabel_fraction = 0.1\ngamma = 2\n", base).unwrap();
        assert_eq!(cfg.gamma().unwrap(), Some(2.0));
    }
}
