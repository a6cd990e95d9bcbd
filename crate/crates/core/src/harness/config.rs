use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deep_mf::{DeepMfConfig, SyntheticSpec};
use crate::error::{Error, Result};
use crate::optim::{Method, OptimizerConfig};

/// Synthetic subjects used when no input files are given. Subject `i` is
/// generated from `spec` with seed `spec.seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub subjects: usize,
    #[serde(flatten)]
    pub spec: SyntheticSpec,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            subjects: 10,
            spec: SyntheticSpec {
                seed: 1000,
                ..SyntheticSpec::default()
            },
        }
    }
}

/// A benchmark run, loadable from TOML.
///
/// ```toml
/// methods = ["adam", "sadam"]
/// seeds = [0, 1, 2]
/// out_dir = "results"
///
/// [optimizer]
/// max_iters = 200
/// trigger_eps = 1e-5
///
/// [synthetic]
/// subjects = 4
/// rows = 32
/// cols = 40
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Matrix CSV files, one subject each. Empty means the synthetic cohort.
    pub inputs: Vec<PathBuf>,
    pub synthetic: CohortSpec,
    pub methods: Vec<Method>,
    /// Shared optimizer settings; `method` is overridden per run.
    pub optimizer: OptimizerConfig,
    pub deep_mf: DeepMfConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Iterations whose losses act as raters in the consistency table.
    pub icc_checkpoints: Vec<usize>,
    /// Write measured wall times into traces. Off gives byte-identical reruns.
    pub record_timing: bool,
    /// Worker threads; 0 uses all cores, 1 runs sequentially.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            synthetic: CohortSpec::default(),
            methods: vec![Method::Admm, Method::Adam, Method::Sadam, Method::Svrg],
            optimizer: OptimizerConfig::default(),
            deep_mf: DeepMfConfig::default(),
            seeds: vec![0],
            out_dir: PathBuf::from("results"),
            icc_checkpoints: vec![50, 100, 150, 200],
            record_timing: true,
            jobs: 0,
        }
    }
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid bench config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.inputs.is_empty() && self.synthetic.subjects == 0 {
            return Err(Error::Config("no inputs and an empty synthetic cohort".into()));
        }
        for m in &self.methods {
            OptimizerConfig {
                method: *m,
                ..self.optimizer.clone()
            }
            .validate()?;
        }
        let out = normalize(&self.out_dir);
        for p in &self.inputs {
            if normalize(p) == out {
                return Err(Error::Config(format!(
                    "input {} coincides with the output directory",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

fn normalize(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.components().filter(|c| *c != Component::CurDir).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = BenchConfig::default();
        assert_eq!(c.optimizer.max_iters, 200);
        assert_eq!(c.optimizer.trigger_eps, 1e-5);
        assert_eq!(c.optimizer.adam.alpha, 1e-3);
        assert_eq!(c.synthetic.subjects, 10);
        assert_eq!((c.synthetic.spec.rows, c.synthetic.spec.cols), (64, 100));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = BenchConfig {
            methods: vec![Method::Gd, Method::Sadam],
            seeds: vec![3, 4],
            ..BenchConfig::default()
        };
        let back = BenchConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml() {
        let c = BenchConfig::from_toml_str(
            "methods = [\"adam\"]\n[optimizer]\nmax_iters = 20\n[synthetic]\nsubjects = 2\nrows = 8\n",
        )
        .unwrap();
        assert_eq!(c.methods, vec![Method::Adam]);
        assert_eq!(c.optimizer.max_iters, 20);
        assert_eq!(c.synthetic.subjects, 2);
        assert_eq!(c.synthetic.spec.rows, 8);
        assert_eq!(c.synthetic.spec.cols, 100);
    }

    #[test]
    fn invalid_configs() {
        let mut c = BenchConfig {
            methods: vec![],
            ..BenchConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.methods = vec![Method::Adam];
        c.optimizer.max_iters = 0;
        assert!(c.validate().is_err());
        c.optimizer.max_iters = 5;
        c.inputs = vec![PathBuf::from("out")];
        c.out_dir = PathBuf::from("./out");
        assert!(c.validate().is_err());
        assert!(BenchConfig::from_toml_str("methods = [\"storm\"]").is_err());
    }
}
