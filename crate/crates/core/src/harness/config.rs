use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{validate_schema, ColumnSchema, SyntheticSpec};
use crate::error::{Error, Result};
use crate::recourse::{CchvaeParams, GsmParams, Method, ScfeParams};
use crate::training::{TrainConfig, VaeConfig};

/// The robustness grid used when a config does not give one.
pub const DEFAULT_EPSILONS: [f64; 8] = [0.0, 0.02, 0.05, 0.10, 0.15, 0.20, 0.25, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Two Gaussian blobs; the run seed is added to `seed` so each run sees fresh data.
    Synthetic {
        n_per_class: usize,
        d: usize,
        class_separation: f64,
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        schema: Vec<ColumnSchema>,
    },
}

impl DatasetSource {
    pub fn synthetic_spec(&self, run_seed: u64) -> Option<SyntheticSpec> {
        match self {
            DatasetSource::Synthetic {
                n_per_class,
                d,
                class_separation,
                noise_std,
                seed,
            } => Some(SyntheticSpec::new(
                *n_per_class,
                *d,
                *class_separation,
                *noise_std,
                seed.wrapping_add(run_seed),
            )),
            DatasetSource::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelFamily {
    #[default]
    Linear,
    Ntk {
        #[serde(default = "default_beta")]
        beta: f64,
        /// Number of FGSM re-attack rounds used to build robust anchors.
        #[serde(default = "default_rounds")]
        rounds: usize,
    },
    Mlp {
        depth: usize,
        width: usize,
    },
}

fn default_beta() -> f64 {
    0.5
}

fn default_rounds() -> usize {
    1
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Ntk { .. } => "ntk",
            ModelFamily::Mlp { .. } => "mlp",
        }
    }

    /// `(depth, width)` of the hidden layers; `(0, 0)` for the linear and kernel families.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            ModelFamily::Mlp { depth, width } => (*depth, *width),
            _ => (0, 0),
        }
    }
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_attack() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("reclab-out")
}

fn default_dataset() -> DatasetSource {
    DatasetSource::Synthetic {
        n_per_class: 200,
        d: 2,
        class_separation: 0.5,
        noise_std: 0.5,
        seed: 0,
    }
}

/// Everything a sweep needs. Every field has a default, so an empty TOML file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub model: ModelFamily,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// ℓ∞ radius of the FGSM attack used for adversarial accuracy.
    #[serde(default = "default_attack")]
    pub attack_epsilon: f64,
    /// Caps the number of negatively predicted test instances per cell.
    #[serde(default)]
    pub max_instances: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub vae: VaeConfig,
    #[serde(default)]
    pub scfe: ScfeParams,
    #[serde(default)]
    pub gsm: GsmParams,
    #[serde(default)]
    pub cchvae: CchvaeParams,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.epsilons.is_empty() {
            return cfg_err("epsilon grid must not be empty");
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return cfg_err("epsilon values must be finite and non-negative");
        }
        if self.epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return cfg_err("epsilon grid must be strictly ascending");
        }
        if self.epsilons[0] != 0.0 {
            return cfg_err("epsilon grid must contain 0 (the non-robust baseline)");
        }
        if self.methods.is_empty() {
            return cfg_err("at least one recourse method is required");
        }
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        if m.len() != self.methods.len() {
            return cfg_err("methods must not repeat");
        }
        if self.seeds.is_empty() {
            return cfg_err("at least one seed is required");
        }
        let mut s = self.seeds.clone();
        s.sort();
        s.dedup();
        if s.len() != self.seeds.len() {
            return cfg_err("seeds must not repeat");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return cfg_err("test_fraction must lie in (0, 1)");
        }
        if !(self.attack_epsilon >= 0.0) {
            return cfg_err("attack_epsilon must be non-negative");
        }
        match &self.dataset {
            DatasetSource::Synthetic { .. } => {
                self.dataset.synthetic_spec(0).unwrap().validate()?
            }
            DatasetSource::Csv { schema, .. } => validate_schema(schema)?,
        }
        match self.model {
            ModelFamily::Ntk { beta, rounds } => {
                if !(beta > 0.0) || rounds == 0 {
                    return cfg_err("ntk needs beta > 0 and rounds >= 1");
                }
            }
            ModelFamily::Mlp { depth, width } => {
                if depth == 0 || width == 0 {
                    return cfg_err("mlp depth and width must be at least 1");
                }
            }
            ModelFamily::Linear => {}
        }
        self.train.validate()?;
        self.scfe.validate()?;
        self.gsm.validate()?;
        self.cchvae.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.epsilons, DEFAULT_EPSILONS.to_vec());
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.model, ModelFamily::Linear);
        assert_eq!(cfg.scfe, ScfeParams::default());
    }

    #[test]
    fn parses_nested_sections() {
        let text = r#"
            name = "blobs"
            epsilons = [0.0, 0.1]
            methods = ["SCFE", "CCHVAE"]
            model = { family = "mlp", depth = 2, width = 4 }
            [dataset]
            kind = "synthetic"
            n_per_class = 10
            d = 3
            class_separation = 4.0
            noise_std = 0.5
            [train]
            epochs = 50
            [gsm]
            samples_per_shell = 100
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.model, ModelFamily::Mlp { depth: 2, width: 4 });
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.learning_rate, 0.1);
        assert_eq!(cfg.gsm.samples_per_shell, 100);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn csv_source_parses() {
        let text = r#"
            [dataset]
            kind = "csv"
            path = "credit.csv"
            schema = [
                { name = "age", kind = "numeric" },
                { name = "job", kind = "categorical", categories = ["a", "b"] },
                { name = "risk", kind = "label", positive_label = "good" },
            ]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(cfg.dataset, DatasetSource::Csv { .. }));
    }

    #[test]
    fn invalid_grids_rejected() {
        for bad in [
            "epsilons = []",
            "epsilons = [0.1, 0.2]",
            "epsilons = [0.0, 0.2, 0.1]",
            "methods = []",
            "seeds = [1, 1]",
            "test_fraction = 1.0",
            "model = { family = \"ntk\", beta = 0.0 }",
            "unknown_key = 3",
        ] {
            assert!(ExperimentConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}
