//! Run configuration, read from TOML. Unknown keys are rejected everywhere.
//!
//! Relative paths are resolved against the directory of the config file.
//! `PROTOLAYER_SEED`, when set, replaces `seed`.

use std::path::{Path, PathBuf};

use protolayer::train::{AdamConfig, NeighborhoodSchedule};
use protolayer::{LossKind, Padding};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "PROTOLAYER_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub output_dir: PathBuf,
    pub loss: LossName,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub neural_gas: Option<NeuralGasConfig>,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub reject: RejectConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Glvq,
    Rslvq,
}

impl From<LossName> for LossKind {
    fn from(l: LossName) -> Self {
        match l {
            LossName::Glvq => LossKind::Glvq,
            LossName::Rslvq => LossKind::Rslvq,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    SyntheticBlobs {
        n_classes: usize,
        n_per_class: usize,
        dim: usize,
        #[serde(default = "one")]
        spread: f64,
        /// Share of the generated points held out for testing.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    IdxImages {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingName {
    #[default]
    Valid,
    Same,
}

impl From<PaddingName> for Padding {
    fn from(p: PaddingName) -> Self {
        match p {
            PaddingName::Valid => Padding::Valid,
            PaddingName::Same => Padding::Same,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    /// Copies of random training samples (windows for kernel-prototypes).
    #[default]
    Samples,
    /// k-means centers (per class for head prototypes).
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Identity,
    Relu,
    Softmax,
    Sigmoid,
    HardOnehot,
    HardHeaviside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissimilarityName {
    #[default]
    Euclidean,
    Omega,
    Projection,
    NonlinearProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarActivationName {
    Identity,
    Relu,
    Sigmoid,
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerConfig {
    ProtoConv {
        kernels: usize,
        kernel_size: [usize; 2],
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
        #[serde(default)]
        padding: PaddingName,
        /// Train squared radii and emit n-ball scores.
        #[serde(default)]
        radii: bool,
        /// Initial squared radius; defaults to the median distance of the
        /// initialization windows to their closest kernel.
        #[serde(default)]
        init_radius_sq: Option<f64>,
        #[serde(default)]
        init: InitName,
    },
    Activation {
        kind: ActivationName,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        sigma_decay: f64,
    },
    LvqHead {
        #[serde(default = "one_usize")]
        prototypes_per_class: usize,
        #[serde(default)]
        dissimilarity: DissimilarityName,
        /// Rows of Ω; required for the projection kinds, defaults to the
        /// input dimension for `omega`.
        #[serde(default)]
        projection_dim: Option<usize>,
        /// φ of the nonlinear projection.
        #[serde(default)]
        activation: Option<ScalarActivationName>,
        #[serde(default)]
        init: InitName,
    },
}

/// Adam settings; omitted keys keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }
    }
}

impl From<OptimizerConfig> for AdamConfig {
    fn from(o: OptimizerConfig) -> Self {
        AdamConfig {
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralGasConfig {
    pub lambda: f64,
    #[serde(default = "one")]
    pub decay: f64,
}

impl NeuralGasConfig {
    pub fn schedule(&self) -> CliResult<NeighborhoodSchedule> {
        Ok(NeighborhoodSchedule::new(self.lambda, self.decay)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    /// Strength of the l1 penalty on the squared radii of kernel-prototypes.
    #[serde(default)]
    pub l1_radii: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum RejectConfig {
    #[default]
    None,
    /// Either explicit squared radii per head prototype, or a quantile of
    /// the winner distances of correctly classified training points.
    Nball {
        #[serde(default)]
        quantile: Option<f64>,
        #[serde(default)]
        radii_sq: Option<Vec<f64>>,
    },
    CostRatio {
        lambda_e: f64,
        lambda_r: f64,
    },
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolves relative paths against its directory
    /// and applies the seed override from the environment.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env_seed()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DataConfig::IdxImages {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.data
        {
            fix(train_images);
            fix(train_labels);
            fix(test_images);
            fix(test_labels);
        }
    }

    pub fn apply_env_seed(&mut self) -> CliResult<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.batch_size == 0 {
            return Err(CliError::config("batch_size must be positive"));
        }
        match &self.data {
            DataConfig::SyntheticBlobs {
                n_classes,
                n_per_class,
                dim,
                spread,
                test_fraction,
            } => {
                if *n_classes < 2 || *n_per_class == 0 || *dim == 0 || !(*spread >= 0.0) {
                    return Err(CliError::config(
                        "blobs need n_classes ≥ 2, positive n_per_class and dim, spread ≥ 0",
                    ));
                }
                if !(0.0..1.0).contains(test_fraction) {
                    return Err(CliError::config("test_fraction must lie in [0, 1)"));
                }
            }
            DataConfig::IdxImages { .. } => {}
        }
        AdamConfig::from(self.optimizer).validate()?;
        if let Some(ng) = &self.neural_gas {
            ng.schedule()?;
        }
        if !(self.regularization.l1_radii >= 0.0) {
            return Err(CliError::config("l1_radii must be non-negative"));
        }
        match &self.reject {
            RejectConfig::Nball { quantile, radii_sq } => match (quantile, radii_sq) {
                (Some(q), None) if (0.0..=1.0).contains(q) => {}
                (None, Some(_)) => {}
                _ => {
                    return Err(CliError::config(
                        "nball reject needs exactly one of quantile (in [0, 1]) or radii_sq",
                    ))
                }
            },
            RejectConfig::CostRatio { lambda_e, lambda_r } => {
                protolayer::RejectPolicy::CostRatio {
                    lambda_e: *lambda_e,
                    lambda_r: *lambda_r,
                }
                .validate()?;
            }
            RejectConfig::None => {}
        }
        if !matches!(self.model.layers.last(), Some(LayerConfig::LvqHead { .. })) {
            return Err(CliError::config("the last layer must be an lvq_head"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = r#"
seed = 3
epochs = 2
batch_size = 8
output_dir = "out"
loss = "glvq"

[data]
kind = "synthetic_blobs"
n_classes = 3
n_per_class = 20
dim = 2

[[model.layers]]
type = "lvq_head"
"#;

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_toml(BLOBS).unwrap();
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.reject, RejectConfig::None);
        assert!(matches!(
            c.model.layers[0],
            LayerConfig::LvqHead {
                prototypes_per_class: 1,
                dissimilarity: DissimilarityName::Euclidean,
                ..
            }
        ));
    }

    #[test]
    fn unknown_keys_are_errors() {
        for (from, to) in [
            ("seed = 3", "seed = 3\nsede = 4"),
            ("dim = 2", "dim = 2\nspred = 1.0"),
            ("type = \"lvq_head\"", "type = \"lvq_head\"\nprototypes_per_clas = 2"),
            ("type = \"lvq_head\"", "type = \"lvq_hed\""),
        ] {
            let text = BLOBS.replace(from, to);
            let err = RunConfig::from_toml(&text).unwrap_err();
            assert_eq!(err.class, "config", "{text}");
        }
    }

    #[test]
    fn head_must_be_last() {
        let text = format!("{BLOBS}\n[[model.layers]]\ntype = \"activation\"\nkind = \"identity\"\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut c = RunConfig::from_toml(BLOBS).unwrap();
        c.resolve_paths(Path::new("/tmp/x"));
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x/out"));
    }
}
