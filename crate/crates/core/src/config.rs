//! Declarative run configuration (TOML) and its stable hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_TEST_NEGATIVES;
use crate::hin::Schema;
use crate::ingest::{checksum_file, Flavor};
use crate::model::{Aspect, AspectSet, FusionMode, ModelDims, TrainConfig};
use crate::nn::AdamConfig;
use crate::simpath::parse_metapath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub flavor: Flavor,
    pub ratings: PathBuf,
    /// Relation label (item type + attribute type, e.g. `MD`) -> pair file.
    #[serde(default)]
    pub attributes: BTreeMap<String, PathBuf>,
    /// Users with fewer distinct items are dropped; defaults to 10 for
    /// Amazon and 0 for MovieLens.
    #[serde(default)]
    pub min_user_items: Option<usize>,
    #[serde(default = "default_test_negatives")]
    pub test_negatives: usize,
}

fn default_test_negatives() -> usize {
    DEFAULT_TEST_NEGATIVES
}

impl DatasetConfig {
    pub fn min_user_items(&self) -> usize {
        self.min_user_items.unwrap_or(match self.flavor {
            Flavor::Movielens => 0,
            Flavor::Amazon => 10,
        })
    }

    pub fn schema(&self) -> Result<Schema> {
        self.flavor
            .schema_with(self.attributes.keys().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub neg_ratio: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 1024,
            learning_rate: 0.0005,
            neg_ratio: 10,
            epochs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Defaults to the flavor's standard aspects.
    #[serde(default)]
    pub aspects: Option<Vec<Aspect>>,
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_fusion() -> FusionMode {
    FusionMode::SelfAttention
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunConfig {
    /// A config with defaults for everything but the dataset.
    pub fn new(dataset: DatasetConfig) -> Self {
        RunConfig {
            dataset,
            aspects: None,
            fusion: default_fusion(),
            model: ModelDims::default(),
            train: TrainSection::default(),
            seed: 0,
            output: default_output(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative dataset and output paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.dataset.ratings);
        cfg.dataset.attributes.values_mut().for_each(resolve);
        resolve(&mut cfg.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn aspect_set(&self) -> Result<AspectSet> {
        match &self.aspects {
            Some(list) => AspectSet::new(list.clone()),
            None => Ok(match self.dataset.flavor {
                Flavor::Movielens => AspectSet::movielens_default(),
                Flavor::Amazon => AspectSet::amazon_default(),
            }),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            neg_ratio: self.train.neg_ratio,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.train.learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.latent_dim", self.model.latent_dim),
            ("model.hidden", self.model.hidden),
            ("model.layers", self.model.layers),
            ("model.attention_hidden", self.model.attention_hidden),
            ("train.batch_size", self.train.batch_size),
            ("train.neg_ratio", self.train.neg_ratio),
            ("train.epochs", self.train.epochs),
            ("dataset.test_negatives", self.dataset.test_negatives),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        let schema = self.dataset.schema()?;
        let aspects = self.aspect_set()?;
        for a in aspects.iter() {
            let user = parse_metapath(&a.user_path, &schema)?;
            let item = parse_metapath(&a.item_path, &schema)?;
            let item_type = self.dataset.flavor.item_type();
            if user.endpoint != 'U' || item.endpoint != item_type {
                return Err(Error::Config(format!(
                    "aspect `{}` needs a U-anchored user path and a {item_type}-anchored item path",
                    a.label
                )));
            }
        }
        if let FusionMode::Single(key) = &self.fusion {
            if aspects.find(key).is_none() {
                return Err(Error::UnknownAspect(key.clone()));
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the prepared artifacts: dataset
    /// contents, split settings, aspects and seed.
    pub fn data_hash(&self) -> Result<String> {
        let mut files = vec![checksum_file(&self.dataset.ratings)?.sha256];
        for path in self.dataset.attributes.values() {
            files.push(checksum_file(path)?.sha256);
        }
        sha256_json(&(
            self.dataset.flavor,
            &files,
            self.dataset.attributes.keys().collect::<Vec<_>>(),
            self.dataset.min_user_items(),
            self.dataset.test_negatives,
            self.aspect_set()?,
            self.seed,
        ))
    }

    /// Hash of the full resolved configuration apart from where outputs go.
    pub fn config_hash(&self) -> Result<String> {
        sha256_json(&(self.data_hash()?, &self.fusion, self.model, &self.train))
    }
}
