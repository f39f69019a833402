//! Shared fixtures for the kernel benchmarks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use neuacf::config::{DatasetConfig, RunConfig};
use neuacf::ingest::{build_hin, Flavor, RawDataset};
use neuacf::model::Example;
use neuacf::pipeline::{prepare_data, Prepared};
use neuacf::synthetic::{planted_blocks, separable_aspects};
use neuacf::{FeatureSet, HinGraph, NeuAcfModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub raw: RawDataset,
    pub cfg: RunConfig,
    pub prepared: Prepared,
    pub graph: HinGraph,
}

/// A planted-block dataset with history and genre aspects, prepared with
/// the default model sizes scaled down by `shrink`.
pub fn fixture(n_users: usize, n_items: usize, shrink: usize) -> Fixture {
    let raw = planted_blocks(n_users, n_items, 8, 20, 17);
    let mut cfg = RunConfig::new(DatasetConfig {
        flavor: Flavor::Movielens,
        ratings: PathBuf::from("unused"),
        attributes: BTreeMap::new(),
        min_user_items: None,
        test_negatives: 99,
    });
    cfg.aspects = Some(separable_aspects().iter().cloned().collect());
    cfg.model.hidden /= shrink;
    cfg.model.latent_dim /= shrink;
    let prepared = prepare_data(&cfg, &raw, "bench".into()).expect("fixture prepares");
    let graph = build_hin(&raw, &raw.schema().unwrap(), &prepared.split.train).unwrap();
    Fixture {
        raw,
        cfg,
        prepared,
        graph,
    }
}

impl Fixture {
    pub fn model(&self) -> NeuAcfModel {
        let aspects = self.cfg.aspect_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        NeuAcfModel::new(
            &aspects,
            self.cfg.fusion.clone(),
            self.cfg.model,
            self.prepared.split.n_users,
            self.prepared.split.n_items,
            &mut rng,
        )
        .unwrap()
    }

    pub fn features(&self, model: &NeuAcfModel) -> FeatureSet {
        self.prepared.features(&model.aspects).unwrap()
    }

    /// One positive and `neg_ratio` random negatives per sampled user.
    pub fn batch(&self, size: usize) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let split = &self.prepared.split;
        (0..size)
            .map(|k| {
                let it = &split.train[rng.gen_range(0..split.train.len())];
                if k % 11 == 0 {
                    Example {
                        user: it.user,
                        item: it.item,
                        label: 1.0,
                    }
                } else {
                    Example {
                        user: it.user,
                        item: rng.gen_range(0..split.n_items),
                        label: 0.0,
                    }
                }
            })
            .collect()
    }
}
