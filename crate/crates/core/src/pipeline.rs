//! End-to-end stages: prepare, train, evaluate, export and report.
//!
//! Every stage has an in-memory form and a `cmd_*` form that reads and
//! writes the artifact layout under the configured output directory:
//!
//! ```text
//! <output>/prepared/manifest.json   counts, hashes, similarity files
//! <output>/prepared/split.json      leave-one-out split
//! <output>/prepared/ids.json        raw ids of users and items
//! <output>/prepared/sim/*.sim       one PathSim matrix per aspect and side
//! <output>/runs/<run>/              config.toml, train.log, best.ckpt,
//!                                   evaluation.json, records.jsonl
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, format_table, leave_one_out_split, EvalReport, FactorScorer, ItemPop, LooSplit,
    MetricRecord, DEFAULT_CUTOFFS,
};
use crate::ingest::{build_hin, load_dataset, to_implicit, DatasetManifest, IdMap, RawDataset};
use crate::model::{train_epoch, FeatureSet, FusionMode, NeuAcfModel, TrainingSet};
use crate::nn::{AdamState, DenseMatrix};
use crate::simpath::{parse_metapath, Side, SimilarityMatrix};

/// Rows per forward pass when embedding every node.
const EMBED_CHUNK: usize = 512;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub aspect: String,
    pub side: Side,
    pub metapath: String,
    pub file: String,
    pub nnz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedManifest {
    pub data_hash: String,
    pub dataset: Option<DatasetManifest>,
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_untested_users: usize,
    pub similarities: Vec<SimilarityEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdTables {
    pub users: IdMap,
    pub items: IdMap,
}

impl IdTables {
    pub fn side(&self, side: Side) -> &IdMap {
        match side {
            Side::User => &self.users,
            Side::Item => &self.items,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub manifest: PreparedManifest,
    pub split: LooSplit,
    pub ids: IdTables,
    pub similarities: Vec<SimilarityMatrix>,
}

fn sim_file_name(aspect: &str, side: Side) -> String {
    format!("{aspect}.{side}.sim")
}

fn prepared_dir(output: &Path) -> PathBuf {
    output.join("prepared")
}

/// Run directory name for a fusion mode, e.g. `self_attention` or
/// `single-History`.
pub fn run_id(fusion: &FusionMode) -> String {
    fusion.to_string().replace(':', "-")
}

pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("runs").join(run_id(&cfg.fusion))
}

/// Display name of the model a fusion mode trains.
pub fn model_name(fusion: &FusionMode) -> String {
    match fusion {
        FusionMode::Attention => "NeuACF".into(),
        FusionMode::SelfAttention => "NeuACF++".into(),
        FusionMode::Average => "Average".into(),
        FusionMode::Single(a) => format!("Single({a})"),
    }
}

/// Splits the interactions, builds the training graph and computes every
/// aspect's similarity matrices.
pub fn prepare_data(cfg: &RunConfig, raw: &RawDataset, data_hash: String) -> Result<Prepared> {
    let schema = raw.schema()?;
    let interactions = to_implicit(raw);
    let split = leave_one_out_split(
        &interactions,
        raw.n_users(),
        raw.n_items(),
        cfg.dataset.test_negatives,
        &mut rng_stream(cfg.seed, SPLIT_STREAM),
    );
    let graph = build_hin(raw, &schema, &split.train)?;
    let aspects = cfg.aspect_set()?;
    let mut similarities = Vec::new();
    let mut entries = Vec::new();
    for a in aspects.iter() {
        for (side, expr) in [(Side::User, &a.user_path), (Side::Item, &a.item_path)] {
            let path = parse_metapath(expr, &schema)?;
            let sim = SimilarityMatrix::compute(&graph, &a.label, side, &path)?;
            let nnz = sim.matrix.nnz();
            if nnz == 0 {
                log::warn!(
                    "{side}-side similarity for aspect `{}` ({expr}) is all zero",
                    a.label
                );
            }
            log::info!("{} {side} {expr}: {nnz} nonzeros", a.label);
            entries.push(SimilarityEntry {
                aspect: a.label.clone(),
                side,
                metapath: expr.clone(),
                file: sim_file_name(&a.label, side),
                nnz,
            });
            similarities.push(sim);
        }
    }
    let manifest = PreparedManifest {
        data_hash,
        dataset: None,
        n_users: split.n_users,
        n_items: split.n_items,
        n_train: split.train.len(),
        n_test: split.test.len(),
        n_untested_users: split.untested_users.len(),
        similarities: entries,
    };
    let item_type = raw.flavor.item_type();
    let ids = IdTables {
        users: raw.id_maps.get(&'U').cloned().unwrap_or_default(),
        items: raw.id_maps.get(&item_type).cloned().unwrap_or_default(),
    };
    Ok(Prepared {
        manifest,
        split,
        ids,
        similarities,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::ArtifactMismatch(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::io(format!("creating directory {}", path.display()), e))
}

impl Prepared {
    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(&dir.join("sim"))?;
        for (sim, entry) in self.similarities.iter().zip(&self.manifest.similarities) {
            sim.save(&dir.join("sim").join(&entry.file))?;
        }
        write_json(&dir.join("split.json"), &self.split)?;
        write_json(&dir.join("ids.json"), &self.ids)?;
        // Written last so a partial prepare never looks complete.
        write_json(&dir.join("manifest.json"), &self.manifest)
    }

    /// Loads the split, ids and the similarity matrices of `labels`.
    pub fn load(dir: &Path, labels: &[String]) -> Result<Self> {
        let manifest: PreparedManifest = read_json(&dir.join("manifest.json"))?;
        let split = read_json(&dir.join("split.json"))?;
        let ids = read_json(&dir.join("ids.json"))?;
        let mut similarities = Vec::new();
        for entry in manifest
            .similarities
            .iter()
            .filter(|e| labels.contains(&e.aspect))
        {
            let sim = SimilarityMatrix::load(&dir.join("sim").join(&entry.file))?;
            if sim.aspect != entry.aspect || sim.side != entry.side {
                return Err(Error::ArtifactMismatch(format!(
                    "{} does not hold the {} {} matrix",
                    entry.file, entry.aspect, entry.side
                )));
            }
            similarities.push(sim);
        }
        Ok(Prepared {
            manifest,
            split,
            ids,
            similarities,
        })
    }

    pub fn features(&self, labels: &[String]) -> Result<FeatureSet> {
        FeatureSet::select(&self.similarities, labels)
    }
}

pub fn load_raw(cfg: &RunConfig) -> Result<RawDataset> {
    load_dataset(
        cfg.dataset.flavor,
        &cfg.dataset.ratings,
        &cfg.dataset.attributes,
        cfg.dataset.min_user_items(),
    )
}

/// Reads the dataset, prepares every artifact and writes it to
/// `<output>/prepared`.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PreparedManifest> {
    cfg.validate()?;
    let raw = load_raw(cfg)?;
    let mut files: Vec<&Path> = vec![&cfg.dataset.ratings];
    files.extend(cfg.dataset.attributes.values().map(PathBuf::as_path));
    let dataset = DatasetManifest::build(&raw, &files)?;
    log::info!(
        "{}: {} users, {} items, {} ratings, density {:.3}%",
        dataset.flavor,
        dataset.n_users,
        dataset.n_items,
        dataset.n_ratings,
        100.0 * dataset.density
    );
    let mut prepared = prepare_data(cfg, &raw, cfg.data_hash()?)?;
    prepared.manifest.dataset = Some(dataset);
    let dir = prepared_dir(&cfg.output);
    create_dir(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)
        .map_err(|e| Error::io("archiving config", e))?;
    prepared.save(&dir)?;
    Ok(prepared.manifest)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub hr10: f64,
    pub ndcg10: f64,
    pub seconds: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch loss hr@10 ndcg@10 seconds";

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:.6} {:.4} {:.4} {:.1}",
            self.epoch, self.loss, self.hr10, self.ndcg10, self.seconds
        )
    }
}

pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    pub best: Checkpoint,
    pub best_report: EvalReport,
    /// Parameters after the final epoch.
    pub last: NeuAcfModel,
}

/// HR/NDCG of `model` on the split's test cases at the standard cutoffs.
pub fn evaluate_model(
    model: &NeuAcfModel,
    features: &FeatureSet,
    split: &LooSplit,
) -> Result<(
    std::collections::BTreeMap<usize, crate::eval::Metric>,
    FusionWeights,
)> {
    let (users, user_weights) = model.embed_all(features, Side::User, EMBED_CHUNK)?;
    let (items, item_weights) = model.embed_all(features, Side::Item, EMBED_CHUNK)?;
    let scorer = FactorScorer { users, items };
    let metrics = evaluate(&scorer, &split.test, &DEFAULT_CUTOFFS);
    Ok((
        metrics,
        FusionWeights {
            user: user_weights,
            item: item_weights,
        },
    ))
}

/// Per-node fusion weights, one row per node and one column per aspect.
pub struct FusionWeights {
    pub user: DenseMatrix,
    pub item: DenseMatrix,
}

/// Trains for the configured number of epochs, evaluating after each one
/// and keeping the parameters with the best HR@10 (earliest on ties).
pub fn train_model(
    cfg: &RunConfig,
    prepared: &Prepared,
    config_hash: &str,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let aspects = cfg.aspect_set()?;
    let split = &prepared.split;
    let mut model = NeuAcfModel::new(
        &aspects,
        cfg.fusion.clone(),
        cfg.model,
        split.n_users,
        split.n_items,
        &mut rng_stream(cfg.seed, INIT_STREAM),
    )?;
    let features = prepared.features(&model.aspects)?;
    let train = TrainingSet::new(
        split.n_users,
        split.n_items,
        split.train.iter().map(|it| (it.user, it.item)),
    );
    let mut optimizer = AdamState::new(cfg.adam_config(), model.params().iter().map(|p| p.len()));
    let mut rng = rng_stream(cfg.seed, TRAIN_STREAM);
    let train_cfg = cfg.train_config();
    log::info!(
        "training {} ({} parameters) on {} positives",
        model_name(&cfg.fusion),
        model.n_params(),
        train.len()
    );

    let mut history = Vec::with_capacity(cfg.train.epochs);
    let mut best: Option<(f64, usize, NeuAcfModel, AdamState, EvalReport)> = None;
    for epoch in 1..=cfg.train.epochs {
        let start = Instant::now();
        let loss = train_epoch(
            &mut model,
            &mut optimizer,
            &features,
            &train,
            &train_cfg,
            epoch,
            &mut rng,
        )?;
        let (metrics, _) = evaluate_model(&model, &features, split)?;
        let m10 = metrics[&10];
        let log = EpochLog {
            epoch,
            loss,
            hr10: m10.hr,
            ndcg10: m10.ndcg,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|b| m10.hr > b.0) {
            let report = EvalReport {
                model: model_name(&cfg.fusion),
                metrics,
                n_users: split.test.len(),
                epoch: Some(epoch),
                seed: cfg.seed,
                config_hash: config_hash.to_string(),
            };
            best = Some((m10.hr, epoch, model.clone(), optimizer.clone(), report));
        }
    }
    let last = model;
    let (_, epoch, model, optimizer, best_report) =
        best.ok_or_else(|| Error::Config("train.epochs must be positive".into()))?;
    let best = Checkpoint::new(
        CheckpointMeta {
            config_hash: config_hash.to_string(),
            data_hash: prepared.manifest.data_hash.clone(),
            seed: cfg.seed,
            epoch,
            aspects,
        },
        model,
        optimizer,
    )?;
    Ok(TrainOutcome {
        history,
        best,
        best_report,
        last,
    })
}

fn check_data_hash(cfg: &RunConfig, manifest: &PreparedManifest) -> Result<()> {
    let expected = cfg.data_hash()?;
    if manifest.data_hash != expected {
        return Err(Error::ArtifactMismatch(format!(
            "prepared data was built from a different dataset or split configuration \
             (prepared {}, config {expected}); rerun prepare",
            &manifest.data_hash
        )));
    }
    Ok(())
}

fn required_labels(cfg: &RunConfig) -> Result<Vec<String>> {
    let aspects = cfg.aspect_set()?;
    Ok(match &cfg.fusion {
        FusionMode::Single(key) => vec![aspects
            .find(key)
            .ok_or_else(|| Error::UnknownAspect(key.clone()))?
            .label
            .clone()],
        _ => aspects.labels(),
    })
}

/// Trains from prepared artifacts; writes the log, the resolved config and
/// the best checkpoint to the run directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepared = Prepared::load(&prepared_dir(&cfg.output), &required_labels(cfg)?)?;
    check_data_hash(cfg, &prepared.manifest)?;
    let dir = run_dir(cfg);
    create_dir(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)
        .map_err(|e| Error::io("archiving config", e))?;
    let log_path = dir.join("train.log");
    let mut log_file = File::create(&log_path)
        .map_err(|e| Error::io(format!("creating {}", log_path.display()), e))?;
    writeln!(log_file, "{EPOCH_LOG_HEADER}").map_err(|e| Error::io("writing train.log", e))?;
    let mut write_err = None;
    let outcome = train_model(cfg, &prepared, &cfg.config_hash()?, |line| {
        log::info!("{EPOCH_LOG_HEADER}: {line}");
        if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io("writing train.log", e));
    }
    outcome.best.save(&dir.join("best.ckpt"))?;
    Ok(outcome)
}

/// Mean fusion weight per aspect over all users and over all items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub aspects: Vec<String>,
    pub user_mean: Vec<f64>,
    pub item_mean: Vec<f64>,
}

fn column_means(m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    let n = m.rows().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub run_id: String,
    /// The model row first, then the ItemPop baseline.
    pub reports: Vec<EvalReport>,
    pub attention: Option<AttentionSummary>,
}

impl Evaluation {
    pub fn records(&self) -> Vec<MetricRecord> {
        self.reports
            .iter()
            .flat_map(|r| r.records(&self.run_id))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format_table(&self.reports);
        if let Some(a) = &self.attention {
            out.push_str(&format_attention(&self.run_id, a));
        }
        out
    }
}

fn format_attention(run: &str, a: &AttentionSummary) -> String {
    let mut out = format!("mean fusion weights ({run})\n");
    out.push_str(&format!("{:<12}{:>10}{:>10}\n", "aspect", "user", "item"));
    for ((label, u), i) in a.aspects.iter().zip(&a.user_mean).zip(&a.item_mean) {
        out.push_str(&format!("{label:<12}{u:>10.4}{i:>10.4}\n"));
    }
    out
}

/// Scores a checkpoint on the prepared split next to the ItemPop baseline.
pub fn evaluate_checkpoint(ck: &Checkpoint, prepared: &Prepared) -> Result<Evaluation> {
    let model = &ck.model;
    let features = prepared.features(&model.aspects)?;
    let (metrics, weights) = evaluate_model(model, &features, &prepared.split)?;
    let h = &ck.header;
    let report = EvalReport {
        model: model_name(&model.fusion),
        metrics,
        n_users: prepared.split.test.len(),
        epoch: Some(h.epoch),
        seed: h.seed,
        config_hash: h.config_hash.clone(),
    };
    let pop = ItemPop::fit(&prepared.split.train, prepared.split.n_items);
    let baseline = EvalReport {
        model: "ItemPop".into(),
        metrics: evaluate(&pop, &prepared.split.test, &DEFAULT_CUTOFFS),
        n_users: prepared.split.test.len(),
        epoch: None,
        seed: h.seed,
        config_hash: h.config_hash.clone(),
    };
    let attention = matches!(
        model.fusion,
        FusionMode::Attention | FusionMode::SelfAttention
    )
    .then(|| AttentionSummary {
        aspects: model.aspects.clone(),
        user_mean: column_means(&weights.user),
        item_mean: column_means(&weights.item),
    });
    Ok(Evaluation {
        run_id: run_id(&model.fusion),
        reports: vec![report, baseline],
        attention,
    })
}

fn load_checked_checkpoint(cfg: &RunConfig, path: &Path) -> Result<(Checkpoint, Prepared)> {
    let ck = Checkpoint::load(path)?;
    let expected = cfg.config_hash()?;
    if ck.header.config_hash != expected {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint {} was trained under config {}, current config hashes to {expected}",
            path.display(),
            ck.header.config_hash
        )));
    }
    let prepared = Prepared::load(&prepared_dir(&cfg.output), &ck.model.aspects)?;
    check_data_hash(cfg, &prepared.manifest)?;
    if prepared.manifest.data_hash != ck.header.data_hash {
        return Err(Error::ArtifactMismatch(
            "checkpoint and prepared data come from different preparations".into(),
        ));
    }
    Ok((ck, prepared))
}

/// Evaluates a checkpoint (default: the run's best) and writes
/// `evaluation.json` and `records.jsonl` to the run directory.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Evaluation> {
    let dir = run_dir(cfg);
    let path = checkpoint.map_or_else(|| dir.join("best.ckpt"), Path::to_path_buf);
    let (ck, prepared) = load_checked_checkpoint(cfg, &path)?;
    let evaluation = evaluate_checkpoint(&ck, &prepared)?;
    create_dir(&dir)?;
    write_json(&dir.join("evaluation.json"), &evaluation)?;
    write_records(&dir.join("records.jsonl"), &evaluation.records())?;
    Ok(evaluation)
}

fn write_records(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Raw ids and aspect-level factors of every node on `side`.
pub fn export_factors(
    ck: &Checkpoint,
    prepared: &Prepared,
    side: Side,
    aspect: &str,
) -> Result<(Vec<String>, DenseMatrix)> {
    let label = ck
        .header
        .aspects
        .find(aspect)
        .map(|a| a.label.clone())
        .filter(|l| ck.model.aspects.contains(l))
        .ok_or_else(|| Error::UnknownAspect(aspect.to_string()))?;
    let features = prepared.features(&ck.model.aspects)?;
    let factors = ck
        .model
        .aspect_factors_all(&features, side, &label, EMBED_CHUNK)?;
    let ids = prepared.ids.side(side);
    if ids.len() != factors.rows() {
        return Err(Error::ArtifactMismatch(format!(
            "{} {side} ids for {} factor rows",
            ids.len(),
            factors.rows()
        )));
    }
    let raw = (0..ids.len()).map(|k| ids.raw(k).to_string()).collect();
    Ok((raw, factors))
}

/// Tab-separated `raw_id v1 .. vd`, one node per line.
pub fn write_factors(w: impl Write, ids: &[String], factors: &DenseMatrix) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    for (k, id) in ids.iter().enumerate() {
        w.write_all(id.as_bytes())?;
        for v in factors.row(k) {
            write!(w, "\t{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes one aspect's factors to `output`, or to
/// `<run>/factors.<side>.<aspect>.tsv`; returns the path written.
pub fn cmd_export_factors(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    side: Side,
    aspect: &str,
    output: Option<&Path>,
) -> Result<PathBuf> {
    let dir = run_dir(cfg);
    let path = checkpoint.map_or_else(|| dir.join("best.ckpt"), Path::to_path_buf);
    let (ck, prepared) = load_checked_checkpoint(cfg, &path)?;
    let (ids, factors) = export_factors(&ck, &prepared, side, aspect)?;
    let out = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let label = ck
                .header
                .aspects
                .find(aspect)
                .expect("checked")
                .label
                .clone();
            dir.join(format!("factors.{side}.{label}.tsv"))
        }
    };
    let file =
        File::create(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_factors(file, &ids, &factors)
        .map_err(|e| Error::io(format!("writing {}", out.display()), e))?;
    Ok(out)
}

/// Collects every evaluated run under `<output>/runs` into one table (one
/// ItemPop row) plus fusion-weight summaries; writes `report.txt` and
/// `records.jsonl` to the output directory.
pub fn cmd_report(output: &Path) -> Result<String> {
    let runs = output.join("runs");
    let mut evaluations = BTreeMap::new();
    let entries = std::fs::read_dir(&runs)
        .map_err(|e| Error::io(format!("listing {}", runs.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io("listing runs", e))?;
        let path = entry.path().join("evaluation.json");
        if path.is_file() {
            let ev: Evaluation = read_json(&path)?;
            evaluations.insert(ev.run_id.clone(), ev);
        }
    }
    if evaluations.is_empty() {
        return Err(Error::ArtifactMismatch(format!(
            "no evaluated runs under {}",
            runs.display()
        )));
    }
    let mut rows = Vec::new();
    let mut baseline = None;
    let mut records = Vec::new();
    for ev in evaluations.values() {
        records.extend(ev.records());
        for r in &ev.reports {
            if r.model == "ItemPop" {
                baseline.get_or_insert_with(|| r.clone());
            } else {
                let mut row = r.clone();
                row.model = format!("{} [{}]", r.model, ev.run_id);
                rows.push(row);
            }
        }
    }
    rows.extend(baseline);
    let mut text = format_table(&rows);
    for ev in evaluations.values() {
        if let Some(a) = &ev.attention {
            text.push('\n');
            text.push_str(&format_attention(&ev.run_id, a));
        }
    }
    std::fs::write(output.join("report.txt"), &text)
        .map_err(|e| Error::io("writing report.txt", e))?;
    write_records(&output.join("records.jsonl"), &records)?;
    Ok(text)
}
