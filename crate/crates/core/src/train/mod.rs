//! Optimizer, learning-rate schedule, batch assembly, evaluation and the
//! epoch loop.

pub mod batch;
pub mod eval;
pub mod optimizer;
pub mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    load_split, scan, stratified_split, Catalog, DatasetError, DatasetIndex, LabeledImage, PreprocessCache, Split,
};
use crate::nn::{Checkpoint, Mode, Network, NetworkSpec, NnError, Real};
use crate::preprocess::PipelineConfig;

pub use batch::{assemble_from, assemble_minibatch, epoch_plan, Batch};
pub use eval::{evaluate, ConfusionMatrix, Evaluation};
pub use optimizer::{AmsGrad, AmsGradConfig};
pub use schedule::Schedule;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => TrainError::Numerical(e.to_string()),
            e => TrainError::Nn(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: PathBuf,
    pub catalog: PathBuf,
    /// Split manifest to use; when absent the corpus is scanned and split.
    pub manifest: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub fractions: (f64, f64, f64),
    /// Split seed; defaults to the training seed.
    pub split_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            catalog: PathBuf::from("data/catalog.json"),
            manifest: None,
            cache_dir: None,
            fractions: (0.65, 0.25, 0.10),
            split_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_epochs: u32,
    pub batch_size: usize,
    pub eval_batch: usize,
    pub precision: Precision,
    /// Save the resumable state every this many epochs.
    pub checkpoint_every: u32,
    /// Stop once validation accuracy reaches this value.
    pub target_val_acc: Option<f64>,
    pub out_dir: PathBuf,
    pub schedule: Schedule,
    pub optimizer: AmsGradConfig,
    /// Architecture; defaults to the reference network sized to the catalog.
    pub network: Option<NetworkSpec>,
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_epochs: 100,
            batch_size: 32,
            eval_batch: 64,
            precision: Precision::F32,
            checkpoint_every: 1,
            target_val_acc: None,
            out_dir: PathBuf::from("runs/default"),
            schedule: Schedule::default(),
            optimizer: AmsGradConfig::default(),
            network: None,
            data: DataConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return fail("batch_size must be even and positive");
        }
        if self.max_epochs == 0 || self.checkpoint_every == 0 || self.eval_batch == 0 {
            return fail("max_epochs, checkpoint_every and eval_batch must be positive");
        }
        if self.target_val_acc.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return fail("target_val_acc must be within [0, 1]");
        }
        if !(self.schedule.base_lr > 0.0) {
            return fail("base_lr must be positive");
        }
        self.pipeline.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochMetrics {
    /// `epoch,lr,train_loss,train_acc,val_loss,val_acc`
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }

    pub fn parse(line: &str) -> Result<Self, TrainError> {
        let bad = || TrainError::Config(format!("malformed metrics line {line:?}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            lr: num(1)?,
            train_loss: num(2)?,
            train_acc: num(3)?,
            val_loss: num(4)?,
            val_acc: num(5)?,
        })
    }

    fn as_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("lr".to_string(), self.lr),
            ("train_loss".to_string(), self.train_loss),
            ("train_acc".to_string(), self.train_acc),
            ("val_loss".to_string(), self.val_loss),
            ("val_acc".to_string(), self.val_acc),
        ])
    }

    // higher accuracy wins, then lower loss
    fn beats(&self, other: &EpochMetrics) -> bool {
        self.val_acc > other.val_acc || (self.val_acc == other.val_acc && self.val_loss < other.val_loss)
    }
}

/// Files written into the output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub best: PathBuf,
    pub last: PathBuf,
    pub optimizer: PathBuf,
    pub metrics: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            best: dir.join("best.ckpt"),
            last: dir.join("last.ckpt"),
            optimizer: dir.join("optimizer.bin"),
            metrics: dir.join("metrics.csv"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: Option<u32>,
    pub stopped_early: bool,
    pub paths: RunPaths,
}

impl TrainOutcome {
    pub fn best(&self) -> Option<&EpochMetrics> {
        self.best_epoch.and_then(|e| self.metrics.iter().find(|m| m.epoch == e))
    }
}

fn epoch_rng(seed: u64, epoch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn write_metrics(path: &Path, metrics: &[EpochMetrics]) -> Result<(), TrainError> {
    let mut text = String::new();
    for m in metrics {
        writeln!(text, "{}", m.csv_line()).expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>, TrainError> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(EpochMetrics::parse)
        .collect()
}

struct RunState<T> {
    net: Network<T>,
    opt: AmsGrad<T>,
    history: Vec<EpochMetrics>,
}

fn resume_state<T: Real>(cfg: &TrainConfig, spec: &NetworkSpec, paths: &RunPaths) -> Result<RunState<T>, TrainError> {
    let ck = Checkpoint::load(&paths.last)?;
    if &ck.meta.spec != spec {
        return Err(TrainError::Config(
            "checkpoint architecture differs from the configuration".into(),
        ));
    }
    if ck.meta.seed != cfg.seed {
        return Err(TrainError::Config(format!(
            "checkpoint seed {} differs from configured seed {}",
            ck.meta.seed, cfg.seed
        )));
    }
    let mut history = read_metrics(&paths.metrics)?;
    history.truncate(ck.meta.epoch as usize);
    if history.len() != ck.meta.epoch as usize {
        return Err(TrainError::Config(
            "metrics log is shorter than the checkpoint epoch".into(),
        ));
    }
    Ok(RunState {
        net: ck.to_network()?,
        opt: AmsGrad::load(&paths.optimizer, cfg.optimizer)?,
        history,
    })
}

/// Trains on in-memory examples, writing checkpoints and the metrics log
/// into `cfg.out_dir`.
///
/// With `resume`, continues from the saved state in the output directory.
pub fn train_on<T: Real>(
    cfg: &TrainConfig,
    spec: NetworkSpec,
    train: &[LabeledImage],
    val: &[LabeledImage],
    resume: bool,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config(
            "training and validation splits must be non-empty".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let paths = RunPaths::new(&cfg.out_dir);
    let RunState {
        mut net,
        mut opt,
        mut history,
    } = if resume && paths.last.exists() {
        resume_state(cfg, &spec, &paths)?
    } else {
        RunState {
            net: Network::new(spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?,
            opt: AmsGrad::new(cfg.optimizer),
            history: Vec::new(),
        }
    };
    let mut best = history.iter().copied().reduce(|b, m| if m.beats(&b) { m } else { b });
    let target_hit = |m: &EpochMetrics| cfg.target_val_acc.is_some_and(|t| m.val_acc >= t);
    let mut stopped_early = history.last().is_some_and(target_hit);

    let mut epoch = history.len() as u32;
    while epoch < cfg.max_epochs && !stopped_early {
        let mut rng = epoch_rng(cfg.seed, epoch);
        let val_losses: Vec<f64> = history.iter().map(|m| m.val_loss).collect();
        let lr = cfg.schedule.lr_at(epoch, &val_losses);

        net.set_mode(Mode::Train);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (step, group) in epoch_plan(train.len(), cfg.batch_size, &mut rng)?.iter().enumerate() {
            let batch = assemble_from(train, group, &mut rng);
            let out = net
                .forward_backward(batch.to_tensor::<T>(), &batch.labels, &mut rng)
                .map_err(|e| TrainError::from(e).context(epoch, step))?;
            if !out.loss.is_finite() {
                return Err(TrainError::Numerical(format!(
                    "epoch {epoch} step {step}: loss {}",
                    out.loss
                )));
            }
            loss_sum += out.loss * batch.len() as f64;
            correct += out
                .predictions()
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            seen += batch.len();
            let params = net.params_mut().into_iter().map(|(_, p)| p).collect();
            opt.step(params, lr).map_err(|e| e.context(epoch, step))?;
        }
        net.set_mode(Mode::Infer);
        let ev = evaluate(&net, val, cfg.eval_batch)?;
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss: ev.loss,
            val_acc: ev.accuracy,
        };
        log::info!("{}", m.csv_line());
        history.push(m);
        write_metrics(&paths.metrics, &history)?;
        epoch += 1;

        if best.is_none_or(|b| m.beats(&b)) {
            best = Some(m);
            Checkpoint::from_network(&net, epoch, cfg.seed, m.as_map())?.save(&paths.best)?;
        }
        stopped_early = target_hit(&m);
        if epoch % cfg.checkpoint_every == 0 || epoch == cfg.max_epochs || stopped_early {
            Checkpoint::from_network(&net, epoch, cfg.seed, m.as_map())?.save(&paths.last)?;
            opt.save(&paths.optimizer)?;
        }
    }
    Ok(TrainOutcome {
        best_epoch: best.map(|b| b.epoch),
        metrics: history,
        stopped_early,
        paths,
    })
}

impl TrainError {
    fn context(self, epoch: u32, step: usize) -> Self {
        match self {
            TrainError::Numerical(m) => TrainError::Numerical(format!("epoch {epoch} step {step}: {m}")),
            e => e,
        }
    }
}

/// Loaded splits of a configured corpus.
pub struct PreparedData {
    pub catalog: Catalog,
    pub index: DatasetIndex,
    pub train: Vec<LabeledImage>,
    pub val: Vec<LabeledImage>,
    pub quarantined: Vec<(PathBuf, String)>,
}

/// Reads the catalog, obtains the split (from the manifest, or by scanning
/// and splitting), and preprocesses the training and validation images.
pub fn prepare_data(cfg: &TrainConfig) -> Result<PreparedData, TrainError> {
    let d = &cfg.data;
    let catalog = Catalog::load(&d.catalog)?;
    let index = match &d.manifest {
        Some(m) => DatasetIndex::load_manifest(m)?,
        None => {
            let scanned = scan(&d.root, &catalog)?;
            stratified_split(&scanned, catalog.len(), d.fractions, d.split_seed.unwrap_or(cfg.seed))?
        }
    };
    let cache = d.cache_dir.as_ref().map(PreprocessCache::new);
    let tr = load_split(&index, Split::Train, &cfg.pipeline, cache.as_ref())?;
    let va = load_split(&index, Split::Val, &cfg.pipeline, cache.as_ref())?;
    let mut quarantined = tr.quarantined;
    quarantined.extend(va.quarantined);
    Ok(PreparedData {
        catalog,
        index,
        train: tr.examples,
        val: va.examples,
        quarantined,
    })
}

/// Network spec for a configuration: the explicit one, or the reference
/// architecture with one output per catalog item.
pub fn resolve_spec(cfg: &TrainConfig, classes: usize) -> Result<NetworkSpec, TrainError> {
    let spec = cfg
        .network
        .clone()
        .unwrap_or_else(|| NetworkSpec::arc().with_classes(classes));
    let side = cfg.pipeline.target_side;
    if spec.input != [3, side, side] {
        return Err(TrainError::Config(format!(
            "network input {:?} does not match pipeline output 3x{side}x{side}",
            spec.input
        )));
    }
    if spec.classes != classes {
        return Err(TrainError::Config(format!(
            "network has {} outputs for {classes} catalog items",
            spec.classes
        )));
    }
    Ok(spec)
}

/// End-to-end training from a configuration.
pub fn train(cfg: &TrainConfig, resume: bool) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let spec = resolve_spec(cfg, data.catalog.len())?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    data.index.save_manifest(cfg.out_dir.join("manifest.csv"))?;
    for (p, why) in &data.quarantined {
        log::warn!("quarantined {}: {why}", p.display());
    }
    match cfg.precision {
        Precision::F32 => train_on::<f32>(cfg, spec, &data.train, &data.val, resume),
        Precision::F64 => train_on::<f64>(cfg, spec, &data.train, &data.val, resume),
    }
}
