use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use arc_checkout::{identify, CheckoutService, Classifier, NetworkClassifier, ServiceOptions};
use arc_core::dataset::{load_split, scan, stratified_split, Catalog, DatasetIndex, Split};
use arc_core::nn::{Checkpoint, Network};
use arc_core::preprocess::{run_pipeline, PipelineConfig};
use arc_core::synth::{self, FrameSize};
use arc_core::train::{self, evaluate, TrainConfig};
use arc_core::Raster;
use serde::Serialize;

use crate::{EvalArgs, InferArgs, PreprocessArgs, ServeArgs, SplitArgs, SynthArgs, TrainArgs};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_pipeline(path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = read_toml(path)?;
    cfg.validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(cfg)
}

/// The explicit pipeline, else `pipeline.toml` beside the checkpoint if present.
fn pipeline_near(explicit: Option<&Path>, checkpoint: &Path) -> Result<Option<PipelineConfig>> {
    if let Some(p) = explicit {
        return load_pipeline(p).map(Some);
    }
    let sibling = checkpoint.with_file_name("pipeline.toml");
    if sibling.is_file() {
        log::info!("using {}", sibling.display());
        return load_pipeline(&sibling).map(Some);
    }
    Ok(None)
}

fn load_network(path: &Path) -> Result<(Checkpoint, Network<f32>)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let net = ckpt
        .to_network()
        .with_context(|| format!("restoring network from {}", path.display()))?;
    Ok((ckpt, net))
}

fn image_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("{} does not exist", input.display());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no images in {}", input.display());
    }
    Ok(files)
}

#[derive(Serialize)]
struct PreprocessSummary {
    written: usize,
    failed: Vec<(PathBuf, String)>,
}

pub fn preprocess(args: &PreprocessArgs) -> Result<()> {
    let fixed = args.pipeline.as_deref().map(load_pipeline).transpose()?;
    let files = image_files(&args.input)?;
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut summary = PreprocessSummary {
        written: 0,
        failed: Vec::new(),
    };
    for path in files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        let result = Raster::open(&path).map_err(anyhow::Error::from).and_then(|frame| {
            let cfg = fixed
                .clone()
                .unwrap_or_else(|| PipelineConfig::for_frame(frame.height(), frame.width()));
            let trace = run_pipeline(&frame, &cfg)?;
            trace.output.save_png(args.output.join(format!("{stem}.png")))?;
            if args.dump_stages {
                trace.dump(&args.output.join(&stem))?;
            }
            Ok(())
        });
        match result {
            Ok(()) => summary.written += 1,
            Err(e) => {
                log::warn!("{}: {e:#}", path.display());
                summary.failed.push((path, format!("{e:#}")));
            }
        }
    }
    print_json(&summary)?;
    if summary.written == 0 {
        bail!("no image could be preprocessed");
    }
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary {
    images: usize,
    train: usize,
    val: usize,
    test: usize,
    manifest: PathBuf,
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let catalog_path = args.catalog.clone().unwrap_or_else(|| args.root.join("catalog.json"));
    let catalog = Catalog::load(&catalog_path).with_context(|| format!("loading {}", catalog_path.display()))?;
    let index = stratified_split(&scan(&args.root, &catalog)?, catalog.len(), args.fractions, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    index.save_manifest(&args.out)?;
    print_json(&SplitSummary {
        images: index.len(),
        train: index.split(Split::Train).count(),
        val: index.split(Split::Val).count(),
        test: index.split(Split::Test).count(),
        manifest: args.out.clone(),
    })
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    best_epoch: Option<u32>,
    best_val_acc: Option<f64>,
    best_val_loss: Option<f64>,
    stopped_early: bool,
    best_checkpoint: PathBuf,
    last_checkpoint: PathBuf,
    metrics: PathBuf,
}

pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = read_toml(&args.config)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.target_val_acc {
        cfg.target_val_acc = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(args)?;
    let resolved = toml::to_string(&cfg).context("serializing the resolved configuration")?;
    eprintln!("resolved configuration:\n{resolved}");
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join("config.toml"), &resolved)?;
    fs::write(cfg.out_dir.join("pipeline.toml"), toml::to_string(&cfg.pipeline)?)?;
    let outcome = train::train(&cfg, args.resume)?;
    let best = outcome.best();
    print_json(&TrainSummary {
        epochs: outcome.metrics.len(),
        best_epoch: best.map(|m| m.epoch),
        best_val_acc: best.map(|m| m.val_acc),
        best_val_loss: best.map(|m| m.val_loss),
        stopped_early: outcome.stopped_early,
        best_checkpoint: outcome.paths.best.clone(),
        last_checkpoint: outcome.paths.last.clone(),
        metrics: outcome.paths.metrics.clone(),
    })
}

#[derive(Serialize)]
struct EvalSummary {
    split: String,
    examples: usize,
    quarantined: usize,
    accuracy: f64,
    loss: f64,
    confused_classes: Vec<usize>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let split: Split = args.split.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    let (_, net) = load_network(&args.checkpoint)?;
    let Some(pipeline) = pipeline_near(args.pipeline.as_deref(), &args.checkpoint)? else {
        bail!("no pipeline configuration: pass --pipeline or place pipeline.toml beside the checkpoint");
    };
    let index = DatasetIndex::load_manifest(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    let report = load_split(&index, split, &pipeline, None)?;
    let ev = evaluate(&net, &report.examples, args.batch)?;
    if let Some(path) = &args.confusion_csv {
        ev.matrix
            .write_counts_csv(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    if let Some(path) = &args.percent_csv {
        ev.matrix
            .write_percentages_csv(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    print_json(&EvalSummary {
        split: split.to_string(),
        examples: report.examples.len(),
        quarantined: report.quarantined.len(),
        accuracy: ev.accuracy,
        loss: ev.loss,
        confused_classes: ev.matrix.confused_rows(),
    })
}

#[derive(Serialize)]
struct Candidate {
    item_id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    probability: f64,
}

#[derive(Serialize)]
struct InferSummary {
    item_id: usize,
    confidence: f64,
    accepted: bool,
    threshold: f64,
    top5: Vec<Candidate>,
}

pub fn infer(args: &InferArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.tau) {
        bail!("--tau must lie in [0, 1]");
    }
    let (_, net) = load_network(&args.checkpoint)?;
    let pipeline = pipeline_near(args.pipeline.as_deref(), &args.checkpoint)?;
    let catalog = args
        .catalog
        .as_deref()
        .map(|p| Catalog::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let frame = Raster::open(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let clf = NetworkClassifier::new(net, pipeline)?;
    let probs = clf.classify(&frame)?;
    let r = identify(&probs, args.tau);
    let name = |id: usize| catalog.as_ref().and_then(|c| c.get(id)).map(|i| i.name.clone());
    print_json(&InferSummary {
        item_id: r.top1,
        confidence: r.confidence,
        accepted: r.accepted,
        threshold: args.tau,
        top5: r
            .top5
            .iter()
            .map(|&(item_id, probability)| Candidate {
                item_id,
                name: name(item_id),
                probability,
            })
            .collect(),
    })
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let (_, net) = load_network(&args.checkpoint)?;
    let pipeline = pipeline_near(args.pipeline.as_deref(), &args.checkpoint)?;
    let catalog = Catalog::load(&args.catalog).with_context(|| format!("loading {}", args.catalog.display()))?;
    let clf = NetworkClassifier::new(net, pipeline)?;
    let service = CheckoutService::new(
        catalog,
        Arc::new(clf),
        ServiceOptions {
            tau: args.tau,
            log_path: args.event_log.clone(),
        },
    )?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime
        .block_on(arc_checkout::http::serve(Arc::new(service), args.listen))
        .with_context(|| format!("serving on {}", args.listen))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if !(1..=synth::MAX_CLASSES).contains(&args.classes) {
        bail!("--classes must be between 1 and {}", synth::MAX_CLASSES);
    }
    if args.per_class == 0 {
        bail!("--per-class must be at least 1");
    }
    let catalog = synth::write_corpus(
        &args.out,
        args.classes,
        args.per_class,
        FrameSize {
            height: args.height,
            width: args.width,
        },
        args.seed,
    )?;
    print_json(&serde_json::json!({
        "root": args.out,
        "classes": catalog.len(),
        "images": catalog.len() * args.per_class,
    }))
}
