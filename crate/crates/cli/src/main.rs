use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use hieraedge::check::{self, CheckOptions};
use hieraedge::checkpoint::Checkpoint;
use hieraedge::config::ModelConfig;
use hieraedge::data::{stratified_split, synth_scenes, Dataset, Image, SynthConfig};
use hieraedge::detect::{write_jsonl, DecodeConfig, DetectionRecord};
use hieraedge::eval::{evaluate, ApMethod, EvalConfig, EvalReport};
use hieraedge::gradcam::{energy_map, grad_cam, upsample_map, CamTap};
use hieraedge::infer::predict;
use hieraedge::model::HieraEdgeNet;
use hieraedge::params::{Ctx, ForwardOptions, ParamStore};
use hieraedge::tensor::no_grad;
use hieraedge::train::{csv_row, TrainConfig, Trainer, CSV_HEADER};
use hieraedge::viz::{draw_boxes, line_plot, matrix_heatmap, overlay, Series};
use hieraedge::Error;

#[derive(Parser)]
#[command(name = "hieraedge", version, about = "Edge-enhanced multi-scale detector: data, training, evaluation and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic grain dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run a checkpoint on images and write detections.
    Infer(InferArgs),
    /// Run the verification battery.
    Check(CheckArgs),
    /// Grad-CAM heatmaps for one image and class.
    Cam(CamArgs),
    /// Print the layer table and parameter count.
    Describe(DescribeArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// JSON synthesis config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Square image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Use the small overfit scene preset.
    #[arg(long)]
    overfit: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Overfit,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON training config; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Continue from a checkpoint written by this command.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SplitSel {
    Train,
    Val,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Interp101,
    Continuous,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "val")]
    split: SplitSel,
    #[arg(long, default_value_t = 0.001)]
    conf: f64,
    #[arg(long, default_value_t = 0.7)]
    iou: f64,
    #[arg(long, value_enum, default_value = "interp101")]
    method: Method,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Exit with status 1 when mAP@.5 falls below this value.
    #[arg(long)]
    min_map50: Option<f64>,
    /// Run with the edge path zeroed.
    #[arg(long)]
    zero_edges: bool,
}

#[derive(clap::Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A PNG file or a directory of PNG files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    #[arg(long, default_value_t = 0.7)]
    iou: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Comma-separated groups to run (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Negate the backward pass of the named op during the battery.
    #[arg(long)]
    inject_fault: Option<String>,
    #[arg(long, default_value_t = 3)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    nms_trials: usize,
    /// Skip the sampled whole-model gradient check.
    #[arg(long)]
    no_model: bool,
    /// Write the report as JSON into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    class: usize,
    #[arg(long)]
    out: PathBuf,
    /// Heatmap opacity in the overlays.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelPreset {
    Desk,
    Paper,
    Tiny,
}

#[derive(clap::Args)]
struct DescribeArgs {
    /// JSON model config; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: ModelPreset,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A check or evaluation outcome below its bar (exit status 1).
#[derive(Debug)]
struct Failed(String);

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Failed>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::NonFinite(_)) | Some(Error::Shape { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Train(a) => train(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Infer(a) => infer(a),
        Cmd::Check(a) => run_check(a),
        Cmd::Cam(a) => cam(a),
        Cmd::Describe(a) => describe(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

// ------------------------------------------------------------------ synth

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None if a.overfit => hieraedge::train::overfit_scenes(0),
        None => SynthConfig::default(),
    };
    if let Some(v) = a.scenes {
        cfg.scenes = v;
    }
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.size {
        cfg.height = v;
        cfg.width = v;
    }
    if cfg.classes == 0 {
        return Err(Error::Usage("--classes must be at least 1".into()).into());
    }
    cfg.validate()?;
    make_dir(&a.out)?;
    let samples = synth_scenes(&cfg)?;
    let split = stratified_split(&samples, cfg.classes, cfg.val_fraction, cfg.seed);
    let ds = Dataset {
        classes: (0..cfg.classes).map(|c| format!("grain_{c}")).collect(),
        samples,
        split: Some(split),
        rejected: 0,
    };
    ds.save(&a.out).with_context(|| format!("writing dataset to {}", a.out.display()))?;
    write_json(&a.out.join("synth_config.json"), &cfg)?;

    let weights = hieraedge::data::power_law_weights(cfg.classes, cfg.long_tail);
    let mut counts = vec![0usize; cfg.classes];
    for s in &ds.samples {
        for g in &s.gts {
            counts[g.class_id] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    println!("{} scenes, {} instances", ds.samples.len(), total);
    println!("{:<8} {:>8} {:>9} {:>9}", "class", "count", "observed", "expected");
    for c in 0..cfg.classes {
        println!(
            "{:<8} {:>8} {:>9.4} {:>9.4}",
            c,
            counts[c],
            counts[c] as f64 / total.max(1) as f64,
            weights[c]
        );
    }
    if let Some(sp) = &ds.split {
        println!("split: {} train / {} val images", sp.train.len(), sp.val.len());
    }
    Ok(())
}

// ------------------------------------------------------------------ train

fn train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let nc = ds.num_classes();
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            Trainer::resume(&ck)?
        }
        None => {
            let mut cfg = match (&a.config, a.preset) {
                (Some(p), _) => read_json(p)?,
                (None, Preset::Desk) => TrainConfig::desk(nc),
                (None, Preset::Overfit) => TrainConfig::overfit(),
            };
            if a.config.is_none() {
                cfg.model.num_classes = nc;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = a.lr {
                cfg.lr = v;
            }
            if let Some(v) = a.batch_size {
                cfg.batch_size = v;
            }
            Trainer::new(cfg)?
        }
    };
    if a.resume.is_some() {
        if let Some(v) = a.epochs {
            trainer.cfg.epochs = v;
        }
    }
    if trainer.cfg.model.num_classes != nc {
        return Err(Error::Config(format!(
            "model has {} classes, dataset {} has {}",
            trainer.cfg.model.num_classes,
            a.data.display(),
            nc
        ))
        .into());
    }
    make_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &trainer.cfg)?;
    let csv_path = a.out.join("metrics.csv");
    let mut csv = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv_path)
        .with_context(|| format!("opening {}", csv_path.display()))?;
    if trainer.history.is_empty() || csv.metadata()?.len() == 0 {
        writeln!(csv, "{CSV_HEADER}")?;
    }
    let train_set = ds.train();
    let val_set = ds.val();
    info!(
        "training on {} images ({} val), {} trainable parameters",
        train_set.len(),
        val_set.len(),
        trainer.store.count_trainable("")
    );
    while !trainer.finished() {
        let before = trainer.checkpoint()?;
        let log = match trainer.train_epoch(&train_set, &val_set) {
            Ok(l) => l,
            Err(e @ Error::NonFinite(_)) => {
                let dump = a.out.join("nan_dump.json");
                let batch: Vec<_> = trainer
                    .last_batch
                    .iter()
                    .filter_map(|id| ds.samples.iter().find(|s| &s.id == id))
                    .map(|s| serde_json::json!({"id": s.id, "height": s.image.height, "width": s.image.width, "gts": s.gts}))
                    .collect();
                write_json(
                    &dump,
                    &serde_json::json!({
                        "error": e.to_string(),
                        "epoch": trainer.epoch,
                        "step": trainer.step,
                        "lr": trainer.cfg.lr,
                        "batch": batch,
                    }),
                )?;
                before.save(&a.out.join("nan_state.ckpt"))?;
                return Err(anyhow::Error::from(e).context(format!("training diverged; diagnostics in {}", dump.display())));
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(csv, "{}", csv_row(&log))?;
        let ck = trainer.checkpoint()?;
        ck.save(&a.out.join("last.ckpt"))?;
        if log.map50.is_some() && log.map50 == trainer.best_map50 {
            ck.save(&a.out.join("best.ckpt"))?;
        }
    }
    if !a.out.join("best.ckpt").exists() {
        trainer.checkpoint()?.save(&a.out.join("best.ckpt"))?;
    }
    if let Some(l) = trainer.history.last() {
        println!(
            "finished epoch {}: loss {:.5}{}",
            l.epoch,
            l.loss.total,
            trainer.best_map50.map(|m| format!(", best map50 {m:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

// ------------------------------------------------------------------- eval

fn load_model(path: &Path) -> Result<(HieraEdgeNet, ParamStore)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let mut store = ParamStore::new();
    let model = HieraEdgeNet::new(&ck.config, &mut store, 0)?;
    ck.restore(&mut store)?;
    Ok((model, store))
}

fn decode_config(conf: f64, iou: f64) -> Result<DecodeConfig> {
    let d = DecodeConfig {
        conf,
        iou,
        ..DecodeConfig::inference()
    };
    d.validate()?;
    Ok(d)
}

fn write_eval_plots(rep: &EvalReport, out: &Path) -> Result<()> {
    let palette = |c: usize| hieraedge::viz::colormap((c as f64 + 0.5) / rep.pr_curves.len().max(1) as f64);
    let series: Vec<Series> = rep
        .pr_curves
        .iter()
        .map(|p| Series {
            x: &p.recall,
            y: &p.precision,
            color: palette(p.class_id),
        })
        .collect();
    save_png(&line_plot(&series, None, 400, 400), &out.join("pr_curve.png"))?;
    let f = &rep.f1_curve;
    let f1 = [Series {
        x: &f.confidence,
        y: &f.f1,
        color: [30, 60, 200],
    }];
    save_png(
        &line_plot(&f1, Some((f.best_confidence, f.best_f1)), 400, 400),
        &out.join("f1_curve.png"),
    )?;
    save_png(&matrix_heatmap(&rep.confusion, 24), &out.join("confusion.png"))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let decode = decode_config(a.conf, a.iou)?;
    let (model, store) = load_model(&a.checkpoint)?;
    let ds = Dataset::load(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    if ds.num_classes() != model.config.num_classes {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, dataset has {}",
            model.config.num_classes,
            ds.num_classes()
        ))
        .into());
    }
    let samples = match a.split {
        SplitSel::Train => ds.train(),
        SplitSel::Val if ds.split.is_some() => ds.val(),
        SplitSel::Val => {
            warn!("dataset has no split.json; evaluating all images");
            ds.samples.iter().collect()
        }
        SplitSel::All => ds.samples.iter().collect(),
    };
    if samples.is_empty() {
        return Err(Error::Usage("selected split is empty".into()).into());
    }
    make_dir(&a.out)?;
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let opts = ForwardOptions { zero_edges: a.zero_edges };
    let dets = predict(&model, &store, &images, &decode, a.batch, opts)?;
    let gts: Vec<_> = samples.iter().map(|s| s.gts.clone()).collect();
    let rep = evaluate(
        &dets,
        &gts,
        &EvalConfig {
            num_classes: model.config.num_classes,
            method: match a.method {
                Method::Interp101 => ApMethod::Interp101,
                Method::Continuous => ApMethod::Continuous,
            },
        },
    )?;
    write_json(&a.out.join("report.json"), &rep)?;
    let records: Vec<DetectionRecord> = samples
        .iter()
        .zip(&dets)
        .flat_map(|(s, d)| d.iter().map(|x| DetectionRecord::new(&s.id, x)))
        .collect();
    let f = fs::File::create(a.out.join("detections.jsonl"))?;
    write_jsonl(std::io::BufWriter::new(f), &records)?;
    write_eval_plots(&rep, &a.out)?;
    println!(
        "images {}  map50 {:.4}  map75 {:.4}  map50-95 {:.4}  best F1 {:.4} at conf {:.2}",
        samples.len(),
        rep.map50,
        rep.map75,
        rep.map5095,
        rep.f1_curve.best_f1,
        rep.f1_curve.best_confidence
    );
    if let Some(min) = a.min_map50 {
        if rep.map50 < min {
            return Err(Failed(format!("map50 {:.4} below required {min}", rep.map50)).into());
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ infer

fn png_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        v.sort();
        Ok(v)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::Usage(format!("{} does not exist", path.display())).into())
    }
}

fn infer(a: InferArgs) -> Result<()> {
    let decode = decode_config(a.conf, a.iou)?;
    let (model, store) = load_model(&a.checkpoint)?;
    let paths = png_inputs(&a.input)?;
    if paths.is_empty() {
        bail!(Error::Usage(format!("no PNG images under {}", a.input.display())));
    }
    make_dir(&a.out)?;
    let images = paths
        .iter()
        .map(|p| Image::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Image> = images.iter().collect();
    let dets = predict(&model, &store, &refs, &decode, a.batch, ForwardOptions::default())?;
    let mut records = Vec::new();
    for ((p, im), d) in paths.iter().zip(&images).zip(&dets) {
        let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        records.extend(d.iter().map(|x| DetectionRecord::new(id, x)));
        save_png(&draw_boxes(im, d, model.config.num_classes), &a.out.join(format!("{id}_det.png")))?;
        println!("{id}: {} detections", d.len());
    }
    let f = fs::File::create(a.out.join("detections.jsonl"))?;
    write_jsonl(std::io::BufWriter::new(f), &records)?;
    Ok(())
}

// ------------------------------------------------------------------ check

fn run_check(a: CheckArgs) -> Result<()> {
    let fault = match &a.inject_fault {
        Some(name) => Some(check::fault_op(name).ok_or_else(|| {
            Error::Usage(format!("unknown op '{}' (known: {})", name, check::FAULT_OPS.join(", ")))
        })?),
        None => None,
    };
    let opts = CheckOptions {
        only: a.only,
        fault,
        instances: a.instances,
        seed: a.seed,
        nms_trials: a.nms_trials,
        model_grad: !a.no_model,
        ..CheckOptions::default()
    };
    let results = check::run(&opts)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| format!("{}/{}", r.group, r.name)).collect();
    println!("{} checks, {} failed", results.len(), failed.len());
    if let Some(dir) = &a.out {
        make_dir(dir)?;
        let rows: Vec<_> = results
            .iter()
            .map(|r| serde_json::json!({"group": r.group, "name": r.name, "passed": r.passed, "detail": r.detail}))
            .collect();
        write_json(&dir.join("check_report.json"), &rows)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failed(format!("failed checks: {}", failed.join(", "))).into())
    }
}

// -------------------------------------------------------------------- cam

fn cam(a: CamArgs) -> Result<()> {
    let (model, store) = load_model(&a.checkpoint)?;
    let img = Image::load(&a.image).with_context(|| format!("loading {}", a.image.display()))?;
    let out = grad_cam(&model, &store, &img, a.class)?;
    make_dir(&a.out)?;
    let (h, w) = model.config.input_size;
    let shown = img.resize(h, w);
    for m in &out.maps {
        let heat = upsample_map(&m.heat, m.height, m.width, img.height, img.width);
        let name = format!("cam_{}.png", m.tap.name());
        save_png(&overlay(&img, &heat, a.alpha), &a.out.join(&name))?;
        let (x, y) = m.argmax();
        println!(
            "{}: argmax at ({:.1}, {:.1}) in input pixels{}",
            m.tap.name(),
            x * img.width as f64 / w as f64,
            y * img.height as f64 / h as f64,
            if m.tap == CamTap::DetectP3 { " (head input)" } else { "" }
        );
    }
    let x = hieraedge::data::batch_tensor(&[&shown])?;
    let trace = no_grad(|| model.trace(&Ctx::eval(&store), &x))?;
    for (name, t) in [("p3", &trace.edges.e_p3), ("p4", &trace.edges.e_p4), ("p5", &trace.edges.e_p5)] {
        let (e, eh, ew) = energy_map(t)?;
        let heat = upsample_map(&e, eh, ew, img.height, img.width);
        save_png(&overlay(&img, &heat, a.alpha), &a.out.join(format!("edge_{name}.png")))?;
    }
    println!("class {} score {:.4}; wrote overlays to {}", out.class_id, out.score, a.out.display());
    Ok(())
}

// --------------------------------------------------------------- describe

fn describe(a: DescribeArgs) -> Result<()> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => read_json(p)?,
        (None, ModelPreset::Desk) => ModelConfig::desk(a.classes),
        (None, ModelPreset::Paper) => ModelConfig::paper(a.classes),
        (None, ModelPreset::Tiny) => ModelConfig {
            num_classes: a.classes,
            ..check::tiny_model_config()
        },
    };
    if let Some(w) = a.width {
        cfg.width_mult = w;
    }
    let mut store = ParamStore::new();
    let model = HieraEdgeNet::new(&cfg, &mut store, a.seed)?;
    let report = model.param_report(&store);
    let doc = serde_json::json!({
        "config": cfg,
        "layers": model.layers,
        "param_count": report.param_count,
    });
    if a.json {
        println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?);
    } else {
        print!("{}", model.describe(&store));
    }
    if let Some(dir) = &a.out {
        make_dir(dir)?;
        write_json(&dir.join("describe.json"), &doc)?;
        fs::write(dir.join("describe.txt"), model.describe(&store))?;
    }
    Ok(())
}
