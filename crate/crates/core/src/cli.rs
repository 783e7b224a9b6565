//! The `aviary` command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::distort::{apply_with, DistortionConfig, DistortionKind, DistortionParams};
use crate::error::{Error, Result};
use crate::flocksynth::{generate_corpus, load_corpus, CorpusConfig, CorpusTask, LabelKind, Sample, Split};
use crate::learners::{
    cnn_fit, grid_search, Classifier, CnnConfig, ForestConfig, KnnConfig, LearnerConfig, Preprocess, TrainedModel,
};
use crate::metrics::{class_report, confusion, write_text};
use crate::pipeline::{
    accuracy, evaluate_cascade, evaluate_unified, insight_sweeps, robustness_sweep, CascadeModel, DynClassifier,
    InsightConfig, LabelledSet, PriorMode, UnifiedModel,
};
use crate::raster::{load_png, save_png};
use crate::taxonomy::{builtin_species, species_labels, SizeClass};

#[derive(Parser, Debug)]
#[command(
    name = "aviary",
    version,
    about = "Synthetic flock imagery, distortions, classifiers and cascade evaluation"
)]
struct Cli {
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true, env = "AVIARY_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a labelled corpus (PNGs plus manifest.json).
    Gen(GenArgs),
    /// Apply one distortion at one or more levels to PNG files.
    Distort(DistortArgs),
    /// Train a classifier on a corpus manifest.
    Train(TrainArgs),
    /// Evaluate a saved model on one split of a corpus.
    Eval(EvalArgs),
    /// Evaluate cascade (and optionally unified) species pipelines.
    CascadeEval(CascadeArgs),
    /// Accuracy of a model under increasing distortion.
    Sweep(SweepArgs),
    /// Training-volume, colour-mode and resolution experiments.
    Insights(InsightArgs),
    /// Merge run outputs under a directory into summary tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// formations, alignments, flock_size or species
    #[arg(long)]
    task: Option<String>,
    /// Images per class
    #[arg(long)]
    per_class: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Side of the stored images, pixels
    #[arg(long)]
    image_size: Option<usize>,
    /// Side of the render canvas, pixels
    #[arg(long)]
    canvas: Option<usize>,
    /// PNG with alpha used instead of the procedural silhouette.
    #[arg(long)]
    sprite: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "corpus")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistortArgs {
    /// PNG files or directories of PNGs.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// rain, snow, noise or darkness
    #[arg(long)]
    kind: String,
    /// Comma list; "a,b,...,c" expands an arithmetic progression.
    #[arg(long)]
    levels: String,
    /// Seed for the random streaks, flakes and noise
    #[arg(long)]
    seed: u64,
    /// Coefficient overrides (JSON with "rain"/"snow" sections).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory; one subdirectory per level
    #[arg(long, default_value = "distorted")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LearnerKind {
    Cnn,
    Knn,
    Forest,
}

/// Everything a training run depends on; echoed to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct TrainSpec {
    learner: LearnerKind,
    label: Option<LabelKind>,
    seed: u64,
    /// Restrict to birds of one size class (species stage).
    size: Option<SizeClass>,
    cnn: CnnConfig,
    knn: KnnConfig,
    forest: ForestConfig,
    /// Feature side for knn/forest.
    feature_size: usize,
    /// Tune knn/forest over the full search grid first.
    grid: bool,
    folds: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learner: LearnerKind::Cnn,
            label: None,
            seed: 0,
            size: None,
            cnn: CnnConfig::default(),
            knn: KnnConfig::default(),
            forest: ForestConfig::default(),
            feature_size: 128,
            grid: false,
            folds: 3,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Corpus manifest.json
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    learner: Option<LearnerKind>,
    /// Label to learn; defaults to the corpus task's primary label.
    #[arg(long)]
    label: Option<String>,
    /// Restrict to one size class (Small, Medium, Large)
    #[arg(long)]
    size: Option<String>,
    /// Training spec JSON; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum convnet epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience, epochs
    #[arg(long)]
    patience: Option<usize>,
    /// Convnet input side, pixels
    #[arg(long)]
    input_size: Option<usize>,
    /// Train on luma instead of RGB
    #[arg(long)]
    grayscale: bool,
    /// Grid-search the classical learner with cross-validation
    #[arg(long)]
    grid: bool,
    /// Output directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Saved model.json
    #[arg(long)]
    model: PathBuf,
    /// Corpus manifest.json
    #[arg(long)]
    manifest: PathBuf,
    /// Label to score against; defaults to the model's task
    #[arg(long)]
    label: Option<String>,
    /// train, val or test
    #[arg(long, default_value = "test")]
    split: String,
    /// Output directory
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CascadeConfig {
    manifest: PathBuf,
    #[serde(default = "default_split")]
    split: Split,
    stage1: PathBuf,
    stage2: PathBuf,
    stage3: BTreeMap<SizeClass, PathBuf>,
    #[serde(default)]
    unified: Option<PathBuf>,
    #[serde(default)]
    priors: PriorMode,
}

fn default_split() -> Split {
    Split::Test
}

#[derive(Args, Debug)]
struct CascadeArgs {
    /// Cascade config JSON; paths are relative to it
    #[arg(long)]
    config: PathBuf,
    /// Size priors for the analytic figure: measured or uniform
    #[arg(long)]
    priors: Option<String>,
    /// Output directory
    #[arg(long, default_value = "cascade")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Saved model.json
    #[arg(long)]
    model: PathBuf,
    /// Corpus manifest.json
    #[arg(long)]
    manifest: PathBuf,
    /// rain, snow, noise or darkness
    #[arg(long)]
    kind: String,
    /// Defaults to the full grid of the distortion.
    #[arg(long)]
    levels: Option<String>,
    /// Distortion seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label to score against
    #[arg(long)]
    label: Option<String>,
    /// train, val or test
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InsightArgs {
    /// Corpus manifest.json
    #[arg(long)]
    manifest: PathBuf,
    /// Insight config JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label to learn
    #[arg(long)]
    label: Option<String>,
    /// Output directory
    #[arg(long, default_value = "insights")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding run outputs
    #[arg(long)]
    dir: PathBuf,
    /// Defaults to `<dir>/summary`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // an already-initialised pool (e.g. a second call in-process) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Distort(a) => distort(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::CascadeEval(a) => cascade_eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Insights(a) => insights(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses "0,5,10" or "0,0.05,...,0.40" (progression from the two values
/// before the ellipsis up to the value after it).
pub fn parse_levels(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| Error::Parse(format!("bad level '{p}'")));
    let mut out = Vec::new();
    let mut i = 0;
    while i < parts.len() {
        if parts[i] == "..." {
            if out.len() < 2 || i + 1 >= parts.len() {
                return Err(Error::Parse(format!(
                    "'...' needs two values before and one after in '{s}'"
                )));
            }
            let (a, b): (f64, f64) = (out[out.len() - 2], out[out.len() - 1]);
            let step: f64 = b - a;
            let end = num(parts[i + 1])?;
            if step == 0.0 || (end - b) * step < 0.0 {
                return Err(Error::Parse(format!("progression in '{s}' never reaches {end}")));
            }
            let n = ((end - b) / step + 1e-9).floor() as usize;
            for j in 1..=n {
                out.push(((b + j as f64 * step) * 1e9).round() / 1e9);
            }
            if (out[out.len() - 1] - end).abs() > 1e-9 {
                out.push(end);
            }
            i += 2;
        } else {
            out.push(num(parts[i])?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no levels given".into()));
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<CorpusConfig>(p)?,
        None => {
            let task: CorpusTask = a.task.as_deref().unwrap_or("formations").parse()?;
            CorpusConfig::for_task(task)
        }
    };
    if let (Some(t), Some(_)) = (&a.task, &a.config) {
        cfg.task = t.parse()?;
    }
    if let Some(n) = a.per_class {
        cfg.per_class = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.image_size {
        cfg.image_size = s;
    }
    if let Some(s) = a.canvas {
        cfg.canvas = s;
    }
    if a.sprite.is_some() {
        cfg.sprite_path = a.sprite.clone();
    }
    mkdir(&a.out)?;
    let manifest = generate_corpus(&cfg, &a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    println!("{} images written to {}", manifest.images.len(), a.out.display());
    Ok(())
}

fn collect_pngs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::validation("no PNG inputs found"));
    }
    Ok(files)
}

fn distort(a: DistortArgs) -> Result<()> {
    let kind: DistortionKind = a.kind.parse()?;
    let levels = parse_levels(&a.levels)?;
    for &l in &levels {
        kind.check_level(l)?;
    }
    let params: DistortionParams = match &a.params {
        Some(p) => read_json(p)?,
        None => DistortionParams::default(),
    };
    let files = collect_pngs(&a.input)?;
    mkdir(&a.out)?;
    for &level in &levels {
        let dir = a.out.join(format!("{kind}_{level}"));
        mkdir(&dir)?;
        for (i, f) in files.iter().enumerate() {
            let img = load_png(f)?.to_rgb();
            let cfg = DistortionConfig {
                kind,
                level,
                seed: crate::pipeline::image_seed(a.seed, i),
            };
            let out = apply_with(&img, &cfg, &params)?;
            let name = f
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| format!("{i}.png").into());
            save_png(&out, dir.join(name))?;
        }
    }
    write_json(
        &a.out.join("config.json"),
        &serde_json::json!({"kind": kind, "levels": levels, "seed": a.seed, "params": params, "inputs": files}),
    )?;
    println!(
        "{} images x {} levels written to {}",
        files.len(),
        levels.len(),
        a.out.display()
    );
    Ok(())
}

/// Samples carrying `label` (and of `size`, when given) with the ordered class list.
fn select(samples: &[Sample], label: LabelKind, size: Option<SizeClass>) -> (Vec<String>, Vec<(&Sample, usize)>) {
    let classes = match (label, size) {
        (LabelKind::Species, Some(s)) => species_labels(&builtin_species(), s),
        _ => label.classes(),
    };
    let picked = samples
        .iter()
        .filter(|s| size.is_none_or(|z| s.labels.size == Some(z)))
        .filter_map(|s| {
            let l = label.of(&s.labels)?;
            classes.iter().position(|c| *c == l).map(|i| (s, i))
        })
        .collect();
    (classes, picked)
}

fn split_of<'a>(picked: &[(&'a Sample, usize)], split: Split) -> (Vec<&'a crate::raster::Image>, Vec<usize>) {
    picked
        .iter()
        .filter(|(s, _)| s.split == split)
        .map(|(s, y)| (&s.image, *y))
        .unzip()
}

fn write_eval(dir: &Path, model: &dyn Classifier, images: &[&crate::raster::Image], truth: &[usize]) -> Result<f64> {
    use rayon::prelude::*;
    let classes = model.classes();
    let preds: Vec<String> = images.par_iter().map(|img| model.predict(img)).collect::<Result<_>>()?;
    let truth: Vec<String> = truth.iter().map(|&y| classes[y].clone()).collect();
    let cm = confusion(&truth, &preds, classes)?;
    let rep = class_report(&cm)?;
    write_text(&dir.join("confusion.csv"), &cm.to_csv())?;
    rep.write_csv(dir.join("report.csv"))?;
    rep.write_json(dir.join("report.json"))?;
    Ok(rep.accuracy)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut spec: TrainSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainSpec::default(),
    };
    if let Some(l) = a.learner {
        spec.learner = l;
    }
    if let Some(l) = &a.label {
        spec.label = Some(l.parse()?);
    }
    if let Some(s) = &a.size {
        spec.size = Some(s.parse()?);
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(e) = a.epochs {
        spec.cnn.max_epochs = e;
        spec.cnn.patience = spec.cnn.patience.min(e);
    }
    if let Some(p) = a.patience {
        spec.cnn.patience = p;
    }
    if let Some(s) = a.input_size {
        spec.cnn.input_size = s;
    }
    spec.cnn.grayscale |= a.grayscale;
    spec.grid |= a.grid;
    spec.cnn.seed = spec.seed;
    spec.forest.seed = spec.seed;

    let (manifest, samples) = load_corpus(&a.manifest)?;
    let label = spec.label.unwrap_or_else(|| manifest.config.primary_label());
    spec.label = Some(label);
    let (classes, picked) = select(&samples, label, spec.size);
    let (tx, ty) = split_of(&picked, Split::Train);
    let (vx, vy) = split_of(&picked, Split::Val);
    let (ex, ey) = split_of(&picked, Split::Test);
    if tx.is_empty() {
        return Err(Error::validation(format!(
            "no training samples carry a {label:?} label"
        )));
    }
    mkdir(&a.out)?;
    let model = match spec.learner {
        LearnerKind::Cnn => {
            let (model, log) = cnn_fit((&tx, &ty), (&vx, &vy), classes.clone(), &spec.cnn)?;
            log.write_csv(a.out.join("training_log.csv"))?;
            model
        }
        LearnerKind::Knn | LearnerKind::Forest => {
            let pre = Preprocess::new(spec.feature_size);
            let x: Vec<Vec<f64>> = tx.iter().map(|img| pre.features(img)).collect::<Result<_>>()?;
            let chosen = if spec.grid {
                let grid: Vec<LearnerConfig> = match spec.learner {
                    LearnerKind::Knn => KnnConfig::search_grid().into_iter().map(LearnerConfig::Knn).collect(),
                    _ => ForestConfig::search_grid(spec.seed)
                        .into_iter()
                        .map(LearnerConfig::Forest)
                        .collect(),
                };
                let result = grid_search(&grid, &x, &ty, classes.len(), spec.folds)?;
                write_text(&a.out.join("grid.csv"), &result.to_csv())?;
                result.best
            } else if spec.learner == LearnerKind::Knn {
                LearnerConfig::Knn(spec.knn)
            } else {
                LearnerConfig::Forest(spec.forest)
            };
            match chosen {
                LearnerConfig::Knn(c) => spec.knn = c,
                LearnerConfig::Forest(c) => spec.forest = c,
            }
            TrainedModel::new(classes.clone(), pre, chosen.fit(&x, &ty, classes.len())?)
        }
    };
    model.save(a.out.join("model.json"))?;
    write_json(&a.out.join("config.json"), &spec)?;
    if !ex.is_empty() {
        let acc = write_eval(&a.out, &model, &ex, &ey)?;
        println!("test accuracy {acc:.2}% on {} images", ex.len());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let (manifest, samples) = load_corpus(&a.manifest)?;
    let label = match &a.label {
        Some(l) => l.parse()?,
        None => manifest.config.primary_label(),
    };
    let split: Split = a.split.parse()?;
    let picked: Vec<(&Sample, usize)> = samples
        .iter()
        .filter(|s| s.split == split)
        .filter_map(|s| {
            let l = label.of(&s.labels)?;
            model.classes.iter().position(|c| *c == l).map(|i| (s, i))
        })
        .collect();
    if picked.is_empty() {
        return Err(Error::validation(format!(
            "no {split} samples match the model's classes"
        )));
    }
    let (x, y): (Vec<_>, Vec<_>) = picked.iter().map(|(s, i)| (&s.image, *i)).unzip();
    mkdir(&a.out)?;
    let acc = write_eval(&a.out, &model, &x, &y)?;
    write_json(
        &a.out.join("config.json"),
        &serde_json::json!({"model": a.model, "manifest": a.manifest, "label": label, "split": split}),
    )?;
    println!("accuracy {acc:.2}% on {} images", x.len());
    Ok(())
}

fn boxed(path: &Path) -> Result<DynClassifier> {
    Ok(Box::new(TrainedModel::load(path)?))
}

fn cascade_eval(a: CascadeArgs) -> Result<()> {
    let mut cfg: CascadeConfig = read_json(&a.config)?;
    if let Some(p) = &a.priors {
        cfg.priors = serde_json::from_value(serde_json::Value::String(p.to_ascii_lowercase()))
            .map_err(|_| Error::Parse(format!("unknown priors '{p}' (measured|uniform)")))?;
    }
    // relative paths resolve against the config's directory
    let base = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut stage3 = BTreeMap::new();
    for (size, p) in &cfg.stage3 {
        stage3.insert(*size, boxed(&resolve(p))?);
    }
    let model = CascadeModel::new(boxed(&resolve(&cfg.stage1))?, boxed(&resolve(&cfg.stage2))?, stage3)?;
    let (_, samples) = load_corpus(resolve(&cfg.manifest))?;
    let items: Vec<_> = samples
        .iter()
        .filter(|s| s.split == cfg.split)
        .map(|s| (&s.image, &s.labels))
        .collect();
    mkdir(&a.out)?;
    let report = evaluate_cascade(&model, &items, cfg.priors)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_text(&a.out.join("traces.jsonl"), &report.traces_jsonl()?)?;
    println!(
        "cascade: end-to-end {:.4}% analytic {:.4}% over {} birds",
        report.end_to_end_accuracy, report.analytic_accuracy, report.n_birds
    );
    if let Some(p) = &cfg.unified {
        let unified = UnifiedModel {
            model: boxed(&resolve(p))?,
        };
        let u = evaluate_unified(&unified, &items)?;
        write_json(&a.out.join("unified.json"), &u)?;
        println!("unified: accuracy {:.4}%", u.accuracy);
    }
    write_json(&a.out.join("config.json"), &cfg)?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let kind: DistortionKind = a.kind.parse()?;
    let levels = match &a.levels {
        Some(l) => parse_levels(l)?,
        None => kind.sweep_levels(),
    };
    let params: DistortionParams = match &a.params {
        Some(p) => read_json(p)?,
        None => DistortionParams::default(),
    };
    let model = TrainedModel::load(&a.model)?;
    let (manifest, samples) = load_corpus(&a.manifest)?;
    let label = match &a.label {
        Some(l) => l.parse()?,
        None => manifest.config.primary_label(),
    };
    let split: Split = a.split.parse()?;
    let truths: Vec<(usize, String)> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == split)
        .filter_map(|(i, s)| {
            label
                .of(&s.labels)
                .filter(|l| model.classes.contains(l))
                .map(|l| (i, l))
        })
        .collect();
    let items: Vec<(&crate::raster::Image, &str)> =
        truths.iter().map(|(i, l)| (&samples[*i].image, l.as_str())).collect();
    let table = robustness_sweep(&model, &items, kind, &levels, a.seed, &params)?;
    mkdir(&a.out)?;
    write_text(&a.out.join(format!("sweep_{kind}.csv")), &table.to_csv())?;
    let clean = accuracy(&model, &items)?;
    write_json(
        &a.out.join("config.json"),
        &serde_json::json!({"model": a.model, "manifest": a.manifest, "kind": kind, "levels": levels,
            "seed": a.seed, "split": split, "params": params, "clean_accuracy": clean}),
    )?;
    for r in &table.rows {
        println!("{kind} {:>6}: {:.2}%", r.level, r.accuracy_percent);
    }
    Ok(())
}

fn insights(a: InsightArgs) -> Result<()> {
    let cfg: InsightConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => InsightConfig::default(),
    };
    let (manifest, samples) = load_corpus(&a.manifest)?;
    let label = match &a.label {
        Some(l) => l.parse()?,
        None => manifest.config.primary_label(),
    };
    let (classes, picked) = select(&samples, label, None);
    let set = |split| {
        let (images, labels) = split_of(&picked, split);
        LabelledSet { images, labels }
    };
    let tables = insight_sweeps(&cfg, &classes, &set(Split::Train), &set(Split::Val), &set(Split::Test))?;
    mkdir(&a.out)?;
    tables.write_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    println!("insight tables written to {}", a.out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct RunSummary {
    run: String,
    accuracy: Option<f64>,
    end_to_end: Option<f64>,
    analytic: Option<f64>,
}

fn report(a: ReportArgs) -> Result<()> {
    if !a.dir.is_dir() {
        return Err(Error::validation(format!("{} is not a directory", a.dir.display())));
    }
    let out = a.out.clone().unwrap_or_else(|| a.dir.join("summary"));
    let mut runs: Vec<PathBuf> = std::fs::read_dir(&a.dir)
        .map_err(|e| Error::io(&a.dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && *p != out)
        .collect();
    runs.sort();
    let mut summaries = Vec::new();
    let mut partial = Vec::new();
    // sweep rows keyed by (kind, level text) in first-seen order
    let mut curve_keys: Vec<(String, String)> = Vec::new();
    let mut curves: BTreeMap<(String, String), BTreeMap<String, String>> = BTreeMap::new();
    let mut swept_runs = Vec::new();
    for dir in &runs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut s = RunSummary {
            run: name.clone(),
            ..Default::default()
        };
        let mut found = false;
        let rep = dir.join("report.json");
        if rep.is_file() {
            let v: serde_json::Value = read_json(&rep)?;
            s.accuracy = v["accuracy"].as_f64();
            s.end_to_end = v["end_to_end_accuracy"].as_f64();
            s.analytic = v["analytic_accuracy"].as_f64();
            found = true;
        }
        let mut sweeps: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("sweep_")))
            .collect();
        sweeps.sort();
        if !sweeps.is_empty() {
            swept_runs.push(name.clone());
        }
        for sw in sweeps {
            let kind = sw
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .trim_start_matches("sweep_")
                .to_string();
            let mut rdr = csv::Reader::from_path(&sw).map_err(|e| Error::Parse(format!("{}: {e}", sw.display())))?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", sw.display())))?;
                let key = (kind.clone(), rec[0].to_string());
                if !curves.contains_key(&key) {
                    curve_keys.push(key.clone());
                }
                curves.entry(key).or_default().insert(name.clone(), rec[1].to_string());
            }
            found = true;
        }
        if found {
            summaries.push(s);
        } else if dir.join("config.json").is_file() {
            partial.push(name);
        }
    }
    mkdir(&out)?;
    let mut text = String::from("run,accuracy_percent,end_to_end_percent,analytic_percent\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &summaries {
        text.push_str(&format!(
            "{},{},{},{}\n",
            s.run,
            opt(s.accuracy),
            opt(s.end_to_end),
            opt(s.analytic)
        ));
    }
    write_text(&out.join("summary.csv"), &text)?;
    let mut rob = String::from("kind,level");
    for r in &swept_runs {
        rob.push_str(&format!(",{r}_acc"));
    }
    rob.push('\n');
    for k in curve_keys {
        rob.push_str(&format!("{},{}", k.0, k.1));
        for r in &swept_runs {
            rob.push_str(&format!(",{}", curves[&k].get(r).cloned().unwrap_or_default()));
        }
        rob.push('\n');
    }
    write_text(&out.join("robustness.csv"), &rob)?;
    if summaries.is_empty() && partial.is_empty() {
        eprintln!("warning: no run outputs found under {}", a.dir.display());
    }
    if !partial.is_empty() {
        return Err(Error::validation(format!(
            "runs without outputs: {}",
            partial.join(", ")
        )));
    }
    println!("summary of {} runs written to {}", summaries.len(), out.display());
    Ok(())
}
