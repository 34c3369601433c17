use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, Parser, Subcommand, ValueEnum};
use ldfnet_core::analyzer::{benchmark, check_reported_ordering, shape_trace, ParamGate};
use ldfnet_core::data::{load_all, load_sample, synth_dataset, DatasetIndex, Raster, Sample, Split, SynthConfig};
use ldfnet_core::metrics::{AbsentClasses, ConfusionMatrix};
use ldfnet_core::model::{build_model, Checkpoint, ModelConfig, ModelGraph, Variant};
use ldfnet_core::train::{evaluate, predict, TrainConfig, Trainer};
use ldfnet_core::{Error, LabelMap};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "ldfnet", version, about = "RGB-D semantic segmentation: data, training, evaluation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedurally generated RGB-D dataset.
    #[command(args_override_self = true)]
    SynthData(SynthArgs),
    /// Train a network variant with the two-stage schedule.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a checkpoint or a directory of predicted label maps.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Write predicted label maps for a dataset.
    #[command(args_override_self = true)]
    Infer(InferArgs),
    /// Report shapes, parameter counts, MACs and throughput.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// train, val or test.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Half-width of the per-object color jitter.
    #[arg(long, default_value_t = 0.3)]
    pub color_jitter: f64,
    /// Fraction of depth pixels left without a measurement.
    #[arg(long, default_value_t = 0.02)]
    pub depth_holes: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset index file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint, log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "ldfnet")]
    pub variant: String,
    /// Training height; defaults to the native size of the first image.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub base_lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub poly_power: f64,
    /// Encoder-only iterations against ⅛-resolution labels.
    #[arg(long, default_value_t = 100)]
    pub stage1_iters: usize,
    /// End-to-end iterations.
    #[arg(long, default_value_t = 400)]
    pub stage2_iters: usize,
    #[arg(long, default_value_t = 1.1)]
    pub class_weight_c: f64,
    /// Random flips and shifts.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub augment: bool,
    #[arg(long, default_value_t = 0.05)]
    pub dropout: f64,
    #[arg(long, default_value_t = ldfnet_core::model::DEFAULT_GROWTH_RATE)]
    pub growth_rate: usize,
    #[arg(long, default_value_t = ldfnet_core::model::DEFAULT_BOTTLENECK_WIDTH)]
    pub bottleneck_width: usize,
    /// Seed of the parameter initialization.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `<name>.pgm` label maps to score instead of a checkpoint.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// How classes missing from both labels and predictions enter the mean.
    #[arg(long, value_enum, default_value_t = Absent::Exclude)]
    pub absent: Absent,
    /// Directory for `metrics.txt`, `metrics.records` and the resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Absent {
    Exclude,
    Zero,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Also write a color-coded `<name>.color.ppm`.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub color: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Variant tag, or `all` for the parameter summary of every variant.
    #[arg(long, default_value = "ldfnet")]
    pub variant: String,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = ldfnet_core::model::DEFAULT_NUM_CLASSES)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Timed inference runs per thread mode; 0 skips the benchmark.
    #[arg(long, default_value_t = 0)]
    pub bench_iters: usize,
    #[arg(long, default_value_t = 2)]
    pub bench_warmup: usize,
    /// Worker count of the multi-threaded benchmark; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for the report and resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Records,
}

pub fn dispatch(cli: Cli, matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let resolved = resolved_config(name, sub);
    match cli.command {
        Command::SynthData(a) => synth(a, &resolved),
        Command::Train(a) => train(a, &resolved),
        Command::Eval(a) => eval(a, &resolved),
        Command::Infer(a) => infer(a, &resolved),
        Command::Analyze(a) => analyze(a, &resolved),
    }
}

/// Every accepted key with its effective value, one `key = value` per line.
fn resolved_config(name: &str, m: &ArgMatches) -> String {
    let cmd = <Cli as clap::CommandFactory>::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let mut out = format!("# ldfnet {name}\n");
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if long == "config" || !arg.get_action().takes_values() {
            continue;
        }
        if let Some(raw) = m.get_raw(arg.get_id().as_str()) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            writeln!(out, "{} = {}", long.replace('-', "_"), values.join(",")).expect("string write");
        }
    }
    out
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e).into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e).into())
}

fn parse_variant(tag: &str) -> Result<Variant, CliError> {
    tag.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

/// Explicit resolution, or the native size of the first RGB image.
fn resolution(index: &DatasetIndex, height: Option<usize>, width: Option<usize>) -> Result<(usize, usize), CliError> {
    match (height, width) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => {
            let first = index
                .entries
                .first()
                .ok_or_else(|| Error::Data(format!("dataset in {} is empty", index.root.display())))?;
            let r = Raster::read(&first.rgb)?;
            Ok((height.unwrap_or(r.height), width.unwrap_or(r.width)))
        }
    }
}

fn synth(a: SynthArgs, resolved: &str) -> Result<(), CliError> {
    let split: Split = a.split.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let config = SynthConfig {
        split,
        color_jitter: a.color_jitter,
        depth_holes: a.depth_holes,
        ..SynthConfig::new(a.seed, a.samples, (a.height, a.width), a.classes)
    };
    if !(0.0..=1.0).contains(&a.depth_holes) || a.color_jitter < 0.0 {
        return Err(CliError::Usage("depth_holes must lie in [0, 1] and color_jitter be non-negative".into()));
    }
    let index = synth_dataset(&a.out, &config)?;
    write_file(&a.out.join("config.txt"), resolved)?;
    println!("wrote {} samples to {}", index.len(), a.out.join("index.txt").display());
    Ok(())
}

fn train(a: TrainArgs, resolved: &str) -> Result<(), CliError> {
    let variant = parse_variant(&a.variant)?;
    let index = DatasetIndex::read(&a.data)?;
    let res = resolution(&index, a.height, a.width)?;
    let mut model_config = ModelConfig::new(variant).with_classes(index.num_classes);
    model_config.dropout = a.dropout;
    model_config.growth_rate = a.growth_rate;
    model_config.bottleneck_width = a.bottleneck_width;
    let graph = build_model(&model_config)?;
    let train_config = TrainConfig {
        batch_size: a.batch_size,
        base_lr: a.base_lr,
        weight_decay: a.weight_decay,
        poly_power: a.poly_power,
        stage1_iters: a.stage1_iters,
        stage2_iters: a.stage2_iters,
        class_weight_c: a.class_weight_c,
        augment: a.augment,
        seed: a.seed,
    };
    let trainer = Trainer::new(&graph, train_config)?;
    let samples = load_all(&index, res)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), resolved)?;
    let mut log = String::new();
    let result = trainer.train(graph.init_params(a.init_seed), &samples, |r| {
        writeln!(log, "{r}").expect("string write");
    });
    // The log is kept even when training aborts.
    write_file(&a.out.join("train.log"), &log)?;
    let outcome = result?;
    let checkpoint = a.out.join("model.ckpt");
    Checkpoint::new(model_config, outcome.params).save(&checkpoint)?;
    let last = outcome.log.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {variant} for {} iterations; final loss {last:.6}; checkpoint {}",
        outcome.log.len(),
        checkpoint.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, ModelGraph), CliError> {
    Ok(Checkpoint::load(path)?)
}

fn eval(a: EvalArgs, resolved: &str) -> Result<(), CliError> {
    let index = DatasetIndex::read(&a.data)?;
    let mut cm = ConfusionMatrix::new(index.num_classes);
    if let Some(dir) = &a.predictions {
        for entry in &index.entries {
            let path = dir.join(format!("{}.pgm", entry.name()));
            let raster = Raster::read(&path)?;
            if raster.channels != 1 || raster.maxval > 255 {
                return Err(Error::Data(format!("{}: predictions must be an 8-bit PGM", path.display())).into());
            }
            let sample = load_sample(entry, (raster.height, raster.width), index.num_classes)?;
            let pred = LabelMap::new(
                1,
                raster.height,
                raster.width,
                raster.samples.iter().map(|&v| v as u8).collect(),
            )?;
            cm.accumulate(&pred, &sample.labels)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        }
    } else {
        let path = a.checkpoint.as_deref().expect("clap requires a checkpoint or predictions");
        let (ck, graph) = load_checkpoint(path)?;
        if ck.config.num_classes != index.num_classes {
            return Err(Error::Data(format!(
                "checkpoint predicts {} classes but the dataset has {}",
                ck.config.num_classes, index.num_classes
            ))
            .into());
        }
        let samples = load_all(&index, resolution(&index, a.height, a.width)?)?;
        cm = evaluate(&graph, &ck.params, &samples, a.batch_size)?;
    }
    let absent = match a.absent {
        Absent::Exclude => AbsentClasses::Exclude,
        Absent::Zero => AbsentClasses::CountAsZero,
    };
    let report = cm.report(absent)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("metrics.txt"), report.to_table())?;
        write_file(&out.join("metrics.records"), report.to_records())?;
        write_file(&out.join("config.txt"), resolved)?;
    }
    Ok(())
}

/// Color of a class in rendered label maps; the ignore label is black.
fn class_rgb(class: u8) -> [u16; 3] {
    const PALETTE: [[u16; 3]; 8] = [
        [128, 64, 128],
        [220, 20, 60],
        [70, 130, 180],
        [107, 142, 35],
        [250, 170, 30],
        [0, 0, 142],
        [190, 153, 153],
        [152, 251, 152],
    ];
    if class == ldfnet_core::IGNORE_INDEX {
        return [0, 0, 0];
    }
    let base = PALETTE[class as usize % PALETTE.len()];
    let round = (class as usize / PALETTE.len()) as u16;
    base.map(|c| (c + 37 * round) % 256)
}

fn infer(a: InferArgs, resolved: &str) -> Result<(), CliError> {
    let index = DatasetIndex::read(&a.data)?;
    let (ck, graph) = load_checkpoint(&a.checkpoint)?;
    let res = resolution(&index, a.height, a.width)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), resolved)?;
    for chunk in index.entries.chunks(a.batch_size.max(1)) {
        let samples: Vec<Sample> = chunk
            .iter()
            .map(|e| load_sample(e, res, index.num_classes))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&Sample> = samples.iter().collect();
        let pred = predict(&graph, &ck.params, &refs)?;
        let plane = pred.height() * pred.width();
        for (i, entry) in chunk.iter().enumerate() {
            let labels = &pred.data()[i * plane..(i + 1) * plane];
            let raster = Raster::new(
                pred.width(),
                pred.height(),
                1,
                255,
                labels.iter().map(|&v| v as u16).collect(),
            )?;
            raster.write(&a.out.join(format!("{}.pgm", entry.name())))?;
            if a.color {
                let rgb = labels.iter().flat_map(|&c| class_rgb(c)).collect();
                Raster::new(pred.width(), pred.height(), 3, 255, rgb)?
                    .write(&a.out.join(format!("{}.color.ppm", entry.name())))?;
            }
        }
    }
    println!("wrote {} label maps to {}", index.len(), a.out.display());
    Ok(())
}

fn analyze(a: AnalyzeArgs, resolved: &str) -> Result<(), CliError> {
    let mut report = String::new();
    if a.variant.eq_ignore_ascii_case("all") {
        let mut counts = Vec::new();
        for v in Variant::ALL {
            let graph = build_model(&ModelConfig::new(v).with_classes(a.classes))?;
            let count = graph.parameter_count().total;
            writeln!(report, "{}", ParamGate::new(v, count).to_record()).expect("string write");
            counts.push((v, count));
        }
        match check_reported_ordering(&counts) {
            Ok(()) => writeln!(report, "ordering=pass"),
            Err(why) => writeln!(report, "ordering=fail reason={why}"),
        }
        .expect("string write");
    } else {
        let variant = parse_variant(&a.variant)?;
        let graph = build_model(&ModelConfig::new(variant).with_classes(a.classes))?;
        let trace = shape_trace(&graph, (a.height, a.width))?;
        report.push_str(&match a.format {
            Format::Table => trace.to_table(),
            Format::Records => trace.to_records(),
        });
        let count = graph.parameter_count().total;
        writeln!(report, "{}", ParamGate::new(variant, count).to_record()).expect("string write");
        if a.bench_iters > 0 {
            let params = graph.init_params(0);
            let multi = a.threads.unwrap_or_else(rayon::current_num_threads);
            for threads in [1, multi] {
                let stats = benchmark(&graph, &params, (a.height, a.width), a.bench_warmup, a.bench_iters, threads)?;
                writeln!(report, "{}", stats.to_record()).expect("string write");
            }
        }
    }
    print!("{report}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("analysis.txt"), &report)?;
        write_file(&out.join("config.txt"), resolved)?;
    }
    Ok(())
}
