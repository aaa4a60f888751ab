mod export;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use geotr_core::adversarial::attack_eval;
use geotr_core::datasets::{compose_mnist_stickers, load_manifest, read_idx, Dataset, MnistStickerSpec};
use geotr_core::digitgen::{
    generate_dataset, read_pgm, Augmentations, FontVariant, GenSpec, Generator, GlyphAtlas,
};
use geotr_core::encoder::EncoderConfig;
use geotr_core::model::{load, save, GeoTrNet, ModelConfig};
use geotr_core::training::{evaluate_with, train, AdamConfig, TrainConfig};
use geotr_core::{to_sorted_json, Tensor};

#[derive(Parser, Serialize)]
#[command(name = "geotr", version, about = "Fixed-slot sticker text recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Command {
    /// Generate a sticker dataset (PGM images + COCO manifest)
    Generate(GenerateArgs),
    /// Train a model and write its weight file
    Train(TrainArgs),
    /// Evaluate a model on a dataset
    Eval(EvalArgs),
    /// Recognise a single PGM image
    Infer(InferArgs),
    /// Measure accuracy under FGSM perturbations
    Attack(AttackArgs),
    /// Export intermediate matrices of one forward pass
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Digitgen,
    Mnist,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Font {
    Plain,
    Bold,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Encoder {
    Bilstm,
    Tcn,
}

#[derive(clap::Args, Serialize)]
struct GenerateArgs {
    /// Data source
    #[arg(long, value_enum, default_value = "digitgen")]
    kind: Kind,
    /// Number of stickers
    #[arg(long)]
    count: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random gaps between glyphs
    #[arg(long)]
    random_spacing: bool,
    /// Add a space class (digitgen)
    #[arg(long)]
    space_class: bool,
    /// Random background and foreground intensity (digitgen)
    #[arg(long)]
    dynamic_background: bool,
    /// Random horizontal glyph scale (digitgen)
    #[arg(long)]
    dynamic_width: bool,
    /// Additive Gaussian noise (digitgen)
    #[arg(long)]
    noise: bool,
    /// Darkened rectangles (digitgen)
    #[arg(long)]
    shadows: bool,
    /// Radial brightness bursts (digitgen)
    #[arg(long)]
    bursts: bool,
    /// Font variants to draw from (digitgen)
    #[arg(long, value_enum, value_delimiter = ',', default_value = "plain")]
    fonts: Vec<Font>,
    /// Directory holding 0.pgm..9.pgm glyphs instead of the built-in font (digitgen)
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// MNIST image IDX file (mnist)
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    /// MNIST label IDX file (mnist)
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    /// Output width (mnist)
    #[arg(long, default_value_t = 244)]
    mnist_width: usize,
    /// Output height (mnist)
    #[arg(long, default_value_t = 48)]
    mnist_height: usize,
    /// Dark ink on a light ground (mnist)
    #[arg(long)]
    invert: bool,
}

#[derive(clap::Args, Serialize)]
struct TrainArgs {
    /// Training dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset directory
    #[arg(long)]
    val: PathBuf,
    /// Model configuration JSON; derived from the data when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Encoder when no --config is given
    #[arg(long, value_enum, default_value = "bilstm")]
    encoder: Encoder,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Sharpness-aware minimization
    #[arg(long)]
    sam: bool,
    /// SAM neighbourhood radius
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the sample order fixed
    #[arg(long)]
    no_shuffle: bool,
    /// Cosine learning-rate annealing to zero
    #[arg(long)]
    cosine: bool,
    /// Weight file to write
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-epoch history as JSON lines here
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write the report here as well as to stdout
    #[arg(long)]
    json: Option<PathBuf>,
    /// Single-image forwards timed for latency
    #[arg(long, default_value_t = 100)]
    latency_runs: usize,
}

#[derive(clap::Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// PGM image with the model's input size
    #[arg(long)]
    image: PathBuf,
}

#[derive(clap::Args, Serialize)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated perturbation sizes
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3")]
    epsilons: Vec<f64>,
    /// Write the report here as well as to stdout
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Output directory for CSV and PGM files
    #[arg(long)]
    out: PathBuf,
}

fn usage_error(kind: clap::error::ErrorKind, msg: &str) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GEOTR_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("GEOTR_THREADS={v:?} is not a number"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

fn write_json(path: &Path, json: &str) -> Result<()> {
    fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(dir: &Path, cfg: &ModelConfig) -> Result<Dataset> {
    let h = load_manifest(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    h.check_config(cfg)?;
    Ok(h.load_all()?)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let path = match a.kind {
        Kind::Digitgen => {
            let spec = GenSpec {
                augment: Augmentations {
                    random_spacing: a.random_spacing,
                    space_class: a.space_class,
                    dynamic_background: a.dynamic_background,
                    dynamic_width: a.dynamic_width,
                    noise: a.noise,
                    shadow_patches: a.shadows,
                    light_bursts: a.bursts,
                },
                fonts: a
                    .fonts
                    .iter()
                    .map(|f| match f {
                        Font::Plain => FontVariant::Plain,
                        Font::Bold => FontVariant::Bold,
                    })
                    .collect(),
                seed: a.seed,
                ..GenSpec::default()
            };
            let atlas = match &a.atlas {
                Some(dir) => GlyphAtlas::from_dir(dir)?,
                None => GlyphAtlas::embedded(),
            };
            generate_dataset(&Generator::new(spec, atlas)?, a.count, &a.out)?
        }
        Kind::Mnist => {
            let (Some(images), Some(labels)) = (&a.mnist_images, &a.mnist_labels) else {
                usage_error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    "--kind mnist requires --mnist-images and --mnist-labels",
                );
            };
            let spec = MnistStickerSpec {
                out_width: a.mnist_width,
                out_height: a.mnist_height,
                random_spacing: a.random_spacing,
                invert: a.invert,
                seed: a.seed,
                ..MnistStickerSpec::default()
            };
            compose_mnist_stickers(&read_idx(images)?, &read_idx(labels)?, &spec, a.count, &a.out)?
        }
    };
    println!("{}", path.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let handle = load_manifest(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let cfg = match &a.config {
        Some(p) => {
            let text = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_slice::<ModelConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let mut cfg = ModelConfig::digits(handle.width, handle.height, handle.slots);
            cfg.labels = handle.labels.clone();
            cfg.classes = cfg.labels.len();
            if let Encoder::Tcn = a.encoder {
                cfg.encoder = EncoderConfig::tcn();
            }
            cfg
        }
    };
    eprintln!("model: {}", cfg.to_canonical_json());
    handle.check_config(&cfg)?;
    let train_set = handle.load_all()?;
    let val_set = load_dataset(&a.val, &cfg)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        sam: a.sam,
        rho: a.rho,
        seed: a.seed,
        shuffle: !a.no_shuffle,
        cosine: a.cosine,
    };
    let mut model = GeoTrNet::<f32>::new(cfg, a.seed)?;
    eprintln!("parameters: {}", model.param_count());
    let out = train(&mut model, &train_set, &val_set, &tc, |r| println!("{}", to_sorted_json(r)))?;
    if let Some(h) = &a.history {
        fs::write(h, out.history.to_json_lines()).with_context(|| format!("writing {}", h.display()))?;
    }
    save(&model, &a.out)?;
    eprintln!("kept epoch {} (val exact match {:.4})", out.best_epoch, out.best_val_acc);
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = load(&a.model)?;
    let data = load_dataset(&a.data, &model.config)?;
    let report = evaluate_with(&model, &data, a.latency_runs)?;
    let json = to_sorted_json(&report);
    println!("{json}");
    if let Some(p) = &a.json {
        write_json(p, &json)?;
    }
    Ok(())
}

fn read_image(model: &GeoTrNet<f32>, path: &Path) -> Result<Tensor<f32>> {
    let img = read_pgm(path)?;
    let expect = [model.config.height, model.config.width];
    if img.shape() != expect {
        bail!("{} is {:?}, model expects {:?}", path.display(), img.shape(), expect);
    }
    Ok(img)
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let model = load(&a.model)?;
    let p = model.predict(&read_image(&model, &a.image)?)?;
    println!("{}", model.decode(&p.labels));
    let conf: Vec<String> = p.confidences.iter().map(|c| format!("{c:.4}")).collect();
    println!("{}", conf.join(" "));
    Ok(())
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let model = load(&a.model)?;
    let data = load_dataset(&a.data, &model.config)?;
    let report = attack_eval(&model, &data, &a.epsilons)?;
    if !report.is_monotone() {
        eprintln!("note: accuracy is not monotone in epsilon");
    }
    let json = to_sorted_json(&report);
    println!("{json}");
    if let Some(p) = &a.json {
        write_json(p, &json)?;
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let model = load(&a.model)?;
    let trace = model.trace(&read_image(&model, &a.image)?)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let w = &model.params.projection.slot_w;
    let (m, t, k) = w.dims3()?;
    let slot_weights = w.clone().reshape(&[m, t * k])?;
    export::export(&a.out, "latent", &trace.latent)?;
    export::export(&a.out, "class_map", &trace.class_map)?;
    export::export(&a.out, "slot_weights", &slot_weights)?;
    export::export(&a.out, "logits", &trace.probs)?;
    println!("{}", model.decode(&GeoTrNet::decide(&trace.probs).labels));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    eprintln!("config: {}", to_sorted_json(cli));
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
