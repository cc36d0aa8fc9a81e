//! Command-line front end. [`run`] parses arguments, executes one command
//! and maps the outcome to a process exit code.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

pub use config::{Paths, RunConfig};

use crate::analysis::{coupling_rows_csv, export_capsules_csv, routing_histogram, saliency, CouplingClass};
use crate::capsnet::{load_checkpoint, save_checkpoint, CapsModel, ModalityInputs, ModalityMask};
use crate::error::{Error, Result};
use crate::features::{freq_embed, load_ppm, read_emb1, save_ppm, EmbeddingDataset, EmbeddingRecord, ImageBuffer};
use crate::robustness::{
    attack_image, fgsm_embedding, frequency_sweep, full_pipeline_sweep, linf_distance, perturb, pgd_embedding,
    reextracted_file_name, AttackConfig, AttackSpace, PerturbGrid, PerturbKind, SweepItem,
};
use crate::trainer::{evaluate, train_from, MetricsReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CAPABILITY: i32 = 4;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Capability(_) => EXIT_CAPABILITY,
        Error::Shape { .. } | Error::Contract(_) | Error::ImageFormat { .. } | Error::Format { .. } | Error::Io { .. } => {
            EXIT_DATA
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "capsfake", version, about = "Multimodal capsule network for fake image detection")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus the epoch history.
    Train(TrainArgs),
    /// Classify a dataset and report precision, recall, F1 and accuracy.
    Eval(EvalArgs),
    /// FGSM or PGD against embeddings or image pixels.
    Attack(AttackArgs),
    /// Perturb one image, or sweep perturbation grids over a dataset.
    Perturb(PerturbArgs),
    /// Frequency-path saliency map of one image.
    Saliency(SaliencyArgs),
    /// Print the 768-value frequency embedding of an image.
    FreqEmbed(FreqEmbedArgs),
    /// Final-iteration coupling coefficients per input capsule.
    InspectRouting(InspectRoutingArgs),
    /// Prediction vectors and class capsules for external projection tools.
    ExportCapsules(ExportCapsulesArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output history CSV; printed to stdout when absent.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset to classify (default: the configured test set).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated modalities to keep, e.g. `visual,frequency`.
    #[arg(long)]
    pub modality_mask: Option<String>,
    /// Print a CSV header and row instead of the text report.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fgsm,
    Pgd,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Records to attack, or the source of visual/text context in image space.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pgd")]
    pub method: Method,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// `embedding` or `image-frequency`.
    #[arg(long)]
    pub space: Option<String>,
    /// Image to attack in image space.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Context record for image space (default: the first record).
    #[arg(long)]
    pub record_id: Option<String>,
    /// Adversarial EMB1 (embedding space) or PPM (image space).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Single-image mode: image to perturb.
    #[arg(long, conflicts_with = "sweep")]
    pub image: Option<PathBuf>,
    /// Perturbation kind; in sweep mode restricts the sweep to this kind.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, requires = "image")]
    pub level: Option<f64>,
    /// Sweep the configured grids and report metrics per level.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory holding `<record id>.ppm` for every record (frequency-only sweep).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Evaluate re-extracted embeddings instead of recomputing only the frequency branch.
    #[arg(long)]
    pub full: bool,
    /// Directory of `<kind>_<level>.emb1` files for `--full`.
    #[arg(long)]
    pub reextracted_dir: Option<PathBuf>,
    /// Output PPM (single image) or CSV (sweep; stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub image: PathBuf,
    /// Source of the visual and text vectors.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub record_id: Option<String>,
    /// Normalized heatmap (P5).
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    /// Unnormalized f32 matrix.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FreqEmbedArgs {
    #[arg(long)]
    pub image: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HistogramClass {
    Predicted,
    Real,
    Fake,
}

#[derive(Debug, Args)]
pub struct InspectRoutingArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Coupling rows CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a per-modality histogram CSV here.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Class column counted by the histogram.
    #[arg(long, value_enum, default_value = "predicted")]
    pub class: HistogramClass,
}

#[derive(Debug, Args)]
pub struct ExportCapsulesArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Results go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
        Err(e) => {
            // --help and --version
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed)?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.into());
    }
    let pool = pool.build().map_err(|e| Error::config(format!("thread pool: {e}")))?;
    // results are buffered so the worker pool never touches `out`
    let mut buf = Vec::new();
    pool.install(|| dispatch(&cli.command, &cfg, &mut buf))?;
    write_out(out, &String::from_utf8_lossy(&buf))
}

fn dispatch(cmd: &Command, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a, cfg, out),
        Command::Eval(a) => cmd_eval(a, cfg, out),
        Command::Attack(a) => cmd_attack(a, cfg, out),
        Command::Perturb(a) => cmd_perturb(a, cfg, out),
        Command::Saliency(a) => cmd_saliency(a, cfg, out),
        Command::FreqEmbed(a) => cmd_freq_embed(a, out),
        Command::InspectRouting(a) => cmd_inspect_routing(a, cfg, out),
        Command::ExportCapsules(a) => cmd_export_capsules(a, cfg, out),
    }
}

/// Command-line value, else the configured path, else a config error naming the flag.
fn pick<'a>(arg: &'a Option<PathBuf>, configured: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    arg.as_deref()
        .or(configured.as_deref())
        .ok_or_else(|| Error::config(format!("--{flag} is required (or set it under [paths])")))
}

fn load_data(path: &Path) -> Result<EmbeddingDataset> {
    read_emb1(path).map_err(|e| match e {
        Error::Format { record, reason } => Error::Format { record, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

fn load_model(path: &Path) -> Result<CapsModel> {
    load_checkpoint(path).map_err(|e| match e {
        Error::Format { record, reason } => Error::Format { record, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

fn load_image(path: &Path) -> Result<ImageBuffer> {
    load_ppm(path).map_err(|e| match e {
        Error::ImageFormat { offset, reason } => {
            Error::ImageFormat { offset, reason: format!("{}: {reason}", path.display()) }
        }
        other => other,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Writes `text` to `path`, or to `out` when no path is given.
fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => write_out(out, text),
    }
}

fn metrics_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let mut text = format!("set,{}\n", MetricsReport::CSV_HEADER);
    for (name, m) in rows {
        text.push_str(&format!("{name},{}\n", m.csv_row()));
    }
    text
}

fn cmd_train(a: &TrainArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let train_path = pick(&a.train, &cfg.paths.train, "train")?;
    let val_path = pick(&a.val, &cfg.paths.val, "val")?;
    let ckpt = pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let history_path = a.history.as_deref().or(cfg.paths.history.as_deref());
    let train_set = load_data(train_path)?;
    let val_set = load_data(val_path)?;

    let model = CapsModel::init(cfg.model, cfg.seed)?;
    let quiet = a.quiet;
    let (model, history) = train_from(model, &train_set, &val_set, &cfg.train, |e| {
        if !quiet {
            eprintln!("epoch {:>3}  loss {:.6}  val_acc {:.2}", e.epoch, e.loss, e.val_acc);
        }
    })?;
    save_checkpoint(&model, ckpt)?;
    let csv = history.to_csv();
    match history_path {
        Some(p) => {
            write_file(p, &csv)?;
            let best = history.best();
            let line = format!(
                "best epoch {} of {}, val_acc {:.2}, checkpoint {}\n",
                best.epoch,
                history.epochs.len(),
                best.val_acc,
                ckpt.display()
            );
            write_out(out, &line)
        }
        None => write_out(out, &csv),
    }
}

fn cmd_eval(a: &EvalArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    if let Some(mask) = &a.modality_mask {
        model.set_modality_mask(mask.parse::<ModalityMask>()?)?;
    }
    let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
    let report = evaluate(&model, &ds)?;
    if a.csv {
        write_out(out, &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()))
    } else {
        write_out(out, &format!("mask      {}\n{report}\n", model.config().modality_mask))
    }
}

fn attack_config(a: &AttackArgs, cfg: &RunConfig) -> Result<AttackConfig> {
    let mut c = cfg.attack;
    if let Some(v) = a.eta {
        c.eta = v;
    }
    if let Some(v) = a.epsilon {
        c.epsilon = v;
    }
    if let Some(v) = a.step {
        c.step = v;
    }
    if let Some(v) = a.iters {
        c.iters = v;
    }
    if let Some(s) = &a.space {
        c.space = s.parse()?;
    }
    c.validate()?;
    Ok(c)
}

fn find_record<'d>(ds: &'d EmbeddingDataset, id: Option<&str>) -> Result<&'d EmbeddingRecord> {
    match id {
        Some(id) => ds
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::contract(format!("no record with id {id:?}"))),
        None => ds.records.first().ok_or_else(|| Error::contract("dataset is empty")),
    }
}

fn cmd_attack(a: &AttackArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let attack = attack_config(a, cfg)?;
    let model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
    let margin = cfg.margin;

    match attack.space {
        AttackSpace::Embedding => {
            let results: Vec<(EmbeddingRecord, f64)> = ds
                .records
                .par_iter()
                .map(|r| {
                    let x = ModalityInputs::from_record(r);
                    let adv = match a.method {
                        Method::Fgsm => fgsm_embedding(&model, &x, r.label, attack.eta, &margin)?,
                        Method::Pgd => pgd_embedding(&model, &x, r.label, &attack, &margin)?,
                    };
                    let dist = linf_distance(&x.concat(), &adv.adversarial.concat());
                    Ok((adv.adversarial.to_record(r.id.clone(), r.label), dist))
                })
                .collect::<Result<_>>()?;
            let max_dist = results.iter().map(|(_, d)| *d).fold(0.0, f64::max);
            let adv = EmbeddingDataset::new(results.into_iter().map(|(r, _)| r).collect());
            crate::features::write_emb1(&adv, &a.out)?;
            let clean = evaluate(&model, &ds)?;
            let attacked = evaluate(&model, &adv)?;
            eprintln!("max linf distance {max_dist:.6}");
            write_out(out, &metrics_csv(&[("clean", &clean), ("adversarial", &attacked)]))
        }
        AttackSpace::ImageFrequency => {
            let image_path = a
                .image
                .as_deref()
                .ok_or_else(|| Error::config("--image is required for image-frequency attacks"))?;
            let img = load_image(image_path)?;
            let rec = find_record(&ds, a.record_id.as_deref())?;
            let context = ModalityInputs::from_record(rec);
            let adv = attack_image(&model, &img, &context, rec.label, &attack, a.method == Method::Pgd, &margin)?;
            save_ppm(&adv.adversarial, &a.out)?;
            let classify = |im: &ImageBuffer| -> Result<_> {
                let mut x = context.clone();
                x.vectors[2] = freq_embed(im)?;
                model.infer(&x)?.classify()
            };
            let (clean_label, clean_p) = classify(&img)?;
            let (adv_label, adv_p) = classify(&adv.adversarial)?;
            let dist = linf_distance(img.pixels(), adv.adversarial.pixels());
            write_out(
                out,
                &format!(
                    "record_id,label,clean_pred,clean_p,adv_pred,adv_p,linf,loss\n{},{},{},{:.6},{},{:.6},{:.6},{:.6}\n",
                    rec.id, rec.label, clean_label, clean_p, adv_label, adv_p, dist, adv.loss
                ),
            )
        }
    }
}

fn cmd_perturb(a: &PerturbArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let kind = a.kind.as_deref().map(str::parse::<PerturbKind>).transpose()?;
    if !a.sweep {
        let image = a.image.as_deref().ok_or_else(|| Error::config("--image or --sweep is required"))?;
        let kind = kind.ok_or_else(|| Error::config("--kind is required"))?;
        let level = a.level.ok_or_else(|| Error::config("--level is required"))?;
        let dest = a.out.as_deref().ok_or_else(|| Error::config("--out is required"))?;
        kind.validate_level(level)?;
        let img = load_image(image)?;
        return save_ppm(&perturb(&img, kind, level, cfg.seed)?, dest);
    }

    let grids: Vec<PerturbGrid> = match kind {
        Some(k) => vec![cfg.grid(k).clone()],
        None => cfg.grids.clone(),
    };
    let model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    let table = if a.full {
        let dir = a.reextracted_dir.as_deref().or(cfg.paths.reextracted_dir.as_deref()).ok_or_else(|| {
            Error::Capability("full-pipeline sweep needs --reextracted-dir with externally extracted embeddings".into())
        })?;
        full_pipeline_sweep(&model, &grids, |kind, level| {
            let path = dir.join(reextracted_file_name(kind, level));
            if path.exists() {
                load_data(&path).map(Some)
            } else {
                Ok(None)
            }
        })?
    } else {
        let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
        let dir = a.images.as_deref().ok_or_else(|| Error::config("--images is required for a frequency-only sweep"))?;
        let items = ds
            .records
            .iter()
            .map(|r| Ok(SweepItem { image: load_image(&dir.join(format!("{}.ppm", r.id)))?, record: r.clone() }))
            .collect::<Result<Vec<_>>>()?;
        frequency_sweep(&model, &items, &grids, cfg.seed)?
    };
    emit(a.out.as_deref(), out, &table.to_csv())
}

fn cmd_saliency(a: &SaliencyArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
    let rec = find_record(&ds, a.record_id.as_deref())?;
    let img = load_image(&a.image)?;
    let map = saliency(&model, &img, &ModalityInputs::from_record(rec), &rec.id)?;
    if map.all_zero {
        eprintln!("warning: gradient is zero at every pixel; the map is all zero");
    }
    if let Some(p) = &a.pgm {
        map.save_pgm(p)?;
    }
    if let Some(p) = &a.raw {
        map.save_raw(p)?;
    }
    let (y, x) = map.argmax();
    write_out(
        out,
        &format!(
            "record_id,label,confidence,all_zero,max_y,max_x,max_saliency\n{},{},{:.6},{},{y},{x},{:.6}\n",
            map.image_id,
            map.label,
            map.confidence,
            map.all_zero,
            map.get(y, x)
        ),
    )
}

fn cmd_freq_embed(a: &FreqEmbedArgs, out: &mut dyn Write) -> Result<()> {
    let v = freq_embed(&load_image(&a.image)?)?;
    let line: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    write_out(out, &format!("{}\n", line.join(",")))
}

fn cmd_inspect_routing(a: &InspectRoutingArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
    if let Some(p) = &a.histogram {
        let class = match a.class {
            HistogramClass::Predicted => CouplingClass::Predicted,
            HistogramClass::Real => CouplingClass::Fixed(0),
            HistogramClass::Fake => CouplingClass::Fixed(1),
        };
        write_file(p, &routing_histogram(&model, &ds, a.bins, class)?.to_csv())?;
    }
    emit(a.out.as_deref(), out, &coupling_rows_csv(&model, &ds)?)
}

fn cmd_export_capsules(a: &ExportCapsulesArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = load_model(pick(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
    let ds = load_data(pick(&a.data, &cfg.paths.test, "data")?)?;
    emit(a.out.as_deref(), out, &export_capsules_csv(&model, &ds)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("capsfake").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::config("x")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::format(None, "x")), EXIT_DATA);
        assert_eq!(exit_code(&Error::contract("x")), EXIT_DATA);
        assert_eq!(exit_code(&Error::Capability("x".into())), EXIT_CAPABILITY);
    }

    #[test]
    fn usage_errors_are_config_errors() {
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(run_capture(&["--threads", "0", "eval"]).0, EXIT_CONFIG);
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let (code, _) = run_capture(&["eval"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn full_sweep_without_extractions_is_a_capability_error() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.cps");
        let cfg = crate::capsnet::ModelConfig { embed_dim: 4, capsules_per_modality: 2, capsule_dim: 2, class_dim: 3, ..Default::default() };
        save_checkpoint(&CapsModel::init(cfg, 1).unwrap(), &ckpt).unwrap();
        let ck = ckpt.to_str().unwrap();
        assert_eq!(run_capture(&["perturb", "--sweep", "--full", "--checkpoint", ck]).0, EXIT_CAPABILITY);
        let empty = dir.path().to_str().unwrap();
        let args = ["perturb", "--sweep", "--full", "--checkpoint", ck, "--kind", "jpeg", "--reextracted-dir", empty];
        assert_eq!(run_capture(&args).0, EXIT_CAPABILITY);
    }
}
