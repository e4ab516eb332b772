//! The `oodk` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::data::{gen_synthetic, list_images, load_training_dir, read_embeddings, write_bundle, write_embeddings, EmbeddingSet};
use crate::energy::{read_scores, write_scores, ScoreLabel, ScoreRow};
use crate::error::{Error, Result};
use crate::gda::{ClassGaussianModel, DEFAULT_EPSILON_SCALE};
use crate::metrics::{histogram, write_histogram_csv, write_histogram_svg, EvalReport};
use crate::nda::{nda_batch, Image};
use crate::rng::seeded;
use crate::tails::{sample_tails, TailSamplerConfig};
use crate::trainer::{score_inputs, train, write_history, Checkpoint, Mode, TrainData};

const TRAIN_DEFAULTS: &str = "\
Defaults (overridable in the config file under \"train\"):
  alpha = 0.1            weight of the virtual-inlier energy term
  beta = 0.1             weight of the outlier energy term
  m_id = -20             inlier energy margin
  m_ood = -7             outlier energy margin
  temperature = 1
  lr = 0.001, halved every 10 epochs; weight_decay = 0.0005 (AdamW)
  epochs = 50, batch_size = 128
  hidden_widths = [64, 64], latent_dim = 16
  tails: draws_n_total = 10000 per class, rank_n = 64 (the lowest-likelihood draws kept)
  nda: augmix_severity = 11, augmix_width = 3, augmix_depth_range = [1, 3], jigsaw_grid = 4,
       randconv_kernel_sizes = [9, 11, 13, 15, 17, 19], branch_prob_augjig = 0.5,
       vector_canvas_scale = 3 (vector inputs only)";

#[derive(Debug, Parser)]
#[command(name = "oodk", version, about = "Energy-based out-of-distribution detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark (train / test_id / test_semantic / test_modality).
    GenData(GenDataArgs),
    /// Train a classifier and write an OODM checkpoint.
    #[command(after_help = TRAIN_DEFAULTS)]
    Train(TrainArgs),
    /// Score inputs with the negative free energy (higher = more in-distribution).
    Score(ScoreArgs),
    /// AUROC / AUPR-in report from ID and OOD score files.
    Eval(EvalArgs),
    /// Apply the negative-augmentation pipeline to every image in a directory.
    Nda(NdaArgs),
    /// Fit a shared-covariance class-conditional Gaussian to labeled embeddings.
    FitGda(FitGdaArgs),
    /// Draw low-likelihood samples from one class of a fitted Gaussian model.
    SampleTails(SampleTailsArgs),
    /// Score histogram split by label.
    Hist(HistArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// JSON run config; only the "synthetic" section is used (defaults: dim 8,
    /// k_known 4, k_novel 2, n_per_class 500, cluster_spread 1, cluster_separation 6).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides synthetic.seed from the config (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON run config (all keys optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding train.oode, or labels.csv plus PPM/PGM images.
    #[arg(long)]
    data: PathBuf,
    /// CE_ONLY | OURS | NDA_ONLY | AUG_NDA | VOS_LIKE | AUG_VOS [default: OURS, or train.mode]
    #[arg(long)]
    mode: Option<Mode>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Overrides train.seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides train.epochs (default 50).
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-epoch CSV (epoch,ce,l_id,l_ood,acc,lr).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// OODM checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// OODE file (ids are row indices) or a directory of PPM/PGM images (ids are file names).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (id,score,label).
    #[arg(long)]
    out: PathBuf,
    /// Label written for every row.
    #[arg(long, default_value = "ID")]
    label: ScoreLabel,
    /// Energy temperature [default: the checkpoint's train.temperature, else 1].
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Scores of in-distribution inputs.
    #[arg(long)]
    id: PathBuf,
    /// Scores of out-of-distribution inputs.
    #[arg(long)]
    ood: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Optional histogram CSV.
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Optional histogram SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NdaArgs {
    /// Input directory of PPM/PGM images.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory; each image becomes <stem>.nda.ppm (or .nda.pgm).
    #[arg(long)]
    out: PathBuf,
    /// Seed; image i (in sorted file-name order) uses its own derived stream.
    #[arg(long)]
    seed: u64,
    /// JSON run config; only the "nda" section is used (defaults: severity 11,
    /// width 3, depth [1, 3], grid 4, kernels 9..19 odd, branch_prob 0.5).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitGdaArgs {
    /// Labeled OODE embeddings.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output GDA1 model.
    #[arg(long)]
    out: PathBuf,
    /// Ridge added to the covariance, as a fraction of trace/d.
    #[arg(long, default_value_t = DEFAULT_EPSILON_SCALE)]
    epsilon_scale: f64,
}

#[derive(Debug, Args)]
struct SampleTailsArgs {
    /// GDA1 model.
    #[arg(long)]
    gda: PathBuf,
    /// Class index.
    #[arg(long)]
    class: usize,
    /// Samples kept: the n least likely draws.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Draws per call.
    #[arg(long = "N", default_value_t = 10000)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    /// Output OODE file, labeled with the class.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HistArgs {
    /// Score CSV with ID and OOD rows.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI and returns the process exit code. Errors are reported on
/// stderr as a single `error: <kind>: <message>` line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {line}");
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Nda(a) => nda(a),
        Command::FitGda(a) => fit_gda(a),
        Command::SampleTails(a) => sample_tails_cmd(a),
        Command::Hist(a) => hist(a),
    }
}

fn config_or_default(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = config_or_default(&a.config)?;
    if let Some(s) = a.seed {
        cfg.synthetic.seed = s;
    }
    let bundle = gen_synthetic(&cfg.synthetic, &mut seeded(cfg.synthetic.seed))?;
    write_bundle(&a.out, &bundle, &cfg.synthetic)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = config_or_default(&a.config)?;
    if let Some(m) = a.mode {
        cfg.train.mode = m;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let ds = load_training_dir(&a.data)?;
    let data = TrainData {
        inputs: &ds.inputs,
        labels: &ds.labels,
        classes: ds.classes,
        image_shape: ds.image_shape,
    };
    let outcome = train(&data, &cfg.train, &cfg.tails, &cfg.nda)?;
    Checkpoint { params: outcome.params, config_json: cfg.to_json() }.save(&a.out)?;
    if let Some(h) = a.history {
        write_history(h, &outcome.history)?;
    }
    Ok(())
}

fn checkpoint_temperature(ckpt: &Checkpoint) -> f64 {
    RunConfig::from_json(&ckpt.config_json)
        .map(|c| c.train.temperature)
        .unwrap_or(1.0)
}

fn load_score_inputs(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if path.is_dir() {
        let files = list_images(path)?;
        let mut ids = Vec::with_capacity(files.len());
        let mut inputs = Vec::with_capacity(files.len());
        for f in files {
            ids.push(f.file_name().unwrap_or_default().to_string_lossy().into_owned());
            inputs.push(Image::read_pnm(&f)?.into_data());
        }
        Ok((ids, inputs))
    } else {
        let rows = read_embeddings(path)?.rows();
        Ok(((0..rows.len()).map(|i| i.to_string()).collect(), rows))
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let t = a.temperature.unwrap_or_else(|| checkpoint_temperature(&ckpt));
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::input("temperature must be positive"));
    }
    let (ids, inputs) = load_score_inputs(&a.data)?;
    let scores = score_inputs(&ckpt.params, &inputs, t)?;
    let rows: Vec<ScoreRow> = ids
        .into_iter()
        .zip(scores)
        .map(|(id, score)| ScoreRow { id, score, label: a.label })
        .collect();
    write_scores(&a.out, &rows)
}

fn score_values(path: &Path) -> Result<Vec<f64>> {
    Ok(read_scores(path)?.into_iter().map(|r| r.score).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let id = score_values(&a.id)?;
    let ood = score_values(&a.ood)?;
    let want_hist = a.hist.is_some() || a.svg.is_some();
    let report = EvalReport::compute(&id, &ood, want_hist.then_some(a.bins))?;
    write_text(&a.out, &report.to_json())?;
    if let Some(h) = &a.hist {
        write_histogram_csv(h, &report.histogram)?;
    }
    if let Some(s) = &a.svg {
        write_histogram_svg(s, &report.histogram)?;
    }
    Ok(())
}

/// Thread cap from `OODK_THREADS`, if set.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("OODK_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::input(format!("OODK_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn nda(a: NdaArgs) -> Result<()> {
    let cfg = config_or_default(&a.config)?;
    let files = list_images(&a.input)?;
    let images = files.iter().map(Image::read_pnm).collect::<Result<Vec<_>>>()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::input(format!("thread pool: {e}")))?;
    let out = pool.install(|| nda_batch(&images, &cfg.nda, a.seed))?;
    fs::create_dir_all(&a.out)?;
    for (path, img) in files.iter().zip(out) {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        let ext = if img.channels() == 3 { "ppm" } else { "pgm" };
        img.write_pnm(a.out.join(format!("{stem}.nda.{ext}")))?;
    }
    Ok(())
}

fn fit_gda(a: FitGdaArgs) -> Result<()> {
    let set = read_embeddings(&a.embeddings)?;
    let labels = set
        .labels_usize()
        .ok_or_else(|| Error::format("embeddings have no labels"))?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let model = ClassGaussianModel::fit(&set.rows(), &labels, classes, a.epsilon_scale)?;
    model.save(&a.out)
}

fn sample_tails_cmd(a: SampleTailsArgs) -> Result<()> {
    let model = ClassGaussianModel::load(&a.gda)?;
    let cfg = TailSamplerConfig { draws_n_total: a.draws, rank_n: a.n, ..TailSamplerConfig::default() };
    let tails = sample_tails(&model, a.class, &cfg, &mut seeded(a.seed))?;
    let rows: Vec<Vec<f64>> = tails.into_iter().map(|t| t.vector).collect();
    let labels = vec![a.class; rows.len()];
    let mut set = EmbeddingSet::from_rows(&rows, Some(&labels))?;
    set.dim = model.dim();
    write_embeddings(&a.out, &set)
}

fn hist(a: HistArgs) -> Result<()> {
    let rows = read_scores(&a.scores)?;
    let pick = |l: ScoreLabel| -> Vec<f64> { rows.iter().filter(|r| r.label == l).map(|r| r.score).collect() };
    let bins = histogram(&pick(ScoreLabel::Id), &pick(ScoreLabel::Ood), a.bins)?;
    write_histogram_csv(&a.out, &bins)
}
