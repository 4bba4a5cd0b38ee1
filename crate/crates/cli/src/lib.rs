//! The `facerep` command line: one subcommand per pipeline stage.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use facerep::augment::write_augmented;
use facerep::bilinear::{BilinearFit, BilinearModel};
use facerep::deform::{load_drf, save_drf, DrFeature, ReferenceFrame};
use facerep::mesh::{load_obj, save_obj, Mesh};
use facerep::metrics::{evaluate_decompositions, DecomposedSample, CSV_HEADER};
use facerep::net::{load_model, save_model, Model, Trainer, LOG_HEADER};
use facerep::synth::{generate, CorpusFiles};
use facerep::tensorfile::{Manifest, MANIFEST_FILE};
use facerep::{Error, Result};

pub use config::RunConfig;

/// Exit status for malformed invocations.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for unreadable or invalid data.
pub const EXIT_DATA: i32 = 2;

/// Name of the resolved configuration written into output directories.
pub const RESOLVED_CONFIG: &str = "run.json";

#[derive(Debug, Parser)]
#[command(
    name = "facerep",
    version,
    about = "Disentangled face representation: corpus synthesis, training, transfer and evaluation",
    after_help = "Configuration: --config takes a JSON document with optional sections \
`seed`, `corpus` (cols 32, rows 32, identities 16, expressions 12, held_out 2, seed 0), \
`arch` (cheb_order 2, conv_width 32, dense_width 128, latent_id 50, latent_exp 25, conv_bias true), \
`train` (epochs_per_stage 50, learning_rate 1e-4, lr_decay 0.6, decay_every 10, \
id_kld_weight 1e-5, exp_kld_weight 1e-5, batch_size 16, seed 0, beta1 0.9, beta2 0.999, \
adam_eps 1e-8, augment_count 0, augment_sources 5), `bilinear` (k_id 50, k_exp 25, \
max_iter 100, tol 1e-6), `augment` (count 2000, sources 5, seed 0), `stride` (0.25) and \
`paths` (corpus, model, reference, out). Unknown keys are rejected. Flags override the file; \
every run writes the resolved configuration beside its outputs."
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for corpus synthesis, training and augmentation.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Latents {
    /// Identity latent size (bilinear identity rank for bilinear-build).
    #[arg(long)]
    latent_id: Option<usize>,
    /// Expression latent size (bilinear expression rank for bilinear-build).
    #[arg(long)]
    latent_exp: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic identity × expression corpus.
    Synth,
    /// Encode a mesh as a deformation feature file.
    DrEncode {
        #[arg(long = "ref", value_name = "OBJ")]
        reference: Option<PathBuf>,
        #[arg(long = "in", value_name = "OBJ")]
        input: PathBuf,
    },
    /// Decode a deformation feature file to a mesh.
    DrDecode {
        #[arg(long = "ref", value_name = "OBJ")]
        reference: Option<PathBuf>,
        #[arg(long = "in", value_name = "DRF")]
        input: PathBuf,
    },
    /// Mix training identities into new identity features.
    Augment {
        /// Corpus whose training identities are mixed.
        #[arg(long, value_name = "DIR", conflicts_with = "input")]
        corpus: Option<PathBuf>,
        /// Feature files to mix instead of a corpus.
        #[arg(long = "in", value_name = "DRF", num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        /// Sources per generated feature.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Train the decomposition and fusion networks on a corpus.
    Train {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Augmented identities mixed into training.
        #[arg(long)]
        augment: Option<usize>,
        #[command(flatten)]
        latents: Latents,
    },
    /// Split a mesh into identity, expression and fused reconstruction.
    Decompose {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long = "in", value_name = "OBJ")]
        input: PathBuf,
    },
    /// Put the expression of one mesh on the identity of another.
    Transfer {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "OBJ")]
        source: PathBuf,
        #[arg(long, value_name = "OBJ")]
        target: PathBuf,
    },
    /// Interpolate identity and expression codes between two meshes.
    Interp {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "OBJ")]
        from: PathBuf,
        #[arg(long, value_name = "OBJ")]
        to: PathBuf,
        /// Interpolation step; must divide 1 [default: 0.25]
        #[arg(long)]
        stride: Option<f64>,
    },
    /// Build the bilinear baseline from a corpus's training grid.
    BilinearBuild {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        latents: Latents,
    },
    /// Fit bilinear coefficients to a mesh.
    BilinearFit {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long = "in", value_name = "OBJ")]
        input: PathBuf,
    },
    /// Expression transfer with the bilinear baseline.
    BilinearTransfer {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "OBJ")]
        source: PathBuf,
        #[arg(long, value_name = "OBJ")]
        target: PathBuf,
    },
    /// All metrics of a network or bilinear model on a corpus split, as CSV.
    Eval {
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Evaluate the training identities instead of the held-out ones.
        #[arg(long)]
        train_split: bool,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status. Errors go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn required(value: Option<PathBuf>, flag: &str) -> Outcome<PathBuf> {
    value.ok_or_else(|| Failure::Usage(format!("missing {flag}")))
}

fn execute(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.propagate_seed();
    if cli.out.is_some() {
        cfg.paths.out = cli.out.clone();
    }
    apply_flags(&mut cfg, &cli.command);
    cfg.validate()?;
    let out = required(cfg.paths.out.clone(), "--out")?;
    match cli.command {
        Command::Synth => {
            let corpus = generate(&cfg.corpus)?;
            corpus.write(&out)?;
            write_config_in(&cfg, &out)?;
        }
        Command::DrEncode { input, .. } => {
            let frame = reference_frame(&cfg)?;
            let mesh = load_mesh_like(&input, frame.mesh())?;
            save_drf(&frame.encode(&mesh).map_err(|e| e.in_file(&input))?, &out)?;
            write_config_beside(&cfg, &out)?;
        }
        Command::DrDecode { input, .. } => {
            let frame = reference_frame(&cfg)?;
            let feature = load_drf(&input)?;
            save_obj(
                &frame.decode(&feature).map_err(|e| e.in_file(&input))?,
                &out,
            )?;
            write_config_beside(&cfg, &out)?;
        }
        Command::Augment { corpus, input, .. } => {
            let (features, names) = if input.is_empty() {
                let dir = required(corpus.or(cfg.paths.corpus.clone()), "--corpus or --in")?;
                corpus_identity_features(&dir)?
            } else {
                let features = input.iter().map(load_drf).collect::<Result<Vec<_>>>()?;
                let names = input.iter().map(|p| p.display().to_string()).collect();
                (features, names)
            };
            let a = &cfg.augment;
            write_augmented(&features, names, a.count, a.sources, a.seed, &out)?;
            write_config_in(&cfg, &out)?;
        }
        Command::Train { .. } => {
            let dir = required(cfg.paths.corpus.clone(), "--corpus")?;
            train(&cfg, &dir, &out)?;
        }
        Command::Decompose { input, .. } => {
            let model = network(&cfg)?;
            let mesh = load_mesh_like(&input, model.frame().mesh())?;
            let d = model.decompose(&mesh)?;
            fs::create_dir_all(&out).map_err(|e| Error::from(e).in_file(&out))?;
            save_obj(&d.identity, out.join("identity.obj"))?;
            save_obj(&d.expression, out.join("expression.obj"))?;
            save_obj(&d.reconstruction, out.join("reconstruction.obj"))?;
            write_config_in(&cfg, &out)?;
        }
        Command::Transfer { source, target, .. } => {
            let model = network(&cfg)?;
            let s = load_mesh_like(&source, model.frame().mesh())?;
            let t = load_mesh_like(&target, model.frame().mesh())?;
            save_obj(&model.transfer_expression(&s, &t)?, &out)?;
            write_config_beside(&cfg, &out)?;
        }
        Command::Interp { from, to, .. } => {
            let model = network(&cfg)?;
            let a = load_mesh_like(&from, model.frame().mesh())?;
            let b = load_mesh_like(&to, model.frame().mesh())?;
            let grid = model.interpolate_latent(&a, &b, cfg.stride)?;
            fs::create_dir_all(&out).map_err(|e| Error::from(e).in_file(&out))?;
            for i in 0..=grid.steps {
                for e in 0..=grid.steps {
                    save_obj(grid.get(i, e), out.join(format!("interp_id{i}_exp{e}.obj")))?;
                }
            }
            write_config_in(&cfg, &out)?;
        }
        Command::BilinearBuild { .. } => {
            let dir = required(cfg.paths.corpus.clone(), "--corpus")?;
            let corpus = CorpusFiles::load(&dir)?;
            let grid: Vec<Vec<Mesh>> = corpus
                .manifest
                .train
                .iter()
                .map(|&i| corpus.meshes[i].clone())
                .collect();
            let model = BilinearModel::build(&grid, cfg.bilinear.k_id, cfg.bilinear.k_exp)?;
            model.save(&out)?;
            write_config_in(&cfg, &out)?;
        }
        Command::BilinearFit { input, .. } => {
            let model = bilinear(&cfg)?;
            let mesh = load_mesh_like(&input, model.topology())?;
            let fit = bilinear_fit(&cfg, &model, &mesh)?;
            fs::create_dir_all(&out).map_err(|e| Error::from(e).in_file(&out))?;
            let path = out.join("fit.json");
            fs::write(
                &path,
                serde_json::to_string_pretty(&fit).map_err(Error::from)? + "\n",
            )
            .map_err(|e| Error::from(e).in_file(&path))?;
            save_obj(
                &model.reconstruct(&fit.alpha_id, &fit.alpha_exp)?,
                out.join("reconstruction.obj"),
            )?;
            save_obj(&model.identity_mesh(&fit)?, out.join("identity.obj"))?;
            save_obj(&model.expression_mesh(&fit)?, out.join("expression.obj"))?;
            write_config_in(&cfg, &out)?;
        }
        Command::BilinearTransfer { source, target, .. } => {
            let model = bilinear(&cfg)?;
            let s = load_mesh_like(&source, model.topology())?;
            let t = load_mesh_like(&target, model.topology())?;
            let (fs_, ft) = (
                bilinear_fit(&cfg, &model, &s)?,
                bilinear_fit(&cfg, &model, &t)?,
            );
            save_obj(&model.transfer(&fs_, &ft)?, &out)?;
            write_config_beside(&cfg, &out)?;
        }
        Command::Eval { train_split, .. } => {
            let dir = required(cfg.paths.corpus.clone(), "--corpus")?;
            let model = required(cfg.paths.model.clone(), "--model")?;
            evaluate(&cfg, &model, &dir, train_split, &out)?;
        }
    }
    Ok(())
}

/// Folds subcommand flags into the configuration.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    let paths = &mut cfg.paths;
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    match command {
        Command::DrEncode { reference, .. } | Command::DrDecode { reference, .. } => {
            set(&mut paths.reference, reference)
        }
        Command::Augment {
            corpus, count, m, ..
        } => {
            set(&mut paths.corpus, corpus);
            if let Some(c) = count {
                cfg.augment.count = *c;
            }
            if let Some(m) = m {
                cfg.augment.sources = *m;
            }
        }
        Command::Train {
            corpus,
            epochs,
            augment,
            latents,
        } => {
            set(&mut paths.corpus, corpus);
            if let Some(e) = epochs {
                cfg.train.epochs_per_stage = *e;
            }
            if let Some(a) = augment {
                cfg.train.augment_count = *a;
            }
            if let Some(l) = latents.latent_id {
                cfg.arch.latent_id = l;
            }
            if let Some(l) = latents.latent_exp {
                cfg.arch.latent_exp = l;
            }
        }
        Command::BilinearBuild { corpus, latents } => {
            set(&mut paths.corpus, corpus);
            if let Some(l) = latents.latent_id {
                cfg.bilinear.k_id = l;
            }
            if let Some(l) = latents.latent_exp {
                cfg.bilinear.k_exp = l;
            }
        }
        Command::Decompose { model, .. }
        | Command::Transfer { model, .. }
        | Command::BilinearFit { model, .. }
        | Command::BilinearTransfer { model, .. } => set(&mut paths.model, model),
        Command::Interp { model, stride, .. } => {
            set(&mut paths.model, model);
            if let Some(s) = stride {
                cfg.stride = *s;
            }
        }
        Command::Eval { model, corpus, .. } => {
            set(&mut paths.model, model);
            set(&mut paths.corpus, corpus);
        }
        Command::Synth => {}
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
}

fn write_config_in(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_text(&dir.join(RESOLVED_CONFIG), &cfg.to_json())
}

/// For single-file outputs: `<out>.run.json` next to the file.
fn write_config_beside(cfg: &RunConfig, file: &Path) -> Result<()> {
    let mut name = file.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run.json");
    write_text(&file.with_file_name(name), &cfg.to_json())
}

fn reference_frame(cfg: &RunConfig) -> Outcome<ReferenceFrame> {
    let path = required(cfg.paths.reference.clone(), "--ref")?;
    let mesh = load_obj(&path)?;
    Ok(ReferenceFrame::new(mesh).map_err(|e| e.in_file(&path))?)
}

/// Loads an OBJ and rebinds it to `like`'s topology.
fn load_mesh_like(path: &Path, like: &Mesh) -> Result<Mesh> {
    let m = load_obj(path)?;
    if !like.shares_connectivity(&m) {
        return Err(Error::ConnectivityMismatch.in_file(path));
    }
    like.with_vertices(m.vertices().to_vec())
        .map_err(|e| e.in_file(path))
}

fn corpus_identity_features(dir: &Path) -> Result<(Vec<DrFeature>, Vec<String>)> {
    let corpus = CorpusFiles::load(dir)?;
    let frame = ReferenceFrame::new(corpus.reference.clone())?;
    let mut features = Vec::new();
    let mut names = Vec::new();
    for &i in &corpus.manifest.train {
        features.push(frame.encode(&corpus.meshes[i][0])?);
        names.push(format!("{i}_0.obj"));
    }
    Ok((features, names))
}

fn train(cfg: &RunConfig, corpus_dir: &Path, out: &Path) -> Result<()> {
    let corpus = CorpusFiles::load(corpus_dir)?;
    let frame = ReferenceFrame::new(corpus.reference.clone())?;
    let triplets = corpus.triplets(&frame, &corpus.manifest.train)?;
    let mut trainer = Trainer::new(cfg.arch.clone(), cfg.train.clone(), frame, &triplets)?;
    let mut log = format!("{LOG_HEADER}\n");
    trainer.run(|row| {
        log.push_str(&row.csv());
        log.push('\n');
    })?;
    let (model, rows) = trainer.into_model();
    save_model(&model, out)?;
    write_text(&out.join("train_log.csv"), &log)?;
    write_config_in(cfg, out)?;
    if let Some(last) = rows.last() {
        println!("final L_total {}", last.losses.total);
    }
    Ok(())
}

fn network(cfg: &RunConfig) -> Outcome<Model> {
    Ok(load_model(required(cfg.paths.model.clone(), "--model")?)?)
}

fn bilinear(cfg: &RunConfig) -> Outcome<BilinearModel> {
    Ok(BilinearModel::load(required(
        cfg.paths.model.clone(),
        "--model",
    )?)?)
}

fn bilinear_fit(cfg: &RunConfig, model: &BilinearModel, mesh: &Mesh) -> Result<BilinearFit> {
    model.fit(mesh, None, cfg.bilinear.max_iter, cfg.bilinear.tol)
}

fn model_kind(dir: &Path) -> Result<Option<String>> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::from(e).in_file(&path))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::from(e).in_file(&path))?;
    Ok(manifest.kind)
}

fn evaluate(
    cfg: &RunConfig,
    model_dir: &Path,
    corpus_dir: &Path,
    train_split: bool,
    out: &Path,
) -> Result<()> {
    let corpus = CorpusFiles::load(corpus_dir)?;
    let ids = if train_split {
        &corpus.manifest.train
    } else {
        &corpus.manifest.test
    };
    let mut samples = Vec::new();
    let mut push = |i: usize, e: usize, original: &Mesh, parts: [Mesh; 3]| {
        let [reconstruction, identity_part, expression_part] = parts;
        samples.push(DecomposedSample {
            identity: i,
            expression: e,
            original: original.clone(),
            reconstruction,
            identity_part,
            expression_part,
        });
    };
    if model_kind(model_dir)?.as_deref() == Some(facerep::bilinear::KIND) {
        let model = BilinearModel::load(model_dir)?;
        for &i in ids {
            for (e, m) in corpus.meshes[i].iter().enumerate() {
                let fit = bilinear_fit(cfg, &model, m)?;
                push(
                    i,
                    e,
                    m,
                    [
                        model.reconstruct(&fit.alpha_id, &fit.alpha_exp)?,
                        model.identity_mesh(&fit)?,
                        model.expression_mesh(&fit)?,
                    ],
                );
            }
        }
    } else {
        let model = load_model(model_dir)?;
        for &i in ids {
            for (e, m) in corpus.meshes[i].iter().enumerate() {
                let d = model.decompose(m)?;
                push(i, e, m, [d.reconstruction, d.identity, d.expression]);
            }
        }
    }
    let mut csv = format!("{CSV_HEADER}\n");
    for report in evaluate_decompositions(&samples)? {
        report.write_csv_rows(&mut csv);
    }
    fs::create_dir_all(out).map_err(|e| Error::from(e).in_file(out))?;
    write_text(&out.join("metrics.csv"), &csv)?;
    write_config_in(cfg, out)?;
    print!("{csv}");
    Ok(())
}
