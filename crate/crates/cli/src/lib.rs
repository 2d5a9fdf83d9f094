//! `lunareg` command-line driver.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use lunareg::eval::{
    detect_and_match, detect_features, generate_synthetic_pair, run_benchmark, run_registration, write_match_overlay,
    write_report_csv, write_report_json, Algorithm, BenchmarkSuite, DatasetSpec, RadiometricMode, RegistrationConfig,
    RegistrationInput, SceneParams, Status,
};
use lunareg::features::{read_matches, write_keypoints_jsonl, write_matches, KeyPoint};
use lunareg::io::{read_raster, read_sidecar, write_raster};
use lunareg::matching::{Homography, Match, MatchSet};
use lunareg::preprocess::{PlanContext, PreprocessPlan};
use lunareg::{Error, GeoRaster, Result, SampleDepth};

pub use config::{parse_config, parse_config_str, RunConfig};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status when registration ran but ended with `status = failed`.
pub const EXIT_FAILED: i32 = 1;
/// Exit status for usage, configuration and input errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lunareg", version, about = "Multimodal lunar image registration")]
struct Cli {
    /// Worker threads for parallel stages (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Sift,
    Asift,
    Akaze,
    Rift2,
    External,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Sift => Algorithm::Sift,
            AlgorithmArg::Asift => Algorithm::Asift,
            AlgorithmArg::Akaze => Algorithm::Akaze,
            AlgorithmArg::Rift2 => Algorithm::Rift2,
            AlgorithmArg::External => Algorithm::External,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    None,
    Gamma,
    Invert,
    GammaInvert,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a preprocessing plan to one image.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// JSON array of steps; omitted = normalize, CLAHE, invert, dilate, PCA.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect keypoints and write them as JSON lines.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Sift)]
        algorithm: AlgorithmArg,
        /// Run configuration supplying detector parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect and match two images; writes a correspondence CSV.
    Match {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Sift)]
        algorithm: AlgorithmArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full registration of one pair.
    Register(RegisterArgs),
    /// Run a benchmark suite and write report.csv / report.json.
    Benchmark {
        /// Suite JSON: datasets, cells, config, warmup.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic crater-field pair with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RegisterArgs {
    /// Run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Correspondence CSV for `--algorithm external`.
    #[arg(long)]
    matches: Option<PathBuf>,
    /// Truth correspondence CSV to score RMSE against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Scene parameters JSON; flags below are ignored when given.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 40)]
    craters: usize,
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::None)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.8)]
    gamma: f64,
    /// Rotation of the source → reference map, degrees.
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    rotation: f64,
    #[arg(long, default_value_t = 1.05)]
    scale: f64,
    #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
    tx: f64,
    #[arg(long, default_value_t = -7.0, allow_hyphen_values = true)]
    ty: f64,
}

/// Failure of a subcommand, mapped onto an exit status.
enum Failure {
    Usage(String),
    Registration,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn command() -> clap::Command {
    Cli::command().after_long_help(format!(
        "Run configuration defaults (register --config):\n{}",
        config::defaults_json()
    ))
}

/// Parses `args` (including the program name), runs the subcommand and returns the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    let result = match cli.command {
        Command::Preprocess { input, plan, out } => preprocess(&input, plan.as_deref(), &out),
        Command::Detect {
            input,
            algorithm,
            config,
            out,
        } => detect(&input, algorithm.into(), config.as_deref(), &out),
        Command::Match {
            source,
            reference,
            algorithm,
            config,
            out,
        } => match_cmd(&source, &reference, algorithm.into(), config.as_deref(), &out),
        Command::Register(args) => register(args),
        Command::Benchmark { suite, out } => benchmark(&suite, &out),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Registration) => EXIT_FAILED,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn raster_name(name: &str, raster: &GeoRaster) -> String {
    match raster.depth() {
        SampleDepth::U8 | SampleDepth::U16 => format!("{name}.png"),
        SampleDepth::F32 => format!("{name}.tif"),
    }
}

fn write_single(raster: &GeoRaster, dir: &Path, name: &str) -> Result<()> {
    let raster = if raster.band_count() > 1 {
        raster.extract_band(0)?
    } else {
        raster.clone()
    };
    write_raster(&raster, &dir.join(raster_name(name, &raster)))
}

fn load_config(path: Option<&Path>) -> Result<RegistrationConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::InputUnreadable {
                path: p.to_path_buf(),
                reason: e.to_string(),
            })?;
            // Source and reference are supplied on the command line here.
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            if let Some(obj) = value.as_object_mut() {
                obj.entry("source").or_insert_with(|| "-".into());
                obj.entry("reference").or_insert_with(|| "-".into());
            }
            Ok(parse_config_str(&value.to_string(), p.parent())?.registration())
        }
        None => Ok(RegistrationConfig::default()),
    }
}

fn preprocess(input: &Path, plan: Option<&Path>, out: &Path) -> CmdResult {
    let plan = match plan {
        Some(p) => PreprocessPlan::from_json(&std::fs::read_to_string(p).map_err(|e| Error::InputUnreadable {
            path: p.to_path_buf(),
            reason: e.to_string(),
        })?)
        .map_err(|e| e.into_config("plan"))?,
        None => PreprocessPlan::optical_default(),
    };
    let img = read_raster(input)?;
    let mut ctx = PlanContext::default();
    ctx.references.insert("input".into(), img.clone());
    let result = plan.apply(&img, &ctx)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_single(&result, out, &format!("{}_preprocessed", stem(input)))?;
    Ok(())
}

fn detect(input: &Path, algorithm: Algorithm, config: Option<&Path>, out: &Path) -> CmdResult {
    let config = load_config(config)?;
    let img = read_raster(input)?;
    let features = detect_features(&img, algorithm, &config)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_keypoints_jsonl(
        create(&out.join(format!("{}_keypoints.jsonl", stem(input))))?,
        &features,
    )?;
    eprintln!("{} keypoints", features.keypoints.len());
    Ok(())
}

fn match_cmd(source: &Path, reference: &Path, algorithm: Algorithm, config: Option<&Path>, out: &Path) -> CmdResult {
    if algorithm == Algorithm::External {
        return Err(Failure::Usage(
            "match needs a detector; external correspondences are already matched".into(),
        ));
    }
    let config = load_config(config)?;
    let (src, reference) = (read_raster(source)?, read_raster(reference)?);
    let matches = detect_and_match(&src, &reference, algorithm, &config)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_matches(create(&out.join("matches.csv"))?, &matches, None)?;
    write_match_overlay(&out.join("matches.png"), &src, &reference, &matches, None)?;
    eprintln!("{} matches", matches.len());
    Ok(())
}

fn read_truth(path: &Path, bounds: ((usize, usize), (usize, usize))) -> Result<Vec<((f64, f64), (f64, f64))>> {
    let file = File::open(path).map_err(|e| Error::InputUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(read_matches(file, Some(bounds))?.matches.point_pairs())
}

fn load_with_sidecar(path: &Path, sidecar: Option<&Path>) -> Result<GeoRaster> {
    let raster = read_raster(path)?;
    Ok(match sidecar {
        Some(s) => raster.with_meta(read_sidecar(s)?),
        None => raster,
    })
}

fn register(args: RegisterArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(p) => {
            // Flags may supply the paths a partial config omits.
            let text = std::fs::read_to_string(p).map_err(|e| Error::InputUnreadable {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            let mut value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
            if let Some(obj) = value.as_object_mut() {
                for (key, flag) in [("source", &args.source), ("reference", &args.reference)] {
                    if let Some(v) = flag {
                        obj.insert(key.into(), v.to_string_lossy().into_owned().into());
                    }
                }
            }
            parse_config_str(&value.to_string(), p.parent())?
        }
        None => RunConfig {
            source: args.source.clone().unwrap_or_default(),
            reference: args.reference.clone().unwrap_or_default(),
            ..RunConfig::default()
        },
    };
    if let Some(a) = args.algorithm {
        cfg.algorithm = a.into();
    }
    if let Some(m) = args.matches {
        cfg.external_matches = Some(m);
    }
    if let Some(t) = args.truth {
        cfg.truth = Some(t);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    cfg.validate()?;

    let source = load_with_sidecar(&cfg.source, cfg.source_sidecar.as_deref())?;
    let reference = load_with_sidecar(&cfg.reference, cfg.reference_sidecar.as_deref())?;
    let truth = match &cfg.truth {
        Some(p) => Some(read_truth(
            p,
            (
                (source.width(), source.height()),
                (reference.width(), reference.height()),
            ),
        )?),
        None => None,
    };
    let input = RegistrationInput {
        dataset: cfg.dataset.clone(),
        source,
        reference,
        truth,
    };
    let outcome = run_registration(&input, cfg.algorithm, &cfg.registration())?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(Error::from)?;

    if cfg.emit.report {
        write_report_csv(create(&out.join("report.csv"))?, std::slice::from_ref(&outcome.report))?;
        write_report_json(create(&out.join("report.json"))?, std::slice::from_ref(&outcome.report))?;
    }
    if let Some(a) = &outcome.artifacts {
        write_homography(&a.homography, &out.join("homography.json"))?;
        write_matches(create(&out.join("matches.csv"))?, &a.matches, Some(&a.inliers))?;
        if cfg.emit.warped {
            match &a.integrated {
                Some(g) => write_single(g, out, "warped")?,
                None => write_single(&a.warped.image, out, "warped")?,
            }
        }
        if cfg.emit.composite {
            if let Some((c, _)) = &a.composite {
                write_single(c, out, "composite")?;
            }
        }
    }
    if cfg.emit.overlay {
        if let Some(m) = &outcome.matches {
            let inliers = outcome.artifacts.as_ref().map(|a| a.inliers.as_slice());
            write_match_overlay(&out.join("matches.png"), &input.source, &input.reference, m, inliers)?;
        }
    }
    let r = &outcome.report;
    match r.status {
        Status::Ok => {
            eprintln!(
                "ok: {} matches, {} inliers, rmse ({:.4}, {:.4}) px",
                r.n_matches,
                r.n_inliers,
                r.rmse_x.unwrap_or(f64::NAN),
                r.rmse_y.unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Status::Failed => {
            eprintln!("registration failed: {}", r.failure.as_deref().unwrap_or("unknown"));
            Err(Failure::Registration)
        }
    }
}

fn write_homography(h: &Homography, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(h)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn benchmark(suite_path: &Path, out: &Path) -> CmdResult {
    let text = std::fs::read_to_string(suite_path).map_err(|e| Error::InputUnreadable {
        path: suite_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut suite: BenchmarkSuite = serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigInvalid {
        field: e.path().to_string(),
        reason: e.into_inner().to_string(),
    })?;
    if let Some(base) = suite_path.parent() {
        for spec in suite.datasets.values_mut() {
            if let DatasetSpec::Files { source, reference } = spec {
                for p in [source, reference] {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        if let Some(p) = suite.config.external_matches.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let rows = run_benchmark(&suite, Some(&out.join("overlays")))?;
    write_report_csv(create(&out.join("report.csv"))?, &rows)?;
    write_report_json(create(&out.join("report.json"))?, &rows)?;
    let failed = rows.iter().filter(|r| r.status == Status::Failed).count();
    eprintln!("{} cells, {} failed", rows.len(), failed);
    Ok(())
}

fn synth(args: SynthArgs) -> CmdResult {
    let params = match &args.scene {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::InputUnreadable {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            serde_json::from_str::<SceneParams>(&text).map_err(|e| Error::ConfigInvalid {
                field: "scene".into(),
                reason: e.to_string(),
            })?
        }
        None => SceneParams {
            size: args.size,
            crater_count: args.craters,
            noise_sigma: args.noise,
            radiometric_mode: match args.mode {
                ModeArg::None => RadiometricMode::None,
                ModeArg::Gamma => RadiometricMode::Gamma { gamma: args.gamma },
                ModeArg::Invert => RadiometricMode::Invert,
                ModeArg::GammaInvert => RadiometricMode::GammaInvert { gamma: args.gamma },
            },
            h_true: Homography::similarity(args.rotation.to_radians(), args.scale, args.tx, args.ty)?,
            ..SceneParams::default()
        },
    };
    let pair = generate_synthetic_pair(args.seed, &params)?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_raster(&pair.reference, &out.join("reference.png"))?;
    write_raster(&pair.source, &out.join("source.png"))?;
    let truth = MatchSet::new(
        pair.truth.iter().map(|t| KeyPoint::at(t.0 .0, t.0 .1)).collect(),
        pair.truth.iter().map(|t| KeyPoint::at(t.1 .0, t.1 .1)).collect(),
        (0..pair.truth.len())
            .map(|i| Match {
                index_a: i,
                index_b: i,
                distance: 0.0,
            })
            .collect(),
    )?;
    write_matches(create(&out.join("truth.csv"))?, &truth, None)?;
    write_homography(&pair.h_true, &out.join("h_true.json"))?;
    let mut scene = serde_json::to_string_pretty(&params).map_err(Error::from)?;
    scene.push('\n');
    std::fs::write(out.join("scene.json"), scene).map_err(Error::from)?;
    Ok(())
}
