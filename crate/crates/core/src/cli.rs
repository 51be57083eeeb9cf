//! The `pcrnet` command line tool.
//!
//! Exit codes: 0 success, 2 usage, configuration or missing input, 1 any
//! other failure. Data goes to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::evalkit::{
    make_test_pairs, run_benchmark, write_report, BenchmarkSettings, IcpMethod, IterativeMethod, PairSettings,
    Registrar, SingleShotMethod,
};
use crate::geometry::{rotation_error_deg, translation_error, RigidTransform};
use crate::icp::{icp_register, DEFAULT_ICP_EPS, DEFAULT_ICP_MAX_ITER};
use crate::meshio::{parse_off, read_cloud, sample_mesh, write_cloud, PointCloud, DEFAULT_OVERSAMPLE};
use crate::pcrnet::{register_iterative, register_single_shot, PcrNet, Variant, DEFAULT_EPS, DEFAULT_MAX_ITER};
use crate::trainer::{history_csv, load_model, prepare_templates, train, TrainConfig, TrainState};

/// Environment variable read when `--seed` is absent.
pub const SEED_ENV: &str = "PCR_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "pcrnet",
    version,
    about = "Point cloud registration: PCRNet, iterative PCRNet and ICP"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a normalized point cloud from an OFF mesh.
    Sample {
        #[arg(long)]
        off: PathBuf,
        #[arg(long, default_value_t = crate::meshio::DEFAULT_POINTS)]
        points: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_OVERSAMPLE)]
        oversample: usize,
        /// Output file; `.xyz`/`.txt` write ASCII, anything else binary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a directory of point clouds.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
        /// Overrides `threads` from the config.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Register one source cloud onto a template.
    Register {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Defaults to 20 for pcrnet-iter and 100 for icp.
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Text file with the 4×4 transform that produced the source from the template.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Compare methods on generated test pairs and write CSV reports.
    Benchmark {
        /// Comma-separated list of pcrnet, pcrnet-iter, icp.
        #[arg(long, value_delimiter = ',', value_enum, required = true)]
        methods: Vec<MethodArg>,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Single-shot checkpoint, needed for `pcrnet`.
        #[arg(long)]
        ckpt_single: Option<PathBuf>,
        /// Iterative checkpoint, needed for `pcrnet-iter`.
        #[arg(long)]
        ckpt_iter: Option<PathBuf>,
        /// Points per test cloud; larger template clouds are reduced.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 45.0)]
        angle: f64,
        #[arg(long, default_value_t = 1.0)]
        translation: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_ICP_MAX_ITER)]
        icp_max_iter: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Write every time as 0 so reports are byte-reproducible.
        #[arg(long)]
        no_timing: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pcrnet,
    #[value(name = "pcrnet-iter")]
    PcrnetIter,
    Icp,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parse `args` (program name first) and run. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    match command {
        Command::Sample {
            off,
            points,
            seed,
            oversample,
            out,
        } => cmd_sample(&off, points, resolve_seed(seed)?, oversample, &out, stderr),
        Command::Train {
            config,
            data,
            out,
            resume,
            threads,
        } => cmd_train(&config, &data, &out, resume, threads, stderr),
        Command::Register {
            method,
            ckpt,
            source,
            template,
            max_iter,
            eps,
            gt,
        } => cmd_register(
            method,
            ckpt.as_deref(),
            &source,
            &template,
            max_iter,
            eps,
            gt.as_deref(),
            stdout,
        ),
        Command::Benchmark {
            methods,
            templates,
            pairs,
            noise_sigma,
            seed,
            out,
            ckpt_single,
            ckpt_iter,
            points,
            angle,
            translation,
            max_iter,
            icp_max_iter,
            threads,
            no_timing,
        } => {
            let settings = PairSettings {
                count: pairs,
                angle_deg: angle,
                translation,
                noise_sigma,
                seed: resolve_seed(seed)?,
            };
            let nets = Checkpoints {
                single: ckpt_single,
                iter: ckpt_iter,
            };
            cmd_benchmark(
                &methods,
                &templates,
                points,
                &settings,
                &nets,
                max_iter,
                icp_max_iter,
                &BenchmarkSettings {
                    threads,
                    timing: !no_timing,
                },
                &out,
                stdout,
            )
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> CliResult<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} `{}` not found", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} `{}` is not a directory",
            path.display()
        )))
    }
}

/// Every non-hidden regular file in `dir`, read as a cloud, sorted by name.
pub fn load_cloud_dir(dir: &Path) -> CliResult<Vec<PointCloud>> {
    require_dir(dir, "cloud directory")?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no point clouds in `{}`", dir.display())));
    }
    Ok(paths.iter().map(|p| read_cloud(p)).collect::<Result<_, _>>()?)
}

fn cmd_sample(
    off: &Path,
    points: usize,
    seed: u64,
    oversample: usize,
    out: &Path,
    stderr: &mut dyn Write,
) -> CliResult {
    require_file(off, "mesh")?;
    if points == 0 {
        return Err(CliError::usage("--points must be at least 1"));
    }
    let mesh = parse_off(&std::fs::read(off)?)?;
    let cloud = sample_mesh(&mesh, points, oversample.max(1), &mut ChaCha8Rng::seed_from_u64(seed))?;
    write_cloud(out, &cloud)?;
    let _ = writeln!(stderr, "wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

fn cmd_train(
    config: &Path,
    data: &Path,
    out: &Path,
    resume: bool,
    threads: Option<usize>,
    stderr: &mut dyn Write,
) -> CliResult {
    require_file(config, "config")?;
    let mut cfg = TrainConfig::parse(&std::fs::read_to_string(config)?)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let templates = prepare_templates(load_cloud_dir(data)?, cfg.points)?;
    let state = if resume {
        require_dir(out, "checkpoint")?;
        TrainState::load(out, &cfg)?
    } else {
        TrainState::new(&cfg)?
    };
    let epochs = cfg.epochs;
    let mut log = |r: &crate::trainer::EpochRecord| {
        let _ = writeln!(
            stderr,
            "epoch {}/{} loss {:.6} lr {}",
            r.epoch, epochs, r.mean_loss, r.lr
        );
    };
    let state = train(state, &templates, &cfg, Some(out), &mut log)?;
    std::fs::write(out.join("history.csv"), history_csv(&state.history))?;
    Ok(())
}

fn load_net(path: Option<&Path>, variant: Variant, flag: &str) -> CliResult<PcrNet> {
    let path = path.ok_or_else(|| CliError::usage(format!("{flag} is required for the {variant} model")))?;
    require_dir(path, "checkpoint")?;
    let net = load_model(path)?;
    if net.config.variant != variant {
        return Err(CliError::usage(format!(
            "checkpoint `{}` holds a {} model, {variant} needed",
            path.display(),
            net.config.variant
        )));
    }
    Ok(net)
}

#[allow(clippy::too_many_arguments)]
fn cmd_register(
    method: MethodArg,
    ckpt: Option<&Path>,
    source: &Path,
    template: &Path,
    max_iter: Option<usize>,
    eps: f64,
    gt: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult {
    require_file(source, "source")?;
    require_file(template, "template")?;
    let gt = match gt {
        Some(p) => {
            require_file(p, "ground truth")?;
            Some(
                RigidTransform::parse_matrix_text(&std::fs::read_to_string(p)?)
                    .map_err(|e| CliError::usage(e.to_string()))?,
            )
        }
        None => None,
    };
    let net = match method {
        MethodArg::Pcrnet => Some(load_net(ckpt, Variant::SingleShot, "--ckpt")?),
        MethodArg::PcrnetIter => Some(load_net(ckpt, Variant::Iterative, "--ckpt")?),
        MethodArg::Icp => None,
    };
    let src = read_cloud(source)?;
    let tpl = read_cloud(template)?;
    let start = Instant::now();
    let result = match (method, &net) {
        (MethodArg::Pcrnet, Some(n)) => register_single_shot(n, &src, &tpl)?,
        (MethodArg::PcrnetIter, Some(n)) => {
            register_iterative(n, &src, &tpl, max_iter.unwrap_or(DEFAULT_MAX_ITER), eps)?
        }
        _ => icp_register(
            &src,
            &tpl,
            max_iter.unwrap_or(DEFAULT_ICP_MAX_ITER),
            if eps > 0.0 { eps } else { DEFAULT_ICP_EPS },
        )?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    write!(stdout, "{}", result.transform.to_matrix_text())?;
    writeln!(stdout, "iterations {}", result.iterations_used)?;
    writeln!(stdout, "converged {}", result.converged)?;
    if let Some(gt) = gt {
        let target = gt.inverse();
        writeln!(stdout, "rot_err_deg {}", rotation_error_deg(&result.transform, &target))?;
        writeln!(stdout, "trans_err {}", translation_error(&result.transform, &target))?;
    }
    writeln!(stdout, "time_ms {}", elapsed * 1e3)?;
    Ok(())
}

struct Checkpoints {
    single: Option<PathBuf>,
    iter: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark(
    methods: &[MethodArg],
    templates_dir: &Path,
    points: Option<usize>,
    pairs: &PairSettings,
    nets: &Checkpoints,
    max_iter: usize,
    icp_max_iter: usize,
    settings: &BenchmarkSettings,
    out: &Path,
    stdout: &mut dyn Write,
) -> CliResult {
    let mut templates = load_cloud_dir(templates_dir)?;
    if let Some(n) = points {
        templates = prepare_templates(templates, n)?;
    }
    let single = if methods.contains(&MethodArg::Pcrnet) {
        Some(load_net(nets.single.as_deref(), Variant::SingleShot, "--ckpt-single")?)
    } else {
        None
    };
    let iter = if methods.contains(&MethodArg::PcrnetIter) {
        Some(load_net(nets.iter.as_deref(), Variant::Iterative, "--ckpt-iter")?)
    } else {
        None
    };
    let mut registrars: Vec<Box<dyn Registrar + '_>> = Vec::new();
    for m in methods {
        registrars.push(match m {
            MethodArg::Pcrnet => Box::new(SingleShotMethod {
                net: single.as_ref().expect("loaded above"),
            }),
            MethodArg::PcrnetIter => Box::new(IterativeMethod {
                net: iter.as_ref().expect("loaded above"),
                max_iter,
                eps: DEFAULT_EPS,
            }),
            MethodArg::Icp => Box::new(IcpMethod {
                max_iter: icp_max_iter,
                eps: DEFAULT_ICP_EPS,
            }),
        });
    }
    let refs: Vec<&dyn Registrar> = registrars.iter().map(|b| b.as_ref()).collect();
    let test_pairs = make_test_pairs(&templates, pairs)?;
    let report = run_benchmark(&refs, &templates, &test_pairs, settings)?;
    write_report(out, &report)?;
    write!(stdout, "{}", crate::evalkit::summary_csv(&report.summaries))?;
    Ok(())
}
