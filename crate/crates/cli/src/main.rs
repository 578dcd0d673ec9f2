//! `hca` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hca_core::cca::CcaParams;
use hca_core::eval::{pr_curve, GroundTruth};
use hca_core::features::FeatureRegistry;
use hca_core::imaging::{load_gray_png, load_image, write_gray_png};
use hca_core::pipeline::{sca_scales, BoundaryPrior, DEFAULT_SCALES};
use hca_core::sca::ScaParams;
use hca_core::slic::DEFAULT_COMPACTNESS;
use hca_core::{fuse_maps, optimize_maps, HcaError, PipelineConfig};

mod selftest;

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hca", version, about = "Salient object detection with hierarchical cellular automata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a saliency map from scratch (multi-scale SCA fused by CCA).
    Run {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Write per-scale superpixel labels, SCA maps and per-step states here.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Refine one or more external saliency maps with SCA, then fuse with CCA.
    Optimize {
        image: PathBuf,
        #[arg(required = true)]
        priors: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Fuse two or more saliency maps with CCA.
    Fuse {
        #[arg(required = true)]
        maps: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cca: CcaArgs,
    },
    /// Score a saliency map against a ground-truth mask.
    Eval {
        map: PathBuf,
        gt: PathBuf,
        /// Write the precision/recall/F curves as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_lambda: f64,
    },
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Feature layers as `source[:weight],...`; sources are `lab` or `.hcaf` files.
    #[arg(long, default_value = "lab")]
    features: String,
    /// Superpixel counts, one SCA layer each.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SCALES)]
    scales: Vec<usize>,
    /// SCA iterations.
    #[arg(long, default_value_t = ScaParams::default().iterations)]
    ts: usize,
    /// Feature similarity bandwidth sigma_f^2.
    #[arg(long, default_value_t = ScaParams::default().sigma_f2)]
    sigma2: f64,
    /// SLIC compactness.
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    compactness: f64,
    #[command(flatten)]
    cca: CcaArgs,
}

#[derive(Args, Debug)]
struct CcaArgs {
    /// CCA iterations.
    #[arg(long, default_value_t = CcaParams::default().iterations)]
    tc: usize,
    /// Log-odds increment per neighbour.
    #[arg(long, default_value_t = CcaParams::default().lambda)]
    lambda: f64,
}

impl CcaArgs {
    fn params(&self) -> CcaParams {
        CcaParams { lambda: self.lambda, iterations: self.tc, ..CcaParams::default() }
    }
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, HcaError> {
        let registry = FeatureRegistry::with_builtins();
        let cfg = PipelineConfig {
            scales: self.scales.clone(),
            sca: ScaParams { sigma_f2: self.sigma2, iterations: self.ts, ..ScaParams::default() },
            cca: self.cca.params(),
            compactness: self.compactness,
            features: registry.parse_spec(&self.features)?,
            trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn echo_config(cfg: &PipelineConfig) {
    eprintln!(
        "hca: scales={:?} ts={} sigma2={} a={} b={} tc={} lambda={} eps={} compactness={} features={}",
        cfg.scales,
        cfg.sca.iterations,
        cfg.sca.sigma_f2,
        cfg.sca.a,
        cfg.sca.b,
        cfg.cca.iterations,
        cfg.cca.lambda,
        cfg.cca.epsilon,
        cfg.compactness,
        cfg.features,
    );
}

enum Failure {
    Config(String),
    Io(String),
    Selftest(String),
}

impl From<HcaError> for Failure {
    fn from(e: HcaError) -> Self {
        match e {
            HcaError::Io { .. } | HcaError::Decode { .. } | HcaError::Format(_) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn run_debug(image: &Path, cfg: &mut PipelineConfig, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let img = load_image(image)?;
    cfg.trace = true;
    for scale in sca_scales(&img, cfg, &BoundaryPrior)? {
        let n = scale.n_target;
        scale.segmentation.write_label_png(dir.join(format!("labels_{n}.png")))?;
        write_gray_png(&scale.map, dir.join(format!("sca_{n}.png")))?;
        for (t, state) in scale.trace.iter().enumerate() {
            let (w, h) = scale.segmentation.dims();
            let map = hca_core::SaliencyMap::new(w, h, scale.segmentation.project(state))?;
            write_gray_png(&map, dir.join(format!("sca_{n}_t{:02}.png", t + 1)))?;
        }
    }
    cfg.trace = false;
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { image, out, pipeline, debug_dir } => {
            let mut cfg = pipeline.config()?;
            echo_config(&cfg);
            if let Some(dir) = debug_dir {
                run_debug(&image, &mut cfg, &dir)?;
            }
            let img = load_image(&image)?;
            let map = hca_core::run_hca(&img, &cfg)?;
            write_gray_png(&map, &out)?;
        }
        Command::Optimize { image, priors, out, pipeline } => {
            let cfg = pipeline.config()?;
            echo_config(&cfg);
            let img = load_image(&image)?;
            let priors = priors.iter().map(load_gray_png).collect::<Result<Vec<_>, _>>()?;
            let map = optimize_maps(&img, &priors, &cfg)?;
            write_gray_png(&map, &out)?;
        }
        Command::Fuse { maps, out, cca } => {
            let cfg = PipelineConfig { cca: cca.params(), ..PipelineConfig::default() };
            cfg.cca.validate()?;
            eprintln!("hca: tc={} lambda={} eps={}", cfg.cca.iterations, cfg.cca.lambda, cfg.cca.epsilon);
            if maps.len() < 2 {
                return Err(Failure::Config(format!("fuse needs at least 2 maps, got {}", maps.len())));
            }
            let maps = maps.iter().map(load_gray_png).collect::<Result<Vec<_>, _>>()?;
            let fused = fuse_maps(&maps, &cfg)?;
            write_gray_png(&fused, &out)?;
        }
        Command::Eval { map, gt, out } => {
            let map = load_gray_png(&map)?;
            let gt = GroundTruth::from_map(&load_gray_png(&gt)?);
            let curves = pr_curve(&map, &gt)?;
            if let Some(path) = out {
                curves.write_csv(path)?;
            }
            println!("{}", curves.summary());
        }
        Command::Selftest { perturb_lambda } => {
            let report = selftest::run(perturb_lambda).map_err(Failure::Selftest)?;
            for line in report {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(raw) = std::env::var("HCA_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Config(format!("HCA_THREADS must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("hca: error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("hca: i/o error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Selftest(msg)) => {
            eprintln!("hca: selftest failed: {msg}");
            ExitCode::from(EXIT_SELFTEST)
        }
    }
}
