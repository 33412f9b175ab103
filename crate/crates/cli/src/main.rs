use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cgc_core::cgc::{cgc_masked, CgcConfig, ResolutionPoint};
use cgc_core::info::nmi;
use cgc_core::io::{load_tensor, read_labels, save_tensor, write_labels, TensorFile};
use cgc_core::pipeline::{run_pipeline, LevelRange, RunConfig};
use cgc_core::report::report;
use cgc_core::synth::{generate, SynthSpec, DEFAULT_SEASONAL_PERIOD};
use cgc_core::wavelet::WaveletFamily;

/// Coarse-grain clustering of gridded tensors across wavelet scales.
#[derive(Parser, Debug)]
#[command(name = "cgc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic tensor with known biome regions.
    Generate(GenerateArgs),
    /// Cluster at a single resolution point.
    Cgc(CgcArgs),
    /// Full lattice sweep with MIER and adjacent-scale statistics.
    Sweep(SweepArgs),
    /// Compare two label CSVs.
    Nmi { a: PathBuf, b: PathBuf },
    /// Recompute the statistics tables of a sweep directory.
    Report { dir: PathBuf },
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// lat,lon,time,variable
    #[arg(long, value_parser = parse_dims, default_value = "64,64,96,3")]
    dims: [usize; 4],
    #[arg(long, default_value_t = 6)]
    biomes: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEASONAL_PERIOD)]
    period: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the ground-truth labels as CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

/// Options shared by `cgc` and `sweep`; flags override the config file.
#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    /// Spatial levels, `a..b` inclusive or a single level.
    #[arg(long)]
    levels_spatial: Option<LevelRange>,
    /// Temporal levels, `a..b` inclusive or a single level.
    #[arg(long)]
    levels_temporal: Option<LevelRange>,
    /// Families for lat,lon,time, e.g. `haar,haar,db2`.
    #[arg(long, value_parser = parse_wavelets)]
    wavelets: Option<[WaveletFamily; 3]>,
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct CgcArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Label CSV to write; defaults to `labels_{l1}_{l2}_{l3}.csv`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Inclusive K range `a..b`.
    #[arg(long, conflicts_with = "k")]
    k_range: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Fix the number of MIER components.
    #[arg(long)]
    mier_k: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad dimension {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected 4 comma-separated dimensions".to_string())
}

fn parse_wavelets(s: &str) -> std::result::Result<[WaveletFamily; 3], String> {
    let v: Vec<WaveletFamily> = s
        .split(',')
        .map(|t| WaveletFamily::parse(t.trim()).map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected 3 comma-separated wavelet families".to_string())
}

fn parse_k_range(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once("..").context("k range must look like a..b")?;
    let a: usize = a.trim().parse().context("bad k range start")?;
    let b: usize = b
        .trim()
        .trim_start_matches('=')
        .parse()
        .context("bad k range end")?;
    if a > b {
        bail!("empty k range {s}");
    }
    Ok([a, b])
}

/// Config file (if any) with command-line overrides applied.
fn resolve(common: &Common, input: Option<&Path>, output: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let input = input.context("no input tensor given (argument or --config)")?;
            RunConfig::new(input, output.unwrap_or(Path::new("sweep")))
        }
    };
    if let Some(input) = input {
        cfg.input = input.to_path_buf();
    }
    if let Some(output) = output {
        cfg.output = output.to_path_buf();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = common.k {
        cfg.k = Some(k);
        cfg.k_range = None;
    }
    if let Some(r) = common.levels_spatial {
        cfg.levels_spatial = r;
    }
    if let Some(r) = common.levels_temporal {
        cfg.levels_temporal = r;
    }
    if let Some(w) = common.wavelets {
        cfg.wavelets = w;
    }
    if common.no_standardize {
        cfg.standardize = false;
    }
    Ok(cfg)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec = SynthSpec {
        seasonal_period: args.period,
        ..SynthSpec::new(args.dims, args.biomes, args.seed, args.noise)
    };
    let (tensor, truth) = generate(&spec)?;
    save_tensor(&args.output, &TensorFile::new(tensor, None)?)?;
    if let Some(path) = &args.truth {
        write_labels(path, &truth)?;
    }
    println!("wrote {} ({:?})", args.output.display(), args.dims);
    Ok(())
}

fn cmd_cgc(args: CgcArgs) -> Result<()> {
    let cfg = resolve(&args.common, args.input.as_deref(), None)?;
    let ks = cfg.ks()?;
    let [k] = ks[..] else {
        bail!("cgc takes a single k, got {ks:?}");
    };
    let (s, t) = (cfg.levels_spatial, cfg.levels_temporal);
    if s.start != s.end || t.start != t.end {
        bail!("cgc runs one resolution point; use single levels, not ranges");
    }
    let res = ResolutionPoint::new(s.start, s.start, t.start);
    let file = load_tensor(&cfg.input)?;
    let cgc_cfg = CgcConfig {
        variables: cfg.variables.clone(),
        families: cfg.wavelets,
        k,
        seed: cfg.seed,
        max_iter: cfg.max_iter,
        standardize: cfg.standardize,
    };
    let out = cgc_masked(&file.tensor, file.mask.as_deref(), res, &cgc_cfg)?;
    let path = args
        .output
        .unwrap_or_else(|| PathBuf::from(format!("labels_{}.csv", res.tag())));
    write_labels(&path, &out.grid)?;
    println!(
        "{res}: coarse {:?}, matrix {}x{}, k={} -> {}",
        out.coarse_dims,
        out.matrix_shape.0,
        out.matrix_shape.1,
        out.clustering.k(),
        path.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = resolve(&args.common, args.input.as_deref(), args.output.as_deref())?;
    if let Some(r) = &args.k_range {
        cfg.k_range = Some(parse_k_range(r)?);
        cfg.k = None;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = args.mier_k {
        cfg.mier_k = Some(m);
    }
    let summary = run_pipeline(&cfg)?;
    println!(
        "{} resolution points x {} k values on {} threads, {} failed",
        summary.points,
        summary.runs.len(),
        summary.threads,
        summary.failed()
    );
    for run in &summary.runs {
        if let Some(m) = &run.mier {
            let reps: Vec<String> = m
                .reduced
                .representatives
                .iter()
                .map(|r| r.resolution.to_string())
                .collect();
            println!(
                "k={}: {} components, representatives {}",
                run.k,
                m.cut.k,
                reps.join(" ")
            );
        }
    }
    println!("artifacts in {}", cfg.output.display());
    Ok(())
}

fn cmd_nmi(a: &Path, b: &Path) -> Result<()> {
    let (ga, gb) = (read_labels(a)?, read_labels(b)?);
    if ga.valid_mask() != gb.valid_mask() {
        bail!("label files cover different cells");
    }
    println!("{:.6}", nmi(&ga.to_clustering()?, &gb.to_clustering()?)?);
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let stats = report(dir)?;
    for row in &stats.bins {
        println!(
            "{:<14} min {:.4}  avg {:.4}  max {:.4}",
            row.pair, row.min, row.avg, row.max
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Cgc(a) => cmd_cgc(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Nmi { a, b } => cmd_nmi(&a, &b),
        Command::Report { dir } => cmd_report(&dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
