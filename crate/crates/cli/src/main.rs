use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mixts::features::FeatureTable;
use mixts::harness::{self, ExperimentConfig, Setting};
use mixts::prior_fit::{self, PriorFitConfig};
use mixts::{Error, Result, RngStream};

#[derive(Parser)]
#[command(name = "mixts", version, about = "Thompson sampling with mixture priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a linear-bandit experiment and write per-round regret as CSV.
    RunLinear(RunArgs),
    /// Run a tabular MDP experiment and write per-episode regret as CSV.
    RunMdp(RunArgs),
    /// Fit a mixture prior from a labelled feature file.
    FitPrior(FitArgs),
    /// Evaluate the regret bound at each sweep point of a config.
    Bound(BoundArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Rounds or episodes.
    #[arg(long)]
    n: Option<usize>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write mean and standard error of cumulative regret here.
    #[arg(long)]
    aggregate: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Feature CSV with header `class,f0,f1,...`.
    #[arg(long)]
    features: PathBuf,
    /// Number of mixture components.
    #[arg(long = "L", value_name = "L")]
    num_latent: usize,
    /// Prior file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the single-Gaussian fit here.
    #[arg(long)]
    unimodal_out: Option<PathBuf>,
    /// Fitting options (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Overrides,
    /// Add the lower-order terms of the linear bound.
    #[arg(long)]
    full_constants: bool,
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&o.config)?;
    if let Some(n) = o.n {
        cfg.n = n;
    }
    if let Some(r) = o.reps {
        cfg.replications = r;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(out) = &o.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn finish(mut w: Box<dyn Write>, path: Option<&Path>) -> Result<()> {
    w.flush().map_err(|e| io_err(path.unwrap_or(Path::new("<stdout>")), e))
}

fn run(args: &RunArgs, setting: Setting) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if cfg.setting != setting {
        return Err(Error::Config(format!(
            "config is for the {:?} setting; use the matching subcommand",
            cfg.setting
        )));
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    info!("running {} replications x {} sweep points", cfg.replications, cfg.sweep_values().len());
    let records = harness::run_experiment(&cfg)?;
    let out = cfg.output.as_deref();
    let mut w = open_output(out)?;
    let columns = cfg.diagnostics.then(|| cfg.max_latent());
    harness::write_csv(&records, columns, &mut w).map_err(|e| io_err(out.unwrap_or(Path::new("<stdout>")), e))?;
    finish(w, out)?;
    if let Some(path) = &args.aggregate {
        let mut w = open_output(Some(path))?;
        harness::write_aggregate_csv(&harness::aggregate(&records), &mut w).map_err(|e| io_err(path, e))?;
        finish(w, Some(path))?;
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => PriorFitConfig::load(p)?,
        None => PriorFitConfig::default(),
    };
    if args.num_latent == 0 {
        return Err(Error::Config("--L must be at least 1".into()));
    }
    let table = FeatureTable::load(&args.features)?;
    let mut rng = RngStream::for_path(args.seed, &[0]);
    let thetas = prior_fit::fitted_parameters(&table, &cfg, &mut rng)?;
    let fit = prior_fit::fit_gmm(&thetas, args.num_latent, &cfg.gmm, &mut rng)?;
    info!("EM finished after {} iterations, log-likelihood {:.6}", fit.iterations, fit.log_likelihood);
    prior_fit::save_prior(&prior_fit::build_mixture_prior(&fit, cfg.noise_sd)?, &args.out)?;
    if let Some(path) = &args.unimodal_out {
        let single = prior_fit::fit_gmm(&thetas, 1, &cfg.gmm, &mut rng)?;
        prior_fit::save_prior(&prior_fit::build_mixture_prior(&single, cfg.noise_sd)?, path)?;
    }
    Ok(())
}

fn bound(args: &BoundArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let rows = harness::bound_rows(&cfg, args.full_constants)?;
    let out = cfg.output.as_deref();
    let mut w = open_output(out)?;
    let write = |w: &mut Box<dyn Write>| -> std::io::Result<()> {
        w.write_all(b"sweep,bound\n")?;
        for (v, b) in &rows {
            writeln!(w, "{},{}", harness::format_decimal(*v), harness::format_decimal(*b))?;
        }
        Ok(())
    };
    write(&mut w).map_err(|e| io_err(out.unwrap_or(Path::new("<stdout>")), e))?;
    finish(w, out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunLinear(a) => run(a, Setting::Linear),
        Command::RunMdp(a) => run(a, Setting::Mdp),
        Command::FitPrior(a) => fit(a),
        Command::Bound(a) => bound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
