use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uvlc_core::config::ExperimentConfig;
use uvlc_core::eval::{generate_dataset, sweep, Dataset, Scheme, Split, SweepVariable};
use uvlc_core::io::{self, Checkpoint, Measurements};
use uvlc_core::lamp::{infer, train_layerwise};
use uvlc_core::sensing::{build_observation_matrix, mutual_incoherence, MeasurementProvenance, ObservationMatrix};
use uvlc_core::solvers::{amp, default_ridge, ls_estimate, omp};
use uvlc_core::Error;

type CliResult<T = ()> = std::result::Result<T, Box<dyn StdError>>;

#[derive(Parser, Debug)]
#[command(name = "uvlc", version, about = "Sparse distance-domain channel estimation for underwater optical links")]
struct Cli {
    /// Progress on standard error.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariableArg {
    Pilots,
    Paths,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset (JSON) or a measurement file (.csv).
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Sample count; the configured train or test size otherwise.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train SL-UVCE layer by layer.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Where the trained network is written.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-epoch training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        max_layers: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Estimate channels from measurements.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV or dataset JSON.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to sl-uvce when a checkpoint is given.
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// OMP atom budget.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run a pilot or path sweep and write the NMSE report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "pilots")]
        variable: VariableArg,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these schemes (repeatable).
        #[arg(long)]
        scheme: Vec<Scheme>,
        /// Comma-separated sweep values replacing the configured grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        /// Record wall time per scheme; reports are then not byte-reproducible.
        #[arg(long)]
        timing: bool,
    },
    /// Coherence and conditioning of the observation matrix.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Analyze this CSV matrix instead of the configured one.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Also write the configured matrix as CSV.
        #[arg(long)]
        export_matrix: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn matrix_for(p: &MeasurementProvenance) -> CliResult<ObservationMatrix> {
    Ok(build_observation_matrix(&p.pilots, &p.distances, &p.attenuation)?)
}

fn read_measurements(path: &Path) -> CliResult<Measurements> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        Ok(Measurements::from_dataset(&io::load_dataset(path)?))
    } else {
        Ok(io::load_measurements(path)?)
    }
}

fn note(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn cmd_gen(common: &Common, out: &Path, split: SplitArg, size: Option<usize>, verbose: bool) -> CliResult {
    let cfg = load_config(common)?;
    let (split, default_size) = match split {
        SplitArg::Train => (Split::Train, cfg.train.train_size),
        SplitArg::Test => (Split::Test, cfg.train.test_size),
    };
    let size = size.unwrap_or(default_size);
    let spec = cfg.setup()?.dataset_spec(cfg.seed);
    let data = generate_dataset(&spec, split, size)?;
    let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        io::save_measurements(out, &Measurements::from_dataset(&data))?;
    } else {
        io::save_dataset(out, &data)?;
    }
    note(verbose, format!("wrote {size} samples to {}", out.display()));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    common: &Common,
    train: &Path,
    test: &Path,
    checkpoint: &Path,
    log: Option<&Path>,
    max_layers: Option<usize>,
    epochs: Option<usize>,
    verbose: bool,
) -> CliResult {
    let cfg = load_config(common)?;
    let mut tc = cfg.train.clone();
    if let Some(seed) = common.seed {
        tc.seed = seed;
    }
    if let Some(m) = max_layers {
        tc.max_layers = m;
    }
    if let Some(e) = epochs {
        tc.epochs_per_layer = e;
    }
    let train_set: Dataset = io::load_dataset(train)?;
    let test_set: Dataset = io::load_dataset(test)?;
    train_set.provenance.ensure_same_distribution(&test_set.provenance)?;
    tc.train_size = train_set.len();
    tc.test_size = test_set.len();
    let phi = matrix_for(&train_set.provenance.measurement)?;
    let outcome = train_layerwise(&train_set, &test_set, &phi, &tc)?;
    for l in &outcome.layers {
        note(
            verbose,
            format!(
                "layer {}: initial {:.6e} trained {:.6e} test {:.6e}{}",
                l.layer,
                l.initial_loss,
                l.trained_loss,
                l.test_loss,
                if l.kept { "" } else { " (discarded)" }
            ),
        );
    }
    if let Some(log) = log {
        io::write_text(log, &io::training_log_to_csv(&outcome.log))?;
    }
    let depth = outcome.depth();
    io::save_checkpoint(
        checkpoint,
        &Checkpoint {
            params: outcome.params,
            train: tc,
            loss_history: outcome.loss_history,
        },
    )?;
    note(verbose, format!("stopped ({:?}) at depth {depth}", outcome.stop_reason));
    Ok(())
}

fn cmd_estimate(
    common: &Common,
    input: &Path,
    out: &Path,
    scheme: Option<Scheme>,
    checkpoint: Option<&Path>,
    k: Option<usize>,
    verbose: bool,
) -> CliResult {
    let cfg = load_config(common)?;
    let scheme = match (scheme, checkpoint) {
        (Some(s), _) => s,
        (None, Some(_)) => Scheme::SlUvce,
        (None, None) => return Err("estimate needs --scheme or --checkpoint".into()),
    };
    let m = read_measurements(input)?;
    let phi = matrix_for(&m.provenance)?;
    let a = phi.matrix();
    let s = &cfg.solvers;
    let estimates = match scheme {
        Scheme::SlUvce => {
            let path = checkpoint.ok_or("scheme sl-uvce needs --checkpoint")?;
            let ckpt = io::load_checkpoint(path)?;
            m.samples
                .iter()
                .map(|y| infer(y, &phi, &ckpt.params).map(|x| x.into_vector()))
                .collect::<Result<Vec<_>, Error>>()?
        }
        Scheme::Ls => {
            let ridge = s.ridge.unwrap_or_else(|| default_ridge(a));
            m.samples
                .iter()
                .map(|y| ls_estimate(y, a, ridge).map(|r| r.estimate))
                .collect::<Result<Vec<_>, Error>>()?
        }
        Scheme::Omp => {
            let atoms = k.or(s.omp_atoms).unwrap_or(cfg.channel.paths);
            m.samples
                .iter()
                .map(|y| omp(y, a, atoms, s.omp_tol).map(|r| r.estimate))
                .collect::<Result<Vec<_>, Error>>()?
        }
        Scheme::Amp => m
            .samples
            .iter()
            .map(|y| amp(y, a, s.amp_iterations, s.amp_zeta).map(|o| o.result.estimate))
            .collect::<Result<Vec<_>, Error>>()?,
    };
    let csv = io::estimates_to_csv(scheme.name(), &m.provenance, &estimates, s.path_threshold);
    io::write_text(out, &csv)?;
    note(verbose, format!("{scheme}: {} estimates written to {}", estimates.len(), out.display()));
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    variable: VariableArg,
    out: &Path,
    schemes: &[Scheme],
    values: &[usize],
    timing: bool,
    verbose: bool,
) -> CliResult {
    let mut cfg = load_config(common)?;
    let variable = match variable {
        VariableArg::Pilots => SweepVariable::Pilots,
        VariableArg::Paths => SweepVariable::Paths,
    };
    if !schemes.is_empty() {
        cfg.sweep.schemes = schemes.to_vec();
    }
    if !values.is_empty() {
        match variable {
            SweepVariable::Pilots => cfg.sweep.pilot_values = values.to_vec(),
            SweepVariable::Paths => cfg.sweep.path_values = values.to_vec(),
        }
    }
    cfg.sweep.timing = timing;
    let report = sweep(&cfg, variable)?;
    io::save_report(out, &report)?;
    for r in &report.rows {
        note(verbose, format!("{} {}={} nmse={:.6e}", r.scheme, variable.name(), r.value, r.nmse));
    }
    Ok(())
}

fn cmd_diagnose(common: &Common, matrix: Option<&Path>, export: Option<&Path>) -> CliResult {
    let (a, source) = match matrix {
        Some(p) => (io::load_matrix_csv(p)?, p.display().to_string()),
        None => {
            let cfg = load_config(common)?;
            let phi = matrix_for(&cfg.setup()?.measurement)?;
            if let Some(e) = export {
                io::write_text(e, &io::matrix_to_csv(&phi))?;
            }
            (phi.matrix().clone(), "config".to_string())
        }
    };
    if matrix.is_some() && export.is_some() {
        return Err("--export-matrix only applies to the configured matrix".into());
    }
    let mu = mutual_incoherence(&a)?;
    let sv = a.singular_values();
    let s_max = sv.max();
    let s_min = sv.min();
    let tol = s_max * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let rank = sv.iter().filter(|s| **s > tol).count();
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };

    println!("observation matrix from {source}: {} x {}", a.nrows(), a.ncols());
    println!("mutual incoherence {mu:.6}, numerical rank {rank} of {}", a.nrows().min(a.ncols()));
    println!("singular values in [{s_min:.3e}, {s_max:.3e}], condition number {cond:.3e}");
    println!("rows={}", a.nrows());
    println!("cols={}", a.ncols());
    println!("mu={mu:e}");
    println!("rank={rank}");
    println!("sigma_max={s_max:e}");
    println!("sigma_min={s_min:e}");
    println!("cond={cond:e}");
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let v = cli.verbose;
    match &cli.command {
        Command::Gen {
            common,
            out,
            split,
            size,
        } => cmd_gen(common, out, *split, *size, v),
        Command::Train {
            common,
            train,
            test,
            checkpoint,
            log,
            max_layers,
            epochs,
        } => cmd_train(common, train, test, checkpoint, log.as_deref(), *max_layers, *epochs, v),
        Command::Estimate {
            common,
            input,
            out,
            scheme,
            checkpoint,
            k,
        } => cmd_estimate(common, input, out, *scheme, checkpoint.as_deref(), *k, v),
        Command::Sweep {
            common,
            variable,
            out,
            scheme,
            values,
            timing,
        } => cmd_sweep(common, *variable, out, scheme, values, *timing, v),
        Command::Diagnose {
            common,
            matrix,
            export_matrix,
        } => cmd_diagnose(common, matrix.as_deref(), export_matrix.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
