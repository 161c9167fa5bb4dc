use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lbaft::estimators::{fit, time_ratio_table, FitOptions, Method};
use lbaft::io::{read_dataset, write_dataset, Dataset};
use lbaft::kernel::{residuals, KernelSpec};
use lbaft::laws::{CovariateLaw, Law};
use lbaft::sampling::{generate_cohort, ObservationScheme, Scenario};
use lbaft::score::{
    diagnose, orthogonality_check, Direction, EstimatedModel, OracleModel, WeightScheme,
};
use lbaft::study::{run_study, table_render, StudyConfig};
use lbaft::Error;

/// Semiparametric AFT estimation for length-biased and current-duration data.
#[derive(Parser)]
#[command(name = "lbaft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort from a scenario JSON file and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a dataset and print time ratios.
    Fit(FitArgs),
    /// Run a Monte Carlo study.
    Study(StudyArgs),
    /// Score diagnostics on a simulated cohort (oracle law) or a dataset
    /// (kernel-estimated law).
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// Fixed kernel bandwidth on the log-residual scale; default is the IQR rule.
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl KernelArgs {
    fn spec(&self) -> KernelSpec {
        match self.bandwidth {
            Some(h) => KernelSpec::with_bandwidth(h),
            None => KernelSpec::default(),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// naive, known-h or mean-zero.
    #[arg(long, default_value = "naive")]
    method: String,
    #[arg(long, default_value = "backward-recurrence")]
    scheme: String,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Covariate law JSON for the known-h method.
    #[arg(long)]
    covariate_law: Option<PathBuf>,
    /// Reference categories of indicator-coded covariates, listed with ratio 1.
    #[arg(long, num_args = 1..)]
    reference_levels: Vec<String>,
    /// Writes the estimate as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prints the estimate JSON instead of the time-ratio table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration; `table1` is the only preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Scenario JSON; the cohort is simulated and scored under its true law.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    config: Option<PathBuf>,
    /// Dataset CSV, scored under the kernel-estimated law at `--theta`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Coefficients to evaluate at; defaults to the scenario truth.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long, default_value = "backward-recurrence")]
    scheme: String,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Domain(_)
        | Error::InvalidLaw(_) => 2,
        _ => 3,
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Accepts a bare scenario or an object with a `scenario` field.
fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
    let inner = value.get("scenario").cloned().unwrap_or(value);
    let s: Scenario = serde_json::from_value(inner)?;
    s.validate()?;
    Ok(s)
}

fn load_dataset(path: &Path, scheme: &str) -> Result<Dataset, Error> {
    let scheme = ObservationScheme::parse(scheme)?;
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(BufReader::new(file), scheme)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Error> {
    let mut s = load_scenario(config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let data = Dataset::from_records(generate_cohort(&s)?);
    write_dataset(BufWriter::new(File::create(out)?), &data)
}

fn fit_cmd(args: &FitArgs) -> Result<u8, Error> {
    let method = Method::parse(&args.method)?;
    let data = load_dataset(&args.data, &args.scheme)?;
    let law = match &args.covariate_law {
        Some(path) => {
            let law: CovariateLaw = serde_json::from_str(&read_text(path)?)?;
            law.validate()?;
            Some(law)
        }
        None if method == Method::KnownH => {
            return Err(Error::Config("known-h needs --covariate-law".into()));
        }
        None => None,
    };
    let opts = FitOptions {
        kernel: args.kernel.spec(),
        level: args.level,
        ..FitOptions::default()
    };
    opts.kernel.validate()?;
    let est = fit(method, &data.records, law.as_ref(), &opts)?;
    if let Some(path) = &args.out {
        write_json(path, &est)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&est)?);
    } else {
        print!(
            "{}",
            time_ratio_table(&data.covariate_names, &est, &args.reference_levels)
        );
    }
    if !est.converged {
        eprintln!(
            "fit did not converge after {} evaluations (flags: {})",
            est.evaluations,
            est.flags.join(", ")
        );
        return Ok(3);
    }
    Ok(0)
}

fn study_cmd(args: &StudyArgs) -> Result<u8, Error> {
    let mut cfg = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => StudyConfig::from_json(&read_text(path)?)?,
        (None, Some("table1")) => StudyConfig::table1(),
        (None, Some(other)) => return Err(Error::Config(format!("unknown preset '{other}'"))),
        (None, None) => return Err(Error::Config("give --config or --preset".into())),
    };
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(level) = args.level {
        cfg.ci_level = level;
    }
    cfg.validate()?;
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results = pool.install(|| run_study(&cfg))?;
    let table = table_render(&results)?;
    print!("{}", table.text);
    if let Some(path) = &args.out {
        std::fs::write(path, &table.csv)?;
    }
    let unreliable = results.iter().filter(|r| r.unreliable).count();
    if unreliable > 0 {
        eprintln!("{unreliable} result rows had more than 5% failed replicates");
    }
    Ok(0)
}

fn default_directions(model: &OracleModel) -> Result<Vec<Direction>, Error> {
    let median = model.observed_law().quantile(0.5)?;
    Ok(vec![
        Direction::Error {
            name: "indicator u <= median".into(),
            b: Arc::new(move |u| f64::from(u8::from(u <= median))),
        },
        Direction::Error {
            name: "log u".into(),
            b: Arc::new(f64::ln),
        },
        Direction::Covariate {
            name: "z1".into(),
            k: Arc::new(|z| z[0]),
        },
        Direction::Covariate {
            name: "z1 squared".into(),
            k: Arc::new(|z| z[0] * z[0]),
        },
    ])
}

fn diagnose_cmd(args: &DiagnoseArgs) -> Result<u8, Error> {
    let report = if let Some(config) = &args.config {
        let mut s = load_scenario(config)?;
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        let theta = args.theta.clone().unwrap_or_else(|| s.theta0.clone());
        let records = generate_cohort(&s)?;
        let model = OracleModel::new(s.error_law.clone(), WeightScheme::for_scheme(s.scheme)?)?;
        let ortho = orthogonality_check(&records, &theta, &model, &default_directions(&model)?)?;
        diagnose(&records, &theta, &model, "oracle", ortho)?
    } else {
        let path = args
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("give --config or --data".into()))?;
        let theta = args
            .theta
            .clone()
            .ok_or_else(|| Error::Config("--data needs --theta".into()))?;
        let data = load_dataset(path, &args.scheme)?;
        let rs = residuals(&theta, &data.records)?;
        let spec = args.kernel.spec();
        let model = EstimatedModel::new(&rs, &spec)?;
        diagnose(&data.records, &theta, &model, "estimated", vec![])?
    };
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, out, seed } => simulate(config, out, *seed).map(|()| 0),
        Command::Fit(args) => fit_cmd(args),
        Command::Study(args) => study_cmd(args),
        Command::Diagnose(args) => diagnose_cmd(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Parse {
                row: 3,
                message: "x".into()
            }),
            2
        );
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 3);
        assert_eq!(exit_code(&Error::InsufficientData("x".into())), 3);
    }
}
