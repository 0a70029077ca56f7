use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynamic_nem::axioms::audit;
use dynamic_nem::pricing::{community_price_with_tol, compute_thresholds, default_tolerance};
use dynamic_nem::sim::report::{write_monthly_csv, write_outcomes_csv, write_rpf_csv, ScenarioSummary};
use dynamic_nem::sim::{
    calibrate_utilities, compute_gains, generate_synthetic_scenario, load_timeseries_file, rpf_series, run_scenario,
    write_timeseries, NettingPeriod, SimConfig, SynthConfig,
};
use dynamic_nem::welfare::{benchmark_outcomes, decentralized_outcome_with_tol};
use dynamic_nem::{Community, MemberOutcome, NemTariff, Outcome};

/// Dynamic NEM pricing for energy communities.
#[derive(Parser)]
#[command(name = "dnem", version)]
struct Cli {
    /// Solver tolerance (kWh) for price/solve; audit tolerance for audit.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for synth; recorded in simulate summaries.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print results and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Community JSON.
    #[arg(long)]
    community: PathBuf,
    /// Tariff JSON.
    #[arg(long)]
    tariff: PathBuf,
}

impl Inputs {
    fn load(&self) -> Result<(Community, NemTariff)> {
        let community = Community::from_json_file(&self.community)
            .with_context(|| format!("reading {}", self.community.display()))?;
        let tariff =
            NemTariff::from_json_file(&self.tariff).with_context(|| format!("reading {}", self.tariff.display()))?;
        Ok((community, tariff))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the thresholds {d_plus, d_minus}.
    Thresholds(Inputs),
    /// Print the announced price {zone, rate, fixed_share}.
    Price {
        #[command(flatten)]
        inputs: Inputs,
        /// Aggregate generation, kWh.
        #[arg(long, allow_negative_numbers = true)]
        generation: f64,
    },
    /// Solve the community and its benchmark; write outcome and benchmark JSON.
    Solve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
    },
    /// Audit an outcome against the six axioms; exit 1 if any fails.
    Audit {
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
    },
    /// Run a time series through the community and the benchmark.
    Simulate {
        /// Interval CSV.
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Netting period, e.g. 15m or 1h; defaults to the config value.
        #[arg(long)]
        netting: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic interval CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        members: usize,
        #[arg(long, default_value_t = 19)]
        adopters: usize,
        #[arg(long, default_value_t = 12)]
        months: u32,
        /// First day, YYYY-MM-DD.
        #[arg(long, default_value = "2018-01-01")]
        start: chrono::NaiveDate,
        /// Minutes per record.
        #[arg(long, default_value_t = 15)]
        resolution: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Thresholds(inputs) => {
            let (c, t) = inputs.load()?;
            print_json(&compute_thresholds(&c, &t))?;
        }
        Command::Price { inputs, generation } => {
            let (c, t) = inputs.load()?;
            let tol = cli.tol.unwrap_or_else(|| default_tolerance(&c));
            print_json(&community_price_with_tol(&c, *generation, &t, tol)?)?;
        }
        Command::Solve {
            inputs,
            outcome,
            benchmark,
        } => {
            let (c, t) = inputs.load()?;
            let tol = cli.tol.unwrap_or_else(|| default_tolerance(&c));
            let o = decentralized_outcome_with_tol(&c, c.generation(), &t, tol)?;
            let b = benchmark_outcomes(&c, &t)?;
            write_json(outcome, &o)?;
            write_json(benchmark, &b)?;
            if !cli.quiet {
                println!("zone={} rate={} welfare={}", o.price.zone, o.price.rate, o.welfare);
            }
        }
        Command::Audit { outcome, benchmark } => return cmd_audit(cli, outcome, benchmark),
        Command::Simulate {
            data,
            config,
            netting,
            out,
        } => return cmd_simulate(cli, data, config, netting.as_deref(), out),
        Command::Synth {
            out,
            members,
            adopters,
            months,
            start,
            resolution,
        } => {
            let config = SynthConfig {
                members: *members,
                adopters: *adopters,
                start: *start,
                months: *months,
                resolution_minutes: *resolution,
            };
            let records = generate_synthetic_scenario(&config, cli.seed.unwrap_or(0))?;
            let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
            write_timeseries(&records, std::io::BufWriter::new(file))?;
            if !cli.quiet {
                println!("wrote {} records for {} members to {}", records.len(), members, out.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(cli: &Cli, outcome: &Path, benchmark: &Path) -> Result<ExitCode> {
    require_file(outcome)?;
    require_file(benchmark)?;
    let o: Outcome = read_json(outcome)?;
    let b: Vec<MemberOutcome> = read_json(benchmark)?;
    if o.members.is_empty() {
        log::warn!("outcome has no members; every axiom holds vacuously");
    }
    let tol = cli.tol.unwrap_or(1e-9);
    let verdict = audit(&o, &b, tol)?;
    print_json(&verdict)?;
    Ok(if verdict.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_simulate(cli: &Cli, data: &Path, config_path: &Path, netting: Option<&str>, out: &Path) -> Result<ExitCode> {
    require_file(data)?;
    require_file(config_path)?;
    let (config, base) = SimConfig::from_json_file(config_path)?;
    let netting = match netting {
        Some(s) => NettingPeriod::parse(s)?,
        None => config.netting()?,
    };
    let schedule = config.schedule(&base)?;
    let seed = cli.seed.unwrap_or(config.seed);

    let series = load_timeseries_file(data)?;
    if series.records.is_empty() {
        bail!("{}: no interval records", data.display());
    }
    let resolution = series.resolution_minutes.unwrap_or(netting.minutes);
    let members = calibrate_utilities(&series.records, &schedule, &config.calibration)?;
    let run = run_scenario(&series.records, &schedule, netting, resolution, &members)?;
    let summary = ScenarioSummary::new(&run, compute_gains(&run), netting, config.calibration, seed);

    let created_dir = !out.exists();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        let mut create = |name: &str| -> Result<std::io::BufWriter<fs::File>> {
            let path = out.join(name);
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            written.push(path);
            Ok(std::io::BufWriter::new(file))
        };
        write_monthly_csv(&summary.monthly, create("monthly.csv")?)?;
        write_rpf_csv(&rpf_series(&run), create("rpf.csv")?)?;
        write_outcomes_csv(&run, create("outcomes.csv")?)?;
        let mut f = create("summary.json")?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    })();
    if let Err(e) = result {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        if created_dir {
            let _ = fs::remove_dir(out);
        }
        return Err(e);
    }

    println!("{}", summary.digest());
    if !summary.all_audits_passed() {
        eprintln!("{} interval audits failed", summary.audits_failed);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
