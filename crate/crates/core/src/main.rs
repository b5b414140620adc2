use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use bw_sign::config::{load_config, RunConfig};
use bw_sign::controversy::{coupling_scan, evaluate, solve_bw};
use bw_sign::identities::verify_identities;
use bw_sign::operators::ModelOperators;
use bw_sign::report::{scan_csv, FailureInfo, RunReport, ScanReport};
use bw_sign::scaling::geometric_schedule;
use bw_sign::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(name = "bw-sign", version, about = "Brillouin–Wigner sign-convention laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration (defaults apply when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Overrides interaction.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the operator identities at the no-pair energy
    Verify,
    /// Full pipeline: no-pair solve, BW energy, both sign conventions
    Compare,
    /// Coupling scan of the convention difference with a power-law fit
    Scan {
        #[arg(long, default_value_t = 0.02)]
        scan_from: f64,
        #[arg(long, default_value_t = 0.16)]
        scan_to: f64,
        #[arg(long, default_value_t = 4)]
        scan_points: usize,
        /// Also write the scan rows as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut run = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        run.model.seed = seed;
        run.validate()?;
    }
    Ok(run)
}

fn verify(run: &RunConfig, report: &mut RunReport) -> i32 {
    let t = Instant::now();
    let outcome = match verify_identities(run) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(FailureInfo::new("setup", &e));
            return e.exit_code();
        }
    };
    report.timings_ms.insert("identities".into(), elapsed_ms(t));
    report.identity_residuals = outcome.residuals.clone();
    if let Some(e) = &outcome.error {
        report.error = Some(FailureInfo::new("identities", e));
        return e.exit_code();
    }
    if outcome.passed() {
        0
    } else {
        1
    }
}

fn compare(run: &RunConfig, report: &mut RunReport) -> i32 {
    let fail = |report: &mut RunReport, stage: &str, e: Error| {
        report.error = Some(FailureInfo::new(stage, &e));
        e.exit_code()
    };
    let t = Instant::now();
    let ops = match ModelOperators::build(&run.model) {
        Ok(o) => o,
        Err(e) => return fail(report, "build", e),
    };
    report.timings_ms.insert("build".into(), elapsed_ms(t));
    let t = Instant::now();
    let (psi_c, ledger) = match solve_bw(&ops, &run.settings) {
        Ok(x) => x,
        Err(e) => return fail(report, "bw", e),
    };
    report.timings_ms.insert("bw".into(), elapsed_ms(t));
    report.ledger = Some(ledger.clone());
    let t = Instant::now();
    let c = match evaluate(&ops, &psi_c, &ledger, &run.settings.integration) {
        Ok(c) => c,
        Err(e) => return fail(report, "controversy", e),
    };
    report.timings_ms.insert("controversy".into(), elapsed_ms(t));
    report.identity_residuals = c.identity_residuals.iter().map(|(k, v)| (k.clone(), Some(*v))).collect();
    report.controversy = Some(c);
    0
}

fn scan(run: &RunConfig, report: &mut RunReport, from: f64, to: f64, points: usize, csv: Option<&PathBuf>) -> i32 {
    let fail = |report: &mut RunReport, e: Error| {
        report.error = Some(FailureInfo::new("scan", &e));
        e.exit_code()
    };
    if points < 4 {
        return fail(report, Error::Config("scan requires ≥ 4 points".into()));
    }
    let schedule = match geometric_schedule(from, to, points) {
        Ok(s) => s,
        Err(e) => return fail(report, e),
    };
    let t = Instant::now();
    let outcome = match coupling_scan(&run.model, &schedule, &run.settings) {
        Ok(o) => o,
        Err(e) => return fail(report, e),
    };
    report.timings_ms.insert("scan".into(), elapsed_ms(t));
    if let Some(path) = csv {
        if let Err(e) = std::fs::write(path, scan_csv(&outcome)) {
            return fail(report, e.into());
        }
    }
    let code = outcome.rows.iter().find_map(|r| r.error_code).unwrap_or(0);
    let complete = outcome.complete();
    report.scan = Some(ScanReport { outcome, complete });
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match load(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let name = match cli.command {
        Command::Verify => "verify",
        Command::Compare => "compare",
        Command::Scan { .. } => "scan",
    };
    let mut report = RunReport::new(name, &run);
    let code = match &cli.command {
        Command::Verify => verify(&run, &mut report),
        Command::Compare => compare(&run, &mut report),
        Command::Scan {
            scan_from,
            scan_to,
            scan_points,
            csv,
        } => scan(&run, &mut report, *scan_from, *scan_to, *scan_points, csv.as_ref()),
    };
    match cli.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Table => print!("{}", report.to_table()),
    }
    if let Some(err) = &report.error {
        eprintln!("error ({}): {}", err.stage, err.message);
    }
    ExitCode::from(code as u8)
}
