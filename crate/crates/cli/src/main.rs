mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cv_anyons::lattice::Lattice;
use cv_anyons::protocols;
use cv_anyons::verify::ExperimentReport;

use config::{canonical_protocol, diagnose, Config, Overrides, Severity};

const DEFAULT_OUTPUT_DIR: &str = "results";
const OUTPUT_DIR_ENV: &str = "ANYON_CV_OUTPUT_DIR";

/// Simulate and verify continuous-variable anyon experiments.
#[derive(Debug, Parser)]
#[command(name = "cv-anyons", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the protocol described by a config file; flags override its fields.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Run a built-in demo with default settings.
    Demo {
        name: DemoName,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the built-in lattice names.
    ListLattices,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DemoName {
    Ghz,
    NineMode,
    Detect,
}

impl DemoName {
    fn protocol(self) -> &'static str {
        match self {
            DemoName::Ghz => "ghz",
            DemoName::NineMode => "path-independence",
            DemoName::Detect => "detect",
        }
    }
}

enum Outcome {
    Passed,
    GateFailed,
}

fn print_report(report: &ExperimentReport) {
    println!("protocol: {}", report.protocol);
    for r in &report.records {
        match r.sampled_mean {
            Some(m) => println!(
                "  {:<32} mean {:>12.6} (sampled {:>10.6}, n={})  var {:.6}",
                r.label, r.analytic_mean, m, r.n_samples, r.analytic_variance
            ),
            None => println!("  {:<32} mean {:>12.6}  var {:.6}", r.label, r.analytic_mean, r.analytic_variance),
        }
    }
    if let Some(p) = report.ledger_phase {
        println!("ledger phase: {p:.9}");
    }
    if let Some(p) = report.braiding_phase {
        println!("braiding phase: {p:.9}");
    }
    if let Some(d) = &report.discrimination {
        println!("discrimination: error rate {:.4} at threshold {:.4} ({} test samples)", d.error_rate, d.threshold, d.n_test);
    }
    if !report.verdicts.is_empty() {
        let ok = report.verdicts.iter().filter(|v| v.pass).count();
        println!("inseparability: {ok}/{} bipartitions below the separable bound", report.verdicts.len());
    }
    if let Some(w) = report.metadata.get("warning") {
        println!("warning: {}", w.as_str().unwrap_or_default());
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn execute(cfg: Config, dump: bool) -> Result<Outcome> {
    if dump {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(Outcome::Passed);
    }
    let errors: Vec<String> = diagnose(&cfg)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message)
        .collect();
    if !errors.is_empty() {
        bail!(errors.join("; "));
    }
    let lat = cfg.resolve_lattice()?;
    let protocol = canonical_protocol(&cfg.protocol).unwrap_or("detect");
    let report = protocols::run_protocol(protocol, Some(&lat), &cfg.params())?;
    let dir = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    report.write_json(&dir.join(format!("{protocol}.json")))?;
    report.write_csv(&dir.join(format!("{protocol}.csv")))?;
    print_report(&report);
    println!("artifacts: {}", dir.display());
    Ok(if report.passed() { Outcome::Passed } else { Outcome::GateFailed })
}

fn validate(path: &Path) -> Result<bool> {
    let cfg = Config::load(path)?;
    let diags = diagnose(&cfg);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("{}: ok", path.display());
    }
    Ok(diags.iter().all(|d| d.severity != Severity::Error))
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = Config::load(&config)?;
            overrides.apply(&mut cfg);
            execute(cfg, overrides.dump_config)
        }
        Command::Demo { name, overrides } => {
            if let Some(p) = &overrides.protocol {
                if canonical_protocol(p) != Some(name.protocol()) {
                    bail!("--protocol {p} conflicts with demo {}", name.protocol());
                }
            }
            let mut cfg = Config { protocol: name.protocol().into(), ..Config::default() };
            overrides.apply(&mut cfg);
            execute(cfg, overrides.dump_config)
        }
        Command::Validate { config } => {
            if validate(&config)? {
                Ok(Outcome::Passed)
            } else {
                bail!("{} is invalid", config.display())
            }
        }
        Command::ListLattices => {
            for name in Lattice::builtin_names() {
                let lat = Lattice::from_name(name)?;
                println!("{name:<12} {} modes, {} stars, {} plaquettes", lat.n_edges(), lat.n_stars(), lat.n_plaquettes());
            }
            println!("planar-WxH   any width W and height H, e.g. planar-5x5");
            Ok(Outcome::Passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::GateFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
