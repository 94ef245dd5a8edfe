//! Command-line front end: maps verbs onto harness operations, writes the
//! JSON report (and any CSV series) to the output directory, and exits
//! nonzero when any check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use pshlab::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pshlab", version, about = "Plurisubharmonic approximation and exhaustion lab")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Flat JSON config with dotted keys; CLI flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every sampling routine.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the report and CSV series.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report format for the per-check summary on stdout.
    #[arg(long, global = true, default_value = "json", value_parser = ["json", "csv"])]
    format: String,
}

#[derive(Args)]
struct DomainArgs {
    /// Catalog domain name.
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Domain atlas checks.
    Domain {
        #[command(subcommand)]
        action: DomainVerb,
    },
    /// Special-function tables.
    SpecialFn {
        #[command(subcommand)]
        action: SpecialVerb,
    },
    /// Plurisubharmonic approximant construction and verification.
    Approx {
        #[command(subcommand)]
        action: ApproxVerb,
    },
    /// Bounded exhaustion construction and its quantitative checks.
    Exhaustion {
        #[command(subcommand)]
        action: ExhaustionVerb,
    },
    /// Plot-data emission.
    Figures {
        /// One of cusp_fig1, exhaustion_profile, error_vs_nu.
        which: String,
    },
    /// The full acceptance suite.
    Acceptance,
}

#[derive(Subcommand)]
enum DomainVerb {
    Verify(DomainArgs),
    SegmentCheck(DomainArgs),
    TranslationCheck(DomainArgs),
}

#[derive(Subcommand)]
enum SpecialVerb {
    Table,
}

#[derive(Subcommand)]
enum ApproxVerb {
    Build(ApproxArgs),
    Check(ApproxArgs),
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    domain: Option<String>,
    /// Test field label: constant, re_z1, norm_sq.
    #[arg(long)]
    field: Option<String>,
    /// Translation size nu.
    #[arg(long)]
    nu: Option<f64>,
}

#[derive(Args)]
struct ExhaustionArgs {
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    grid_floor: Option<f64>,
}

#[derive(Subcommand)]
enum ExhaustionVerb {
    Build(ExhaustionArgs),
    Eval {
        #[command(flatten)]
        common: ExhaustionArgs,
        /// CSV of points, one comma-separated coordinate row per line.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    CheckBounds(ExhaustionArgs),
    CheckLevi {
        #[command(flatten)]
        common: ExhaustionArgs,
        /// Finite-difference step.
        #[arg(long)]
        h: Option<f64>,
    },
    Trace {
        #[command(flatten)]
        common: ExhaustionArgs,
        /// Comma-separated coordinates of the trace point.
        #[arg(long)]
        point: Option<String>,
    },
}

fn apply_domain(cfg: &mut ExperimentConfig, d: &DomainArgs) {
    if let Some(name) = &d.domain {
        cfg.set("domain", Value::from(name.as_str()));
    }
}

fn apply_exhaustion(cfg: &mut ExperimentConfig, e: &ExhaustionArgs) {
    if let Some(name) = &e.domain {
        cfg.set("domain", Value::from(name.as_str()));
    }
    if let Some(x) = e.eps0 {
        cfg.set("exhaustion.eps0", Value::from(x));
    }
    if let Some(x) = e.rho {
        cfg.set("exhaustion.rho", Value::from(x));
    }
    if let Some(x) = e.grid_floor {
        cfg.set("exhaustion.grid_floor", Value::from(x));
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, harness::HarnessError> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.set("seed", Value::from(seed));
    }
    let op = match &cli.verb {
        Verb::Domain { action } => match action {
            DomainVerb::Verify(d) => {
                apply_domain(&mut cfg, d);
                "domain.verify"
            }
            DomainVerb::SegmentCheck(d) => {
                apply_domain(&mut cfg, d);
                "domain.segment_check"
            }
            DomainVerb::TranslationCheck(d) => {
                apply_domain(&mut cfg, d);
                "domain.translation_check"
            }
        },
        Verb::SpecialFn { action } => match action {
            SpecialVerb::Table => "special_fn.table",
        },
        Verb::Approx { action } => {
            let (args, op) = match action {
                ApproxVerb::Build(a) => (a, "approx.build"),
                ApproxVerb::Check(a) => (a, "approx.check"),
            };
            if let Some(name) = &args.domain {
                cfg.set("domain", Value::from(name.as_str()));
            }
            if let Some(f) = &args.field {
                cfg.set("field", Value::from(f.as_str()));
            }
            if let Some(nu) = args.nu {
                cfg.set("approx.nu", Value::from(nu));
            }
            op
        }
        Verb::Exhaustion { action } => match action {
            ExhaustionVerb::Build(e) => {
                apply_exhaustion(&mut cfg, e);
                "exhaustion.build"
            }
            ExhaustionVerb::Eval { common, points } => {
                apply_exhaustion(&mut cfg, common);
                if let Some(p) = points {
                    cfg.set("points", Value::from(p.to_string_lossy().as_ref()));
                }
                "exhaustion.eval"
            }
            ExhaustionVerb::CheckBounds(e) => {
                apply_exhaustion(&mut cfg, e);
                "exhaustion.check_bounds"
            }
            ExhaustionVerb::CheckLevi { common, h } => {
                apply_exhaustion(&mut cfg, common);
                if let Some(h) = h {
                    cfg.set("exhaustion.h", Value::from(*h));
                }
                "exhaustion.check_levi"
            }
            ExhaustionVerb::Trace { common, point } => {
                apply_exhaustion(&mut cfg, common);
                if let Some(p) = point {
                    cfg.set("point", Value::from(p.as_str()));
                }
                "exhaustion.trace"
            }
        },
        Verb::Figures { which } => {
            let op = match which.as_str() {
                "cusp_fig1" => "figures.cusp_fig1",
                "exhaustion_profile" => "figures.exhaustion_profile",
                "error_vs_nu" => "figures.error_vs_nu",
                other => {
                    return Err(harness::HarnessError::Config {
                        field: "figures".into(),
                        message: format!("unknown figure `{other}`"),
                    })
                }
            };
            cfg.set("operation", Value::from(op));
            return Ok(cfg);
        }
        Verb::Acceptance => "acceptance",
    };
    cfg.set("operation", Value::from(op));
    Ok(cfg)
}

fn real_main() -> Result<bool, harness::HarnessError> {
    harness::init_threads();
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    let (report, artifacts) = harness::run(&cfg)?;

    std::fs::create_dir_all(&cli.common.out)?;
    let json = report.canonical_json();
    std::fs::write(cli.common.out.join("report.json"), &json)?;
    for artifact in &artifacts {
        std::fs::write(cli.common.out.join(&artifact.name), &artifact.contents)?;
    }

    match cli.common.format.as_str() {
        "csv" => {
            println!("name,verdict,measured,bound");
            for r in &report.records {
                println!(
                    "{},{},{:.16e},{:.16e}",
                    r.name, r.verdict, r.measured, r.bound
                );
            }
        }
        _ => print!("{json}"),
    }
    for r in &report.records {
        eprintln!(
            "{} {} ({} ms)",
            if r.verdict { "PASS" } else { "FAIL" },
            r.name,
            r.runtime_ms
        );
    }
    Ok(report.aggregate)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
