use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinefp::cli::artifacts::run_to_dir;
use kinefp::cli::config::load_config;
use kinefp::cli::sweep::{parse_values, sweep, write_csv};
use kinefp::cli::verify::run_suite;
use kinefp::cli::{exit_code, thread_count, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_VERIFY};
use kinefp::picard::RunStatus;
use kinefp::{Error, FluxMode};

#[derive(Parser)]
#[command(
    name = "kinefp",
    version,
    about = "Kinetic Fokker-Planck / TAF solver and bound checks"
)]
struct Cli {
    /// Worker threads (falls back to KINEFP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the coupled scheme and write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Steps between CSV snapshots.
        #[arg(long)]
        snapshots: Option<usize>,
        #[arg(long)]
        flux_mode: Option<FluxMode>,
        /// Skip PNG heatmaps.
        #[arg(long)]
        no_png: bool,
    },
    /// Run invariant suites: kernels, linfp, taf, vintegrals, bounds or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        /// Also write the rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Repeat a run over values of one model or grid field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
        #[arg(long)]
        flux_mode: Option<FluxMode>,
        /// Run the sweep points concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(&e)
}

fn cmd_run(
    config: PathBuf,
    out_dir: PathBuf,
    snapshots: Option<usize>,
    flux_mode: Option<FluxMode>,
    no_png: bool,
) -> i32 {
    let mut cfg = match load_config(&config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = snapshots {
        if s == 0 {
            eprintln!("error: --snapshots must be >= 1");
            return EXIT_CONFIG;
        }
        cfg.output.snapshots = Some(s);
    }
    if let Some(m) = flux_mode {
        cfg.model.flux_mode = m;
    }
    if no_png {
        cfg.output.png = false;
    }
    let art = match run_to_dir(&cfg, &out_dir) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let r = &art.outcome.report;
    println!("config {}", art.config_hash);
    println!(
        "status {:?} after {} iterations, final diff {:.3e}",
        r.status,
        r.iterations,
        r.diffs.last().copied().unwrap_or(0.0)
    );
    println!(
        "final mass {:.6e}, sup {:.6e}",
        art.headline.final_mass, art.headline.p_sup
    );
    for w in &r.warnings {
        println!("warning: {w}");
    }
    let failed = art.ledgers.iter().filter(|l| !l.passed).count();
    println!(
        "{} bound ledgers, {failed} outside slack",
        art.ledgers.len()
    );
    println!("wrote {} files to {}", art.files.len(), out_dir.display());
    match r.status {
        RunStatus::Converged => EXIT_OK,
        _ => EXIT_DIVERGED,
    }
}

fn cmd_verify(suite: &str, json: Option<PathBuf>) -> i32 {
    let rows = match run_suite(suite) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!(
        "{:<4} {:<11} {:<52} {:>10}  detail",
        "", "suite", "check", "margin"
    );
    for r in &rows {
        println!(
            "{:<4} {:<11} {:<52} {:>10.3e}  {}",
            if r.passed { "ok" } else { "FAIL" },
            r.suite,
            r.name,
            r.margin,
            r.detail
        );
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", rows.len());
    if let Some(p) = json {
        if let Err(e) = std::fs::write(
            &p,
            serde_json::to_vec_pretty(&rows).expect("rows serialize"),
        ) {
            return fail(e.into());
        }
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

fn cmd_sweep(
    config: PathBuf,
    param: String,
    values: String,
    out_dir: PathBuf,
    flux_mode: Option<FluxMode>,
    parallel: bool,
) -> i32 {
    let vals = match parse_values(&values) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let mut cfg = match load_config(&config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(m) = flux_mode {
        cfg.model.flux_mode = m;
    }
    let rows = match sweep(&cfg, &param, &vals, parallel) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return fail(e.into());
    }
    let path = out_dir.join("sweep.csv");
    if let Err(e) = write_csv(&path, &param, &rows, &cfg.hash()) {
        return fail(e);
    }
    for r in &rows {
        println!(
            "{param}={:<10} mass {:.6e} sup {:.4e} iterations {} order {}",
            r.value,
            r.headline.final_mass,
            r.headline.p_sup,
            r.headline.iterations,
            r.richardson_order
                .map(|o| format!("{o:.2}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    println!("wrote {}", path.display());
    if rows.iter().all(|r| r.status == RunStatus::Converged) {
        EXIT_OK
    } else {
        EXIT_DIVERGED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = thread_count(cli.threads) {
        // only fails if a pool was already built, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let code = match cli.cmd {
        Cmd::Run {
            config,
            out_dir,
            snapshots,
            flux_mode,
            no_png,
        } => cmd_run(config, out_dir, snapshots, flux_mode, no_png),
        Cmd::Verify { suite, json } => cmd_verify(&suite, json),
        Cmd::Sweep {
            config,
            param,
            values,
            out_dir,
            flux_mode,
            parallel,
        } => cmd_sweep(config, param, values, out_dir, flux_mode, parallel),
    };
    ExitCode::from(code as u8)
}
