//! Command-line driver: subcommands, result CSVs, run manifests and the
//! acceptance suite.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod results;
pub mod suite;

use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser};
use perc_core::Error;
use serde_json::json;

use crate::args::{Cli, Command};
use crate::commands::{execute, Ctx, Failure};
use crate::manifest::{read_manifest, write_manifest, RunManifest};
use crate::results::write_results;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_STARVED: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::CapExceeded { .. } => EXIT_USAGE,
        Error::Starvation { .. } => EXIT_STARVED,
        Error::Invariant(_) | Error::ScaleSearchFailed { .. } | Error::Io(_) | Error::Json(_) => EXIT_FAILED,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Input(_) => "input",
        Error::CapExceeded { .. } => "cap_exceeded",
        Error::Starvation { .. } => "starvation",
        Error::Invariant(_) => "invariant",
        Error::ScaleSearchFailed { .. } => "scale_search_failed",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// One JSON object per line on stderr.
fn diagnostic(value: serde_json::Value) {
    eprintln!("{value}");
}

fn usage_text(sub: Option<&str>) -> String {
    let mut cmd = Cli::command();
    match sub.and_then(|s| cmd.find_subcommand_mut(s)) {
        Some(c) => c.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// Runs `perc` with the given argv (program name first) and returns the exit code.
pub fn run_command(argv: Vec<String>) -> i32 {
    let argv = match config::expand_argv(&argv) {
        Ok(a) => a,
        Err(e) => {
            diagnostic(json!({ "level": "error", "kind": error_kind(&e), "message": e.to_string() }));
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            diagnostic(json!({ "level": "error", "kind": "usage", "message": e.kind().to_string() }));
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.global.out, cli.global.workers);
    }
    run_parsed(cli, &argv)
}

/// Re-runs a manifest's command with a new output directory and worker count.
fn replay(path: &Path, out: &Path, workers: usize) -> i32 {
    let m = match read_manifest(path) {
        Ok(m) => m,
        Err(e) => {
            diagnostic(json!({ "level": "error", "kind": error_kind(&e), "message": e.to_string(), "manifest": path }));
            return exit_code(&e);
        }
    };
    let mut argv = config::strip_flag(&config::strip_flag(&m.argv, "out"), "workers");
    argv.extend(["--out".to_string(), out.display().to_string()]);
    argv.extend(["--workers".to_string(), workers.to_string()]);
    run_command(argv)
}

fn run_parsed(cli: Cli, argv: &[String]) -> i32 {
    let sub = cli.command.name();
    let mut effective = config::strip_flag(argv, "seed");
    effective.extend(["--seed".to_string(), cli.global.seed.to_string()]);
    let manifest = RunManifest::new(sub, effective, cli.global.seed, cli.global.workers);
    let out = cli.global.out.clone();
    let mut ctx = match Ctx::new(cli.global.clone(), manifest) {
        Ok(c) => c,
        Err(f) => return report_failure(sub, &f),
    };
    let exec = ctx.exec.clone();
    let result = exec.install(|| execute(&cli.command, &mut ctx));
    let mut code = match &result {
        Ok(()) => EXIT_OK,
        Err(f) => report_failure(sub, f),
    };
    if let Err(e) = persist(&mut ctx, &out, sub) {
        diagnostic(json!({ "level": "error", "kind": "io", "message": format!("partial write: {e}") }));
        code = code.max(EXIT_FAILED);
    }
    ctx.manifest.finished = Some(chrono::Utc::now());
    ctx.manifest.exit_code = Some(code);
    ctx.manifest.error = result.err().map(|f| failure_message(&f));
    let path = out.join("manifests").join(format!("{}.json", ctx.manifest.run_id));
    ctx.manifest.add_output(&path);
    if let Err(e) = write_manifest(&ctx.manifest, &path) {
        diagnostic(json!({ "level": "error", "kind": "io", "message": e.to_string() }));
        code = code.max(EXIT_FAILED);
    }
    code
}

fn failure_message(f: &Failure) -> String {
    match f {
        Failure::Usage(s) | Failure::Check(s) => s.clone(),
        Failure::Core(e) => e.to_string(),
    }
}

fn report_failure(sub: &str, f: &Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            diagnostic(json!({ "level": "error", "kind": "usage", "subcommand": sub, "message": msg }));
            eprintln!("{}", usage_text(Some(sub)));
            EXIT_USAGE
        }
        Failure::Check(msg) => {
            diagnostic(json!({ "level": "error", "kind": "check_failed", "subcommand": sub, "message": msg }));
            EXIT_FAILED
        }
        Failure::Core(e) => {
            let mut v = json!({ "level": "error", "kind": error_kind(e), "subcommand": sub, "message": e.to_string() });
            if let Error::Starvation { partial, .. } = e {
                v["partial"] = serde_json::to_value(partial.as_ref()).unwrap_or_default();
            }
            if let Error::CapExceeded { .. } = e {
                v["hint"] = json!("exact enumeration is limited to small regions; use a smaller --n or the Monte Carlo `estimate` subcommand");
            }
            diagnostic(v);
            exit_code(e)
        }
    }
}

/// Writes rows, reports and text artifacts, recording them in the manifest.
fn persist(ctx: &mut Ctx, out: &Path, sub: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let run_id = ctx.manifest.run_id.clone();
    let mut rows = Vec::with_capacity(ctx.rows.len());
    for r in ctx.rows.drain(..) {
        match r.check() {
            Ok(()) => rows.push(r),
            Err(msg) => diagnostic(json!({ "level": "warning", "kind": "row_dropped", "message": msg })),
        }
    }
    if sub != "suite" || !rows.is_empty() {
        let csv: PathBuf = out.join(format!("{sub}.csv"));
        write_results(&rows, &csv)?;
        ctx.manifest.add_output(&csv);
    }
    for (name, value) in std::mem::take(&mut ctx.reports) {
        let path = out.join(format!("{name}-{run_id}.json"));
        let mut text = serde_json::to_string_pretty(&value).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        ctx.manifest.add_output(&path);
    }
    for (name, text) in std::mem::take(&mut ctx.texts) {
        let path = out.join(format!("{name}-{run_id}.txt"));
        std::fs::write(&path, text)?;
        ctx.manifest.add_output(&path);
    }
    ctx.manifest.prune_outputs();
    Ok(())
}
