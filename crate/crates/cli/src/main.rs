use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use fracmag_cli::artifacts::Artifacts;
use fracmag_cli::config::ExperimentConfig;
use fracmag_cli::pipelines::{Pipeline, Run, Section, Status};
use fracmag_cli::{CliError, EXIT_ERROR, EXIT_GATE, EXIT_PASS};
use serde::Serialize;

fn parse_band(arg: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = arg.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("LO: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("HI: {e}"))?;
    Ok((lo, hi))
}

#[derive(Debug, Parser)]
#[command(name = "fracmag", version, about = "Experiments on fractional magnetic Schrödinger operators")]
struct Cli {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Pipeline,
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides [output].dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for generated test vectors; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Scattering horizon T; overrides [scattering].t_max.
    #[arg(long)]
    tmax: Option<f64>,
    /// Cook panel width; overrides [scattering].dt.
    #[arg(long)]
    dt: Option<f64>,
    /// Packet momentum band as LO,HI; overrides [scattering].band.
    #[arg(long, value_name = "LO,HI", value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Serialize)]
struct FailedGate {
    section: &'static str,
    gate: String,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    sections: &'a [Section],
    passed: bool,
    failed_gates: &'a [FailedGate],
}

#[derive(Serialize)]
struct Timing {
    section: &'static str,
    seconds: f64,
}

#[derive(Serialize)]
struct Versions {
    fracmag: &'static str,
    fracmag_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    config_path: String,
    config_hash: &'a str,
    seed: u64,
    versions: Versions,
    started_unix: u64,
    timing: Vec<Timing>,
    total_seconds: f64,
    exit_code: i32,
    artifacts: &'a [fracmag_cli::artifacts::ArtifactEntry],
}

fn apply_overrides(cli: &Cli, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if cli.tmax.is_some() || cli.dt.is_some() || cli.band.is_some() {
        let sc = cfg
            .scattering
            .as_mut()
            .ok_or_else(|| CliError::Config("--tmax/--dt/--band need a [scattering] table".into()))?;
        if let Some(t) = cli.tmax {
            sc.t_max = t;
        }
        if let Some(dt) = cli.dt {
            sc.dt = dt;
        }
        if let Some(b) = cli.band {
            sc.band = b;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut cfg = ExperimentConfig::from_path(&cli.config)?;
    apply_overrides(cli, &mut cfg)?;
    if cli.command == Pipeline::Scatter && cfg.scattering.is_none() {
        return Err(CliError::Config("scatter requires a [scattering] table".into()));
    }
    let hash = cfg.hash();
    let exp = cfg.validate()?;
    let art = Artifacts::new(&exp.config.output.dir, &hash)?;
    let mut runner = Run::new(&exp, art);

    let mut sections = Vec::new();
    let mut timing = Vec::new();
    for stage in cli.command.stages(exp.config.scattering.is_some()) {
        if !cli.quiet {
            eprintln!("running {}", stage.name());
        }
        let (section, secs) = runner.stage(stage)?;
        if !cli.quiet {
            eprintln!("  {} in {secs:.1}s", if section.status == Status::Complete { "done" } else { "aborted" });
        }
        timing.push(Timing { section: stage.name(), seconds: secs });
        sections.push(section);
    }

    let failed: Vec<FailedGate> = sections
        .iter()
        .flat_map(|s| s.gates.iter().filter(|g| !g.passed).map(move |g| FailedGate { section: s.name, gate: g.name.clone() }))
        .collect();
    let passed = failed.is_empty();
    let report = Report {
        command: cli.command.name(),
        config_hash: &hash,
        config: &exp.config,
        sections: &sections,
        passed,
        failed_gates: &failed,
    };
    runner.art.write_json("report.json", &report)?;

    for s in &sections {
        for g in s.gates.iter().filter(|g| !g.passed) {
            eprintln!("gate failed: {} = {:e} (required {} {:e})", g.name, g.value, g.relation, g.limit);
        }
        if let Some(cause) = &s.cause {
            eprintln!("{} aborted: {cause}", s.name);
        }
        if let Some(hint) = &s.hint {
            eprintln!("  hint: {hint}");
        }
    }
    let code = if passed { EXIT_PASS } else { EXIT_GATE };
    let entries = runner.art.entries().to_vec();
    let manifest = Manifest {
        command: cli.command.name(),
        config_path: cli.config.display().to_string(),
        config_hash: &hash,
        seed: exp.config.seed,
        versions: Versions { fracmag: fracmag::VERSION, fracmag_cli: env!("CARGO_PKG_VERSION") },
        started_unix,
        timing,
        total_seconds: started.elapsed().as_secs_f64(),
        exit_code: code,
        artifacts: &entries,
    };
    runner.art.write_json("manifest.json", &manifest)?;
    if !cli.quiet {
        eprintln!("{} gates: {}", cli.command.name(), if passed { "all passed" } else { "FAILED" });
    }
    Ok(code)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is the gate-failure code here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS } as u8);
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = e.hint() {
                eprintln!("  hint: {h}");
            }
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
