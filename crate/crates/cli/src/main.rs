//! `motoplace`: command-line front end for the placement pipeline.
//!
//! Exit codes: 0 success, 1 file I/O, 2 usage, 3 configuration, 4 CoG
//! region, 5 model build, 6 solve, 7 verification.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use motoplace::io::pipeline::{
    self, build, ideal_point, parse_placement, read_file, render, run_region, run_solve, run_verify, write_file, PipelineError,
};
use motoplace::io::Project;
use motoplace::model::export::{write_lp, write_mps};

#[derive(Parser)]
#[command(name = "motoplace", version, about = "Optimal 2D placement of electric-motorcycle powertrain elements")]
struct Cli {
    /// Project configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the configuration's output_dir.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Solver worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solver wall-time limit in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Solver node limit.
    #[arg(long, global = true)]
    node_limit: Option<u64>,
    /// Relative gap at which the solver may stop early.
    #[arg(long, global = true)]
    gap_limit: Option<f64>,
    /// Cluster count override, as NAME=N (repeatable).
    #[arg(long = "clusters", global = true, value_parser = parse_cluster)]
    clusters: Vec<(String, usize)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive-cycle analysis: inactive CoG region and ideal point.
    Region,
    /// Assemble the model and export it as LP and MPS.
    Build,
    /// Build and solve; writes the result JSON.
    Solve {
        /// Placement or result file used as a warm start.
        #[arg(long)]
        warm: Option<PathBuf>,
    },
    /// Check a placement against every constraint.
    Verify {
        /// Placement or result file; defaults to the output result file.
        #[arg(long)]
        placement: Option<PathBuf>,
    },
    /// Draw a placement (or just the design space) as SVG.
    Render {
        #[arg(long)]
        placement: Option<PathBuf>,
    },
    /// Full pipeline: region, build, solve, verify and render.
    Run,
}

fn parse_cluster(s: &str) -> Result<(String, usize), String> {
    let (name, n) = s.split_once('=').ok_or_else(|| format!("expected NAME=N, got {s}"))?;
    let n = n.trim().parse::<usize>().map_err(|e| format!("{s}: {e}"))?;
    Ok((name.trim().to_string(), n))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let Some(config) = cli.config.clone() else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    match execute(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(cli: &Cli, config: &Path) -> Result<Project, PipelineError> {
    let mut project = Project::load(config)?;
    for (name, n) in &cli.clusters {
        project.set_clusters(name, *n)?;
    }
    let s = &mut project.config.solver;
    if let Some(t) = cli.threads {
        s.threads = t;
    }
    if let Some(t) = cli.time_limit {
        s.time_limit_s = Some(t);
    }
    if let Some(n) = cli.node_limit {
        s.node_limit = Some(n);
    }
    if let Some(g) = cli.gap_limit {
        s.gap_limit = Some(g);
    }
    Ok(project)
}

fn execute(cli: &Cli, config: &Path) -> Result<(), PipelineError> {
    let project = load(cli, config)?;
    let out = cli.out.clone().unwrap_or_else(|| project.output_dir());
    match &cli.command {
        Command::Region => {
            let Some(region) = run_region(&project)? else {
                println!("no drive cycle configured; ideal CoG = {:?}", ideal_point(&project, None)?);
                return Ok(());
            };
            let mut buf = Vec::new();
            region.grid.write_csv(&mut buf)?;
            let path = out.join(pipeline::REGION_FILE);
            write_file(&path, &String::from_utf8_lossy(&buf))?;
            println!("ideal CoG = ({:.4}, {:.4}); region written to {}", region.ideal[0], region.ideal[1], path.display());
        }
        Command::Build => {
            let region = run_region(&project)?;
            let (_, model) = build(&project, ideal_point(&project, region.as_ref())?)?;
            write_file(&out.join(pipeline::LP_FILE), &write_lp(&model))?;
            write_file(&out.join(pipeline::MPS_FILE), &write_mps(&model))?;
            println!(
                "{} variables ({} binary), {} constraints; written to {}",
                model.vars.len(),
                model.binary_count(),
                model.constraints.len(),
                out.display()
            );
        }
        Command::Solve { warm } => {
            let region = run_region(&project)?;
            let (opts, model) = build(&project, ideal_point(&project, region.as_ref())?)?;
            let warm = match warm {
                Some(p) => Some(parse_placement(&read_file(p)?)?),
                None => None,
            };
            let report = run_solve(&project, &opts, &model, warm.as_ref())?;
            let path = out.join(pipeline::RESULT_FILE);
            write_file(&path, &report.to_json())?;
            println!("{} objective {:?} gap {:?}; written to {}", report.status.as_str(), report.objective, report.gap, path.display());
            if !report.succeeded() {
                return Err(PipelineError::Solve(format!("stopped at {}", report.status.as_str())));
            }
        }
        Command::Verify { placement } => {
            let path = placement.clone().unwrap_or_else(|| out.join(pipeline::RESULT_FILE));
            let placement = parse_placement(&read_file(&path)?)?;
            let region = run_region(&project)?;
            let opts = project.config.build_options(ideal_point(&project, region.as_ref())?);
            let report = run_verify(&project, &opts, &placement)?;
            write_file(&out.join(pipeline::VERIFY_FILE), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            for (c, ok) in &report.categories {
                println!("{:<14} {}", format!("{c:?}").to_lowercase(), if *ok { "pass" } else { "FAIL" });
            }
            println!("objective {:.9}", report.objective.total);
            if !report.feasible {
                return Err(PipelineError::Verify(format!("{} violation(s)", report.violations.len())));
            }
        }
        Command::Render { placement } => {
            let placement = match placement {
                Some(p) => Some(parse_placement(&read_file(p)?)?),
                None => None,
            };
            let region = run_region(&project)?;
            let opts = project.config.build_options(ideal_point(&project, region.as_ref())?);
            let svg = render(&project, &opts, placement.as_ref(), region.as_ref())?;
            let path = out.join(pipeline::SVG_FILE);
            write_file(&path, &svg)?;
            println!("written to {}", path.display());
        }
        Command::Run => {
            let outcome = pipeline::run_all(&project, &out)?;
            println!(
                "{} objective {:?} gap {:?}; artifacts in {}",
                outcome.report.status.as_str(),
                outcome.report.objective,
                outcome.report.gap,
                out.display()
            );
        }
    }
    Ok(())
}
