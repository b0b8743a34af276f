//! Stages of the full run (region, build, solve, verify, render) and the
//! files each one writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, Project};
use super::svg::{render_svg, RegionOverlay};
use crate::cog_region::{ideal_cog, inactive_region, RegionError, RegionGrid};
use crate::model::export::{write_lp, write_mps};
use crate::model::{assemble, BuildOptions, MiqpModel, ModelError};
use crate::solver::{solve, SolveError, SolveResult, SolveStatus};
use crate::verifier::{split_cluster, verify, Placement, VerificationReport, VerifyError};

pub const RESULT_FORMAT_VERSION: u32 = 1;

/// Absolute tolerance (m) for verifying solver output.
pub const VERIFY_TOLERANCE: f64 = 1e-5;

pub const REGION_FILE: &str = "region.csv";
pub const LP_FILE: &str = "model.lp";
pub const MPS_FILE: &str = "model.mps";
pub const RESULT_FILE: &str = "result.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const SVG_FILE: &str = "placement.svg";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("region: {0}")]
    Region(#[from] RegionError),
    #[error("build: {0}")]
    Build(#[from] ModelError),
    #[error("solve: {0}")]
    Solve(String),
    #[error("verify: {0}")]
    Verify(String),
}

impl PipelineError {
    /// Process exit code of this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => 1,
            PipelineError::Config(_) => 3,
            PipelineError::Region(_) => 4,
            PipelineError::Build(_) => 5,
            PipelineError::Solve(_) => 6,
            PipelineError::Verify(_) => 7,
        }
    }
}

impl From<SolveError> for PipelineError {
    fn from(e: SolveError) -> Self {
        PipelineError::Solve(e.to_string())
    }
}

impl From<VerifyError> for PipelineError {
    fn from(e: VerifyError) -> Self {
        PipelineError::Verify(e.to_string())
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e })
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e })
}

/// Inactive region in `(b, h)` and the ideal CoG in design coordinates.
#[derive(Clone, Debug)]
pub struct RegionOutcome {
    pub grid: RegionGrid<f64>,
    pub ideal: [f64; 2],
    /// Design-space x of `b = 0`.
    pub x_offset: f64,
}

/// Runs the drive-cycle analysis when the project has a cycle.
pub fn run_region(project: &Project) -> Result<Option<RegionOutcome>, PipelineError> {
    let Some(cycle) = &project.cycle else { return Ok(None) };
    let params = project.vehicle_params().map_err(RegionError::Params)?;
    let spec = project.grid_spec().ok_or_else(|| RegionError::Grid("no grid for this project".into()))?;
    let grid = inactive_region(&params, cycle, &spec)?;
    let [b, h] = ideal_cog(&grid)?;
    let x_offset = project.rear_contact_x();
    log::info!("inactive region: {} of {} grid points; ideal CoG b = {b:.3} m, h = {h:.3} m", grid.inactive_count(), grid.inactive.len());
    Ok(Some(RegionOutcome { grid, ideal: [x_offset + b, h], x_offset }))
}

/// Ideal CoG: explicit in the configuration or from the region.
pub fn ideal_point(project: &Project, region: Option<&RegionOutcome>) -> Result<[f64; 2], PipelineError> {
    match (project.config.objective.ideal, region) {
        (Some(p), _) => Ok(p),
        (None, Some(r)) => Ok(r.ideal),
        (None, None) => Err(RegionError::NoFeasibleCog.into()),
    }
}

pub fn build(project: &Project, ideal: [f64; 2]) -> Result<(BuildOptions, MiqpModel), PipelineError> {
    let opts = project.config.build_options(ideal);
    let model = assemble(&project.topology, &opts)?;
    log::info!(
        "model: {} variables ({} binary), {} constraints",
        model.vars.len(),
        model.binary_count(),
        model.constraints.len()
    );
    Ok((opts, model))
}

/// Solver outcome as written to `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    pub format_version: u32,
    pub topology: String,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: u64,
    pub elapsed_s: f64,
    pub qp_failures: u64,
    pub ideal: [f64; 2],
    pub clusters: BTreeMap<String, usize>,
    pub binaries: usize,
    pub placement: Option<Placement>,
}

impl SolveReport {
    /// True when the incumbent is certified within the configured gap.
    pub fn succeeded(&self) -> bool {
        self.placement.is_some() && matches!(self.status, SolveStatus::Optimal | SolveStatus::GapLimit)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn report(project: &Project, opts: &BuildOptions, model: &MiqpModel, r: &SolveResult) -> SolveReport {
    let clusters = project
        .topology
        .existing()
        .filter(|e| e.is_subsystem())
        .map(|e| (e.name.clone(), opts.cluster_count(&e.name)))
        .collect();
    let placement = r.values.as_ref().map(|v| {
        let mut p = model.placement(&project.topology, v);
        p.objective = r.objective;
        p
    });
    SolveReport {
        format_version: RESULT_FORMAT_VERSION,
        topology: project.topology.name.clone(),
        status: r.status,
        objective: r.objective,
        bound: r.bound.is_finite().then_some(r.bound),
        gap: r.gap,
        nodes: r.nodes,
        elapsed_s: r.elapsed.as_secs_f64(),
        qp_failures: r.qp_failures,
        ideal: opts.objective.ideal,
        clusters,
        binaries: model.binary_count(),
        placement,
    }
}

/// Placements with the cluster counts of `opts`, made from `placement` by
/// cutting clusters apart. Capped at a few hundred candidates.
pub fn refinements(project: &Project, opts: &BuildOptions, placement: &Placement) -> Vec<Placement> {
    let mut out = vec![placement.clone()];
    for e in project.topology.existing().filter(|e| e.is_subsystem()) {
        let Some(module) = e.modules() else { continue };
        let want = opts.cluster_count(&e.name);
        let have = placement.element(&e.name).map_or(0, |p| p.clusters.len());
        for _ in have..want {
            let mut next = Vec::new();
            for p in &out {
                for q in split_cluster(p, &e.name, module) {
                    if !next.contains(&q) && next.len() < 400 {
                        next.push(q);
                    }
                }
            }
            out = next;
        }
    }
    out
}

/// Full assignment for a warm start. A placement with fewer clusters than
/// the model is refined first; the first refinement that lifts without
/// violations wins.
fn warm_start(project: &Project, opts: &BuildOptions, model: &MiqpModel, placement: &Placement) -> Option<Vec<f64>> {
    let mut fallback = None;
    for p in refinements(project, opts, placement) {
        match model.lift(&project.topology, &p, 1e-6) {
            Ok(l) if l.violated.is_none() => return Some(l.values),
            Ok(l) => {
                if fallback.is_none() {
                    fallback = Some(l);
                }
            }
            Err(e) => log::debug!("warm start candidate rejected: {e}"),
        }
    }
    match fallback {
        Some(l) => {
            if let Some((row, v)) = &l.violated {
                log::warn!("warm start violates {row} by {v:.3e}");
            }
            Some(l.values)
        }
        None => {
            log::warn!("warm start ignored: no lift matches the model");
            None
        }
    }
}

/// Solves the model, optionally starting from a known placement.
pub fn run_solve(
    project: &Project,
    opts: &BuildOptions,
    model: &MiqpModel,
    warm: Option<&Placement>,
) -> Result<SolveReport, PipelineError> {
    let start = warm.and_then(|p| warm_start(project, opts, model, p));
    let r = solve(model, &project.config.solver_options(), start.as_deref())?;
    log::info!(
        "solve: {} after {} nodes in {:.2} s, objective {:?}, gap {:?}",
        r.status.as_str(),
        r.nodes,
        r.elapsed.as_secs_f64(),
        r.objective,
        r.gap
    );
    Ok(report(project, opts, model, &r))
}

pub fn run_verify(project: &Project, opts: &BuildOptions, placement: &Placement) -> Result<VerificationReport, PipelineError> {
    Ok(verify(&project.topology, opts, placement, VERIFY_TOLERANCE)?)
}

/// Reads a placement from either a result file or a bare placement file.
pub fn parse_placement(text: &str) -> Result<Placement, PipelineError> {
    if let Ok(r) = serde_json::from_str::<SolveReport>(text) {
        return r.placement.ok_or_else(|| PipelineError::Verify("result file holds no placement".into()));
    }
    serde_json::from_str::<Placement>(text).map_err(|e| PipelineError::Verify(format!("not a placement or result file: {e}")))
}

pub fn render(
    project: &Project,
    opts: &BuildOptions,
    placement: Option<&Placement>,
    region: Option<&RegionOutcome>,
) -> Result<String, PipelineError> {
    let overlay = region.map(|r| RegionOverlay { grid: &r.grid, x_offset: r.x_offset });
    Ok(render_svg(&project.topology, opts, placement, overlay)?)
}

/// Paths of everything a full run writes.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub region: Option<PathBuf>,
    pub lp: Option<PathBuf>,
    pub mps: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub verification: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub artifacts: Artifacts,
    pub report: SolveReport,
    pub verification: Option<VerificationReport>,
}

/// Region, build, export, solve, verify and render, writing each artifact
/// into `out`. Returns an error for the first stage that fails; artifacts
/// of earlier stages stay on disk.
pub fn run_all(project: &Project, out: &Path) -> Result<RunOutcome, PipelineError> {
    let mut art = Artifacts::default();
    write_file(&out.join(RESOLVED_CONFIG_FILE), &project.config.to_toml())?;
    let region = run_region(project)?;
    if let Some(r) = &region {
        let mut buf = Vec::new();
        r.grid.write_csv(&mut buf)?;
        let path = out.join(REGION_FILE);
        write_file(&path, &String::from_utf8(buf).expect("csv is utf-8"))?;
        art.region = Some(path);
    }
    let ideal = ideal_point(project, region.as_ref())?;
    let (opts, model) = build(project, ideal)?;
    for (name, text, slot) in [(LP_FILE, write_lp(&model), &mut art.lp), (MPS_FILE, write_mps(&model), &mut art.mps)] {
        let path = out.join(name);
        write_file(&path, &text)?;
        *slot = Some(path);
    }
    let report = run_solve(project, &opts, &model, None)?;
    let path = out.join(RESULT_FILE);
    write_file(&path, &report.to_json())?;
    art.result = Some(path);
    let Some(placement) = &report.placement else {
        return Err(PipelineError::Solve(format!("no feasible placement ({})", report.status.as_str())));
    };
    let verification = run_verify(project, &opts, placement)?;
    let path = out.join(VERIFY_FILE);
    write_file(&path, &serde_json::to_string_pretty(&verification).expect("report serializes"))?;
    art.verification = Some(path);
    let svg = render(project, &opts, Some(placement), region.as_ref())?;
    let path = out.join(SVG_FILE);
    write_file(&path, &svg)?;
    art.svg = Some(path);
    if !report.succeeded() {
        return Err(PipelineError::Solve(format!(
            "stopped at {} with gap {:?}",
            report.status.as_str(),
            report.gap
        )));
    }
    if !verification.feasible {
        let first = verification.violations.first().map(|v| v.detail.clone()).unwrap_or_default();
        return Err(PipelineError::Verify(format!("placement fails verification: {first}")));
    }
    Ok(RunOutcome { artifacts: art, report, verification: Some(verification) })
}
