//! Project configuration: one TOML file naming the topology and every
//! option of the pipeline. Paths inside it are relative to the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cog_region::{Drive, DriveCycle, GridSpec, VehicleParams};
use crate::geometry::{AngleScheme, DesignSpace};
use crate::model::{Aabb, BuildOptions, ObjectiveSpec, PointMass, Topology};
use crate::solver::SolverOptions;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub format_version: u32,
    /// Topology file.
    pub topology: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub design_space: DesignSpace<f64>,
    #[serde(default)]
    pub angles: AngleConfig,
    /// Cluster count per subsystem; unlisted subsystems use one cluster.
    #[serde(default)]
    pub clusters: BTreeMap<String, usize>,
    /// Contiguity tolerance between clusters (m).
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    pub vehicle: VehicleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleConfig {
    /// Rectangle mounting angles `N_a` over a half turn.
    #[serde(default = "default_rect_angles")]
    pub rect: usize,
    /// Projected angles `N_pa` used for circles.
    #[serde(default = "default_projected_angles")]
    pub projected: usize,
}

impl Default for AngleConfig {
    fn default() -> Self {
        Self { rect: default_rect_angles(), projected: default_projected_angles() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Explicit ideal CoG; otherwise it comes from the drive-cycle region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<[f64; 2]>,
    #[serde(default = "one")]
    pub l_n: f64,
    #[serde(default = "one")]
    pub l_n_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mm_box: Option<Aabb>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { ideal: None, l_n: 1.0, l_n_mm: 1.0, mm_box: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    /// Defaults to the distance between the two fixed wheels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheelbase: Option<f64>,
    pub chassis: PointMass,
    pub rider: PointMass,
    #[serde(default = "default_mu")]
    pub mu_front: f64,
    #[serde(default = "default_mu")]
    pub mu_rear: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_drive")]
    pub drive: Drive<f64>,
    #[serde(default = "default_road_load")]
    pub road_load: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    /// Drive-cycle CSV.
    pub cycle: PathBuf,
    /// Grid spacing (m).
    #[serde(default = "default_step")]
    pub step: f64,
    /// Highest CoG height examined; defaults to the top of the design space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub gap_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            gap_tol: d.gap_tol,
            gap_limit: None,
            time_limit_s: None,
            node_limit: None,
            threads: d.threads,
            batch_size: d.batch_size,
            log_every: d.log_every,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_rect_angles() -> usize {
    4
}
fn default_projected_angles() -> usize {
    3
}
fn one() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    0.9
}
fn default_gravity() -> f64 {
    9.81
}
fn default_drive() -> Drive<f64> {
    Drive::Rear
}
fn default_road_load() -> [f64; 3] {
    [0.0, 0.0, 0.35]
}
fn default_step() -> f64 {
    0.02
}
fn default_batch() -> usize {
    SolverOptions::default().batch_size
}
fn default_log_every() -> u64 {
    SolverOptions::default().log_every
}

/// A configuration problem, located in a file when possible.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of byte offset `at`.
fn line_of(text: &str, at: usize) -> usize {
    text[..at.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key` inside table `table` (`""` for the top level), or of the
/// table header when `key` is absent.
pub fn locate(text: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = h.trim().trim_start_matches('[').trim().to_string();
            if key.is_none() && current == table {
                return Some(i + 1);
            }
            continue;
        }
        let Some(k) = key else { continue };
        if current != table {
            continue;
        }
        if let Some(rest) = line.strip_prefix(k) {
            let rest = rest.trim_start();
            if rest.starts_with('=') || rest.starts_with('.') {
                return Some(i + 1);
            }
        }
    }
    // dotted or inline forms at the top level, such as `vehicle.mu_rear = …`
    let dotted = match key {
        Some(k) if !table.is_empty() => format!("{table}.{k}"),
        _ => return None,
    };
    text.lines().position(|l| l.trim_start().starts_with(&dotted)).map(|i| i + 1)
}

/// Parses TOML into `T`, reporting the failing line.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })
}

impl ProjectConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = parse_toml(text, path)?;
        cfg.validate(text, path)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Range and consistency checks that do not need other files.
    fn validate(&self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let err = |table: &str, key: Option<&str>, message: String| ConfigError {
            path: path.to_path_buf(),
            line: locate(text, table, key),
            message,
        };
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(err("", Some("format_version"), format!("unsupported format_version {}", self.format_version)));
        }
        let s = &self.design_space;
        if let Err(e) = DesignSpace::new(s.x_min, s.x_max, s.y_min, s.y_max) {
            return Err(err("design_space", None, e.to_string()));
        }
        if let Err(e) = AngleScheme::new(self.angles.rect, self.angles.projected) {
            return Err(err("angles", None, e.to_string()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(err("", Some("epsilon"), format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (name, &n) in &self.clusters {
            if n == 0 {
                return Err(err("clusters", Some(name), format!("cluster count for {name} must be at least 1")));
            }
        }
        let o = &self.objective;
        if !(o.l_n > 0.0 && o.l_n_mm > 0.0) {
            return Err(err("objective", None, "l_n and l_n_mm must be positive".into()));
        }
        if let Some(b) = &o.mm_box {
            if !(b.x[0] <= b.x[1] && b.y[0] <= b.y[1]) {
                return Err(err("objective", Some("mm_box"), "mm_box bounds are inverted".into()));
            }
        }
        match (&o.ideal, &self.region) {
            (Some(_), Some(_)) => {
                return Err(err("objective", Some("ideal"), "give either objective.ideal or a [region] drive cycle, not both".into()))
            }
            (None, None) => return Err(err("objective", None, "objective.ideal or a [region] drive cycle is required".into())),
            _ => {}
        }
        let v = &self.vehicle;
        for (key, m) in [("chassis", &v.chassis), ("rider", &v.rider)] {
            if !(m.mass >= 0.0 && m.mass.is_finite()) {
                return Err(err("vehicle", Some(key), format!("{key} mass must be non-negative")));
            }
        }
        if let Some(w) = v.wheelbase {
            if !(w > 0.0) {
                return Err(err("vehicle", Some("wheelbase"), format!("wheelbase must be positive, got {w}")));
            }
        }
        for (key, mu) in [("mu_front", v.mu_front), ("mu_rear", v.mu_rear)] {
            if !(mu > 0.0 && mu <= 1.5) {
                return Err(err("vehicle", Some(key), format!("{key} must lie in (0, 1.5], got {mu}")));
            }
        }
        if !(v.gravity > 0.0) {
            return Err(err("vehicle", Some("gravity"), "gravity must be positive".into()));
        }
        if let Drive::Split { front_share } = v.drive {
            if !(0.0..=1.0).contains(&front_share) {
                return Err(err("vehicle", Some("drive"), format!("front_share must lie in [0, 1], got {front_share}")));
            }
        }
        if let Some(r) = &self.region {
            if !(r.step > 0.0) {
                return Err(err("region", Some("step"), format!("step must be positive, got {}", r.step)));
            }
            if let Some(h) = r.h_max {
                if !(h > r.step) {
                    return Err(err("region", Some("h_max"), format!("h_max must exceed the step, got {h}")));
                }
            }
        }
        let sv = &self.solver;
        if !(sv.gap_tol >= 0.0) {
            return Err(err("solver", Some("gap_tol"), "gap_tol must be non-negative".into()));
        }
        if let Some(g) = sv.gap_limit {
            if !(g >= sv.gap_tol) {
                return Err(err("solver", Some("gap_limit"), "gap_limit must be at least gap_tol".into()));
            }
        }
        if let Some(t) = sv.time_limit_s {
            if !(t > 0.0 && t.is_finite()) {
                return Err(err("solver", Some("time_limit_s"), "time_limit_s must be positive".into()));
            }
        }
        if sv.batch_size == 0 {
            return Err(err("solver", Some("batch_size"), "batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> AngleScheme {
        AngleScheme::new(self.angles.rect, self.angles.projected).expect("validated on load")
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            gap_tol: s.gap_tol,
            gap_limit: s.gap_limit,
            time_limit: s.time_limit_s.map(std::time::Duration::from_secs_f64),
            node_limit: s.node_limit,
            threads: s.threads,
            batch_size: s.batch_size,
            log_every: s.log_every,
        }
    }

    /// Model options for a given ideal CoG.
    pub fn build_options(&self, ideal: [f64; 2]) -> BuildOptions {
        BuildOptions {
            scheme: self.scheme(),
            space: self.design_space,
            clusters: self.clusters.clone(),
            epsilon: self.epsilon,
            objective: ObjectiveSpec {
                ideal,
                l_n: self.objective.l_n,
                l_n_mm: self.objective.l_n_mm,
                chassis: self.vehicle.chassis,
                rider: self.vehicle.rider,
                mm_box: self.objective.mm_box,
            },
        }
    }
}

/// A loaded configuration together with the files it references.
#[derive(Clone, Debug)]
pub struct Project {
    pub path: PathBuf,
    pub config: ProjectConfig,
    pub topology: Topology,
    pub cycle: Option<DriveCycle<f64>>,
}

impl Project {
    /// Reads and cross-checks a configuration and everything it names.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError { path: path.to_path_buf(), line: None, message: e.to_string() })?;
        Self::from_text(&text, path)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config = ProjectConfig::from_toml(text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let err = |table: &str, key: Option<&str>, message: String| ConfigError { path: path.to_path_buf(), line: locate(text, table, key), message };

        let topo_path = base.join(&config.topology);
        let topo_text = std::fs::read_to_string(&topo_path)
            .map_err(|e| err("", Some("topology"), format!("cannot read topology {}: {e}", topo_path.display())))?;
        let topology: Topology = parse_toml(&topo_text, &topo_path)?;
        topology.validate().map_err(|e| ConfigError { path: topo_path.clone(), line: None, message: e.to_string() })?;

        for (name, &n_com) in &config.clusters {
            let Some(spec) = topology.existing().find(|e| &e.name == name && e.is_subsystem()) else {
                return Err(err("clusters", Some(name), format!("{name} is not an existing subsystem of the topology")));
            };
            let n_sub = spec.module_count();
            if n_com > n_sub {
                return Err(err("clusters", Some(name), format!("N_com ≤ N_sub violated for {name}: {n_com} clusters but only {n_sub} modules")));
            }
        }
        if topology.mounted_motor().is_some() && topology.rear_wheel().is_none() {
            return Err(err("", Some("topology"), "a frame-mounted motor needs a fixed rear wheel".into()));
        }

        let cycle = match &config.region {
            Some(r) => {
                let p = base.join(&r.cycle);
                let file = std::fs::File::open(&p).map_err(|e| err("region", Some("cycle"), format!("cannot read drive cycle {}: {e}", p.display())))?;
                let cycle = DriveCycle::from_csv(file).map_err(|e| ConfigError { path: p.clone(), line: None, message: e.to_string() })?;
                Some(cycle)
            }
            None => None,
        };
        let project = Self { path: path.to_path_buf(), config, topology, cycle };
        if project.config.region.is_some() {
            project.wheelbase().map_err(|m| err("vehicle", None, m))?;
        }
        Ok(project)
    }

    /// Replaces the cluster count of one subsystem, with the same checks as
    /// the configuration file.
    pub fn set_clusters(&mut self, name: &str, n_com: usize) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError { path: self.path.clone(), line: None, message };
        let Some(spec) = self.topology.existing().find(|e| e.name == name && e.is_subsystem()) else {
            return Err(err(format!("{name} is not an existing subsystem of the topology")));
        };
        let n_sub = spec.module_count();
        if n_com == 0 || n_com > n_sub {
            return Err(err(format!("N_com ≤ N_sub violated for {name}: {n_com} clusters but only {n_sub} modules")));
        }
        self.config.clusters.insert(name.to_string(), n_com);
        Ok(())
    }

    /// Directory the configuration lives in.
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir().join(&self.config.output_dir)
    }

    fn wheels(&self) -> Vec<[f64; 2]> {
        let mut w: Vec<[f64; 2]> = self
            .topology
            .existing()
            .filter(|e| e.kind == crate::model::ElementKind::Wl)
            .filter_map(|e| e.fixed)
            .collect();
        w.sort_by(|a, b| a[0].total_cmp(&b[0]));
        w
    }

    /// Configured wheelbase, or the spacing of the two fixed wheels.
    pub fn wheelbase(&self) -> Result<f64, String> {
        let w = self.wheels();
        match (self.config.vehicle.wheelbase, w.len()) {
            (Some(l), _) => Ok(l),
            (None, 2) => Ok(w[1][0] - w[0][0]),
            (None, n) => Err(format!("vehicle.wheelbase is required when the topology has {n} fixed wheels instead of 2")),
        }
    }

    /// Ground contact of the rear wheel: origin of the `(b, h)` frame.
    pub fn rear_contact_x(&self) -> f64 {
        self.wheels().first().map_or(0.0, |w| w[0])
    }

    /// Vehicle data for the tyre-force analysis.
    pub fn vehicle_params(&self) -> Result<VehicleParams<f64>, String> {
        let v = &self.config.vehicle;
        Ok(VehicleParams {
            wheelbase: self.wheelbase()?,
            mass: v.chassis.mass + v.rider.mass + self.topology.element_mass(),
            mu_front: v.mu_front,
            mu_rear: v.mu_rear,
            gravity: v.gravity,
            drive: v.drive,
            road_load: v.road_load,
        })
    }

    pub fn grid_spec(&self) -> Option<GridSpec<f64>> {
        let r = self.config.region.as_ref()?;
        let l = self.wheelbase().ok()?;
        let h_max = r.h_max.unwrap_or(self.config.design_space.y_max);
        Some(GridSpec::for_wheelbase(l, h_max, r.step))
    }
}
