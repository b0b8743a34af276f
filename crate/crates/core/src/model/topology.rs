//! Powertrain topology: which elements exist, their shapes, masses and
//! whether they are fixed in place.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::geometry::DesignSpace;

/// Current on-disk version of topology files.
pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    /// Frame-mounted motor.
    #[serde(rename = "MM")]
    Mm,
    /// Hub motor, inside a wheel.
    #[serde(rename = "HM")]
    Hm,
    #[serde(rename = "INV")]
    Inv,
    /// Battery pack.
    #[serde(rename = "BP")]
    Bp,
    /// Gearbox and transmission.
    #[serde(rename = "GT")]
    Gt,
    #[serde(rename = "WL")]
    Wl,
}

impl ElementKind {
    pub fn tag(self) -> &'static str {
        match self {
            ElementKind::Mm => "MM",
            ElementKind::Hm => "HM",
            ElementKind::Inv => "INV",
            ElementKind::Bp => "BP",
            ElementKind::Gt => "GT",
            ElementKind::Wl => "WL",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Sub-module grid of a subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub count: usize,
    pub width: f64,
    pub height: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Rect { width: f64, height: f64 },
    Circle { radius: f64 },
    Modules(ModuleSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub name: String,
    pub kind: ElementKind,
    #[serde(default = "default_true")]
    pub exists: bool,
    pub mass: f64,
    pub shape: ShapeSpec,
    /// Fixed centre; fixed elements are constants, not decisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<[f64; 2]>,
    /// Restricts a rectangle to one mounting angle (degrees).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl ElementSpec {
    pub fn modules(&self) -> Option<&ModuleSpec> {
        match &self.shape {
            ShapeSpec::Modules(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_subsystem(&self) -> bool {
        self.modules().is_some()
    }

    /// Module count `N_sub`; zero for components.
    pub fn module_count(&self) -> usize {
        self.modules().map_or(0, |m| m.count)
    }

    /// Mass carried by one module. The subsystem mass is spread evenly over
    /// its modules so cluster masses always add up to it.
    pub fn mass_per_module(&self) -> Option<f64> {
        self.modules().map(|m| self.mass / m.count as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub format_version: u32,
    pub name: String,
    /// Component data invented for demonstration rather than measured.
    #[serde(default)]
    pub synthetic: bool,
    #[serde(rename = "element", default)]
    pub elements: Vec<ElementSpec>,
}

impl Topology {
    /// Elements that are present in the design.
    pub fn existing(&self) -> impl Iterator<Item = &ElementSpec> {
        self.elements.iter().filter(|e| e.exists)
    }

    pub fn element(&self, name: &str) -> Option<&ElementSpec> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Sum of existing element masses.
    pub fn element_mass(&self) -> f64 {
        self.existing().map(|e| e.mass).sum()
    }

    /// The frame-mounted motor, if one exists.
    pub fn mounted_motor(&self) -> Option<&ElementSpec> {
        self.existing().find(|e| e.kind == ElementKind::Mm)
    }

    /// Centre of the rear wheel: the fixed wheel with the smallest x.
    pub fn rear_wheel(&self) -> Option<[f64; 2]> {
        self.existing()
            .filter(|e| e.kind == ElementKind::Wl)
            .filter_map(|e| e.fixed)
            .min_by(|a, b| a[0].total_cmp(&b[0]))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != TOPOLOGY_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion { what: "topology", found: self.format_version });
        }
        let mut names = BTreeSet::new();
        for e in &self.elements {
            let bad = |reason: String| ModelError::InvalidElement { name: e.name.clone(), reason };
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(bad("names must be non-empty and use only letters, digits, '_' or '-'".into()));
            }
            if !names.insert(e.name.as_str()) {
                return Err(bad("duplicate element name".into()));
            }
            if !(e.mass.is_finite() && e.mass > 0.0) {
                return Err(bad(format!("mass must be positive, got {}", e.mass)));
            }
            match &e.shape {
                ShapeSpec::Rect { width, height } => {
                    if !(*width > 0.0 && *height > 0.0 && width.is_finite() && height.is_finite()) {
                        return Err(bad("rectangle dimensions must be positive".into()));
                    }
                }
                ShapeSpec::Circle { radius } => {
                    if !(*radius > 0.0 && radius.is_finite()) {
                        return Err(bad("radius must be positive".into()));
                    }
                    if e.angle.is_some() {
                        return Err(bad("circles have no mounting angle".into()));
                    }
                }
                ShapeSpec::Modules(m) => {
                    if m.count == 0 {
                        return Err(bad("a subsystem needs at least one module".into()));
                    }
                    if !(m.width > 0.0 && m.height > 0.0 && m.mass > 0.0) {
                        return Err(bad("module width, height and mass must be positive".into()));
                    }
                    if m.count as f64 * m.mass > e.mass * (1.0 + 1e-9) {
                        return Err(bad(format!(
                            "{} modules of {} kg exceed the subsystem mass {} kg",
                            m.count, m.mass, e.mass
                        )));
                    }
                    if e.fixed.is_some() {
                        return Err(bad("subsystems cannot be fixed".into()));
                    }
                }
            }
            if let Some(a) = e.angle {
                if !(0.0..180.0).contains(&a) {
                    return Err(bad(format!("angle {a} outside [0, 180)")));
                }
            }
            if matches!(e.kind, ElementKind::Wl | ElementKind::Hm) && e.exists && e.fixed.is_none() {
                return Err(bad("wheels and hub motors must have a fixed centre".into()));
            }
        }
        if self.existing().filter(|e| e.kind == ElementKind::Mm).count() > 1 {
            return Err(ModelError::InvalidTopology("at most one frame-mounted motor is supported".into()));
        }
        if self.existing().filter(|e| e.kind == ElementKind::Wl).count() > 0 && self.rear_wheel().is_none() {
            return Err(ModelError::InvalidTopology("wheels must be fixed".into()));
        }
        Ok(())
    }
}

/// One `n_w × n_h` grid of modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arrangement {
    pub n_w: usize,
    pub n_h: usize,
}

impl Arrangement {
    pub fn new(n_w: usize, n_h: usize) -> Self {
        Self { n_w, n_h }
    }

    pub fn modules(&self) -> usize {
        self.n_w * self.n_h
    }

    pub fn width(&self, m: &ModuleSpec) -> f64 {
        self.n_w as f64 * m.width
    }

    pub fn height(&self, m: &ModuleSpec) -> f64 {
        self.n_h as f64 * m.height
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_w, self.n_h)
    }
}

/// All grids of at most `N_sub` modules that fit the design space, ordered by
/// module count and then by column count.
pub fn enumerate_arrangements(spec: &ElementSpec, space: &DesignSpace<f64>) -> Result<Vec<Arrangement>, ModelError> {
    let m = spec.modules().ok_or_else(|| ModelError::InvalidElement {
        name: spec.name.clone(),
        reason: "components have no module arrangements".into(),
    })?;
    let per_module = spec.mass / m.count as f64;
    let mut out = Vec::new();
    for n_b in 1..=m.count {
        for n_w in 1..=n_b {
            if n_b % n_w != 0 {
                continue;
            }
            let a = Arrangement::new(n_w, n_b / n_w);
            let fits = a.width(m) <= space.width() + 1e-12 && a.height(m) <= space.height() + 1e-12;
            let light_enough = a.modules() as f64 * per_module <= spec.mass * (1.0 + 1e-12);
            if fits && light_enough {
                out.push(a);
            }
        }
    }
    Ok(out)
}

/// Module-count tuples `(n_1, …, n_k)` drawn from `counts` that add up to `total`.
/// Returns, per position, which counts occur in at least one tuple.
pub fn feasible_module_splits(counts: &BTreeSet<usize>, parts: usize, total: usize) -> Vec<BTreeSet<usize>> {
    // reachable[p][s]: some p counts sum to s
    let mut reachable = vec![vec![false; total + 1]; parts + 1];
    reachable[0][0] = true;
    for p in 1..=parts {
        for s in 0..=total {
            reachable[p][s] = counts.iter().any(|&c| c <= s && reachable[p - 1][s - c]);
        }
    }
    if !reachable[parts][total] {
        return vec![BTreeSet::new(); parts];
    }
    // Every position is interchangeable, so a count is usable iff the rest
    // of the total can be made from parts - 1 counts.
    let usable: BTreeSet<usize> =
        counts.iter().copied().filter(|&c| c <= total && reachable[parts - 1][total - c]).collect();
    vec![usable; parts]
}
