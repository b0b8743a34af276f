//! Independent feasibility check of a placement.
//!
//! Nothing here touches the MIQP: overlap, containment and contiguity are
//! recomputed with the exact geometry routines, so a placement produced by
//! the solver (or written by hand) is judged on its own.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    normalize_half_turn, penetration_depth, Circle, GeometryError, Point, Rect, Shape,
};
use crate::model::{BuildOptions, ElementKind, ElementSpec, ModelError, ShapeSpec, Topology};

pub const PLACEMENT_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Smallest lateral overlap (m) for two clusters to count as sharing a face.
pub const MIN_SHARED_FACE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedCluster {
    pub n_w: usize,
    pub n_h: usize,
    pub center: [f64; 2],
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedElement {
    pub name: String,
    /// Centre of the element; the mass-weighted centre for subsystems.
    pub center: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<PlacedCluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub format_version: u32,
    pub elements: Vec<PlacedElement>,
    /// Objective value claimed by whoever produced the placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

impl Placement {
    pub fn element(&self, name: &str) -> Option<&PlacedElement> {
        self.elements.iter().find(|e| e.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Bounds,
    Overlap,
    Contiguity,
    Connectivity,
    Mass,
    Orientation,
    Objective,
    MmBox,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Bounds,
        Category::Overlap,
        Category::Contiguity,
        Category::Connectivity,
        Category::Mass,
        Category::Orientation,
        Category::Objective,
        Category::MmBox,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub category: Category,
    pub elements: Vec<String>,
    /// Size of the violation in the category's unit (m, kg or objective).
    pub amount: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub cog: [f64; 2],
    pub cog_term: f64,
    pub motor_term: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub format_version: u32,
    pub feasible: bool,
    pub tolerance: f64,
    pub objective: ObjectiveBreakdown,
    /// Pass/fail per category.
    pub categories: BTreeMap<Category, bool>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn passed(&self, c: Category) -> bool {
        self.categories.get(&c).copied().unwrap_or(true)
    }
}

/// Placements the verifier cannot even interpret.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("unsupported placement format_version {0}")]
    UnsupportedVersion(u32),
    #[error("placement lacks element {0}")]
    MissingElement(String),
    #[error("placement lists unknown or absent element {0}")]
    UnknownElement(String),
    #[error("element {0} is listed more than once")]
    DuplicateElement(String),
    #[error("{name}: {reason}")]
    Malformed { name: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One physical shape of the placement.
#[derive(Clone, Debug)]
pub struct PlacedBody {
    pub label: String,
    pub element: String,
    pub kind: ElementKind,
    pub fixed: bool,
    pub mass: f64,
    pub shape: Shape<f64>,
}

/// Turns a placement into shapes, rejecting anything structurally broken.
pub fn placed_bodies(topo: &Topology, placement: &Placement) -> Result<Vec<PlacedBody>, VerifyError> {
    if placement.format_version != PLACEMENT_FORMAT_VERSION {
        return Err(VerifyError::UnsupportedVersion(placement.format_version));
    }
    topo.validate()?;
    let mut seen = BTreeMap::new();
    for p in &placement.elements {
        if seen.insert(p.name.as_str(), ()).is_some() {
            return Err(VerifyError::DuplicateElement(p.name.clone()));
        }
        if topo.existing().all(|e| e.name != p.name) {
            return Err(VerifyError::UnknownElement(p.name.clone()));
        }
    }
    let mut out = Vec::new();
    for spec in topo.existing() {
        let p = placement.element(&spec.name).ok_or_else(|| VerifyError::MissingElement(spec.name.clone()))?;
        let bad = |reason: &str| VerifyError::Malformed { name: spec.name.clone(), reason: reason.to_string() };
        if !p.center.iter().all(|c| c.is_finite()) {
            return Err(bad("centre must be finite"));
        }
        match &spec.shape {
            ShapeSpec::Modules(m) => {
                if p.clusters.is_empty() {
                    return Err(bad("subsystem needs at least one cluster"));
                }
                let per = spec.mass / m.count as f64;
                for (i, c) in p.clusters.iter().enumerate() {
                    if c.n_w == 0 || c.n_h == 0 {
                        return Err(bad("cluster grids need at least one row and column"));
                    }
                    if !(c.center.iter().all(|v| v.is_finite()) && c.angle.is_finite()) {
                        return Err(bad("cluster centre and angle must be finite"));
                    }
                    let rect = Rect::new(
                        c.n_w as f64 * m.width,
                        c.n_h as f64 * m.height,
                        Point::new(c.center[0], c.center[1]),
                        normalize_half_turn(c.angle),
                    )?;
                    out.push(PlacedBody {
                        label: format!("{}_c{}", spec.name, i + 1),
                        element: spec.name.clone(),
                        kind: spec.kind,
                        fixed: false,
                        mass: (c.n_w * c.n_h) as f64 * per,
                        shape: Shape::Rect(rect),
                    });
                }
            }
            ShapeSpec::Rect { width, height } => {
                if !p.clusters.is_empty() {
                    return Err(bad("components have no clusters"));
                }
                let angle = p.angle.or(spec.angle).unwrap_or(0.0);
                if !angle.is_finite() {
                    return Err(bad("angle must be finite"));
                }
                let rect = Rect::new(*width, *height, Point::new(p.center[0], p.center[1]), normalize_half_turn(angle))?;
                out.push(body(spec, Shape::Rect(rect)));
            }
            ShapeSpec::Circle { radius } => {
                if !p.clusters.is_empty() {
                    return Err(bad("components have no clusters"));
                }
                out.push(body(spec, Shape::Circle(Circle::at(*radius, p.center[0], p.center[1]))));
            }
        }
    }
    Ok(out)
}

fn body(spec: &ElementSpec, shape: Shape<f64>) -> PlacedBody {
    PlacedBody {
        label: spec.name.clone(),
        element: spec.name.clone(),
        kind: spec.kind,
        fixed: spec.fixed.is_some(),
        mass: spec.mass,
        shape,
    }
}

/// Objective of a placement, computed from element masses and centres.
pub fn objective_of(topo: &Topology, opts: &BuildOptions, placement: &Placement) -> Result<ObjectiveBreakdown, VerifyError> {
    let bodies = placed_bodies(topo, placement)?;
    Ok(objective_from_bodies(topo, opts, &bodies)?)
}

fn objective_from_bodies(topo: &Topology, opts: &BuildOptions, bodies: &[PlacedBody]) -> Result<ObjectiveBreakdown, ModelError> {
    let o = &opts.objective;
    let mut m = o.chassis.mass + o.rider.mass;
    let mut sx = o.chassis.mass * o.chassis.at[0] + o.rider.mass * o.rider.at[0];
    let mut sy = o.chassis.mass * o.chassis.at[1] + o.rider.mass * o.rider.at[1];
    for b in bodies {
        let c = b.shape.center();
        m += b.mass;
        sx += b.mass * c.x;
        sy += b.mass * c.y;
    }
    if !(m > 0.0) {
        return Err(ModelError::ZeroMass);
    }
    let cog = [sx / m, sy / m];
    let cog_term = ((cog[0] - o.ideal[0]).powi(2) + (cog[1] - o.ideal[1]).powi(2)) / o.l_n;
    let mut motor_term = 0.0;
    if let Some(mm) = bodies.iter().find(|b| b.kind == ElementKind::Mm) {
        let rear = topo.rear_wheel().ok_or(ModelError::MissingRearWheel)?;
        let c = mm.shape.center();
        motor_term = ((c.x - rear[0]).powi(2) + (c.y - rear[1]).powi(2)) / o.l_n_mm;
    }
    Ok(ObjectiveBreakdown { cog, cog_term, motor_term, total: cog_term + motor_term })
}

/// Checks every requirement on a placement with absolute tolerance `tol` (m).
pub fn verify(
    topo: &Topology,
    opts: &BuildOptions,
    placement: &Placement,
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    let bodies = placed_bodies(topo, placement)?;
    let objective = objective_from_bodies(topo, opts, &bodies)?;
    let mut v = Vec::new();
    check_bounds(topo, opts, placement, &bodies, tol, &mut v);
    check_overlap(&bodies, tol, &mut v);
    check_subsystems(topo, opts, placement, tol, &mut v);
    if let Some(claimed) = placement.objective {
        let diff = (claimed - objective.total).abs();
        if diff > 1e-6 * objective.total.abs().max(1.0) {
            v.push(Violation {
                category: Category::Objective,
                elements: Vec::new(),
                amount: diff,
                detail: format!("claimed objective {claimed} but the placement gives {}", objective.total),
            });
        }
    }
    if let (Some(bx), Some(mm)) = (&opts.objective.mm_box, bodies.iter().find(|b| b.kind == ElementKind::Mm)) {
        let c = mm.shape.center();
        let out = (bx.x[0] - c.x).max(c.x - bx.x[1]).max(bx.y[0] - c.y).max(c.y - bx.y[1]);
        if out > tol {
            v.push(Violation {
                category: Category::MmBox,
                elements: vec![mm.label.clone()],
                amount: out,
                detail: format!("motor centre ({}, {}) outside its box", c.x, c.y),
            });
        }
    }
    let categories = Category::ALL.iter().map(|&c| (c, v.iter().all(|x| x.category != c))).collect();
    Ok(VerificationReport {
        format_version: REPORT_FORMAT_VERSION,
        feasible: v.is_empty(),
        tolerance: tol,
        objective,
        categories,
        violations: v,
    })
}

fn check_bounds(
    topo: &Topology,
    opts: &BuildOptions,
    placement: &Placement,
    bodies: &[PlacedBody],
    tol: f64,
    v: &mut Vec<Violation>,
) {
    let scheme = opts.scheme;
    for b in bodies {
        if b.fixed {
            continue;
        }
        let out = opts.space.protrusion(&b.shape);
        if out > tol {
            v.push(Violation {
                category: Category::Bounds,
                elements: vec![b.label.clone()],
                amount: out,
                detail: format!("{} sticks out of the design space by {out:.3e} m", b.label),
            });
        }
        if let Shape::Rect(r) = &b.shape {
            if scheme.rect_angle_index(r.angle_deg).is_none() {
                v.push(Violation {
                    category: Category::Bounds,
                    elements: vec![b.label.clone()],
                    amount: 0.0,
                    detail: format!("{} uses angle {} outside the discretized set", b.label, r.angle_deg),
                });
            }
        }
    }
    for spec in topo.existing() {
        let Some(p) = placement.element(&spec.name) else { continue };
        if let Some(fixed) = spec.fixed {
            let d = ((p.center[0] - fixed[0]).powi(2) + (p.center[1] - fixed[1]).powi(2)).sqrt();
            if d > tol {
                v.push(Violation {
                    category: Category::Bounds,
                    elements: vec![spec.name.clone()],
                    amount: d,
                    detail: format!("fixed element {} moved by {d:.3e} m", spec.name),
                });
            }
        }
        if let (Some(want), Some(got)) = (spec.angle, p.angle) {
            if (normalize_half_turn(got) - want).abs() > 1e-9 {
                v.push(Violation {
                    category: Category::Bounds,
                    elements: vec![spec.name.clone()],
                    amount: 0.0,
                    detail: format!("{} must be mounted at {want}°, placed at {got}°", spec.name),
                });
            }
        }
    }
}

fn check_overlap(bodies: &[PlacedBody], tol: f64, v: &mut Vec<Violation>) {
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            if a.fixed && b.fixed {
                continue;
            }
            let depth = penetration_depth(&a.shape, &b.shape);
            if depth > tol {
                v.push(Violation {
                    category: Category::Overlap,
                    elements: vec![a.label.clone(), b.label.clone()],
                    amount: depth,
                    detail: format!("{} and {} overlap by {depth:.3e} m", a.label, b.label),
                });
            }
        }
    }
}

/// Whether two cluster rectangles share part of a face: the gap between
/// facing sides lies in `[-tol, epsilon]` and the sides overlap laterally.
pub fn clusters_abut(d: &Rect<f64>, z: &Rect<f64>, epsilon: f64, tol: f64) -> bool {
    let (u1, u2) = d.axes();
    let v = z.center.sub(d.center);
    for (axis, across) in [(u1, u2), (u2, u1)] {
        let half_d_along = d.half_extent_along(axis);
        let half_z_along = z.half_extent_along(axis);
        let gap = v.dot(axis).abs() - half_d_along - half_z_along;
        let lateral = d.half_extent_along(across) + z.half_extent_along(across) - v.dot(across).abs();
        if gap >= -tol && gap <= epsilon + tol && lateral > MIN_SHARED_FACE {
            return true;
        }
    }
    false
}

fn check_subsystems(
    topo: &Topology,
    opts: &BuildOptions,
    placement: &Placement,
    tol: f64,
    v: &mut Vec<Violation>,
) {
    for spec in topo.existing() {
        let ShapeSpec::Modules(m) = &spec.shape else { continue };
        let Some(p) = placement.element(&spec.name) else { continue };
        let modules: usize = p.clusters.iter().map(|c| c.n_w * c.n_h).sum();
        if modules != m.count {
            let per = spec.mass / m.count as f64;
            v.push(Violation {
                category: Category::Mass,
                elements: vec![spec.name.clone()],
                amount: (modules as f64 - m.count as f64).abs() * per,
                detail: format!("{} places {modules} of {} modules", spec.name, m.count),
            });
        }
        let want = opts.cluster_count(&spec.name);
        if p.clusters.len() != want {
            v.push(Violation {
                category: Category::Mass,
                elements: vec![spec.name.clone()],
                amount: 0.0,
                detail: format!("{} has {} clusters, {want} configured", spec.name, p.clusters.len()),
            });
        }
        let rects: Vec<Rect<f64>> = p
            .clusters
            .iter()
            .filter_map(|c| {
                Rect::new(
                    c.n_w as f64 * m.width,
                    c.n_h as f64 * m.height,
                    Point::new(c.center[0], c.center[1]),
                    normalize_half_turn(c.angle),
                )
                .ok()
            })
            .collect();
        let label = |i: usize| format!("{}_c{}", spec.name, i + 1);
        let n = rects.len();
        let mut adjacent = vec![vec![false; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let diff = normalize_half_turn(rects[i].angle_deg - rects[j].angle_deg);
                let aligned = [0.0, 90.0, 180.0].iter().any(|&a| (diff - a).abs() < 1e-9);
                if !aligned {
                    v.push(Violation {
                        category: Category::Orientation,
                        elements: vec![label(i), label(j)],
                        amount: diff.min(180.0 - diff),
                        detail: format!("{} and {} are neither parallel nor perpendicular", label(i), label(j)),
                    });
                }
                let touch = clusters_abut(&rects[i], &rects[j], opts.epsilon, tol);
                adjacent[i][j] = touch;
                adjacent[j][i] = touch;
            }
        }
        if n < 2 {
            continue;
        }
        for i in 0..n {
            if !adjacent[i].iter().any(|&a| a) {
                v.push(Violation {
                    category: Category::Contiguity,
                    elements: vec![label(i)],
                    amount: 0.0,
                    detail: format!("{} shares no face with another cluster", label(i)),
                });
            }
        }
        let mut reached = vec![false; n];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if adjacent[i][j] && !reached[j] {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        if reached.iter().any(|&r| !r) {
            let missing: Vec<String> = (0..n).filter(|&i| !reached[i]).map(label).collect();
            v.push(Violation {
                category: Category::Connectivity,
                elements: missing.clone(),
                amount: missing.len() as f64,
                detail: format!("{} is split into disconnected groups", spec.name),
            });
        }
    }
}

/// Cuts one cluster of `element` into two abutting clusters across its
/// module grid. Every module keeps its position, so the footprint, mass
/// distribution and objective do not change. Returns every distinct cut.
pub fn split_cluster(placement: &Placement, element: &str, module: &crate::model::ModuleSpec) -> Vec<Placement> {
    let Some(ie) = placement.elements.iter().position(|e| e.name == element) else { return Vec::new() };
    let mut out = Vec::new();
    for (ic, c) in placement.elements[ie].clusters.iter().enumerate() {
        let (s, co) = c.angle.to_radians().sin_cos();
        let (u1, u2) = ([co, s], [-s, co]);
        // (cells along the cut axis, module size along it, axis vector, is width)
        for (n, size, u, width) in [(c.n_w, module.width, u1, true), (c.n_h, module.height, u2, false)] {
            for a in 1..n {
                let total = n as f64 * size;
                let off = |first: usize, len: usize| -0.5 * total + (first as f64 + 0.5 * len as f64) * size;
                let part = |first: usize, len: usize| {
                    let d = off(first, len);
                    let (n_w, n_h) = if width { (len, c.n_h) } else { (c.n_w, len) };
                    PlacedCluster { n_w, n_h, center: [c.center[0] + d * u[0], c.center[1] + d * u[1]], angle: c.angle }
                };
                let mut p = placement.clone();
                let clusters = &mut p.elements[ie].clusters;
                clusters[ic] = part(0, a);
                clusters.insert(ic + 1, part(a, n - a));
                out.push(p);
            }
        }
    }
    out
}
