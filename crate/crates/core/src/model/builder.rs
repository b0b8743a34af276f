//! Assembly of the placement MIQP.
//!
//! Every rectangle separation condition is a projection test along one of the
//! discretized directions: two shapes are apart along `φ` when the centre
//! vector projected on `φ` clears the sum of both half-extents along `φ`. The
//! projection is linear in the centre coordinates and each half-extent is
//! linear in the angle (and arrangement) choices, so a single absolute
//! disjunction per direction encodes the condition. Face normals of all
//! rectangles are always among the directions, which makes the rectangle
//! test exact.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::topology::{
    enumerate_arrangements, feasible_module_splits, Arrangement, ElementKind, ElementSpec, ModuleSpec, ShapeSpec,
    Topology,
};
use super::ModelError;
use crate::geometry::{normalize_half_turn, AngleScheme, DesignSpace};
use crate::linearize::{
    abs_disjunction, and_binary, complete_assignment, expr_times_indicator, size_big_m, Derivation, Formulation,
    LinConstraint, LinExpr, Relation, Trig, VarId, Variable,
};
use crate::verifier::{PlacedCluster, PlacedElement, Placement, PLACEMENT_FORMAT_VERSION};

/// Branching priorities; the solver branches on the highest class first.
pub mod priority {
    pub const ARRANGEMENT: u8 = 4;
    pub const ANGLE: u8 = 3;
    pub const SEPARATION: u8 = 2;
    pub const SIDE: u8 = 1;
    pub const IMPLIED: u8 = 0;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMass {
    pub mass: f64,
    pub at: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Aabb {
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x[0] - tol && p[0] <= self.x[1] + tol && p[1] >= self.y[0] - tol && p[1] <= self.y[1] + tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub ideal: [f64; 2],
    /// Normalization length of the CoG term.
    pub l_n: f64,
    /// Normalization length of the motor-to-rear-wheel term.
    pub l_n_mm: f64,
    pub chassis: PointMass,
    pub rider: PointMass,
    /// Admissible box for the mounted motor centre.
    pub mm_box: Option<Aabb>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub scheme: AngleScheme,
    pub space: DesignSpace<f64>,
    /// Cluster count per subsystem name; subsystems not listed use one.
    pub clusters: BTreeMap<String, usize>,
    /// Contiguity tolerance (m).
    pub epsilon: f64,
    pub objective: ObjectiveSpec,
}

impl BuildOptions {
    pub fn cluster_count(&self, name: &str) -> usize {
        self.clusters.get(name).copied().unwrap_or(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coord {
    Var(VarId),
    Fixed(f64),
}

impl Coord {
    pub fn expr(self) -> LinExpr {
        match self {
            Coord::Var(v) => LinExpr::var(v),
            Coord::Fixed(c) => LinExpr::constant(c),
        }
    }

    pub fn value(self, values: &[f64]) -> f64 {
        match self {
            Coord::Var(v) => values[v.index()],
            Coord::Fixed(c) => c,
        }
    }

    pub fn var(self) -> Option<VarId> {
        match self {
            Coord::Var(v) => Some(v),
            Coord::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AngleChoice {
    Fixed(f64),
    /// One binary per scheme angle.
    Free(Vec<VarId>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum BodyGeometry {
    Circle {
        radius: f64,
    },
    Rect {
        width: f64,
        height: f64,
        angle: AngleChoice,
    },
    Cluster {
        module: ModuleSpec,
        arrangements: Vec<Arrangement>,
        selection: Vec<VarId>,
        angles: Vec<VarId>,
        width: VarId,
        height: VarId,
        /// `width · δ_k` per scheme angle.
        width_at: Vec<VarId>,
        /// `height · δ_k` per scheme angle.
        height_at: Vec<VarId>,
    },
}

/// One placed shape: a component or one cluster of a subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyLayout {
    pub label: String,
    /// Index into the topology's element list.
    pub element: usize,
    pub cluster: Option<usize>,
    pub mass: f64,
    pub x: Coord,
    pub y: Coord,
    pub geometry: BodyGeometry,
}

impl BodyLayout {
    pub fn is_fixed(&self) -> bool {
        matches!((self.x, self.y), (Coord::Fixed(_), Coord::Fixed(_)))
    }

    fn is_circle(&self) -> bool {
        matches!(self.geometry, BodyGeometry::Circle { .. })
    }
}

/// Separation disjunctions of one body pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLayout {
    pub a: usize,
    pub b: usize,
    pub directions: Vec<f64>,
    pub success: Vec<VarId>,
    pub sign: Vec<VarId>,
}

/// Contiguity variables of two clusters `d` (earlier) and `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactLayout {
    pub d: usize,
    pub z: usize,
    pub side: VarId,
    pub orientation: VarId,
    /// Present when the contact is optional (chain alternative).
    pub chain: Option<VarId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsystemLayout {
    pub element: usize,
    pub bodies: Vec<usize>,
    pub module_mass: f64,
    pub contacts: Vec<ContactLayout>,
}

/// Maps model variables back to the physical design.
#[derive(Clone, Debug)]
pub struct Layout {
    pub scheme: AngleScheme,
    pub epsilon: f64,
    pub bodies: Vec<BodyLayout>,
    pub pairs: Vec<PairLayout>,
    pub subsystems: Vec<SubsystemLayout>,
    pub cog: [VarId; 2],
    pub total_mass: f64,
    pub mm: Option<usize>,
    pub rear_wheel: Option<[f64; 2]>,
    pub objective: ObjectiveSpec,
}

/// `Σ q_ij x_i x_j + linear`, with each unordered pair listed once (`i ≤ j`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadObjective {
    pub quadratic: Vec<(VarId, VarId, f64)>,
    pub linear: LinExpr,
}

impl QuadObjective {
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.quadratic.iter().map(|&(i, j, q)| q * values[i.index()] * values[j.index()]).sum::<f64>()
            + self.linear.evaluate(values)
    }
}

#[derive(Clone, Debug)]
pub struct MiqpModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<LinConstraint>,
    pub objective: QuadObjective,
    pub layout: Layout,
}

impl MiqpModel {
    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.is_binary()).count()
    }

    /// Largest constraint violation and the constraint's name.
    pub fn worst_violation(&self, values: &[f64]) -> Option<(f64, &str)> {
        let mut worst: Option<(f64, &str)> = None;
        for c in &self.constraints {
            let v = c.violation(values);
            if worst.is_none_or(|(w, _)| v > w) {
                worst = Some((v, &c.name));
            }
        }
        worst
    }

    /// Bound violations of an assignment (binaries must also be integral).
    pub fn bound_violation(&self, values: &[f64], int_tol: f64) -> Option<(f64, &str)> {
        let mut worst: Option<(f64, &str)> = None;
        for (var, &x) in self.vars.iter().zip(values) {
            let mut v = (var.lower - x).max(x - var.upper).max(0.0);
            if var.is_binary() {
                let frac = (x - x.round()).abs();
                if frac > int_tol {
                    v = v.max(frac);
                }
            }
            if v > 0.0 && worst.is_none_or(|(w, _)| v > w) {
                worst = Some((v, &var.name));
            }
        }
        worst
    }

    /// Reads a placement out of a full assignment.
    pub fn placement(&self, topology: &Topology, values: &[f64]) -> Placement {
        let angles = self.layout.scheme.rect_angles::<f64>();
        let mut elements = Vec::new();
        for (idx, spec) in topology.elements.iter().enumerate().filter(|(_, e)| e.exists) {
            let bodies: Vec<&BodyLayout> = self.layout.bodies.iter().filter(|b| b.element == idx).collect();
            if spec.is_subsystem() {
                let mut clusters = Vec::new();
                let (mut mx, mut my, mut m) = (0.0, 0.0, 0.0);
                for b in bodies {
                    if let BodyGeometry::Cluster { arrangements, selection, angles: avars, module, .. } = &b.geometry {
                        let s = argmax(selection, values);
                        let k = argmax(avars, values);
                        let center = [b.x.value(values), b.y.value(values)];
                        let mass = arrangements[s].modules() as f64 * spec.mass / module.count as f64;
                        mx += mass * center[0];
                        my += mass * center[1];
                        m += mass;
                        clusters.push(PlacedCluster {
                            n_w: arrangements[s].n_w,
                            n_h: arrangements[s].n_h,
                            center,
                            angle: angles[k],
                        });
                    }
                }
                elements.push(PlacedElement { name: spec.name.clone(), center: [mx / m, my / m], angle: None, clusters });
            } else if let Some(b) = bodies.first() {
                let angle = match &b.geometry {
                    BodyGeometry::Rect { angle: AngleChoice::Fixed(a), .. } => Some(*a),
                    BodyGeometry::Rect { angle: AngleChoice::Free(vars), .. } => Some(angles[argmax(vars, values)]),
                    _ => None,
                };
                elements.push(PlacedElement {
                    name: spec.name.clone(),
                    center: [b.x.value(values), b.y.value(values)],
                    angle,
                    clusters: Vec::new(),
                });
            }
        }
        Placement { format_version: PLACEMENT_FORMAT_VERSION, elements, objective: None }
    }

    /// Lifts a placement to a full assignment. Clusters of a subsystem are
    /// tried in every order; the first ordering that satisfies all
    /// constraints within `tol` wins. Otherwise the identity ordering is
    /// returned together with the name of its most violated constraint.
    pub fn lift(&self, topology: &Topology, placement: &Placement, tol: f64) -> Result<LiftOutcome, String> {
        let orders: Vec<Vec<Vec<usize>>> = self
            .layout
            .subsystems
            .iter()
            .map(|s| permutations(s.bodies.len()))
            .collect();
        let mut counters = vec![0usize; orders.len()];
        let mut first: Option<Vec<f64>> = None;
        let limit = 50_000;
        for _ in 0..limit {
            let choice: Vec<&Vec<usize>> = counters.iter().zip(&orders).map(|(&c, o)| &o[c]).collect();
            let values = self.assignment(topology, placement, &choice)?;
            let bad = self.worst_violation(&values).filter(|&(v, _)| v > tol).is_some()
                || self.bound_violation(&values, tol).is_some();
            if !bad {
                return Ok(LiftOutcome { values, violated: None });
            }
            if first.is_none() {
                first = Some(values);
            }
            // odometer over the per-subsystem permutation lists
            let mut i = 0;
            loop {
                if i == counters.len() {
                    let values = first.expect("at least one ordering tried");
                    let violated = self
                        .worst_violation(&values)
                        .filter(|&(v, _)| v > tol)
                        .or_else(|| self.bound_violation(&values, tol))
                        .map(|(v, n)| (n.to_string(), v));
                    return Ok(LiftOutcome { values, violated });
                }
                counters[i] += 1;
                if counters[i] < orders[i].len() {
                    break;
                }
                counters[i] = 0;
                i += 1;
            }
        }
        let values = first.expect("at least one ordering tried");
        let violated = self.worst_violation(&values).map(|(v, n)| (n.to_string(), v));
        Ok(LiftOutcome { values, violated })
    }

    fn assignment(&self, topology: &Topology, placement: &Placement, order: &[&Vec<usize>]) -> Result<Vec<f64>, String> {
        let scheme = &self.layout.scheme;
        let mut values = vec![0.0; self.vars.len()];
        let set = |values: &mut Vec<f64>, c: Coord, v: f64| {
            if let Coord::Var(id) = c {
                values[id.index()] = v;
            }
        };
        for (sub_idx, sub) in self.layout.subsystems.iter().enumerate() {
            let spec = &topology.elements[sub.element];
            let placed = placement
                .elements
                .iter()
                .find(|e| e.name == spec.name)
                .ok_or_else(|| format!("placement lacks element {}", spec.name))?;
            if placed.clusters.len() != sub.bodies.len() {
                return Err(format!(
                    "{} has {} clusters in the placement but {} in the model",
                    spec.name,
                    placed.clusters.len(),
                    sub.bodies.len()
                ));
            }
            for (slot, &src) in order[sub_idx].iter().enumerate() {
                let pc = &placed.clusters[src];
                let body = &self.layout.bodies[sub.bodies[slot]];
                let BodyGeometry::Cluster { arrangements, selection, angles, module, .. } = &body.geometry else {
                    unreachable!("subsystem bodies are clusters")
                };
                let square = (module.width - module.height).abs() < 1e-12;
                let direct = arrangements.iter().position(|a| a.n_w == pc.n_w && a.n_h == pc.n_h);
                let (s, angle) = match direct {
                    Some(s) => (s, pc.angle),
                    None if square => {
                        let s = arrangements
                            .iter()
                            .position(|a| a.n_w == pc.n_h && a.n_h == pc.n_w)
                            .ok_or_else(|| format!("arrangement {}x{} not available", pc.n_w, pc.n_h))?;
                        (s, normalize_half_turn(pc.angle + 90.0))
                    }
                    None => return Err(format!("arrangement {}x{} not available", pc.n_w, pc.n_h)),
                };
                let k = scheme
                    .rect_angle_index(angle)
                    .ok_or_else(|| format!("angle {} is not a discretized angle", pc.angle))?;
                values[selection[s].index()] = 1.0;
                values[angles[k].index()] = 1.0;
                set(&mut values, body.x, pc.center[0]);
                set(&mut values, body.y, pc.center[1]);
            }
        }
        for body in self.layout.bodies.iter().filter(|b| b.cluster.is_none()) {
            let spec = &topology.elements[body.element];
            let placed = placement
                .elements
                .iter()
                .find(|e| e.name == spec.name)
                .ok_or_else(|| format!("placement lacks element {}", spec.name))?;
            set(&mut values, body.x, placed.center[0]);
            set(&mut values, body.y, placed.center[1]);
            if let BodyGeometry::Rect { angle: AngleChoice::Free(vars), .. } = &body.geometry {
                let a = placed.angle.ok_or_else(|| format!("{} needs an angle", spec.name))?;
                let k = scheme.rect_angle_index(a).ok_or_else(|| format!("angle {a} is not a discretized angle"))?;
                values[vars[k].index()] = 1.0;
            }
        }
        complete_assignment(&self.vars, &mut values);
        Ok(values)
    }
}

/// Result of [`MiqpModel::lift`].
#[derive(Clone, Debug)]
pub struct LiftOutcome {
    pub values: Vec<f64>,
    /// Most violated constraint and its violation, when no ordering fits.
    pub violated: Option<(String, f64)>,
}

fn argmax(vars: &[VarId], values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vars.iter().enumerate() {
        if values[v.index()] > values[vars[best].index()] {
            best = i;
        }
    }
    best
}

/// All orderings of `0..n` in lexicographic order, identity first.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// `|cos|` and `|sin|` of an angle difference with exact zeros.
fn abs_cos_sin(delta_deg: f64) -> (f64, f64) {
    (Trig::Cos.eval(delta_deg).abs(), Trig::Sin.eval(delta_deg).abs())
}

/// Half of a `w × h` rectangle's projection on direction `phi` at angle `theta`.
fn support(w: f64, h: f64, theta: f64, phi: f64) -> f64 {
    let (c, s) = abs_cos_sin(theta - phi);
    w / 2.0 * c + h / 2.0 * s
}

/// Centre-vector projection `(c_b - c_a) · (cos φ, sin φ)`.
fn projection(a: &BodyLayout, b: &BodyLayout, phi: f64) -> LinExpr {
    let dx = b.x.expr() - a.x.expr();
    let dy = b.y.expr() - a.y.expr();
    dx.scaled(Trig::Cos.eval(phi)) + dy.scaled(Trig::Sin.eval(phi))
}

fn label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

fn deg_tag(phi: f64) -> String {
    let r = (phi * 1e6).round() / 1e6;
    format!("{r}").replace('.', "p")
}

fn direction_key(phi: f64) -> i64 {
    (normalize_half_turn(phi) * 1e6).round() as i64
}

/// Distinct directions in `[0, 180)`, sorted.
fn distinct_directions(raw: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut keys: BTreeMap<i64, f64> = BTreeMap::new();
    for a in raw {
        let n = normalize_half_turn(a);
        let key = direction_key(n);
        keys.entry(key).or_insert(if key == 180_000_000 { 0.0 } else { n });
    }
    let mut out: Vec<f64> = keys.into_values().collect();
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

struct Builder<'a> {
    topo: &'a Topology,
    opts: &'a BuildOptions,
    angles: Vec<f64>,
    f: Formulation,
    bodies: Vec<BodyLayout>,
    pairs: Vec<PairLayout>,
    subsystems: Vec<SubsystemLayout>,
    extents: HashMap<(usize, i64), LinExpr>,
}

/// Assembles the placement MIQP for a topology.
pub fn assemble(topo: &Topology, opts: &BuildOptions) -> Result<MiqpModel, ModelError> {
    topo.validate()?;
    validate_options(topo, opts)?;
    let mut b = Builder {
        topo,
        opts,
        angles: opts.scheme.rect_angles(),
        f: Formulation::new(),
        bodies: Vec::new(),
        pairs: Vec::new(),
        subsystems: Vec::new(),
        extents: HashMap::new(),
    };
    for (idx, e) in topo.elements.iter().enumerate().filter(|(_, e)| e.exists) {
        if e.is_subsystem() {
            b.add_subsystem(idx, e)?;
        } else {
            b.add_component(idx, e)?;
        }
    }
    b.add_pairs()?;
    b.finish()
}

fn validate_options(topo: &Topology, opts: &BuildOptions) -> Result<(), ModelError> {
    let o = &opts.objective;
    if !(opts.epsilon.is_finite() && opts.epsilon > 0.0) {
        return Err(ModelError::InvalidOption(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    if !(o.l_n > 0.0 && o.l_n_mm > 0.0) {
        return Err(ModelError::InvalidOption("normalization lengths must be positive".into()));
    }
    if o.chassis.mass < 0.0 || o.rider.mass < 0.0 {
        return Err(ModelError::InvalidOption("chassis and rider masses must be non-negative".into()));
    }
    if let Some(bx) = &o.mm_box {
        if !(bx.x[0] <= bx.x[1] && bx.y[0] <= bx.y[1]) {
            return Err(ModelError::InvalidOption("motor box bounds are inverted".into()));
        }
    }
    for (name, &n_com) in &opts.clusters {
        let spec = topo
            .existing()
            .find(|e| &e.name == name && e.is_subsystem())
            .ok_or_else(|| ModelError::UnknownSubsystem(name.clone()))?;
        let n_sub = spec.module_count();
        if n_com == 0 || n_com > n_sub {
            return Err(ModelError::ClusterCount { name: name.clone(), n_com, n_sub });
        }
    }
    Ok(())
}

impl Builder<'_> {
    fn space(&self) -> &DesignSpace<f64> {
        &self.opts.space
    }

    fn add_position(
        &mut self,
        name: &str,
        half_x: f64,
        half_y: f64,
        kind: ElementKind,
    ) -> Result<(VarId, VarId), ModelError> {
        let s = *self.space();
        let (mut x0, mut x1) = (s.x_min + half_x, s.x_max - half_x);
        let (mut y0, mut y1) = (s.y_min + half_y, s.y_max - half_y);
        if kind == ElementKind::Mm {
            if let Some(bx) = &self.opts.objective.mm_box {
                x0 = x0.max(bx.x[0]);
                x1 = x1.min(bx.x[1]);
                y0 = y0.max(bx.y[0]);
                y1 = y1.min(bx.y[1]);
            }
        }
        if x0 > x1 + 1e-12 || y0 > y1 + 1e-12 {
            return Err(ModelError::DoesNotFit(name.to_string()));
        }
        let x = self.f.add_continuous(format!("{name}_x"), x0, x1.max(x0), Derivation::Primary)?;
        let y = self.f.add_continuous(format!("{name}_y"), y0, y1.max(y0), Derivation::Primary)?;
        Ok((x, y))
    }

    fn add_component(&mut self, idx: usize, e: &ElementSpec) -> Result<(), ModelError> {
        let name = label(&e.name);
        let scheme = self.opts.scheme;
        let fixed_angle = |a: f64| -> Result<f64, ModelError> {
            scheme.rect_angle_index(a).map(|k| scheme.rect_angle::<f64>(k)).ok_or_else(|| {
                ModelError::InvalidElement { name: e.name.clone(), reason: format!("angle {a} is not a discretized angle") }
            })
        };
        let body = if let Some(p) = e.fixed {
            let geometry = match e.shape {
                ShapeSpec::Circle { radius } => BodyGeometry::Circle { radius },
                ShapeSpec::Rect { width, height } => {
                    BodyGeometry::Rect { width, height, angle: AngleChoice::Fixed(fixed_angle(e.angle.unwrap_or(0.0))?) }
                }
                ShapeSpec::Modules(_) => unreachable!("validated"),
            };
            BodyLayout {
                label: name,
                element: idx,
                cluster: None,
                mass: e.mass,
                x: Coord::Fixed(p[0]),
                y: Coord::Fixed(p[1]),
                geometry,
            }
        } else {
            match e.shape {
                ShapeSpec::Circle { radius } => {
                    let (x, y) = self.add_position(&name, radius, radius, e.kind)?;
                    BodyLayout {
                        label: name,
                        element: idx,
                        cluster: None,
                        mass: e.mass,
                        x: Coord::Var(x),
                        y: Coord::Var(y),
                        geometry: BodyGeometry::Circle { radius },
                    }
                }
                ShapeSpec::Rect { width, height } => {
                    let s = *self.space();
                    let options: Vec<(usize, f64)> = match e.angle {
                        Some(a) => {
                            let a = fixed_angle(a)?;
                            vec![(scheme.rect_angle_index(a).unwrap_or(0), a)]
                        }
                        None => self.angles.iter().copied().enumerate().collect(),
                    };
                    let fits: Vec<bool> = options
                        .iter()
                        .map(|&(_, a)| {
                            2.0 * support(width, height, a, 0.0) <= s.width() + 1e-12
                                && 2.0 * support(width, height, a, 90.0) <= s.height() + 1e-12
                        })
                        .collect();
                    if !fits.iter().any(|&f| f) {
                        return Err(ModelError::DoesNotFit(e.name.clone()));
                    }
                    let min_hx = options
                        .iter()
                        .zip(&fits)
                        .filter(|(_, &f)| f)
                        .map(|(&(_, a), _)| support(width, height, a, 0.0))
                        .fold(f64::INFINITY, f64::min);
                    let min_hy = options
                        .iter()
                        .zip(&fits)
                        .filter(|(_, &f)| f)
                        .map(|(&(_, a), _)| support(width, height, a, 90.0))
                        .fold(f64::INFINITY, f64::min);
                    let (x, y) = self.add_position(&name, min_hx, min_hy, e.kind)?;
                    let angle = if e.angle.is_some() {
                        AngleChoice::Fixed(options[0].1)
                    } else {
                        let vars: Vec<VarId> = (0..self.angles.len())
                            .map(|k| self.f.add_binary(format!("{name}_ang{k}"), Derivation::Primary, priority::ANGLE))
                            .collect();
                        for (k, &ok) in fits.iter().enumerate() {
                            if !ok {
                                self.f.tighten(vars[k], 0.0, 0.0);
                            }
                        }
                        let sum = LinExpr::from_terms(0.0, vars.iter().map(|&v| (v, 1.0)));
                        self.f.add_constraint(format!("{name}_ang_one"), sum, Relation::Eq, 1.0);
                        AngleChoice::Free(vars)
                    };
                    BodyLayout {
                        label: name,
                        element: idx,
                        cluster: None,
                        mass: e.mass,
                        x: Coord::Var(x),
                        y: Coord::Var(y),
                        geometry: BodyGeometry::Rect { width, height, angle },
                    }
                }
                ShapeSpec::Modules(_) => unreachable!("subsystems handled separately"),
            }
        };
        let id = self.bodies.len();
        self.bodies.push(body);
        self.add_containment(id)?;
        Ok(())
    }

    /// Keeps the whole footprint inside the design space when the extent
    /// depends on decisions; constant extents are already in the bounds.
    fn add_containment(&mut self, id: usize) -> Result<(), ModelError> {
        if self.bodies[id].is_fixed() {
            return Ok(());
        }
        let s = *self.space();
        let name = self.bodies[id].label.clone();
        let (x, y) = (self.bodies[id].x.expr(), self.bodies[id].y.expr());
        let ex = self.extent(id, 0.0)?;
        if !ex.is_constant() {
            self.f.add_constraint(format!("{name}_in_xl"), &x - &ex, Relation::Ge, s.x_min);
            self.f.add_constraint(format!("{name}_in_xu"), &x + &ex, Relation::Le, s.x_max);
        }
        let ey = self.extent(id, 90.0)?;
        if !ey.is_constant() {
            self.f.add_constraint(format!("{name}_in_yl"), &y - &ey, Relation::Ge, s.y_min);
            self.f.add_constraint(format!("{name}_in_yu"), &y + &ey, Relation::Le, s.y_max);
        }
        Ok(())
    }

    /// Half-extent along `phi` as an expression in the decisions.
    fn raw_extent(&self, id: usize, phi: f64) -> LinExpr {
        match &self.bodies[id].geometry {
            BodyGeometry::Circle { radius } => LinExpr::constant(*radius),
            BodyGeometry::Rect { width, height, angle: AngleChoice::Fixed(a) } => {
                LinExpr::constant(support(*width, *height, *a, phi))
            }
            BodyGeometry::Rect { width, height, angle: AngleChoice::Free(vars) } => LinExpr::from_terms(
                0.0,
                vars.iter().zip(&self.angles).map(|(&v, &a)| (v, support(*width, *height, a, phi))),
            ),
            BodyGeometry::Cluster { width_at, height_at, .. } => {
                let mut e = LinExpr::zero();
                for (k, &a) in self.angles.iter().enumerate() {
                    let (c, s) = abs_cos_sin(a - phi);
                    e.add_term(width_at[k], c / 2.0);
                    e.add_term(height_at[k], s / 2.0);
                }
                e
            }
        }
    }

    /// Range of the half-extent along `phi` over the admissible choices.
    fn extent_range(&self, id: usize, phi: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut push = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        match &self.bodies[id].geometry {
            BodyGeometry::Circle { radius } => push(*radius),
            BodyGeometry::Rect { width, height, angle: AngleChoice::Fixed(a) } => push(support(*width, *height, *a, phi)),
            BodyGeometry::Rect { width, height, angle: AngleChoice::Free(vars) } => {
                for (&v, &a) in vars.iter().zip(&self.angles) {
                    if self.f.var(v).upper > 0.5 {
                        push(support(*width, *height, a, phi));
                    }
                }
            }
            BodyGeometry::Cluster { module, arrangements, .. } => {
                for arr in arrangements {
                    for &a in &self.angles {
                        push(support(arr.width(module), arr.height(module), a, phi));
                    }
                }
            }
        }
        (lo, hi)
    }

    /// Half-extent along `phi`, introduced once per body and direction as a
    /// bounded variable so big-M sizing sees its true range.
    fn extent(&mut self, id: usize, phi: f64) -> Result<LinExpr, ModelError> {
        let key = (id, direction_key(phi));
        if let Some(e) = self.extents.get(&key) {
            return Ok(e.clone());
        }
        let raw = self.raw_extent(id, phi);
        let expr = if raw.is_constant() {
            raw
        } else {
            let (lo, hi) = self.extent_range(id, phi);
            let name = format!("{}_ext{}", self.bodies[id].label, deg_tag(normalize_half_turn(phi)));
            let v = self.f.add_continuous(&name, lo, hi, Derivation::Expr(raw.clone()))?;
            self.f.add_constraint(format!("{name}_def"), LinExpr::var(v) - raw, Relation::Eq, 0.0);
            LinExpr::var(v)
        };
        self.extents.insert(key, expr.clone());
        Ok(expr)
    }

    fn add_subsystem(&mut self, idx: usize, e: &ElementSpec) -> Result<(), ModelError> {
        let module = *e.modules().expect("subsystem");
        let name = label(&e.name);
        let n_com = self.opts.cluster_count(&e.name);
        if n_com == 0 || n_com > module.count {
            return Err(ModelError::ClusterCount { name: e.name.clone(), n_com, n_sub: module.count });
        }
        let mut arrangements = enumerate_arrangements(e, self.space())?;
        if (module.width - module.height).abs() < 1e-12 {
            // a transposed grid is the same footprint rotated by 90°
            let all: BTreeSet<(usize, usize)> = arrangements.iter().map(|a| (a.n_w, a.n_h)).collect();
            arrangements.retain(|a| a.n_w <= a.n_h || !all.contains(&(a.n_h, a.n_w)));
        }
        let counts: BTreeSet<usize> = arrangements.iter().map(Arrangement::modules).collect();
        let usable = feasible_module_splits(&counts, n_com, module.count);
        if usable[0].is_empty() {
            return Err(ModelError::NoModuleSplit { name: e.name.clone(), n_com, n_sub: module.count });
        }
        arrangements.retain(|a| usable[0].contains(&a.modules()));
        let module_mass = e.mass / module.count as f64;
        let mut ids = Vec::new();
        for i in 0..n_com {
            ids.push(self.add_cluster(idx, e, &name, i, module, &arrangements, module_mass)?);
        }
        // mass equivalence
        let mut mass = LinExpr::zero();
        for &id in &ids {
            if let BodyGeometry::Cluster { selection, arrangements, .. } = &self.bodies[id].geometry {
                for (s, a) in selection.iter().zip(arrangements) {
                    mass.add_term(*s, a.modules() as f64 * module_mass);
                }
            }
        }
        self.f.add_constraint(format!("{name}_mass"), mass, Relation::Eq, e.mass);

        let mut contacts = Vec::new();
        for i in 1..ids.len() {
            for j in 0..i {
                contacts.push(self.add_cluster_pair(&name, ids[j], ids[i], i >= 2)?);
            }
            if i >= 2 {
                let chain = LinExpr::from_terms(
                    0.0,
                    contacts.iter().filter(|c: &&ContactLayout| c.z == ids[i]).filter_map(|c| c.chain).map(|v| (v, 1.0)),
                );
                self.f.add_constraint(format!("{name}_c{}_chain", i + 1), chain, Relation::Ge, 1.0);
            }
        }
        if ids.len() >= 2 {
            let x1 = self.bodies[ids[0]].x.expr();
            let x2 = self.bodies[ids[1]].x.expr();
            self.f.add_constraint(format!("{name}_order"), x1 - x2, Relation::Le, 0.0);
        }
        self.subsystems.push(SubsystemLayout { element: idx, bodies: ids, module_mass, contacts });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn add_cluster(
        &mut self,
        idx: usize,
        e: &ElementSpec,
        name: &str,
        i: usize,
        module: ModuleSpec,
        arrangements: &[Arrangement],
        module_mass: f64,
    ) -> Result<usize, ModelError> {
        let lbl = format!("{name}_c{}", i + 1);
        let mut min_hx = f64::INFINITY;
        let mut min_hy = f64::INFINITY;
        for a in arrangements {
            for &t in &self.angles {
                min_hx = min_hx.min(support(a.width(&module), a.height(&module), t, 0.0));
                min_hy = min_hy.min(support(a.width(&module), a.height(&module), t, 90.0));
            }
        }
        let (x, y) = self.add_position(&lbl, min_hx, min_hy, e.kind)?;
        let selection: Vec<VarId> = arrangements
            .iter()
            .map(|a| self.f.add_binary(format!("{lbl}_s{}x{}", a.n_w, a.n_h), Derivation::Primary, priority::ARRANGEMENT))
            .collect();
        let one = LinExpr::from_terms(0.0, selection.iter().map(|&v| (v, 1.0)));
        self.f.add_constraint(format!("{lbl}_sel_one"), one, Relation::Eq, 1.0);
        let angles: Vec<VarId> = (0..self.angles.len())
            .map(|k| self.f.add_binary(format!("{lbl}_ang{k}"), Derivation::Primary, priority::ANGLE))
            .collect();
        let one = LinExpr::from_terms(0.0, angles.iter().map(|&v| (v, 1.0)));
        self.f.add_constraint(format!("{lbl}_ang_one"), one, Relation::Eq, 1.0);

        let dims = |f: fn(&Arrangement, &ModuleSpec) -> f64| -> (LinExpr, f64, f64) {
            let expr = LinExpr::from_terms(0.0, selection.iter().zip(arrangements).map(|(&v, a)| (v, f(a, &module))));
            let vals = arrangements.iter().map(|a| f(a, &module));
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            (expr, lo, hi)
        };
        let (w_expr, w_lo, w_hi) = dims(Arrangement::width);
        let (h_expr, h_lo, h_hi) = dims(Arrangement::height);
        let w = self.f.add_continuous(format!("{lbl}_w"), w_lo, w_hi, Derivation::Expr(w_expr.clone()))?;
        self.f.add_constraint(format!("{lbl}_w_def"), LinExpr::var(w) - w_expr, Relation::Eq, 0.0);
        let h = self.f.add_continuous(format!("{lbl}_h"), h_lo, h_hi, Derivation::Expr(h_expr.clone()))?;
        self.f.add_constraint(format!("{lbl}_h_def"), LinExpr::var(h) - h_expr, Relation::Eq, 0.0);
        let mut width_at = Vec::new();
        let mut height_at = Vec::new();
        for (k, &d) in angles.iter().enumerate() {
            width_at.push(expr_times_indicator(&mut self.f, &format!("{lbl}_w_at{k}"), &LinExpr::var(w), &LinExpr::var(d))?);
            height_at.push(expr_times_indicator(&mut self.f, &format!("{lbl}_h_at{k}"), &LinExpr::var(h), &LinExpr::var(d))?);
        }
        let id = self.bodies.len();
        let mass = module_mass * arrangements.iter().map(Arrangement::modules).max().unwrap_or(0) as f64;
        self.bodies.push(BodyLayout {
            label: lbl,
            element: idx,
            cluster: Some(i),
            mass,
            x: Coord::Var(x),
            y: Coord::Var(y),
            geometry: BodyGeometry::Cluster {
                module,
                arrangements: arrangements.to_vec(),
                selection,
                angles,
                width: w,
                height: h,
                width_at,
                height_at,
            },
        });
        self.add_containment(id)?;
        Ok(id)
    }

    /// Orientation coupling, orientation indicator and contiguity of two clusters.
    fn add_cluster_pair(&mut self, name: &str, d: usize, z: usize, optional: bool) -> Result<ContactLayout, ModelError> {
        let (dv, dw, dh) = cluster_parts(&self.bodies[d]);
        let (zv, zw, zh) = cluster_parts(&self.bodies[z]);
        let tag = format!("{}_{}", self.bodies[d].label, self.bodies[z].label.trim_start_matches(&format!("{name}_")));
        let n = self.angles.len();
        let scheme = self.opts.scheme;
        for k in 0..n {
            let kp = scheme.perpendicular(k);
            self.f.add_constraint(
                format!("{tag}_couple{k}"),
                LinExpr::var(dv[k]) - LinExpr::var(zv[k]) - LinExpr::var(zv[kp]),
                Relation::Le,
                0.0,
            );
        }
        // Σ_k (δ_kd − δ_kz)² = 2 − 2 Σ_k δ_kd·δ_kz under one-hot selection
        let mut same = LinExpr::zero();
        for k in 0..n {
            same.add_term(and_binary(&mut self.f, dv[k], zv[k])?, 1.0);
        }
        let o = self.f.add_binary(format!("{tag}_o"), Derivation::Expr(same.clone()), priority::IMPLIED);
        self.f.add_constraint(format!("{tag}_o_lo"), &same - &LinExpr::var(o), Relation::Ge, 0.0);
        self.f.add_constraint(format!("{tag}_o_hi"), same.scaled(2.0) - LinExpr::var(o), Relation::Le, 1.0);

        let probe = ContactProbe {
            d: (self.bodies[d].x, self.bodies[d].y, dv.clone(), dw, dh),
            z: (self.bodies[z].x, self.bodies[z].y, zv.clone(), zw, zh),
            angles: self.angles.clone(),
            epsilon: self.opts.epsilon,
        };
        let p1 = probe.clone();
        let side = self.f.add_binary(
            format!("{tag}_side"),
            Derivation::Rule(Arc::new(move |v: &[f64]| if p1.sides(v).0 { 1.0 } else { 0.0 })),
            priority::SIDE,
        );
        let chain = if optional {
            let p2 = probe.clone();
            Some(self.f.add_binary(
                format!("{tag}_chain"),
                Derivation::Rule(Arc::new(move |v: &[f64]| {
                    let (a, b) = p2.sides(v);
                    if a || b {
                        1.0
                    } else {
                        0.0
                    }
                })),
                priority::SIDE,
            ))
        } else {
            None
        };

        let eps = self.opts.epsilon;
        let one = LinExpr::constant(1.0);
        let ov = LinExpr::var(o);
        let sv = LinExpr::var(side);
        for k in 0..n {
            let kp = scheme.perpendicular(k);
            let p_u1 = projection(&self.bodies[d], &self.bodies[z], self.angles[k]);
            let p_u2 = projection(&self.bodies[d], &self.bodies[z], self.angles[kp]);
            for (case, delta_o) in [("same", &one - &ov), ("perp", ov.clone())] {
                let (l1, l2) = if case == "same" { (zw, zh) } else { (zh, zw) };
                let rhs1 = (LinExpr::var(dw) + LinExpr::var(l1)).scaled(0.5) - (&one - &sv).scaled(eps);
                let rhs2 = (LinExpr::var(dh) + LinExpr::var(l2)).scaled(0.5) - sv.scaled(eps);
                let mut off = &(&one - &LinExpr::var(dv[k])) + &delta_o;
                if let Some(a) = chain {
                    off += &(&one - &LinExpr::var(a));
                }
                for (axis, p, rhs) in [("u1", &p_u1, &rhs1), ("u2", &p_u2, &rhs2)] {
                    for (sgn, s) in [("p", 1.0), ("n", -1.0)] {
                        let lhs = &p.scaled(s) - rhs;
                        let m = size_big_m(&self.f, &lhs)?;
                        self.f.add_constraint(
                            format!("{tag}_touch{k}_{case}_{axis}{sgn}"),
                            lhs,
                            Relation::Le,
                            off.scaled(m),
                        );
                    }
                }
            }
        }
        Ok(ContactLayout { d, z, side, orientation: o, chain })
    }

    /// Directions along which a pair may be separated.
    fn pair_directions(&self, a: &BodyLayout, b: &BodyLayout) -> Vec<f64> {
        let projected = self.opts.scheme.projected_angles::<f64>();
        match (a.is_circle(), b.is_circle()) {
            (false, false) => self.angles.clone(),
            (true, true) => distinct_directions(projected),
            _ => distinct_directions(self.angles.iter().flat_map(|&t| projected.iter().map(move |&p| t + p))),
        }
    }

    /// Reachable bounding box of a body: centre bounds widened by its largest
    /// half extents.
    fn reach(&self, id: usize) -> [f64; 4] {
        let b = &self.bodies[id];
        let (x0, x1) = match b.x {
            Coord::Var(v) => (self.f.var(v).lower, self.f.var(v).upper),
            Coord::Fixed(c) => (c, c),
        };
        let (y0, y1) = match b.y {
            Coord::Var(v) => (self.f.var(v).lower, self.f.var(v).upper),
            Coord::Fixed(c) => (c, c),
        };
        let (_, hx) = self.extent_range(id, 0.0);
        let (_, hy) = self.extent_range(id, 90.0);
        let r = [x0 - hx, x1 + hx, y0 - hy, y1 + hy];
        if b.is_fixed() {
            return r;
        }
        // free bodies are contained in the design space
        let s = self.space();
        [r[0].max(s.x_min), r[1].min(s.x_max), r[2].max(s.y_min), r[3].min(s.y_max)]
    }

    fn add_pairs(&mut self) -> Result<(), ModelError> {
        for ia in 0..self.bodies.len() {
            for ib in ia + 1..self.bodies.len() {
                if self.bodies[ia].is_fixed() && self.bodies[ib].is_fixed() {
                    continue;
                }
                let (ra, rb) = (self.reach(ia), self.reach(ib));
                if ra[1] <= rb[0] || rb[1] <= ra[0] || ra[3] <= rb[2] || rb[3] <= ra[2] {
                    continue;
                }
                let dirs = self.pair_directions(&self.bodies[ia], &self.bodies[ib]);
                let tag = format!("{}_{}", self.bodies[ia].label, self.bodies[ib].label);
                let mut layout = PairLayout { a: ia, b: ib, directions: Vec::new(), success: Vec::new(), sign: Vec::new() };
                for phi in dirs {
                    let a = projection(&self.bodies[ia], &self.bodies[ib], phi);
                    let b = self.extent(ia, phi)? + self.extent(ib, phi)?;
                    let (alo, ahi) = self.f.bounds(&a);
                    let (blo, _) = self.f.bounds(&b);
                    if alo.abs().max(ahi.abs()) < blo - 1e-9 {
                        continue;
                    }
                    let name = format!("{tag}_sep{}", deg_tag(phi));
                    let dj = abs_disjunction(&mut self.f, &name, &a, &b, priority::SEPARATION)?;
                    self.f.set_priority(dj.sign, priority::SIDE);
                    self.f.add_constraint(
                        format!("{name}_sgn_le_suc"),
                        LinExpr::var(dj.sign) - LinExpr::var(dj.success),
                        Relation::Le,
                        0.0,
                    );
                    layout.directions.push(phi);
                    layout.success.push(dj.success);
                    layout.sign.push(dj.sign);
                }
                if layout.success.is_empty() {
                    return Err(ModelError::NeverSeparable {
                        a: self.bodies[ia].label.clone(),
                        b: self.bodies[ib].label.clone(),
                    });
                }
                let any = LinExpr::from_terms(0.0, layout.success.iter().map(|&v| (v, 1.0)));
                self.f.add_constraint(format!("{tag}_apart"), any, Relation::Ge, 1.0);
                self.pairs.push(layout);
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<MiqpModel, ModelError> {
        let o = self.opts.objective.clone();
        let total_mass = o.chassis.mass + o.rider.mass + self.topo.element_mass();
        if !(total_mass > 0.0) {
            return Err(ModelError::ZeroMass);
        }
        let mut num = [
            LinExpr::constant(o.chassis.mass * o.chassis.at[0] + o.rider.mass * o.rider.at[0]),
            LinExpr::constant(o.chassis.mass * o.chassis.at[1] + o.rider.mass * o.rider.at[1]),
        ];
        for id in 0..self.bodies.len() {
            let b = self.bodies[id].clone();
            let coords = [b.x.expr(), b.y.expr()];
            match &b.geometry {
                BodyGeometry::Cluster { arrangements, selection, module, .. } => {
                    let spec = &self.topo.elements[b.element];
                    let per = spec.mass / module.count as f64;
                    let counts: BTreeSet<usize> = arrangements.iter().map(Arrangement::modules).collect();
                    if counts.len() == 1 {
                        let m = per * *counts.iter().next().expect("non-empty") as f64;
                        for axis in 0..2 {
                            num[axis] += &coords[axis].scaled(m);
                        }
                        continue;
                    }
                    // the products of one coordinate add back up to it, since
                    // exactly one module count is selected
                    let mut whole = [-coords[0].clone(), -coords[1].clone()];
                    for &n in &counts {
                        let ind = LinExpr::from_terms(
                            0.0,
                            selection.iter().zip(arrangements).filter(|(_, a)| a.modules() == n).map(|(&v, _)| (v, 1.0)),
                        );
                        for (axis, tag) in ["x", "y"].iter().enumerate() {
                            let q = expr_times_indicator(&mut self.f, &format!("{}_m{tag}{n}", b.label), &coords[axis], &ind)?;
                            num[axis].add_term(q, per * n as f64);
                            whole[axis].add_term(q, 1.0);
                        }
                    }
                    for (axis, tag) in ["x", "y"].iter().enumerate() {
                        self.f.add_constraint(format!("{}_m{tag}_sum", b.label), whole[axis].clone(), Relation::Eq, 0.0);
                    }
                }
                _ => {
                    for axis in 0..2 {
                        num[axis] += &coords[axis].scaled(b.mass);
                    }
                }
            }
        }
        let mut cog = Vec::new();
        for (axis, tag) in ["x", "y"].iter().enumerate() {
            let (lo, hi) = self.f.bounds(&num[axis]);
            let def = num[axis].scaled(1.0 / total_mass);
            let v = self.f.add_continuous(format!("cog_{tag}"), lo / total_mass, hi / total_mass, Derivation::Expr(def))?;
            self.f.add_constraint(
                format!("cog_{tag}_def"),
                LinExpr::term(v, total_mass) - num[axis].clone(),
                Relation::Eq,
                0.0,
            );
            cog.push(v);
        }
        let mut objective = QuadObjective::default();
        let wn = 1.0 / o.l_n;
        for (axis, &v) in cog.iter().enumerate() {
            let t = o.ideal[axis];
            objective.quadratic.push((v, v, wn));
            objective.linear.add_term(v, -2.0 * t * wn);
            objective.linear.constant += t * t * wn;
        }
        let mm = self.bodies.iter().position(|b| self.topo.elements[b.element].kind == ElementKind::Mm);
        let rear_wheel = self.topo.rear_wheel();
        if let Some(mi) = mm {
            let rear = rear_wheel.ok_or(ModelError::MissingRearWheel)?;
            let wm = 1.0 / o.l_n_mm;
            for (axis, c) in [self.bodies[mi].x, self.bodies[mi].y].into_iter().enumerate() {
                match c {
                    Coord::Var(v) => {
                        objective.quadratic.push((v, v, wm));
                        objective.linear.add_term(v, -2.0 * rear[axis] * wm);
                        objective.linear.constant += rear[axis] * rear[axis] * wm;
                    }
                    Coord::Fixed(p) => objective.linear.constant += (p - rear[axis]).powi(2) * wm,
                }
            }
        }
        objective.quadratic.sort_by_key(|&(i, j, _)| (i, j));
        let (vars, constraints) = self.f.into_parts();
        Ok(MiqpModel {
            vars,
            constraints,
            objective,
            layout: Layout {
                scheme: self.opts.scheme,
                epsilon: self.opts.epsilon,
                bodies: self.bodies,
                pairs: self.pairs,
                subsystems: self.subsystems,
                cog: [cog[0], cog[1]],
                total_mass,
                mm,
                rear_wheel,
                objective: o,
            },
        })
    }
}

fn cluster_parts(b: &BodyLayout) -> (Vec<VarId>, VarId, VarId) {
    match &b.geometry {
        BodyGeometry::Cluster { angles, width, height, .. } => (angles.clone(), *width, *height),
        _ => unreachable!("contiguity only applies to clusters"),
    }
}

/// Evaluates which contiguity side, if any, two clusters satisfy.
#[derive(Clone)]
struct ContactProbe {
    d: (Coord, Coord, Vec<VarId>, VarId, VarId),
    z: (Coord, Coord, Vec<VarId>, VarId, VarId),
    angles: Vec<f64>,
    epsilon: f64,
}

impl ContactProbe {
    /// `(abuts along u1 of d, abuts along u2 of d)`.
    fn sides(&self, v: &[f64]) -> (bool, bool) {
        const TOL: f64 = 1e-7;
        let (dx, dy, dang, dw, dh) = &self.d;
        let (zx, zy, zang, zw, zh) = &self.z;
        let kd = argmax(dang, v);
        let kz = argmax(zang, v);
        let theta = self.angles[kd];
        let vx = zx.value(v) - dx.value(v);
        let vy = zy.value(v) - dy.value(v);
        let (c, s) = (Trig::Cos.eval(theta), Trig::Sin.eval(theta));
        let p1 = (vx * c + vy * s).abs();
        let p2 = (-vx * s + vy * c).abs();
        let (l1, l2) = if kd == kz { (v[zw.index()], v[zh.index()]) } else { (v[zh.index()], v[zw.index()]) };
        let r1 = (v[dw.index()] + l1) / 2.0;
        let r2 = (v[dh.index()] + l2) / 2.0;
        let along_u1 = p1 <= r1 + TOL && p2 <= r2 - self.epsilon + TOL;
        let along_u2 = p1 <= r1 - self.epsilon + TOL && p2 <= r2 + TOL;
        (along_u1, along_u2)
    }
}
