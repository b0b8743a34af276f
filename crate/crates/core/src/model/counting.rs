//! Closed-form model size, for sanity checks and for reporting how a
//! topology scales before anything is built.
//!
//! The totals assume every body pair receives separation constraints; the
//! builder drops pairs whose reachable regions cannot meet, so a built model
//! is never larger than [`expected_size`].

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, AddAssign};

use super::builder::BuildOptions;
use super::topology::{enumerate_arrangements, feasible_module_splits, ShapeSpec, Topology};
use super::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelSize {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
}

impl Add for ModelSize {
    type Output = ModelSize;
    fn add(self, o: ModelSize) -> ModelSize {
        ModelSize {
            variables: self.variables + o.variables,
            binaries: self.binaries + o.binaries,
            constraints: self.constraints + o.constraints,
        }
    }
}

impl AddAssign for ModelSize {
    fn add_assign(&mut self, o: ModelSize) {
        *self = *self + o;
    }
}

/// A free component: position, plus one-hot angle and footprint containment
/// when the angle is free.
pub fn component(n_a: usize, free_angle: bool) -> ModelSize {
    if free_angle {
        ModelSize { variables: 2 + n_a, binaries: n_a, constraints: 1 + 4 }
    } else {
        ModelSize { variables: 2, binaries: 0, constraints: 0 }
    }
}

/// One cluster with `arrangements` admissible grids.
pub fn cluster(n_a: usize, arrangements: usize) -> ModelSize {
    ModelSize {
        // x, y, selection, angles, width, height, width·δ and height·δ
        variables: 2 + arrangements + n_a + 2 + 2 * n_a,
        binaries: arrangements + n_a,
        // two one-hot rows, two dimension rows, four rows per product, containment
        constraints: 1 + 1 + 2 + 4 * 2 * n_a + 4,
    }
}

/// Coupling, orientation indicator and contiguity rows of one cluster pair.
pub fn cluster_pair(n_a: usize, optional: bool) -> ModelSize {
    let chain = usize::from(optional);
    ModelSize {
        variables: n_a + 1 + 1 + chain,
        binaries: n_a + 1 + 1 + chain,
        constraints: n_a + 3 * n_a + 2 + 8 * n_a,
    }
}

/// Separation of one body pair over `directions` projection directions.
pub fn separation(directions: usize) -> ModelSize {
    ModelSize { variables: 2 * directions, binaries: 2 * directions, constraints: 4 * directions + directions + 1 }
}

/// One half-extent helper variable and its defining row.
pub fn extent(count: usize) -> ModelSize {
    ModelSize { variables: count, binaries: 0, constraints: count }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BodyKind {
    Fixed,
    Circle,
    ConstRect,
    FreeRect,
    Cluster,
}

/// Size of the model [`super::assemble`] would build if no pair were pruned.
pub fn expected_size(topo: &Topology, opts: &BuildOptions) -> Result<ModelSize, ModelError> {
    let n_a = opts.scheme.rect_angle_count();
    let n_pa = opts.scheme.projected_angle_count();
    let rect_angles: Vec<f64> = (0..n_a).map(|k| 180.0 * k as f64 / n_a as f64).collect();
    let proj: Vec<f64> = (0..n_pa).map(|k| 180.0 * k as f64 / (n_pa - 1) as f64).collect();
    let key = |a: f64| ((a.rem_euclid(180.0) * 1e6).round() as i64) % 180_000_000;
    let circle_circle: BTreeSet<i64> = proj.iter().map(|&p| key(p)).collect();
    let rect_circle: BTreeSet<i64> =
        rect_angles.iter().flat_map(|&t| proj.iter().map(move |&p| key(t + p))).collect();
    let rect_rect: BTreeSet<i64> = rect_angles.iter().map(|&t| key(t)).collect();

    let mut size = ModelSize::default();
    // (kind, round) per body in build order
    let mut bodies: Vec<(BodyKind, bool)> = Vec::new();
    for e in topo.existing() {
        match &e.shape {
            ShapeSpec::Modules(m) => {
                let n_com = opts.cluster_count(&e.name);
                let mut arr = enumerate_arrangements(e, &opts.space)?;
                if (m.width - m.height).abs() < 1e-12 {
                    let all: BTreeSet<(usize, usize)> = arr.iter().map(|a| (a.n_w, a.n_h)).collect();
                    arr.retain(|a| a.n_w <= a.n_h || !all.contains(&(a.n_h, a.n_w)));
                }
                let counts: BTreeSet<usize> = arr.iter().map(|a| a.modules()).collect();
                let usable = feasible_module_splits(&counts, n_com, m.count);
                arr.retain(|a| usable[0].contains(&a.modules()));
                let distinct = arr.iter().map(|a| a.modules()).collect::<BTreeSet<_>>().len();
                for _ in 0..n_com {
                    size += cluster(n_a, arr.len());
                    bodies.push((BodyKind::Cluster, false));
                    if distinct > 1 {
                        // CoG products x·β_n and y·β_n per distinct module count, and
                        // the rows tying their sums back to the coordinates
                        size += ModelSize { variables: 2 * distinct, binaries: 0, constraints: 8 * distinct + 2 };
                    }
                }
                size.constraints += 1; // mass equivalence
                for i in 1..n_com {
                    for _ in 0..i {
                        size += cluster_pair(n_a, i >= 2);
                    }
                    if i >= 2 {
                        size.constraints += 1; // chain
                    }
                }
                if n_com >= 2 {
                    size.constraints += 1; // x ordering
                }
            }
            ShapeSpec::Circle { .. } if e.fixed.is_some() => bodies.push((BodyKind::Fixed, true)),
            ShapeSpec::Rect { .. } if e.fixed.is_some() => bodies.push((BodyKind::Fixed, false)),
            ShapeSpec::Circle { .. } => {
                size += component(n_a, false);
                bodies.push((BodyKind::Circle, true));
            }
            ShapeSpec::Rect { .. } => {
                let free = e.angle.is_none();
                size += component(n_a, free);
                bodies.push((if free { BodyKind::FreeRect } else { BodyKind::ConstRect }, false));
            }
        }
    }
    let varying = |k: BodyKind| matches!(k, BodyKind::FreeRect | BodyKind::Cluster);
    let mut extent_dirs: BTreeMap<usize, BTreeSet<i64>> = BTreeMap::new();
    for (i, &(k, _)) in bodies.iter().enumerate() {
        if varying(k) {
            extent_dirs.entry(i).or_default().extend([key(0.0), key(90.0)]);
        }
    }
    for i in 0..bodies.len() {
        for j in i + 1..bodies.len() {
            let ((a, round_a), (b, round_b)) = (bodies[i], bodies[j]);
            if a == BodyKind::Fixed && b == BodyKind::Fixed {
                continue;
            }
            let dirs = match (round_a, round_b) {
                (false, false) => &rect_rect,
                (true, true) => &circle_circle,
                _ => &rect_circle,
            };
            size += separation(dirs.len());
            for (idx, k) in [(i, a), (j, b)] {
                if varying(k) {
                    extent_dirs.entry(idx).or_default().extend(dirs.iter().copied());
                }
            }
        }
    }
    size += extent(extent_dirs.values().map(BTreeSet::len).sum());
    // CoG variables and their definitions
    size += ModelSize { variables: 2, binaries: 0, constraints: 2 };
    Ok(size)
}
