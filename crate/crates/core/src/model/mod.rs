//! Problem assembly: topology description, cluster arrangements, the MIQP
//! builder and LP/MPS exchange formats.

mod builder;
pub mod counting;
pub mod export;
mod topology;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::linearize::LinearizeError;

pub use builder::{
    assemble, priority, Aabb, AngleChoice, BodyGeometry, BodyLayout, BuildOptions, ContactLayout, Coord, Layout,
    LiftOutcome, MiqpModel, ObjectiveSpec, PairLayout, PointMass, QuadObjective, SubsystemLayout,
};
pub use topology::{
    enumerate_arrangements, feasible_module_splits, Arrangement, ElementKind, ElementSpec, ModuleSpec, ShapeSpec,
    Topology, TOPOLOGY_FORMAT_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported {what} format_version {found}")]
    UnsupportedVersion { what: &'static str, found: u32 },
    #[error("element {name}: {reason}")]
    InvalidElement { name: String, reason: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("cluster count for {name} must be in 1..={n_sub}, got {n_com}")]
    ClusterCount { name: String, n_com: usize, n_sub: usize },
    #[error("cluster count given for {0}, which is not an existing subsystem")]
    UnknownSubsystem(String),
    #[error("no {n_com} arrangements of {name} add up to {n_sub} modules")]
    NoModuleSplit { name: String, n_com: usize, n_sub: usize },
    #[error("{0} does not fit inside the design space")]
    DoesNotFit(String),
    #[error("{a} and {b} overlap in every admissible placement")]
    NeverSeparable { a: String, b: String },
    #[error("total mass must be positive")]
    ZeroMass,
    #[error("a frame-mounted motor needs a fixed rear wheel as reference")]
    MissingRearWheel,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
