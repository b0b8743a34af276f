//! Placement of electric-motorcycle powertrain elements as a mixed-integer
//! quadratic program: geometry, model assembly, branch and bound, an
//! independent verifier and a drive-cycle analysis of the ideal CoG.
//!
//! Geometry and the CoG-region analysis are generic over [`geometry::Scalar`];
//! the aliases below fix the scalar to `f64`, which the model and solver use.

pub mod cog_region;
pub mod geometry;
pub mod io;
pub mod linearize;
pub mod model;
pub mod solver;
pub mod verifier;

pub type PointF64 = geometry::Point<f64>;
pub type RectF64 = geometry::Rect<f64>;
pub type CircleF64 = geometry::Circle<f64>;
pub type ShapeF64 = geometry::Shape<f64>;
pub type DesignSpaceF64 = geometry::DesignSpace<f64>;
pub type VehicleParamsF64 = cog_region::VehicleParams<f64>;
pub type DriveCycleF64 = cog_region::DriveCycle<f64>;
pub type RegionGridF64 = cog_region::RegionGrid<f64>;
pub type GridSpecF64 = cog_region::GridSpec<f64>;
