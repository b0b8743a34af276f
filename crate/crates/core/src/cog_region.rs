//! Drive-cycle analysis of where the CoG may sit without the tyres limiting
//! tractive or braking force.
//!
//! `b` is the horizontal distance from the rear contact point to the CoG
//! (positive toward the front wheel) and `h` the CoG height above ground.
//! Design-space coordinates share that origin, so the ideal CoG is `(b, h)`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Scalar;

/// Current on-disk version of region grid dumps.
pub const REGION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("invalid vehicle parameter: {0}")]
    Params(String),
    #[error("drive cycle line {line}: {message}")]
    Cycle { line: u64, message: String },
    #[error("drive cycle needs at least two samples")]
    ShortCycle,
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("no feasible CoG: every grid point limits the tyre forces somewhere on the cycle")]
    NoFeasibleCog,
    #[error("region file line {line}: {message}")]
    Format { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which wheels carry the drive and braking force.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drive<T> {
    Rear,
    Front,
    /// Both wheels, with a fixed share of the force on the front.
    Split { front_share: T },
}

impl<T: Scalar> Drive<T> {
    /// Fractions of the longitudinal force on (front, rear).
    pub fn shares(&self) -> (T, T) {
        match *self {
            Drive::Rear => (T::zero(), T::one()),
            Drive::Front => (T::one(), T::zero()),
            Drive::Split { front_share } => (front_share, T::one() - front_share),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams<T> {
    /// Wheelbase (m).
    pub wheelbase: T,
    /// Total vehicle mass including rider and powertrain (kg).
    pub mass: T,
    pub mu_front: T,
    pub mu_rear: T,
    /// Gravitational acceleration (m/s²).
    pub gravity: T,
    pub drive: Drive<T>,
    /// Road load `c0 + c1 v + c2 v²` (N, N·s/m, N·s²/m²).
    pub road_load: [T; 3],
}

impl<T: Scalar> VehicleParams<T> {
    pub fn validate(&self) -> Result<(), RegionError> {
        let bad = |m: String| Err(RegionError::Params(m));
        if !(self.wheelbase > T::zero()) {
            return bad(format!("wheelbase must be positive, got {}", self.wheelbase));
        }
        if !(self.mass > T::zero()) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.gravity > T::zero()) {
            return bad(format!("gravity must be positive, got {}", self.gravity));
        }
        for (name, mu) in [("mu_front", self.mu_front), ("mu_rear", self.mu_rear)] {
            if !(mu > T::zero() && mu <= T::lit(1.5)) {
                return bad(format!("{name} must lie in (0, 1.5], got {mu}"));
            }
        }
        if let Drive::Split { front_share } = self.drive {
            if !(front_share >= T::zero() && front_share <= T::one()) {
                return bad(format!("front_share must lie in [0, 1], got {front_share}"));
            }
        }
        if self.road_load.iter().any(|c| !c.is_finite()) {
            return bad("road load coefficients must be finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalForces<T> {
    pub front: T,
    pub rear: T,
}

impl<T: Scalar> NormalForces<T> {
    /// A negative normal force means the wheel has left the ground.
    pub fn wheel_lift(&self) -> bool {
        self.front < T::zero() || self.rear < T::zero()
    }
}

/// Static weight split plus longitudinal load transfer at acceleration `accel`.
pub fn normal_forces<T: Scalar>(p: &VehicleParams<T>, b: T, h: T, accel: T) -> NormalForces<T> {
    let mg = p.mass * p.gravity;
    let transfer = h / p.wheelbase * p.mass * accel;
    NormalForces {
        front: b / p.wheelbase * mg - transfer,
        rear: (p.wheelbase - b) / p.wheelbase * mg + transfer,
    }
}

/// Sampled speed trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle<T> {
    pub time: Vec<T>,
    pub speed: Vec<T>,
}

impl<T: Scalar> DriveCycle<T> {
    pub fn new(time: Vec<T>, speed: Vec<T>) -> Result<Self, RegionError> {
        if time.len() != speed.len() {
            return Err(RegionError::Cycle { line: 0, message: "time and speed lengths differ".into() });
        }
        if time.len() < 2 {
            return Err(RegionError::ShortCycle);
        }
        for i in 0..time.len() {
            if !speed[i].is_finite() || speed[i] < T::zero() {
                return Err(RegionError::Cycle { line: i as u64 + 1, message: format!("speed must be ≥ 0, got {}", speed[i]) });
            }
            if i > 0 && !(time[i] > time[i - 1]) {
                return Err(RegionError::Cycle { line: i as u64 + 1, message: "time must be strictly increasing".into() });
            }
        }
        Ok(Self { time, speed })
    }

    /// Parses two columns `time_s, speed_mps`. A header row is optional and
    /// lines starting with `#` are ignored.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, RegionError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let (mut time, mut speed) = (Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| RegionError::Cycle { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 2 {
                return Err(RegionError::Cycle { line, message: format!("expected 2 columns, found {}", rec.len()) });
            }
            let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => {
                    time.push(T::lit(v[0]));
                    speed.push(T::lit(v[1]));
                }
                Err(_) if k == 0 => {}
                Err(e) => return Err(RegionError::Cycle { line, message: e.to_string() }),
            }
        }
        Self::new(time, speed)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Forward difference; the last sample reuses the backward difference.
    pub fn acceleration(&self, i: usize) -> T {
        let j = if i + 1 < self.len() { i } else { i - 1 };
        (self.speed[j + 1] - self.speed[j]) / (self.time[j + 1] - self.time[j])
    }
}

/// Longitudinal force the tyres must transmit at sample `i`: inertia plus road
/// load. Negative values are braking demand.
pub fn required_tractive_force<T: Scalar>(p: &VehicleParams<T>, cycle: &DriveCycle<T>, i: usize) -> T {
    let v = cycle.speed[i];
    let [c0, c1, c2] = p.road_load;
    p.mass * cycle.acceleration(i) + c0 + c1 * v + c2 * v * v
}

/// Candidate CoG positions, inclusive of both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub b_min: T,
    pub b_max: T,
    pub h_min: T,
    pub h_max: T,
    pub step: T,
}

impl<T: Scalar> GridSpec<T> {
    /// Whole wheelbase up to `h_max`, one step in from the wheel contacts.
    pub fn for_wheelbase(wheelbase: T, h_max: T, step: T) -> Self {
        Self { b_min: step, b_max: wheelbase - step, h_min: step, h_max, step }
    }

    fn axis(lo: T, hi: T, step: T) -> Vec<T> {
        let n = ((hi - lo) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n).map(|k| lo + step * T::lit(k as f64)).collect()
    }

    pub fn b_values(&self) -> Vec<T> {
        Self::axis(self.b_min, self.b_max, self.step)
    }

    pub fn h_values(&self) -> Vec<T> {
        Self::axis(self.h_min, self.h_max, self.step)
    }
}

/// Inactive mask over a `b × h` grid, stored row by row in `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid<T> {
    pub wheelbase: T,
    pub b: Vec<T>,
    pub h: Vec<T>,
    pub inactive: Vec<bool>,
}

impl<T: Scalar> RegionGrid<T> {
    pub fn is_inactive(&self, ib: usize, ih: usize) -> bool {
        self.inactive[ih * self.b.len() + ib]
    }

    pub fn inactive_count(&self) -> usize {
        self.inactive.iter().filter(|&&v| v).count()
    }

    /// `b, h, inactive` rows after a version comment and a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RegionError> {
        let mut out = out;
        writeln!(out, "# format_version: {REGION_FORMAT_VERSION}")?;
        writeln!(out, "# wheelbase_m: {}", self.wheelbase)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["b_m", "h_m", "inactive"]).map_err(csv_io)?;
        for (ih, h) in self.h.iter().enumerate() {
            for (ib, b) in self.b.iter().enumerate() {
                let flag = if self.is_inactive(ib, ih) { "1" } else { "0" };
                w.write_record([b.to_string(), h.to_string(), flag.to_string()]).map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RegionError> {
        let mut text = String::new();
        let mut reader = reader;
        reader.read_to_string(&mut text)?;
        let fmt = |line: u64, message: String| RegionError::Format { line, message };
        let mut lines = text.lines();
        let version = lines.next().and_then(|l| l.strip_prefix("# format_version:")).map(str::trim);
        match version {
            Some(v) if v == REGION_FORMAT_VERSION.to_string() => {}
            Some(v) => return Err(fmt(1, format!("unsupported format_version {v}"))),
            None => return Err(fmt(1, "missing format_version comment".into())),
        }
        let wheelbase = lines
            .next()
            .and_then(|l| l.strip_prefix("# wheelbase_m:"))
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| fmt(2, "missing wheelbase comment".into()))?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut rows: Vec<(f64, f64, bool)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| fmt(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |k: usize| rec.get(k).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| fmt(line, format!("bad column {}", k + 1)));
            let flag = match rec.get(2).map(str::trim) {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(fmt(line, "inactive flag must be 0 or 1".into())),
            };
            rows.push((num(0)?, num(1)?, flag));
        }
        let mut b: Vec<f64> = Vec::new();
        for r in &rows {
            if b.contains(&r.0) {
                break;
            }
            b.push(r.0);
        }
        if b.is_empty() || rows.len() % b.len() != 0 {
            return Err(fmt(0, "rows do not form a full grid".into()));
        }
        let h: Vec<f64> = rows.chunks(b.len()).map(|c| c[0].1).collect();
        for (k, r) in rows.iter().enumerate() {
            if r.0 != b[k % b.len()] || r.1 != h[k / b.len()] {
                return Err(fmt(k as u64 + 4, "rows do not form a full grid".into()));
            }
        }
        Ok(Self {
            wheelbase: T::lit(wheelbase),
            b: b.into_iter().map(T::lit).collect(),
            h: h.into_iter().map(T::lit).collect(),
            inactive: rows.iter().map(|r| r.2).collect(),
        })
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Per-sample load: acceleration and required force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSample<T> {
    pub accel: T,
    pub force: T,
}

pub fn cycle_samples<T: Scalar>(p: &VehicleParams<T>, cycle: &DriveCycle<T>) -> Vec<CycleSample<T>> {
    (0..cycle.len()).map(|i| CycleSample { accel: cycle.acceleration(i), force: required_tractive_force(p, cycle, i) }).collect()
}

/// True when no sample lifts a wheel or asks a driven wheel for more than
/// its friction limit.
pub fn point_inactive<T: Scalar>(p: &VehicleParams<T>, samples: &[CycleSample<T>], b: T, h: T) -> bool {
    let (sf, sr) = p.drive.shares();
    samples.iter().all(|s| {
        let n = normal_forces(p, b, h, s.accel);
        !n.wheel_lift() && (s.force * sf).abs() <= p.mu_front * n.front && (s.force * sr).abs() <= p.mu_rear * n.rear
    })
}

/// Evaluates every grid point against the whole cycle.
pub fn inactive_region<T: Scalar>(p: &VehicleParams<T>, cycle: &DriveCycle<T>, grid: &GridSpec<T>) -> Result<RegionGrid<T>, RegionError> {
    p.validate()?;
    if cycle.len() < 2 {
        return Err(RegionError::ShortCycle);
    }
    if !(grid.step > T::zero()) {
        return Err(RegionError::Grid(format!("step must be positive, got {}", grid.step)));
    }
    if !(grid.b_min > T::zero() && grid.b_max < p.wheelbase && grid.b_min <= grid.b_max) {
        return Err(RegionError::Grid(format!("b range [{}, {}] must lie inside (0, {})", grid.b_min, grid.b_max, p.wheelbase)));
    }
    if !(grid.h_min > T::zero() && grid.h_min <= grid.h_max) {
        return Err(RegionError::Grid(format!("h range [{}, {}] must be positive and non-empty", grid.h_min, grid.h_max)));
    }
    let samples = cycle_samples(p, cycle);
    let (b, h) = (grid.b_values(), grid.h_values());
    let inactive: Vec<bool> = h
        .par_iter()
        .flat_map_iter(|&hv| b.iter().map(|&bv| point_inactive(p, &samples, bv, hv)).collect::<Vec<_>>())
        .collect();
    Ok(RegionGrid { wheelbase: p.wheelbase, b, h, inactive })
}

/// Lowest inactive point, then closest to mid-wheelbase, then smallest `b`.
pub fn ideal_cog<T: Scalar>(region: &RegionGrid<T>) -> Result<[T; 2], RegionError> {
    let mid = region.wheelbase / T::lit(2.0);
    let mut best: Option<(T, T, T)> = None;
    for (ih, &h) in region.h.iter().enumerate() {
        for (ib, &b) in region.b.iter().enumerate() {
            if !region.is_inactive(ib, ih) {
                continue;
            }
            let key = (h, (b - mid).abs(), b);
            let better = match best {
                None => true,
                Some(k) => key.0 < k.0 || (key.0 == k.0 && (key.1 < k.1 || (key.1 == k.1 && key.2 < k.2))),
            };
            if better {
                best = Some(key);
            }
        }
    }
    best.map(|(h, _, b)| [b, h]).ok_or(RegionError::NoFeasibleCog)
}
