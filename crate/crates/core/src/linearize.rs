//! Mixed-integer linearization: variable table, linear expressions and the
//! transforms that turn products and disjunctions into linear constraints.
//!
//! A [`Formulation`] is the single-writer variable/constraint table that the
//! transforms append to. Every auxiliary variable records how its value
//! follows from earlier variables ([`Derivation`]), so a full assignment can
//! be completed from the primary decisions alone.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack added on top of the interval bound when sizing a big-M constant.
pub const BIG_M_MARGIN: f64 = 0.1;

/// Trigonometric values closer to zero than this are treated as exact zeros.
const TRIG_SNAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizeError {
    #[error("variable {0} has an infinite bound; big-M cannot be sized")]
    Unbounded(String),
    #[error("variable {0} is not binary")]
    NotBinary(String),
    #[error("{decisions} decision variables but {angles} angles")]
    LengthMismatch { decisions: usize, angles: usize },
    #[error("invalid bounds [{lower}, {upper}] for {name}")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

/// How a variable's value follows from the ones created before it.
#[derive(Clone)]
pub enum Derivation {
    /// A decision supplied from outside (positions, angle and arrangement choices).
    Primary,
    /// `a · b` of two binaries.
    And(VarId, VarId),
    /// `factor · indicator`, where the indicator is 0/1 valued.
    Product { factor: LinExpr, indicator: LinExpr },
    /// Defined by an equality with this expression.
    Expr(LinExpr),
    /// 1 when `|a| ≥ b`.
    Success { a: LinExpr, b: LinExpr },
    /// 1 when `success` is set and `a ≥ 0`.
    Sign { a: LinExpr, success: VarId },
    /// Anything else: a rule over the values of earlier variables.
    Rule(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Derivation::Primary => write!(f, "Primary"),
            Derivation::And(a, b) => write!(f, "And({a:?}, {b:?})"),
            Derivation::Product { .. } => write!(f, "Product"),
            Derivation::Expr(_) => write!(f, "Expr"),
            Derivation::Success { .. } => write!(f, "Success"),
            Derivation::Sign { success, .. } => write!(f, "Sign({success:?})"),
            Derivation::Rule(_) => write!(f, "Rule"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub derivation: Derivation,
    /// Branching priority; binaries whose integrality is implied by others use 0.
    pub priority: u8,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        self.kind == VarKind::Binary
    }
}

/// `constant + Σ coef · var`, terms sorted by variable and merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        let terms = if coef == 0.0 { Vec::new() } else { vec![(v, coef)] };
        Self { constant: 0.0, terms }
    }

    pub fn from_terms(constant: f64, terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut map: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            *map.entry(v).or_insert(0.0) += c;
        }
        Self { constant, terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect() }
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, v: VarId) -> f64 {
        self.terms.binary_search_by_key(&v, |&(id, _)| id).map(|i| self.terms[i].1).unwrap_or(0.0)
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        match self.terms.binary_search_by_key(&v, |&(id, _)| id) {
            Ok(i) => {
                self.terms[i].1 += coef;
                if self.terms[i].1 == 0.0 {
                    self.terms.remove(i);
                }
            }
            Err(i) => self.terms.insert(i, (v, coef)),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        Self { constant: self.constant * s, terms: self.terms.iter().map(|&(v, c)| (v, c * s)).collect() }
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * values[v.index()])
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<VarId> {
        self.terms.last().map(|&(v, _)| v)
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.constant += rhs.constant;
        for &(v, c) in &rhs.terms {
            self.add_term(v, c);
        }
    }
}

impl Add<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add<LinExpr> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += &rhs;
        self
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

impl Sub<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out += &rhs.scaled(-1.0);
        out
    }
}

impl Sub<LinExpr> for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        &self - &rhs
    }
}

impl Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: f64) -> LinExpr {
        self.constant -= rhs;
        self
    }
}

impl Mul<f64> for &LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Neg for &LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

/// `expr (relation) rhs`; the expression carries no constant.
#[derive(Clone, Debug, PartialEq)]
pub struct LinConstraint {
    pub name: String,
    pub expr: LinExpr,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinConstraint {
    /// Normalizes `lhs (relation) rhs` into terms on the left, a constant on the right.
    pub fn new(name: impl Into<String>, lhs: LinExpr, relation: Relation, rhs: LinExpr) -> Self {
        let mut expr = &lhs - &rhs;
        let rhs = -expr.constant;
        expr.constant = 0.0;
        Self { name: name.into(), expr, relation, rhs }
    }

    /// Amount by which an assignment violates the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.evaluate(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Signed residual `lhs - rhs`.
    pub fn residual(&self, values: &[f64]) -> f64 {
        self.expr.evaluate(values) - self.rhs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    /// Value at an angle in degrees, with near-zero results snapped to zero.
    pub fn eval(self, angle_deg: f64) -> f64 {
        let r = angle_deg.to_radians();
        let v = match self {
            Trig::Cos => r.cos(),
            Trig::Sin => r.sin(),
        };
        if v.abs() < TRIG_SNAP {
            0.0
        } else {
            v
        }
    }
}

/// Variables and constraints under construction.
#[derive(Clone, Debug, Default)]
pub struct Formulation {
    vars: Vec<Variable>,
    constraints: Vec<LinConstraint>,
    and_cache: BTreeMap<(VarId, VarId), VarId>,
}

impl Formulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.index()]
    }

    pub fn constraints(&self) -> &[LinConstraint] {
        &self.constraints
    }

    pub fn into_parts(self) -> (Vec<Variable>, Vec<LinConstraint>) {
        (self.vars, self.constraints)
    }

    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        derivation: Derivation,
    ) -> Result<VarId, LinearizeError> {
        let name = name.into();
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(LinearizeError::InvalidBounds { name, lower, upper });
        }
        Ok(self.push(Variable { name, kind: VarKind::Continuous, lower, upper, derivation, priority: 0 }))
    }

    pub fn add_binary(&mut self, name: impl Into<String>, derivation: Derivation, priority: u8) -> VarId {
        self.push(Variable { name: name.into(), kind: VarKind::Binary, lower: 0.0, upper: 1.0, derivation, priority })
    }

    fn push(&mut self, var: Variable) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(var);
        id
    }

    pub fn set_priority(&mut self, v: VarId, priority: u8) {
        self.vars[v.index()].priority = priority;
    }

    /// Narrows a variable's bounds (used for fixed choices and presolve).
    pub fn tighten(&mut self, v: VarId, lower: f64, upper: f64) {
        let var = &mut self.vars[v.index()];
        var.lower = var.lower.max(lower);
        var.upper = var.upper.min(upper);
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        lhs: LinExpr,
        relation: Relation,
        rhs: impl Into<LinExpr>,
    ) -> usize {
        self.constraints.push(LinConstraint::new(name, lhs, relation, rhs.into()));
        self.constraints.len() - 1
    }

    /// Interval of an expression over the variable box.
    pub fn bounds(&self, expr: &LinExpr) -> (f64, f64) {
        expr.terms().iter().fold((expr.constant, expr.constant), |(lo, hi), &(v, c)| {
            let var = self.var(v);
            if c > 0.0 {
                (lo + c * var.lower, hi + c * var.upper)
            } else {
                (lo + c * var.upper, hi + c * var.lower)
            }
        })
    }

    fn require_binary(&self, v: VarId) -> Result<(), LinearizeError> {
        if self.var(v).is_binary() {
            Ok(())
        } else {
            Err(LinearizeError::NotBinary(self.var(v).name.clone()))
        }
    }

    /// Fills every derived variable from the primary values already present.
    pub fn complete_assignment(&self, values: &mut [f64]) {
        complete_assignment(&self.vars, values);
    }
}

/// Evaluates derived variables in creation order.
pub fn complete_assignment(vars: &[Variable], values: &mut [f64]) {
    const TOL: f64 = 1e-7;
    for (i, var) in vars.iter().enumerate() {
        let value = match &var.derivation {
            Derivation::Primary => continue,
            Derivation::And(a, b) => values[a.index()] * values[b.index()],
            Derivation::Product { factor, indicator } => factor.evaluate(values) * indicator.evaluate(values),
            Derivation::Expr(e) => e.evaluate(values),
            Derivation::Success { a, b } => {
                if a.evaluate(values).abs() >= b.evaluate(values) - TOL {
                    1.0
                } else {
                    0.0
                }
            }
            Derivation::Sign { a, success } => {
                if values[success.index()] > 0.5 && a.evaluate(values) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Derivation::Rule(f) => f(values),
        };
        values[i] = value;
    }
}

/// Big-M for `expr`: the largest magnitude over the variable box plus a 10% margin.
pub fn size_big_m(f: &Formulation, expr: &LinExpr) -> Result<f64, LinearizeError> {
    for &(v, _) in expr.terms() {
        let var = f.var(v);
        if !var.lower.is_finite() || !var.upper.is_finite() {
            return Err(LinearizeError::Unbounded(var.name.clone()));
        }
    }
    let (lo, hi) = f.bounds(expr);
    Ok(lo.abs().max(hi.abs()) * (1.0 + BIG_M_MARGIN))
}

/// `c = a AND b` through `c ≤ a`, `c ≤ b`, `c ≥ a + b − 1`. Repeated calls
/// with the same pair return the same variable.
pub fn and_binary(f: &mut Formulation, a: VarId, b: VarId) -> Result<VarId, LinearizeError> {
    f.require_binary(a)?;
    f.require_binary(b)?;
    let key = if a <= b { (a, b) } else { (b, a) };
    if let Some(&c) = f.and_cache.get(&key) {
        return Ok(c);
    }
    let name = format!("and_{}_{}", f.var(key.0).name, f.var(key.1).name);
    let c = f.add_binary(&name, Derivation::And(key.0, key.1), 0);
    f.and_cache.insert(key, c);
    f.add_constraint(format!("{name}_le_a"), LinExpr::var(c) - LinExpr::var(a), Relation::Le, 0.0);
    f.add_constraint(format!("{name}_le_b"), LinExpr::var(c) - LinExpr::var(b), Relation::Le, 0.0);
    f.add_constraint(
        format!("{name}_ge"),
        LinExpr::var(c) - LinExpr::var(a) - LinExpr::var(b),
        Relation::Ge,
        -1.0,
    );
    Ok(c)
}

/// `Σ δ_k · fn(θ_k)`: the trigonometric value of the selected angle.
pub fn trig_of_selected_angle(decisions: &[VarId], angles: &[f64], func: Trig) -> Result<LinExpr, LinearizeError> {
    if decisions.len() != angles.len() {
        return Err(LinearizeError::LengthMismatch { decisions: decisions.len(), angles: angles.len() });
    }
    Ok(LinExpr::from_terms(0.0, decisions.iter().zip(angles).map(|(&d, &a)| (d, func.eval(a)))))
}

/// `fa(θ_a) · fb(θ_b)` expanded over all angle pairs with AND binaries.
pub fn trig_product(
    f: &mut Formulation,
    a: (&[VarId], &[f64], Trig),
    b: (&[VarId], &[f64], Trig),
) -> Result<LinExpr, LinearizeError> {
    let (da, aa, fa) = a;
    let (db, ab, fb) = b;
    if da.len() != aa.len() {
        return Err(LinearizeError::LengthMismatch { decisions: da.len(), angles: aa.len() });
    }
    if db.len() != ab.len() {
        return Err(LinearizeError::LengthMismatch { decisions: db.len(), angles: ab.len() });
    }
    let mut out = LinExpr::zero();
    for (&dk, &tk) in da.iter().zip(aa) {
        for (&dl, &tl) in db.iter().zip(ab) {
            let coef = fa.eval(tk) * fb.eval(tl);
            let c = and_binary(f, dk, dl)?;
            out.add_term(c, coef);
        }
    }
    Ok(out)
}

/// `x · fn(θ)` for a bounded expression `x` and one-hot angle decisions:
/// one auxiliary `x_k` per angle. With `L ≤ x·fn(θ_k) ≤ U` over the box:
///
/// ```text
/// x_k ≤ x·fn(θ_k) − L(1 − δ_k)    x_k ≥ x·fn(θ_k) − U(1 − δ_k)
/// x_k ≤ U·δ_k                     x_k ≥ L·δ_k
/// ```
///
/// This is the big-M pattern with each M taken from the side it guards,
/// which is exact at 0/1 and the tightest linear hull in between.
///
/// Returns `Σ x_k` and the auxiliaries.
pub fn continuous_times_trig(
    f: &mut Formulation,
    name: &str,
    x: &LinExpr,
    decisions: &[VarId],
    angles: &[f64],
    func: Trig,
) -> Result<(LinExpr, Vec<VarId>), LinearizeError> {
    if decisions.len() != angles.len() {
        return Err(LinearizeError::LengthMismatch { decisions: decisions.len(), angles: angles.len() });
    }
    let mut sum = LinExpr::zero();
    let mut aux = Vec::with_capacity(decisions.len());
    for (k, (&d, &theta)) in decisions.iter().zip(angles).enumerate() {
        f.require_binary(d)?;
        let scaled = x.scaled(func.eval(theta));
        // rejects unbounded factors
        size_big_m(f, &scaled)?;
        let (lo, hi) = f.bounds(&scaled);
        let xk = f.add_continuous(
            format!("{name}_{k}"),
            lo.min(0.0),
            hi.max(0.0),
            Derivation::Product { factor: scaled.clone(), indicator: LinExpr::var(d) },
        )?;
        add_product_rows(f, &format!("{name}_{k}"), xk, &scaled, &LinExpr::var(d), (lo, hi));
        sum.add_term(xk, 1.0);
        aux.push(xk);
    }
    Ok((sum, aux))
}

/// `p = x · ind` for a bounded expression `x` and a 0/1 valued indicator
/// expression, with the same four rows as [`continuous_times_trig`].
pub fn expr_times_indicator(
    f: &mut Formulation,
    name: &str,
    x: &LinExpr,
    indicator: &LinExpr,
) -> Result<VarId, LinearizeError> {
    // rejects unbounded factors
    size_big_m(f, x)?;
    let (lo, hi) = f.bounds(x);
    let p = f.add_continuous(
        name,
        lo.min(0.0),
        hi.max(0.0),
        Derivation::Product { factor: x.clone(), indicator: indicator.clone() },
    )?;
    add_product_rows(f, name, p, x, indicator, (lo, hi));
    Ok(p)
}

/// `p = x·ind` for `x ∈ [lo, hi]`; see [`continuous_times_trig`].
fn add_product_rows(f: &mut Formulation, name: &str, p: VarId, x: &LinExpr, ind: &LinExpr, (lo, hi): (f64, f64)) {
    let pv = LinExpr::var(p);
    let off = LinExpr::constant(1.0) - ind.clone();
    f.add_constraint(format!("{name}_ub"), &pv - x, Relation::Le, off.scaled(-lo));
    f.add_constraint(format!("{name}_lb"), &pv - x, Relation::Ge, off.scaled(-hi));
    f.add_constraint(format!("{name}_on_ub"), pv.clone(), Relation::Le, ind.scaled(hi));
    f.add_constraint(format!("{name}_on_lb"), pv, Relation::Ge, ind.scaled(lo));
}

/// Handles returned by [`abs_disjunction`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Disjunction {
    pub sign: VarId,
    pub success: VarId,
    /// Index of the first of the four emitted constraints.
    pub first_row: usize,
}

/// `|a| ≥ b` (with `b ≥ 0`) as four big-M rows over `δ_sgn` and `δ_suc`:
///
/// ```text
/// a ≥  b − M(1 − δ_sgn) − M(1 − δ_suc)
/// a ≤ −b + M·δ_sgn + M(1 − δ_suc)
/// a ≤  b + M·δ_suc
/// a ≥ −b − M·δ_suc
/// ```
///
/// `δ_suc = 1` certifies the condition. Each row gets its own M, sized so the
/// row is slack everywhere in the box whenever its indicators switch it off.
pub fn abs_disjunction(
    f: &mut Formulation,
    name: &str,
    a: &LinExpr,
    b: &LinExpr,
    priority: u8,
) -> Result<Disjunction, LinearizeError> {
    let success = f.add_binary(format!("{name}_suc"), Derivation::Success { a: a.clone(), b: b.clone() }, priority);
    let sign = f.add_binary(format!("{name}_sgn"), Derivation::Sign { a: a.clone(), success }, priority);
    let diff = a - b; // a - b
    let sum = a + b; // a + b
    // Row 1 off: a - b ≥ -M1 (M1 ≥ 2·max(b - a) covers both indicators off).
    let m1 = size_big_m(f, &diff)?;
    let m2 = size_big_m(f, &sum)?;
    let m3 = m1;
    let m4 = m2;
    let s = LinExpr::var(success);
    let g = LinExpr::var(sign);
    let one = LinExpr::constant(1.0);
    let first_row = f.add_constraint(
        format!("{name}_pos"),
        a.clone(),
        Relation::Ge,
        b - &((&one - &g).scaled(m1) + (&one - &s).scaled(m1)),
    );
    f.add_constraint(
        format!("{name}_neg"),
        a.clone(),
        Relation::Le,
        -b + g.scaled(m2) + (&one - &s).scaled(m2),
    );
    f.add_constraint(format!("{name}_in_ub"), a.clone(), Relation::Le, b + &s.scaled(m3));
    f.add_constraint(format!("{name}_in_lb"), a.clone(), Relation::Ge, -b - s.scaled(m4));
    Ok(Disjunction { sign, success, first_row })
}
