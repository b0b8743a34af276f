//! Continuous QP relaxation over a variable box, solved with Clarabel.
//!
//! Fixed variables are substituted out and rows that cannot bind inside the
//! box are dropped, so deep nodes solve much smaller problems.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::linearize::Relation;
use crate::model::MiqpModel;

/// Row-major copy of the model in range form `lo ≤ a·x ≤ hi`.
#[derive(Clone, Debug)]
pub struct SparseModel {
    pub n: usize,
    pub rows: Vec<SparseRow>,
    /// Row indices and coefficients per column.
    pub cols: Vec<Vec<(usize, f64)>>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub binary: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SparseRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl SparseModel {
    pub fn new(model: &MiqpModel) -> Self {
        let n = model.vars.len();
        let mut cols = vec![Vec::new(); n];
        let rows: Vec<SparseRow> = model
            .constraints
            .iter()
            .enumerate()
            .map(|(r, c)| {
                let terms: Vec<(usize, f64)> = c.expr.terms().iter().map(|&(v, a)| (v.index(), a)).collect();
                for &(j, a) in &terms {
                    cols[j].push((r, a));
                }
                let (lo, hi) = match c.relation {
                    Relation::Le => (f64::NEG_INFINITY, c.rhs),
                    Relation::Ge => (c.rhs, f64::INFINITY),
                    Relation::Eq => (c.rhs, c.rhs),
                };
                SparseRow { terms, lo, hi }
            })
            .collect();
        let mut linear = vec![0.0; n];
        for &(v, c) in model.objective.linear.terms() {
            linear[v.index()] += c;
        }
        SparseModel {
            n,
            rows,
            cols,
            quadratic: model
                .objective
                .quadratic
                .iter()
                .map(|&(i, j, q)| (i.index().min(j.index()), i.index().max(j.index()), q))
                .collect(),
            linear,
            constant: model.objective.linear.constant,
            binary: model.vars.iter().map(|v| v.is_binary()).collect(),
            lower: model.vars.iter().map(|v| v.lower).collect(),
            upper: model.vars.iter().map(|v| v.upper).collect(),
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            + self.quadratic.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub enum Relaxation {
    Solved {
        x: Vec<f64>,
        objective: f64,
        /// Valid lower bound (the smaller of primal and dual objective).
        bound: f64,
    },
    Infeasible,
    Failed(String),
}

fn settings(retry: bool) -> DefaultSettings<f64> {
    let mut b = DefaultSettingsBuilder::default();
    b.verbose(false).max_threads(1u32).presolve_enable(false);
    if retry {
        b.max_iter(400u32).equilibrate_max_iter(50u32).static_regularization_constant(1e-7);
    } else {
        b.max_iter(150u32);
    }
    b.build().expect("valid solver settings")
}

/// Solves the relaxation over `[lb, ub]`. A failed solve is retried once
/// with more conservative settings.
pub fn solve_relaxation(m: &SparseModel, lb: &[f64], ub: &[f64]) -> Relaxation {
    match solve_once(m, lb, ub, false) {
        Relaxation::Failed(_) => solve_once(m, lb, ub, true),
        r => r,
    }
}

const FIXED: f64 = 1e-12;
const ROW_TOL: f64 = 1e-9;

/// Shrinks the binary coefficients of `terms · z ≤ hi` to what the box
/// needs: the row stays exact at every 0/1 value of each binary and gets
/// tighter in between. `amax` is the row's largest activity over the box,
/// with binaries free in `[0, 1]`. Returns the new right-hand side.
fn tighten(terms: &mut [(usize, f64)], mut hi: f64, mut amax: f64, is_binary: impl Fn(usize) -> bool) -> f64 {
    for t in terms.iter_mut() {
        let (k, a) = *t;
        if !is_binary(k) || a == 0.0 {
            continue;
        }
        let rest = amax - a.max(0.0);
        // slack of the row at the relaxing value of the binary
        let d = if a > 0.0 { hi - rest } else { hi - a - rest };
        if d <= 1e-9 * (1.0 + hi.abs()) || d >= a.abs() {
            continue;
        }
        if a > 0.0 {
            t.1 = a - d;
            hi -= d;
            amax = rest + t.1;
        } else {
            t.1 = a + d;
        }
    }
    hi
}

fn solve_once(m: &SparseModel, lb: &[f64], ub: &[f64], retry: bool) -> Relaxation {
    let n = m.n;
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::new();
    let mut x = vec![0.0; n];
    for j in 0..n {
        if ub[j] - lb[j] > FIXED {
            index[j] = free.len();
            free.push(j);
        } else {
            x[j] = 0.5 * (lb[j] + ub[j]);
        }
    }
    let nf = free.len();

    // objective: ½ zᵀPz + qᵀz + c over the free variables z
    let mut constant = m.constant;
    let mut q = vec![0.0; nf];
    for j in 0..n {
        let c = m.linear[j];
        if c != 0.0 {
            if index[j] == usize::MAX {
                constant += c * x[j];
            } else {
                q[index[j]] += c;
            }
        }
    }
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in &m.quadratic {
        match (index[i] != usize::MAX, index[j] != usize::MAX) {
            (true, true) => {
                let (a, b) = (index[i].min(index[j]), index[i].max(index[j]));
                pi.push(a);
                pj.push(b);
                pv.push(if i == j { 2.0 * v } else { v });
            }
            (true, false) => q[index[i]] += v * x[j],
            (false, true) => q[index[j]] += v * x[i],
            (false, false) => constant += v * x[i] * x[j],
        }
    }

    // rows: equalities first (zero cone), then inequalities and bounds
    let mut eq: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut ineq: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for row in &m.rows {
        let mut c = 0.0;
        let (mut amin, mut amax) = (0.0, 0.0);
        let mut terms = Vec::with_capacity(row.terms.len());
        for &(j, a) in &row.terms {
            if index[j] == usize::MAX {
                c += a * x[j];
            } else {
                terms.push((index[j], a));
                if a > 0.0 {
                    amin += a * lb[j];
                    amax += a * ub[j];
                } else {
                    amin += a * ub[j];
                    amax += a * lb[j];
                }
            }
        }
        let scale = 1.0 + row.lo.abs().min(row.hi.abs()).min(1e6);
        let (lo, hi) = (row.lo - c, row.hi - c);
        if terms.is_empty() {
            if lo > ROW_TOL * scale || hi < -ROW_TOL * scale {
                return Relaxation::Infeasible;
            }
            continue;
        }
        if amin > hi + 1e-7 * scale || amax < lo - 1e-7 * scale {
            return Relaxation::Infeasible;
        }
        if lo == hi {
            eq.push((terms, hi));
            continue;
        }
        let is_binary = |k: usize| m.binary[free[k]];
        if hi.is_finite() && amax > hi + ROW_TOL {
            let mut t = terms.clone();
            let h = tighten(&mut t, hi, amax, is_binary);
            ineq.push((t, h));
        }
        if lo.is_finite() && amin < lo - ROW_TOL {
            let mut t: Vec<(usize, f64)> = terms.iter().map(|&(k, a)| (k, -a)).collect();
            let h = tighten(&mut t, -lo, -amin, is_binary);
            ineq.push((t, h));
        }
    }
    for (k, &j) in free.iter().enumerate() {
        ineq.push((vec![(k, 1.0)], ub[j]));
        ineq.push((vec![(k, -1.0)], -lb[j]));
    }

    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::with_capacity(eq.len() + ineq.len());
    for (r, (terms, rhs)) in eq.iter().chain(ineq.iter()).enumerate() {
        for &(k, a) in terms {
            ai.push(r);
            aj.push(k);
            av.push(a);
        }
        b.push(*rhs);
    }
    let rows = b.len();
    let p = CscMatrix::new_from_triplets(nf, nf, pi, pj, pv);
    let a = CscMatrix::new_from_triplets(rows, nf, ai, aj, av);
    let mut cones = Vec::new();
    if !eq.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eq.len()));
    }
    cones.push(SupportedConeT::NonnegativeConeT(ineq.len()));
    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings(retry)) {
        Ok(s) => s,
        Err(e) => return Relaxation::Failed(e.to_string()),
    };
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            for (k, &j) in free.iter().enumerate() {
                x[j] = sol.x[k].clamp(lb[j], ub[j]);
            }
            let objective = sol.obj_val + constant;
            let dual = sol.obj_val_dual + constant;
            let mut bound = objective.min(dual);
            if sol.status == SolverStatus::AlmostSolved {
                bound -= 1e-6 * (1.0 + bound.abs());
            }
            Relaxation::Solved { x, objective, bound }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Relaxation::Infeasible,
        s => Relaxation::Failed(format!("{s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(quadratic: Vec<(usize, usize, f64)>, linear: Vec<f64>, rows: Vec<SparseRow>, lower: Vec<f64>, upper: Vec<f64>) -> SparseModel {
        let n = linear.len();
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                cols[j].push((r, a));
            }
        }
        SparseModel { n, rows, cols, quadratic, linear, constant: 0.0, binary: vec![false; n], lower, upper }
    }

    #[test]
    fn tightened_rows_keep_every_integer_point() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            // two binaries then two continuous variables on random boxes
            let lo = [0.0, 0.0, rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)];
            let up = [1.0, 1.0, rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let hi = rng.random_range(-2.0..4.0);
            let amax: f64 = (0..4).map(|k| (a[k] * lo[k]).max(a[k] * up[k])).sum();
            let mut terms: Vec<(usize, f64)> = a.iter().copied().enumerate().collect();
            let new_hi = tighten(&mut terms, hi, amax, |k| k < 2);
            let act = |t: &[(usize, f64)], x: &[f64]| t.iter().map(|&(k, c)| c * x[k]).sum::<f64>();
            let orig: Vec<(usize, f64)> = a.iter().copied().enumerate().collect();
            for _ in 0..50 {
                let mut x: Vec<f64> = (0..4).map(|k| rng.random_range(lo[k]..=up[k])).collect();
                let fractional = x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0;
                let tight_ok = act(&terms, &x) <= new_hi + 1e-9;
                let orig_ok = act(&orig, &x) <= hi + 1e-9;
                // never looser, anywhere in the box
                assert!(!tight_ok || orig_ok || !fractional, "{a:?} {hi} {x:?}");
                x[0] = x[0].round();
                x[1] = x[1].round();
                assert_eq!(act(&terms, &x) <= new_hi + 1e-9, act(&orig, &x) <= hi + 1e-9, "{a:?} {hi} {x:?}");
            }
        }
    }

    #[test]
    fn projection_onto_halfplane() {
        // min (x-2)² + (y-2)²  s.t. x + y ≤ 2  →  (1, 1), value 2
        let mut m = model(
            vec![(0, 0, 1.0), (1, 1, 1.0)],
            vec![-4.0, -4.0],
            vec![SparseRow { terms: vec![(0, 1.0), (1, 1.0)], lo: f64::NEG_INFINITY, hi: 2.0 }],
            vec![-10.0, -10.0],
            vec![10.0, 10.0],
        );
        m.constant = 8.0;
        let Relaxation::Solved { x, objective, bound } = solve_relaxation(&m, &m.lower.clone(), &m.upper.clone()) else {
            panic!("expected a solution")
        };
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        assert!((objective - 2.0).abs() < 1e-6);
        assert!(bound <= objective + 1e-9);
    }

    #[test]
    fn fixed_variables_are_substituted() {
        // x fixed at 3: min (x - y)² with y ≤ 1 → 4
        let m = model(
            vec![(0, 0, 1.0), (0, 1, -2.0), (1, 1, 1.0)],
            vec![0.0, 0.0],
            vec![],
            vec![3.0, -5.0],
            vec![3.0, 1.0],
        );
        let Relaxation::Solved { objective, .. } = solve_relaxation(&m, &m.lower.clone(), &m.upper.clone()) else {
            panic!()
        };
        assert!((objective - 4.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        let m = model(
            vec![],
            vec![1.0, 1.0],
            vec![
                SparseRow { terms: vec![(0, 1.0), (1, 1.0)], lo: 5.0, hi: f64::INFINITY },
                SparseRow { terms: vec![(0, 1.0), (1, -1.0)], lo: 0.0, hi: 0.0 },
            ],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
        );
        assert!(matches!(solve_relaxation(&m, &m.lower.clone(), &m.upper.clone()), Relaxation::Infeasible));
    }
}
