//! Branch and bound over the binaries of an [`MiqpModel`], with a convex QP
//! relaxation at every node.
//!
//! The search dives depth-first until it holds a feasible design, then
//! switches to best-bound order. Nodes are processed in fixed-size batches in
//! parallel; results are merged in node order so the search is reproducible
//! for any thread count (short of hitting the time limit).

mod heuristic;
mod propagate;
mod pseudocost;
mod qp;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MiqpModel;
use pseudocost::Pseudocosts;
pub use propagate::propagate;
pub use qp::{solve_relaxation, Relaxation, SparseModel, SparseRow};

/// Candidates examined for strong branching, and at most how many of them
/// are probed per node.
const STRONG_CANDIDATES: usize = 16;
const STRONG_PROBES: usize = 8;

/// Nodes between two runs of the guided dive, and its node budget.
const HEURISTIC_EVERY: u64 = 1000;
const HEURISTIC_BUDGET: u64 = 200;

/// Integrality and feasibility tolerance for accepted designs.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative gap that certifies optimality.
    pub gap_tol: f64,
    /// Looser relative gap at which to stop early (status gap-limit).
    pub gap_limit: Option<f64>,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Nodes processed together; keeps the search independent of `threads`.
    pub batch_size: usize,
    /// Progress line every this many nodes (0 disables).
    pub log_every: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 0.0, gap_limit: None, time_limit: None, node_limit: None, threads: 0, batch_size: 16, log_every: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap-limit",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum.
    pub bound: f64,
    pub gap: Option<f64>,
    pub nodes: u64,
    pub elapsed: Duration,
    /// Relaxations that failed twice and were bounded by their parent.
    pub qp_failures: u64,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("warm start has {got} values, the model has {want} variables")]
    WarmStartLength { got: usize, want: usize },
    #[error("could not start the thread pool: {0}")]
    ThreadPool(String),
}

/// Relative gap between an incumbent and a bound.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-12)).max(0.0)
}

struct Node {
    id: u64,
    /// Parent's relaxation bound.
    bound: f64,
    /// Branching decisions from the root: (variable, value).
    fixes: Vec<(u32, bool)>,
    /// How far the last decision moved its variable from the parent's relaxation.
    step: f64,
}

struct Open(Node);

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    // max-heap: smallest bound first, then smallest id
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.bound.total_cmp(&self.0.bound).then(o.0.id.cmp(&self.0.id))
    }
}

enum Outcome {
    Pruned,
    /// Bound reached the cutoff; kept for the final bound when the cutoff
    /// includes the gap tolerance.
    Cut(f64),
    /// Integral relaxation; carries the polished design if it checks out.
    Leaf { bound: f64, design: Option<(f64, Vec<f64>)> },
    Branch { bound: f64, var: usize, value: f64, up_first: bool, x: Option<Vec<f64>> },
}

struct Ctx<'a> {
    model: &'a MiqpModel,
    sparse: SparseModel,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    priority: Vec<u8>,
    pairs: Vec<Vec<heuristic::Direction>>,
}

impl Ctx<'_> {
    fn node_box(&self, fixes: &[(u32, bool)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lb = self.root_lb.clone();
        let mut ub = self.root_ub.clone();
        let mut touched = Vec::with_capacity(fixes.len());
        for &(j, up) in fixes {
            let j = j as usize;
            let v = if up { 1.0 } else { 0.0 };
            if v < lb[j] || v > ub[j] {
                return None;
            }
            lb[j] = v;
            ub[j] = v;
            touched.push(j);
        }
        propagate(&self.sparse, &mut lb, &mut ub, Some(&touched)).then_some((lb, ub))
    }

    /// Checks a full assignment against every row, bound and integrality.
    fn accept(&self, x: &[f64]) -> Option<f64> {
        let ok_rows = self.model.worst_violation(x).is_none_or(|(v, _)| v <= FEASIBILITY_TOLERANCE);
        let ok_bounds = self.model.bound_violation(x, FEASIBILITY_TOLERANCE).is_none();
        (ok_rows && ok_bounds).then(|| self.model.objective.evaluate(x))
    }

    /// Fixes the binaries of `x` and re-solves for the continuous part.
    fn polish(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut lb = self.root_lb.clone();
        let mut ub = self.root_ub.clone();
        let mut touched = Vec::new();
        for j in 0..x.len() {
            if self.sparse.binary[j] {
                let v = x[j].round();
                if v < lb[j] || v > ub[j] {
                    return None;
                }
                lb[j] = v;
                ub[j] = v;
                touched.push(j);
            }
        }
        if !propagate(&self.sparse, &mut lb, &mut ub, Some(&touched)) {
            return None;
        }
        match solve_relaxation(&self.sparse, &lb, &ub) {
            Relaxation::Solved { mut x, .. } => {
                for j in 0..x.len() {
                    if self.sparse.binary[j] {
                        x[j] = x[j].round();
                    }
                }
                self.accept(&x).map(|f| (f, x))
            }
            _ => None,
        }
    }

    /// Bound of the child that adds `(var, up)` to `fixes`; `None` when the
    /// child is infeasible.
    fn child_bound(&self, fixes: &[(u32, bool)], var: usize, up: bool, parent: f64) -> Option<f64> {
        let mut f = fixes.to_vec();
        f.push((var as u32, up));
        let (lb, ub) = self.node_box(&f)?;
        match solve_relaxation(&self.sparse, &lb, &ub) {
            Relaxation::Solved { bound, .. } => Some(bound.max(parent)),
            Relaxation::Infeasible => None,
            Relaxation::Failed(_) => Some(parent),
        }
    }

    fn process(&self, node: &Node, cutoff: f64, pc: &Pseudocosts, strong: bool) -> Processed {
        let done = |outcome, failed| Processed { outcome, failed, observed: Vec::new() };
        let Some((lb, ub)) = self.node_box(&node.fixes) else { return done(Outcome::Pruned, false) };
        let (x, bound, failed) = match solve_relaxation(&self.sparse, &lb, &ub) {
            Relaxation::Solved { x, bound, .. } => (Some(x), bound.max(node.bound), false),
            Relaxation::Infeasible => return done(Outcome::Pruned, false),
            Relaxation::Failed(_) => (None, node.bound, true),
        };
        if bound >= cutoff {
            return done(Outcome::Cut(bound), failed);
        }
        let free = |j: usize| self.sparse.binary[j] && lb[j] != ub[j];
        let Some(x) = x else {
            // no relaxation to guide the choice: highest priority, then lowest index
            let pick = (0..self.sparse.n).filter(|&j| free(j)).min_by_key(|&j| std::cmp::Reverse(self.priority[j]));
            return match pick {
                Some(var) => done(Outcome::Branch { bound, var, value: 0.5, up_first: false, x: None }, failed),
                // every binary is fixed, so the polish QP is the whole region
                None => done(Outcome::Leaf { bound, design: self.polish(&lb) }, failed),
            };
        };
        let fractional: Vec<usize> = (0..self.sparse.n)
            .filter(|&j| free(j) && (x[j] - x[j].floor()).min(x[j].ceil() - x[j]) > FEASIBILITY_TOLERANCE)
            .collect();
        // implied binaries only once nothing else is fractional
        let explicit: Vec<usize> = fractional.iter().copied().filter(|&j| self.priority[j] > 0).collect();
        let mut candidates: Vec<(f64, usize)> =
            (if explicit.is_empty() { &fractional } else { &explicit }).iter().map(|&j| (pc.score(j, x[j]), j)).collect();
        if candidates.is_empty() {
            return done(Outcome::Leaf { bound, design: self.polish(&x) }, failed);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        // strong branching on the most promising candidates without a reliable history
        let mut observed = Vec::new();
        let mut probes = 0;
        for c in candidates.iter_mut().take(STRONG_CANDIDATES) {
            let j = c.1;
            if !strong || pc.reliable(j) || probes >= STRONG_PROBES {
                continue;
            }
            probes += 1;
            let down = self.child_bound(&node.fixes, j, false, bound);
            let up = self.child_bound(&node.fixes, j, true, bound);
            for (child, is_up, step) in [(down, false, x[j]), (up, true, 1.0 - x[j])] {
                if let Some(b) = child {
                    observed.push((j, is_up, step, b - bound));
                }
            }
            match (down, up) {
                (None, None) => return Processed { outcome: Outcome::Pruned, failed, observed },
                (Some(d), Some(u)) if d >= cutoff && u >= cutoff => {
                    return Processed { outcome: Outcome::Cut(d.min(u)), failed, observed }
                }
                _ => {}
            }
            // an infeasible or cut child makes this the variable to branch on
            let gain = |b: Option<f64>| b.map_or(f64::INFINITY, |b| if b >= cutoff { f64::INFINITY } else { b - bound });
            c.0 = Pseudocosts::product(gain(down).min(1e6), gain(up).min(1e6));
        }
        let &(_, var) = candidates
            .iter()
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .expect("non-empty");
        let value = x[var];
        Processed { outcome: Outcome::Branch { bound, var, value, up_first: value >= 0.5, x: Some(x) }, failed, observed }
    }
}

/// Result of one node, with the strong-branching gains it measured.
struct Processed {
    outcome: Outcome,
    failed: bool,
    observed: Vec<(usize, bool, f64, f64)>,
}

/// Runs branch and bound. `warm` is an optional full assignment used as the
/// first incumbent when it is feasible.
pub fn solve(model: &MiqpModel, opts: &SolverOptions, warm: Option<&[f64]>) -> Result<SolveResult, SolveError> {
    if let Some(w) = warm {
        if w.len() != model.vars.len() {
            return Err(SolveError::WarmStartLength { got: w.len(), want: model.vars.len() });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| SolveError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| search(model, opts, warm)))
}

fn search(model: &MiqpModel, opts: &SolverOptions, warm: Option<&[f64]>) -> SolveResult {
    let start = Instant::now();
    let sparse = SparseModel::new(model);
    let mut root_lb = sparse.lower.clone();
    let mut root_ub = sparse.upper.clone();
    let finish = |status, incumbent: Option<(f64, Vec<f64>)>, bound: f64, nodes, failures| {
        let gap = incumbent.as_ref().map(|(f, _)| relative_gap(*f, bound));
        SolveResult {
            status,
            objective: incumbent.as_ref().map(|(f, _)| *f),
            bound,
            gap,
            nodes,
            elapsed: start.elapsed(),
            qp_failures: failures,
            values: incumbent.map(|(_, x)| x),
        }
    };
    if !propagate(&sparse, &mut root_lb, &mut root_ub, None) {
        return finish(SolveStatus::Infeasible, None, f64::INFINITY, 0, 0);
    }
    let ctx = Ctx {
        model,
        priority: model.vars.iter().map(|v| v.priority).collect(),
        pairs: heuristic::pair_directions(model),
        sparse,
        root_lb,
        root_ub,
    };

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    if let Some(w) = warm {
        if let Some(f) = ctx.accept(w) {
            incumbent = Some((f, w.to_vec()));
            if let Some((g, x)) = ctx.polish(w) {
                if g < f {
                    incumbent = Some((g, x));
                }
            }
        } else {
            log::warn!("warm start is not feasible; ignored");
        }
    }

    let mut nodes = 0u64;
    let mut pc = Pseudocosts::new(ctx.sparse.n);
    let mut branched = vec![0u64; ctx.sparse.n];
    if !ctx.pairs.is_empty() {
        if let Relaxation::Solved { x, .. } = solve_relaxation(&ctx.sparse, &ctx.root_lb, &ctx.root_ub) {
            let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(f, _)| *f);
            let budget = opts.node_limit.map_or(HEURISTIC_BUDGET, |n| n.min(HEURISTIC_BUDGET));
            let (found, used) = ctx.dive(ctx.guided_fixes(&x), budget, cutoff, &pc);
            nodes += used;
            if let Some(d) = found {
                log::info!("heuristic design {:.6e} at the root", d.0);
                incumbent = Some(d);
            }
        }
    }

    // bounds within this of the incumbent count as equal to it
    let exact_slack = |f: f64| 1e-9 * f.abs().max(1.0);
    let stop_gap = opts.gap_tol.max(opts.gap_limit.unwrap_or(0.0));
    let cutoff_of = |inc: &Option<(f64, Vec<f64>)>| match inc {
        Some((f, _)) => f - (stop_gap * f.abs()).max(exact_slack(*f)),
        None => f64::INFINITY,
    };
    // records a node discarded by the cutoff that might still beat the incumbent
    let note_cut = |pruned: &mut f64, bound: f64, inc: &Option<(f64, Vec<f64>)>| {
        if let Some((f, _)) = inc {
            if bound < f - exact_slack(*f) {
                *pruned = pruned.min(bound);
            }
        }
    };
    let mut stack: Vec<Node> = Vec::new();
    let mut heap: BinaryHeap<Open> = BinaryHeap::new();
    let root = Node { id: 0, bound: f64::NEG_INFINITY, fixes: Vec::new(), step: 0.0 };
    if incumbent.is_some() {
        heap.push(Open(root));
    } else {
        stack.push(root);
    }
    let mut next_id = 1u64;
    let mut next_heuristic = HEURISTIC_EVERY;
    let mut failures = 0u64;
    // smallest bound among nodes discarded only because of the gap tolerance
    let mut tolerance_pruned = f64::INFINITY;
    let batch = opts.batch_size.max(1);
    let mut next_log = opts.log_every;

    let open_bound = |stack: &Vec<Node>, heap: &BinaryHeap<Open>| {
        let s = stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let h = heap.peek().map_or(f64::INFINITY, |o| o.0.bound);
        s.min(h)
    };

    let status = loop {
        let bound_now = open_bound(&stack, &heap).min(tolerance_pruned);
        if stack.is_empty() && heap.is_empty() {
            break None;
        }
        if let Some((f, _)) = &incumbent {
            let gap = relative_gap(*f, bound_now.min(*f));
            if gap <= opts.gap_tol {
                break Some(SolveStatus::Optimal);
            }
            if opts.gap_limit.is_some_and(|g| gap <= g) {
                break Some(SolveStatus::GapLimit);
            }
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break Some(SolveStatus::TimeLimit);
        }
        if opts.node_limit.is_some_and(|n| nodes >= n) {
            break Some(SolveStatus::NodeLimit);
        }

        let cutoff = cutoff_of(&incumbent);
        let mut work = Vec::with_capacity(batch);
        while work.len() < batch {
            let node = if incumbent.is_none() {
                stack.pop()
            } else {
                heap.pop().map(|o| o.0)
            };
            match node {
                Some(n) if n.bound >= cutoff => note_cut(&mut tolerance_pruned, n.bound, &incumbent),
                Some(n) => work.push(n),
                None => break,
            }
        }
        if work.is_empty() {
            continue;
        }
        let results: Vec<Processed> = work.par_iter().map(|n| ctx.process(n, cutoff, &pc, true)).collect();
        nodes += work.len() as u64;
        let had_incumbent = incumbent.is_some();
        let mut children: Vec<Node> = Vec::new();
        let mut guide: Option<Vec<f64>> = None;
        for (node, Processed { outcome, failed, observed }) in work.into_iter().zip(results) {
            failures += u64::from(failed);
            for (var, up, step, gain) in observed {
                pc.record(var, up, step, gain);
            }
            if let (Some(&(var, up)), false) = (node.fixes.last(), failed) {
                let solved = match &outcome {
                    Outcome::Cut(b) | Outcome::Leaf { bound: b, .. } | Outcome::Branch { bound: b, .. } => Some(*b),
                    Outcome::Pruned => None,
                };
                if let Some(b) = solved.filter(|_| node.bound.is_finite()) {
                    pc.record(var as usize, up, node.step, b - node.bound);
                }
            }
            match outcome {
                Outcome::Pruned => {}
                Outcome::Cut(bound) => note_cut(&mut tolerance_pruned, bound, &incumbent),
                Outcome::Leaf { bound, design } => {
                    match design {
                        Some((f, x)) => {
                            if incumbent.as_ref().is_none_or(|(g, _)| f < *g) {
                                incumbent = Some((f, x));
                            }
                            // a solved leaf is closed: its optimum is the design found
                        }
                        None => {
                            // integral relaxation that failed the final check
                            failures += 1;
                            tolerance_pruned = tolerance_pruned.min(bound);
                        }
                    }
                }
                Outcome::Branch { bound, var, value, up_first, x } => {
                    branched[var] += 1;
                    if guide.is_none() {
                        guide = x;
                    }
                    let mk = |up: bool, id: u64| {
                        let mut fixes = node.fixes.clone();
                        fixes.push((var as u32, up));
                        Node { id, bound, fixes, step: if up { 1.0 - value } else { value } }
                    };
                    // the preferred child goes last so the dive pops it first
                    let second = mk(!up_first, next_id);
                    let first = mk(up_first, next_id + 1);
                    next_id += 2;
                    children.push(second);
                    children.push(first);
                }
            }
        }
        if nodes >= next_heuristic && !ctx.pairs.is_empty() {
            next_heuristic = nodes + HEURISTIC_EVERY;
            if let Some(x) = guide {
                let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(f, _)| *f - exact_slack(*f));
                let left = opts.node_limit.map_or(HEURISTIC_BUDGET, |n| n.saturating_sub(nodes));
                let (found, used) = ctx.dive(ctx.guided_fixes(&x), left.min(HEURISTIC_BUDGET), cutoff, &pc);
                nodes += used;
                if let Some(d) = found {
                    log::info!("heuristic design {:.6e} after {nodes} nodes", d.0);
                    incumbent = Some(d);
                }
            }
        }
        if incumbent.is_none() {
            stack.extend(children);
        } else {
            if !had_incumbent {
                heap.extend(stack.drain(..).map(Open));
            }
            heap.extend(children.into_iter().map(Open));
        }
        if opts.log_every > 0 && nodes >= next_log {
            next_log += opts.log_every;
            let bound = open_bound(&stack, &heap).min(tolerance_pruned);
            match &incumbent {
                Some((f, _)) => log::info!(
                    "nodes {nodes:>8}  open {:>7}  incumbent {f:.6e}  bound {bound:.6e}  gap {:.3}%  failed {failures}  {:.1}s",
                    stack.len() + heap.len(),
                    100.0 * relative_gap(*f, bound),
                    start.elapsed().as_secs_f64()
                ),
                None => log::info!(
                    "nodes {nodes:>8}  open {:>7}  no incumbent  bound {bound:.6e}  {:.1}s",
                    stack.len() + heap.len(),
                    start.elapsed().as_secs_f64()
                ),
            }
        }
    };

    if log::log_enabled!(log::Level::Debug) {
        let mut top: Vec<(u64, usize)> = branched.iter().enumerate().map(|(j, &c)| (c, j)).filter(|p| p.0 > 0).collect();
        top.sort_by(|a, b| b.cmp(a));
        for (c, j) in top.into_iter().take(30) {
            log::debug!("branched {c:>8}  {}", model.vars[j].name);
        }
    }
    let open = open_bound(&stack, &heap).min(tolerance_pruned);
    match incumbent {
        None => {
            let st = status.unwrap_or(SolveStatus::Infeasible);
            let bound = if st == SolveStatus::Infeasible { f64::INFINITY } else { open };
            finish(st, None, bound, nodes, failures)
        }
        Some(inc) => {
            let bound = open.min(inc.0);
            let st = match status {
                Some(st) => st,
                None if relative_gap(inc.0, bound) <= opts.gap_tol => SolveStatus::Optimal,
                None => SolveStatus::GapLimit,
            };
            finish(st, Some(inc), bound, nodes, failures)
        }
    }
}
