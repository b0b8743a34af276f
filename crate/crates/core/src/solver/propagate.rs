//! Activity-based bound tightening.

use std::collections::VecDeque;

use super::qp::SparseModel;

/// Feasibility slack allowed before a row is declared violated.
const FEAS_TOL: f64 = 1e-7;
/// Binaries are rounded once their bound moves this far.
const INT_TOL: f64 = 1e-6;

/// Tightens `[lb, ub]` in place. Returns `false` when some row cannot be
/// satisfied inside the box.
pub fn propagate(m: &SparseModel, lb: &mut [f64], ub: &mut [f64], touched: Option<&[usize]>) -> bool {
    let mut queued = vec![false; m.rows.len()];
    let mut queue = VecDeque::new();
    match touched {
        Some(vars) => {
            for &j in vars {
                for &(r, _) in &m.cols[j] {
                    if !queued[r] {
                        queued[r] = true;
                        queue.push_back(r);
                    }
                }
            }
        }
        None => {
            queue.extend(0..m.rows.len());
            queued.iter_mut().for_each(|q| *q = true);
        }
    }
    let mut budget = 40 * m.rows.len().max(1);
    while let Some(r) = queue.pop_front() {
        queued[r] = false;
        if budget == 0 {
            break;
        }
        budget -= 1;
        let row = &m.rows[r];
        let (mut amin, mut amax) = (0.0, 0.0);
        for &(j, a) in &row.terms {
            if a > 0.0 {
                amin += a * lb[j];
                amax += a * ub[j];
            } else {
                amin += a * ub[j];
                amax += a * lb[j];
            }
        }
        let scale = 1.0 + amin.abs().max(amax.abs()).min(1e6);
        if amin > row.hi + FEAS_TOL * scale || amax < row.lo - FEAS_TOL * scale {
            return false;
        }
        for &(j, a) in &row.terms {
            let (cmin, cmax) = if a > 0.0 { (a * lb[j], a * ub[j]) } else { (a * ub[j], a * lb[j]) };
            let (mut new_lb, mut new_ub) = (lb[j], ub[j]);
            if row.hi.is_finite() {
                // a·x_j ≤ hi − (rest at its minimum)
                let lim = (row.hi - (amin - cmin)) / a;
                if a > 0.0 {
                    new_ub = new_ub.min(lim);
                } else {
                    new_lb = new_lb.max(lim);
                }
            }
            if row.lo.is_finite() {
                let lim = (row.lo - (amax - cmax)) / a;
                if a > 0.0 {
                    new_lb = new_lb.max(lim);
                } else {
                    new_ub = new_ub.min(lim);
                }
            }
            let changed = if m.binary[j] {
                let l = if new_lb > INT_TOL { 1.0 } else { lb[j] };
                let u = if new_ub < 1.0 - INT_TOL { 0.0 } else { ub[j] };
                if l > u {
                    return false;
                }
                let c = l != lb[j] || u != ub[j];
                lb[j] = l;
                ub[j] = u;
                c
            } else {
                let width = (ub[j] - lb[j]).max(0.0);
                let min_step = 1e-3 * width + 1e-7;
                let mut c = false;
                if new_lb > lb[j] + min_step {
                    lb[j] = (new_lb - 1e-9).min(ub[j]);
                    c = true;
                }
                if new_ub < ub[j] - min_step {
                    ub[j] = (new_ub + 1e-9).max(lb[j]);
                    c = true;
                }
                if new_lb > ub[j] + FEAS_TOL * (1.0 + ub[j].abs()) || new_ub < lb[j] - FEAS_TOL * (1.0 + lb[j].abs()) {
                    return false;
                }
                c
            };
            if changed {
                for &(r2, _) in &m.cols[j] {
                    if r2 != r && !queued[r2] {
                        queued[r2] = true;
                        queue.push_back(r2);
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::qp::SparseRow;
    use super::*;

    fn model(rows: Vec<SparseRow>, binary: Vec<bool>) -> SparseModel {
        let n = binary.len();
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                cols[j].push((r, a));
            }
        }
        SparseModel {
            n,
            rows,
            cols,
            quadratic: vec![],
            linear: vec![0.0; n],
            constant: 0.0,
            binary,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        }
    }

    #[test]
    fn one_hot_fixes_the_rest() {
        let m = model(
            vec![SparseRow { terms: vec![(0, 1.0), (1, 1.0), (2, 1.0)], lo: 1.0, hi: 1.0 }],
            vec![true; 3],
        );
        let (mut lb, mut ub) = (vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]);
        assert!(propagate(&m, &mut lb, &mut ub, None));
        assert_eq!(ub, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn continuous_bounds_tighten_and_conflicts_are_found() {
        // x + y ≤ 1, x ≥ 0.75 → y ≤ 0.25; then y ≥ 0.5 is infeasible
        let m = model(vec![SparseRow { terms: vec![(0, 1.0), (1, 1.0)], lo: f64::NEG_INFINITY, hi: 1.0 }], vec![false; 2]);
        let (mut lb, mut ub) = (vec![0.75, 0.0], vec![1.0, 1.0]);
        assert!(propagate(&m, &mut lb, &mut ub, None));
        assert!((ub[1] - 0.25).abs() < 1e-8);
        let (mut lb, mut ub) = (vec![0.75, 0.5], vec![1.0, 1.0]);
        assert!(!propagate(&m, &mut lb, &mut ub, None));
    }
}
