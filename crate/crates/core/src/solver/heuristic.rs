//! Primal heuristic for layout models: read a separating side for every
//! body pair off a relaxed solution, fix it, and dive for a design.

use crate::linearize::{Derivation, LinExpr};
use crate::model::MiqpModel;

use super::pseudocost::Pseudocosts;
use super::{Ctx, Node, Outcome};

/// One separation direction of a body pair.
#[derive(Clone, Debug)]
pub(super) struct Direction {
    success: usize,
    sign: usize,
    /// Signed centre distance along the direction.
    gap: LinExpr,
    /// Sum of the two half extents along the direction.
    reach: LinExpr,
}

/// Directions per separated body pair, read from the model's layout.
pub(super) fn pair_directions(model: &MiqpModel) -> Vec<Vec<Direction>> {
    model
        .layout
        .pairs
        .iter()
        .map(|p| {
            p.success
                .iter()
                .zip(&p.sign)
                .filter_map(|(&s, &g)| match &model.vars[s.index()].derivation {
                    Derivation::Success { a, b } => {
                        Some(Direction { success: s.index(), sign: g.index(), gap: a.clone(), reach: b.clone() })
                    }
                    _ => None,
                })
                .collect()
        })
        .filter(|d: &Vec<Direction>| !d.is_empty())
        .collect()
}

impl Ctx<'_> {
    /// For every pair, the direction along which `x` separates the two
    /// bodies best, fixed to the side `x` puts them on.
    pub(super) fn guided_fixes(&self, x: &[f64]) -> Vec<(u32, bool)> {
        let mut fixes = Vec::new();
        for dirs in &self.pairs {
            let best = dirs
                .iter()
                .map(|d| {
                    let g = d.gap.evaluate(x);
                    (g.abs() - d.reach.evaluate(x), g >= 0.0, d)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, ahead, d)) = best {
                fixes.push((d.success as u32, true));
                fixes.push((d.sign as u32, ahead));
            }
        }
        fixes
    }

    /// Depth-first search below `fixes` for at most `budget` nodes; returns
    /// the first design found under `cutoff` and the nodes used.
    pub(super) fn dive(&self, fixes: Vec<(u32, bool)>, budget: u64, cutoff: f64, pc: &Pseudocosts) -> (Option<(f64, Vec<f64>)>, u64) {
        let mut stack = vec![Node { id: 0, bound: f64::NEG_INFINITY, fixes, step: 0.0 }];
        let mut used = 0;
        while let Some(node) = stack.pop() {
            if used >= budget {
                break;
            }
            used += 1;
            match self.process(&node, cutoff, pc, false).outcome {
                // the first design ends the dive
                Outcome::Leaf { design: Some((f, x)), .. } if f < cutoff => return (Some((f, x)), used),
                Outcome::Branch { bound, var, up_first, .. } => {
                    for up in [!up_first, up_first] {
                        let mut f = node.fixes.clone();
                        f.push((var as u32, up));
                        stack.push(Node { id: 0, bound, fixes: f, step: 0.0 });
                    }
                }
                _ => {}
            }
        }
        (None, used)
    }
}
