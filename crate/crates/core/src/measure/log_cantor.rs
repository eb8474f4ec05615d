//! Binary-tree Cantor measure with ball masses `h(r) = |log r|^{-q/2}`.
//!
//! Diameters shrink by `|log r_{k+1}| = 2^{2/q} |log r_k|`, so that
//! `h(r_{k+1}) = h(r_k)/2` and every tree ball of level `k` carries mass
//! `h(r_k) = 2^{-k} h(r_0)`. Radii decay doubly exponentially and the atom
//! coordinates stop being representable in `f64` after a few levels; exact
//! ball masses at deep levels go through [`LogCantorTree::ball_mass`], which
//! works in coordinates relative to tree nodes.

use serde::{Deserialize, Serialize};

use super::{Atom, DiscreteMeasure, Provenance};
use crate::error::{Error, Result};
use crate::mesh::Point;

pub const MAX_LEVEL_ATOMS: usize = 1 << 20;

/// `|log r_k|` for `k = 0..=level`; the radii are `exp(-|log r_k|)`.
pub fn log_cantor_radii(q: f64, r0: f64, level: usize) -> Result<Vec<f64>> {
    if !(q > 2.0 && q.is_finite()) {
        return Err(Error::InvalidParams(format!("log-Cantor measure needs finite q > p = n = 2, got {q}")));
    }
    if !(r0 > 0.0 && r0 <= (-1.0f64).exp()) {
        return Err(Error::InvalidParams(format!("base diameter r0 must lie in (0, 1/e], got {r0}")));
    }
    let growth = 2f64.powf(2.0 / q);
    let mut logs = Vec::with_capacity(level + 1);
    logs.push(-r0.ln());
    for k in 0..level {
        logs.push(logs[k] * growth);
    }
    Ok(logs)
}

/// `h(r) = |log r|^{-q/2}` given `|log r|`.
fn h_of_log(q: f64, abs_log: f64) -> f64 {
    abs_log.powf(-q / 2.0)
}

/// Position relative to a tree node: the node is reached from the root by
/// `path` (`false` = left child), and `offset` is measured from its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePoint {
    pub path: Vec<bool>,
    pub offset: Point,
}

impl TreePoint {
    pub fn node(path: Vec<bool>) -> Self {
        TreePoint { path, offset: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCantorTree {
    q: f64,
    center: Point,
    level: usize,
    abs_logs: Vec<f64>,
    diam: Vec<f64>,
    root_mass: f64,
}

impl LogCantorTree {
    /// Tree with root ball `B(center, r0/2)` and `level` halving stages.
    pub fn new(q: f64, level: usize, center: Point, r0: f64) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidParams("level must be positive".into()));
        }
        if level > 62 || (1usize << level) > MAX_LEVEL_ATOMS {
            return Err(Error::AtomBudget { atoms: 2f64.powi(level as i32), max_depth: 20 });
        }
        let abs_logs = log_cantor_radii(q, r0, level)?;
        let diam: Vec<f64> = abs_logs.iter().map(|l| (-l).exp()).collect();
        for k in 0..level {
            // siblings sit at ±(r_k - r_{k+1})/2 and are disjoint iff r_k > 2 r_{k+1}
            if !(diam[k] > 2.0 * diam[k + 1]) {
                return Err(Error::InvalidMeasure(format!(
                    "children of diameter {:.4e} do not fit disjointly in a level-{k} ball of diameter {:.4e}",
                    diam[k + 1],
                    diam[k]
                )));
            }
        }
        Ok(LogCantorTree { q, center, level, root_mass: h_of_log(q, abs_logs[0]), abs_logs, diam })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn center(&self) -> Point {
        self.center
    }

    /// Tree ball diameters `r_0, …, r_K`.
    pub fn diameters(&self) -> &[f64] {
        &self.diam
    }

    pub fn abs_log_radii(&self) -> &[f64] {
        &self.abs_logs
    }

    /// `h(r_k)`, computed from `|log r_k|` so deep levels do not underflow.
    pub fn h_at_level(&self, k: usize) -> f64 {
        h_of_log(self.q, self.abs_logs[k])
    }

    /// Mass of any level-`k` tree ball, `2^{-k} h(r_0)`.
    pub fn node_mass(&self, k: usize) -> f64 {
        self.root_mass * 0.5f64.powi(k as i32)
    }

    pub fn total_mass(&self) -> f64 {
        self.root_mass
    }

    fn child_offset(&self, k: usize, right: bool) -> f64 {
        let d = 0.5 * (self.diam[k] - self.diam[k + 1]);
        if right {
            d
        } else {
            -d
        }
    }

    /// Absolute position of the node reached by `path`.
    pub fn node_center(&self, path: &[bool]) -> Point {
        // deepest offsets first: they are the smallest
        let dx: f64 = path.iter().enumerate().rev().map(|(k, &b)| self.child_offset(k, b)).sum();
        [self.center[0] + dx, self.center[1]]
    }

    pub fn absolute(&self, x: &TreePoint) -> Point {
        let c = self.node_center(&x.path);
        [c[0] + x.offset[0], c[1] + x.offset[1]]
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        let n = 1usize << self.level;
        let w = self.node_mass(self.level);
        let atoms = (0..n)
            .map(|idx| {
                let path: Vec<bool> = (0..self.level).map(|k| (idx >> (self.level - 1 - k)) & 1 == 1).collect();
                Atom { x: self.node_center(&path), w }
            })
            .collect();
        DiscreteMeasure::new(
            atoms,
            Provenance::LogCantor { level: self.level, q: self.q, r0: self.diam[0], total_mass: self.root_mass },
        )
        .expect("positive weights")
    }

    /// Exact `μ(B(x, r))` by descending the tree in node-relative coordinates.
    pub fn ball_mass(&self, x: &TreePoint, r: f64) -> f64 {
        self.descend(0, &x.path, Some(0), self.rel_on_path(x, 0), r, x)
    }

    /// Query position relative to the on-path node at level `k`.
    fn rel_on_path(&self, x: &TreePoint, k: usize) -> Point {
        let dx: f64 = (k..x.path.len()).rev().map(|l| self.child_offset(l, x.path[l])).sum();
        [dx + x.offset[0], x.offset[1]]
    }

    fn descend(&self, k: usize, path: &[bool], on_path: Option<usize>, rel: Point, r: f64, x: &TreePoint) -> f64 {
        let d = rel[0].hypot(rel[1]);
        let rho = 0.5 * self.diam[k];
        if k == self.level {
            return if d <= r { self.node_mass(k) } else { 0.0 };
        }
        if d - rho > r {
            return 0.0;
        }
        if d + rho <= r {
            return self.node_mass(k);
        }
        let mut total = 0.0;
        for right in [false, true] {
            let child_on_path = on_path.filter(|&depth| depth < path.len() && path[depth] == right).map(|d| d + 1);
            let child_rel = match child_on_path {
                Some(depth) => self.rel_on_path(x, depth),
                None => [rel[0] - self.child_offset(k, right), rel[1]],
            };
            total += self.descend(k + 1, path, child_on_path, child_rel, r, x);
        }
        total
    }
}

/// Atomized log-Cantor measure at tree level `level`, total mass `h(r_0)`.
pub fn log_cantor_measure(q: f64, level: usize, center: Point, r0: f64) -> Result<DiscreteMeasure> {
    Ok(LogCantorTree::new(q, level, center, r0)?.to_measure())
}
