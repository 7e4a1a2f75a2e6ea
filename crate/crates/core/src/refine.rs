//! Majorization-minimization refinement of the range likelihood.
//!
//! Each step minimizes a quadratic upper bound of the cost that touches it at
//! the current point. The bound decouples into two identical `(n+m)`-square
//! systems, one per coordinate axis. For the absolute-value cost every term is
//! first reweighted by `1/|residual|` (capped), which yields a quadratic
//! majorizer of `|r|` at the current residual.

use nalgebra::{DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlatError};
use crate::model::{cost_gaussian, cost_laplacian, Point2, RangeData, StackedCoords};

/// Offset used when a measurement pair coincides exactly.
const COINCIDENT_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub max_iters: usize,
    /// Stop once the relative cost decrease falls below this.
    pub rel_tol: f64,
    /// Upper bound on the reweighting factors of the weighted step.
    pub weight_cap: f64,
    /// Relative diagonal loading used only when the plain factorization fails.
    pub ridge: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self { max_iters: 500, rel_tol: 1e-9, weight_cap: 1e5, ridge: 1e-12 }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && [self.rel_tol, self.weight_cap, self.ridge].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SlatError::config(format!("refinement settings must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostMode {
    Gaussian,
    Laplacian,
}

impl CostMode {
    pub fn cost(&self, x: &StackedCoords, anchors: &[Point2], r: &RangeData) -> Result<f64> {
        match self {
            CostMode::Gaussian => cost_gaussian(x, anchors, r),
            CostMode::Laplacian => cost_laplacian(x, anchors, r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Relative decrease below `rel_tol`.
    Converged,
    MaxIterations,
    /// A step failed to decrease the cost and was discarded.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrace {
    /// Cost at the start point followed by the cost after every accepted step.
    pub costs: Vec<f64>,
    pub estimate: StackedCoords,
    pub termination: Termination,
}

impl RefinementTrace {
    pub fn initial_cost(&self) -> f64 {
        self.costs[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("trace holds the initial cost")
    }

    /// `iter,cost` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,cost\n");
        for (i, c) in self.costs.iter().enumerate() {
            out.push_str(&format!("{i},{c:?}\n"));
        }
        out
    }
}

/// Measurement terms as index maps into the stacked unknowns.
///
/// A sensor-target term reads `x[sensor] − x[target]`; an anchor-target term
/// reads `−x[target]` and pairs it with the anchor position.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMaps {
    pub num_points: usize,
    /// `(sensor point, target point, range)`.
    pub pair_terms: Vec<(usize, usize, f64)>,
    /// `(anchor index, target point, range)`.
    pub anchor_terms: Vec<(usize, usize, f64)>,
}

impl SelectionMaps {
    pub fn new(r: &RangeData) -> Self {
        let n = r.n_sensors();
        Self {
            num_points: r.num_unknowns(),
            pair_terms: r.sensor_target.iter().map(|(&(i, j), &d)| (i, n + j, d)).collect(),
            anchor_terms: r.anchor_target.iter().map(|(&(k, j), &d)| (k, n + j, d)).collect(),
        }
    }

    /// `M x = x_i − e_j` for pair term `t`.
    pub fn apply_pair(&self, t: usize, x: &StackedCoords) -> Point2 {
        let (i, j, _) = self.pair_terms[t];
        x.point(i) - x.point(j)
    }

    /// `N x = −e_j` for anchor term `t`.
    pub fn apply_anchor(&self, t: usize, x: &StackedCoords) -> Point2 {
        let (_, j, _) = self.anchor_terms[t];
        Point2::new(0.0, 0.0) - x.point(j)
    }

    fn check(&self, x: &StackedCoords, anchors: &[Point2]) -> Result<()> {
        if x.num_points() != self.num_points {
            return Err(SlatError::dim(format!("{} points given, {} expected", x.num_points(), self.num_points)));
        }
        if let Some(&(k, _, _)) = self.anchor_terms.iter().find(|t| t.0 >= anchors.len()) {
            return Err(SlatError::dim(format!("anchor {k} missing")));
        }
        Ok(())
    }
}

/// Unit vector of `v`, or a fixed per-term direction when `v` vanishes.
fn direction(v: Point2, term: usize) -> Point2 {
    let len = v.norm();
    if len > 0.0 {
        return Point2::new(v.x / len, v.y / len);
    }
    // Displace the pair by COINCIDENT_OFFSET along a fixed per-term angle.
    let angle = term as f64 * 2.399_963_229_728_653;
    let p = Point2::new(COINCIDENT_OFFSET * angle.cos(), COINCIDENT_OFFSET * angle.sin());
    let len = p.norm();
    Point2::new(p.x / len, p.y / len)
}

/// One majorization step with per-term weights (`None` means all ones).
fn weighted_step(
    maps: &SelectionMaps,
    x_t: &StackedCoords,
    anchors: &[Point2],
    pair_w: Option<&[f64]>,
    anchor_w: Option<&[f64]>,
    ridge: f64,
) -> Result<StackedCoords> {
    maps.check(x_t, anchors)?;
    let q = maps.num_points;
    let mut lhs = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DMatrix::<f64>::zeros(q, 2);
    for (t, &(i, j, d)) in maps.pair_terms.iter().enumerate() {
        let w = pair_w.map_or(1.0, |w| w[t]);
        lhs[(i, i)] += w;
        lhs[(j, j)] += w;
        lhs[(i, j)] -= w;
        lhs[(j, i)] -= w;
        let u = direction(maps.apply_pair(t, x_t), t);
        rhs[(i, 0)] += w * d * u.x;
        rhs[(i, 1)] += w * d * u.y;
        rhs[(j, 0)] -= w * d * u.x;
        rhs[(j, 1)] -= w * d * u.y;
    }
    for (t, &(k, j, d)) in maps.anchor_terms.iter().enumerate() {
        let w = anchor_w.map_or(1.0, |w| w[t]);
        let a = anchors[k];
        lhs[(j, j)] += w;
        // d ∇g − Nᵀa with N x = −e_j lands on point j as a − d (a − e_j)/‖a − e_j‖.
        let u = direction(a + maps.apply_anchor(t, x_t), maps.pair_terms.len() + t);
        rhs[(j, 0)] += w * (a.x - d * u.x);
        rhs[(j, 1)] += w * (a.y - d * u.y);
    }
    let sol = solve_spd(lhs, rhs, ridge)?;
    let mut out = StackedCoords::zeros(q);
    for p in 0..q {
        out.set_point(p, Point2::new(sol[(p, 0)], sol[(p, 1)]));
    }
    Ok(out)
}

fn solve_spd(lhs: DMatrix<f64>, rhs: DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if let Some(c) = lhs.clone().cholesky() {
        return Ok(c.solve(&rhs));
    }
    let q = lhs.nrows();
    let scale = (lhs.trace() / q.max(1) as f64).max(1.0);
    let mut loaded = lhs;
    for p in 0..q {
        loaded[(p, p)] += ridge * scale;
    }
    match nalgebra::Cholesky::<f64, Dyn>::new(loaded) {
        Some(c) => Ok(c.solve(&rhs)),
        None => Err(SlatError::Singular(format!("{q}x{q} majorizer system is not positive definite"))),
    }
}

/// Gaussian MM step.
pub fn mm_step(x_t: &StackedCoords, anchors: &[Point2], r: &RangeData) -> Result<StackedCoords> {
    let maps = SelectionMaps::new(r);
    weighted_step(&maps, x_t, anchors, None, None, RefinementConfig::default().ridge)
}

/// Reweighting factors `min(1/|residual|, cap)` at `x_t`, pair terms then anchor terms.
pub fn wmm_weights(x_t: &StackedCoords, anchors: &[Point2], r: &RangeData, cap: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let maps = SelectionMaps::new(r);
    maps.check(x_t, anchors)?;
    let weight = |res: f64| if res.abs() * cap > 1.0 { 1.0 / res.abs() } else { cap };
    let pair = maps
        .pair_terms
        .iter()
        .enumerate()
        .map(|(t, &(_, _, d))| weight(maps.apply_pair(t, x_t).norm() - d))
        .collect();
    let anch = maps
        .anchor_terms
        .iter()
        .enumerate()
        .map(|(t, &(k, _, d))| weight((anchors[k] + maps.apply_anchor(t, x_t)).norm() - d))
        .collect();
    Ok((pair, anch))
}

/// Weighted MM step for the absolute-value cost.
pub fn wmm_step(x_t: &StackedCoords, anchors: &[Point2], r: &RangeData, cfg: &RefinementConfig) -> Result<StackedCoords> {
    let maps = SelectionMaps::new(r);
    let (pw, aw) = wmm_weights(x_t, anchors, r, cfg.weight_cap)?;
    weighted_step(&maps, x_t, anchors, Some(&pw), Some(&aw), cfg.ridge)
}

/// `Γ(x) − Ω_L(x)` for the reweighted bound built at `x_t`:
/// `½ Σ (√u |r(x)| − 1/√u)²` with the capped weights `u` of `x_t`.
pub fn majorizer_gap(
    x: &StackedCoords,
    x_t: &StackedCoords,
    anchors: &[Point2],
    r: &RangeData,
    weight_cap: f64,
) -> Result<f64> {
    let (pw, aw) = wmm_weights(x_t, anchors, r, weight_cap)?;
    let res = crate::model::residuals(x, anchors, r)?;
    Ok(res
        .iter()
        .zip(pw.iter().chain(&aw))
        .map(|(rv, &u)| {
            let s = u.sqrt();
            0.5 * (s * rv.abs() - 1.0 / s).powi(2)
        })
        .sum())
}

/// Iterates the step matching `mode` until convergence.
pub fn run_refinement(
    x0: &StackedCoords,
    anchors: &[Point2],
    r: &RangeData,
    mode: CostMode,
    cfg: &RefinementConfig,
) -> Result<RefinementTrace> {
    cfg.validate()?;
    let maps = SelectionMaps::new(r);
    let mut x = x0.clone();
    let mut cost = mode.cost(&x, anchors, r)?;
    let mut costs = vec![cost];
    let mut termination = Termination::MaxIterations;
    for _ in 0..cfg.max_iters {
        let next = match mode {
            CostMode::Gaussian => weighted_step(&maps, &x, anchors, None, None, cfg.ridge)?,
            CostMode::Laplacian => {
                let (pw, aw) = wmm_weights(&x, anchors, r, cfg.weight_cap)?;
                weighted_step(&maps, &x, anchors, Some(&pw), Some(&aw), cfg.ridge)?
            }
        };
        let next_cost = mode.cost(&next, anchors, r)?;
        if !(next_cost <= cost) {
            termination = Termination::Stalled;
            break;
        }
        let decrease = cost - next_cost;
        x = next;
        cost = next_cost;
        costs.push(cost);
        if decrease <= cfg.rel_tol * costs[costs.len() - 2] {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(RefinementTrace { costs, estimate: x, termination })
}
