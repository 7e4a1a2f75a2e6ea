//! Small dense primal-dual interior-point solver for linear cone programs.
//!
//! Problems are posed in standard form
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b,   x ∈ K = K₁ × … × K_p
//! ```
//!
//! where every block is a nonnegative orthant, a second-order cone
//! `{x : x₀ ≥ ‖x₁..‖}` or the cone of real symmetric positive semidefinite
//! matrices stored in scaled lower-triangular `svec` form (off-diagonal entries
//! multiplied by √2 so that `svec(X)ᵀsvec(Y) = tr(XY)`). Hermitian blocks are
//! handled through [`hermitian_embed`].
//!
//! The algorithm is a homogeneous self-dual path-following method with
//! Nesterov–Todd scaling and Mehrotra predictor-corrector steps.

mod cones;
mod dump;
mod hermitian;
mod ipm;
mod presolve;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlatError};

pub use dump::{parse_dump, write_dump};
pub use hermitian::{hermitian_embed, HermitianForm};
pub use ipm::IterInfo;

/// One block of the product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeBlock {
    Nonnegative(usize),
    SecondOrder(usize),
    /// Real symmetric PSD matrices of the given side, `side (side + 1) / 2` variables.
    SemidefiniteReal(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Nonnegative(d) | ConeBlock::SecondOrder(d) => d,
            ConeBlock::SemidefiniteReal(n) => n * (n + 1) / 2,
        }
    }

    /// Barrier parameter contributed by the block.
    pub fn degree(&self) -> usize {
        match *self {
            ConeBlock::Nonnegative(d) => d,
            ConeBlock::SecondOrder(_) => 1,
            ConeBlock::SemidefiniteReal(n) => n,
        }
    }
}

/// Ordered list of cone blocks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| match b {
            ConeBlock::Nonnegative(d) | ConeBlock::SecondOrder(d) | ConeBlock::SemidefiniteReal(d) => *d == 0,
        }) {
            return Err(SlatError::config(format!("cone block {b:?} has zero dimension")));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(ConeBlock::dim).sum()
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(ConeBlock::degree).sum()
    }

    /// Starting offset of every block in the stacked variable vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.dim();
                o
            })
            .collect()
    }
}

/// Position of entry `(i, j)` of an `n x n` symmetric matrix in its `svec`.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    debug_assert!(r < n);
    // Column c starts after sum_{q<c} (n - q) entries.
    c * n - c * c.saturating_sub(1) / 2 + (r - c)
}

/// Weight of entry `(i, j)` inside `svec`: 1 on the diagonal, √2 off it.
pub fn svec_scale(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

/// Sparse row-oriented constraint matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new() }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Appends a row, merging duplicate columns and dropping exact zeros.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) -> Result<()> {
        if let Some(&(c, _)) = entries.iter().find(|(c, _)| *c >= self.ncols) {
            return Err(SlatError::dim(format!("column {c} outside {} columns", self.ncols)));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.rows.push(merged);
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    pub fn tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(c, v) in row {
                out[c] += v * yi;
            }
        }
    }

    pub(crate) fn retain_rows(&self, keep: &[usize]) -> SparseRows {
        SparseRows { ncols: self.ncols, rows: keep.iter().map(|&i| self.rows[i].clone()).collect() }
    }
}

/// Linear objective, sparse equality constraints and a product cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub c: Vec<f64>,
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub cone: ConeSpec,
}

impl ConicProblem {
    /// Empty problem over `cone` with zero objective.
    pub fn new(cone: ConeSpec) -> Self {
        let n = cone.dim();
        Self { c: vec![0.0; n], a: SparseRows::new(n), b: Vec::new(), cone }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn add_constraint(&mut self, entries: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        self.a.push_row(entries)?;
        self.b.push(rhs);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cone.dim();
        if self.c.len() != n || self.a.ncols() != n {
            return Err(SlatError::dim(format!(
                "objective has {} entries and A has {} columns, cone dimension is {n}",
                self.c.len(),
                self.a.ncols()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(SlatError::dim("constraint matrix rows do not match right-hand side"));
        }
        let finite = self.c.iter().chain(&self.b).all(|v| v.is_finite())
            && self.a.rows().all(|r| r.iter().all(|e| e.1.is_finite()));
        if !finite {
            return Err(SlatError::config("conic problem contains non-finite data"));
        }
        Ok(())
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

/// Primal-dual point returned by [`solve`].
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Complementarity `xᵀs` at the returned point.
    pub gap: f64,
    pub relative_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub history: Vec<IterInfo>,
}

impl ConicSolution {
    /// Optimal, or stopped early at a point that still meets `tol` on all measures.
    pub fn is_usable(&self, tol: f64) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIterations | SolveStatus::NumericalFailure => {
                self.primal_residual <= tol && self.dual_residual <= tol && self.relative_gap <= tol
            }
            _ => false,
        }
    }

    /// True when all three optimality measures are within the given tolerances.
    pub fn meets(&self, feas_tol: f64, gap_tol: f64) -> bool {
        !matches!(self.status, SolveStatus::Infeasible | SolveStatus::Unbounded)
            && self.primal_residual <= feas_tol
            && self.dual_residual <= feas_tol
            && self.relative_gap <= gap_tol
    }

    /// Converts a non-usable solution into a solver error.
    pub fn require_usable(self, tol: f64) -> Result<Self> {
        if self.is_usable(tol) {
            Ok(self)
        } else {
            Err(SlatError::Solver {
                status: self.status,
                detail: format!(
                    "pres {:.2e}, dres {:.2e}, rel gap {:.2e} after {} iterations",
                    self.primal_residual, self.dual_residual, self.relative_gap, self.iterations
                ),
            })
        }
    }
}

/// Tolerances and limits for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-8, max_iters: 200 }
    }
}

/// Solves `p` with the embedded interior-point method.
pub fn solve(p: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    p.validate()?;
    let reduced = presolve::reduce_rows(p)?;
    let mut sol = match reduced {
        presolve::Reduced::Inconsistent => return Ok(ipm::infeasible_stub(p)),
        presolve::Reduced::Problem { problem, kept } => {
            let mut sol = ipm::Solver::new(&problem, settings).run();
            // Dual multipliers of dropped rows are zero.
            let mut y = vec![0.0; p.num_constraints()];
            for (k, &row) in kept.iter().enumerate() {
                y[row] = sol.y[k];
            }
            sol.y = y;
            sol
        }
    };
    sol.dual_objective = p.b.iter().zip(&sol.y).map(|(b, y)| b * y).sum();
    Ok(sol)
}

/// A solver for [`ConicProblem`]s, so results can be cross-checked against another implementation.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, p: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution>;
}

/// The embedded interior-point method behind [`solve`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddedIpm;

impl ConicBackend for EmbeddedIpm {
    fn name(&self) -> &str {
        "embedded-ipm"
    }

    fn solve(&self, p: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
        solve(p, settings)
    }
}
