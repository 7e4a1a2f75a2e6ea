//! Single-source localization from ranges to known stations.
//!
//! Both relaxations encode candidate points on the circles `y_i = b_i + d_i u_i`
//! (complex-plane coordinates, `|u_i| = 1`) and lift the phase vector into a
//! Hermitian PSD matrix with unit diagonal.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConeBlock, ConeSpec, ConicProblem, HermitianForm, SolveStatus, SolverSettings};
use crate::error::{Result, SlatError};
use crate::model::{Point2, SquareBox, RANGE_FLOOR};
use crate::refine::CostMode;

/// Default weight on the all-ones direction of the projector.
pub const DEFAULT_PROJECTOR_SIGMA: f64 = 1e6;
/// Rounding falls back to the leading eigenvector below this first-column magnitude.
const PHASE_MAGNITUDE_FLOOR: f64 = 1e-6;
const LAMBDA_FLOOR: f64 = 1e-12;

/// Stations (circle centers) with measured ranges (radii) to one unknown point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSet {
    pub centers: Vec<Point2>,
    pub radii: Vec<f64>,
}

impl CircleSet {
    pub fn new(centers: Vec<Point2>, radii: Vec<f64>) -> Result<Self> {
        let c = Self { centers, radii };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.len() != self.radii.len() {
            return Err(SlatError::dim("circle centers and radii differ in length"));
        }
        if self.centers.len() < 3 {
            return Err(SlatError::config(format!("at least 3 stations are required, got {}", self.centers.len())));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r >= RANGE_FLOOR)) {
            return Err(SlatError::config("radii must be finite and at least the range floor"));
        }
        if self.centers.iter().any(|c| !c.is_finite()) {
            return Err(SlatError::config("station coordinates must be finite"));
        }
        Ok(())
    }

    /// `Σ (‖b_i − y‖ − d_i)²`.
    pub fn cost_gaussian(&self, y: &Point2) -> f64 {
        self.centers.iter().zip(&self.radii).map(|(b, d)| (b.dist(y) - d).powi(2)).sum()
    }

    /// `Σ |‖b_i − y‖ − d_i|`.
    pub fn cost_laplacian(&self, y: &Point2) -> f64 {
        self.centers.iter().zip(&self.radii).map(|(b, d)| (b.dist(y) - d).abs()).sum()
    }

    pub fn cost(&self, mode: CostMode, y: &Point2) -> f64 {
        match mode {
            CostMode::Gaussian => self.cost_gaussian(y),
            CostMode::Laplacian => self.cost_laplacian(y),
        }
    }

    /// Centered, scaled copy and the map back to the original frame.
    fn normalized(&self) -> (CircleSet, Point2, f64) {
        let n = self.len() as f64;
        let center = Point2::new(
            self.centers.iter().map(|c| c.x).sum::<f64>() / n,
            self.centers.iter().map(|c| c.y).sum::<f64>() / n,
        );
        let spread = self
            .centers
            .iter()
            .map(|c| c.dist(&center))
            .chain(self.radii.iter().copied())
            .fold(0.0, f64::max);
        let scale = if spread > 0.0 { spread } else { 1.0 };
        let set = CircleSet {
            centers: self.centers.iter().map(|c| Point2::new((c.x - center.x) / scale, (c.y - center.y) / scale)).collect(),
            radii: self.radii.iter().map(|d| d / scale).collect(),
        };
        (set, center, scale)
    }

    fn complex_centers(&self) -> Vec<Complex64> {
        self.centers.iter().map(|c| Complex64::new(c.x, c.y)).collect()
    }
}

/// Weights and sigma defining `(Λ + σ 11ᵀ)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub lambda: Vec<f64>,
    pub sigma: f64,
}

impl ProjectorParams {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.lambda.iter().sum();
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SlatError::config("projector weights must be positive and sum to one"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SlatError::config("projector sigma must be positive"));
        }
        Ok(())
    }
}

/// `(Λ + σ 11ᵀ)⁻¹` by the rank-one inverse update.
pub fn build_projector(p: &ProjectorParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let inv: Vec<f64> = p.lambda.iter().map(|l| 1.0 / l).collect();
    let s1: f64 = inv.iter().sum();
    let f = p.sigma / (1.0 + p.sigma * s1);
    let n = inv.len();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { inv[i] } else { 0.0 } - f * inv[i] * inv[j]))
}

/// Limit `σ → ∞`: `Λ⁻¹ − Λ⁻¹1 (1ᵀΛ⁻¹1)⁻¹ 1ᵀΛ⁻¹`.
pub fn exact_projector(lambda: &[f64]) -> DMatrix<f64> {
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let s1: f64 = inv.iter().sum();
    let n = inv.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { inv[i] } else { 0.0 } - inv[i] * inv[j] / s1)
}

/// Frobenius distance bound between the exact and the σ-approximate projector.
pub fn projector_error_bound(p: &ProjectorParams) -> f64 {
    let s1: f64 = p.lambda.iter().map(|l| 1.0 / l).sum();
    let s2: f64 = p.lambda.iter().map(|l| 1.0 / (l * l)).sum();
    s2 / (s1 * (p.sigma * s1 + 1.0))
}

/// Minimizing weights `λ_i = K_i / ΣK` of `Σ K_i² / λ_i`; uniform when all residuals vanish.
pub fn kkt_lambda(residuals: &[f64]) -> Vec<f64> {
    let total: f64 = residuals.iter().sum();
    if total > 0.0 {
        residuals.iter().map(|k| k / total).collect()
    } else {
        vec![1.0 / residuals.len().max(1) as f64; residuals.len()]
    }
}

/// Unit-modulus phases of the circle points.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(pub Vec<Complex64>);

impl PhaseVector {
    /// Points `b_i + d_i u_i` on the circles.
    pub fn circle_points(&self, c: &CircleSet) -> Vec<Point2> {
        c.centers
            .iter()
            .zip(&c.radii)
            .zip(&self.0)
            .map(|((b, d), u)| Point2::new(b.x + d * u.re, b.y + d * u.im))
            .collect()
    }
}

/// Position estimate with relaxation diagnostics.
#[derive(Debug, Clone)]
pub struct LocateResult {
    pub position: Point2,
    pub phases: PhaseVector,
    /// Largest over second-largest eigenvalue of the lifted matrix.
    pub rank1_ratio: f64,
    pub status: SolveStatus,
    /// Relaxation optimum in original units (`tr(GΦ)` or `t`).
    pub relaxation_value: f64,
    /// Recovered residual weights (SLℓ1 only).
    pub weights: Option<Vec<f64>>,
    /// Projector σ the SLℓ1 relaxation was solved with; infinite for the exact projector.
    pub projector_sigma: Option<f64>,
}

fn solver_settings() -> SolverSettings {
    SolverSettings { feas_tol: 1e-12, gap_tol: 1e-14, ..SolverSettings::default() }
}

fn solve_checked(prob: &ConicProblem) -> Result<conic::ConicSolution> {
    let mut sol = conic::solve(prob, &solver_settings())?.require_usable(1e-6)?;
    let standard = SolverSettings::default();
    if sol.meets(standard.feas_tol, standard.gap_tol) {
        sol.status = SolveStatus::Optimal;
    }
    Ok(sol)
}

/// Phase candidates from the first column of a lifted `w wᴴ` with `w = [1; u]`
/// and from its leading eigenvector, plus the top-to-second eigenvalue ratio.
fn round_phases(lifted: &DMatrix<Complex64>) -> (Vec<Vec<Complex64>>, f64) {
    let n = lifted.nrows() - 1;
    let eig = SymmetricEigen::new(lifted.clone());
    let mut order: Vec<usize> = (0..=n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let second = if n >= 1 { eig.eigenvalues[order[1]] } else { 0.0 };
    let ratio = if second > 0.0 { top / second } else { f64::INFINITY };

    let unit = |v: Complex64| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) };
    let mut candidates = Vec::with_capacity(2);
    let first: Vec<Complex64> = (1..=n).map(|i| lifted[(i, 0)]).collect();
    if first.iter().all(|v| v.norm() >= PHASE_MAGNITUDE_FLOOR) {
        candidates.push(first.into_iter().map(unit).collect());
    }
    let v = eig.eigenvectors.column(order[0]);
    let ref_phase = if v[0].norm() > 0.0 { v[0].conj() / v[0].norm() } else { Complex64::new(1.0, 0.0) };
    candidates.push((1..=n).map(|i| unit(v[i] * ref_phase)).collect());
    (candidates, ratio)
}

/// Rounds every phase candidate to a position, polishes it and keeps the lowest cost.
fn best_rounding(c: &CircleSet, candidates: Vec<Vec<Complex64>>, weights: &[f64], mode: CostMode) -> (Point2, Vec<Complex64>) {
    candidates
        .into_iter()
        .map(|ph| {
            let start = weighted_mean(&PhaseVector(ph.clone()).circle_points(c), weights);
            (polish(c, start, mode), ph)
        })
        .min_by(|a, b| c.cost(mode, &a.0).total_cmp(&c.cost(mode, &b.0)))
        .expect("at least one rounding candidate")
}

/// Squared-error circle fit: minimizes `tr(GΦ)` over Hermitian `Φ ⪰ 0` with unit
/// diagonal, `G = [b R]ᴴ (I − 11ᵀ/N) [b R]`, then `y = mean(b + R u)`.
pub fn slcp_locate(c: &CircleSet) -> Result<LocateResult> {
    slcp_locate_dump(c, None)
}

pub fn slcp_locate_dump(c: &CircleSet, dump: Option<&mut String>) -> Result<LocateResult> {
    c.validate()?;
    let (nc, _, scale) = c.normalized();
    let n = nc.len();
    let b = nc.complex_centers();
    // B = [b R], centered rows.
    let mut bm = DMatrix::<Complex64>::zeros(n, n + 1);
    for i in 0..n {
        bm[(i, 0)] = b[i];
        bm[(i, i + 1)] = Complex64::new(nc.radii[i], 0.0);
    }
    let centering = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        Complex64::new(if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64, 0.0)
    });
    let g = bm.adjoint() * centering * &bm;
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);

    let form = HermitianForm::new(0, n + 1);
    let mut prob = ConicProblem::new(ConeSpec::new(vec![ConeBlock::SemidefiniteReal(form.real_side())])?);
    for (col, w) in form.trace_with(&g) {
        prob.c[col] += w;
    }
    for i in 0..=n {
        prob.add_constraint(form.re(i, i), 1.0)?;
    }
    if let Some(d) = dump {
        *d = conic::write_dump(&prob);
    }
    let sol = solve_checked(&prob)?;
    let phi = form.extract(&sol.x);
    let (candidates, ratio) = round_phases(&phi);
    let (position, phases) = best_rounding(c, candidates, &vec![1.0; c.len()], CostMode::Gaussian);
    Ok(LocateResult {
        position,
        phases: PhaseVector(phases),
        rank1_ratio: ratio,
        status: sol.status,
        relaxation_value: sol.primal_objective * scale * scale,
        weights: None,
        projector_sigma: None,
    })
}

/// Absolute-error localization: minimizes `t = 1ᵀβ` subject to `β ≥ 0`,
/// Hermitian `V ⪰ 0` with unit diagonal and `diag(β) + tσ 11ᵀ ⪰ B V Bᴴ`.
pub fn sll1_locate(c: &CircleSet, sigma: f64) -> Result<LocateResult> {
    sll1_locate_dump(c, sigma, None)
}

pub fn sll1_locate_dump(c: &CircleSet, sigma: f64, mut dump: Option<&mut String>) -> Result<LocateResult> {
    c.validate()?;
    if !(sigma > 0.0) || sigma.is_nan() {
        return Err(SlatError::config(format!("projector sigma must be positive, got {sigma}")));
    }
    let (nc, _, scale) = c.normalized();
    let (prob, v_form) = sll1_problem(&nc, sigma)?;
    if let Some(dm) = dump.as_deref_mut() {
        *dm = conic::write_dump(&prob);
    }
    let (sol, v_form, used_sigma) = match solve_checked(&prob) {
        Ok(sol) => (sol, v_form, sigma),
        Err(SlatError::Solver { status: SolveStatus::NumericalFailure | SolveStatus::MaxIterations, .. })
            if sigma.is_finite() =>
        {
            // The slack is ill-conditioned for large σ; retry with the exact projector.
            let (prob, v_form) = sll1_problem(&nc, f64::INFINITY)?;
            // The dump then holds the problem whose solution is used.
            if let Some(dm) = dump {
                *dm = conic::write_dump(&prob);
            }
            (solve_checked(&prob)?, v_form, f64::INFINITY)
        }
        Err(e) => return Err(e),
    };
    let n = nc.len();
    let beta: Vec<f64> = sol.x[..n].to_vec();
    let t: f64 = beta.iter().sum();
    if !(t > 0.0) {
        return Err(SlatError::Solver {
            status: SolveStatus::NumericalFailure,
            detail: format!("relaxation returned non-positive epigraph value {t:e}"),
        });
    }
    let v = v_form.extract(&sol.x);
    let (candidates, ratio) = round_phases(&v);
    let lambda: Vec<f64> = beta.iter().map(|bv| (bv / t).max(LAMBDA_FLOOR)).collect();
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let (position, phases) = best_rounding(c, candidates, &inv, CostMode::Laplacian);
    Ok(LocateResult {
        position,
        phases: PhaseVector(phases),
        rank1_ratio: ratio,
        status: sol.status,
        relaxation_value: t * scale * scale,
        weights: Some(lambda),
        projector_sigma: Some(used_sigma),
    })
}

/// Lifted SLℓ1 program on normalized circles; `sigma = ∞` selects the exact projector.
fn sll1_problem(nc: &CircleSet, sigma: f64) -> Result<(ConicProblem, HermitianForm)> {
    let n = nc.len();
    let b = nc.complex_centers();
    let d = &nc.radii;
    // Rows of the slack basis: B' = P B and D' = P diag(β) Pᵀ. A finite σ keeps
    // P = I and adds w 11ᵀ with w = σ1ᵀβ; the exact projector uses the basis
    // e_k − e_N of the complement of 1 and needs no w.
    let exact = sigma.is_infinite();
    let m = if exact { n - 1 } else { n };
    let row_of_b = |i: usize| -> Vec<(usize, Complex64)> {
        vec![(0, b[i]), (i + 1, Complex64::new(d[i], 0.0))]
    };
    let brows: Vec<Vec<(usize, Complex64)>> = (0..m)
        .map(|k| {
            let mut r = row_of_b(k);
            if exact {
                r.extend(row_of_b(n - 1).into_iter().map(|(p, v)| (p, -v)));
            }
            r
        })
        .collect();
    let dcoef = |k: usize, l: usize| -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if k == l {
            out.push((k, 1.0));
        }
        if exact {
            out.push((n - 1, 1.0));
        }
        out
    };

    // Variables: β (N), w (finite σ only), V embedded (side 2(N+1)),
    // slack S = D' + w11ᵀ − B'VB'ᴴ embedded (side 2m).
    let n_lin = if exact { n } else { n + 1 };
    let w_col = n;
    let v_form = HermitianForm::new(n_lin, n + 1);
    let v_dim = {
        let s = v_form.real_side();
        s * (s + 1) / 2
    };
    let s_form = HermitianForm::new(n_lin + v_dim, m);
    let cone = ConeSpec::new(vec![
        ConeBlock::Nonnegative(n_lin),
        ConeBlock::SemidefiniteReal(v_form.real_side()),
        ConeBlock::SemidefiniteReal(s_form.real_side()),
    ])?;
    let mut prob = ConicProblem::new(cone);
    prob.c[..n].iter_mut().for_each(|v| *v = 1.0);
    for i in 0..=n {
        prob.add_constraint(v_form.re(i, i), 1.0)?;
    }
    if !exact {
        // w/σ − 1ᵀβ = 0 keeps the large weight out of the slack rows.
        let mut link: Vec<(usize, f64)> = (0..n).map(|k| (k, -1.0)).collect();
        link.push((w_col, 1.0 / sigma));
        prob.add_constraint(link, 0.0)?;
    }
    for k in 0..m {
        for l in k..m {
            // (B'VB'ᴴ)_kl = Σ α V_pq with α = B'_kp conj(B'_lq).
            let mut terms = Vec::new();
            for &(p, bp) in &brows[k] {
                for &(q, bq) in &brows[l] {
                    terms.push((bp * bq.conj(), p, q));
                }
            }
            // Re: S_kl − D'_kl − w + Re(B'VB'ᴴ)_kl = 0
            let mut re_row = s_form.re(k, l);
            re_row.extend(dcoef(k, l).into_iter().map(|(col, v)| (col, -v)));
            if !exact {
                re_row.push((w_col, -1.0));
            }
            for &(alpha, p, q) in &terms {
                re_row.extend(v_form.re(p, q).into_iter().map(|(col, w)| (col, w * alpha.re)));
                re_row.extend(v_form.im(p, q).into_iter().map(|(col, w)| (col, -w * alpha.im)));
            }
            prob.add_constraint(re_row, 0.0)?;
            if k != l {
                // Im: S_kl + Im(B'VB'ᴴ)_kl = 0
                let mut im_row = s_form.im(k, l);
                for &(alpha, p, q) in &terms {
                    im_row.extend(v_form.im(p, q).into_iter().map(|(col, w)| (col, w * alpha.re)));
                    im_row.extend(v_form.re(p, q).into_iter().map(|(col, w)| (col, w * alpha.im)));
                }
                prob.add_constraint(im_row, 0.0)?;
            }
        }
    }
    Ok((prob, v_form))
}

fn weighted_mean(pts: &[Point2], w: &[f64]) -> Point2 {
    let total: f64 = w.iter().sum();
    Point2::new(
        pts.iter().zip(w).map(|(p, w)| p.x * w).sum::<f64>() / total,
        pts.iter().zip(w).map(|(p, w)| p.y * w).sum::<f64>() / total,
    )
}

/// Alternates nearest circle points and their weighted mean, a majorization step on
/// the circle-fit cost (weights `1/|r_i|` for the absolute cost). Stops as soon as a
/// step fails to lower the cost.
fn polish(c: &CircleSet, start: Point2, mode: CostMode) -> Point2 {
    const MAX_POLISH: usize = 200;
    let floor = 1e-12 * (1.0 + c.radii.iter().fold(0.0f64, |a, &d| a.max(d)));
    let mut y = start;
    let mut cost = c.cost(mode, &y);
    for _ in 0..MAX_POLISH {
        let mut pts = Vec::with_capacity(c.len());
        let mut w = Vec::with_capacity(c.len());
        for (b, d) in c.centers.iter().zip(&c.radii) {
            let dist = b.dist(&y);
            let p = if dist > 0.0 {
                Point2::new(b.x + d * (y.x - b.x) / dist, b.y + d * (y.y - b.y) / dist)
            } else {
                Point2::new(b.x + d, b.y)
            };
            w.push(match mode {
                CostMode::Gaussian => 1.0,
                CostMode::Laplacian => 1.0 / (dist - d).abs().max(floor),
            });
            pts.push(p);
        }
        let next = weighted_mean(&pts, &w);
        let next_cost = c.cost(mode, &next);
        if !(next_cost < cost) {
            break;
        }
        let moved = next.dist(&y);
        y = next;
        cost = next_cost;
        if moved <= 1e-13 * (1.0 + y.norm()) {
            break;
        }
    }
    match mode {
        CostMode::Gaussian => y,
        // Reweighting crawls along circles once a residual hits zero.
        CostMode::Laplacian => compass_search(c, y, mode),
    }
}

/// Derivative-free descent over evenly spaced directions with a halving step.
fn compass_search(c: &CircleSet, start: Point2, mode: CostMode) -> Point2 {
    const DIRECTIONS: usize = 64;
    let dirs: Vec<Point2> = (0..DIRECTIONS)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / DIRECTIONS as f64;
            Point2::new(a.cos(), a.sin())
        })
        .collect();
    let scale = 1.0 + c.radii.iter().fold(0.0f64, |a, &d| a.max(d));
    let mut step = 1e-2 * scale;
    let mut y = start;
    let mut cost = c.cost(mode, &y);
    while step > 1e-13 * scale {
        let best = dirs
            .iter()
            .map(|d| Point2::new(y.x + step * d.x, y.y + step * d.y))
            .map(|p| (c.cost(mode, &p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("directions are non-empty");
        if best.0 < cost {
            (cost, y) = best;
        } else {
            step *= 0.5;
        }
    }
    y
}

/// Exhaustive grid minimization of the circle-fit cost: a `coarse` grid over
/// `region`, then a `fine` grid within one coarse step of the best candidates.
pub fn grid_oracle(c: &CircleSet, mode: CostMode, region: SquareBox, coarse: f64, fine: f64) -> Result<Point2> {
    if c.centers.len() != c.radii.len() || c.is_empty() {
        return Err(SlatError::dim("grid oracle needs matching, non-empty centers and radii"));
    }
    if !(coarse > 0.0 && fine > 0.0 && fine <= coarse && region.side() > 0.0) {
        return Err(SlatError::config("grid oracle needs 0 < fine <= coarse and a non-empty region"));
    }
    const CANDIDATES: usize = 5;
    let steps = (region.side() / coarse).ceil() as usize;
    let mut best: Vec<(f64, Point2)> = Vec::with_capacity(CANDIDATES + 1);
    let consider = |best: &mut Vec<(f64, Point2)>, p: Point2, keep: usize| {
        let v = c.cost(mode, &p);
        if best.len() < keep || v < best[best.len() - 1].0 {
            let pos = best.partition_point(|e| e.0 <= v);
            best.insert(pos, (v, p));
            best.truncate(keep);
        }
    };
    for ix in 0..=steps {
        for iy in 0..=steps {
            let p = Point2::new(
                (region.lo + ix as f64 * coarse).min(region.hi),
                (region.lo + iy as f64 * coarse).min(region.hi),
            );
            consider(&mut best, p, CANDIDATES);
        }
    }
    let half = (coarse / fine).ceil() as i64;
    let mut incumbent: Vec<(f64, Point2)> = Vec::with_capacity(2);
    for &(_, center) in &best {
        for ix in -half..=half {
            for iy in -half..=half {
                let p = Point2::new(center.x + ix as f64 * fine, center.y + iy as f64 * fine);
                consider(&mut incumbent, p, 1);
            }
        }
    }
    Ok(incumbent[0].1)
}

/// Search box covering every circle, used when a caller has no prior region.
pub fn covering_box(c: &CircleSet) -> SquareBox {
    let lo = c.centers.iter().zip(&c.radii).map(|(b, d)| (b.x - d).min(b.y - d)).fold(f64::INFINITY, f64::min);
    let hi = c.centers.iter().zip(&c.radii).map(|(b, d)| (b.x + d).max(b.y + d)).fold(f64::NEG_INFINITY, f64::max);
    SquareBox::new(lo, hi)
}
