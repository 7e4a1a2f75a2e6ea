//! Euclidean distance matrix completion and coordinate extraction.
//!
//! Points are indexed sensors first, then targets, then anchors. The three
//! completions share one conic encoding: an anchored Gram matrix
//!
//! ```text
//! Z = [ I₂  P ]  ⪰ 0
//!     [ Pᵀ  Y ]
//! ```
//!
//! where `P` holds unknown positions in the anchor frame and `Y` their Gram
//! matrix. Any EDM whose anchor block equals the anchors' squared distances
//! arises from such a `Z`, and conversely. Rank is not constrained; it is
//! truncated to two during [`extract_coordinates`].
//!
//! Coordinates are centered on the anchor centroid and scaled by the anchor
//! spread before solving; objective values are reported in original units.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::conic::{self, svec_index, ConeBlock, ConeSpec, ConicProblem, SolveStatus, SolverSettings};
use crate::error::{Result, SlatError};
use crate::model::{anchors_non_collinear, Point2, RangeData, StackedCoords};

/// Squared observed distances with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialEDM {
    /// Squared distances; zero where unobserved.
    pub d: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub anchors: Vec<Point2>,
    pub n_sensors: usize,
    pub n_targets: usize,
}

impl PartialEDM {
    pub fn side(&self) -> usize {
        self.d.nrows()
    }

    pub fn num_unknowns(&self) -> usize {
        self.n_sensors + self.n_targets
    }

    /// Observed unknown-involving pairs `(i, j)` with `i < j`; anchor-anchor pairs excluded.
    pub fn measured_pairs(&self) -> Vec<(usize, usize)> {
        let q = self.num_unknowns();
        let rho = self.side();
        let mut out = Vec::new();
        for i in 0..q {
            for j in i + 1..rho {
                if self.observed[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn max_observed(&self) -> f64 {
        self.measured_pairs().iter().map(|&(i, j)| self.d[(i, j)]).fold(0.0, f64::max)
    }
}

/// Completed distance matrix.
#[derive(Debug, Clone)]
pub struct EDMSolution {
    pub e: DMatrix<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Epigraph value per measured pair for the plain-range relaxations, in meters.
    pub epigraph: Vec<((usize, usize), f64)>,
    pub iterations: usize,
}

/// Builds the partial squared-distance matrix; the anchor block is always observed.
pub fn build_partial_edm(anchors: &[Point2], r: &RangeData) -> Result<PartialEDM> {
    if anchors.len() != r.n_anchors() {
        return Err(SlatError::dim(format!("{} anchors supplied, ranges expect {}", anchors.len(), r.n_anchors())));
    }
    let (n, m, l) = (r.n_sensors(), r.n_targets(), anchors.len());
    let rho = n + m + l;
    let mut d = DMatrix::zeros(rho, rho);
    let mut observed = DMatrix::from_element(rho, rho, false);
    let mut set = |i: usize, j: usize, v: f64| {
        d[(i, j)] = v;
        d[(j, i)] = v;
        observed[(i, j)] = true;
        observed[(j, i)] = true;
    };
    for i in 0..rho {
        set(i, i, 0.0);
    }
    for (&(i, j), &dist) in &r.sensor_target {
        set(i, n + j, dist * dist);
    }
    for (&(k, j), &dist) in &r.anchor_target {
        set(n + m + k, n + j, dist * dist);
    }
    for k in 0..l {
        for kk in k + 1..l {
            let v = anchors[k].dist(&anchors[kk]);
            set(n + m + k, n + m + kk, v * v);
        }
    }
    Ok(PartialEDM { d, observed, anchors: anchors.to_vec(), n_sensors: n, n_targets: m })
}

/// Centering and scaling applied before solving.
struct Frame {
    center: Point2,
    scale: f64,
}

impl Frame {
    fn for_anchors(anchors: &[Point2]) -> Self {
        let l = anchors.len() as f64;
        let center = Point2::new(anchors.iter().map(|a| a.x).sum::<f64>() / l, anchors.iter().map(|a| a.y).sum::<f64>() / l);
        let scale = anchors.iter().map(|a| a.dist(&center)).fold(0.0, f64::max);
        Self { center, scale: if scale > 0.0 { scale } else { 1.0 } }
    }

    fn map(&self, p: &Point2) -> Point2 {
        Point2::new((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }
}

/// Variable layout of the anchored Gram block, first in the conic variable vector.
struct GramLayout {
    q: usize,
    anchors: Vec<Point2>,
}

impl GramLayout {
    fn side(&self) -> usize {
        self.q + 2
    }

    fn dim(&self) -> usize {
        let s = self.side();
        s * (s + 1) / 2
    }

    /// Coefficient on the svec entry for `Z[i, j]`.
    fn z(&self, i: usize, j: usize, coef: f64) -> (usize, f64) {
        let scale = if i == j { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
        (svec_index(self.side(), i, j), coef * scale)
    }

    /// Squared distance between points `i < j` (EDM ordering) as `form · svec(Z) + constant`.
    fn sqdist(&self, i: usize, j: usize) -> (Vec<(usize, f64)>, f64) {
        let q = self.q;
        match (i < q, j < q) {
            (true, true) => (vec![self.z(2 + i, 2 + i, 1.0), self.z(2 + j, 2 + j, 1.0), self.z(2 + i, 2 + j, -2.0)], 0.0),
            (true, false) | (false, true) => {
                let (u, k) = if i < q { (i, j - q) } else { (j, i - q) };
                let a = self.anchors[k];
                (
                    vec![self.z(0, 2 + u, -2.0 * a.x), self.z(1, 2 + u, -2.0 * a.y), self.z(2 + u, 2 + u, 1.0)],
                    a.x * a.x + a.y * a.y,
                )
            }
            (false, false) => (Vec::new(), self.anchors[i - q].dist(&self.anchors[j - q]).powi(2)),
        }
    }

    fn pin_identity(&self, p: &mut ConicProblem) -> Result<()> {
        p.add_constraint(vec![self.z(0, 0, 1.0)], 1.0)?;
        p.add_constraint(vec![self.z(1, 1, 1.0)], 1.0)?;
        p.add_constraint(vec![(svec_index(self.side(), 1, 0), 1.0)], 0.0)?;
        Ok(())
    }

    /// Full EDM (original units) from a solved `Z`, via the Gram matrix of the
    /// PSD part so the result is an exact EDM up to rounding.
    fn edm_from(&self, zsvec: &[f64], frame: &Frame) -> DMatrix<f64> {
        let s = self.side();
        let mut z = DMatrix::zeros(s, s);
        for j in 0..s {
            for i in j..s {
                let (idx, w) = self.z(i, j, 1.0);
                let v = zsvec[idx] * w;
                z[(i, j)] = v;
                z[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(z);
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let zp = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        // Columns: unknowns map to e_{2+u}, anchors to (a, 0).
        let l = self.anchors.len();
        let rho = self.q + l;
        let mut c = DMatrix::zeros(s, rho);
        for u in 0..self.q {
            c[(2 + u, u)] = 1.0;
        }
        for (k, a) in self.anchors.iter().enumerate() {
            c[(0, self.q + k)] = a.x;
            c[(1, self.q + k)] = a.y;
        }
        let g = c.transpose() * zp * &c;
        let s2 = frame.scale * frame.scale;
        DMatrix::from_fn(rho, rho, |i, j| if i == j { 0.0 } else { (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]) * s2 })
    }
}

struct Prepared {
    layout: GramLayout,
    frame: Frame,
    pairs: Vec<(usize, usize)>,
    /// Plain normalized distance per pair.
    dist: Vec<f64>,
}

fn prepare(p: &PartialEDM) -> Result<Prepared> {
    if p.anchors.len() < 3 || !anchors_non_collinear(&p.anchors) {
        return Err(SlatError::DegenerateGeometry("EDM completion needs at least 3 non-collinear anchors".into()));
    }
    if p.side() != p.num_unknowns() + p.anchors.len() || p.observed.shape() != p.d.shape() {
        return Err(SlatError::dim("partial EDM side does not match its point counts"));
    }
    let frame = Frame::for_anchors(&p.anchors);
    let anchors = p.anchors.iter().map(|a| frame.map(a)).collect();
    let pairs = p.measured_pairs();
    let dist = pairs.iter().map(|&(i, j)| p.d[(i, j)].max(0.0).sqrt() / frame.scale).collect();
    Ok(Prepared { layout: GramLayout { q: p.num_unknowns(), anchors }, frame, pairs, dist })
}

fn run(problem: &ConicProblem) -> Result<conic::ConicSolution> {
    // The plain-range objectives are flat near their optimum, so distance
    // accuracy is roughly the square root of the gap; solve tightly.
    let settings = SolverSettings { feas_tol: 1e-10, gap_tol: 1e-12, ..SolverSettings::default() };
    let mut sol = conic::solve(problem, &settings)?.require_usable(1e-6)?;
    // Report success against the standard tolerances, not the tightened ones.
    let standard = SolverSettings::default();
    if sol.meets(standard.feas_tol, standard.gap_tol) {
        sol.status = SolveStatus::Optimal;
    }
    Ok(sol)
}

/// Squared-range completion: minimizes `Σ (E_ij − D_ij)²` over measured, non-anchor pairs.
pub fn complete_edm_sr(p: &PartialEDM) -> Result<EDMSolution> {
    complete_edm_sr_dump(p, None)
}

/// Like [`complete_edm_sr`], optionally returning the conic problem that was solved.
pub fn complete_edm_sr_dump(p: &PartialEDM, dump: Option<&mut String>) -> Result<EDMSolution> {
    let pr = prepare(p)?;
    let g = &pr.layout;
    let k = pr.pairs.len();
    // Epigraph of the residual norm: (s, r_1..r_k) in one second-order cone.
    let cone = ConeSpec::new(vec![ConeBlock::SemidefiniteReal(g.side()), ConeBlock::SecondOrder(k + 1)])?;
    let mut prob = ConicProblem::new(cone);
    let off = g.dim();
    prob.c[off] = 1.0;
    g.pin_identity(&mut prob)?;
    for (t, &(i, j)) in pr.pairs.iter().enumerate() {
        let (mut form, cst) = g.sqdist(i, j);
        form.iter_mut().for_each(|e| e.1 = -e.1);
        form.push((off + 1 + t, 1.0));
        let target = pr.dist[t] * pr.dist[t];
        // r = E − D
        prob.add_constraint(form, cst - target)?;
    }
    if let Some(d) = dump {
        *d = conic::write_dump(&prob);
    }
    let sol = run(&prob)?;
    let s4 = pr.frame.scale.powi(4);
    let norm = sol.x[off];
    Ok(EDMSolution {
        e: g.edm_from(&sol.x[..off], &pr.frame),
        objective_value: norm * norm * s4,
        status: sol.status,
        epigraph: Vec::new(),
        iterations: sol.iterations,
    })
}

/// Plain-range completion: minimizes `Σ (E_ij − 2 T_ij d_ij)` with `T_ij² ≤ E_ij`.
pub fn complete_edm_r(p: &PartialEDM) -> Result<EDMSolution> {
    complete_edm_r_dump(p, None)
}

pub fn complete_edm_r_dump(p: &PartialEDM, dump: Option<&mut String>) -> Result<EDMSolution> {
    let pr = prepare(p)?;
    let g = &pr.layout;
    let k = pr.pairs.len();
    let mut blocks = vec![ConeBlock::SemidefiniteReal(g.side())];
    blocks.extend(std::iter::repeat_n(ConeBlock::SecondOrder(3), k));
    let mut prob = ConicProblem::new(ConeSpec::new(blocks)?);
    g.pin_identity(&mut prob)?;
    let base = g.dim();
    for (t, &(i, j)) in pr.pairs.iter().enumerate() {
        // (E + 1, 2T, E − 1) ∈ SOC  ⇔  T² ≤ E
        let o = base + 3 * t;
        add_soc_rows(&mut prob, g, i, j, o)?;
        prob.c[o] = 1.0;
        prob.c[o + 1] = -pr.dist[t];
    }
    if let Some(d) = dump {
        *d = conic::write_dump(&prob);
    }
    let sol = run(&prob)?;
    let s = pr.frame.scale;
    // Objective Σ (E − 2Td) with E = u0 − 1 carries a constant −k.
    let objective = (sol.primal_objective - k as f64) * s * s;
    let epigraph = pr.pairs.iter().enumerate().map(|(t, &pair)| (pair, sol.x[base + 3 * t + 1] / 2.0 * s)).collect();
    Ok(EDMSolution {
        e: g.edm_from(&sol.x[..base], &pr.frame),
        objective_value: objective,
        status: sol.status,
        epigraph,
        iterations: sol.iterations,
    })
}

/// Ties `u0 = E + 1` and `u2 = E − 1` for the pair `(i, j)` at offset `o`.
fn add_soc_rows(prob: &mut ConicProblem, g: &GramLayout, i: usize, j: usize, o: usize) -> Result<()> {
    let (form, cst) = g.sqdist(i, j);
    let neg: Vec<(usize, f64)> = form.iter().map(|&(c, v)| (c, -v)).collect();
    let mut row0 = neg.clone();
    row0.push((o, 1.0));
    prob.add_constraint(row0, cst + 1.0)?;
    let mut row2 = neg;
    row2.push((o + 2, 1.0));
    prob.add_constraint(row2, cst - 1.0)?;
    Ok(())
}

/// Default upper bound on squared distances for [`complete_edm_r_l1`].
pub fn default_e_max(p: &PartialEDM) -> f64 {
    let dmax = p.max_observed().sqrt();
    (1.5 * dmax).powi(2)
}

/// Robust plain-range completion: minimizes `Σ T_ij` subject to
/// `(d_ij − T_ij)² ≤ E_ij` and the secant `a E_ij + b ≤ T_ij` on `[d², e_max]`.
pub fn complete_edm_r_l1(p: &PartialEDM, e_max: f64) -> Result<EDMSolution> {
    complete_edm_r_l1_dump(p, e_max, None)
}

pub fn complete_edm_r_l1_dump(p: &PartialEDM, e_max: f64, dump: Option<&mut String>) -> Result<EDMSolution> {
    let max_d2 = p.max_observed();
    if !(e_max.is_finite() && e_max >= max_d2 && e_max > 0.0) {
        return Err(SlatError::config(format!("e_max {e_max} is below the largest squared range {max_d2}")));
    }
    let pr = prepare(p)?;
    let g = &pr.layout;
    let k = pr.pairs.len();
    let s = pr.frame.scale;
    let root_emax = e_max.sqrt() / s;
    let mut blocks = vec![ConeBlock::SemidefiniteReal(g.side())];
    blocks.extend(std::iter::repeat_n(ConeBlock::SecondOrder(3), k));
    if k > 0 {
        blocks.push(ConeBlock::Nonnegative(k));
    }
    let mut prob = ConicProblem::new(ConeSpec::new(blocks)?);
    g.pin_identity(&mut prob)?;
    let base = g.dim();
    let slack0 = base + 3 * k;
    let mut constant = 0.0;
    for (t, &(i, j)) in pr.pairs.iter().enumerate() {
        let o = base + 3 * t;
        // (E + 1, 2(d − T), E − 1) ∈ SOC  ⇔  (d − T)² ≤ E, with T = d − u1/2.
        add_soc_rows(&mut prob, g, i, j, o)?;
        let d = pr.dist[t];
        prob.c[o + 1] = -0.5;
        constant += d;
        // a E + b ≤ T  ⇔  slack + u1/2 + a u0 = d − b + a
        let a = 1.0 / (root_emax + d);
        let b = -d * d / (root_emax + d);
        prob.add_constraint(vec![(slack0 + t, 1.0), (o + 1, 0.5), (o, a)], d - b + a)?;
    }
    if let Some(dmp) = dump {
        *dmp = conic::write_dump(&prob);
    }
    let sol = run(&prob)?;
    let epigraph =
        pr.pairs.iter().enumerate().map(|(t, &pair)| (pair, (pr.dist[t] - sol.x[base + 3 * t + 1] / 2.0) * s)).collect();
    Ok(EDMSolution {
        e: g.edm_from(&sol.x[..base], &pr.frame),
        objective_value: (sol.primal_objective + constant) * s,
        status: sol.status,
        epigraph,
        iterations: sol.iterations,
    })
}

/// Coordinates recovered from a completed EDM.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub coords: StackedCoords,
    /// `Σ ‖Q y_k + t − a_k‖²` of the anchor alignment.
    pub anchor_residual: f64,
}

/// Rank-2 Gram factorization followed by orthogonal Procrustes alignment
/// (rotation, reflection and translation) of the extracted anchors onto `anchors`.
/// The last `anchors.len()` rows of `e` are the anchors.
pub fn extract_coordinates(e: &DMatrix<f64>, anchors: &[Point2]) -> Result<Extraction> {
    let rho = e.nrows();
    let l = anchors.len();
    if e.ncols() != rho || l > rho {
        return Err(SlatError::dim("EDM must be square and contain every anchor"));
    }
    if l < 3 || !anchors_non_collinear(anchors) {
        return Err(SlatError::DegenerateGeometry("coordinate alignment needs 3 non-collinear anchors".into()));
    }
    let j = DMatrix::identity(rho, rho) - DMatrix::from_element(rho, rho, 1.0 / rho as f64);
    let gram = (&j * e * &j) * -0.5;
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..rho).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let second = eig.eigenvalues[order[1]].max(0.0);
    if !(top > 0.0) || second <= 1e-12 * top {
        return Err(SlatError::DegenerateGeometry(format!(
            "Gram matrix has fewer than two positive eigenvalues ({top:.3e}, {second:.3e})"
        )));
    }
    let pts: Vec<Point2> = (0..rho)
        .map(|i| {
            let v0 = eig.eigenvectors[(i, order[0])] * top.sqrt();
            let v1 = eig.eigenvectors[(i, order[1])] * second.sqrt();
            Point2::new(v0, v1)
        })
        .collect();
    let extracted = &pts[rho - l..];
    let (q, t) = procrustes(extracted, anchors);
    let apply = |p: &Point2| Point2::new(q[0][0] * p.x + q[0][1] * p.y + t.x, q[1][0] * p.x + q[1][1] * p.y + t.y);
    let anchor_residual = extracted.iter().zip(anchors).map(|(y, a)| (apply(y) - *a).norm().powi(2)).sum();
    let coords = StackedCoords::from_points(&pts[..rho - l].iter().map(apply).collect::<Vec<_>>());
    Ok(Extraction { coords, anchor_residual })
}

/// Orthogonal `Q` and translation `t` minimizing `Σ ‖Q y_k + t − a_k‖²` over O(2).
fn procrustes(from: &[Point2], to: &[Point2]) -> ([[f64; 2]; 2], Point2) {
    let l = from.len() as f64;
    let mean = |ps: &[Point2]| Point2::new(ps.iter().map(|p| p.x).sum::<f64>() / l, ps.iter().map(|p| p.y).sum::<f64>() / l);
    let (my, ma) = (mean(from), mean(to));
    let mut h = nalgebra::Matrix2::<f64>::zeros();
    for (y, a) in from.iter().zip(to) {
        let (dy, da) = (*y - my, *a - ma);
        h += nalgebra::Vector2::new(dy.x, dy.y) * nalgebra::Vector2::new(da.x, da.y).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let qm = vt.transpose() * u.transpose();
    let q = [[qm[(0, 0)], qm[(0, 1)]], [qm[(1, 0)], qm[(1, 1)]]];
    let t = Point2::new(ma.x - (q[0][0] * my.x + q[0][1] * my.y), ma.y - (q[1][0] * my.x + q[1][1] * my.y));
    (q, t)
}

/// CSV rendering of a distance matrix with 12 significant digits.
pub fn edm_to_csv(e: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..e.nrows() {
        let row: Vec<String> = (0..e.ncols()).map(|j| format!("{:.11e}", e[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
