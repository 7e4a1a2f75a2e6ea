//! Homogeneous self-dual embedding with NT scaling and Mehrotra correction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cones::{self, BlockHessian, Scaling};
use super::{ConeBlock, ConicProblem, ConicSolution, SolveStatus, SolverSettings};

const STEP_FACTOR: f64 = 0.98;
const MIN_STEP: f64 = 1e-10;
const STALL_LIMIT: usize = 5;
/// Iterations without a 10% merit improvement before giving up.
const PLATEAU_LIMIT: usize = 6;

/// Per-iteration record, all quantities at the normalized point `x/τ, y/τ, s/τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterInfo {
    pub iter: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `x̂ᵀŝ`.
    pub gap: f64,
    /// `‖b − A x̂‖`.
    pub primal_residual_abs: f64,
    /// `‖c − Aᵀŷ − ŝ‖`.
    pub dual_residual_abs: f64,
    /// `|r_dᵀx̂| + |r_pᵀŷ|`, the amount by which residuals can perturb weak duality.
    pub residual_slack: f64,
    pub tau: f64,
    pub kappa: f64,
}

pub(crate) fn infeasible_stub(p: &ConicProblem) -> ConicSolution {
    ConicSolution {
        x: vec![0.0; p.num_vars()],
        y: vec![0.0; p.num_constraints()],
        s: vec![0.0; p.num_vars()],
        status: SolveStatus::Infeasible,
        primal_objective: f64::INFINITY,
        dual_objective: f64::INFINITY,
        gap: f64::NAN,
        relative_gap: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        iterations: 0,
        history: Vec::new(),
    }
}

struct BlockScaling {
    block: ConeBlock,
    offset: usize,
    w: Scaling,
}

/// NT scaling for the whole product cone.
struct Scalings {
    blocks: Vec<BlockScaling>,
    lambda: Vec<f64>,
}

impl Scalings {
    fn compute(p: &ConicProblem, offsets: &[usize], x: &[f64], s: &[f64]) -> Option<Self> {
        let mut lambda = vec![0.0; x.len()];
        let mut blocks = Vec::with_capacity(offsets.len());
        for (block, &off) in p.cone.blocks().iter().zip(offsets) {
            let r = off..off + block.dim();
            let (w, l) = Scaling::compute(block, &x[r.clone()], &s[r.clone()])?;
            if l.iter().any(|v| !v.is_finite()) {
                return None;
            }
            lambda[r].copy_from_slice(&l);
            blocks.push(BlockScaling { block: *block, offset: off, w });
        }
        Some(Self { blocks, lambda })
    }

    fn map(&self, u: &[f64], f: impl Fn(&Scaling, &[f64], &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for b in &self.blocks {
            let r = b.offset..b.offset + b.block.dim();
            f(&b.w, &u[r.clone()], &mut out[r]);
        }
        out
    }

    fn w(&self, u: &[f64]) -> Vec<f64> {
        self.map(u, Scaling::apply_w)
    }
    fn wt(&self, u: &[f64]) -> Vec<f64> {
        self.map(u, Scaling::apply_wt)
    }
    fn winvt(&self, u: &[f64]) -> Vec<f64> {
        self.map(u, Scaling::apply_winvt)
    }

    fn blockwise(&self, u: &[f64], v: &[f64], f: fn(&ConeBlock, &[f64], &[f64], &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for b in &self.blocks {
            let r = b.offset..b.offset + b.block.dim();
            f(&b.block, &u[r.clone()], &v[r.clone()], &mut out[r]);
        }
        out
    }

    fn jprod(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        self.blockwise(u, v, cones::jordan_prod)
    }

    /// `λ ⧵ ξ`.
    fn jdiv(&self, xi: &[f64]) -> Vec<f64> {
        self.blockwise(&self.lambda, xi, cones::jordan_div)
    }

    fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.lambda.len()];
        for b in &self.blocks {
            cones::identity(&b.block, &mut e[b.offset..b.offset + b.block.dim()]);
        }
        e
    }

    fn max_step(&self, d: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let r = b.offset..b.offset + b.block.dim();
                cones::max_step(&b.block, &self.lambda[r.clone()], &d[r])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Block-diagonal `H = WᵀW`.
struct Hessian {
    blocks: Vec<(usize, BlockHessian)>,
    block_of_col: Vec<usize>,
}

impl Hessian {
    fn new(sc: &Scalings, n: usize) -> Self {
        let mut block_of_col = vec![0; n];
        let blocks = sc
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                block_of_col[b.offset..b.offset + b.block.dim()].iter_mut().for_each(|v| *v = k);
                (b.offset, b.w.hessian())
            })
            .collect();
        Self { blocks, block_of_col }
    }

    fn mul(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (off, h) in &self.blocks {
            match h {
                BlockHessian::Diag(d) => {
                    for (k, dk) in d.iter().enumerate() {
                        out[off + k] = dk * u[off + k];
                    }
                }
                BlockHessian::Dense(m) => {
                    let dim = m.nrows();
                    let v = DVector::from_column_slice(&u[*off..off + dim]);
                    let r = m * v;
                    out[*off..off + dim].copy_from_slice(r.as_slice());
                }
            }
        }
        out
    }

    /// `H aᵀ` for a sparse row, returned as sparse `(col, value)` pairs.
    fn mul_row(&self, row: &[(usize, f64)], scratch: &mut [f64], touched: &mut Vec<usize>) -> Vec<(usize, f64)> {
        touched.clear();
        let mut blocks_seen: Vec<usize> = Vec::new();
        for &(c, v) in row {
            let k = self.block_of_col[c];
            let (off, h) = &self.blocks[k];
            match h {
                BlockHessian::Diag(d) => {
                    if scratch[c] == 0.0 {
                        touched.push(c);
                    }
                    scratch[c] += d[c - off] * v;
                }
                BlockHessian::Dense(m) => {
                    if !blocks_seen.contains(&k) {
                        blocks_seen.push(k);
                        touched.extend(*off..off + m.nrows());
                    }
                    let col = m.column(c - off);
                    for (i, hv) in col.iter().enumerate() {
                        scratch[off + i] += hv * v;
                    }
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let out = touched.iter().map(|&c| (c, scratch[c])).collect();
        for &c in touched.iter() {
            scratch[c] = 0.0;
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Cholesky factor of the normal matrix with diagonal regularization fallback.
struct NormalFactor {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl NormalFactor {
    fn new(m: DMatrix<f64>) -> Self {
        if m.nrows() == 0 {
            return Self { chol: None };
        }
        let scale = m.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
        let mut reg = 0.0;
        for _ in 0..12 {
            let mut mm = m.clone();
            if reg > 0.0 {
                for i in 0..mm.nrows() {
                    mm[(i, i)] += reg * scale;
                }
            }
            if let Some(c) = mm.cholesky() {
                return Self { chol: Some(c) };
            }
            reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        }
        Self { chol: None }
    }

    fn ok(&self, m: usize) -> bool {
        m == 0 || self.chol.is_some()
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(&DVector::from_column_slice(r)).as_slice().to_vec(),
            None => vec![0.0; r.len()],
        }
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    /// `W⁻ᵀ dx` and `W ds`.
    dxs: Vec<f64>,
    dss: Vec<f64>,
}

pub(crate) struct Solver<'a> {
    p: &'a ConicProblem,
    settings: SolverSettings,
    offsets: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Snapshot {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    /// `bτ − Ax`.
    rp: Vec<f64>,
    /// `cτ − Aᵀy − s`.
    rd: Vec<f64>,
    /// `κ + cᵀx − bᵀy`.
    rg: f64,
    cx: f64,
    by: f64,
    aty: Vec<f64>,
    ax: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub(crate) fn new(p: &'a ConicProblem, settings: &SolverSettings) -> Self {
        let offsets = p.cone.offsets();
        let n = p.num_vars();
        let mut e = vec![0.0; n];
        for (b, &o) in p.cone.blocks().iter().zip(&offsets) {
            cones::identity(b, &mut e[o..o + b.dim()]);
        }
        Self {
            p,
            settings: *settings,
            offsets,
            x: e.clone(),
            y: vec![0.0; p.num_constraints()],
            s: e,
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn residuals(&self) -> Residuals {
        let p = self.p;
        let mut ax = vec![0.0; p.num_constraints()];
        p.a.mul_vec(&self.x, &mut ax);
        let mut aty = vec![0.0; p.num_vars()];
        p.a.tmul_vec(&self.y, &mut aty);
        let rp = p.b.iter().zip(&ax).map(|(b, a)| b * self.tau - a).collect();
        let rd = (0..p.num_vars()).map(|i| p.c[i] * self.tau - aty[i] - self.s[i]).collect();
        let cx = dot(&p.c, &self.x);
        let by = dot(&p.b, &self.y);
        Residuals { rp, rd, rg: self.kappa + cx - by, cx, by, aty, ax }
    }

    fn normal_matrix(&self, h: &Hessian) -> (DMatrix<f64>, Vec<Vec<(usize, f64)>>) {
        let a = &self.p.a;
        let m = a.nrows();
        let mut scratch = vec![0.0; a.ncols()];
        let mut touched = Vec::new();
        let ha: Vec<Vec<(usize, f64)>> = a.rows().map(|r| h.mul_row(r, &mut scratch, &mut touched)).collect();
        let mut mat = DMatrix::zeros(m, m);
        let mut dense = vec![0.0; a.ncols()];
        for i in 0..m {
            for &(c, v) in &ha[i] {
                dense[c] = v;
            }
            for j in i..m {
                let val: f64 = a.row(j).iter().map(|&(c, v)| v * dense[c]).sum();
                mat[(i, j)] = val;
                mat[(j, i)] = val;
            }
            for &(c, _) in &ha[i] {
                dense[c] = 0.0;
            }
        }
        (mat, ha)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sc: &Scalings,
        h: &Hessian,
        f: &NormalFactor,
        res: &Residuals,
        dir2: &(Vec<f64>, Vec<f64>),
        eta: f64,
        xi: &[f64],
        xi_tau: f64,
    ) -> Direction {
        let a = &self.p.a;
        let rhat = sc.jdiv(xi);
        let wt_rhat = sc.wt(&rhat);
        // dy1 = M⁻¹(η rp + A(η H rd − Wᵀ r̂))
        let mut t = h.mul(&res.rd);
        t.iter_mut().zip(&wt_rhat).for_each(|(ti, wi)| *ti = eta * *ti - wi);
        let mut rhs = vec![0.0; a.nrows()];
        a.mul_vec(&t, &mut rhs);
        axpy(eta, &res.rp, &mut rhs);
        let dy1 = f.solve(&rhs);
        let mut atdy = vec![0.0; a.ncols()];
        a.tmul_vec(&dy1, &mut atdy);
        axpy(-eta, &res.rd, &mut atdy);
        let mut dx1 = h.mul(&atdy);
        axpy(1.0, &wt_rhat, &mut dx1);

        let (dx2, dy2) = dir2;
        let p = self.p;
        let num = eta * res.rg + xi_tau / self.tau - dot(&p.b, &dy1) + dot(&p.c, &dx1);
        let den = dot(&p.b, dy2) - dot(&p.c, dx2) + self.kappa / self.tau;
        let dtau = num / den;
        let mut dx = dx1;
        axpy(dtau, dx2, &mut dx);
        let mut dy = dy1;
        axpy(dtau, dy2, &mut dy);
        let dkappa = (xi_tau - self.kappa * dtau) / self.tau;
        // ds from the dual equation keeps the dual residual on its linear path.
        let mut ds = vec![0.0; a.ncols()];
        a.tmul_vec(&dy, &mut ds);
        for ((d, rd), c) in ds.iter_mut().zip(&res.rd).zip(&p.c) {
            *d = eta * rd + c * dtau - *d;
        }
        let dxs = sc.winvt(&dx);
        let dss = sc.w(&ds);
        Direction { dx, dy, ds, dtau, dkappa, dxs, dss }
    }

    fn step_length(&self, sc: &Scalings, d: &Direction) -> f64 {
        let mut alpha = sc.max_step(&d.dxs).min(sc.max_step(&d.dss));
        if d.dtau < 0.0 {
            alpha = alpha.min(-self.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / d.dkappa);
        }
        alpha
    }

    fn info(&self, iter: usize, res: &Residuals) -> IterInfo {
        let t = self.tau;
        let rp: Vec<f64> = res.rp.iter().map(|v| v / t).collect();
        let rd: Vec<f64> = res.rd.iter().map(|v| v / t).collect();
        let slack = (dot(&rd, &self.x) / t).abs() + (dot(&rp, &self.y) / t).abs();
        IterInfo {
            iter,
            primal_objective: res.cx / t,
            dual_objective: res.by / t,
            gap: dot(&self.x, &self.s) / (t * t),
            primal_residual_abs: norm(&rp),
            dual_residual_abs: norm(&rd),
            residual_slack: slack,
            tau: self.tau,
            kappa: self.kappa,
        }
    }

    fn finish(&self, status: SolveStatus, iterations: usize, history: Vec<IterInfo>) -> ConicSolution {
        let res = self.residuals();
        let p = self.p;
        let bnorm = norm(&p.b).max(1.0);
        let cnorm = norm(&p.c).max(1.0);
        let normalize = matches!(
            status,
            SolveStatus::Optimal | SolveStatus::MaxIterations | SolveStatus::NumericalFailure
        );
        let t = if normalize { self.tau } else { 1.0 };
        let pcost = res.cx / self.tau;
        let dcost = res.by / self.tau;
        let gap = dot(&self.x, &self.s) / (self.tau * self.tau);
        let (primal_objective, dual_objective) = match status {
            SolveStatus::Infeasible => (f64::INFINITY, res.by),
            SolveStatus::Unbounded => (f64::NEG_INFINITY, res.cx),
            _ => (pcost, dcost),
        };
        ConicSolution {
            x: self.x.iter().map(|v| v / t).collect(),
            y: self.y.iter().map(|v| v / t).collect(),
            s: self.s.iter().map(|v| v / t).collect(),
            status,
            primal_objective,
            dual_objective,
            gap,
            relative_gap: gap / pcost.abs().min(dcost.abs()).max(1.0),
            primal_residual: norm(&res.rp) / self.tau / bnorm,
            dual_residual: norm(&res.rd) / self.tau / cnorm,
            iterations,
            history,
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot { x: self.x.clone(), y: self.y.clone(), s: self.s.clone(), tau: self.tau, kappa: self.kappa }
    }

    fn restore(&mut self, snap: Snapshot) {
        self.x = snap.x;
        self.y = snap.y;
        self.s = snap.s;
        self.tau = snap.tau;
        self.kappa = snap.kappa;
    }

    /// Stops with `NumericalFailure` at the best iterate seen so far.
    fn finish_best(mut self, best: Option<(f64, Snapshot)>, iter: usize, history: Vec<IterInfo>) -> ConicSolution {
        if let Some((_, snap)) = best {
            self.restore(snap);
        }
        self.finish(SolveStatus::NumericalFailure, iter, history)
    }

    pub(crate) fn run(mut self) -> ConicSolution {
        let p = self.p;
        let n = p.num_vars();
        let m = p.num_constraints();
        let nu = p.cone.degree() as f64;
        let bnorm = norm(&p.b).max(1.0);
        let cnorm = norm(&p.c).max(1.0);
        let tol_f = self.settings.feas_tol;
        let tol_g = self.settings.gap_tol;
        let mut history = Vec::new();
        let mut stalls = 0;
        let mut best: Option<(f64, Snapshot)> = None;
        let mut plateau = 0;

        for iter in 0..self.settings.max_iters {
            let res = self.residuals();
            let info = self.info(iter, &res);
            history.push(info);

            let pres = info.primal_residual_abs / bnorm;
            let dres = info.dual_residual_abs / cnorm;
            let rel_gap = info.gap / info.primal_objective.abs().min(info.dual_objective.abs()).max(1.0);
            if pres <= tol_f && dres <= tol_f && rel_gap <= tol_g {
                return self.finish(SolveStatus::Optimal, iter, history);
            }
            let merit = (pres / tol_f).max(dres / tol_f).max(rel_gap / tol_g);
            match &best {
                Some((b, _)) if merit >= 0.9 * b => {
                    plateau += 1;
                    if plateau >= PLATEAU_LIMIT {
                        return self.finish_best(best, iter, history);
                    }
                }
                _ => plateau = 0,
            }
            if best.as_ref().is_none_or(|(b, _)| merit < *b) {
                best = Some((merit, self.snapshot()));
            }
            // Certificates: Aᵀy + s ≈ 0 with bᵀy > 0, or Ax ≈ 0 with cᵀx < 0.
            if res.by > 0.0 {
                let r: Vec<f64> = res.aty.iter().zip(&self.s).map(|(a, s)| a + s).collect();
                if norm(&r) / cnorm / res.by <= tol_f {
                    return self.finish(SolveStatus::Infeasible, iter, history);
                }
            }
            if res.cx < 0.0 && norm(&res.ax) / bnorm / (-res.cx) <= tol_f {
                return self.finish(SolveStatus::Unbounded, iter, history);
            }

            let Some(sc) = Scalings::compute(p, &self.offsets, &self.x, &self.s) else {
                return self.finish_best(best, iter, history);
            };
            let h = Hessian::new(&sc, n);
            let (mat, _) = self.normal_matrix(&h);
            let f = NormalFactor::new(mat);
            if !f.ok(m) {
                return self.finish_best(best, iter, history);
            }
            // Direction shared by predictor and corrector: M dy2 = b + A H c.
            let hc = h.mul(&p.c);
            let mut rhs2 = vec![0.0; m];
            p.a.mul_vec(&hc, &mut rhs2);
            axpy(1.0, &p.b, &mut rhs2);
            let dy2 = f.solve(&rhs2);
            let mut atdy2 = vec![0.0; n];
            p.a.tmul_vec(&dy2, &mut atdy2);
            axpy(-1.0, &p.c, &mut atdy2);
            let dx2 = h.mul(&atdy2);
            let dir2 = (dx2, dy2);

            let mu = (dot(&self.x, &self.s) + self.tau * self.kappa) / (nu + 1.0);
            let ll = sc.jprod(&sc.lambda, &sc.lambda);

            // Predictor.
            let xi_a: Vec<f64> = ll.iter().map(|v| -v).collect();
            let pred = self.direction(&sc, &h, &f, &res, &dir2, 1.0, &xi_a, -self.tau * self.kappa);
            let alpha_a = self.step_length(&sc, &pred).min(1.0);
            let sigma = (1.0 - alpha_a).powi(3);

            // Corrector.
            let e = sc.identity();
            let cross = sc.jprod(&pred.dxs, &pred.dss);
            let xi: Vec<f64> = (0..n).map(|i| -ll[i] + sigma * mu * e[i] - cross[i]).collect();
            let xi_tau = -self.tau * self.kappa + sigma * mu - pred.dtau * pred.dkappa;
            let d = self.direction(&sc, &h, &f, &res, &dir2, 1.0 - sigma, &xi, xi_tau);
            let alpha = (STEP_FACTOR * self.step_length(&sc, &d)).min(1.0);
            if !alpha.is_finite() || d.dx.iter().chain(&d.dy).any(|v| !v.is_finite()) {
                return self.finish_best(best, iter, history);
            }
            if alpha < MIN_STEP {
                stalls += 1;
                if stalls >= STALL_LIMIT {
                    return self.finish_best(best, iter, history);
                }
            } else {
                stalls = 0;
            }

            axpy(alpha, &d.dx, &mut self.x);
            axpy(alpha, &d.dy, &mut self.y);
            axpy(alpha, &d.ds, &mut self.s);
            self.tau += alpha * d.dtau;
            self.kappa += alpha * d.dkappa;

            // Keep the embedding scale bounded.
            let scale = self.tau.max(self.kappa);
            if !(1e-8..=1e8).contains(&scale) {
                let f = 1.0 / scale;
                self.x.iter_mut().chain(self.y.iter_mut()).chain(self.s.iter_mut()).for_each(|v| *v *= f);
                self.tau *= f;
                self.kappa *= f;
            }
        }
        let iters = self.settings.max_iters;
        let res = self.residuals();
        history.push(self.info(iters, &res));
        if let Some((_, snap)) = best {
            self.restore(snap);
        }
        self.finish(SolveStatus::MaxIterations, iters, history)
    }
}
