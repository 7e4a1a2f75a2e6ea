//! Per-block Nesterov–Todd scaling and Jordan-algebra kernels.
//!
//! For a primal point `x` and dual point `s` in the interior of a block, the
//! scaling `W` satisfies `W s = W⁻ᵀ x = λ`. In the scaled space every PSD
//! block has a diagonal `λ`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{svec_index, ConeBlock};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub(crate) fn svec_to_mat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let val = v[svec_index(n, i, j)];
            if i == j {
                m[(i, i)] = val;
            } else {
                m[(i, j)] = val * FRAC_1_SQRT_2;
                m[(j, i)] = val * FRAC_1_SQRT_2;
            }
        }
    }
    m
}

pub(crate) fn mat_to_svec(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    for j in 0..n {
        for i in j..n {
            out[svec_index(n, i, j)] = if i == j {
                m[(i, i)]
            } else {
                (m[(i, j)] + m[(j, i)]) * FRAC_1_SQRT_2
            };
        }
    }
}

/// Dense or diagonal `H = WᵀW` for one block.
pub(crate) enum BlockHessian {
    Diag(Vec<f64>),
    Dense(DMatrix<f64>),
}

pub(crate) enum Scaling {
    /// `W = diag(d)`.
    Nonneg { d: Vec<f64> },
    /// `W = β (2 v vᵀ − J)` with `vᵀ J v = 1`.
    Soc { beta: f64, v: Vec<f64> },
    /// `W(U) = rᵀ U r`, `rti = r⁻ᵀ`.
    Psd { r: DMatrix<f64>, rti: DMatrix<f64> },
}

fn jdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

fn jnorm(u: &[f64]) -> Option<f64> {
    let q = jdot(u, u);
    (u[0] > 0.0 && q > 0.0).then(|| q.sqrt())
}

impl Scaling {
    /// Scaling and scaled point `λ`, or `None` if either point is not interior.
    pub(crate) fn compute(block: &ConeBlock, x: &[f64], s: &[f64]) -> Option<(Scaling, Vec<f64>)> {
        match *block {
            ConeBlock::Nonnegative(_) => {
                if x.iter().chain(s).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let d = x.iter().zip(s).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = x.iter().zip(s).map(|(a, b)| (a * b).sqrt()).collect();
                Some((Scaling::Nonneg { d }, lambda))
            }
            ConeBlock::SecondOrder(dim) => {
                let aa = jnorm(x)?;
                let bb = jnorm(s)?;
                let beta = (aa / bb).sqrt();
                let xs: f64 = x.iter().zip(s).map(|(a, b)| a * b).sum();
                let gamma = ((xs / (aa * bb) + 1.0) / 2.0).sqrt();
                // w̄ = (x̄ + J s̄) / (2γ), then v = (w̄ + e) / sqrt(2 (w̄₀ + 1)).
                let mut v: Vec<f64> = (0..dim)
                    .map(|k| {
                        let js = if k == 0 { s[0] } else { -s[k] };
                        (x[k] / aa + js / bb) / (2.0 * gamma)
                    })
                    .collect();
                v[0] += 1.0;
                let scale = 1.0 / (2.0 * v[0]).sqrt();
                v.iter_mut().for_each(|e| *e *= scale);
                let sc = Scaling::Soc { beta, v };
                let mut lambda = vec![0.0; dim];
                sc.apply_w(s, &mut lambda);
                Some((sc, lambda))
            }
            ConeBlock::SemidefiniteReal(n) => {
                let ls = svec_to_mat(x, n).cholesky()?.l();
                let lz = svec_to_mat(s, n).cholesky()?.l();
                let svd = (lz.transpose() * &ls).svd(true, true);
                let (u, vt) = (svd.u?, svd.v_t?);
                let sv = svd.singular_values;
                if sv.iter().any(|&l| !(l > 0.0)) {
                    return None;
                }
                let inv_sqrt = DMatrix::from_diagonal(&sv.map(|l| 1.0 / l.sqrt()));
                let r = &ls * vt.transpose() * &inv_sqrt;
                let rti = &lz * &u * &inv_sqrt;
                let mut lambda = vec![0.0; n * (n + 1) / 2];
                for (i, &l) in sv.iter().enumerate() {
                    lambda[svec_index(n, i, i)] = l;
                }
                Some((Scaling::Psd { r, rti }, lambda))
            }
        }
    }

    /// `out = W u`.
    pub(crate) fn apply_w(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d } => out.iter_mut().zip(d.iter().zip(u)).for_each(|(o, (d, u))| *o = d * u),
            Scaling::Soc { beta, v } => {
                let vu: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for k in 0..u.len() {
                    let ju = if k == 0 { u[0] } else { -u[k] };
                    out[k] = beta * (2.0 * v[k] * vu - ju);
                }
            }
            Scaling::Psd { r, .. } => congruence(&r.transpose(), u, out),
        }
    }

    /// `out = Wᵀ u`.
    pub(crate) fn apply_wt(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { r, .. } => congruence(r, u, out),
            _ => self.apply_w(u, out),
        }
    }

    /// `out = W⁻¹ u`.
    pub(crate) fn apply_winv(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d } => out.iter_mut().zip(d.iter().zip(u)).for_each(|(o, (d, u))| *o = u / d),
            Scaling::Soc { beta, v } => {
                // W⁻¹ = (2 J v vᵀ J − J) / β
                let jv: Vec<f64> = v.iter().enumerate().map(|(k, &e)| if k == 0 { e } else { -e }).collect();
                let jvu: f64 = jv.iter().zip(u).map(|(a, b)| a * b).sum();
                for k in 0..u.len() {
                    let ju = if k == 0 { u[0] } else { -u[k] };
                    out[k] = (2.0 * jv[k] * jvu - ju) / beta;
                }
            }
            Scaling::Psd { rti, .. } => congruence(rti, u, out),
        }
    }

    /// `out = W⁻ᵀ u`.
    pub(crate) fn apply_winvt(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { rti, .. } => congruence(&rti.transpose(), u, out),
            _ => self.apply_winv(u, out),
        }
    }

    pub(crate) fn hessian(&self) -> BlockHessian {
        match self {
            Scaling::Nonneg { d } => BlockHessian::Diag(d.iter().map(|v| v * v).collect()),
            Scaling::Soc { beta, v } => {
                let dim = v.len();
                let mut w = DMatrix::from_fn(dim, dim, |i, j| 2.0 * beta * v[i] * v[j]);
                w[(0, 0)] -= beta;
                for k in 1..dim {
                    w[(k, k)] += beta;
                }
                BlockHessian::Dense(&w * &w)
            }
            Scaling::Psd { r, .. } => {
                let n = r.nrows();
                let q = r * r.transpose();
                let dim = n * (n + 1) / 2;
                let mut h = DMatrix::zeros(dim, dim);
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect();
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let sij = if i == j { FRAC_1_SQRT_2 } else { 1.0 };
                    for (qidx, &(k, l)) in pairs.iter().enumerate().skip(p) {
                        let skl = if k == l { FRAC_1_SQRT_2 } else { 1.0 };
                        let f = q[(i, k)] * q[(j, l)] + q[(i, l)] * q[(j, k)];
                        let val = f * sij * skl;
                        h[(p, qidx)] = val;
                        h[(qidx, p)] = val;
                    }
                }
                BlockHessian::Dense(h)
            }
        }
    }
}

/// `out = svec(M U Mᵀ)` for `U = smat(u)`.
fn congruence(m: &DMatrix<f64>, u: &[f64], out: &mut [f64]) {
    let n = m.nrows();
    let um = svec_to_mat(u, n);
    let res = m * um * m.transpose();
    mat_to_svec(&res, out);
}

/// Jordan product `u ∘ v` for the block.
pub(crate) fn jordan_prod(block: &ConeBlock, u: &[f64], v: &[f64], out: &mut [f64]) {
    match *block {
        ConeBlock::Nonnegative(_) => out.iter_mut().zip(u.iter().zip(v)).for_each(|(o, (a, b))| *o = a * b),
        ConeBlock::SecondOrder(_) => {
            out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for k in 1..u.len() {
                out[k] = u[0] * v[k] + v[0] * u[k];
            }
        }
        ConeBlock::SemidefiniteReal(n) => {
            let um = svec_to_mat(u, n);
            let vm = svec_to_mat(v, n);
            let p = &um * &vm;
            let sym = (&p + p.transpose()) * 0.5;
            mat_to_svec(&sym, out);
        }
    }
}

/// Solves `λ ∘ z = ξ` for `z`, where `λ` is the scaled point (diagonal for PSD blocks).
pub(crate) fn jordan_div(block: &ConeBlock, lambda: &[f64], xi: &[f64], out: &mut [f64]) {
    match *block {
        ConeBlock::Nonnegative(_) => out.iter_mut().zip(xi.iter().zip(lambda)).for_each(|(o, (x, l))| *o = x / l),
        ConeBlock::SecondOrder(_) => {
            let det = jdot(lambda, lambda);
            let l1x1: f64 = lambda[1..].iter().zip(&xi[1..]).map(|(a, b)| a * b).sum();
            let z0 = (lambda[0] * xi[0] - l1x1) / det;
            out[0] = z0;
            for k in 1..lambda.len() {
                out[k] = (xi[k] - z0 * lambda[k]) / lambda[0];
            }
        }
        ConeBlock::SemidefiniteReal(n) => {
            for j in 0..n {
                let lj = lambda[svec_index(n, j, j)];
                for i in j..n {
                    let li = lambda[svec_index(n, i, i)];
                    let idx = svec_index(n, i, j);
                    out[idx] = 2.0 * xi[idx] / (li + lj);
                }
            }
        }
    }
}

pub(crate) fn identity(block: &ConeBlock, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    match *block {
        ConeBlock::Nonnegative(_) => out.iter_mut().for_each(|v| *v = 1.0),
        ConeBlock::SecondOrder(_) => out[0] = 1.0,
        ConeBlock::SemidefiniteReal(n) => (0..n).for_each(|i| out[svec_index(n, i, i)] = 1.0),
    }
}

/// Largest `α` such that `λ + α d` stays in the closed cone (`∞` if unbounded).
pub(crate) fn max_step(block: &ConeBlock, lambda: &[f64], d: &[f64]) -> f64 {
    match *block {
        ConeBlock::Nonnegative(_) => lambda
            .iter()
            .zip(d)
            .filter(|(_, &dv)| dv < 0.0)
            .map(|(&l, &dv)| -l / dv)
            .fold(f64::INFINITY, f64::min),
        ConeBlock::SecondOrder(_) => soc_max_step(lambda, d),
        ConeBlock::SemidefiniteReal(n) => {
            let dm = svec_to_mat(d, n);
            let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / lambda[svec_index(n, i, i)].sqrt()).collect();
            let scaled = DMatrix::from_fn(n, n, |i, j| dm[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
            let min_eig = SymmetricEigen::new(scaled).eigenvalues.min();
            if min_eig >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / min_eig
            }
        }
    }
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // f(α) = (x₀ + α d₀)² − ‖x₁ + α d₁‖² = a α² + 2 b α + c, with f(0) = c > 0.
    let a = jdot(d, d);
    let b = jdot(x, d);
    let c = jdot(x, x);
    let mut best = f64::INFINITY;
    if d[0] < 0.0 {
        best = -x[0] / d[0];
    }
    let root = if a.abs() < 1e-300 {
        if b < 0.0 {
            -c / (2.0 * b)
        } else {
            f64::INFINITY
        }
    } else {
        let disc = b * b - a * c;
        if disc < 0.0 {
            f64::INFINITY
        } else {
            let q = -(b + b.signum() * disc.sqrt());
            let r1 = q / a;
            let r2 = if q != 0.0 { c / q } else { f64::INFINITY };
            [r1, r2].into_iter().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min)
        }
    };
    best.min(root)
}
