//! Fisher information and the total Cramér-Rao bound for Gaussian range noise.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Result, SlatError};
use crate::model::{ObservationMask, Point2, StackedCoords};

/// Fisher information of the stacked unknowns, `2(n+m)` square.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub sigma: f64,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `trace(F⁻¹)` together with the spectral condition number of `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseTrace {
    pub trace: f64,
    pub condition: f64,
}

/// Adds `u uᵀ` into the 2x2 blocks `(p, q)` with `sign`.
fn add_block(f: &mut DMatrix<f64>, p: usize, q: usize, u: [f64; 2], sign: f64) {
    for a in 0..2 {
        for b in 0..2 {
            f[(2 * p + a, 2 * q + b)] += sign * u[a] * u[b];
        }
    }
}

fn unit(from: Point2, to: Point2, what: &str) -> Result<[f64; 2]> {
    let d = from - to;
    let len = d.norm();
    if !(len > 0.0) {
        return Err(SlatError::DegenerateGeometry(format!("{what} coincide; bearing undefined")));
    }
    Ok([d.x / len, d.y / len])
}

/// Fisher information over explicit measurement lists; repeated pairs count repeatedly.
pub fn fisher_information_terms(
    x_true: &StackedCoords,
    anchors: &[Point2],
    n_sensors: usize,
    sensor_target: &[(usize, usize)],
    anchor_target: &[(usize, usize)],
    sigma: f64,
) -> Result<FisherMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SlatError::config(format!("noise sigma must be positive, got {sigma}")));
    }
    let points = x_true.num_points();
    if n_sensors > points {
        return Err(SlatError::dim(format!("{n_sensors} sensors but only {points} unknown points")));
    }
    let target = |j: usize| -> Result<usize> {
        let t = n_sensors + j;
        if t < points {
            Ok(t)
        } else {
            Err(SlatError::dim(format!("target {j} outside the coordinate vector")))
        }
    };
    let mut f = DMatrix::zeros(2 * points, 2 * points);
    for &(i, j) in sensor_target {
        let t = target(j)?;
        if i >= n_sensors {
            return Err(SlatError::dim(format!("sensor {i} outside the coordinate vector")));
        }
        let u = unit(x_true.point(i), x_true.point(t), &format!("sensor {i} and target {j}"))?;
        add_block(&mut f, i, i, u, 1.0);
        add_block(&mut f, t, t, u, 1.0);
        add_block(&mut f, i, t, u, -1.0);
        add_block(&mut f, t, i, u, -1.0);
    }
    for &(k, j) in anchor_target {
        let t = target(j)?;
        let a = *anchors.get(k).ok_or_else(|| SlatError::dim(format!("anchor {k} does not exist")))?;
        let u = unit(a, x_true.point(t), &format!("anchor {k} and target {j}"))?;
        add_block(&mut f, t, t, u, 1.0);
    }
    Ok(FisherMatrix { matrix: f / (sigma * sigma), sigma })
}

/// Fisher information of the Gaussian range model at the true positions.
pub fn fisher_information(
    x_true: &StackedCoords,
    anchors: &[Point2],
    mask: &ObservationMask,
    sigma: f64,
) -> Result<FisherMatrix> {
    if x_true.num_points() != mask.n_sensors() + mask.n_targets() || anchors.len() != mask.n_anchors() {
        return Err(SlatError::dim("coordinates and anchors do not match the observation mask"));
    }
    let st: Vec<_> = mask.sensor_target().collect();
    let at: Vec<_> = mask.anchor_target().collect();
    fisher_information_terms(x_true, anchors, mask.n_sensors(), &st, &at, sigma)
}

/// `trace(F⁻¹)` through a Cholesky factorization.
pub fn inverse_trace(f: &FisherMatrix) -> Result<InverseTrace> {
    let eig = SymmetricEigen::new(f.matrix.clone());
    let hi = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let singular = || SlatError::Singular(format!("Fisher matrix is singular (condition number {condition:.3e})"));
    if f.dim() == 0 || !(condition < 1e14) {
        return Err(singular());
    }
    let chol = Cholesky::new(f.matrix.clone()).ok_or_else(singular)?;
    let inv = chol.inverse();
    Ok(InverseTrace { trace: inv.trace(), condition })
}

/// `sqrt(trace(F⁻¹) / (n+m))`.
pub fn crlb_total(f: &FisherMatrix, n_plus_m: usize) -> Result<f64> {
    if n_plus_m == 0 || 2 * n_plus_m != f.dim() {
        return Err(SlatError::dim(format!("{n_plus_m} points do not match a Fisher matrix of side {}", f.dim())));
    }
    Ok((inverse_trace(f)?.trace / n_plus_m as f64).sqrt())
}

/// Square root of the mean per-run `trace(F⁻¹)`, divided by the point count.
pub fn averaged_crlb(traces: &[f64], n_plus_m: usize) -> Option<f64> {
    if traces.is_empty() || n_plus_m == 0 {
        return None;
    }
    let mean = traces.iter().sum::<f64>() / traces.len() as f64;
    Some((mean / n_plus_m as f64).sqrt())
}
