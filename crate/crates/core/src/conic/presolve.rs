//! Removal of linearly dependent equality rows.

use super::ConicProblem;
use crate::error::Result;

/// Squared residual norm, relative to the row norm, below which a row counts as dependent.
const DEPENDENCE_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-8;

pub(crate) enum Reduced {
    Inconsistent,
    Problem { problem: ConicProblem, kept: Vec<usize> },
}

/// True when every row owns a column that no other row touches.
fn rows_have_private_columns(p: &ConicProblem) -> bool {
    let mut count = vec![0u32; p.num_vars()];
    for row in p.a.rows() {
        for &(c, _) in row {
            count[c] += 1;
        }
    }
    p.a.rows().all(|row| row.iter().any(|&(c, _)| count[c] == 1))
}

/// Drops dependent rows by an in-order Cholesky of `A Aᵀ`, checking the
/// right-hand side of every dropped row against the kept ones.
pub(crate) fn reduce_rows(p: &ConicProblem) -> Result<Reduced> {
    let m = p.num_constraints();
    if rows_have_private_columns(p) {
        return Ok(Reduced::Problem { problem: p.clone(), kept: (0..m).collect() });
    }

    let mut dense = vec![0.0; p.num_vars()];
    let mut kept: Vec<usize> = Vec::new();
    // Lower-triangular factor rows of the Gram matrix of kept rows.
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut b_scale = 1.0f64;
    for &v in &p.b {
        b_scale = b_scale.max(v.abs());
    }

    for i in 0..m {
        let row = p.a.row(i);
        for &(c, v) in row {
            dense[c] = v;
        }
        let gii: f64 = row.iter().map(|e| e.1 * e.1).sum();
        let g: Vec<f64> = kept.iter().map(|&k| p.a.row(k).iter().map(|&(c, v)| v * dense[c]).sum()).collect();
        for &(c, _) in row {
            dense[c] = 0.0;
        }
        // Forward solve L z = g.
        let mut z = vec![0.0; kept.len()];
        for r in 0..kept.len() {
            let s: f64 = (0..r).map(|q| l[r][q] * z[q]).sum();
            z[r] = (g[r] - s) / l[r][r];
        }
        let resid = gii - z.iter().map(|v| v * v).sum::<f64>();
        if gii > 0.0 && resid > DEPENDENCE_TOL * gii {
            let mut new_row = z;
            new_row.push(resid.sqrt());
            l.push(new_row);
            kept.push(i);
            continue;
        }
        // Dependent: coefficients c with Lᵀ c = z express row i through kept rows.
        let k = kept.len();
        let mut coef = vec![0.0; k];
        for r in (0..k).rev() {
            let s: f64 = (r + 1..k).map(|q| l[q][r] * coef[q]).sum();
            coef[r] = (z[r] - s) / l[r][r];
        }
        let predicted: f64 = coef.iter().zip(&kept).map(|(c, &kk)| c * p.b[kk]).sum();
        if (predicted - p.b[i]).abs() > CONSISTENCY_TOL * b_scale {
            return Ok(Reduced::Inconsistent);
        }
    }

    let problem = ConicProblem {
        c: p.c.clone(),
        a: p.a.retain_rows(&kept),
        b: kept.iter().map(|&k| p.b[k]).collect(),
        cone: p.cone.clone(),
    };
    Ok(Reduced::Problem { problem, kept })
}
