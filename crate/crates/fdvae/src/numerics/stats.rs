//! Statistical utilities: Pearson/Spearman correlation and least squares.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};

/// Sample Pearson correlation coefficient.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pcc needs equal-length vectors of length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sa, mut sb, mut sab) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sa += da * da;
        sb += db * db;
        sab += da * db;
    }
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::DegenerateInput(
            "pcc undefined for a zero-variance vector".into(),
        ));
    }
    Ok((sab / (sa.sqrt() * sb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson over midranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pcc(&ranks(a), &ranks(b))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = mid;
        }
        i = j + 1;
    }
    out
}

/// Ordinary least squares with an intercept; falls back to ridge
/// (lambda = 1e-6) on rank deficiency and flags it.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub ridge_fallback: bool,
}

impl LinearFit {
    pub fn predict_row(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    pub fn predict(&self, features: &Array2<f64>) -> Array1<f64> {
        features.map_axis(Axis(1), |row| {
            self.predict_row(row.as_slice().expect("contiguous row"))
        })
    }
}

pub fn linear_regression(features: &Array2<f64>, targets: &[f64]) -> Result<LinearFit> {
    let n = features.nrows();
    let p = features.ncols();
    if n != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "linear_regression: {n} rows vs {} targets",
            targets.len()
        )));
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "linear_regression needs n > p, got n={n}, p={p}"
        )));
    }
    // normal equations over [1 | X]
    let d = p + 1;
    let mut xtx = vec![vec![0.0f64; d]; d];
    let mut xty = vec![0.0f64; d];
    for i in 0..n {
        let mut row = Vec::with_capacity(d);
        row.push(1.0);
        row.extend(features.row(i).iter().copied());
        for a in 0..d {
            xty[a] += row[a] * targets[i];
            for b in a..d {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }

    let scale = xtx.iter().enumerate().map(|(i, r)| r[i]).fold(0.0f64, f64::max);
    match solve(xtx.clone(), xty.clone(), scale) {
        Some(beta) => Ok(LinearFit {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
            ridge_fallback: false,
        }),
        None => {
            let lambda = 1e-6 * scale.max(1.0);
            for (i, row) in xtx.iter_mut().enumerate() {
                row[i] += lambda;
            }
            let beta = solve(xtx, xty, scale)
                .ok_or_else(|| Error::DegenerateInput("singular design even under ridge".into()))?;
            Ok(LinearFit {
                intercept: beta[0],
                coefficients: beta[1..].to_vec(),
                ridge_fallback: true,
            })
        }
    }
}

/// Gaussian elimination with partial pivoting; None on (near-)singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, scale: f64) -> Option<Vec<f64>> {
    let d = b.len();
    let tol = 1e-10 * scale.max(1.0);
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            for k in col..d {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut s = b[col];
        for k in col + 1..d {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Residuals of `target` after regressing out `features` (with intercept).
pub fn residualize(features: &Array2<f64>, target: &[f64]) -> Result<Vec<f64>> {
    let fit = linear_regression(features, target)?;
    let pred = fit.predict(features);
    Ok(target.iter().zip(pred.iter()).map(|(y, p)| y - p).collect())
}
