use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of `|R_jj|` against the column norm below which a column is
/// treated as linearly dependent on the columns before it.
pub(crate) const RANK_RTOL: f64 = 1e-10;

pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Diagonal of the hat matrix.
    pub leverage: DVector<f64>,
}

/// Least squares by Householder QR. `names` labels the columns of `a` for error reporting.
pub(crate) fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let (n, p) = a.shape();
    debug_assert_eq!(names.len(), p);
    if n < p {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} parameters"
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| {
            let norm = a.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= RANK_RTOL * norm
        })
        .map(|j| names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(Error::SingularDesign { columns: dependent });
    }
    let q = qr.q();
    let qty = q.transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign {
            columns: names.to_vec(),
        })?;
    let fitted = a * &coef;
    let residuals = y - &fitted;
    let leverage = DVector::from_iterator(n, q.row_iter().map(|row| row.norm_squared()));
    Ok(LeastSquares {
        coef,
        fitted,
        residuals,
        leverage,
    })
}

/// `[1 | x]`.
pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}
