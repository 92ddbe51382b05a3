//! Ordinary least squares via modified Gram-Schmidt with re-orthogonalization.
//!
//! Columns are scaled to unit norm before factorization. A column whose
//! component orthogonal to the preceding columns is below `COLLINEAR_TOL`
//! (relative to its own norm) is reported as collinear together with the
//! earlier columns it projects onto.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const COLLINEAR_TOL: f64 = 1e-9;

/// Solves `min ||X b - y||²` and returns `b`.
pub fn least_squares(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    assert_eq!(y.len(), n, "response length mismatch");
    assert_eq!(names.len(), p, "column name count mismatch");
    if n < p {
        return Err(Error::InsufficientData(format!(
            "{n} rows for {p} regression columns"
        )));
    }

    let mut scale = vec![1.0; p];
    let mut q = x.clone();
    for j in 0..p {
        let norm = q.column(j).norm();
        if norm == 0.0 {
            return Err(Error::SingularDesign {
                column: names[j].clone(),
                others: vec!["<all-zero column>".into()],
            });
        }
        scale[j] = norm;
        q.column_mut(j).scale_mut(1.0 / norm);
    }

    let mut r = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut v: DVector<f64> = q.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                r[(i, j)] += c;
                v.axpy(-c, &q.column(i), 1.0);
            }
        }
        let norm = v.norm();
        if norm < COLLINEAR_TOL {
            let others = (0..j)
                .filter(|&i| r[(i, j)].abs() > 1e-6)
                .map(|i| names[i].clone())
                .collect();
            return Err(Error::SingularDesign {
                column: names[j].clone(),
                others,
            });
        }
        r[(j, j)] = norm;
        q.set_column(j, &(v / norm));
    }

    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * yv;
    let mut b = vec![0.0; p];
    for j in (0..p).rev() {
        let mut acc = qty[j];
        for k in j + 1..p {
            acc -= r[(j, k)] * b[k];
        }
        b[j] = acc / r[(j, j)];
    }
    for j in 0..p {
        b[j] /= scale[j];
    }
    Ok(b)
}
