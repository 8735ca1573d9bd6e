//! Symmetric positive-definite linear solvers.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense Cholesky solve with a few steps of iterative refinement.
pub(crate) fn solve_spd_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::Numeric(
            "normal equations are not positive definite; \
             increase the regularization strengths"
                .into(),
        )
    })?;
    let bv = DVector::from_column_slice(b);
    let b_norm = bv.norm();
    let mut x = chol.solve(&bv);
    for _ in 0..3 {
        let r = &bv - a * &x;
        if r.norm() <= 1e-14 * b_norm {
            break;
        }
        x += chol.solve(&r);
    }
    Ok(x.as_slice().to_vec())
}

/// Conjugate gradients on `apply(x) = b` for a symmetric positive-definite
/// operator, run to a relative residual of `rel_tol`.
pub(crate) fn solve_spd_cg<F>(
    apply: F,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    for _ in 0..max_iters {
        let ap = apply(&p);
        let p_ap = dot(&p, &ap);
        if p_ap <= 0.0 {
            return Err(Error::Numeric(
                "conjugate gradients found a non-positive curvature direction; \
                 increase the regularization strengths"
                    .into(),
            ));
        }
        let alpha = rs / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_next = dot(&r, &r);
        if rs_next.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let beta = rs_next / rs;
        rs = rs_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "conjugate gradients did not reach relative residual {rel_tol:.1e} \
         within {max_iters} iterations"
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
