//! Thin wrappers over nalgebra's dense factorizations.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{FdeError, Result};

/// Solves `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != b.len() {
        return Err(FdeError::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let lu = a.clone().lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| FdeError::Singular("LU factor has a zero pivot".into()))
}

/// Reusable LU factorization.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseLu {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(FdeError::Singular("LU factor has a zero pivot".into()));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_column_slice(b);
        self.lu.solve_mut(&mut x);
        x.as_slice().to_vec()
    }
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !a.is_square() {
        return Err(FdeError::Eigen("matrix is not square".into()));
    }
    let eig = a.complex_eigenvalues();
    let out: Vec<Complex<f64>> = eig.iter().copied().collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(FdeError::Eigen("eigenvalue iteration did not converge".into()));
    }
    Ok(out)
}

/// Singular values in no particular order.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sv = a.clone().svd(false, false).singular_values;
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(FdeError::Eigen("SVD did not converge".into()));
    }
    Ok(sv.as_slice().to_vec())
}

/// Trace norm `Σ σ_k`.
pub fn trace_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_small() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = lu_solve(&a, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(DenseLu::new(s).is_err());
    }

    #[test]
    fn rotation_eigs() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut e = eigenvalues(&a).unwrap();
        e.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((e[0].im + 1.0).abs() < 1e-12 && (e[1].im - 1.0).abs() < 1e-12);
        assert!((trace_norm(&a).unwrap() - 2.0).abs() < 1e-12);
    }
}
