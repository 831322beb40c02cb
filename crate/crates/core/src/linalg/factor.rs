use super::matrix::{ComplexMatrix, C64};
use crate::error::{Error, Result};

/// Relative asymmetry tolerated before an input is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Hermitian positive definite matrix with its Cholesky factor.
///
/// Construction symmetrizes the input and certifies positive definiteness by
/// factorizing it, so every accessor afterwards is infallible.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianPd {
    matrix: ComplexMatrix,
    chol: ComplexMatrix,
}

impl HermitianPd {
    /// Checks Hermitian-ness within [`HERMITIAN_TOL`], symmetrizes and factorizes.
    pub fn new(matrix: &ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITIAN_TOL)
    }

    pub fn with_tolerance(matrix: &ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "expected a square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let asymmetry = matrix.hermitian_asymmetry();
        if !(asymmetry <= tol) {
            return Err(Error::NotHermitian { asymmetry });
        }
        let matrix = matrix.hermitian_part();
        let chol = cholesky_factor(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Lower-triangular `L` with `L L^H = H`.
    pub fn cholesky(&self) -> &ComplexMatrix {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.rows() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has {} rows, system has dimension {}",
                b.rows(),
                self.dim()
            )));
        }
        let mut x = b.clone();
        for col in 0..b.cols() {
            let mut v: Vec<C64> = (0..b.rows()).map(|i| b[(i, col)]).collect();
            self.solve_in_place(&mut v);
            for (i, z) in v.into_iter().enumerate() {
                x[(i, col)] = z;
            }
        }
        Ok(x)
    }

    /// Solves `H x = b` for a single vector, overwriting `b`.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let l = &self.chol;
        let n = self.dim();
        assert_eq!(b.len(), n, "solve_in_place length");
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * b[k];
            }
            b[i] = s / l[(i, i)].re;
        }
    }

    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `H^{-1}`, Hermitian by construction.
    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut inv = ComplexMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for col in 0..n {
            e.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            e[col] = C64::new(1.0, 0.0);
            self.solve_in_place(&mut e);
            for (i, z) in e.iter().enumerate() {
                inv[(i, col)] = *z;
            }
        }
        inv.hermitian_part()
    }

    /// `x^H H^{-1} x`.
    pub fn inverse_quadratic_form(&self, x: &[C64]) -> f64 {
        // ||L^{-1} x||^2
        let l = &self.chol;
        let n = self.dim();
        let mut y = x.to_vec();
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)].re;
            acc += y[i].norm_sqr();
        }
        acc
    }
}

fn cholesky_factor(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = h.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = h[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Lower-triangular Cholesky factor of the Hermitian part of `h`.
pub fn cholesky(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(HermitianPd::new(h)?.chol)
}

/// `log |H|` via the Cholesky diagonal.
pub fn logdet(h: &ComplexMatrix) -> Result<f64> {
    Ok(HermitianPd::new(h)?.logdet())
}

pub fn solve_hpd(h: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    HermitianPd::new(h)?.solve(b)
}

pub fn inverse_hpd(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(HermitianPd::new(h)?.inverse())
}

/// `X^H X`: the `d x d` Gram matrix over the rows of an `n x d` matrix.
pub fn gram(x: &ComplexMatrix) -> ComplexMatrix {
    x.adjoint_matmul(x).hermitian_part()
}
