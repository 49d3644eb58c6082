//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Jitter multipliers tried, in order, when a Cholesky factorization fails.
/// Each is scaled by the mean diagonal of the matrix.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cholesky factorization with a bounded diagonal-jitter escalation.
///
/// Returns the factor together with the absolute jitter that was added
/// (zero when the matrix factored as is).
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    what: &'static str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(Error::Dimension(format!("{what} must be square and non-empty")));
    }
    let scale = m.diagonal().iter().sum::<f64>() / n as f64;
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::NotPositiveDefinite(what));
    }
    for lambda in JITTER_LADDER {
        let jitter = lambda * scale;
        let mut work = m.clone();
        if jitter > 0.0 {
            for i in 0..n {
                work[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(work) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::NotPositiveDefinite(what))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
        }
    }
    out
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular-like square root `S` with `S Sᵀ = m` for a symmetric
/// positive semi-definite `m`.
///
/// Falls back to an eigen-decomposition when Cholesky fails, so rank-deficient
/// covariances (perfect dependence) are accepted. Eigenvalues below
/// `-1e-10 · trace` are rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol.l());
    }
    let trace: f64 = m.diagonal().iter().sum();
    let eig = SymmetricEigen::new(m.clone());
    let floor = -1e-10 * trace.abs().max(f64::MIN_POSITIVE);
    let mut out = eig.eigenvectors.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < floor {
            return Err(Error::NotPositiveDefinite(what));
        }
        let s = lam.max(0.0).sqrt();
        out.column_mut(k).scale_mut(s);
    }
    Ok(out)
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// `xᵀ A x` without allocating.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let col = a.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += col[i] * x[i];
        }
        acc += s * x[j];
    }
    acc
}
