//! Small dense linear-algebra helpers shared by the samplers.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Replaces `m` with `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Factor `L` with `L L' = p` for a symmetric positive semidefinite `p`.
///
/// Cholesky is tried first; singular matrices fall back to an eigen
/// decomposition with negative round-off eigenvalues set to zero.
pub fn psd_factor(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance matrix".into()));
    }
    if let Some(chol) = p.clone().cholesky() {
        return Ok(chol.l());
    }
    let mut sym = p.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Singular("covariance eigen decomposition did not converge".into()))?;
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = scale * 1e-10;
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol.max(1e-12) {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue {lambda:e} in covariance factor"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        for i in 0..factor.nrows() {
            factor[(i, j)] *= s;
        }
    }
    Ok(factor)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(mean, L L')` given the factor `L`.
pub fn draw_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = standard_normal_vector(factor.ncols(), rng);
    mean + factor * z
}

/// Conditions `N(mean, cov)` on the linear observations `rows * x + noise = values`,
/// `noise ~ N(0, diag(noise_var))`. Exact rows use zero noise variance.
pub fn condition_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rows: &DMatrix<f64>,
    values: &DVector<f64>,
    noise_var: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if rows.nrows() == 0 {
        return Ok((mean.clone(), cov.clone()));
    }
    let pz = cov * rows.transpose();
    let mut f = rows * &pz;
    for (i, v) in noise_var.iter().enumerate() {
        f[(i, i)] += v;
    }
    symmetrize(&mut f);
    let chol = f
        .cholesky()
        .ok_or_else(|| Error::Singular("observation covariance in Gaussian conditioning".into()))?;
    let innovation = values - rows * mean;
    let new_mean = mean + &pz * chol.solve(&innovation);
    let mut new_cov = cov - &pz * chol.solve(&pz.transpose());
    symmetrize(&mut new_cov);
    Ok((new_mean, new_cov))
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    match Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max),
        None => radius_from_powers(m),
    }
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Gelfand estimate `||m^k||^{1/k}` with `k = 2^40`, by repeated squaring
/// of a normalized matrix.
fn radius_from_powers(m: &DMatrix<f64>) -> f64 {
    let mut a = m.clone();
    let mut log_norm = 0.0;
    let mut k = 1.0;
    for _ in 0..40 {
        let n = a.norm();
        if n == 0.0 || !n.is_finite() {
            return if n == 0.0 { 0.0 } else { f64::INFINITY };
        }
        a /= n;
        log_norm += n.ln();
        a = &a * &a;
        log_norm *= 2.0;
        k *= 2.0;
    }
    let n = a.norm();
    if n == 0.0 {
        return 0.0;
    }
    ((log_norm + n.ln()) / k).exp()
}
