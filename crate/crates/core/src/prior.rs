//! Horseshoe prior and the per-equation Gibbs updates of the structural VAR.
//!
//! Equation `i` of `A y_t = b0 + B_1 y_{t-1} + ... + B_p y_{t-p} + G x_t + e_t`
//! is the regression of `y_{i,t}` on `[-y_{1..i-1,t} | 1 | y_{t-1}' .. y_{t-p}' | x_{i,t}']`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};
use crate::linalg::{self, standard_normal_vector};

pub const SCALE_MIN: f64 = 1e-12;
pub const SCALE_MAX: f64 = 1e12;

/// Regression data for one structural equation.
#[derive(Debug, Clone)]
pub struct EquationDesign {
    pub response: DVector<f64>,
    pub regressors: DMatrix<f64>,
    /// Columns holding `-y_{j,t}` for earlier-ordered variables.
    pub contemporaneous: usize,
    /// Trailing exogenous columns.
    pub exogenous: usize,
}

impl EquationDesign {
    pub fn new(
        response: DVector<f64>,
        regressors: DMatrix<f64>,
        contemporaneous: usize,
        exogenous: usize,
    ) -> Result<Self> {
        if response.len() != regressors.nrows() {
            return Err(Error::Dimension(format!(
                "{} responses but {} regressor rows",
                response.len(),
                regressors.nrows()
            )));
        }
        if contemporaneous + exogenous + 1 > regressors.ncols() {
            return Err(Error::Dimension("too few regressor columns".into()));
        }
        if response.iter().chain(regressors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("equation design".into()));
        }
        Ok(Self {
            response,
            regressors,
            contemporaneous,
            exogenous,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    pub fn n_coef(&self) -> usize {
        self.regressors.ncols()
    }

    pub fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.response - &self.regressors * theta
    }
}

/// Builds the designs of all `N` equations from a complete `T x N` data
/// matrix. Rows `p..T` are used; `exog[i]` holds the `T x e_i` exogenous
/// columns of equation `i`, aligned with the data rows.
pub fn build_designs(data: &DMatrix<f64>, p: usize, exog: &[DMatrix<f64>]) -> Result<Vec<EquationDesign>> {
    let (t_all, n) = data.shape();
    if exog.len() != n {
        return Err(Error::Dimension(format!("{} exogenous blocks for {n} equations", exog.len())));
    }
    if t_all <= p {
        return Err(Error::TooShort {
            needed: p + 1,
            got: t_all,
        });
    }
    let rows = t_all - p;
    let mut lag_block = DMatrix::zeros(rows, 1 + n * p);
    for r in 0..rows {
        let t = r + p;
        lag_block[(r, 0)] = 1.0;
        for l in 1..=p {
            for j in 0..n {
                lag_block[(r, 1 + (l - 1) * n + j)] = data[(t - l, j)];
            }
        }
    }
    (0..n)
        .map(|i| {
            let e = &exog[i];
            if e.nrows() != t_all {
                return Err(Error::Dimension(format!("exogenous block {i} has {} rows", e.nrows())));
            }
            let k = i + lag_block.ncols() + e.ncols();
            let mut x = DMatrix::zeros(rows, k);
            for r in 0..rows {
                let t = r + p;
                for j in 0..i {
                    x[(r, j)] = -data[(t, j)];
                }
                for c in 0..lag_block.ncols() {
                    x[(r, i + c)] = lag_block[(r, c)];
                }
                for c in 0..e.ncols() {
                    x[(r, i + lag_block.ncols() + c)] = e[(t, c)];
                }
            }
            let y = DVector::from_iterator(rows, (0..rows).map(|r| data[(r + p, i)]));
            EquationDesign::new(y, x, i, e.ncols())
        })
        .collect()
}

/// Global and local horseshoe scales of one equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeState {
    pub tau2: f64,
    pub lambda2: Vec<f64>,
    /// Number of times a draw was clamped into `[SCALE_MIN, SCALE_MAX]`.
    pub clamp_events: u64,
}

impl HorseshoeState {
    pub fn new(k: usize) -> Self {
        Self {
            tau2: 1.0,
            lambda2: vec![1.0; k],
            clamp_events: 0,
        }
    }

    /// Prior variances (before scaling by the equation variance).
    pub fn prior_variances(&self) -> DVector<f64> {
        DVector::from_iterator(self.lambda2.len(), self.lambda2.iter().map(|l| l * self.tau2))
    }

    pub fn validate(&self) -> Result<()> {
        if std::iter::once(&self.tau2)
            .chain(&self.lambda2)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidInput("shrinkage scales must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of the variance priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Inverse-gamma prior on each equation variance; zero shape and scale
    /// give the improper limit.
    pub sigma_shape: f64,
    pub sigma_scale: f64,
    /// Inverse-gamma prior on the cross-sectional slack variance.
    pub cs_shape: f64,
    pub cs_scale: f64,
    /// Restricts coefficient draws to the stationary region by joint
    /// rejection across equations.
    pub stationary: bool,
    /// Rejection attempts per sweep before the previous coefficients are
    /// kept.
    pub stationarity_tries: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_shape: 1.0,
            sigma_scale: 1e-4,
            cs_shape: 10.0,
            cs_scale: 0.01,
            stationary: true,
            stationarity_tries: 100,
        }
    }
}

/// Draws `theta ~ N(A^{-1} X'y, sigma2 A^{-1})`, `A = X'X + diag(1/(tau2 lambda2))`.
/// Uses the Woodbury-based sampler when coefficients outnumber observations.
pub fn draw_coefficients<R: Rng + ?Sized>(
    design: &EquationDesign,
    scales: &HorseshoeState,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("equation variance {sigma2}")));
    }
    scales.validate()?;
    if scales.lambda2.len() != design.n_coef() {
        return Err(Error::Dimension("one local scale per coefficient required".into()));
    }
    let prior_var = scales.prior_variances();
    if design.n_coef() > design.n_obs() {
        draw_coefficients_fast(design, &prior_var, sigma2, rng)
    } else {
        draw_coefficients_chol(design, &prior_var, sigma2, rng)
    }
}

fn draw_coefficients_chol<R: Rng + ?Sized>(
    design: &EquationDesign,
    prior_var: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let x = &design.regressors;
    let mut a = x.tr_mul(x);
    for j in 0..a.nrows() {
        a[(j, j)] += 1.0 / prior_var[j];
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("coefficient posterior precision".into()))?;
    let mean = chol.solve(&x.tr_mul(&design.response));
    let z = standard_normal_vector(mean.len(), rng) * sigma2.sqrt();
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Singular("coefficient posterior factor".into()))?;
    let theta = mean + dev;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficient draw".into()));
    }
    Ok(theta)
}

fn draw_coefficients_fast<R: Rng + ?Sized>(
    design: &EquationDesign,
    prior_var: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let sd = sigma2.sqrt();
    let phi = &design.regressors / sd;
    let alpha = &design.response / sd;
    let d = prior_var * sigma2;
    let u = standard_normal_vector(d.len(), rng).component_mul(&d.map(f64::sqrt));
    let delta = standard_normal_vector(design.n_obs(), rng);
    let v = &phi * &u + delta;
    let phi_d = DMatrix::from_fn(phi.nrows(), phi.ncols(), |r, c| phi[(r, c)] * d[c]);
    let mut m = &phi_d * phi.transpose();
    for r in 0..m.nrows() {
        m[(r, r)] += 1.0;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("fast sampler system".into()))?;
    let w = chol.solve(&(alpha - v));
    let theta = u + phi_d.tr_mul(&w);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficient draw".into()));
    }
    Ok(theta)
}

/// Inverse-gamma draw with the given shape and scale.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidInput(format!("inverse-gamma shape {shape}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("inverse-gamma scale {scale}")));
    }
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

/// Draws the equation variance from
/// `IG((T + k)/2 + a0, (SSR + theta' Lambda^{-1} theta)/2 + b0)`.
pub fn draw_sigma2<R: Rng + ?Sized>(
    design: &EquationDesign,
    theta: &DVector<f64>,
    scales: &HorseshoeState,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<f64> {
    let resid = design.residuals(theta);
    let ssr = resid.norm_squared();
    if !ssr.is_finite() {
        return Err(Error::NonFinite("equation residuals".into()));
    }
    let penalty: f64 = theta
        .iter()
        .zip(&scales.lambda2)
        .map(|(t, l)| t * t / (l * scales.tau2))
        .sum();
    let shape = (design.n_obs() + design.n_coef()) as f64 / 2.0 + prior.sigma_shape;
    let scale = (ssr + penalty) / 2.0 + prior.sigma_scale;
    draw_inverse_gamma(shape, scale, rng)
}

fn clamp_scale(v: f64, events: &mut u64) -> f64 {
    if v.is_nan() || v < SCALE_MIN {
        *events += 1;
        SCALE_MIN
    } else if v > SCALE_MAX {
        *events += 1;
        SCALE_MAX
    } else {
        v
    }
}

/// `Exp(rate)` truncated to `(0, upper)`, by inversion.
fn truncated_exponential<R: Rng + ?Sized>(rate: f64, upper: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let ru = rate * upper;
    if ru < 1e-12 {
        return u * upper;
    }
    // -ln(1 - u (1 - e^{-r b})) / r, computed stably.
    let mass = -(-ru).exp_m1();
    -(-u * mass).ln_1p() / rate
}

/// `Gamma(shape, rate)` truncated to `(0, upper)`, by inversion.
fn truncated_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, upper: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    if rate * upper < 1e-10 {
        // density is proportional to x^{shape-1} on the interval
        return upper * u.powf(1.0 / shape);
    }
    let dist = GammaDist::new(shape, rate).expect("positive gamma parameters");
    let mass = dist.cdf(upper);
    if mass > 0.5 {
        let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
        loop {
            let x = g.sample(rng);
            if x < upper {
                return x;
            }
        }
    }
    if mass < 1e-300 {
        return upper * u.powf(1.0 / shape);
    }
    dist.inverse_cdf(u * mass).min(upper)
}

/// One slice-sampling update of each local scale and the global scale under
/// half-Cauchy priors on their square roots.
pub fn draw_shrinkage_scales<R: Rng + ?Sized>(
    theta: &DVector<f64>,
    sigma2: f64,
    state: &HorseshoeState,
    rng: &mut R,
) -> HorseshoeState {
    let mut next = state.clone();
    let k = theta.len();
    for j in 0..k {
        let eta = 1.0 / next.lambda2[j];
        let u: f64 = rng.gen::<f64>() / (1.0 + eta);
        let upper = (1.0 - u) / u;
        let rate = theta[j] * theta[j] / (2.0 * sigma2 * next.tau2);
        let new_eta = truncated_exponential(rate, upper, rng);
        next.lambda2[j] = clamp_scale(1.0 / new_eta, &mut next.clamp_events);
    }
    let xi = 1.0 / next.tau2;
    let u: f64 = rng.gen::<f64>() / (1.0 + xi);
    let upper = (1.0 - u) / u;
    let rate: f64 = theta
        .iter()
        .zip(&next.lambda2)
        .map(|(t, l)| t * t / l)
        .sum::<f64>()
        / (2.0 * sigma2);
    let shape = (k as f64 + 1.0) / 2.0;
    let new_xi = if rate > 0.0 {
        truncated_gamma(shape, rate, upper, rng)
    } else {
        truncated_gamma(shape, 1e-300, upper, rng)
    };
    next.tau2 = clamp_scale(1.0 / new_xi, &mut next.clamp_events);
    next
}

/// Conjugate draw of a slack variance given Gaussian slack residuals.
pub fn draw_sigma_cs<R: Rng + ?Sized>(residuals: &[f64], prior: &PriorConfig, rng: &mut R) -> Result<f64> {
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("constraint slack".into()));
    }
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    draw_inverse_gamma(
        prior.cs_shape + residuals.len() as f64 / 2.0,
        prior.cs_scale + ss / 2.0,
        rng,
    )
}

/// Sampler state of one equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationState {
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub scales: HorseshoeState,
}

impl EquationState {
    pub fn new(k: usize) -> Self {
        Self {
            theta: vec![0.0; k],
            sigma2: 1.0,
            scales: HorseshoeState::new(k),
        }
    }

    /// Initial state from least squares with a small ridge penalty.
    pub fn from_ridge(design: &EquationDesign) -> Result<Self> {
        let x = &design.regressors;
        let mut a = x.tr_mul(x);
        let ridge = 1e-3 * (1.0 + a.diagonal().max());
        for j in 0..a.nrows() {
            a[(j, j)] += ridge;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("ridge initialisation".into()))?;
        let theta = chol.solve(&x.tr_mul(&design.response));
        let ssr = design.residuals(&theta).norm_squared();
        let sigma2 = (ssr / design.n_obs().max(1) as f64).max(1e-8);
        Ok(Self {
            theta: theta.iter().copied().collect(),
            sigma2,
            scales: HorseshoeState::new(design.n_coef()),
        })
    }

    /// Scale updates, then coefficients, then variance.
    pub fn gibbs_step<R: Rng + ?Sized>(
        &mut self,
        design: &EquationDesign,
        prior: &PriorConfig,
        rng: &mut R,
    ) -> Result<()> {
        let theta = DVector::from_column_slice(&self.theta);
        self.scales = draw_shrinkage_scales(&theta, self.sigma2, &self.scales, rng);
        let theta = draw_coefficients(design, &self.scales, self.sigma2, rng)?;
        self.sigma2 = draw_sigma2(design, &theta, &self.scales, prior, rng)?;
        self.theta = theta.iter().copied().collect();
        Ok(())
    }
}

/// Structural VAR parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarParameters {
    /// Unit lower-triangular contemporaneous matrix, row-major.
    pub a: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    /// `lags[l][i][j]`: coefficient of `y_{j,t-l-1}` in equation `i`.
    pub lags: Vec<Vec<Vec<f64>>>,
    /// Exogenous loadings per equation.
    pub exogenous: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub sigma_cs_monthly: f64,
    pub sigma_cs_quarterly: f64,
}

impl VarParameters {
    pub fn n_vars(&self) -> usize {
        self.intercept.len()
    }

    pub fn n_lags(&self) -> usize {
        self.lags.len()
    }

    /// Assembles parameters from per-equation coefficient vectors laid out as
    /// `[contemporaneous | intercept | lag 1 .. lag p | exogenous]`.
    pub fn from_equations(p: usize, states: &[EquationState], exogenous_counts: &[usize]) -> Result<Self> {
        let n = states.len();
        if exogenous_counts.len() != n {
            return Err(Error::Dimension("one exogenous count per equation".into()));
        }
        let mut a = vec![vec![0.0; n]; n];
        let mut intercept = vec![0.0; n];
        let mut lags = vec![vec![vec![0.0; n]; n]; p];
        let mut exogenous = Vec::with_capacity(n);
        let mut sigma2 = Vec::with_capacity(n);
        for (i, st) in states.iter().enumerate() {
            let k = i + 1 + n * p + exogenous_counts[i];
            if st.theta.len() != k {
                return Err(Error::Dimension(format!(
                    "equation {i} has {} coefficients, expected {k}",
                    st.theta.len()
                )));
            }
            a[i][i] = 1.0;
            a[i][..i].copy_from_slice(&st.theta[..i]);
            intercept[i] = st.theta[i];
            for (l, lag) in lags.iter_mut().enumerate() {
                let off = i + 1 + l * n;
                lag[i].copy_from_slice(&st.theta[off..off + n]);
            }
            exogenous.push(st.theta[i + 1 + n * p..].to_vec());
            sigma2.push(st.sigma2);
        }
        Ok(Self {
            a,
            intercept,
            lags,
            exogenous,
            sigma2,
            sigma_cs_monthly: 0.0,
            sigma_cs_quarterly: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let bad_shape = self.a.len() != n
            || self.a.iter().any(|r| r.len() != n)
            || self.lags.iter().any(|l| l.len() != n || l.iter().any(|r| r.len() != n))
            || self.exogenous.len() != n
            || self.sigma2.len() != n;
        if bad_shape {
            return Err(Error::Dimension("VAR parameter shapes".into()));
        }
        for i in 0..n {
            if self.a[i][i] != 1.0 || self.a[i][i + 1..].iter().any(|v| *v != 0.0) {
                return Err(Error::InvalidInput("A must be unit lower triangular".into()));
            }
            if !(self.sigma2[i] > 0.0 && self.sigma2[i].is_finite()) {
                return Err(Error::InvalidInput("equation variances must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        DMatrix::from_fn(n, n, |i, j| self.a[i][j])
    }

    /// `A^{-1}`.
    pub fn a_inverse(&self) -> DMatrix<f64> {
        let a = self.a_matrix();
        a.solve_lower_triangular(&DMatrix::identity(a.nrows(), a.nrows()))
            .expect("unit lower triangular matrices are invertible")
    }

    /// Reduced-form intercept `A^{-1} b0`.
    pub fn reduced_intercept(&self) -> DVector<f64> {
        self.a_inverse() * DVector::from_column_slice(&self.intercept)
    }

    /// Reduced-form lag matrices `A^{-1} B_l`.
    pub fn reduced_lags(&self) -> Vec<DMatrix<f64>> {
        let ainv = self.a_inverse();
        let n = self.n_vars();
        self.lags
            .iter()
            .map(|l| &ainv * DMatrix::from_fn(n, n, |i, j| l[i][j]))
            .collect()
    }

    /// Impact matrix `A^{-1} Sigma^{1/2}` of the structural shocks.
    pub fn impact(&self) -> DMatrix<f64> {
        let mut m = self.a_inverse();
        for (j, s) in self.sigma2.iter().enumerate() {
            let sd = s.sqrt();
            m.column_mut(j).scale_mut(sd);
        }
        m
    }

    /// Reduced-form error covariance `A^{-1} Sigma A^{-1}'`.
    pub fn reduced_covariance(&self) -> DMatrix<f64> {
        let p = self.impact();
        &p * p.transpose()
    }

    pub fn companion(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        let p = self.n_lags().max(1);
        let mut c = DMatrix::zeros(n * p, n * p);
        for (l, phi) in self.reduced_lags().iter().enumerate() {
            c.view_mut((0, l * n), (n, n)).copy_from(phi);
        }
        for r in n..n * p {
            c[(r, r - n)] = 1.0;
        }
        c
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.companion())
    }
}
