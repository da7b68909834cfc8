//! Scalar Gaussian-process regression with a linear trend and anisotropic
//! generalized-exponential correlation.
//!
//! The model is `Y(x) = f0(x) + Z(x)` with `f0(x) = β0 + Σ β_j x_j` and a
//! stationary centered Gaussian `Z` whose correlation is
//! `R(x, u) = Π_l exp(-θ_l |x_l - u_l|^{p_l})`, `θ_l ≥ 0`, `0 < p_l ≤ 2`.
//! Hyperparameters are estimated by maximizing the concentrated likelihood
//! in which the trend coefficients (generalized least squares) and the
//! process variance (closed form) are profiled out; the search is a
//! box-constrained simplex on `(ln θ, p)` with multiple space-filling
//! restarts.
//!
//! Inputs are normalized to `[0,1]^d` before fitting so the θ bounds are
//! scale-free. The optional nugget is relative: the fitted covariance is
//! `σ²(R + nugget·I)`.

mod linear;
mod optim;

pub use linear::{fit_linear_aic, fit_linear_terms, fit_mean};

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::seeds;

/// Correlation parameters of the generalized exponential kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationParams {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
}

impl CorrelationParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.p.len() {
            return Err(Error::DimensionMismatch("theta/p lengths differ".into()));
        }
        if self.theta.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite and >= 0".into()));
        }
        if self.p.iter().any(|&p| !(p > 0.0 && p <= 2.0)) {
            return Err(Error::InvalidArgument("p must lie in (0, 2]".into()));
        }
        Ok(())
    }
}

/// One-degree polynomial trend with a sparse active-term set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendModel {
    pub intercept: f64,
    /// Active input indices, ascending.
    pub terms: Vec<usize>,
    /// Coefficient for each active term; inactive terms contribute 0.
    pub coefficients: Vec<f64>,
}

impl TrendModel {
    pub fn constant(c: f64) -> Self {
        TrendModel {
            intercept: c,
            terms: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut v = self.intercept;
        for (&t, &c) in self.terms.iter().zip(&self.coefficients) {
            v += c * x[t];
        }
        v
    }
}

/// Generalized exponential correlation `Π_l exp(-θ_l |x_l - u_l|^{p_l})`.
pub fn corr_gen_exp(x: &[f64], u: &[f64], params: &CorrelationParams) -> f64 {
    let mut s = 0.0;
    for l in 0..x.len() {
        let d = (x[l] - u[l]).abs();
        s += params.theta[l]
            * if params.p[l] == 2.0 {
                d * d
            } else {
                d.powf(params.p[l])
            };
    }
    (-s).exp()
}

/// Fit options. `nugget` is relative to the process variance; 0 disables it
/// and recovers noiseless interpolation.
#[derive(Debug, Clone)]
pub struct GpOptions {
    /// Forward selection of trend terms scored by AICC (the corrected AIC of
    /// the GP likelihood). When off, the full one-degree trend is used.
    pub trend_selection: bool,
    pub nugget: f64,
    pub restarts: usize,
    pub theta_bounds: (f64, f64),
    /// Estimate the shape exponents p; otherwise they stay fixed at 2.
    pub estimate_p: bool,
    pub p_bounds: (f64, f64),
    /// Simplex evaluation budget per restart.
    pub max_evals: usize,
    /// Per-dimension normalization bounds; inferred from the data when None.
    pub normalization: Option<Vec<(f64, f64)>>,
    pub seed: u64,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions {
            trend_selection: false,
            nugget: 1e-8,
            restarts: 5,
            theta_bounds: (1e-3, 1e3),
            estimate_p: false,
            p_bounds: (0.1, 2.0),
            max_evals: 300,
            normalization: None,
            seed: 0,
        }
    }
}

/// A fitted Gaussian-process model.
#[derive(Debug, Clone)]
pub struct GpModel {
    n: usize,
    d: usize,
    /// Training inputs, normalized, row-major.
    x: Vec<f64>,
    y: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Trend in normalized coordinates.
    trend: TrendModel,
    sigma2: f64,
    corr: CorrelationParams,
    nugget: f64,
    log_likelihood: f64,
    /// Lower Cholesky factor of `R + nugget·I`.
    chol_l: DMatrix<f64>,
    /// `(R + nugget·I)^{-1} (y - F β)`.
    alpha: DVector<f64>,
}

struct FitData {
    n: usize,
    d: usize,
    x: Vec<f64>, // normalized
    y: DVector<f64>,
    /// Pairwise `|x_i - x_j|` per dimension (squared when p is fixed at 2),
    /// indexed `(i*n + j)*d + l`, upper triangle only.
    diffs: Vec<f64>,
    squared: bool,
    nugget: f64,
}

impl FitData {
    fn correlation_matrix(&self, theta: &[f64], p: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let d = self.d;
        let mut r = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            r[(i, i)] = 1.0 + self.nugget;
            for j in (i + 1)..n {
                let base = (i * n + j) * d;
                let mut s = 0.0;
                if self.squared {
                    for l in 0..d {
                        s += theta[l] * self.diffs[base + l];
                    }
                } else {
                    for l in 0..d {
                        let v = self.diffs[base + l];
                        s += theta[l] * if p[l] == 2.0 { v * v } else { v.powf(p[l]) };
                    }
                }
                let c = (-s).exp();
                r[(i, j)] = c;
                r[(j, i)] = c;
            }
        }
        r
    }

    fn trend_matrix(&self, terms: &[usize]) -> DMatrix<f64> {
        let q = terms.len() + 1;
        let mut f = DMatrix::<f64>::zeros(self.n, q);
        for i in 0..self.n {
            f[(i, 0)] = 1.0;
            for (k, &t) in terms.iter().enumerate() {
                f[(i, k + 1)] = self.x[i * self.d + t];
            }
        }
        f
    }
}

struct Profiled {
    nll: f64,
    beta: DVector<f64>,
    sigma2: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Solve `(R + nugget I) α = resid`, applying iterative-refinement steps
/// only while they shrink the computable defect `‖resid - R α‖`; with a very
/// ill-conditioned R the defect itself is unreliable and refinement would
/// diverge, so it stops at the plain solution.
fn alpha_refined(
    r: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    resid: &DVector<f64>,
) -> DVector<f64> {
    let mut alpha = chol.solve(resid);
    let mut defect = resid - r * &alpha;
    let mut best_norm = defect.norm();
    for _ in 0..3 {
        let candidate = &alpha + chol.solve(&defect);
        let cand_defect = resid - r * &candidate;
        let norm = cand_defect.norm();
        if norm < best_norm {
            alpha = candidate;
            defect = cand_defect;
            best_norm = norm;
        } else {
            break;
        }
    }
    alpha
}

/// Concentrated negative log-likelihood at fixed correlation parameters:
/// β via GLS and σ² in closed form, constants included.
fn profile(data: &FitData, theta: &[f64], p: &[f64], terms: &[usize]) -> Option<Profiled> {
    let r = data.correlation_matrix(theta, p);
    let chol = Cholesky::new(r)?;
    let l = chol.l_dirty();
    let mut lndet_half = 0.0;
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..data.n {
        let di = l[(i, i)];
        if !(di > 0.0) {
            return None;
        }
        dmin = dmin.min(di);
        dmax = dmax.max(di);
        lndet_half += di.ln();
    }
    // refuse condition numbers implying an effectively singular system
    // rather than silently regularizing beyond the configured nugget
    if dmin < 1e-8 * dmax {
        return None;
    }
    let f = data.trend_matrix(terms);
    let lf = l.solve_lower_triangular(&f)?;
    let ly = l.solve_lower_triangular(&data.y)?;
    let svd = lf.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin / smax < 1e-12 {
        return None;
    }
    let beta = svd.solve(&ly, 0.0).ok()?;
    let resid_w = &ly - &lf * &beta;
    let n = data.n as f64;
    let sigma2 = (resid_w.dot(&resid_w) / n).max(0.0);
    let nll = 0.5 * (n * (2.0 * std::f64::consts::PI).ln() + n + n * sigma2.max(1e-300).ln())
        + lndet_half;
    Some(Profiled {
        nll,
        beta,
        sigma2,
        chol,
    })
}

struct MleResult {
    theta: Vec<f64>,
    p: Vec<f64>,
    nll: f64,
}

/// Multi-start simplex maximization of the concentrated likelihood.
fn mle(data: &FitData, terms: &[usize], options: &GpOptions) -> Result<MleResult> {
    let d = data.d;
    let n_params = if options.estimate_p { 2 * d } else { d };
    let (tlo, thi) = options.theta_bounds;
    if !(tlo > 0.0 && thi > tlo) {
        return Err(Error::InvalidArgument("bad theta bounds".into()));
    }
    let mut bounds = vec![(tlo.ln(), thi.ln()); d];
    if options.estimate_p {
        bounds.extend(vec![options.p_bounds; d]);
    }

    let unpack = |params: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let theta: Vec<f64> = params[..d].iter().map(|v| v.exp()).collect();
        let p: Vec<f64> = if options.estimate_p {
            params[d..].to_vec()
        } else {
            vec![2.0; d]
        };
        (theta, p)
    };

    // restart 0 starts from θ = 1 (clamped); the rest from a space-filling
    // sample of the search box
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(options.restarts.max(1));
    let mut s0 = vec![0.0f64; n_params];
    for (v, &(lo, hi)) in s0.iter_mut().zip(&bounds) {
        *v = v.clamp(lo, hi);
    }
    if options.estimate_p {
        for v in s0[d..].iter_mut() {
            *v = 2.0f64.clamp(options.p_bounds.0, options.p_bounds.1);
        }
    }
    starts.push(s0);
    if options.restarts > 1 {
        let extra = options.restarts - 1;
        let lhs = crate::designs::lhs(extra, n_params, seeds::derive(options.seed, "gp-restarts", 0))
            .expect("restart design");
        for i in 0..extra {
            let u = lhs.point(i);
            starts.push(
                u.iter()
                    .zip(&bounds)
                    .map(|(&ui, &(lo, hi))| lo + (hi - lo) * ui)
                    .collect(),
            );
        }
    }

    let nm_opts = optim::NelderMeadOptions {
        max_evals: options.max_evals,
        ftol: 1e-9,
        initial_step: 0.2,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_feasible = false;
    for start in &starts {
        let result = optim::minimize(
            |params| {
                let (theta, p) = unpack(params);
                match profile(data, &theta, &p, terms) {
                    Some(pr) => pr.nll,
                    None => f64::INFINITY,
                }
            },
            start,
            &bounds,
            &nm_opts,
        );
        if result.fx.is_finite() {
            any_feasible = true;
            if best.as_ref().map_or(true, |(_, f)| result.fx < *f) {
                best = Some((result.x, result.fx));
            }
        }
    }
    match best {
        Some((params, nll)) if any_feasible => {
            let (theta, p) = unpack(&params);
            Ok(MleResult { theta, p, nll })
        }
        _ => Err(Error::OptimizationFailed(format!(
            "no feasible correlation parameters found in {} restarts (nugget {})",
            starts.len(),
            data.nugget
        ))),
    }
}

/// AICC of a fitted GP: `-2 logL + 2q + 2q(q+1)/(n-q-1)` with
/// `q = #trend params + #correlation params`.
fn aicc(nll: f64, n: usize, n_trend: usize, n_corr: usize) -> f64 {
    let q = (n_trend + n_corr) as f64;
    let n = n as f64;
    if n - q - 1.0 <= 0.0 {
        return f64::INFINITY;
    }
    2.0 * nll + 2.0 * q + 2.0 * q * (q + 1.0) / (n - q - 1.0)
}

/// Forward selection of trend terms, scored by AICC at fixed correlation
/// parameters (the expensive θ search runs once before and once after
/// selection, not per candidate).
fn select_terms(data: &FitData, theta: &[f64], p: &[f64], options: &GpOptions) -> Vec<usize> {
    let d = data.d;
    let n_corr = if options.estimate_p { 2 * d } else { d };
    let mut selected: Vec<usize> = Vec::new();
    let mut best = match profile(data, theta, p, &selected) {
        Some(pr) => aicc(pr.nll, data.n, 1, n_corr),
        None => return selected,
    };
    loop {
        let mut cand: Option<(usize, f64)> = None;
        for t in 0..d {
            if selected.contains(&t) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(t);
            trial.sort_unstable();
            if let Some(pr) = profile(data, theta, p, &trial) {
                let a = aicc(pr.nll, data.n, trial.len() + 1, n_corr);
                if a < best && cand.map_or(true, |c| a < c.1) {
                    cand = Some((t, a));
                }
            }
        }
        match cand {
            Some((t, a)) => {
                selected.push(t);
                selected.sort_unstable();
                best = a;
            }
            None => break,
        }
    }
    selected
}

fn normalization_bounds(
    x: &[f64],
    n: usize,
    d: usize,
    options: &GpOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(b) = &options.normalization {
        if b.len() != d {
            return Err(Error::DimensionMismatch(
                "normalization bounds length != d".into(),
            ));
        }
        let lo: Vec<f64> = b.iter().map(|v| v.0).collect();
        let hi: Vec<f64> = b.iter().map(|v| v.1).collect();
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("normalization bounds empty".into()));
        }
        return Ok((lo, hi));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for l in 0..d {
            let v = x[i * d + l];
            lo[l] = lo[l].min(v);
            hi[l] = hi[l].max(v);
        }
    }
    for l in 0..d {
        if !(hi[l] > lo[l]) {
            hi[l] = lo[l] + 1.0; // degenerate column: any span works
        }
    }
    Ok((lo, hi))
}

fn build_fit_data(
    x_norm: Vec<f64>,
    n: usize,
    d: usize,
    y: &[f64],
    nugget: f64,
    squared: bool,
) -> FitData {
    let mut diffs = vec![0.0f64; n * n * d];
    for i in 0..n {
        for j in (i + 1)..n {
            let base = (i * n + j) * d;
            for l in 0..d {
                let v = (x_norm[i * d + l] - x_norm[j * d + l]).abs();
                diffs[base + l] = if squared { v * v } else { v };
            }
        }
    }
    FitData {
        n,
        d,
        x: x_norm,
        y: DVector::from_column_slice(y),
        diffs,
        squared,
        nugget,
    }
}

/// Fit a GP to `n` rows of `d` inputs (row-major `x`).
pub fn fit_gp(x: &[f64], n: usize, d: usize, y: &[f64], options: &GpOptions) -> Result<GpModel> {
    if x.len() != n * d || y.len() != n {
        return Err(Error::DimensionMismatch("fit_gp input shapes".into()));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("fit_gp needs n >= 1, d >= 1".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("fit_gp inputs must be finite".into()));
    }
    if options.nugget < 0.0 {
        return Err(Error::InvalidArgument("nugget must be >= 0".into()));
    }
    if options.nugget == 0.0 {
        for i in 0..n {
            for j in (i + 1)..n {
                if x[i * d..(i + 1) * d] == x[j * d..(j + 1) * d] {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate design rows {i} and {j} with nugget 0"
                    )));
                }
            }
        }
    }

    let (lo, hi) = normalization_bounds(x, n, d, options)?;
    let mut x_norm = vec![0.0f64; n * d];
    for i in 0..n {
        for l in 0..d {
            x_norm[i * d + l] = (x[i * d + l] - lo[l]) / (hi[l] - lo[l]);
        }
    }
    let data = build_fit_data(x_norm, n, d, y, options.nugget, !options.estimate_p);

    let terms: Vec<usize> = if options.trend_selection {
        let base = mle(&data, &[], options)?;
        select_terms(&data, &base.theta, &base.p, options)
    } else if n > d + 1 {
        (0..d).collect()
    } else {
        Vec::new() // not enough points to support the full trend
    };

    let opt = mle(&data, &terms, options)?;
    let profiled = profile(&data, &opt.theta, &opt.p, &terms).ok_or(Error::SingularCorrelation {
        nugget: options.nugget,
    })?;

    let f = data.trend_matrix(&terms);
    let resid = &data.y - &f * &profiled.beta;
    let r = data.correlation_matrix(&opt.theta, &opt.p);
    let alpha = alpha_refined(&r, &profiled.chol, &resid);
    let chol_l = profiled.chol.l();

    Ok(GpModel {
        n,
        d,
        x: data.x,
        y: y.to_vec(),
        lo,
        hi,
        trend: TrendModel {
            intercept: profiled.beta[0],
            terms: terms.clone(),
            coefficients: profiled.beta.as_slice()[1..].to_vec(),
        },
        sigma2: profiled.sigma2,
        corr: CorrelationParams {
            theta: opt.theta,
            p: opt.p,
        },
        nugget: options.nugget,
        log_likelihood: -opt.nll,
        chol_l,
        alpha,
    })
}

impl GpModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn corr(&self) -> &CorrelationParams {
        &self.corr
    }

    pub fn trend(&self) -> &TrendModel {
        &self.trend
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for l in 0..self.d {
            out[l] = (x[l] - self.lo[l]) / (self.hi[l] - self.lo[l]);
        }
    }

    fn correlations_into(&self, xn: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.x[i * self.d..(i + 1) * self.d];
            let mut s = 0.0;
            for l in 0..self.d {
                let v = (xn[l] - row[l]).abs();
                let pl = self.corr.p[l];
                s += self.corr.theta[l] * if pl == 2.0 { v * v } else { v.powf(pl) };
            }
            out[i] = (-s).exp();
        }
    }

    /// Conditional-mean predictor `f0(x*) + k(x*)ᵀ Σ_s⁻¹ (Y_s - f0(X_s))`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "predict input has {} dims, model has {}",
                x.len(),
                self.d
            )));
        }
        let mut xn = vec![0.0; self.d];
        self.normalize_into(x, &mut xn);
        let mut r = vec![0.0; self.n];
        self.correlations_into(&xn, &mut r);
        let mut acc = self.trend.evaluate(&xn);
        for i in 0..self.n {
            acc += r[i] * self.alpha[i];
        }
        Ok(acc)
    }

    /// Kriging variance `σ² - k(x*)ᵀ Σ_s⁻¹ k(x*)`, clamped to `[0, σ²]`
    /// against round-off.
    pub fn predict_var(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "predict input has {} dims, model has {}",
                x.len(),
                self.d
            )));
        }
        let mut xn = vec![0.0; self.d];
        self.normalize_into(x, &mut xn);
        let mut r = vec![0.0; self.n];
        self.correlations_into(&xn, &mut r);
        let rv = DVector::from_column_slice(&r);
        let v = self
            .chol_l
            .solve_lower_triangular(&rv)
            .ok_or(Error::SingularCorrelation { nugget: self.nugget })?;
        let reduction = v.dot(&v);
        Ok((self.sigma2 * (1.0 - reduction)).clamp(0.0, self.sigma2))
    }

    /// Batch mean predictions (row-major `m × d`); identical to `m` single
    /// calls.
    pub fn predict_mean_batch(&self, xs: &[f64], m: usize) -> Result<Vec<f64>> {
        if xs.len() != m * self.d {
            return Err(Error::DimensionMismatch("batch shape".into()));
        }
        (0..m)
            .map(|i| self.predict_mean(&xs[i * self.d..(i + 1) * self.d]))
            .collect()
    }

    /// Rebuild the predictor on new data, keeping the fitted correlation
    /// parameters, nugget and trend term set; only β, σ² and the
    /// factorization are recomputed. This is the cross-validation shortcut
    /// that freezes hyperparameters, and it also realizes the affine
    /// response-scaling equivariance of the predictor.
    pub fn refit(&self, x: &[f64], n: usize, y: &[f64]) -> Result<GpModel> {
        if x.len() != n * self.d || y.len() != n {
            return Err(Error::DimensionMismatch("refit input shapes".into()));
        }
        let mut x_norm = vec![0.0f64; n * self.d];
        for i in 0..n {
            for l in 0..self.d {
                x_norm[i * self.d + l] = (x[i * self.d + l] - self.lo[l]) / (self.hi[l] - self.lo[l]);
            }
        }
        let data = build_fit_data(
            x_norm,
            n,
            self.d,
            y,
            self.nugget,
            self.corr.p.iter().all(|&p| p == 2.0),
        );
        let profiled = profile(&data, &self.corr.theta, &self.corr.p, &self.trend.terms)
            .ok_or(Error::SingularCorrelation { nugget: self.nugget })?;
        let f = data.trend_matrix(&self.trend.terms);
        let resid = &data.y - &f * &profiled.beta;
        let r = data.correlation_matrix(&self.corr.theta, &self.corr.p);
        let alpha = alpha_refined(&r, &profiled.chol, &resid);
        let chol_l = profiled.chol.l();
        Ok(GpModel {
            n,
            d: self.d,
            x: data.x,
            y: y.to_vec(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            trend: TrendModel {
                intercept: profiled.beta[0],
                terms: self.trend.terms.clone(),
                coefficients: profiled.beta.as_slice()[1..].to_vec(),
            },
            sigma2: profiled.sigma2,
            corr: self.corr.clone(),
            nugget: self.nugget,
            log_likelihood: -profiled.nll,
            chol_l,
            alpha,
        })
    }

    /// Serialize to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gpmodel v1");
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "d {}", self.d);
        let _ = writeln!(s, "nugget {}", self.nugget);
        let _ = writeln!(s, "sigma2 {}", self.sigma2);
        let _ = writeln!(s, "loglik {}", self.log_likelihood);
        let _ = writeln!(s, "theta {}", join(&self.corr.theta));
        let _ = writeln!(s, "p {}", join(&self.corr.p));
        let _ = writeln!(s, "lo {}", join(&self.lo));
        let _ = writeln!(s, "hi {}", join(&self.hi));
        let _ = writeln!(s, "trend_intercept {}", self.trend.intercept);
        let _ = writeln!(
            s,
            "trend_terms {}",
            self.trend
                .terms
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(s, "trend_coeffs {}", join(&self.trend.coefficients));
        for i in 0..self.n {
            let _ = writeln!(s, "x {}", join(&self.x[i * self.d..(i + 1) * self.d]));
        }
        let _ = writeln!(s, "y {}", join(&self.y));
        s
    }

    /// Parse the text format and rebuild the factorization; the
    /// reconstructed predictor is exact.
    pub fn from_text(text: &str) -> Result<GpModel> {
        let ctx = "gp model text";
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(ctx, "empty"))?;
        if header.trim() != "gpmodel v1" {
            return Err(Error::parse(ctx, format!("bad header {header:?}")));
        }
        let mut n = None;
        let mut d = None;
        let mut nugget = None;
        let mut sigma2 = None;
        let mut loglik = None;
        let mut theta = None;
        let mut p = None;
        let mut lo = None;
        let mut hi = None;
        let mut intercept = None;
        let mut terms: Option<Vec<usize>> = None;
        let mut coeffs = None;
        let mut x: Vec<f64> = Vec::new();
        let mut y: Option<Vec<f64>> = None;
        for line in lines {
            let (key, rest) = match line.split_once(' ') {
                Some(kv) => kv,
                None => (line, ""),
            };
            match key {
                "n" => n = rest.trim().parse::<usize>().ok(),
                "d" => d = rest.trim().parse::<usize>().ok(),
                "nugget" => nugget = rest.trim().parse::<f64>().ok(),
                "sigma2" => sigma2 = rest.trim().parse::<f64>().ok(),
                "loglik" => loglik = rest.trim().parse::<f64>().ok(),
                "theta" => theta = parse_floats(rest),
                "p" => p = parse_floats(rest),
                "lo" => lo = parse_floats(rest),
                "hi" => hi = parse_floats(rest),
                "trend_intercept" => intercept = rest.trim().parse::<f64>().ok(),
                "trend_terms" => {
                    let mut v = Vec::new();
                    for tok in rest.split_whitespace() {
                        v.push(
                            tok.parse::<usize>()
                                .map_err(|_| Error::parse(ctx, "bad trend term"))?,
                        );
                    }
                    terms = Some(v);
                }
                "trend_coeffs" => coeffs = parse_floats(rest).or(Some(Vec::new())),
                "x" => {
                    x.extend(parse_floats(rest).ok_or_else(|| Error::parse(ctx, "bad x row"))?)
                }
                "y" => y = parse_floats(rest),
                "" => {}
                other => return Err(Error::parse(ctx, format!("unknown key {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::parse(ctx, "missing n"))?;
        let d = d.ok_or_else(|| Error::parse(ctx, "missing d"))?;
        let nugget = nugget.ok_or_else(|| Error::parse(ctx, "missing nugget"))?;
        let sigma2 = sigma2.ok_or_else(|| Error::parse(ctx, "missing sigma2"))?;
        let corr = CorrelationParams {
            theta: theta.ok_or_else(|| Error::parse(ctx, "missing theta"))?,
            p: p.ok_or_else(|| Error::parse(ctx, "missing p"))?,
        };
        corr.validate()?;
        let trend = TrendModel {
            intercept: intercept.ok_or_else(|| Error::parse(ctx, "missing trend"))?,
            terms: terms.unwrap_or_default(),
            coefficients: coeffs.unwrap_or_default(),
        };
        let y = y.ok_or_else(|| Error::parse(ctx, "missing y"))?;
        if x.len() != n * d || y.len() != n {
            return Err(Error::parse(ctx, "x/y shapes do not match n, d"));
        }
        let data = build_fit_data(
            x.clone(),
            n,
            d,
            &y,
            nugget,
            corr.p.iter().all(|&v| v == 2.0),
        );
        let r = data.correlation_matrix(&corr.theta, &corr.p);
        let chol = Cholesky::new(r.clone()).ok_or(Error::SingularCorrelation { nugget })?;
        let f = data.trend_matrix(&trend.terms);
        let mut beta = DVector::zeros(trend.terms.len() + 1);
        beta[0] = trend.intercept;
        for (k, &c) in trend.coefficients.iter().enumerate() {
            beta[k + 1] = c;
        }
        let resid = &data.y - &f * &beta;
        let alpha = alpha_refined(&r, &chol, &resid);
        let chol_l = chol.l();
        Ok(GpModel {
            n,
            d,
            x,
            y,
            lo: lo.ok_or_else(|| Error::parse(ctx, "missing lo"))?,
            hi: hi.ok_or_else(|| Error::parse(ctx, "missing hi"))?,
            trend,
            sigma2,
            corr,
            nugget,
            log_likelihood: loglik.unwrap_or(f64::NAN),
            chol_l,
            alpha,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_from(path: &Path) -> Result<GpModel> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        GpModel::from_text(&text)
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        out.push(tok.parse::<f64>().ok()?);
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}
