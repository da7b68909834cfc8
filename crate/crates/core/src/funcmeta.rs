//! The functional (spatial) metamodel: mean field + wavelet synthesis of
//! per-coefficient models.
//!
//! A fitted metamodel predicts a whole map for a new input point by
//! evaluating one model per wavelet coefficient and synthesizing with the
//! inverse transform. Coefficients are ranked by their empirical variance
//! over the learning ensemble; the top of the ranking gets rich models, the
//! tail keeps the empirical mean:
//!
//! * method 1 — GP for the top `k`, mean for the rest;
//! * method 2 — AIC-selected linear regression for the top `k`, mean rest;
//! * method 3 — GP for the top `k`, linear for the next `k'`, mean rest.
//!
//! Validation is by map-space mean squared error (grid integration with
//! uniform pixel weights), the predictivity coefficient Q2, k-fold
//! cross-validation, and k/n convergence tables.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::designs::{scale, MarginalDistribution};
use crate::error::{Error, Result};
use crate::field::{mean_field, FieldEnsemble, GridField};
use crate::gp::{
    fit_gp, fit_linear_aic, fit_linear_terms, fit_mean, GpModel, GpOptions, TrendModel,
};
use crate::seeds;
use crate::wavelet::{
    dwt2, idwt2_into, rank_by_variance, CoefficientRanking, WaveletDecomposition, WaveletSpec,
};

mod bundle;
pub use bundle::{read_bundle, write_bundle};

/// Model assignment strategy for the ranked coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Method 1: GP for the selected coefficients, mean for the rest.
    GpMean,
    /// Method 2: linear regression for the selected, mean for the rest.
    LinearMean,
    /// Method 3: GP for the top k, linear for the next k', mean for the rest.
    GpLinearMean,
}

impl Method {
    pub fn from_index(i: usize) -> Result<Method> {
        match i {
            1 => Ok(Method::GpMean),
            2 => Ok(Method::LinearMean),
            3 => Ok(Method::GpLinearMean),
            _ => Err(Error::InvalidArgument(format!(
                "method must be 1, 2 or 3, got {i}"
            ))),
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Method::GpMean => 1,
            Method::LinearMean => 2,
            Method::GpLinearMean => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelClass {
    Gp,
    Linear,
    Mean,
}

/// Which model class a rank position receives under a method/k/k' choice.
fn model_class(method: Method, rank: usize, k: usize, k_prime: usize) -> ModelClass {
    match method {
        Method::GpMean if rank < k => ModelClass::Gp,
        Method::LinearMean if rank < k => ModelClass::Linear,
        Method::GpLinearMean if rank < k => ModelClass::Gp,
        Method::GpLinearMean if rank < k + k_prime => ModelClass::Linear,
        _ => ModelClass::Mean,
    }
}

/// One per-coefficient model.
#[derive(Debug, Clone)]
pub enum CoefficientModel {
    Mean(f64),
    Linear(TrendModel),
    Gp(Box<GpModel>),
}

impl CoefficientModel {
    pub fn predict(&self, x_unit: &[f64]) -> Result<f64> {
        match self {
            CoefficientModel::Mean(v) => Ok(*v),
            CoefficientModel::Linear(m) => Ok(m.evaluate(x_unit)),
            CoefficientModel::Gp(m) => m.predict_mean(x_unit),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CoefficientModel::Mean(_) => "mean",
            CoefficientModel::Linear(_) => "linear",
            CoefficientModel::Gp(_) => "gp",
        }
    }
}

/// Fit options for the metamodel.
#[derive(Debug, Clone)]
pub struct MetamodelOptions {
    pub gp: GpOptions,
    /// Downgrade a failed GP fit to a linear model (with a warning) instead
    /// of aborting.
    pub fallback: bool,
    pub seed: u64,
}

impl Default for MetamodelOptions {
    fn default() -> Self {
        MetamodelOptions {
            gp: GpOptions {
                trend_selection: true,
                ..Default::default()
            },
            fallback: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionalMetamodel {
    mean_field: GridField,
    spec: WaveletSpec,
    ranking: CoefficientRanking,
    method: Method,
    k: usize,
    k_prime: usize,
    /// Indexed by flat coefficient index; complete (length K).
    models: Vec<CoefficientModel>,
    marginals: Vec<MarginalDistribution>,
    d: usize,
    warnings: Vec<String>,
}

pub(crate) fn unit_coords(marginals: &[MarginalDistribution], x_native: &[f64], out: &mut [f64]) {
    for (o, (m, &v)) in out.iter_mut().zip(marginals.iter().zip(x_native)) {
        *o = match m {
            // unclamped so the model can extrapolate slightly out of bounds
            MarginalDistribution::Uniform { lower, upper } => (v - lower) / (upper - lower),
            MarginalDistribution::InverseCdf { .. } => m.cdf(v),
        };
    }
}

fn centered_decompositions(
    ensemble: &FieldEnsemble,
    mu: &GridField,
    spec: &WaveletSpec,
) -> Result<Vec<WaveletDecomposition>> {
    ensemble
        .fields()
        .par_iter()
        .map(|f| {
            let centered = GridField::new_allowing_nan(
                f.nr(),
                f.nc(),
                f.z1_range(),
                f.z2_range(),
                f.values()
                    .iter()
                    .zip(mu.values())
                    .map(|(v, m)| v - m)
                    .collect(),
            )?;
            dwt2(&centered, spec)
        })
        .collect()
}

fn coefficient_gp_options(base: &GpOptions, d: usize, seed: u64, flat: usize) -> GpOptions {
    GpOptions {
        normalization: Some(vec![(0.0, 1.0); d]),
        seed: seeds::derive(seed, "gp-coefficient", flat as u64),
        ..base.clone()
    }
}

/// Fit the functional metamodel on a learning ensemble.
pub fn fit_functional_metamodel(
    ensemble: &FieldEnsemble,
    spec: &WaveletSpec,
    method: Method,
    k: usize,
    k_prime: usize,
    options: &MetamodelOptions,
) -> Result<FunctionalMetamodel> {
    let first = &ensemble.fields()[0];
    let big_k = first.len();
    if k > big_k || k + k_prime > big_k {
        return Err(Error::InvalidArgument(format!(
            "k + k' = {} exceeds the coefficient count K = {big_k}",
            k + k_prime
        )));
    }
    if method != Method::GpLinearMean && k_prime != 0 {
        return Err(Error::InvalidArgument(
            "k' is only meaningful for method 3".into(),
        ));
    }
    if ensemble.n() < 2 {
        return Err(Error::InvalidArgument(
            "metamodel fitting needs at least two maps".into(),
        ));
    }

    let mu = mean_field(ensemble);
    let decomps = centered_decompositions(ensemble, &mu, spec)?;
    let ranking = rank_by_variance(&decomps)?;

    let design = ensemble.design();
    let n = design.n();
    let d = design.d();
    let x_unit = design.unit_points();

    let fitted: Vec<(usize, CoefficientModel, Option<String>)> = (0..big_k)
        .into_par_iter()
        .map(|rank| -> Result<(usize, CoefficientModel, Option<String>)> {
            let flat = ranking.flat_index(rank);
            let y: Vec<f64> = decomps.iter().map(|dec| dec.coeffs()[flat]).collect();
            let mut warning = None;
            let model = match model_class(method, rank, k, k_prime) {
                ModelClass::Mean => {
                    CoefficientModel::Mean(fit_mean(&y).map_err(|e| wrap(rank, flat, e))?)
                }
                ModelClass::Linear => CoefficientModel::Linear(
                    fit_linear_aic(x_unit, n, d, &y).map_err(|e| wrap(rank, flat, e))?,
                ),
                ModelClass::Gp => {
                    let gp_opts = coefficient_gp_options(&options.gp, d, options.seed, flat);
                    match fit_gp(x_unit, n, d, &y, &gp_opts) {
                        Ok(m) => CoefficientModel::Gp(Box::new(m)),
                        Err(e) if options.fallback => {
                            warning = Some(format!(
                                "GP fit failed at rank {rank} (flat {flat}); downgraded to linear: {e}"
                            ));
                            CoefficientModel::Linear(
                                fit_linear_aic(x_unit, n, d, &y)
                                    .map_err(|e| wrap(rank, flat, e))?,
                            )
                        }
                        Err(e) => return Err(wrap(rank, flat, e)),
                    }
                }
            };
            Ok((flat, model, warning))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models: Vec<Option<CoefficientModel>> = (0..big_k).map(|_| None).collect();
    let mut warnings = Vec::new();
    for (flat, model, warning) in fitted {
        models[flat] = Some(model);
        if let Some(w) = warning {
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let models: Vec<CoefficientModel> = models.into_iter().map(|m| m.unwrap()).collect();

    Ok(FunctionalMetamodel {
        mean_field: mu,
        spec: *spec,
        ranking,
        method,
        k,
        k_prime,
        models,
        marginals: design.marginals().to_vec(),
        d,
        warnings,
    })
}

fn wrap(rank: usize, flat: usize, e: Error) -> Error {
    Error::CoefficientFit {
        rank,
        flat_index: flat,
        source: Box::new(e),
    }
}

impl FunctionalMetamodel {
    pub fn mean_field(&self) -> &GridField {
        &self.mean_field
    }

    pub fn spec(&self) -> WaveletSpec {
        self.spec
    }

    pub fn ranking(&self) -> &CoefficientRanking {
        &self.ranking
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn models(&self) -> &[CoefficientModel] {
        &self.models
    }

    pub fn marginals(&self) -> &[MarginalDistribution] {
        &self.marginals
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.mean_field.nr(), self.mean_field.nc())
    }

    pub(crate) fn from_parts(
        mean_field: GridField,
        spec: WaveletSpec,
        ranking: CoefficientRanking,
        method: Method,
        k: usize,
        k_prime: usize,
        models: Vec<CoefficientModel>,
        marginals: Vec<MarginalDistribution>,
        d: usize,
    ) -> Self {
        FunctionalMetamodel {
            mean_field,
            spec,
            ranking,
            method,
            k,
            k_prime,
            models,
            marginals,
            d,
            warnings: Vec::new(),
        }
    }

    /// Predict the map at a native-unit input point.
    pub fn predict_map(&self, x_native: &[f64]) -> Result<GridField> {
        let mut out = vec![0.0; self.mean_field.len()];
        self.predict_map_into(x_native, &mut out)?;
        GridField::new_allowing_nan(
            self.mean_field.nr(),
            self.mean_field.nc(),
            self.mean_field.z1_range(),
            self.mean_field.z2_range(),
            out,
        )
    }

    /// Predict into a preallocated buffer of length `nr·nc`.
    pub fn predict_map_into(&self, x_native: &[f64], out: &mut [f64]) -> Result<()> {
        if x_native.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "input has {} dims, metamodel expects {}",
                x_native.len(),
                self.d
            )));
        }
        if out.len() != self.mean_field.len() {
            return Err(Error::DimensionMismatch("output buffer size".into()));
        }
        let mut xu = vec![0.0; self.d];
        unit_coords(&self.marginals, x_native, &mut xu);
        if xu.iter().any(|&u| !(-1e-9..=1.0 + 1e-9).contains(&u)) {
            log::warn!(
                "prediction point {x_native:?} is outside the design bounds; extrapolating"
            );
        }
        let mut coeffs = vec![0.0; self.models.len()];
        for (c, m) in coeffs.iter_mut().zip(&self.models) {
            *c = m.predict(&xu)?;
        }
        idwt2_into(
            &coeffs,
            self.mean_field.nr(),
            self.mean_field.nc(),
            &self.spec,
            out,
        )?;
        for (o, m) in out.iter_mut().zip(self.mean_field.values()) {
            *o += m;
        }
        Ok(())
    }

    /// Rebuild every per-coefficient predictor on a training subset, keeping
    /// all fitted structure (ranking, GP hyperparameters, trend/linear term
    /// sets). This is the hyperparameter-frozen cross-validation update.
    pub fn update_predictors(&self, train: &FieldEnsemble) -> Result<FunctionalMetamodel> {
        let mu = mean_field(train);
        let decomps = centered_decompositions(train, &mu, &self.spec)?;
        let x_unit = train.design().unit_points();
        let n = train.design().n();
        let d = self.d;

        let models: Vec<CoefficientModel> = self
            .models
            .par_iter()
            .enumerate()
            .map(|(flat, model)| -> Result<CoefficientModel> {
                let y: Vec<f64> = decomps.iter().map(|dec| dec.coeffs()[flat]).collect();
                Ok(match model {
                    CoefficientModel::Mean(_) => CoefficientModel::Mean(fit_mean(&y)?),
                    CoefficientModel::Linear(m) => {
                        let (refit, _) = fit_linear_terms(x_unit, n, d, &y, &m.terms)?;
                        CoefficientModel::Linear(refit)
                    }
                    CoefficientModel::Gp(m) => {
                        CoefficientModel::Gp(Box::new(m.refit(x_unit, n, &y)?))
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(FunctionalMetamodel {
            mean_field: mu,
            spec: self.spec,
            ranking: self.ranking.clone(),
            method: self.method,
            k: self.k,
            k_prime: self.k_prime,
            models,
            marginals: self.marginals.clone(),
            d,
            warnings: Vec::new(),
        })
    }
}

/// Grid-mean of the per-pixel variance over an ensemble, divisor `n`
/// (the denominator of Q2).
pub fn mean_pixel_variance(ensemble: &FieldEnsemble) -> f64 {
    let n = ensemble.n() as f64;
    let mu = mean_field(ensemble);
    let mut acc = 0.0;
    for f in ensemble.fields() {
        for (v, m) in f.values().iter().zip(mu.values()) {
            let d = v - m;
            acc += d * d;
        }
    }
    acc / (n * mu.len() as f64)
}

/// Mean squared error of the metamodel over a test ensemble: the average
/// over test points of the grid-average squared prediction error.
pub fn mse(meta: &FunctionalMetamodel, test: &FieldEnsemble) -> Result<f64> {
    let shape = meta.grid_shape();
    let tf = &test.fields()[0];
    if (tf.nr(), tf.nc()) != shape {
        return Err(Error::DimensionMismatch(
            "test ensemble grid does not match the metamodel".into(),
        ));
    }
    let x_native = scale(test.design());
    let d = test.design().d();
    let per_point: Vec<f64> = (0..test.n())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut pred = vec![0.0; shape.0 * shape.1];
            meta.predict_map_into(&x_native[i * d..(i + 1) * d], &mut pred)?;
            let truth = test.fields()[i].values();
            let mut acc = 0.0;
            for (p, t) in pred.iter().zip(truth) {
                let e = p - t;
                acc += e * e;
            }
            Ok(acc / pred.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.iter().sum::<f64>() / per_point.len() as f64)
}

/// Predictivity coefficient `Q2 = 1 - MSE / E_z{Var_X[Y]}`, with the
/// variance taken over the test ensemble.
pub fn q2(meta: &FunctionalMetamodel, test: &FieldEnsemble) -> Result<f64> {
    let denom = mean_pixel_variance(test);
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(
            "zero-variance test ensemble; Q2 undefined".into(),
        ));
    }
    Ok(1.0 - mse(meta, test)? / denom)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub mse: f64,
    pub q2: f64,
    pub fold_mse: Vec<f64>,
}

/// K-fold cross-validation.
///
/// With `refit_hyperparams` the metamodel is re-fitted from scratch on each
/// training split (ranking included). Without it, the expensive structure is
/// fitted once on the full ensemble and only the predictors are updated per
/// fold — the paper's bias-accepting shortcut. Q2 uses the full-ensemble
/// pixel variance.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    ensemble: &FieldEnsemble,
    folds: usize,
    spec: &WaveletSpec,
    method: Method,
    k: usize,
    k_prime: usize,
    options: &MetamodelOptions,
    refit_hyperparams: bool,
) -> Result<CvResult> {
    let n = ensemble.n();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= n, got folds = {folds}, n = {n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(options.seed, "cv-partition", 0));
    indices.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut fold_slices: Vec<Vec<usize>> = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        fold_slices.push(indices[start..start + size].to_vec());
        start += size;
    }
    if fold_slices.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidArgument("empty cross-validation fold".into()));
    }
    if fold_slices.iter().any(|f| n - f.len() < 2) {
        return Err(Error::InvalidArgument(
            "a fold leaves fewer than two training maps".into(),
        ));
    }

    let full_fit = if refit_hyperparams {
        None
    } else {
        Some(fit_functional_metamodel(
            ensemble, spec, method, k, k_prime, options,
        )?)
    };

    let mut fold_mse = Vec::with_capacity(folds);
    for held in &fold_slices {
        let train_idx: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
        let train = ensemble.subset(&train_idx)?;
        let test = ensemble.subset(held)?;
        let fold_meta = match &full_fit {
            Some(meta) => meta.update_predictors(&train)?,
            None => fit_functional_metamodel(&train, spec, method, k, k_prime, options)?,
        };
        fold_mse.push(mse(&fold_meta, &test)?);
    }
    let mean_mse = fold_mse.iter().sum::<f64>() / folds as f64;
    let denom = mean_pixel_variance(ensemble);
    if denom <= 0.0 {
        return Err(Error::InvalidArgument("zero-variance ensemble".into()));
    }
    Ok(CvResult {
        mse: mean_mse,
        q2: 1.0 - mean_mse / denom,
        fold_mse,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceEntry {
    pub method: Method,
    pub k: usize,
    pub n: usize,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub entries: Vec<ConvergenceEntry>,
    /// Per (method, n): the smallest k whose MSE is within the tolerance of
    /// the minimum over the k grid.
    pub k_star: Vec<(Method, usize, usize)>,
    pub tolerance: f64,
}

/// Shared per-rank model pool: rich fits are independent per coefficient, so
/// a truncation of the pool at smaller k is bit-identical to a fresh fit at
/// that k (seeds derive from flat indices, not ranks).
struct ModelPool {
    ranking: CoefficientRanking,
    mu: GridField,
    gp: Vec<Option<CoefficientModel>>,     // by rank
    linear: Vec<Option<CoefficientModel>>, // by rank
    mean: Vec<f64>,                        // by flat index
}

fn build_pool(
    sub: &FieldEnsemble,
    spec: &WaveletSpec,
    n_gp: usize,
    n_linear: usize,
    options: &MetamodelOptions,
) -> Result<ModelPool> {
    let mu = mean_field(sub);
    let decomps = centered_decompositions(sub, &mu, spec)?;
    let ranking = rank_by_variance(&decomps)?;
    let big_k = mu.len();
    let x_unit = sub.design().unit_points();
    let n = sub.design().n();
    let d = sub.design().d();

    let mut mean = vec![0.0; big_k];
    for (flat, m) in mean.iter_mut().enumerate() {
        *m = fit_mean(&decomps.iter().map(|dec| dec.coeffs()[flat]).collect::<Vec<_>>())?;
    }

    let fit_rank = |rank: usize, class: ModelClass| -> Result<CoefficientModel> {
        let flat = ranking.flat_index(rank);
        let y: Vec<f64> = decomps.iter().map(|dec| dec.coeffs()[flat]).collect();
        match class {
            ModelClass::Linear => Ok(CoefficientModel::Linear(
                fit_linear_aic(x_unit, n, d, &y).map_err(|e| wrap(rank, flat, e))?,
            )),
            ModelClass::Gp => {
                let gp_opts = coefficient_gp_options(&options.gp, d, options.seed, flat);
                match fit_gp(x_unit, n, d, &y, &gp_opts) {
                    Ok(m) => Ok(CoefficientModel::Gp(Box::new(m))),
                    Err(_) if options.fallback => Ok(CoefficientModel::Linear(
                        fit_linear_aic(x_unit, n, d, &y).map_err(|e| wrap(rank, flat, e))?,
                    )),
                    Err(e) => Err(wrap(rank, flat, e)),
                }
            }
            ModelClass::Mean => unreachable!(),
        }
    };

    let gp: Vec<Option<CoefficientModel>> = (0..big_k)
        .into_par_iter()
        .map(|rank| -> Result<Option<CoefficientModel>> {
            if rank < n_gp.min(big_k) {
                Ok(Some(fit_rank(rank, ModelClass::Gp)?))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let linear: Vec<Option<CoefficientModel>> = (0..big_k)
        .into_par_iter()
        .map(|rank| -> Result<Option<CoefficientModel>> {
            if rank < n_linear.min(big_k) {
                Ok(Some(fit_rank(rank, ModelClass::Linear)?))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ModelPool {
        ranking,
        mu,
        gp,
        linear,
        mean,
    })
}

/// Full-factorial MSE table over methods × k × n, with sub-sampled learning
/// sets, plus the k* heuristic (smallest k within `tolerance` of the best
/// MSE over the k grid).
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    ensemble: &FieldEnsemble,
    test: &FieldEnsemble,
    k_grid: &[usize],
    n_grid: &[usize],
    methods: &[Method],
    spec: &WaveletSpec,
    k_prime: usize,
    tolerance: f64,
    options: &MetamodelOptions,
) -> Result<ConvergenceStudy> {
    if k_grid.is_empty() || n_grid.is_empty() || methods.is_empty() {
        return Err(Error::InvalidArgument("empty convergence grids".into()));
    }
    let max_k = *k_grid.iter().max().unwrap();
    let need_gp = methods
        .iter()
        .any(|m| matches!(m, Method::GpMean | Method::GpLinearMean));
    let linear_depth = methods
        .iter()
        .map(|m| match m {
            Method::LinearMean => max_k,
            Method::GpLinearMean => max_k + k_prime,
            Method::GpMean => 0,
        })
        .max()
        .unwrap();

    let test_native = scale(test.design());
    let d = test.design().d();
    let mut entries = Vec::new();

    for &n0 in n_grid {
        if n0 < 2 || n0 > ensemble.n() {
            return Err(Error::InvalidArgument(format!(
                "n grid value {n0} outside [2, {}]",
                ensemble.n()
            )));
        }
        let mut indices: Vec<usize> = (0..ensemble.n()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(
            options.seed,
            "convergence-subsample",
            n0 as u64,
        ));
        indices.shuffle(&mut rng);
        indices.truncate(n0);
        indices.sort_unstable();
        let sub = ensemble.subset(&indices)?;

        let pool = build_pool(
            &sub,
            spec,
            if need_gp { max_k } else { 0 },
            linear_depth,
            options,
        )?;
        let shape = (pool.mu.nr(), pool.mu.nc());
        let nz = shape.0 * shape.1;

        // accumulate squared errors per (method, k) over the test sample
        let combos: Vec<(Method, usize)> = methods
            .iter()
            .flat_map(|&m| k_grid.iter().map(move |&k| (m, k)))
            .collect();
        let sums: Vec<f64> = (0..test.n())
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let mut xu = vec![0.0; d];
                unit_coords(
                    sub.design().marginals(),
                    &test_native[i * d..(i + 1) * d],
                    &mut xu,
                );
                // evaluate pool predictions once per rank
                let gp_val: Vec<f64> = pool
                    .gp
                    .iter()
                    .map(|m| m.as_ref().map_or(Ok(0.0), |m| m.predict(&xu)))
                    .collect::<Result<Vec<_>>>()?;
                let lin_val: Vec<f64> = pool
                    .linear
                    .iter()
                    .map(|m| m.as_ref().map_or(Ok(0.0), |m| m.predict(&xu)))
                    .collect::<Result<Vec<_>>>()?;
                let mut coeffs = vec![0.0; nz];
                let mut synth = vec![0.0; nz];
                let truth = test.fields()[i].values();
                let mut out = Vec::with_capacity(combos.len());
                for &(method, k) in &combos {
                    for rank in 0..nz {
                        let flat = pool.ranking.flat_index(rank);
                        coeffs[flat] = match model_class(method, rank, k, k_prime) {
                            ModelClass::Gp => gp_val[rank],
                            ModelClass::Linear => lin_val[rank],
                            ModelClass::Mean => pool.mean[flat],
                        };
                    }
                    idwt2_into(&coeffs, shape.0, shape.1, spec, &mut synth)?;
                    let mut acc = 0.0;
                    for ((s, m), t) in synth.iter().zip(pool.mu.values()).zip(truth) {
                        let e = s + m - t;
                        acc += e * e;
                    }
                    out.push(acc / nz as f64);
                }
                Ok(out)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?
            .into_iter()
            .fold(vec![0.0; combos.len()], |mut acc, row| {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
                acc
            });

        for ((method, k), sum) in combos.into_iter().zip(sums) {
            entries.push(ConvergenceEntry {
                method,
                k,
                n: n0,
                mse: sum / test.n() as f64,
            });
        }
    }

    let mut k_star = Vec::new();
    for &n0 in n_grid {
        for &method in methods {
            let row: Vec<&ConvergenceEntry> = entries
                .iter()
                .filter(|e| e.n == n0 && e.method == method)
                .collect();
            let best = row.iter().map(|e| e.mse).fold(f64::INFINITY, f64::min);
            let mut ks: Vec<usize> = row
                .iter()
                .filter(|e| e.mse <= best * (1.0 + tolerance))
                .map(|e| e.k)
                .collect();
            ks.sort_unstable();
            if let Some(&k) = ks.first() {
                k_star.push((method, n0, k));
            }
        }
    }
    Ok(ConvergenceStudy {
        entries,
        k_star,
        tolerance,
    })
}
