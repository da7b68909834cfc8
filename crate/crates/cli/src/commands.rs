//! Implementations of the individual subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;

use sobolmap::campbell2d::{self, Campbell2dEvaluator, Campbell2dGrid, OracleQuad};
use sobolmap::designs::{self, MarginalDistribution};
use sobolmap::field::{read_ensemble_dir, read_field, write_ensemble_dir, write_field, FieldEnsemble, GridField};
use sobolmap::funcmeta::{
    self, fit_functional_metamodel, read_bundle, write_bundle, FunctionalMetamodel,
    MetamodelOptions, Method,
};
use sobolmap::gp::GpOptions;
use sobolmap::seeds;
use sobolmap::sobol::{
    bootstrap_sd, doubleloop_maps, saltelli_maps, saltelli_maps_retaining,
    write_sensitivity_maps, DoubleLoopBudget, MapEvaluator,
};
use sobolmap::wavelet::{coeff_location, dwt2, Subband, WaveletFamily, WaveletSpec};

use crate::adapter::{write_row_csv, ExternalModelAdapter};
use crate::render::{scale_range, write_ppm};
use crate::{CliError, CliResult};

// ---- shared helpers --------------------------------------------------------

/// `lower,upper` per input, one row each; an optional `lower,upper` header
/// is tolerated.
pub fn read_bounds_csv(path: &Path) -> CliResult<Vec<MarginalDistribution>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.to_lowercase().starts_with("lower")) {
            continue;
        }
        let (lo, hi) = line
            .split_once(',')
            .ok_or_else(|| CliError::config(format!("{}: row {} needs lower,upper", path.display(), i + 1)))?;
        let lo: f64 = lo.trim().parse().map_err(|_| {
            CliError::config(format!("{}: bad lower bound at row {}", path.display(), i + 1))
        })?;
        let hi: f64 = hi.trim().parse().map_err(|_| {
            CliError::config(format!("{}: bad upper bound at row {}", path.display(), i + 1))
        })?;
        out.push(
            MarginalDistribution::uniform(lo, hi)
                .map_err(|e| CliError::config(e.to_string()))?,
        );
    }
    if out.is_empty() {
        return Err(CliError::config(format!("{} holds no bounds", path.display())));
    }
    Ok(out)
}

fn unit_marginals(d: usize) -> Vec<MarginalDistribution> {
    (0..d)
        .map(|_| MarginalDistribution::Uniform { lower: 0.0, upper: 1.0 })
        .collect()
}

fn parse_f64_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad number {t:?} in list")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::config(format!("bad integer {t:?} in list")))
        })
        .collect()
}

fn wavelet_spec(family: &str, levels: &str, nr: usize, nc: usize) -> CliResult<WaveletSpec> {
    let family = WaveletFamily::parse(family).map_err(|e| CliError::config(e.to_string()))?;
    if levels == "full" {
        WaveletSpec::full_depth(family, nr, nc).map_err(|e| CliError::config(e.to_string()))
    } else {
        let levels: usize = levels
            .parse()
            .map_err(|_| CliError::config(format!("levels must be a number or 'full', got {levels:?}")))?;
        WaveletSpec::new(family, levels).map_err(|e| CliError::config(e.to_string()))
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::stage(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

/// Common metamodel fit flags, shared by `fit`, `validate` and `converge`.
#[derive(Args, Clone)]
pub struct GpFlags {
    /// Wavelet family: haar, db2, db4, db6, db8
    #[arg(long, default_value = "db4")]
    pub family: String,
    /// Decomposition depth, or "full"
    #[arg(long, default_value = "full")]
    pub levels: String,
    /// Likelihood restarts per GP fit
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Relative nugget added to the correlation diagonal
    #[arg(long, default_value_t = 1e-8)]
    pub nugget: f64,
    /// Also estimate the shape exponents p (default: fixed at 2)
    #[arg(long)]
    pub estimate_p: bool,
    /// Disable AICC trend-term selection (use the full one-degree trend)
    #[arg(long)]
    pub no_trend_selection: bool,
    /// Downgrade failed GP fits to linear models instead of aborting
    #[arg(long)]
    pub fallback: bool,
}

impl GpFlags {
    pub fn metamodel_options(&self, seed: u64) -> MetamodelOptions {
        MetamodelOptions {
            gp: GpOptions {
                trend_selection: !self.no_trend_selection,
                nugget: self.nugget,
                restarts: self.restarts,
                estimate_p: self.estimate_p,
                ..Default::default()
            },
            fallback: self.fallback,
            seed,
        }
    }
}

// ---- design ----------------------------------------------------------------

#[derive(Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// Maximin exchange sweeps (0 = plain Latin hypercube)
    #[arg(long, default_value_t = 0)]
    pub maximin_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV of native bounds, one `lower,upper` row per input
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn design(args: DesignArgs) -> CliResult<()> {
    let marginals = match &args.bounds {
        Some(path) => {
            let m = read_bounds_csv(path)?;
            if m.len() != args.d {
                return Err(CliError::config(format!(
                    "{} bounds rows for d = {}",
                    m.len(),
                    args.d
                )));
            }
            m
        }
        None => unit_marginals(args.d),
    };
    let design = if args.maximin_sweeps > 0 {
        designs::maximin_lhs(args.n, args.d, args.maximin_sweeps, args.seed)
    } else {
        designs::lhs(args.n, args.d, args.seed)
    }
    .map_err(|e| CliError::config(e.to_string()))?
    .with_marginals(marginals)
    .map_err(|e| CliError::config(e.to_string()))?;
    ensure_parent(&args.out)?;
    designs::write_design_csv(&design, &args.out)?;
    println!(
        "design: n = {}, d = {}, min unit distance = {:.6} -> {}",
        args.n,
        args.d,
        design.min_distance(),
        args.out.display()
    );
    Ok(())
}

// ---- eval ------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// `campbell2d` or `exec:"CMD {in} {out}"`
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// Grid rows for the built-in model
    #[arg(long, default_value_t = 64)]
    pub nr: usize,
    /// Grid columns for the built-in model
    #[arg(long, default_value_t = 64)]
    pub nc: usize,
    /// Parallel external-model invocations
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub retries: u32,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let ensemble = eval_to_ensemble(&args)?;
    write_ensemble_dir(&ensemble, &args.out)?;
    println!(
        "eval: {} maps of {}x{} -> {}",
        ensemble.n(),
        ensemble.fields()[0].nr(),
        ensemble.fields()[0].nc(),
        args.out.display()
    );
    Ok(())
}

pub fn eval_to_ensemble(args: &EvalArgs) -> CliResult<FieldEnsemble> {
    if args.model == "campbell2d" {
        let marginals = match &args.bounds {
            Some(p) => read_bounds_csv(p)?,
            None => campbell2d::marginals(),
        };
        if marginals.len() != campbell2d::INPUT_DIM {
            return Err(CliError::config("campbell2d expects 8 inputs"));
        }
        let design = designs::read_design_csv(&args.design, marginals)?;
        let grid = Campbell2dGrid::new(args.nr, args.nc)
            .map_err(|e| CliError::config(e.to_string()))?;
        let native = designs::scale(&design);
        let d = design.d();
        let fields: Vec<GridField> = (0..design.n())
            .map(|i| campbell2d::eval(&native[i * d..(i + 1) * d], &grid))
            .collect::<Result<_, _>>()
            .map_err(CliError::from)?;
        return FieldEnsemble::new(design, fields).map_err(CliError::from);
    }
    if let Some(command) = args.model.strip_prefix("exec:") {
        let bounds = args
            .bounds
            .as_ref()
            .ok_or_else(|| CliError::config("--bounds is required with an external model".to_string()))?;
        let marginals = read_bounds_csv(bounds)?;
        let design = designs::read_design_csv(&args.design, marginals)?;
        let adapter = ExternalModelAdapter::new(command.to_string(), args.timeout_secs, args.retries)?;
        let native = designs::scale(&design);
        let d = design.d();
        let work = tempdir_in_out(&args.out)?;
        let jobs = args.jobs.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::stage(format!("thread pool: {e}")))?;
        let fields: Vec<GridField> = pool.install(|| {
            use rayon::prelude::*;
            (0..design.n())
                .into_par_iter()
                .map(|i| -> CliResult<GridField> {
                    let input = write_row_csv(&work, i, &native[i * d..(i + 1) * d])?;
                    let output = work.join(format!("map_{i:04}.fld"));
                    adapter.run_row(&input, &output)?;
                    read_field(&output).map_err(|e| {
                        CliError::stage(format!("external model wrote a bad map for row {i}: {e}"))
                    })
                })
                .collect::<CliResult<Vec<_>>>()
        })?;
        let _ = std::fs::remove_dir_all(&work);
        return FieldEnsemble::new(design, fields).map_err(CliError::from);
    }
    Err(CliError::config(format!(
        "unknown model {:?}; use campbell2d or exec:\"CMD {{in}} {{out}}\"",
        args.model
    )))
}

fn tempdir_in_out(out: &Path) -> CliResult<PathBuf> {
    let dir = out.with_extension("work");
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::stage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

// ---- decompose -------------------------------------------------------------

#[derive(Args)]
pub struct DecomposeArgs {
    /// Input `.fld` map
    pub field: PathBuf,
    #[arg(long, default_value = "db4")]
    pub family: String,
    #[arg(long, default_value = "full")]
    pub levels: String,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn decompose(args: DecomposeArgs) -> CliResult<()> {
    let field = read_field(&args.field)?;
    let spec = wavelet_spec(&args.family, &args.levels, field.nr(), field.nc())?;
    let dec = dwt2(&field, &spec)?;
    let mut csv = String::from("flat_index,level,subband,row,col,value\n");
    for (flat, v) in dec.coeffs().iter().enumerate() {
        let loc = coeff_location(field.nr(), field.nc(), spec.levels, flat);
        let band = match loc.subband {
            Subband::Approx => "approx",
            Subband::Horizontal => "horizontal",
            Subband::Vertical => "vertical",
            Subband::Diagonal => "diagonal",
        };
        csv.push_str(&format!(
            "{flat},{},{band},{},{},{v}\n",
            loc.level, loc.row, loc.col
        ));
    }
    ensure_parent(&args.out)?;
    std::fs::write(&args.out, csv)
        .map_err(|e| CliError::stage(format!("cannot write {}: {e}", args.out.display())))?;
    println!("decompose: {} coefficients -> {}", dec.len(), args.out.display());
    Ok(())
}

// ---- fit -------------------------------------------------------------------

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// 1 = GP+mean, 2 = linear+mean, 3 = GP+linear+mean
    #[arg(long, default_value_t = 3)]
    pub method: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub k_prime: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub gp: GpFlags,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn fit(args: FitArgs) -> CliResult<()> {
    let meta = fit_metamodel_inner(&args)?;
    write_bundle(&meta, &args.out)?;
    for w in meta.warnings() {
        eprintln!("warning: {w}");
    }
    println!(
        "fit: method {} k {} k' {} over {} coefficients -> {}",
        args.method,
        args.k,
        args.k_prime,
        meta.models().len(),
        args.out.display()
    );
    Ok(())
}

pub fn fit_metamodel_inner(args: &FitArgs) -> CliResult<FunctionalMetamodel> {
    let ensemble = read_ensemble_dir(&args.ensemble)?;
    let f = &ensemble.fields()[0];
    let spec = wavelet_spec(&args.gp.family, &args.gp.levels, f.nr(), f.nc())?;
    let method = Method::from_index(args.method).map_err(|e| CliError::config(e.to_string()))?;
    let options = args.gp.metamodel_options(args.seed);
    fit_functional_metamodel(&ensemble, &spec, method, args.k, args.k_prime, &options)
        .map_err(CliError::from)
}

// ---- predict ---------------------------------------------------------------

#[derive(Args)]
pub struct PredictArgs {
    /// Metamodel bundle directory
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated input point in native units
    #[arg(long)]
    pub x: String,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn predict(args: PredictArgs) -> CliResult<()> {
    let meta = read_bundle(&args.model)?;
    let x = parse_f64_list(&args.x)?;
    if x.len() != meta.input_dim() {
        return Err(CliError::config(format!(
            "point has {} coordinates, metamodel expects {}",
            x.len(),
            meta.input_dim()
        )));
    }
    let map = meta.predict_map(&x)?;
    ensure_parent(&args.out)?;
    write_field(&map, &args.out)?;
    println!("predict: map -> {}", args.out.display());
    Ok(())
}

// ---- validate ----------------------------------------------------------------

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 3)]
    pub method: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub k_prime: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Re-estimate GP hyperparameters and the ranking on every fold
    #[arg(long)]
    pub refit_hyperparams: bool,
    #[command(flatten)]
    pub gp: GpFlags,
    /// Optional report file
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn validate(args: ValidateArgs) -> CliResult<()> {
    let ensemble = read_ensemble_dir(&args.ensemble)?;
    let f = &ensemble.fields()[0];
    let spec = wavelet_spec(&args.gp.family, &args.gp.levels, f.nr(), f.nc())?;
    let method = Method::from_index(args.method).map_err(|e| CliError::config(e.to_string()))?;
    let options = args.gp.metamodel_options(args.seed);
    let result = funcmeta::kfold_cv(
        &ensemble,
        args.folds,
        &spec,
        method,
        args.k,
        args.k_prime,
        &options,
        args.refit_hyperparams,
    )?;
    println!(
        "validate: {}-fold CV MSE = {:.6e}, Q2 = {:.4}",
        args.folds, result.mse, result.q2
    );
    if let Some(path) = &args.out {
        ensure_parent(path)?;
        let mut report = format!(
            "folds {}\nmse {}\nq2 {}\n",
            args.folds, result.mse, result.q2
        );
        for (i, m) in result.fold_mse.iter().enumerate() {
            report.push_str(&format!("fold {} mse {}\n", i + 1, m));
        }
        std::fs::write(path, report)
            .map_err(|e| CliError::stage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

// ---- converge ----------------------------------------------------------------

#[derive(Args)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long)]
    pub test_ensemble: PathBuf,
    /// Comma-separated k values
    #[arg(long)]
    pub k_grid: String,
    /// Comma-separated learning sizes
    #[arg(long)]
    pub n_grid: String,
    /// Comma-separated method indices, e.g. 1,2,3
    #[arg(long, default_value = "1,2,3")]
    pub methods: String,
    #[arg(long, default_value_t = 500)]
    pub k_prime: usize,
    /// k* tolerance above the minimum MSE
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub gp: GpFlags,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn converge(args: ConvergeArgs) -> CliResult<()> {
    let ensemble = read_ensemble_dir(&args.ensemble)?;
    let test = read_ensemble_dir(&args.test_ensemble)?;
    let f = &ensemble.fields()[0];
    let spec = wavelet_spec(&args.gp.family, &args.gp.levels, f.nr(), f.nc())?;
    let k_grid = parse_usize_list(&args.k_grid)?;
    let n_grid = parse_usize_list(&args.n_grid)?;
    let methods = parse_usize_list(&args.methods)?
        .into_iter()
        .map(|i| Method::from_index(i).map_err(|e| CliError::config(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let options = args.gp.metamodel_options(args.seed);
    let study = funcmeta::convergence_study(
        &ensemble,
        &test,
        &k_grid,
        &n_grid,
        &methods,
        &spec,
        args.k_prime,
        args.tolerance,
        &options,
    )?;
    let mut csv = String::from("method,k,n,mse\n");
    for e in &study.entries {
        csv.push_str(&format!("{},{},{},{}\n", e.method.index(), e.k, e.n, e.mse));
    }
    ensure_parent(&args.out)?;
    std::fs::write(&args.out, csv)
        .map_err(|e| CliError::stage(format!("cannot write {}: {e}", args.out.display())))?;
    for (method, n, k) in &study.k_star {
        println!("k* for method {} at n = {n}: {k}", method.index());
    }
    println!("converge: table -> {}", args.out.display());
    Ok(())
}

// ---- sobol -------------------------------------------------------------------

#[derive(Args)]
pub struct SobolArgs {
    /// `campbell2d` or `meta:BUNDLE_DIR`
    #[arg(long)]
    pub evaluator: String,
    /// `saltelli` or `doubleloop`
    #[arg(long, default_value = "saltelli")]
    pub estimator: String,
    /// Pick-freeze base sample size N (cost N(d+2))
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rows evaluated per streamed batch
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Bootstrap resamples for SD maps (saltelli only; 0 disables)
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Double-loop budgets (conditioning values / inner draws, first-order
    /// then total, then the Var(Y) sample count)
    #[arg(long, default_value_t = 200)]
    pub fo_outer: usize,
    #[arg(long, default_value_t = 1000)]
    pub fo_inner: usize,
    #[arg(long, default_value_t = 1000)]
    pub t_outer: usize,
    #[arg(long, default_value_t = 100)]
    pub t_inner: usize,
    #[arg(long, default_value_t = 20000)]
    pub n_var: usize,
    /// Grid size for the built-in campbell2d evaluator
    #[arg(long, default_value_t = 64)]
    pub nr: usize,
    #[arg(long, default_value_t = 64)]
    pub nc: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

enum EvaluatorChoice {
    Campbell(Campbell2dEvaluator),
    Meta(Box<FunctionalMetamodel>),
}

impl EvaluatorChoice {
    fn as_dyn(&self) -> &dyn MapEvaluator {
        match self {
            EvaluatorChoice::Campbell(e) => e,
            EvaluatorChoice::Meta(m) => m.as_ref(),
        }
    }

    fn marginals(&self) -> Vec<MarginalDistribution> {
        match self {
            EvaluatorChoice::Campbell(_) => campbell2d::marginals(),
            EvaluatorChoice::Meta(m) => m.marginals().to_vec(),
        }
    }
}

pub fn sobol(args: SobolArgs) -> CliResult<()> {
    let choice = if args.evaluator == "campbell2d" {
        EvaluatorChoice::Campbell(Campbell2dEvaluator {
            grid: Campbell2dGrid::new(args.nr, args.nc)
                .map_err(|e| CliError::config(e.to_string()))?,
        })
    } else if let Some(dir) = args.evaluator.strip_prefix("meta:") {
        EvaluatorChoice::Meta(Box::new(read_bundle(Path::new(dir))?))
    } else {
        return Err(CliError::config(format!(
            "unknown evaluator {:?}; use campbell2d or meta:DIR",
            args.evaluator
        )));
    };
    let marginals = choice.marginals();
    let evaluator = choice.as_dyn();
    let start = Instant::now();
    match args.estimator.as_str() {
        "saltelli" => {
            if args.bootstrap > 0 {
                let (maps, artifacts) =
                    saltelli_maps_retaining(evaluator, &marginals, args.n, args.seed, args.batch)?;
                let sd = bootstrap_sd(&artifacts, args.bootstrap, seeds::derive(args.seed, "cli-bootstrap", 0))?;
                write_sensitivity_maps(&maps, &args.out, Some(start.elapsed().as_secs_f64()))?;
                for (i, f) in sd.first_order.iter().enumerate() {
                    write_field(f, &args.out.join(format!("SD_S_{}.fld", i + 1)))?;
                }
                for (i, f) in sd.total.iter().enumerate() {
                    write_field(f, &args.out.join(format!("SD_ST_{}.fld", i + 1)))?;
                }
                println!(
                    "sobol: saltelli N = {} ({} evaluations), bootstrap B = {} -> {}",
                    args.n,
                    maps.meta.eval_count,
                    args.bootstrap,
                    args.out.display()
                );
            } else {
                let maps = saltelli_maps(evaluator, &marginals, args.n, args.seed, args.batch)?;
                write_sensitivity_maps(&maps, &args.out, Some(start.elapsed().as_secs_f64()))?;
                println!(
                    "sobol: saltelli N = {} ({} evaluations) -> {}",
                    args.n,
                    maps.meta.eval_count,
                    args.out.display()
                );
            }
        }
        "doubleloop" => {
            let budget = DoubleLoopBudget {
                first_order_outer: args.fo_outer,
                first_order_inner: args.fo_inner,
                total_outer: args.t_outer,
                total_inner: args.t_inner,
                variance_samples: args.n_var,
            };
            let maps = doubleloop_maps(evaluator, &marginals, &budget, args.seed)?;
            write_sensitivity_maps(&maps, &args.out, Some(start.elapsed().as_secs_f64()))?;
            println!(
                "sobol: doubleloop ({} evaluations) -> {}",
                maps.meta.eval_count,
                args.out.display()
            );
        }
        other => {
            return Err(CliError::config(format!(
                "unknown estimator {other:?}; use saltelli or doubleloop"
            )))
        }
    }
    Ok(())
}

// ---- campbell2d -----------------------------------------------------------

#[derive(Args)]
pub struct Campbell2dArgs {
    /// Comma-separated 8-vector in [-1,5]^8
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value_t = 64)]
    pub nr: usize,
    #[arg(long, default_value_t = 64)]
    pub nc: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn campbell2d(args: Campbell2dArgs) -> CliResult<()> {
    let x = parse_f64_list(&args.x)?;
    let grid = Campbell2dGrid::new(args.nr, args.nc).map_err(|e| CliError::config(e.to_string()))?;
    let map = campbell2d::eval(&x, &grid)?;
    ensure_parent(&args.out)?;
    write_field(&map, &args.out)?;
    println!("campbell2d: map at x = {x:?} -> {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct OracleArgs {
    /// Input index, 1..=8
    #[arg(long)]
    pub index: usize,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    /// Monte Carlo samples for the Var(Y) normalizer
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub nr: usize,
    #[arg(long, default_value_t = 64)]
    pub nc: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn campbell2d_oracle(args: OracleArgs) -> CliResult<()> {
    let grid = Campbell2dGrid::new(args.nr, args.nc).map_err(|e| CliError::config(e.to_string()))?;
    let quad = OracleQuad {
        gl_nodes: args.nodes,
        var_mc_samples: args.mc_n,
        seed: args.seed,
    };
    let map = campbell2d::analytic_first_order(args.index, &grid, &quad)?;
    ensure_parent(&args.out)?;
    write_field(&map, &args.out)?;
    println!(
        "campbell2d-oracle: S_{} (grid mean {:.4}) -> {}",
        args.index,
        map.grid_mean(),
        args.out.display()
    );
    Ok(())
}

// ---- plot -------------------------------------------------------------------

#[derive(Args)]
pub struct PlotArgs {
    /// Input `.fld` map
    pub field: PathBuf,
    #[arg(long)]
    pub scale_min: Option<f64>,
    #[arg(long)]
    pub scale_max: Option<f64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn plot(args: PlotArgs) -> CliResult<()> {
    let field = read_field(&args.field)?;
    ensure_parent(&args.out)?;
    write_ppm(&field, &args.out, args.scale_min, args.scale_max)?;
    let (lo, hi) = scale_range(&field, args.scale_min, args.scale_max);
    println!(
        "plot: {} (scale {lo:.4}..{hi:.4}) -> {}",
        args.field.display(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Validate and print the plan without executing anything
    #[arg(long)]
    pub dry_run: bool,
}
