//! Variance-based sensitivity estimation: per-pixel first-order and total
//! Sobol' index maps.
//!
//! Two estimators are provided. `saltelli_maps` is the pick-freeze scheme
//! costing exactly `N(d+2)` evaluator calls: two independent sample matrices
//! `A`, `B` and the hybrids `A_B^(i)` (column i of A replaced by B's). The
//! first-order numerator is the centered cross product
//! `(1/N) Σ (y_B - m)(y_{A_B^(i)} - m)` — `y_B` and `y_{A_B^(i)}` share only
//! input i — and the total numerator is `(1/2N) Σ (y_A - y_{A_B^(i)})²`,
//! whose pair shares everything but input i. Both divide by one pooled
//! variance of the A and B samples.
//!
//! `doubleloop_maps` is the nested Monte Carlo procedure: for each input,
//! an inner expectation over the complementary variables at each of a set of
//! conditioning values, and the variance of those conditional means; the
//! complementary nesting yields the total index.
//!
//! Evaluations stream through fixed-size batches (whole maps are large) and
//! accumulate per pixel in row order, so results are bit-identical for a
//! fixed seed regardless of batch size or thread count.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::designs::MarginalDistribution;
use crate::error::{Error, Result};
use crate::field::GridField;
use crate::funcmeta::FunctionalMetamodel;
use crate::seeds;

/// A deterministic map-valued model: `x` in native units to a grid of
/// values. Realized by the analytical test function, a fitted functional
/// metamodel, or an external-simulator adapter.
pub trait MapEvaluator: Sync {
    fn input_dim(&self) -> usize;
    /// `(nr, nc, z1_range, z2_range)` of the produced maps.
    fn grid_geometry(&self) -> (usize, usize, (f64, f64), (f64, f64));
    /// Evaluate into a preallocated `nr·nc` buffer.
    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn evaluate(&self, x: &[f64]) -> Result<GridField> {
        let (nr, nc, z1, z2) = self.grid_geometry();
        let mut out = vec![0.0; nr * nc];
        self.evaluate_into(x, &mut out)?;
        GridField::new_allowing_nan(nr, nc, z1, z2, out)
    }
}

impl MapEvaluator for FunctionalMetamodel {
    fn input_dim(&self) -> usize {
        FunctionalMetamodel::input_dim(self)
    }

    fn grid_geometry(&self) -> (usize, usize, (f64, f64), (f64, f64)) {
        let m = self.mean_field();
        (m.nr(), m.nc(), m.z1_range(), m.z2_range())
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.predict_map_into(x, out)
    }
}

/// Closure-backed evaluator, handy for analytic toys and tests.
pub struct FnEvaluator<F: Fn(&[f64], &mut [f64]) + Sync> {
    pub d: usize,
    pub nr: usize,
    pub nc: usize,
    pub z1_range: (f64, f64),
    pub z2_range: (f64, f64),
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> MapEvaluator for FnEvaluator<F> {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn grid_geometry(&self) -> (usize, usize, (f64, f64), (f64, f64)) {
        (self.nr, self.nc, self.z1_range, self.z2_range)
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// Wrapper that counts evaluator calls; used to verify cost accounting.
pub struct CountingEvaluator<'a> {
    inner: &'a dyn MapEvaluator,
    count: std::sync::atomic::AtomicU64,
}

impl<'a> CountingEvaluator<'a> {
    pub fn new(inner: &'a dyn MapEvaluator) -> Self {
        CountingEvaluator {
            inner,
            count: std::sync::atomic::AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl MapEvaluator for CountingEvaluator<'_> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn grid_geometry(&self) -> (usize, usize, (f64, f64), (f64, f64)) {
        self.inner.grid_geometry()
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.evaluate_into(x, out)
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorMeta {
    pub estimator: String,
    pub n: usize,
    pub seed: u64,
    pub eval_count: u64,
    /// Pixels poisoned by a NaN evaluation (their indices are NaN too).
    pub nan_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct SensitivityMaps {
    pub first_order: Vec<GridField>,
    pub total: Vec<GridField>,
    pub meta: EstimatorMeta,
}

/// Retained pick-freeze rows, enough to re-estimate under resampling.
/// Memory: `N (d+2) nr nc` doubles — size before you retain.
pub struct SaltelliArtifacts {
    n: usize,
    d: usize,
    nz: usize,
    geometry: (usize, usize, (f64, f64), (f64, f64)),
    /// Shift applied to all values before accumulation (the first A map);
    /// keeps the moment sums well conditioned.
    center: Vec<f64>,
    /// Row-major: row j holds `d+2` maps in order `[A, B, AB_1 .. AB_d]`.
    rows: Vec<f64>,
}

struct Accumulators {
    d: usize,
    nz: usize,
    s_a: Vec<f64>,
    s_b: Vec<f64>,
    s_a2: Vec<f64>,
    s_b2: Vec<f64>,
    s_abi: Vec<f64>,  // d × nz
    cross: Vec<f64>,  // d × nz
    tdiff: Vec<f64>,  // d × nz
}

impl Accumulators {
    fn new(d: usize, nz: usize) -> Self {
        Accumulators {
            d,
            nz,
            s_a: vec![0.0; nz],
            s_b: vec![0.0; nz],
            s_a2: vec![0.0; nz],
            s_b2: vec![0.0; nz],
            s_abi: vec![0.0; d * nz],
            cross: vec![0.0; d * nz],
            tdiff: vec![0.0; d * nz],
        }
    }

    /// Add one pick-freeze row (values already centered), `weight` times.
    fn add_row(&mut self, row: &[f64], center: &[f64], weight: f64) {
        let nz = self.nz;
        let (ya, rest) = row.split_at(nz);
        let (yb, hybrids) = rest.split_at(nz);
        for z in 0..nz {
            let a = ya[z] - center[z];
            let b = yb[z] - center[z];
            self.s_a[z] += weight * a;
            self.s_b[z] += weight * b;
            self.s_a2[z] += weight * a * a;
            self.s_b2[z] += weight * b * b;
        }
        for i in 0..self.d {
            let yh = &hybrids[i * nz..(i + 1) * nz];
            let s_abi = &mut self.s_abi[i * nz..(i + 1) * nz];
            let cross = &mut self.cross[i * nz..(i + 1) * nz];
            let tdiff = &mut self.tdiff[i * nz..(i + 1) * nz];
            for z in 0..nz {
                let a = ya[z] - center[z];
                let b = yb[z] - center[z];
                let h = yh[z] - center[z];
                s_abi[z] += weight * h;
                cross[z] += weight * b * h;
                let dz = a - h;
                tdiff[z] += weight * dz * dz;
            }
        }
    }

    /// Finalize into per-input first/total index vectors.
    fn finalize(&self, n: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let nz = self.nz;
        let mut first = vec![vec![0.0; nz]; self.d];
        let mut total = vec![vec![0.0; nz]; self.d];
        for z in 0..nz {
            let m = (self.s_a[z] + self.s_b[z]) / (2.0 * n);
            let var = (self.s_a2[z] + self.s_b2[z]) / (2.0 * n) - m * m;
            for i in 0..self.d {
                if var == 0.0 {
                    // constant output at this pixel: no variance to share
                    first[i][z] = 0.0;
                    total[i][z] = 0.0;
                    continue;
                }
                let num_first =
                    self.cross[i * nz + z] / n - m * (self.s_b[z] + self.s_abi[i * nz + z]) / n
                        + m * m;
                first[i][z] = num_first / var;
                total[i][z] = self.tdiff[i * nz + z] / (2.0 * n) / var;
            }
        }
        (first, total)
    }
}

fn sample_matrix(
    marginals: &[MarginalDistribution],
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let d = marginals.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n * d];
    for row in out.chunks_mut(d) {
        for (v, m) in row.iter_mut().zip(marginals) {
            *v = m.quantile(rng.gen::<f64>());
        }
    }
    out
}

fn evaluator_error(x: &[f64], e: Error) -> Error {
    match e {
        e @ Error::EvaluatorFailed { .. } => e,
        other => Error::EvaluatorFailed {
            x: x.to_vec(),
            message: other.to_string(),
        },
    }
}

fn saltelli_core(
    evaluator: &dyn MapEvaluator,
    marginals: &[MarginalDistribution],
    n: usize,
    seed: u64,
    batch: usize,
    retain: bool,
) -> Result<(SensitivityMaps, Option<SaltelliArtifacts>)> {
    let d = evaluator.input_dim();
    if marginals.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} marginals for a {d}-input evaluator",
            marginals.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("saltelli needs N >= 2".into()));
    }
    let batch = batch.max(1).min(n);
    let (nr, nc, z1, z2) = evaluator.grid_geometry();
    let nz = nr * nc;

    let a = sample_matrix(marginals, n, seeds::derive(seed, "saltelli-a", 0));
    let b = sample_matrix(marginals, n, seeds::derive(seed, "saltelli-b", 0));

    // centering map: the first A evaluation, reused as row 0's A value
    let mut center = vec![0.0; nz];
    evaluator
        .evaluate_into(&a[0..d], &mut center)
        .map_err(|e| evaluator_error(&a[0..d], e))?;
    let mut eval_count: u64 = 1;

    let mut acc = Accumulators::new(d, nz);
    let row_len = (d + 2) * nz;
    let mut batch_buf = vec![0.0f64; batch * row_len];
    let mut retained: Vec<f64> = if retain {
        Vec::with_capacity(n * row_len)
    } else {
        Vec::new()
    };

    let mut start = 0usize;
    while start < n {
        let rows = (n - start).min(batch);
        let buf = &mut batch_buf[..rows * row_len];
        // evaluate all maps of the batch in parallel; each task owns one
        // (row, which-map) slice
        let results: Vec<Result<()>> = buf
            .par_chunks_mut(nz)
            .enumerate()
            .map(|(task, out)| {
                let local = task / (d + 2);
                let which = task % (d + 2);
                let j = start + local;
                let mut x = vec![0.0; d];
                match which {
                    0 => x.copy_from_slice(&a[j * d..(j + 1) * d]),
                    1 => x.copy_from_slice(&b[j * d..(j + 1) * d]),
                    _ => {
                        let i = which - 2;
                        x.copy_from_slice(&a[j * d..(j + 1) * d]);
                        x[i] = b[j * d + i];
                    }
                }
                if j == 0 && which == 0 {
                    out.copy_from_slice(&center); // already evaluated
                    return Ok(());
                }
                evaluator
                    .evaluate_into(&x, out)
                    .map_err(|e| evaluator_error(&x, e))
            })
            .collect();
        for r in results {
            r?;
        }
        eval_count += (rows * (d + 2)) as u64 - u64::from(start == 0);

        for local in 0..rows {
            let row = &buf[local * row_len..(local + 1) * row_len];
            acc.add_row(row, &center, 1.0);
        }
        if retain {
            retained.extend_from_slice(buf);
        }
        start += rows;
    }

    let (first, total) = acc.finalize(n as f64);
    let nan_pixels = (0..nz)
        .filter(|&z| !acc.s_a[z].is_finite() || !acc.s_b[z].is_finite())
        .count();
    let to_fields = |vecs: Vec<Vec<f64>>| -> Result<Vec<GridField>> {
        vecs.into_iter()
            .map(|v| GridField::new_allowing_nan(nr, nc, z1, z2, v))
            .collect()
    };
    let maps = SensitivityMaps {
        first_order: to_fields(first)?,
        total: to_fields(total)?,
        meta: EstimatorMeta {
            estimator: "saltelli".into(),
            n,
            seed,
            eval_count,
            nan_pixels,
        },
    };
    let artifacts = retain.then_some(SaltelliArtifacts {
        n,
        d,
        nz,
        geometry: (nr, nc, z1, z2),
        center,
        rows: retained,
    });
    Ok((maps, artifacts))
}

/// Pick-freeze estimation of all first-order and total index maps with
/// exactly `N(d+2)` evaluator calls, streamed in batches of `batch` rows.
pub fn saltelli_maps(
    evaluator: &dyn MapEvaluator,
    marginals: &[MarginalDistribution],
    n: usize,
    seed: u64,
    batch: usize,
) -> Result<SensitivityMaps> {
    saltelli_core(evaluator, marginals, n, seed, batch, false).map(|(m, _)| m)
}

/// Like [`saltelli_maps`] but retains the per-row evaluations for
/// [`bootstrap_sd`]. Maps are bit-identical to the non-retaining run.
pub fn saltelli_maps_retaining(
    evaluator: &dyn MapEvaluator,
    marginals: &[MarginalDistribution],
    n: usize,
    seed: u64,
    batch: usize,
) -> Result<(SensitivityMaps, SaltelliArtifacts)> {
    saltelli_core(evaluator, marginals, n, seed, batch, true)
        .map(|(m, a)| (m, a.expect("artifacts requested")))
}

#[derive(Debug, Clone)]
pub struct BootstrapSd {
    pub first_order: Vec<GridField>,
    pub total: Vec<GridField>,
    pub resamples: usize,
}

/// Bootstrap standard deviations: resample the `N` pick-freeze rows with
/// replacement `b` times and report the per-pixel SD of the re-estimates.
pub fn bootstrap_sd(artifacts: &SaltelliArtifacts, b: usize, seed: u64) -> Result<BootstrapSd> {
    if b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 2".into()));
    }
    let n = artifacts.n;
    let d = artifacts.d;
    let nz = artifacts.nz;
    let row_len = (d + 2) * nz;

    // per replicate: multinomial row counts, then one weighted pass
    let estimates: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(seeds::derive(seed, "bootstrap", rep as u64));
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            let mut acc = Accumulators::new(d, nz);
            for (j, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let row = &artifacts.rows[j * row_len..(j + 1) * row_len];
                acc.add_row(row, &artifacts.center, c as f64);
            }
            acc.finalize(n as f64)
        })
        .collect();

    let (nr, nc, z1, z2) = artifacts.geometry;
    let mut first_sd = vec![vec![0.0; nz]; d];
    let mut total_sd = vec![vec![0.0; nz]; d];
    for i in 0..d {
        for z in 0..nz {
            let fs: Vec<f64> = estimates.iter().map(|(f, _)| f[i][z]).collect();
            let ts: Vec<f64> = estimates.iter().map(|(_, t)| t[i][z]).collect();
            first_sd[i][z] = sd(&fs);
            total_sd[i][z] = sd(&ts);
        }
    }
    let to_fields = |vecs: Vec<Vec<f64>>| -> Result<Vec<GridField>> {
        vecs.into_iter()
            .map(|v| GridField::new_allowing_nan(nr, nc, z1, z2, v))
            .collect()
    };
    Ok(BootstrapSd {
        first_order: to_fields(first_sd)?,
        total: to_fields(total_sd)?,
        resamples: b,
    })
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Monte Carlo budgets of the nested (double-loop) estimator.
///
/// First-order: `first_order_inner` draws of the complementary variables for
/// each of `first_order_outer` conditioning values of the input. Total:
/// `total_inner` draws of the input for each of `total_outer` frozen
/// complements. `variance_samples` independent draws estimate `Var(Y)`.
#[derive(Debug, Clone)]
pub struct DoubleLoopBudget {
    pub first_order_outer: usize,
    pub first_order_inner: usize,
    pub total_outer: usize,
    pub total_inner: usize,
    pub variance_samples: usize,
}

impl Default for DoubleLoopBudget {
    fn default() -> Self {
        DoubleLoopBudget {
            first_order_outer: 200,
            first_order_inner: 1000,
            total_outer: 1000,
            total_inner: 100,
            variance_samples: 20_000,
        }
    }
}

impl DoubleLoopBudget {
    pub fn eval_count(&self, d: usize) -> u64 {
        (d * (self.first_order_outer * self.first_order_inner
            + self.total_outer * self.total_inner)
            + self.variance_samples) as u64
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("first_order_outer", self.first_order_outer),
            ("first_order_inner", self.first_order_inner),
            ("total_outer", self.total_outer),
            ("total_inner", self.total_inner),
            ("variance_samples", self.variance_samples),
        ] {
            if v < 2 {
                return Err(Error::InvalidArgument(format!(
                    "double-loop budget {name} must be >= 2, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Nested Monte Carlo estimation of the index maps.
pub fn doubleloop_maps(
    evaluator: &dyn MapEvaluator,
    marginals: &[MarginalDistribution],
    budget: &DoubleLoopBudget,
    seed: u64,
) -> Result<SensitivityMaps> {
    budget.validate()?;
    let d = evaluator.input_dim();
    if marginals.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} marginals for a {d}-input evaluator",
            marginals.len()
        )));
    }
    let (nr, nc, z1, z2) = evaluator.grid_geometry();
    let nz = nr * nc;
    let mut eval_count: u64 = 0;

    // Var(Y) from independent draws, centered on the first map
    let var_y = {
        let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(seed, "dl-var", 0));
        let m = budget.variance_samples;
        let draws: Vec<f64> = (0..m * d)
            .map(|k| marginals[k % d].quantile(rng.gen::<f64>()))
            .collect();
        let mut center = vec![0.0; nz];
        evaluator
            .evaluate_into(&draws[0..d], &mut center)
            .map_err(|e| evaluator_error(&draws[0..d], e))?;
        eval_count += 1;
        let chunk = 64usize;
        let mut s = vec![0.0; nz];
        let mut s2 = vec![0.0; nz];
        let mut start = 0;
        let mut buf = vec![0.0; chunk * nz];
        while start < m {
            let rows = (m - start).min(chunk);
            let results: Vec<Result<()>> = buf[..rows * nz]
                .par_chunks_mut(nz)
                .enumerate()
                .map(|(local, out)| {
                    let j = start + local;
                    if j == 0 {
                        out.copy_from_slice(&center);
                        return Ok(());
                    }
                    let x = &draws[j * d..(j + 1) * d];
                    evaluator.evaluate_into(x, out).map_err(|e| evaluator_error(x, e))
                })
                .collect();
            for r in results {
                r?;
            }
            eval_count += (rows as u64) - u64::from(start == 0);
            for local in 0..rows {
                let row = &buf[local * nz..(local + 1) * nz];
                for z in 0..nz {
                    let v = row[z] - center[z];
                    s[z] += v;
                    s2[z] += v * v;
                }
            }
            start += rows;
        }
        let mf = m as f64;
        (0..nz)
            .map(|z| (s2[z] - s[z] * s[z] / mf) / (mf - 1.0))
            .collect::<Vec<f64>>()
    };

    // conditional-variance maps per input
    let cond_variance = |outer: usize,
                         inner: usize,
                         freeze_input: bool,
                         input: usize,
                         tag: &str,
                         eval_count: &mut u64|
     -> Result<Vec<f64>> {
        // one task per outer iterate, seeded independently; means are then
        // reduced in index order
        let means: Vec<Result<Vec<f64>>> = (0..outer)
            .into_par_iter()
            .map(|j| -> Result<Vec<f64>> {
                let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(
                    seed,
                    tag,
                    (input * outer + j) as u64,
                ));
                let mut x = vec![0.0; d];
                // the frozen part of x for this outer iterate
                if freeze_input {
                    x[input] = marginals[input].quantile(rng.gen::<f64>());
                } else {
                    for l in 0..d {
                        if l != input {
                            x[l] = marginals[l].quantile(rng.gen::<f64>());
                        }
                    }
                }
                let mut mean = vec![0.0; nz];
                let mut buf = vec![0.0; nz];
                for _ in 0..inner {
                    if freeze_input {
                        for l in 0..d {
                            if l != input {
                                x[l] = marginals[l].quantile(rng.gen::<f64>());
                            }
                        }
                    } else {
                        x[input] = marginals[input].quantile(rng.gen::<f64>());
                    }
                    evaluator
                        .evaluate_into(&x, &mut buf)
                        .map_err(|e| evaluator_error(&x, e))?;
                    for z in 0..nz {
                        mean[z] += buf[z];
                    }
                }
                for v in mean.iter_mut() {
                    *v /= inner as f64;
                }
                Ok(mean)
            })
            .collect();
        *eval_count += (outer * inner) as u64;
        let means: Vec<Vec<f64>> = means.into_iter().collect::<Result<Vec<_>>>()?;
        // variance over the outer means, divisor outer-1
        let of = outer as f64;
        let mut m1 = vec![0.0; nz];
        for mean in &means {
            for z in 0..nz {
                m1[z] += mean[z];
            }
        }
        for v in m1.iter_mut() {
            *v /= of;
        }
        let mut var = vec![0.0; nz];
        for mean in &means {
            for z in 0..nz {
                let e = mean[z] - m1[z];
                var[z] += e * e;
            }
        }
        for v in var.iter_mut() {
            *v /= of - 1.0;
        }
        Ok(var)
    };

    let mut first = Vec::with_capacity(d);
    let mut total = Vec::with_capacity(d);
    for i in 0..d {
        let v_i = cond_variance(
            budget.first_order_outer,
            budget.first_order_inner,
            true,
            i,
            "dl-first",
            &mut eval_count,
        )?;
        let v_noti = cond_variance(
            budget.total_outer,
            budget.total_inner,
            false,
            i,
            "dl-total",
            &mut eval_count,
        )?;
        first.push(
            (0..nz)
                .map(|z| v_i[z] / var_y[z])
                .collect::<Vec<f64>>(),
        );
        total.push(
            (0..nz)
                .map(|z| 1.0 - v_noti[z] / var_y[z])
                .collect::<Vec<f64>>(),
        );
    }

    let nan_pixels = (0..nz)
        .filter(|&z| first.iter().chain(total.iter()).any(|m| !m[z].is_finite()))
        .count();
    let to_fields = |vecs: Vec<Vec<f64>>| -> Result<Vec<GridField>> {
        vecs.into_iter()
            .map(|v| GridField::new_allowing_nan(nr, nc, z1, z2, v))
            .collect()
    };
    Ok(SensitivityMaps {
        first_order: to_fields(first)?,
        total: to_fields(total)?,
        meta: EstimatorMeta {
            estimator: "doubleloop".into(),
            n: budget.eval_count(d) as usize,
            seed,
            eval_count,
            nan_pixels,
        },
    })
}

/// Relative mean absolute error `E_z|est - ref| / E_z[ref]`.
pub fn rmae(estimated: &GridField, reference: &GridField) -> Result<f64> {
    if !estimated.same_geometry(reference) {
        return Err(Error::DimensionMismatch("rmae grids differ".into()));
    }
    let denom = reference.grid_mean();
    if denom == 0.0 {
        return Err(Error::ZeroMeanReference);
    }
    let num = estimated
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / estimated.len() as f64;
    Ok(num / denom)
}

/// Write index maps as `S_<i>.fld` / `ST_<i>.fld` plus `sobol_meta.txt`.
/// `runtime_secs`, when given, is recorded in the metadata file (which is
/// the one artifact allowed to differ between reruns).
pub fn write_sensitivity_maps(
    maps: &SensitivityMaps,
    dir: &Path,
    runtime_secs: Option<f64>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (i, f) in maps.first_order.iter().enumerate() {
        crate::field::write_field(f, &dir.join(format!("S_{}.fld", i + 1)))?;
    }
    for (i, f) in maps.total.iter().enumerate() {
        crate::field::write_field(f, &dir.join(format!("ST_{}.fld", i + 1)))?;
    }
    let mut meta = String::new();
    let _ = writeln!(meta, "estimator {}", maps.meta.estimator);
    let _ = writeln!(meta, "N {}", maps.meta.n);
    let _ = writeln!(meta, "seed {}", maps.meta.seed);
    let _ = writeln!(meta, "eval_count {}", maps.meta.eval_count);
    let _ = writeln!(meta, "nan_pixels {}", maps.meta.nan_pixels);
    if let Some(rt) = runtime_secs {
        let _ = writeln!(meta, "runtime_secs {rt:.3}");
    }
    std::fs::write(dir.join("sobol_meta.txt"), meta)
        .map_err(|e| Error::io(dir.join("sobol_meta.txt").display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::MarginalDistribution;

    fn unit_marginals(d: usize) -> Vec<MarginalDistribution> {
        (0..d)
            .map(|_| MarginalDistribution::uniform(0.0, 1.0).unwrap())
            .collect()
    }

    /// y(x, z) = x_0 for every pixel.
    fn single_input_evaluator(d: usize) -> FnEvaluator<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnEvaluator {
            d,
            nr: 4,
            nc: 4,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |x: &[f64], out: &mut [f64]| {
                out.fill(x[0]);
            },
        }
    }

    fn additive_evaluator(d: usize) -> FnEvaluator<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnEvaluator {
            d,
            nr: 4,
            nc: 4,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |x: &[f64], out: &mut [f64]| {
                out.fill(x[0] + x[1]);
            },
        }
    }

    #[test]
    fn single_variable_function_gets_full_first_order() {
        let ev = single_input_evaluator(2);
        let counting = CountingEvaluator::new(&ev);
        let n = 10_000;
        let maps = saltelli_maps(&counting, &unit_marginals(2), n, 42, 128).unwrap();
        assert_eq!(counting.count(), (n * 4) as u64);
        assert_eq!(maps.meta.eval_count, (n * 4) as u64);
        for z in 0..16 {
            assert!((maps.first_order[0].values()[z] - 1.0).abs() <= 0.02);
            assert!(maps.first_order[1].values()[z].abs() <= 0.02);
            assert!((maps.total[0].values()[z] - 1.0).abs() <= 0.02);
            assert!(maps.total[1].values()[z].abs() <= 0.02);
        }
    }

    #[test]
    fn additive_function_splits_variance_evenly() {
        let ev = additive_evaluator(2);
        let maps = saltelli_maps(&ev, &unit_marginals(2), 20_000, 7, 256).unwrap();
        for i in 0..2 {
            let s = maps.first_order[i].grid_mean();
            let t = maps.total[i].grid_mean();
            assert!((s - 0.5).abs() <= 0.02, "S_{i} = {s}");
            assert!((t - s).abs() <= 0.02, "ST_{i} = {t} vs S_{i} = {s}");
        }
    }

    #[test]
    fn deterministic_and_batch_invariant() {
        let ev = additive_evaluator(3);
        let m1 = saltelli_maps(&ev, &unit_marginals(3), 500, 9, 16).unwrap();
        let m2 = saltelli_maps(&ev, &unit_marginals(3), 500, 9, 97).unwrap();
        let m3 = saltelli_maps(&ev, &unit_marginals(3), 500, 9, 500).unwrap();
        for i in 0..3 {
            assert_eq!(m1.first_order[i].values(), m2.first_order[i].values());
            assert_eq!(m2.first_order[i].values(), m3.first_order[i].values());
            assert_eq!(m1.total[i].values(), m3.total[i].values());
        }
    }

    #[test]
    fn affine_output_scaling_leaves_maps_invariant() {
        let base = additive_evaluator(2);
        let scaled = FnEvaluator {
            d: 2,
            nr: 4,
            nc: 4,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |x: &[f64], out: &mut [f64]| {
                out.fill(-3.5 * (x[0] + x[1]) + 1e6);
            },
        };
        let m1 = saltelli_maps(&base, &unit_marginals(2), 2000, 11, 64).unwrap();
        let m2 = saltelli_maps(&scaled, &unit_marginals(2), 2000, 11, 64).unwrap();
        for i in 0..2 {
            for (a, b) in m1.first_order[i]
                .values()
                .iter()
                .zip(m2.first_order[i].values())
            {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            for (a, b) in m1.total[i].values().iter().zip(m2.total[i].values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn retaining_run_matches_streaming_run() {
        let ev = additive_evaluator(2);
        let plain = saltelli_maps(&ev, &unit_marginals(2), 300, 13, 50).unwrap();
        let (retained, artifacts) =
            saltelli_maps_retaining(&ev, &unit_marginals(2), 300, 13, 50).unwrap();
        for i in 0..2 {
            assert_eq!(
                plain.first_order[i].values(),
                retained.first_order[i].values()
            );
        }
        assert_eq!(artifacts.rows.len(), 300 * 4 * 16);
    }

    #[test]
    fn bootstrap_zero_variance_evaluator_gives_zero_sd() {
        let ev = FnEvaluator {
            d: 2,
            nr: 2,
            nc: 2,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |_: &[f64], out: &mut [f64]| out.fill(5.0),
        };
        let (_, artifacts) =
            saltelli_maps_retaining(&ev, &unit_marginals(2), 100, 3, 32).unwrap();
        let sd = bootstrap_sd(&artifacts, 50, 1).unwrap();
        for i in 0..2 {
            assert!(sd.first_order[i].values().iter().all(|&v| v == 0.0));
            assert!(sd.total[i].values().iter().all(|&v| v == 0.0));
        }
        assert!(bootstrap_sd(&artifacts, 1, 1).is_err());
    }

    #[test]
    fn bootstrap_sd_tracks_repeat_run_sd() {
        // oracle: empirical SD of the estimator over independent seeds
        let ev = additive_evaluator(2);
        let marginals = unit_marginals(2);
        let n = 2000;
        let mut estimates = Vec::new();
        for seed in 0..24 {
            let m = saltelli_maps(&ev, &marginals, n, 1000 + seed, 256).unwrap();
            estimates.push(m.first_order[0].values()[0]);
        }
        let empirical = sd(&estimates);
        let (_, artifacts) = saltelli_maps_retaining(&ev, &marginals, n, 1000, 256).unwrap();
        let boot = bootstrap_sd(&artifacts, 200, 5).unwrap();
        let b = boot.first_order[0].values()[0];
        assert!(
            b / empirical < 1.6 && empirical / b < 1.6,
            "bootstrap {b} vs empirical {empirical}"
        );
    }

    #[test]
    fn doubleloop_single_variable() {
        let ev = single_input_evaluator(2);
        let counting = CountingEvaluator::new(&ev);
        // the nested estimator's total-index arm is biased down by roughly
        // Var_inner/(n_inner Var(Y)); keep the inner budget large enough to
        // hold that under a percent
        let budget = DoubleLoopBudget {
            first_order_outer: 2000,
            first_order_inner: 10,
            total_outer: 2000,
            total_inner: 100,
            variance_samples: 20_000,
        };
        let maps = doubleloop_maps(&counting, &unit_marginals(2), &budget, 17).unwrap();
        assert_eq!(counting.count(), budget.eval_count(2));
        let s1 = maps.first_order[0].grid_mean();
        let t1 = maps.total[0].grid_mean();
        let t2 = maps.total[1].grid_mean();
        assert!((s1 - 1.0).abs() <= 0.05, "S1 = {s1}");
        assert!((t1 - 1.0).abs() <= 0.05, "ST1 = {t1}");
        assert!(t2.abs() <= 0.05, "ST2 = {t2}");
    }

    #[test]
    fn estimators_agree_on_additive_function() {
        let ev = additive_evaluator(3);
        let marginals = unit_marginals(3);
        let saltelli = saltelli_maps(&ev, &marginals, 20_000, 23, 256).unwrap();
        let budget = DoubleLoopBudget {
            first_order_outer: 300,
            first_order_inner: 150,
            total_outer: 300,
            total_inner: 150,
            variance_samples: 20_000,
        };
        let dl = doubleloop_maps(&ev, &marginals, &budget, 29).unwrap();
        for i in 0..3 {
            for z in 0..16 {
                let a = saltelli.first_order[i].values()[z];
                let b = dl.first_order[i].values()[z];
                assert!((a - b).abs() <= 0.05, "S_{i}[{z}]: {a} vs {b}");
                let a = saltelli.total[i].values()[z];
                let b = dl.total[i].values()[z];
                assert!((a - b).abs() <= 0.05, "ST_{i}[{z}]: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rmae_basics() {
        let a = GridField::new(2, 2, (0.0, 1.0), (0.0, 1.0), vec![0.5; 4]).unwrap();
        assert_eq!(rmae(&a, &a).unwrap(), 0.0);
        let b = GridField::new(2, 2, (0.0, 1.0), (0.0, 1.0), vec![0.6; 4]).unwrap();
        let r = rmae(&b, &a).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        let zero = GridField::new(2, 2, (0.0, 1.0), (0.0, 1.0), vec![0.0; 4]).unwrap();
        assert!(matches!(rmae(&b, &zero), Err(Error::ZeroMeanReference)));
    }

    #[test]
    fn nan_evaluations_poison_and_are_counted() {
        let ev = FnEvaluator {
            d: 2,
            nr: 2,
            nc: 2,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |x: &[f64], out: &mut [f64]| {
                out.fill(x[0]);
                if x[1] > 0.95 {
                    out[3] = f64::NAN; // pixel 3 occasionally fails
                }
            },
        };
        let maps = saltelli_maps(&ev, &unit_marginals(2), 500, 31, 64).unwrap();
        assert_eq!(maps.meta.nan_pixels, 1);
        assert!(maps.first_order[0].values()[3].is_nan());
        assert!(maps.first_order[0].values()[0].is_finite());
    }

    #[test]
    fn evaluator_failure_reports_offending_point() {
        let ev = FnEvaluator {
            d: 1,
            nr: 2,
            nc: 2,
            z1_range: (0.0, 1.0),
            z2_range: (0.0, 1.0),
            f: |_: &[f64], out: &mut [f64]| out.fill(0.0),
        };
        // wrap with an evaluator that rejects x > 0.9
        struct Failing<'a>(&'a dyn MapEvaluator);
        impl MapEvaluator for Failing<'_> {
            fn input_dim(&self) -> usize {
                self.0.input_dim()
            }
            fn grid_geometry(&self) -> (usize, usize, (f64, f64), (f64, f64)) {
                self.0.grid_geometry()
            }
            fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
                if x[0] > 0.9 {
                    return Err(Error::Domain("x out of supported range".into()));
                }
                self.0.evaluate_into(x, out)
            }
        }
        let failing = Failing(&ev);
        let err = saltelli_maps(&failing, &unit_marginals(1), 200, 3, 32).unwrap_err();
        match err {
            Error::EvaluatorFailed { x, .. } => assert!(x[0] > 0.9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
