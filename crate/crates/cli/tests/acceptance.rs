//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS/FAIL` line (run with `--nocapture` to see them).
//!
//! Every tolerance is pinned in code. Criterion 5's two quantitative
//! thresholds are implemented exactly as specified; measured values are
//! printed either way.
//!
//! Run: `cargo test -p sobolmap-cli --test acceptance -- --nocapture`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use sobolmap::campbell2d::{self, Campbell2dEvaluator, Campbell2dGrid, OracleQuad};
use sobolmap::designs::{self, MarginalDistribution};
use sobolmap::field::{FieldEnsemble, GridField};
use sobolmap::funcmeta::{
    convergence_study, fit_functional_metamodel, q2, FunctionalMetamodel, MetamodelOptions, Method,
};
use sobolmap::gp::{fit_gp, GpOptions};
use sobolmap::sobol::{
    bootstrap_sd, doubleloop_maps, rmae, saltelli_maps, saltelli_maps_retaining,
    CountingEvaluator, DoubleLoopBudget, FnEvaluator, SensitivityMaps,
};
use sobolmap::wavelet::{dwt2, idwt2, WaveletFamily, WaveletSpec};

fn pass(n: usize, detail: String) {
    println!("criterion {n}: PASS — {detail}");
}

fn fail(n: usize, detail: String) -> ! {
    println!("criterion {n}: FAIL — {detail}");
    panic!("criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Wavelet round-trip: 100 random 64x64 fields, {haar, db4} x {1, full};
//    max-abs error < 1e-10, Parseval relative error < 1e-9, < 10 s.
// ---------------------------------------------------------------------------
#[test]
fn criterion_01_wavelet_roundtrip() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let specs = [
        WaveletSpec::new(WaveletFamily::Haar, 1).unwrap(),
        WaveletSpec::full_depth(WaveletFamily::Haar, 64, 64).unwrap(),
        WaveletSpec::new(WaveletFamily::Daubechies(4), 1).unwrap(),
        WaveletSpec::full_depth(WaveletFamily::Daubechies(4), 64, 64).unwrap(),
    ];
    let mut worst_rt = 0.0f64;
    let mut worst_parseval = 0.0f64;
    for _ in 0..100 {
        let field = GridField::new(
            64,
            64,
            (0.0, 1.0),
            (0.0, 1.0),
            (0..4096).map(|_| (rng.gen::<f64>() - 0.5) * 2e3).collect(),
        )
        .unwrap();
        let energy: f64 = field.values().iter().map(|v| v * v).sum();
        for spec in &specs {
            let dec = dwt2(&field, spec).unwrap();
            let coeff_energy: f64 = dec.coeffs().iter().map(|v| v * v).sum();
            worst_parseval = worst_parseval.max(((energy - coeff_energy) / energy).abs());
            let back = idwt2(&dec).unwrap();
            let err = field
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_rt = worst_rt.max(err);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if worst_rt >= 1e-10 {
        fail(1, format!("round-trip max-abs {worst_rt:.3e} >= 1e-10"));
    }
    if worst_parseval >= 1e-9 {
        fail(1, format!("Parseval relative error {worst_parseval:.3e} >= 1e-9"));
    }
    if elapsed >= 10.0 {
        fail(1, format!("runtime {elapsed:.1} s >= 10 s"));
    }
    pass(
        1,
        format!(
            "400 transforms: round-trip {worst_rt:.2e} < 1e-10, Parseval {worst_parseval:.2e} < 1e-9 ({elapsed:.1} s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. GP interpolation: 50 random (n=30, d=8) fits with nugget 0; training
//    predictions within 1e-8 relative, kriging variance < 1e-8 sigma^2,
//    < 2 min.
// ---------------------------------------------------------------------------
#[test]
fn criterion_02_gp_interpolation() {
    let start = Instant::now();
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for fit_idx in 0..50u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(200 + fit_idx);
        let (n, d) = (30, 8);
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let options = GpOptions {
            nugget: 0.0,
            restarts: 2,
            trend_selection: false,
            seed: fit_idx,
            ..Default::default()
        };
        let model = fit_gp(&x, n, d, &y, &options).unwrap();
        for i in 0..n {
            let xp = &x[i * d..(i + 1) * d];
            let rel = (model.predict_mean(xp).unwrap() - y[i]).abs() / (1.0 + y[i].abs());
            worst_mean = worst_mean.max(rel);
            let var_rel = model.predict_var(xp).unwrap() / model.sigma2().max(1e-300);
            worst_var = worst_var.max(var_rel);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if worst_mean >= 1e-8 {
        fail(2, format!("training mean error {worst_mean:.3e} >= 1e-8 relative"));
    }
    if worst_var >= 1e-8 {
        fail(2, format!("training variance {worst_var:.3e} sigma^2 >= 1e-8 sigma^2"));
    }
    if elapsed >= 120.0 {
        fail(2, format!("runtime {elapsed:.1} s >= 120 s"));
    }
    pass(
        2,
        format!(
            "50 fits: mean error {worst_mean:.2e}, variance {worst_var:.2e} sigma^2 ({elapsed:.1} s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Saltelli sanity on the additive toy y = x1 + x2 (d = 5, iid uniform),
//    N = 10^4: |S_1 - 0.5| <= 0.02, |S_Ti - S_i| <= 0.02 for all i, exactly
//    N(d+2) evaluations, < 30 s.
// ---------------------------------------------------------------------------
#[test]
fn criterion_03_saltelli_sanity() {
    let start = Instant::now();
    let d = 5;
    let ev = FnEvaluator {
        d,
        nr: 4,
        nc: 4,
        z1_range: (0.0, 1.0),
        z2_range: (0.0, 1.0),
        f: |x: &[f64], out: &mut [f64]| out.fill(x[0] + x[1]),
    };
    let counting = CountingEvaluator::new(&ev);
    let marginals: Vec<MarginalDistribution> = (0..d)
        .map(|_| MarginalDistribution::uniform(0.0, 1.0).unwrap())
        .collect();
    let n = 10_000;
    let maps = saltelli_maps(&counting, &marginals, n, 303, 128).unwrap();
    let expect = (n * (d + 2)) as u64;
    if counting.count() != expect {
        fail(3, format!("evaluation count {} != N(d+2) = {expect}", counting.count()));
    }
    let s1 = maps.first_order[0].grid_mean();
    let s2 = maps.first_order[1].grid_mean();
    if (s1 - 0.5).abs() > 0.02 || (s2 - 0.5).abs() > 0.02 {
        fail(3, format!("S1 = {s1:.4}, S2 = {s2:.4}, expected 0.5 +- 0.02"));
    }
    let mut worst_gap = 0.0f64;
    for i in 0..d {
        let gap = (maps.total[i].grid_mean() - maps.first_order[i].grid_mean()).abs();
        worst_gap = worst_gap.max(gap);
    }
    if worst_gap > 0.02 {
        fail(3, format!("additive model but |S_Ti - S_i| reaches {worst_gap:.4} > 0.02"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        fail(3, format!("runtime {elapsed:.1} s >= 30 s"));
    }
    pass(
        3,
        format!(
            "S1 = {s1:.3}, S2 = {s2:.3}, max |S_Ti - S_i| = {worst_gap:.3}, {expect} evaluations ({elapsed:.1} s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Analytic first-order oracle vs brute-force nested Monte Carlo at 16
//    random pixels (budgets: 200 conditioning values x 1000 inner draws,
//    Var(Y) from 2e4 draws) within 0.02 for i != 5; S_5 = 0 and S_8 = S_6
//    exactly, < 10 min.
// ---------------------------------------------------------------------------
#[test]
fn criterion_04_oracle_vs_brute_force() {
    let start = Instant::now();
    let grid = Campbell2dGrid::default64();
    let quad = OracleQuad {
        gl_nodes: 64,
        var_mc_samples: 400_000,
        seed: 404,
    };
    let var_y = campbell2d::variance_field_mc(&grid, quad.var_mc_samples, 405).unwrap();

    let s5 = campbell2d::analytic_first_order_with_variance(5, &grid, &quad, &var_y).unwrap();
    if !s5.values().iter().all(|&v| v == 0.0) {
        fail(4, "S_5 is not identically zero".to_string());
    }
    let s6 = campbell2d::analytic_first_order_with_variance(6, &grid, &quad, &var_y).unwrap();
    let s8 = campbell2d::analytic_first_order_with_variance(8, &grid, &quad, &var_y).unwrap();
    if s6.values() != s8.values() {
        fail(4, "S_8 != S_6 bit-exactly".to_string());
    }

    // independent oracle: nested MC written from the definition of Eq. (1)
    fn brute_first_order(i: usize, z1: f64, z2: f64, seed: u64) -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut draw = |rng: &mut ChaCha12Rng, j: usize| loop {
            let v = -1.0 + 6.0 * rng.gen::<f64>();
            if (j == 0 || j == 4) && v == 0.0 {
                continue;
            }
            return v;
        };
        let (outer, inner, nvar) = (200, 1000, 20_000);
        let mut means = Vec::with_capacity(outer);
        let mut x = [0.0f64; 8];
        for _ in 0..outer {
            let xi = draw(&mut rng, i - 1);
            let mut acc = 0.0;
            for _ in 0..inner {
                for (j, v) in x.iter_mut().enumerate() {
                    *v = draw(&mut rng, j);
                }
                x[i - 1] = xi;
                acc += campbell2d::eval_at(&x, z1, z2);
            }
            means.push(acc / inner as f64);
        }
        let m = means.iter().sum::<f64>() / outer as f64;
        let v_i = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (outer as f64 - 1.0);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..nvar {
            for (j, v) in x.iter_mut().enumerate() {
                *v = draw(&mut rng, j);
            }
            let y = campbell2d::eval_at(&x, z1, z2);
            s += y;
            s2 += y * y;
        }
        let var_y = (s2 - s * s / nvar as f64) / (nvar as f64 - 1.0);
        v_i / var_y
    }

    let mut pix_rng = ChaCha12Rng::seed_from_u64(406);
    let pixels: Vec<(usize, usize)> = (0..16)
        .map(|_| (pix_rng.gen_range(0..64), pix_rng.gen_range(0..64)))
        .collect();

    use rayon::prelude::*;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for &i in &[1usize, 2, 3, 4, 6, 7, 8] {
        let analytic = campbell2d::analytic_first_order_with_variance(i, &grid, &quad, &var_y).unwrap();
        let diffs: Vec<(f64, usize, usize)> = pixels
            .par_iter()
            .map(|&(r, c)| {
                let brute = brute_first_order(
                    i,
                    grid.z1(r),
                    grid.z2(c),
                    40_000 + (i * 4096 + r * 64 + c) as u64,
                );
                ((analytic.get(r, c) - brute).abs(), r, c)
            })
            .collect();
        for (diff, r, c) in diffs {
            if diff > worst {
                worst = diff;
                worst_at = format!("S_{i} at pixel ({r},{c})");
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if worst > 0.02 {
        fail(4, format!("max |analytic - brute| = {worst:.4} > 0.02 ({worst_at})"));
    }
    if elapsed >= 600.0 {
        fail(4, format!("runtime {elapsed:.1} s >= 600 s"));
    }
    pass(
        4,
        format!(
            "7 indices x 16 pixels: max |analytic - brute| = {worst:.4} <= 0.02; S_5 = 0, S_8 = S_6 exact ({elapsed:.0} s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Direct total-index reference at N = 10^4: grid-mean S_T5 < 0.02 and
//    X2's best corner quadrant > 2x the mean elsewhere.
//
//    Both thresholds are implemented exactly as stated. Note that the
//    function's own analytics put X5's total effect near 0.08 on average
//    (X5 interacts with X3 and X6 even though its first-order index is 0),
//    and X2's influence, while corner-peaked, sits on a broad global
//    contribution; the measured values are printed alongside the verdict.
// ---------------------------------------------------------------------------
#[test]
fn criterion_05_fig2_structure() {
    let start = Instant::now();
    let grid = Campbell2dGrid::default64();
    let evaluator = Campbell2dEvaluator { grid };
    let maps = saltelli_maps(&evaluator, &campbell2d::marginals(), 10_000, 505, 64).unwrap();

    let st5_mean = maps.total[4].grid_mean();
    let st2 = &maps.total[1];
    let mut quadrant_means = [0.0f64; 4];
    for (q, (r0, c0)) in [(0usize, 0usize), (0, 32), (32, 0), (32, 32)].iter().enumerate() {
        let mut acc = 0.0;
        for r in *r0..r0 + 32 {
            for c in *c0..c0 + 32 {
                acc += st2.get(r, c);
            }
        }
        quadrant_means[q] = acc / 1024.0;
    }
    let best = quadrant_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total_mean = st2.grid_mean();
    let rest = (total_mean * 4096.0 - best * 1024.0) / 3072.0;
    let ratio = best / rest;
    let elapsed = start.elapsed().as_secs_f64();

    println!(
        "criterion 5: measured grid-mean S_T5 = {st5_mean:.4} (threshold < 0.02), \
         S_T2 corner-quadrant ratio = {ratio:.2} (threshold > 2) ({elapsed:.0} s)"
    );

    // optional long run at the published precision scale
    if std::env::var("SOBOLMAP_LONG_RUN").is_ok() {
        let t = Instant::now();
        let (maps_hi, artifacts) =
            saltelli_maps_retaining(&evaluator, &campbell2d::marginals(), 100_000, 506, 32).unwrap();
        let sd = bootstrap_sd(&artifacts, 100, 507).unwrap();
        let mean_sd: f64 = sd.total.iter().map(|m| m.grid_mean()).sum::<f64>() / 8.0;
        println!(
            "criterion 5 (long run): N = 1e5, mean bootstrap SD = {mean_sd:.2e}, \
             grid-mean S_T5 = {:.4} ({:.0} s)",
            maps_hi.total[4].grid_mean(),
            t.elapsed().as_secs_f64()
        );
    }

    let mut failures = Vec::new();
    if st5_mean >= 0.02 {
        failures.push(format!("grid-mean S_T5 = {st5_mean:.4} >= 0.02"));
    }
    if ratio <= 2.0 {
        failures.push(format!("S_T2 corner ratio = {ratio:.2} <= 2"));
    }
    if !failures.is_empty() {
        fail(5, failures.join("; "));
    }
    pass(5, format!("S_T5 mean {st5_mean:.4} < 0.02; S_T2 corner ratio {ratio:.2} > 2"));
}

// ---------------------------------------------------------------------------
// Shared helpers for the metamodel criteria.
// ---------------------------------------------------------------------------

fn campbell_ensemble_maximin(n: usize, sweeps: usize, seed: u64, grid: &Campbell2dGrid) -> FieldEnsemble {
    let design = designs::maximin_lhs(n, 8, sweeps, seed)
        .unwrap()
        .with_marginals(campbell2d::marginals())
        .unwrap();
    let native = designs::scale(&design);
    let fields: Vec<GridField> = (0..n)
        .map(|i| campbell2d::eval(&native[i * 8..(i + 1) * 8], grid).unwrap())
        .collect();
    FieldEnsemble::new(design, fields).unwrap()
}

fn campbell_ensemble_iid(n: usize, seed: u64, grid: &Campbell2dGrid) -> FieldEnsemble {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut points = vec![0.0; n * 8];
    for v in points.iter_mut() {
        *v = rng.gen::<f64>();
    }
    let design = designs::InputDesign::from_unit_points(points, n, 8, campbell2d::marginals()).unwrap();
    let native = designs::scale(&design);
    let fields: Vec<GridField> = (0..n)
        .map(|i| campbell2d::eval(&native[i * 8..(i + 1) * 8], grid).unwrap())
        .collect();
    FieldEnsemble::new(design, fields).unwrap()
}

fn paper_options(seed: u64) -> MetamodelOptions {
    MetamodelOptions {
        gp: GpOptions {
            trend_selection: true,
            restarts: 3,
            ..Default::default()
        },
        fallback: false,
        seed,
    }
}

fn fit_paper_metamodel(ensemble: &FieldEnsemble, seed: u64) -> FunctionalMetamodel {
    let f = &ensemble.fields()[0];
    let spec = WaveletSpec::full_depth(WaveletFamily::Daubechies(4), f.nr(), f.nc()).unwrap();
    fit_functional_metamodel(
        ensemble,
        &spec,
        Method::GpLinearMean,
        30,
        500,
        &paper_options(seed),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 6. Metamodel predictivity: maximin LHS, db4, method 3, k = 30, k' = 500;
//    Q2 >= 0.88 at n = 200 and Q2 >= 0.93 at n = 500 against a 1000-map
//    test sample, < 2 h.
// ---------------------------------------------------------------------------
#[test]
fn criterion_06_metamodel_predictivity() {
    let start = Instant::now();
    let grid = Campbell2dGrid::default64();
    let test = campbell_ensemble_iid(1000, 600, &grid);

    let ens200 = campbell_ensemble_maximin(200, 10, 601, &grid);
    let meta200 = fit_paper_metamodel(&ens200, 602);
    let q2_200 = q2(&meta200, &test).unwrap();

    let ens500 = campbell_ensemble_maximin(500, 10, 603, &grid);
    let meta500 = fit_paper_metamodel(&ens500, 604);
    let q2_500 = q2(&meta500, &test).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    if q2_200 < 0.88 {
        fail(6, format!("Q2(n=200) = {q2_200:.4} < 0.88"));
    }
    if q2_500 < 0.93 {
        fail(6, format!("Q2(n=500) = {q2_500:.4} < 0.93"));
    }
    if elapsed >= 7200.0 {
        fail(6, format!("runtime {elapsed:.0} s >= 7200 s"));
    }
    pass(
        6,
        format!("Q2(n=200) = {q2_200:.4} >= 0.88, Q2(n=500) = {q2_500:.4} >= 0.93 ({elapsed:.0} s)"),
    );
}

// ---------------------------------------------------------------------------
// 7. Method ordering at n = 200, k = 30, paired seeds:
//    MSE(3) <= MSE(1) <= MSE(2), and method 3's MSE at k = 30 within 10% of
//    its MSE at k = 50.
// ---------------------------------------------------------------------------
#[test]
fn criterion_07_method_ordering() {
    let start = Instant::now();
    let grid = Campbell2dGrid::default64();
    let ensemble = campbell_ensemble_maximin(200, 10, 701, &grid);
    let test = campbell_ensemble_iid(400, 702, &grid);
    let spec = WaveletSpec::full_depth(WaveletFamily::Daubechies(4), 64, 64).unwrap();
    let study = convergence_study(
        &ensemble,
        &test,
        &[30, 50],
        &[200],
        &[Method::GpMean, Method::LinearMean, Method::GpLinearMean],
        &spec,
        500,
        0.05,
        &paper_options(703),
    )
    .unwrap();
    let mse_of = |m: Method, k: usize| -> f64 {
        study
            .entries
            .iter()
            .find(|e| e.method == m && e.k == k)
            .map(|e| e.mse)
            .unwrap()
    };
    let m1 = mse_of(Method::GpMean, 30);
    let m2 = mse_of(Method::LinearMean, 30);
    let m3 = mse_of(Method::GpLinearMean, 30);
    let m3_50 = mse_of(Method::GpLinearMean, 50);
    let elapsed = start.elapsed().as_secs_f64();
    if !(m3 <= m1 && m1 <= m2) {
        fail(
            7,
            format!("ordering violated: MSE(3) = {m3:.4}, MSE(1) = {m1:.4}, MSE(2) = {m2:.4}"),
        );
    }
    let plateau = (m3 - m3_50).abs() / m3_50;
    if plateau > 0.10 {
        fail(
            7,
            format!("method 3 MSE at k=30 ({m3:.4}) differs from k=50 ({m3_50:.4}) by {:.1}% > 10%", plateau * 100.0),
        );
    }
    pass(
        7,
        format!(
            "MSE(3) = {m3:.3} <= MSE(1) = {m1:.3} <= MSE(2) = {m2:.3}; k30/k50 gap {:.1}% ({elapsed:.0} s)",
            plateau * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Table-1 reproduction: metamodel-based first-order maps via the nested
//    estimator (200x1000 / 1000x100 / 2e4 budgets) give rMAE within +-8
//    percentage points of {8.75, 16.25, 16.35, 12.8, -, 13.17, 11.80, 9.96}%
//    for i in {1,2,3,4,6,7,8}; passes for >= 2 of 3 seeds.
// ---------------------------------------------------------------------------
#[test]
fn criterion_08_table1_rmae() {
    let start = Instant::now();
    let grid = Campbell2dGrid::default64();
    let quad = OracleQuad {
        gl_nodes: 64,
        var_mc_samples: 400_000,
        seed: 800,
    };
    let var_y = campbell2d::variance_field_mc(&grid, quad.var_mc_samples, 801).unwrap();
    let reference: Vec<(usize, GridField)> = [1usize, 2, 3, 4, 6, 7, 8]
        .iter()
        .map(|&i| {
            (
                i,
                campbell2d::analytic_first_order_with_variance(i, &grid, &quad, &var_y).unwrap(),
            )
        })
        .collect();
    let table1 = [
        (1usize, 8.75f64),
        (2, 16.25),
        (3, 16.35),
        (4, 12.8),
        (6, 13.17),
        (7, 11.80),
        (8, 9.96),
    ];

    let mut seed_pass = 0;
    let mut details = Vec::new();
    for (s, design_seed) in [(0u64, 810u64), (1, 820), (2, 830)] {
        let ensemble = campbell_ensemble_maximin(200, 10, design_seed, &grid);
        let meta = fit_paper_metamodel(&ensemble, design_seed + 1);
        let maps = doubleloop_maps(
            &meta,
            &campbell2d::marginals(),
            &DoubleLoopBudget::default(),
            design_seed + 2,
        )
        .unwrap();
        let mut ok = true;
        let mut line = format!("seed {s}:");
        for (i, expect_pct) in table1 {
            let est = &maps.first_order[i - 1];
            let reference_map = &reference.iter().find(|(j, _)| *j == i).unwrap().1;
            let r = 100.0 * rmae(est, reference_map).unwrap();
            line.push_str(&format!(" rMAE(S{i}) = {r:.2}%"));
            if (r - expect_pct).abs() > 8.0 {
                ok = false;
                line.push_str("(out)");
            }
        }
        if ok {
            seed_pass += 1;
        }
        details.push(line);
    }
    let elapsed = start.elapsed().as_secs_f64();
    for line in &details {
        println!("criterion 8 detail: {line}");
    }
    if seed_pass < 2 {
        fail(8, format!("only {seed_pass}/3 seeds inside the +-8pp band ({elapsed:.0} s)"));
    }
    pass(8, format!("{seed_pass}/3 seeds inside +-8pp of Table 1 ({elapsed:.0} s)"));
}

// ---------------------------------------------------------------------------
// 9. Pointwise index laws on produced maps with bootstrap SDs:
//    S_Ti >= S_i - 3 SD and sum_i S_i <= 1 + 3 pooled SD at >= 99% of pixels.
// ---------------------------------------------------------------------------
fn index_laws(maps: &SensitivityMaps, sd_first: &[GridField], sd_total: &[GridField]) -> (f64, f64) {
    let d = maps.first_order.len();
    let nz = maps.first_order[0].len();
    let mut ok_order = 0usize;
    let mut ok_sum = 0usize;
    for z in 0..nz {
        let mut order_fine = true;
        let mut sum_s = 0.0;
        let mut pooled_var = 0.0;
        for i in 0..d {
            let s = maps.first_order[i].values()[z];
            let t = maps.total[i].values()[z];
            let sd_i = sd_first[i].values()[z].max(sd_total[i].values()[z]);
            if t < s - 3.0 * sd_i {
                order_fine = false;
            }
            sum_s += s;
            pooled_var += sd_first[i].values()[z].powi(2);
        }
        if order_fine {
            ok_order += 1;
        }
        if sum_s <= 1.0 + 3.0 * pooled_var.sqrt() {
            ok_sum += 1;
        }
    }
    (ok_order as f64 / nz as f64, ok_sum as f64 / nz as f64)
}

#[test]
fn criterion_09_pointwise_index_laws() {
    let start = Instant::now();
    // additive toy with retained rows
    let d = 5;
    let ev = FnEvaluator {
        d,
        nr: 8,
        nc: 8,
        z1_range: (0.0, 1.0),
        z2_range: (0.0, 1.0),
        f: |x: &[f64], out: &mut [f64]| {
            for (p, o) in out.iter_mut().enumerate() {
                let w = p as f64 / 64.0;
                *o = x[0] + x[1] * (1.0 + w) + 0.5 * x[2] * w;
            }
        },
    };
    let marginals: Vec<MarginalDistribution> = (0..d)
        .map(|_| MarginalDistribution::uniform(0.0, 1.0).unwrap())
        .collect();
    let (toy_maps, toy_art) = saltelli_maps_retaining(&ev, &marginals, 10_000, 901, 256).unwrap();
    let toy_sd = bootstrap_sd(&toy_art, 200, 902).unwrap();
    let (toy_order, toy_sum) = index_laws(&toy_maps, &toy_sd.first_order, &toy_sd.total);

    // Campbell2D direct, moderate N with retained rows
    let grid = Campbell2dGrid::default64();
    let evaluator = Campbell2dEvaluator { grid };
    let (camp_maps, camp_art) =
        saltelli_maps_retaining(&evaluator, &campbell2d::marginals(), 2000, 903, 64).unwrap();
    let camp_sd = bootstrap_sd(&camp_art, 100, 904).unwrap();
    let (camp_order, camp_sum) = index_laws(&camp_maps, &camp_sd.first_order, &camp_sd.total);

    let elapsed = start.elapsed().as_secs_f64();
    for (name, frac) in [
        ("toy S_Ti >= S_i - 3SD", toy_order),
        ("toy sum S_i <= 1 + 3SD", toy_sum),
        ("campbell S_Ti >= S_i - 3SD", camp_order),
        ("campbell sum S_i <= 1 + 3SD", camp_sum),
    ] {
        if frac < 0.99 {
            fail(9, format!("{name} holds at only {:.2}% of pixels", frac * 100.0));
        }
    }
    pass(
        9,
        format!(
            "index laws hold at {:.1}%/{:.1}% (toy) and {:.1}%/{:.1}% (campbell) of pixels ({elapsed:.0} s)",
            toy_order * 100.0,
            toy_sum * 100.0,
            camp_order * 100.0,
            camp_sum * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Reproducibility: every CLI stage rerun with identical config and seed
//     yields byte-identical numeric artifacts.
// ---------------------------------------------------------------------------
#[test]
fn criterion_10_cli_reproducibility() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let bounds = dir.path().join("bounds.csv");
    let mut text = String::from("lower,upper\n");
    for _ in 0..8 {
        text.push_str("-1,5\n");
    }
    std::fs::write(&bounds, text).unwrap();

    let make_cfg = |out: &std::path::Path| {
        format!(
            r#"
[run]
stages = design eval fit validate sobol plot
seed = 1010
out = {out}

[design]
n = 24
d = 8
maximin_sweeps = 4
bounds = {bounds}

[eval]
model = campbell2d
nr = 16
nc = 16

[fit]
method = 3
k = 4
k_prime = 8
restarts = 2

[validate]
folds = 4

[sobol]
estimator = saltelli
n = 256
batch = 64
bootstrap = 50
"#,
            out = out.display(),
            bounds = bounds.display()
        )
    };

    let mut listings = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let cfg = dir.path().join(format!("cfg{run}.ini"));
        std::fs::write(&cfg, make_cfg(&out)).unwrap();
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sobolmap"))
            .args(["pipeline", "--config", cfg.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        // collect numeric artifacts (metadata files with runtimes excluded)
        let mut files = Vec::new();
        let mut stack = vec![out.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                    continue;
                }
                let rel = path.strip_prefix(&out).unwrap().display().to_string();
                if rel == "run_info.txt" || rel.ends_with("sobol_meta.txt") {
                    continue;
                }
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
        files.sort_by(|a, b| a.0.cmp(&b.0));
        listings.push(files);
    }
    let (a, b) = (&listings[0], &listings[1]);
    if a.len() != b.len() {
        fail(10, format!("artifact counts differ: {} vs {}", a.len(), b.len()));
    }
    let mut checked = 0;
    for ((na, ba), (nb, bb)) in a.iter().zip(b) {
        if na != nb {
            fail(10, format!("artifact sets differ: {na} vs {nb}"));
        }
        if ba != bb {
            fail(10, format!("artifact {na} is not byte-identical across reruns"));
        }
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass(10, format!("{checked} artifacts byte-identical across reruns ({elapsed:.0} s)"));
}
