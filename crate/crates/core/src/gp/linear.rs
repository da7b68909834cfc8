//! The two cheap per-coefficient models: the empirical mean and ordinary
//! least squares with stepwise AIC term selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::TrendModel;

/// Empirical mean of the responses.
pub fn fit_mean(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("fit_mean on empty data".into()));
    }
    Ok(y.iter().sum::<f64>() / y.len() as f64)
}

/// Ordinary least squares on the given terms (plus intercept). Returns the
/// fitted model and the residual sum of squares.
pub fn fit_linear_terms(
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    terms: &[usize],
) -> Result<(TrendModel, f64)> {
    if x.len() != n * d || y.len() != n {
        return Err(Error::DimensionMismatch("fit_linear_terms shapes".into()));
    }
    let q = terms.len() + 1;
    if n < q {
        return Err(Error::InvalidArgument(format!(
            "need n >= {q} observations for {} terms",
            terms.len()
        )));
    }
    let mut f = DMatrix::<f64>::zeros(n, q);
    for i in 0..n {
        f[(i, 0)] = 1.0;
        for (k, &t) in terms.iter().enumerate() {
            f[(i, k + 1)] = x[i * d + t];
        }
    }
    let yv = DVector::from_column_slice(y);
    let svd = f.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin / smax < 1e-12 {
        return Err(Error::RankDeficient(format!(
            "condition {:e} in OLS with terms {terms:?}",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let beta = svd
        .solve(&yv, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let resid = &yv - &f * &beta;
    let rss = resid.dot(&resid);
    Ok((
        TrendModel {
            intercept: beta[0],
            terms: terms.to_vec(),
            coefficients: beta.as_slice()[1..].to_vec(),
        },
        rss,
    ))
}

fn aic(n: usize, rss: f64, n_params: usize, rss_floor: f64) -> f64 {
    // n ln(RSS/n) + 2 (#params). RSS is floored at a tiny fraction of the
    // total sum of squares: below that the fit is exact up to round-off and
    // ln(RSS) would reward whichever model happens to have smaller fp noise.
    let nf = n as f64;
    nf * (rss.max(rss_floor) / nf).ln() + 2.0 * n_params as f64
}

/// Linear regression with stepwise (forward then backward) AIC selection.
///
/// Starts from the intercept-only model, greedily adds the term whose
/// addition lowers AIC the most, then prunes terms whose removal lowers AIC,
/// repeating until no move improves.
pub fn fit_linear_aic(x: &[f64], n: usize, d: usize, y: &[f64]) -> Result<TrendModel> {
    if x.len() != n * d || y.len() != n {
        return Err(Error::DimensionMismatch("fit_linear_aic shapes".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "fit_linear_aic needs at least two observations".into(),
        ));
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let rss_floor = 1e-20 * tss.max(f64::MIN_POSITIVE);

    let mut selected: Vec<usize> = Vec::new();
    let (mut best_model, rss0) = fit_linear_terms(x, n, d, y, &selected)?;
    let mut best_aic = aic(n, rss0, 1, rss_floor);

    // alternate forward/backward passes until neither improves
    loop {
        let mut moved = false;

        // forward
        loop {
            let mut cand: Option<(usize, TrendModel, f64)> = None;
            for t in 0..d {
                if selected.contains(&t) || selected.len() + 2 > n {
                    continue;
                }
                let mut trial = selected.clone();
                trial.push(t);
                trial.sort_unstable();
                if let Ok((m, rss)) = fit_linear_terms(x, n, d, y, &trial) {
                    let a = aic(n, rss, trial.len() + 1, rss_floor);
                    if a < best_aic && cand.as_ref().map_or(true, |c| a < c.2) {
                        cand = Some((t, m, a));
                    }
                }
            }
            match cand {
                Some((t, m, a)) => {
                    selected.push(t);
                    selected.sort_unstable();
                    best_model = m;
                    best_aic = a;
                    moved = true;
                }
                None => break,
            }
        }

        // backward
        loop {
            let mut cand: Option<(usize, TrendModel, f64)> = None;
            for (pos, _) in selected.iter().enumerate() {
                let mut trial = selected.clone();
                trial.remove(pos);
                if let Ok((m, rss)) = fit_linear_terms(x, n, d, y, &trial) {
                    let a = aic(n, rss, trial.len() + 1, rss_floor);
                    if a < best_aic && cand.as_ref().map_or(true, |c| a < c.2) {
                        cand = Some((pos, m, a));
                    }
                }
            }
            match cand {
                Some((pos, m, a)) => {
                    selected.remove(pos);
                    best_model = m;
                    best_aic = a;
                    moved = true;
                }
                None => break,
            }
        }

        if !moved {
            break;
        }
    }
    Ok(best_model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn mean_model() {
        assert_eq!(fit_mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(fit_mean(&[4.5]).unwrap(), 4.5);
        assert!(fit_mean(&[]).is_err());
        // zero-variance stream keeps its shared value
        assert_eq!(fit_mean(&[7.0; 12]).unwrap(), 7.0);
    }

    #[test]
    fn exact_linear_signal_recovered() {
        // y = 2 + 3 x1 with no noise: selects {x1}, coefficients (2, 3)
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let n = 20;
        let d = 3;
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 + 3.0 * x[i * d]).collect();
        let m = fit_linear_aic(&x, n, d, &y).unwrap();
        assert_eq!(m.terms, vec![0]);
        assert!((m.intercept - 2.0).abs() < 1e-9);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn two_signals_in_twenty_dims() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 80;
        let d = 20;
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i * d] + x[i * d + 1]).collect();
        let m = fit_linear_aic(&x, n, d, &y).unwrap();
        assert_eq!(m.terms, vec![0, 1]);
    }

    #[test]
    fn pure_noise_rarely_picks_spurious_terms() {
        // independent y: at least 90% of seeds should keep <= 1 spurious term
        let mut clean = 0;
        let trials = 40u64;
        for seed in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 60;
            let d = 3;
            let x: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let m = fit_linear_aic(&x, n, d, &y).unwrap();
            if m.terms.len() <= 1 {
                clean += 1;
            }
        }
        assert!(clean * 10 >= trials as usize * 9, "only {clean}/{trials} seeds stayed parsimonious");
    }

    #[test]
    fn rank_deficient_design_rejected() {
        // duplicated column => singular normal equations once both selected
        let n = 10;
        let d = 2;
        let mut x = vec![0.0; n * d];
        for i in 0..n {
            x[i * d] = i as f64;
            x[i * d + 1] = i as f64; // exact copy
        }
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert!(fit_linear_terms(&x, n, d, &y, &[0, 1]).is_err());
    }
}
