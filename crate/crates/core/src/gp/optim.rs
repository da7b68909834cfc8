//! Box-constrained Nelder-Mead simplex minimizer.
//!
//! Derivative-free local search used for the concentrated-likelihood
//! optimization. Candidate points are clamped into the box, so every
//! evaluation stays feasible. Fully deterministic for a given start.

pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub ftol: f64,
    pub initial_step: f64, // fraction of each box edge
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 300,
            ftol: 1e-9,
            initial_step: 0.15,
        }
    }
}

pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimize `f` from `x0` inside `bounds`.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // initial simplex: x0 plus one step along each axis, stepping inward
    // when x0 sits at the boundary
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp(&mut start, bounds);
    simplex.push(start.clone());
    for i in 0..dim {
        let (lo, hi) = bounds[i];
        let step = (hi - lo) * opts.initial_step;
        let mut v = start.clone();
        v[i] = if start[i] + step <= hi {
            start[i] + step
        } else {
            start[i] - step
        };
        clamp(&mut v, bounds);
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    while evals < opts.max_evals {
        // order ascending by f
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let frender: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = reorder;
        fvals = frender;

        let best = fvals[0];
        let worst = fvals[dim];
        if (worst - best).abs() <= opts.ftol * (1.0 + best.abs()) {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; dim];
        for v in simplex.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let point = |t: f64| -> Vec<f64> {
            let mut v: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut v, bounds);
            v
        };

        let xr = point(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < fvals[0] {
            let xe = point(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[dim] = xe;
                fvals[dim] = fe;
            } else {
                simplex[dim] = xr;
                fvals[dim] = fr;
            }
        } else if fr < fvals[dim - 1] {
            simplex[dim] = xr;
            fvals[dim] = fr;
        } else {
            // contraction: outside if reflection helped over worst, else inside
            let (xc, fc) = if fr < fvals[dim] {
                let xc = point(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = point(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fvals[dim].min(fr) {
                simplex[dim] = xc;
                fvals[dim] = fc;
            } else {
                // shrink toward the best vertex
                let best_v = simplex[0].clone();
                for i in 1..=dim {
                    for (x, b) in simplex[i].iter_mut().zip(&best_v) {
                        *x = b + sigma * (*x - b);
                    }
                    clamp(&mut simplex[i], bounds);
                    fvals[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }

    let mut best_i = 0;
    for i in 1..=dim {
        if fvals[i] < fvals[best_i] {
            best_i = i;
        }
    }
    NelderMeadResult {
        x: simplex[best_i].clone(),
        fx: fvals[best_i],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_in_box() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.2).powi(2);
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let r = minimize(f, &[0.9, 0.9], &bounds, &NelderMeadOptions::default());
        assert!((r.x[0] - 0.3).abs() < 1e-4);
        assert!((r.x[1] + 0.2).abs() < 1e-4);
    }

    #[test]
    fn respects_bounds_when_minimum_outside() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2);
        let bounds = [(-1.0, 1.0)];
        let r = minimize(f, &[0.0], &bounds, &NelderMeadOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_improvement_over_start() {
        let f = |x: &[f64]| x.iter().map(|v| v.cos() + v * v).sum::<f64>();
        let bounds = [(-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0)];
        let x0 = [2.0, -2.5, 1.0];
        let f0 = f(&x0);
        let r = minimize(f, &x0, &bounds, &NelderMeadOptions::default());
        assert!(r.fx <= f0);
    }
}
