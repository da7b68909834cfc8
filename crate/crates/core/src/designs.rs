//! Space-filling experimental designs over the input hypercube.
//!
//! Designs are stored in the unit hypercube `[0,1]^d`; each input carries a
//! marginal distribution used by [`scale`] to map unit coordinates into
//! native units through the inverse CDF. Distances for the maximin
//! improvement are always measured in the unit hypercube, so scaling never
//! changes the design geometry.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Marginal distribution of one input variable.
///
/// `InverseCdf` is the generic hook for non-uniform marginals: a tabulated
/// quantile function, interpolated piecewise-linearly.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalDistribution {
    Uniform { lower: f64, upper: f64 },
    /// Table of `(probability, quantile)` pairs; probabilities strictly
    /// increasing from 0 to 1, quantiles non-decreasing.
    InverseCdf { table: Vec<(f64, f64)> },
}

impl MarginalDistribution {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidArgument(format!(
                "uniform marginal requires finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(MarginalDistribution::Uniform { lower, upper })
    }

    pub fn inverse_cdf(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::InvalidArgument(
                "inverse-CDF table needs at least two rows".into(),
            ));
        }
        if table.first().unwrap().0 != 0.0 || table.last().unwrap().0 != 1.0 {
            return Err(Error::InvalidArgument(
                "inverse-CDF table must start at probability 0 and end at 1".into(),
            ));
        }
        for w in table.windows(2) {
            let ((p0, q0), (p1, q1)) = (w[0], w[1]);
            if !(p0.is_finite() && p1.is_finite() && q0.is_finite() && q1.is_finite()) {
                return Err(Error::InvalidArgument("non-finite inverse-CDF entry".into()));
            }
            if p1 <= p0 {
                return Err(Error::InvalidArgument(
                    "inverse-CDF probabilities must be strictly increasing".into(),
                ));
            }
            if q1 < q0 {
                return Err(Error::InvalidArgument(
                    "inverse-CDF quantiles must be non-decreasing".into(),
                ));
            }
        }
        Ok(MarginalDistribution::InverseCdf { table })
    }

    /// Inverse CDF: maps `u` in `[0,1]` into native units.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            MarginalDistribution::Uniform { lower, upper } => lower + (upper - lower) * u,
            MarginalDistribution::InverseCdf { table } => {
                // locate segment with p0 <= u <= p1 and interpolate
                let mut lo = 0usize;
                let mut hi = table.len() - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if table[mid].0 <= u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (p0, q0) = table[lo];
                let (p1, q1) = table[hi];
                q0 + (q1 - q0) * ((u - p0) / (p1 - p0))
            }
        }
    }

    /// Forward CDF (inverse of [`quantile`]); used when reading native-unit
    /// design files back into the unit hypercube. Flat quantile segments map
    /// to their left probability edge.
    pub fn cdf(&self, value: f64) -> f64 {
        match self {
            MarginalDistribution::Uniform { lower, upper } => {
                ((value - lower) / (upper - lower)).clamp(0.0, 1.0)
            }
            MarginalDistribution::InverseCdf { table } => {
                if value <= table[0].1 {
                    return 0.0;
                }
                if value >= table[table.len() - 1].1 {
                    return 1.0;
                }
                for w in table.windows(2) {
                    let ((p0, q0), (p1, q1)) = (w[0], w[1]);
                    if value >= q0 && value <= q1 {
                        if q1 == q0 {
                            return p0;
                        }
                        return p0 + (p1 - p0) * ((value - q0) / (q1 - q0));
                    }
                }
                1.0
            }
        }
    }
}

/// An `n × d` design in the unit hypercube plus per-input marginals.
#[derive(Debug, Clone)]
pub struct InputDesign {
    points: Vec<f64>, // row-major n × d, entries in [0,1]
    n: usize,
    d: usize,
    marginals: Vec<MarginalDistribution>,
}

impl InputDesign {
    /// Build from unit-hypercube points (row-major).
    pub fn from_unit_points(
        points: Vec<f64>,
        n: usize,
        d: usize,
        marginals: Vec<MarginalDistribution>,
    ) -> Result<Self> {
        if points.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "points length {} != n*d = {}",
                points.len(),
                n * d
            )));
        }
        if marginals.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} marginals for d = {d}",
                marginals.len()
            )));
        }
        if points.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "design points must lie in [0,1]".into(),
            ));
        }
        Ok(InputDesign {
            points,
            n,
            d,
            marginals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn marginals(&self) -> &[MarginalDistribution] {
        &self.marginals
    }

    /// Replace the marginals (lengths must match).
    pub fn with_marginals(mut self, marginals: Vec<MarginalDistribution>) -> Result<Self> {
        if marginals.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "{} marginals for d = {}",
                marginals.len(),
                self.d
            )));
        }
        self.marginals = marginals;
        Ok(self)
    }

    /// Row `i` in unit coordinates.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn unit_points(&self) -> &[f64] {
        &self.points
    }

    /// Minimum pairwise Euclidean distance in the unit hypercube.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d2 = sq_dist(self.point(i), self.point(j));
                if d2 < best {
                    best = d2;
                }
            }
        }
        best.sqrt()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit_marginals(d: usize) -> Vec<MarginalDistribution> {
    (0..d)
        .map(|_| MarginalDistribution::Uniform {
            lower: 0.0,
            upper: 1.0,
        })
        .collect()
}

/// Latin hypercube sample: per column, exactly one point in each stratum
/// `[(i-1)/n, i/n)`, uniformly placed within its stratum.
///
/// The returned design carries unit-uniform marginals; attach native ones
/// with [`InputDesign::with_marginals`].
pub fn lhs(n: usize, d: usize, seed: u64) -> Result<InputDesign> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "lhs requires n >= 1 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut points = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        // Fisher-Yates shuffle of stratum assignments for this column
        for i in (1..n).rev() {
            let k = rng.gen_range(0..=i);
            perm.swap(i, k);
        }
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.gen::<f64>();
            points[i * d + j] = (stratum as f64 + u) / n as f64;
        }
    }
    InputDesign::from_unit_points(points, n, d, unit_marginals(d))
}

/// Maximin-improved Latin hypercube.
///
/// Starts from [`lhs`] with the same seed and improves it by random
/// within-column entry exchanges (which preserve the LHS property), accepting
/// a swap only when the minimum pairwise distance strictly increases. One
/// sweep proposes `n * d` exchanges. The minimum distance is therefore
/// non-decreasing across sweeps.
pub fn maximin_lhs(n: usize, d: usize, sweeps: usize, seed: u64) -> Result<InputDesign> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "maximin_lhs requires n >= 2 (min distance undefined otherwise)".into(),
        ));
    }
    let mut design = lhs(n, d, seed)?;
    let mut rng = ChaCha12Rng::seed_from_u64(crate::seeds::derive(seed, "maximin", 0));

    // squared-distance matrix and current argmin edge
    let mut d2 = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(design.point(i), design.point(j));
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    let (mut min_val, mut min_i, mut min_j) = scan_min(&d2, n);

    for _ in 0..sweeps {
        for _ in 0..n * d {
            let col = rng.gen_range(0..d);
            // bias half the proposals toward the bottleneck edge: a swap can
            // only raise the minimum if it touches the current argmin pair
            let a = if rng.gen_bool(0.5) {
                if rng.gen_bool(0.5) {
                    min_i
                } else {
                    min_j
                }
            } else {
                rng.gen_range(0..n)
            };
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            // cheap reject: if the argmin edge is untouched the global
            // minimum cannot strictly increase
            if a != min_i && a != min_j && b != min_i && b != min_j {
                continue;
            }
            swap_column_entries(&mut design, a, b, col);
            // recompute the affected edges in place, remembering old values
            let mut undo: Vec<(usize, f64)> = Vec::with_capacity(2 * n);
            for r in [a, b] {
                for i in 0..n {
                    if i == r {
                        continue;
                    }
                    let idx = r.min(i) * n + r.max(i);
                    let v = sq_dist(design.point(r), design.point(i));
                    if d2[idx] != v {
                        undo.push((idx, d2[idx]));
                        d2[idx] = v;
                        d2[r.max(i) * n + r.min(i)] = v;
                    }
                }
            }
            let (new_min, ni, nj) = scan_min(&d2, n);
            if new_min > min_val {
                min_val = new_min;
                min_i = ni;
                min_j = nj;
            } else {
                for &(idx, old) in undo.iter().rev() {
                    let (i, j) = (idx / n, idx % n);
                    d2[i * n + j] = old;
                    d2[j * n + i] = old;
                }
                swap_column_entries(&mut design, a, b, col); // revert
            }
        }
    }
    Ok(design)
}

fn swap_column_entries(design: &mut InputDesign, a: usize, b: usize, col: usize) {
    let d = design.d;
    design.points.swap(a * d + col, b * d + col);
}

fn scan_min(d2: &[f64], n: usize) -> (f64, usize, usize) {
    let mut best = f64::INFINITY;
    let (mut bi, mut bj) = (0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d2[i * n + j];
            if v < best {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }
    (best, bi, bj)
}

/// Map a design into native units through each column's inverse CDF.
/// Returns a row-major `n × d` matrix.
pub fn scale(design: &InputDesign) -> Vec<f64> {
    let mut out = Vec::with_capacity(design.n * design.d);
    for i in 0..design.n {
        for (j, m) in design.marginals.iter().enumerate() {
            out.push(m.quantile(design.point(i)[j]));
        }
    }
    out
}

/// Write a design as CSV in native units: header `x1,...,xd`, one row per
/// point, full round-trip decimal precision.
pub fn write_design_csv(design: &InputDesign, path: &Path) -> Result<()> {
    let scaled = scale(design);
    let mut out = String::new();
    let header: Vec<String> = (1..=design.d).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..design.n {
        let row: Vec<String> = (0..design.d)
            .map(|j| format!("{}", scaled[i * design.d + j]))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a native-unit design CSV back, mapping values into the unit
/// hypercube through the given marginals' forward CDFs.
pub fn read_design_csv(path: &Path, marginals: Vec<MarginalDistribution>) -> Result<InputDesign> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty design file"))?;
    let d = header.split(',').count();
    if d != marginals.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {d} columns but {} marginals were given",
            marginals.len()
        )));
    }
    let mut points = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != d {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row {} has {} fields, expected {d}", lineno + 2, row.len()),
            ));
        }
        for (j, field) in row.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    path.display().to_string(),
                    format!("non-numeric value {:?} at row {}", field, lineno + 2),
                )
            })?;
            points.push(marginals[j].cdf(v));
        }
        n += 1;
    }
    InputDesign::from_unit_points(points, n, d, marginals)
}
