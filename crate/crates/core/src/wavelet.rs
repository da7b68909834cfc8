//! Orthonormal 2D discrete wavelet transform and variance-based ranking.
//!
//! The transform is separable (rows then columns per level) with periodic
//! boundary extension, which keeps the transform exactly orthonormal at
//! every dyadic size, so the coefficient count equals the pixel count and
//! Parseval's identity holds. Filters: Haar and Daubechies with 2, 4, 6 or 8
//! vanishing moments (4 to 16 taps).

use crate::error::{Error, Result};
use crate::field::GridField;

/// Haar scaling filter.
const HAAR: &[f64] = &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

// Daubechies scaling filters (extremal phase), normalized so that
// sum(h) = sqrt(2) and sum(h^2) = 1; listed in the convolution order used by
// `forward_step`. Σ h[t] h[t+2m] = 0 holds to ~1e-17 for all even shifts.
const DB2: &[f64] = &[
    -0.12940952255126037,
    0.2241438680420134,
    0.8365163037378079,
    0.48296291314453416,
];
const DB4: &[f64] = &[
    -0.010597401785069032,
    0.0328830116668852,
    0.030841381835560764,
    -0.18703481171909309,
    -0.027983769416859854,
    0.6308807679298589,
    0.7148465705529157,
    0.2303778133088965,
];
const DB6: &[f64] = &[
    -0.0010773010853084796,
    0.004777257510945511,
    0.0005538422011614961,
    -0.03158203931748603,
    0.027522865530305727,
    0.09750160558732304,
    -0.12976686756726194,
    -0.22626469396543983,
    0.31525035170919763,
    0.7511339080210954,
    0.49462389039845306,
    0.11154074335010947,
];
const DB8: &[f64] = &[
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
];

/// Wavelet family. Daubechies order counts tap-pairs: db4 has 8 taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    Haar,
    Daubechies(usize),
}

impl WaveletFamily {
    pub fn lowpass(&self) -> Result<&'static [f64]> {
        match self {
            WaveletFamily::Haar => Ok(HAAR),
            WaveletFamily::Daubechies(2) => Ok(DB2),
            WaveletFamily::Daubechies(4) => Ok(DB4),
            WaveletFamily::Daubechies(6) => Ok(DB6),
            WaveletFamily::Daubechies(8) => Ok(DB8),
            WaveletFamily::Daubechies(n) => Err(Error::InvalidArgument(format!(
                "unsupported Daubechies order {n}; available: 2, 4, 6, 8"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            WaveletFamily::Haar => "haar".into(),
            WaveletFamily::Daubechies(n) => format!("db{n}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(WaveletFamily::Haar),
            "db2" => Ok(WaveletFamily::Daubechies(2)),
            "db4" => Ok(WaveletFamily::Daubechies(4)),
            "db6" => Ok(WaveletFamily::Daubechies(6)),
            "db8" => Ok(WaveletFamily::Daubechies(8)),
            other => Err(Error::InvalidArgument(format!(
                "unknown wavelet family {other:?} (haar, db2, db4, db6, db8)"
            ))),
        }
    }
}

/// Transform specification: family and decomposition depth. Boundary
/// handling is always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: usize) -> Result<Self> {
        family.lowpass()?;
        Ok(WaveletSpec { family, levels })
    }

    /// Full decomposition depth for an `nr × nc` grid: `log2(min(nr, nc))`.
    pub fn full_depth(family: WaveletFamily, nr: usize, nc: usize) -> Result<Self> {
        let levels = nr.min(nc).trailing_zeros() as usize;
        Self::new(family, levels)
    }

    pub fn max_levels(nr: usize, nc: usize) -> usize {
        nr.min(nc).trailing_zeros() as usize
    }

    fn validate_for(&self, nr: usize, nc: usize) -> Result<()> {
        let max = Self::max_levels(nr, nc);
        if self.levels > max {
            return Err(Error::InvalidArgument(format!(
                "{} levels exceed log2(min({nr},{nc})) = {max}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Flat vector of all `K = nr·nc` wavelet coefficients of one field,
/// stored in the Mallat layout (approximation block top-left), flattened
/// row-major. Addressing into (level, subband, position) is provided by
/// [`coeff_location`].
#[derive(Debug, Clone)]
pub struct WaveletDecomposition {
    coeffs: Vec<f64>,
    nr: usize,
    nc: usize,
    z1_range: (f64, f64),
    z2_range: (f64, f64),
    spec: WaveletSpec,
}

impl WaveletDecomposition {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn spec(&self) -> WaveletSpec {
        self.spec
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nr, self.nc)
    }

    /// Build a decomposition from a raw coefficient vector (used when
    /// synthesizing maps from modeled coefficients).
    pub fn from_coeffs(
        coeffs: Vec<f64>,
        nr: usize,
        nc: usize,
        z1_range: (f64, f64),
        z2_range: (f64, f64),
        spec: WaveletSpec,
    ) -> Result<Self> {
        if coeffs.len() != nr * nc {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a {nr}×{nc} grid",
                coeffs.len()
            )));
        }
        spec.validate_for(nr, nc)?;
        Ok(WaveletDecomposition {
            coeffs,
            nr,
            nc,
            z1_range,
            z2_range,
            spec,
        })
    }
}

/// Subband of a coefficient within its level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subband {
    /// Coarsest approximation (LL at the deepest level).
    Approx,
    /// Detail in the column direction (LH block).
    Horizontal,
    /// Detail in the row direction (HL block).
    Vertical,
    /// Diagonal detail (HH block).
    Diagonal,
}

/// Location of a flat coefficient index: level 1 is the finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoeffLocation {
    pub level: usize,
    pub subband: Subband,
    pub row: usize,
    pub col: usize,
}

/// Decode a flat (row-major) coefficient index into its level/subband
/// position under the Mallat layout of a `levels`-deep transform.
pub fn coeff_location(nr: usize, nc: usize, levels: usize, flat: usize) -> CoeffLocation {
    let (r, c) = (flat / nc, flat % nc);
    for level in 1..=levels {
        let hr = nr >> level;
        let hc = nc >> level;
        let in_top = r < hr;
        let in_left = c < hc;
        if level == levels && in_top && in_left {
            return CoeffLocation {
                level,
                subband: Subband::Approx,
                row: r,
                col: c,
            };
        }
        // within this level's quadrants?
        if r < 2 * hr && c < 2 * hc {
            if in_top && !in_left {
                return CoeffLocation {
                    level,
                    subband: Subband::Horizontal,
                    row: r,
                    col: c - hc,
                };
            }
            if !in_top && in_left {
                return CoeffLocation {
                    level,
                    subband: Subband::Vertical,
                    row: r - hr,
                    col: c,
                };
            }
            if !in_top && !in_left {
                return CoeffLocation {
                    level,
                    subband: Subband::Diagonal,
                    row: r - hr,
                    col: c - hc,
                };
            }
        }
    }
    // levels == 0: identity transform, everything is approximation
    CoeffLocation {
        level: 0,
        subband: Subband::Approx,
        row: r,
        col: c,
    }
}

/// One periodic analysis step: `x` (even length) -> approximation in
/// `out[..n/2]`, detail in `out[n/2..]`.
///
/// `a[i] = Σ_t h[t] x[(2i + t) mod n]`, `d[i] = Σ_t g[t] x[(2i + t) mod n]`
/// with the quadrature-mirror highpass `g[t] = (-1)^t h[L-1-t]`.
fn forward_step(x: &[f64], h: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    let taps = h.len();
    for i in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (t, &ht) in h.iter().enumerate() {
            let xv = x[(2 * i + t) % n];
            a += ht * xv;
            let gt = if t % 2 == 0 { h[taps - 1 - t] } else { -h[taps - 1 - t] };
            d += gt * xv;
        }
        out[i] = a;
        out[half + i] = d;
    }
}

/// Adjoint of [`forward_step`]; exact inverse because the transform is
/// orthonormal.
fn inverse_step(coeffs: &[f64], h: &[f64], out: &mut [f64]) {
    let n = coeffs.len();
    let half = n / 2;
    let taps = h.len();
    out.fill(0.0);
    for i in 0..half {
        let a = coeffs[i];
        let d = coeffs[half + i];
        for (t, &ht) in h.iter().enumerate() {
            let gt = if t % 2 == 0 { h[taps - 1 - t] } else { -h[taps - 1 - t] };
            out[(2 * i + t) % n] += ht * a + gt * d;
        }
    }
}

fn transform_2d(
    values: &mut [f64],
    nr: usize,
    nc: usize,
    spec: &WaveletSpec,
    inverse: bool,
) -> Result<()> {
    let h = spec.family.lowpass()?;
    let mut row_buf = vec![0.0f64; nc];
    let mut col_in = vec![0.0f64; nr];
    let mut col_out = vec![0.0f64; nr];

    let level_dims = |level: usize| (nr >> level, nc >> level);

    if !inverse {
        for level in 0..spec.levels {
            let (mr, mc) = level_dims(level);
            // rows
            for r in 0..mr {
                let row = &mut values[r * nc..r * nc + mc];
                forward_step(row, h, &mut row_buf[..mc]);
                row.copy_from_slice(&row_buf[..mc]);
            }
            // columns
            for c in 0..mc {
                for r in 0..mr {
                    col_in[r] = values[r * nc + c];
                }
                forward_step(&col_in[..mr], h, &mut col_out[..mr]);
                for r in 0..mr {
                    values[r * nc + c] = col_out[r];
                }
            }
        }
    } else {
        for level in (0..spec.levels).rev() {
            let (mr, mc) = level_dims(level);
            // columns first (reverse order of analysis)
            for c in 0..mc {
                for r in 0..mr {
                    col_in[r] = values[r * nc + c];
                }
                inverse_step(&col_in[..mr], h, &mut col_out[..mr]);
                for r in 0..mr {
                    values[r * nc + c] = col_out[r];
                }
            }
            // rows
            for r in 0..mr {
                row_buf[..mc].copy_from_slice(&values[r * nc..r * nc + mc]);
                inverse_step(&row_buf[..mc], h, &mut values[r * nc..r * nc + mc]);
            }
        }
    }
    Ok(())
}

/// Separable 2D analysis of a field. Invertible by [`idwt2`].
pub fn dwt2(field: &GridField, spec: &WaveletSpec) -> Result<WaveletDecomposition> {
    spec.validate_for(field.nr(), field.nc())?;
    if field.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "dwt2 input must be finite".into(),
        ));
    }
    let mut coeffs = field.values().to_vec();
    transform_2d(&mut coeffs, field.nr(), field.nc(), spec, false)?;
    Ok(WaveletDecomposition {
        coeffs,
        nr: field.nr(),
        nc: field.nc(),
        z1_range: field.z1_range(),
        z2_range: field.z2_range(),
        spec: *spec,
    })
}

/// Synthesis: reconstruct the field from its coefficients.
pub fn idwt2(decomp: &WaveletDecomposition) -> Result<GridField> {
    let mut values = decomp.coeffs.clone();
    transform_2d(&mut values, decomp.nr, decomp.nc, &decomp.spec, true)?;
    GridField::new_allowing_nan(decomp.nr, decomp.nc, decomp.z1_range, decomp.z2_range, values)
}

/// Synthesis into a preallocated buffer; avoids allocation in hot loops.
pub fn idwt2_into(
    coeffs: &[f64],
    nr: usize,
    nc: usize,
    spec: &WaveletSpec,
    out: &mut [f64],
) -> Result<()> {
    if coeffs.len() != nr * nc || out.len() != nr * nc {
        return Err(Error::DimensionMismatch("idwt2_into buffer size".into()));
    }
    out.copy_from_slice(coeffs);
    transform_2d(out, nr, nc, spec, true)
}

/// Ranking of coefficients by empirical variance over an ensemble.
///
/// `order[r]` is the flat index holding rank `r` (descending variance, ties
/// broken by ascending flat index); `variances` is indexed by flat index and
/// uses divisor `n`.
#[derive(Debug, Clone)]
pub struct CoefficientRanking {
    order: Vec<usize>,
    variances: Vec<f64>,
}

impl CoefficientRanking {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Flat index at a given rank (0-based).
    pub fn flat_index(&self, rank: usize) -> usize {
        self.order[rank]
    }

    pub fn from_parts(order: Vec<usize>, variances: Vec<f64>) -> Self {
        CoefficientRanking { order, variances }
    }
}

/// Rank coefficients by their empirical variance over the ensemble
/// (divisor `n`), descending.
pub fn rank_by_variance(decomps: &[WaveletDecomposition]) -> Result<CoefficientRanking> {
    if decomps.len() < 2 {
        return Err(Error::InvalidArgument(
            "ranking requires at least two decompositions".into(),
        ));
    }
    let first = &decomps[0];
    if !decomps
        .iter()
        .all(|d| d.spec == first.spec && d.nr == first.nr && d.nc == first.nc)
    {
        return Err(Error::DimensionMismatch(
            "decompositions must share one spec and shape".into(),
        ));
    }
    let k = first.len();
    let n = decomps.len() as f64;
    let mut mean = vec![0.0f64; k];
    for d in decomps {
        for (m, c) in mean.iter_mut().zip(d.coeffs()) {
            *m += c;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0f64; k];
    for d in decomps {
        for ((v, c), m) in var.iter_mut().zip(d.coeffs()).zip(&mean) {
            let e = c - m;
            *v += e * e;
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        var[b]
            .partial_cmp(&var[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    Ok(CoefficientRanking {
        order,
        variances: var,
    })
}
