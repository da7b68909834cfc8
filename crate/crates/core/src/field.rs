//! Spatial maps, ensembles of maps, file I/O and ensemble statistics.
//!
//! A [`GridField`] is a single `2^a × 2^b` map of scalar values together with
//! its coordinate ranges. The `.fld` file format is plain text: line 1 is
//! `nr nc z1_min z1_max z2_min z2_max`, followed by `nr·nc` values, one per
//! line, row-major. Values print with full round-trip precision so the
//! format is lossless and diffable.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::designs::{InputDesign, MarginalDistribution};
use crate::error::{Error, Result};

/// One spatial map of scalar values on a dyadic grid, row-major.
///
/// Immutable after construction; grids are restricted to power-of-two edge
/// lengths, which the wavelet transform requires.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    nr: usize,
    nc: usize,
    z1_range: (f64, f64),
    z2_range: (f64, f64),
    values: Vec<f64>,
}

impl GridField {
    /// Build a field, validating shape and finiteness.
    pub fn new(
        nr: usize,
        nc: usize,
        z1_range: (f64, f64),
        z2_range: (f64, f64),
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(nr, nc)?;
        if values.len() != nr * nc {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {nr}×{nc} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "grid values must be finite".into(),
            ));
        }
        Ok(GridField {
            nr,
            nc,
            z1_range,
            z2_range,
            values,
        })
    }

    /// Like [`GridField::new`] but permits NaN entries. Sensitivity maps use
    /// NaN to flag pixels poisoned by failed evaluations.
    pub fn new_allowing_nan(
        nr: usize,
        nc: usize,
        z1_range: (f64, f64),
        z2_range: (f64, f64),
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(nr, nc)?;
        if values.len() != nr * nc {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {nr}×{nc} grid",
                values.len()
            )));
        }
        Ok(GridField {
            nr,
            nc,
            z1_range,
            z2_range,
            values,
        })
    }

    fn check_dims(nr: usize, nc: usize) -> Result<()> {
        if nr == 0 || nc == 0 || !nr.is_power_of_two() || !nc.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be powers of two, got {nr}×{nc}"
            )));
        }
        Ok(())
    }

    pub fn zeros(nr: usize, nc: usize, z1_range: (f64, f64), z2_range: (f64, f64)) -> Result<Self> {
        Self::new(nr, nc, z1_range, z2_range, vec![0.0; nr * nc])
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn z1_range(&self) -> (f64, f64) {
        self.z1_range
    }

    pub fn z2_range(&self) -> (f64, f64) {
        self.z2_range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.nc + c]
    }

    /// Same grid shape and coordinate ranges.
    pub fn same_geometry(&self, other: &GridField) -> bool {
        self.nr == other.nr
            && self.nc == other.nc
            && self.z1_range == other.z1_range
            && self.z2_range == other.z2_range
    }

    /// Grid-average of the values (uniform pixel weights).
    pub fn grid_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Pointwise map, preserving geometry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            nr: self.nr,
            nc: self.nc,
            z1_range: self.z1_range,
            z2_range: self.z2_range,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A design together with the simulator maps it produced, one per row.
#[derive(Debug, Clone)]
pub struct FieldEnsemble {
    design: InputDesign,
    fields: Vec<GridField>,
}

impl FieldEnsemble {
    pub fn new(design: InputDesign, fields: Vec<GridField>) -> Result<Self> {
        if fields.len() != design.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} fields for a design of {} points",
                fields.len(),
                design.n()
            )));
        }
        if fields.is_empty() {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        let first = &fields[0];
        if !fields.iter().all(|f| f.same_geometry(first)) {
            return Err(Error::DimensionMismatch(
                "all ensemble fields must share one grid geometry".into(),
            ));
        }
        Ok(FieldEnsemble { design, fields })
    }

    pub fn design(&self) -> &InputDesign {
        &self.design
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    /// Sub-ensemble at the given row indices (used by cross-validation and
    /// convergence sub-sampling).
    pub fn subset(&self, indices: &[usize]) -> Result<FieldEnsemble> {
        let d = self.design.d();
        let mut pts = Vec::with_capacity(indices.len() * d);
        let mut fields = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            pts.extend_from_slice(self.design.point(i));
            fields.push(self.fields[i].clone());
        }
        let design = InputDesign::from_unit_points(
            pts,
            indices.len(),
            d,
            self.design.marginals().to_vec(),
        )?;
        FieldEnsemble::new(design, fields)
    }
}

/// Pointwise arithmetic mean over the ensemble.
pub fn mean_field(ensemble: &FieldEnsemble) -> GridField {
    let first = &ensemble.fields[0];
    let mut acc = vec![0.0f64; first.len()];
    for f in &ensemble.fields {
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += v;
        }
    }
    let n = ensemble.n() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    GridField {
        nr: first.nr,
        nc: first.nc,
        z1_range: first.z1_range,
        z2_range: first.z2_range,
        values: acc,
    }
}

/// Pointwise unbiased sample variance (divisor `n - 1`).
pub fn variance_field(ensemble: &FieldEnsemble) -> Result<GridField> {
    let n = ensemble.n();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "variance_field requires at least two fields".into(),
        ));
    }
    let mean = mean_field(ensemble);
    let first = &ensemble.fields[0];
    let mut acc = vec![0.0f64; first.len()];
    for f in &ensemble.fields {
        for ((a, v), m) in acc.iter_mut().zip(f.values()).zip(mean.values()) {
            let d = v - m;
            *a += d * d;
        }
    }
    for a in acc.iter_mut() {
        *a /= (n - 1) as f64;
    }
    Ok(GridField {
        nr: first.nr,
        nc: first.nc,
        z1_range: first.z1_range,
        z2_range: first.z2_range,
        values: acc,
    })
}

/// Write a field in the `.fld` text format.
pub fn write_field(field: &GridField, path: &Path) -> Result<()> {
    std::fs::write(path, field_to_string(field))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn field_to_string(field: &GridField) -> String {
    let mut out = String::with_capacity(field.len() * 20 + 64);
    let _ = writeln!(
        out,
        "{} {} {} {} {} {}",
        field.nr, field.nc, field.z1_range.0, field.z1_range.1, field.z2_range.0, field.z2_range.1
    );
    for v in &field.values {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Read a `.fld` file. NaN cells are accepted (sensitivity maps may carry
/// them); anything non-numeric is an error.
pub fn read_field(path: &Path) -> Result<GridField> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&p, "empty field file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(Error::parse(
            &p,
            format!("header must have 6 fields, got {}", parts.len()),
        ));
    }
    let nr: usize = parts[0]
        .parse()
        .map_err(|_| Error::parse(&p, "bad nr in header"))?;
    let nc: usize = parts[1]
        .parse()
        .map_err(|_| Error::parse(&p, "bad nc in header"))?;
    let mut ranges = [0.0f64; 4];
    for (i, r) in ranges.iter_mut().enumerate() {
        *r = parts[i + 2]
            .parse()
            .map_err(|_| Error::parse(&p, "bad coordinate range in header"))?;
    }
    let mut values = Vec::with_capacity(nr * nc);
    for line in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(&p, format!("non-numeric cell {t:?}")))?;
        values.push(v);
    }
    if values.len() != nr * nc {
        return Err(Error::parse(
            &p,
            format!("expected {} values, found {}", nr * nc, values.len()),
        ));
    }
    GridField::new_allowing_nan(nr, nc, (ranges[0], ranges[1]), (ranges[2], ranges[3]), values)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Write an ensemble as a directory: `design.csv`, `map_0001.fld` …, and a
/// `manifest.txt` recording the grid geometry, the marginals and per-map
/// checksums.
pub fn write_ensemble_dir(ensemble: &FieldEnsemble, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    crate::designs::write_design_csv(ensemble.design(), &dir.join("design.csv"))?;
    let first = &ensemble.fields[0];
    let mut manifest = String::new();
    let _ = writeln!(manifest, "ensemble v1");
    let _ = writeln!(manifest, "n {}", ensemble.n());
    let _ = writeln!(manifest, "d {}", ensemble.design().d());
    let _ = writeln!(
        manifest,
        "grid {} {} {} {} {} {}",
        first.nr, first.nc, first.z1_range.0, first.z1_range.1, first.z2_range.0, first.z2_range.1
    );
    for (j, m) in ensemble.design().marginals().iter().enumerate() {
        match m {
            MarginalDistribution::Uniform { lower, upper } => {
                let _ = writeln!(manifest, "marginal {j} uniform {lower} {upper}");
            }
            MarginalDistribution::InverseCdf { table } => {
                let cells: Vec<String> =
                    table.iter().map(|(pr, q)| format!("{pr}:{q}")).collect();
                let _ = writeln!(manifest, "marginal {j} table {}", cells.join(","));
            }
        }
    }
    for (i, f) in ensemble.fields.iter().enumerate() {
        let name = format!("map_{:04}.fld", i + 1);
        let body = field_to_string(f);
        std::fs::write(dir.join(&name), &body)
            .map_err(|e| Error::io(dir.join(&name).display().to_string(), e))?;
        let _ = writeln!(manifest, "map {} {} {}", i + 1, name, sha256_hex(body.as_bytes()));
    }
    std::fs::write(dir.join("manifest.txt"), manifest)
        .map_err(|e| Error::io(dir.join("manifest.txt").display().to_string(), e))
}

/// Read an ensemble directory written by [`write_ensemble_dir`], verifying
/// checksums.
pub fn read_ensemble_dir(dir: &Path) -> Result<FieldEnsemble> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let p = manifest_path.display().to_string();
    let mut n = 0usize;
    let mut d = 0usize;
    let mut marginals: Vec<(usize, MarginalDistribution)> = Vec::new();
    let mut maps: Vec<(usize, String, String)> = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("ensemble") | Some("grid") | None => {}
            Some("n") => {
                n = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(&p, "bad n line"))?
            }
            Some("d") => {
                d = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(&p, "bad d line"))?
            }
            Some("marginal") => {
                let j: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(&p, "bad marginal index"))?;
                match it.next() {
                    Some("uniform") => {
                        let lo: f64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::parse(&p, "bad uniform lower"))?;
                        let hi: f64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::parse(&p, "bad uniform upper"))?;
                        marginals.push((j, MarginalDistribution::uniform(lo, hi)?));
                    }
                    Some("table") => {
                        let cells = it.next().ok_or_else(|| Error::parse(&p, "bad table"))?;
                        let mut table = Vec::new();
                        for cell in cells.split(',') {
                            let (a, b) = cell
                                .split_once(':')
                                .ok_or_else(|| Error::parse(&p, "bad table cell"))?;
                            table.push((
                                a.parse().map_err(|_| Error::parse(&p, "bad table prob"))?,
                                b.parse().map_err(|_| Error::parse(&p, "bad table quantile"))?,
                            ));
                        }
                        marginals.push((j, MarginalDistribution::inverse_cdf(table)?));
                    }
                    _ => return Err(Error::parse(&p, "unknown marginal kind")),
                }
            }
            Some("map") => {
                let idx: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(&p, "bad map index"))?;
                let name = it
                    .next()
                    .ok_or_else(|| Error::parse(&p, "missing map name"))?
                    .to_string();
                let sum = it
                    .next()
                    .ok_or_else(|| Error::parse(&p, "missing map checksum"))?
                    .to_string();
                maps.push((idx, name, sum));
            }
            Some(other) => {
                return Err(Error::parse(&p, format!("unknown manifest key {other:?}")))
            }
        }
    }
    if marginals.len() != d {
        return Err(Error::parse(&p, "marginal count does not match d"));
    }
    marginals.sort_by_key(|(j, _)| *j);
    let marginals: Vec<MarginalDistribution> = marginals.into_iter().map(|(_, m)| m).collect();
    if maps.len() != n {
        return Err(Error::parse(&p, "map count does not match n"));
    }
    maps.sort_by_key(|(i, _, _)| *i);

    let design = crate::designs::read_design_csv(&dir.join("design.csv"), marginals)?;
    let mut fields = Vec::with_capacity(n);
    for (_, name, sum) in &maps {
        let path = dir.join(name);
        let bytes =
            std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if &sha256_hex(&bytes) != sum {
            return Err(Error::parse(
                path.display().to_string(),
                "checksum mismatch against manifest",
            ));
        }
        fields.push(read_field(&path)?);
    }
    FieldEnsemble::new(design, fields)
}
