//! Metamodel bundle directory: `mean.fld`, `ranking.csv`, per-model files
//! under `models/`, and `manifest.txt`.

use std::fmt::Write as _;
use std::path::Path;

use crate::designs::MarginalDistribution;
use crate::error::{Error, Result};
use crate::field::{read_field, write_field};
use crate::funcmeta::{CoefficientModel, FunctionalMetamodel, Method};
use crate::gp::{GpModel, TrendModel};
use crate::wavelet::{CoefficientRanking, WaveletFamily, WaveletSpec};

/// Write a metamodel bundle directory.
pub fn write_bundle(meta: &FunctionalMetamodel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("models"))
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_field(meta.mean_field(), &dir.join("mean.fld"))?;

    let mut ranking = String::from("rank,flat_index,variance\n");
    for rank in 0..meta.ranking().len() {
        let flat = meta.ranking().flat_index(rank);
        let _ = writeln!(ranking, "{rank},{flat},{}", meta.ranking().variances()[flat]);
    }
    std::fs::write(dir.join("ranking.csv"), ranking)
        .map_err(|e| Error::io(dir.join("ranking.csv").display().to_string(), e))?;

    // rich models get one file each; the mean tail is a compact table
    let mut mean_rows = String::from("flat_index,value\n");
    for rank in 0..meta.models().len() {
        let flat = meta.ranking().flat_index(rank);
        match &meta.models()[flat] {
            CoefficientModel::Mean(v) => {
                let _ = writeln!(mean_rows, "{flat},{v}");
            }
            CoefficientModel::Linear(m) => {
                let mut s = String::new();
                let _ = writeln!(s, "linearmodel v1");
                let _ = writeln!(s, "intercept {}", m.intercept);
                let _ = writeln!(
                    s,
                    "terms {}",
                    m.terms
                        .iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                let _ = writeln!(
                    s,
                    "coeffs {}",
                    m.coefficients
                        .iter()
                        .map(|c| format!("{c}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                let name = format!("models/rank_{rank:05}_flat_{flat:05}.linear.txt");
                std::fs::write(dir.join(&name), s)
                    .map_err(|e| Error::io(dir.join(&name).display().to_string(), e))?;
            }
            CoefficientModel::Gp(m) => {
                let name = format!("models/rank_{rank:05}_flat_{flat:05}.gp.txt");
                m.write_to(&dir.join(&name))?;
            }
        }
    }
    std::fs::write(dir.join("models").join("mean_models.csv"), mean_rows)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "metamodel v1");
    let _ = writeln!(manifest, "method {}", meta.method().index());
    let _ = writeln!(manifest, "k {}", meta.k());
    let _ = writeln!(manifest, "k_prime {}", meta.k_prime());
    let _ = writeln!(manifest, "family {}", meta.spec().family.name());
    let _ = writeln!(manifest, "levels {}", meta.spec().levels);
    let _ = writeln!(manifest, "d {}", meta.input_dim());
    for (j, m) in meta.marginals().iter().enumerate() {
        match m {
            MarginalDistribution::Uniform { lower, upper } => {
                let _ = writeln!(manifest, "marginal {j} uniform {lower} {upper}");
            }
            MarginalDistribution::InverseCdf { table } => {
                let cells: Vec<String> = table.iter().map(|(p, q)| format!("{p}:{q}")).collect();
                let _ = writeln!(manifest, "marginal {j} table {}", cells.join(","));
            }
        }
    }
    std::fs::write(dir.join("manifest.txt"), manifest)
        .map_err(|e| Error::io(dir.join("manifest.txt").display().to_string(), e))
}

/// Load a metamodel bundle written by [`write_bundle`].
pub fn read_bundle(dir: &Path) -> Result<FunctionalMetamodel> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let p = manifest_path.display().to_string();
    let mut method = None;
    let mut k = None;
    let mut k_prime = None;
    let mut family = None;
    let mut levels = None;
    let mut d = None;
    let mut marginals: Vec<(usize, MarginalDistribution)> = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("metamodel") | None => {}
            Some("method") => method = it.next().and_then(|s| s.parse::<usize>().ok()),
            Some("k") => k = it.next().and_then(|s| s.parse::<usize>().ok()),
            Some("k_prime") => k_prime = it.next().and_then(|s| s.parse::<usize>().ok()),
            Some("family") => family = it.next().map(|s| s.to_string()),
            Some("levels") => levels = it.next().and_then(|s| s.parse::<usize>().ok()),
            Some("d") => d = it.next().and_then(|s| s.parse::<usize>().ok()),
            Some("marginal") => {
                let j: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(&p, "bad marginal"))?;
                match it.next() {
                    Some("uniform") => {
                        let lo: f64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::parse(&p, "bad uniform"))?;
                        let hi: f64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::parse(&p, "bad uniform"))?;
                        marginals.push((j, MarginalDistribution::uniform(lo, hi)?));
                    }
                    Some("table") => {
                        let cells = it.next().ok_or_else(|| Error::parse(&p, "bad table"))?;
                        let mut table = Vec::new();
                        for cell in cells.split(',') {
                            let (a, b) = cell
                                .split_once(':')
                                .ok_or_else(|| Error::parse(&p, "bad cell"))?;
                            table.push((
                                a.parse().map_err(|_| Error::parse(&p, "bad prob"))?,
                                b.parse().map_err(|_| Error::parse(&p, "bad quantile"))?,
                            ));
                        }
                        marginals.push((j, MarginalDistribution::inverse_cdf(table)?));
                    }
                    _ => return Err(Error::parse(&p, "unknown marginal kind")),
                }
            }
            Some(other) => return Err(Error::parse(&p, format!("unknown key {other:?}"))),
        }
    }
    let method = Method::from_index(method.ok_or_else(|| Error::parse(&p, "missing method"))?)?;
    let k = k.ok_or_else(|| Error::parse(&p, "missing k"))?;
    let k_prime = k_prime.ok_or_else(|| Error::parse(&p, "missing k_prime"))?;
    let family =
        WaveletFamily::parse(&family.ok_or_else(|| Error::parse(&p, "missing family"))?)?;
    let levels = levels.ok_or_else(|| Error::parse(&p, "missing levels"))?;
    let d = d.ok_or_else(|| Error::parse(&p, "missing d"))?;
    marginals.sort_by_key(|(j, _)| *j);
    let marginals: Vec<MarginalDistribution> = marginals.into_iter().map(|(_, m)| m).collect();
    if marginals.len() != d {
        return Err(Error::parse(&p, "marginal count != d"));
    }

    let mean = read_field(&dir.join("mean.fld"))?;
    let spec = WaveletSpec::new(family, levels)?;
    let big_k = mean.len();

    let rank_text = std::fs::read_to_string(dir.join("ranking.csv"))
        .map_err(|e| Error::io(dir.join("ranking.csv").display().to_string(), e))?;
    let mut order = vec![0usize; big_k];
    let mut variances = vec![0.0f64; big_k];
    for (i, line) in rank_text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::parse("ranking.csv", "bad row"));
        }
        let rank: usize = cells[0]
            .parse()
            .map_err(|_| Error::parse("ranking.csv", "rank"))?;
        let flat: usize = cells[1]
            .parse()
            .map_err(|_| Error::parse("ranking.csv", "flat"))?;
        let var: f64 = cells[2]
            .parse()
            .map_err(|_| Error::parse("ranking.csv", "var"))?;
        order[rank] = flat;
        variances[flat] = var;
    }
    let ranking = CoefficientRanking::from_parts(order, variances);

    let mut models: Vec<Option<CoefficientModel>> = (0..big_k).map(|_| None).collect();
    let mean_csv = std::fs::read_to_string(dir.join("models").join("mean_models.csv"))
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (i, line) in mean_csv.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("mean_models.csv", "bad row"))?;
        let flat: usize = a
            .parse()
            .map_err(|_| Error::parse("mean_models.csv", "flat"))?;
        let v: f64 = b
            .parse()
            .map_err(|_| Error::parse("mean_models.csv", "value"))?;
        models[flat] = Some(CoefficientModel::Mean(v));
    }

    let mut entries: Vec<_> = std::fs::read_dir(dir.join("models"))
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name == "mean_models.csv" {
            continue;
        }
        let flat: usize = name
            .split("_flat_")
            .nth(1)
            .and_then(|s| s.split('.').next())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&name, "cannot extract flat index"))?;
        if name.ends_with(".gp.txt") {
            models[flat] = Some(CoefficientModel::Gp(Box::new(GpModel::read_from(&path)?)));
        } else if name.ends_with(".linear.txt") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(name.clone(), e))?;
            let mut intercept = None;
            let mut terms = Vec::new();
            let mut coeffs = Vec::new();
            for line in text.lines().skip(1) {
                if let Some(rest) = line.strip_prefix("intercept ") {
                    intercept = rest.trim().parse::<f64>().ok();
                } else if let Some(rest) = line.strip_prefix("terms") {
                    terms = rest
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::parse(&name, "terms"))?;
                } else if let Some(rest) = line.strip_prefix("coeffs") {
                    coeffs = rest
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::parse(&name, "coeffs"))?;
                }
            }
            models[flat] = Some(CoefficientModel::Linear(TrendModel {
                intercept: intercept.ok_or_else(|| Error::parse(&name, "intercept"))?,
                terms,
                coefficients: coeffs,
            }));
        }
    }
    let models: Result<Vec<CoefficientModel>> = models
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| Error::parse("bundle", format!("missing model {i}"))))
        .collect();

    Ok(FunctionalMetamodel::from_parts(
        mean, spec, ranking, method, k, k_prime, models?, marginals, d,
    ))
}
