//! Config-driven pipeline: design → eval → fit → validate → sobol → plot,
//! stage-sequential, resumable at stage boundaries.
//!
//! Every run writes `resolved_config.txt` (the canonical settings snapshot)
//! and `run_info.txt` (timestamps — kept separate so numeric artifacts stay
//! byte-identical across reruns). Each stage records the canonical
//! configuration it ran under in `.stage_<name>.cfg`; a stage is skipped on
//! resume only when that snapshot matches the current config, where the
//! snapshot covers the stage's own section, `[run]`, and every upstream
//! stage (so editing an early stage re-runs everything downstream).

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use sobolmap::field::read_field;
use sobolmap::seeds;

use crate::commands::{self, GpFlags, PipelineArgs};
use crate::config::PipelineConfig;
use crate::render::{scale_range, write_ppm};
use crate::{CliError, CliResult};

const STAGE_ORDER: [&str; 6] = ["design", "eval", "fit", "validate", "sobol", "plot"];

pub fn run(args: PipelineArgs) -> CliResult<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let out = PathBuf::from(cfg.require("run", "out")?);
    let seed: u64 = cfg.get_or("run", "seed", 0)?;
    let stages: Vec<String> = cfg
        .require("run", "stages")?
        .split_whitespace()
        .map(|s| s.to_string())
        .collect();
    for s in &stages {
        if !STAGE_ORDER.contains(&s.as_str()) {
            return Err(CliError::config(format!(
                "unknown stage {s:?}; valid: {STAGE_ORDER:?}"
            )));
        }
    }
    // stages must appear in pipeline order
    let mut last = 0;
    for s in &stages {
        let pos = STAGE_ORDER.iter().position(|t| t == s).unwrap();
        if pos < last {
            return Err(CliError::config(format!(
                "stage {s:?} is out of order; pipeline order is {STAGE_ORDER:?}"
            )));
        }
        last = pos;
    }
    validate_stage_configs(&cfg, &stages)?;

    if args.dry_run {
        println!("pipeline plan for {} (dry run):", args.config.display());
        for stage in &stages {
            let status = if stage_up_to_date(&cfg, &out, &stages, stage) {
                "up to date, would skip"
            } else {
                "would run"
            };
            println!("  {stage}: {status}");
        }
        return Ok(());
    }

    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::stage(format!("cannot create {}: {e}", out.display())))?;
    std::fs::write(out.join("resolved_config.txt"), cfg.resolved())
        .map_err(|e| CliError::stage(format!("cannot write resolved config: {e}")))?;
    let stamp = format!(
        "started_unix {}\nconfig {}\n",
        SystemTime::now()
            .duration_since(SystemTime::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        args.config.display()
    );
    std::fs::write(out.join("run_info.txt"), stamp)
        .map_err(|e| CliError::stage(format!("cannot write run info: {e}")))?;

    for stage in &stages {
        if stage_up_to_date(&cfg, &out, &stages, stage) {
            println!("pipeline: {stage} is up to date, skipping");
            continue;
        }
        println!("pipeline: running {stage}");
        run_stage(&cfg, &out, seed, stage).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("stage {stage}: {m}")),
            CliError::Stage(m) => CliError::Stage(format!(
                "stage {stage}: {m}\nfix the cause and re-run; completed stages are skipped on resume"
            )),
        })?;
        std::fs::write(stage_snapshot_path(&out, stage), stage_snapshot(&cfg, &stages, stage))
            .map_err(|e| CliError::stage(format!("cannot write stage snapshot: {e}")))?;
    }
    println!("pipeline: done -> {}", out.display());
    Ok(())
}

/// Catch obvious config mistakes before any stage runs.
fn validate_stage_configs(cfg: &PipelineConfig, stages: &[String]) -> CliResult<()> {
    for stage in stages {
        match stage.as_str() {
            "design" => {
                cfg.get_parsed::<usize>("design", "n")?
                    .ok_or_else(|| CliError::config("missing [design] n"))?;
                cfg.get_parsed::<usize>("design", "d")?
                    .ok_or_else(|| CliError::config("missing [design] d"))?;
                if let Some(bounds) = cfg.get("design", "bounds") {
                    if !Path::new(bounds).exists() {
                        return Err(CliError::config(format!("bounds file {bounds} not found")));
                    }
                }
            }
            "eval" => {
                cfg.require("eval", "model")?;
            }
            "fit" => {
                cfg.get_parsed::<usize>("fit", "k")?
                    .ok_or_else(|| CliError::config("missing [fit] k"))?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn stage_snapshot_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!(".stage_{stage}.cfg"))
}

/// Canonical config slice a stage depends on: [run], its own section, and
/// every earlier stage's section.
fn stage_snapshot(cfg: &PipelineConfig, stages: &[String], stage: &str) -> String {
    let mut snap = cfg.resolved_section("run");
    for s in stages {
        snap.push_str(&cfg.resolved_section(s));
        if s == stage {
            break;
        }
    }
    snap
}

fn stage_up_to_date(cfg: &PipelineConfig, out: &Path, stages: &[String], stage: &str) -> bool {
    let path = stage_snapshot_path(out, stage);
    match std::fs::read_to_string(&path) {
        Ok(prev) => prev == stage_snapshot(cfg, stages, stage),
        Err(_) => false,
    }
}

fn ensemble_dir(cfg: &PipelineConfig, out: &Path) -> PathBuf {
    match cfg.get("fit", "ensemble").or(cfg.get("eval", "ensemble")) {
        Some(path) => PathBuf::from(path),
        None => out.join("eval"),
    }
}

fn gp_flags(cfg: &PipelineConfig) -> CliResult<GpFlags> {
    Ok(GpFlags {
        family: cfg.get("fit", "family").unwrap_or("db4").to_string(),
        levels: cfg.get("fit", "levels").unwrap_or("full").to_string(),
        restarts: cfg.get_or("fit", "restarts", 5)?,
        nugget: cfg.get_or("fit", "nugget", 1e-8)?,
        estimate_p: cfg.get_bool("fit", "estimate_p", false)?,
        no_trend_selection: !cfg.get_bool("fit", "trend_selection", true)?,
        fallback: cfg.get_bool("fit", "fallback", false)?,
    })
}

fn run_stage(cfg: &PipelineConfig, out: &Path, seed: u64, stage: &str) -> CliResult<()> {
    match stage {
        "design" => {
            let dir = out.join("design");
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::stage(format!("cannot create {}: {e}", dir.display())))?;
            commands::design(commands::DesignArgs {
                n: cfg.get_or("design", "n", 0)?,
                d: cfg.get_or("design", "d", 0)?,
                maximin_sweeps: cfg.get_or("design", "maximin_sweeps", 0)?,
                seed: seeds::derive(seed, "stage-design", 0),
                bounds: cfg.get("design", "bounds").map(PathBuf::from),
                out: dir.join("design.csv"),
            })
        }
        "eval" => {
            let design = match cfg.get("eval", "design") {
                Some(path) => PathBuf::from(path),
                None => out.join("design").join("design.csv"),
            };
            commands::eval(commands::EvalArgs {
                design,
                model: cfg.require("eval", "model")?.to_string(),
                bounds: cfg
                    .get("eval", "bounds")
                    .or(cfg.get("design", "bounds"))
                    .map(PathBuf::from),
                nr: cfg.get_or("eval", "nr", 64)?,
                nc: cfg.get_or("eval", "nc", 64)?,
                jobs: cfg.get_or("eval", "jobs", 1)?,
                timeout_secs: cfg.get_parsed("eval", "timeout_secs")?,
                retries: cfg.get_or("eval", "retries", 0)?,
                out: out.join("eval"),
            })
        }
        "fit" => commands::fit(commands::FitArgs {
            ensemble: ensemble_dir(cfg, out),
            method: cfg.get_or("fit", "method", 3)?,
            k: cfg.get_or("fit", "k", 0)?,
            k_prime: cfg.get_or("fit", "k_prime", 0)?,
            seed: seeds::derive(seed, "stage-fit", 0),
            gp: gp_flags(cfg)?,
            out: out.join("fit"),
        }),
        "validate" => {
            let dir = out.join("validate");
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::stage(format!("cannot create {}: {e}", dir.display())))?;
            commands::validate(commands::ValidateArgs {
                ensemble: ensemble_dir(cfg, out),
                folds: cfg.get_or("validate", "folds", 10)?,
                method: cfg.get_or("fit", "method", 3)?,
                k: cfg.get_or("fit", "k", 0)?,
                k_prime: cfg.get_or("fit", "k_prime", 0)?,
                seed: seeds::derive(seed, "stage-validate", 0),
                refit_hyperparams: cfg.get_bool("validate", "refit_hyperparams", false)?,
                gp: gp_flags(cfg)?,
                out: Some(dir.join("report.txt")),
            })
        }
        "sobol" => commands::sobol(commands::SobolArgs {
            evaluator: cfg
                .get("sobol", "evaluator")
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("meta:{}", out.join("fit").display())),
            estimator: cfg.get("sobol", "estimator").unwrap_or("saltelli").to_string(),
            n: cfg.get_or("sobol", "n", 1000)?,
            seed: seeds::derive(seed, "stage-sobol", 0),
            batch: cfg.get_or("sobol", "batch", 64)?,
            bootstrap: cfg.get_or("sobol", "bootstrap", 0)?,
            fo_outer: cfg.get_or("sobol", "first_order_outer", 200)?,
            fo_inner: cfg.get_or("sobol", "first_order_inner", 1000)?,
            t_outer: cfg.get_or("sobol", "total_outer", 1000)?,
            t_inner: cfg.get_or("sobol", "total_inner", 100)?,
            n_var: cfg.get_or("sobol", "variance_samples", 20000)?,
            nr: cfg.get_or("sobol", "nr", 64)?,
            nc: cfg.get_or("sobol", "nc", 64)?,
            out: out.join("sobol"),
        }),
        "plot" => {
            let src = out.join("sobol");
            let dir = out.join("plot");
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::stage(format!("cannot create {}: {e}", dir.display())))?;
            let mut fields: Vec<PathBuf> = std::fs::read_dir(&src)
                .map_err(|e| CliError::stage(format!("cannot read {}: {e}", src.display())))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "fld"))
                .collect();
            fields.sort();
            if fields.is_empty() {
                return Err(CliError::stage(format!(
                    "no .fld maps found in {}",
                    src.display()
                )));
            }
            let shared = cfg.get_bool("plot", "shared_scale", true)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            if shared {
                for path in &fields {
                    let f = read_field(path)?;
                    let (a, b) = scale_range(&f, None, None);
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
            let scale_min = cfg.get_parsed::<f64>("plot", "scale_min")?.or(shared.then_some(lo));
            let scale_max = cfg.get_parsed::<f64>("plot", "scale_max")?.or(shared.then_some(hi));
            for path in &fields {
                let f = read_field(path)?;
                let name = path.file_stem().unwrap().to_string_lossy();
                write_ppm(&f, &dir.join(format!("{name}.ppm")), scale_min, scale_max)?;
            }
            println!("plot: {} heatmaps -> {}", fields.len(), dir.display());
            Ok(())
        }
        other => Err(CliError::config(format!("unknown stage {other:?}"))),
    }
}
