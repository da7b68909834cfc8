//! `sobolmap` — build functional metamodels of map-producing simulators and
//! estimate per-pixel Sobol' sensitivity index maps.
//!
//! Subcommands cover the pipeline end to end: `design` (space-filling
//! designs), `eval` (run a simulator over a design, built-in or external),
//! `decompose` (wavelet analysis of one map), `fit` / `predict` /
//! `validate` / `converge` (metamodel construction and validation), `sobol`
//! (sensitivity maps), `campbell2d` / `campbell2d-oracle` (the analytical
//! fixture), `plot` (PPM heatmaps) and `pipeline` (config-driven runs with
//! resume).
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure.

mod adapter;
mod commands;
mod config;
mod pipeline;
mod render;

use clap::{Parser, Subcommand};

/// Error category determines the process exit code.
pub enum CliError {
    /// Bad arguments, malformed config, missing files: exit 2.
    Config(String),
    /// A pipeline stage started and failed: exit 3.
    Stage(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn stage(msg: impl Into<String>) -> Self {
        CliError::Stage(msg.into())
    }
}

impl From<sobolmap::Error> for CliError {
    fn from(e: sobolmap::Error) -> Self {
        CliError::Stage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "sobolmap", version, about = "Spatial metamodels and Sobol' index maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a (maximin) Latin hypercube design, written as native-unit CSV.
    Design(commands::DesignArgs),
    /// Run a model over a design and store the map ensemble.
    Eval(commands::EvalArgs),
    /// Wavelet-decompose a single field into an addressed coefficient table.
    Decompose(commands::DecomposeArgs),
    /// Fit a functional metamodel on an ensemble and write the bundle.
    Fit(commands::FitArgs),
    /// Predict a map from a fitted metamodel bundle.
    Predict(commands::PredictArgs),
    /// K-fold cross-validation of the metamodel (MSE and Q2).
    Validate(commands::ValidateArgs),
    /// MSE convergence table over methods × k × n.
    Converge(commands::ConvergeArgs),
    /// Estimate first-order and total Sobol' index maps.
    Sobol(commands::SobolArgs),
    /// Evaluate the Campbell2D analytical function at one input point.
    Campbell2d(commands::Campbell2dArgs),
    /// Analytic first-order Sobol' index map of the Campbell2D function.
    #[command(name = "campbell2d-oracle")]
    Campbell2dOracle(commands::OracleArgs),
    /// Render a field as a portable-pixmap heatmap.
    Plot(commands::PlotArgs),
    /// Run a config-driven multi-stage pipeline with resume.
    Pipeline(commands::PipelineArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(args) => commands::design(args),
        Command::Eval(args) => commands::eval(args),
        Command::Decompose(args) => commands::decompose(args),
        Command::Fit(args) => commands::fit(args),
        Command::Predict(args) => commands::predict(args),
        Command::Validate(args) => commands::validate(args),
        Command::Converge(args) => commands::converge(args),
        Command::Sobol(args) => commands::sobol(args),
        Command::Campbell2d(args) => commands::campbell2d(args),
        Command::Campbell2dOracle(args) => commands::campbell2d_oracle(args),
        Command::Plot(args) => commands::plot(args),
        Command::Pipeline(args) => pipeline::run(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("stage failure: {msg}");
            std::process::exit(3);
        }
    }
}
