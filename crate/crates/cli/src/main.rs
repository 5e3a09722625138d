mod output;
mod plot;
mod report;
mod simulate;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fosep_core::experiment::TimeRun;
use fosep_core::{Algorithm, Error, Experiment, ExperimentConfig, Suite};
use thiserror::Error as ThisError;

use output::{RunArtifacts, Summary};

#[derive(Parser, Debug)]
#[command(
    name = "fosep",
    version,
    about = "Feedrate optimization with servo error pre-compensation: experiment driver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan and simulate one trajectory with the configured algorithm.
    Run,
    /// Run a comparison suite and write a side-by-side report.
    Compare {
        #[arg(long, default_value = "table1", value_parser = ["table1", "table2", "fig9"])]
        suite: String,
    },
    /// Pass an existing trajectory CSV through the servo models.
    Simulate {
        /// CSV with an `s` column and optionally `x_dm`, `y_dm` commands.
        #[arg(long)]
        input: PathBuf,
    },
    /// Print model DC gains, pole radii and FBS condition numbers.
    Info,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Experiment file; built-in printer circle defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = ["tap", "fo-time", "fo-sep", "fo-path"])]
    alg: Option<String>,
    /// Name of the limit set used for planning.
    #[arg(long, global = true)]
    limits: Option<String>,
    #[arg(long, global = true)]
    ce_limit_um: Option<f64>,
    /// Keep the raw model DC gains.
    #[arg(long, global = true)]
    no_dc_normalize: bool,
    /// Linearization passes for the time-based LP.
    #[arg(long, global = true)]
    passes: Option<usize>,
    /// Reserved; every algorithm here is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn kind(&self) -> (&'static str, u8) {
        match self {
            CliError::Config(_) => ("config", 2),
            CliError::Io(_) => ("io", 1),
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Argument(_) | Error::Domain { .. } | Error::Geometry(_) => ("config", 2),
                Error::Infeasible { .. } | Error::Unbounded => ("infeasible", 3),
                Error::Numerical(_)
                | Error::RankDeficient(_)
                | Error::IllConditionedDc(_)
                | Error::MemoryCap { .. }
                | Error::DegenerateStop(_) => ("numerical", 4),
            },
        }
    }
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(a) = &o.alg {
        cfg.algorithm = Algorithm::parse(a)?;
    }
    if let Some(l) = &o.limits {
        cfg.limits = l.clone();
    }
    if let Some(ce) = o.ce_limit_um {
        cfg.ce_limit_um = ce;
        cfg.enforce_ce = true;
    }
    if o.no_dc_normalize {
        cfg.models.dc_normalize = false;
    }
    if let Some(p) = o.passes {
        cfg.passes = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(o: &Overrides) -> Result<(), CliError> {
    let exp = Experiment::new(load_config(o)?)?;
    let outcome = exp.run()?;
    let mut art = RunArtifacts::new();
    art.outcome(&o.out, &outcome);
    art.write()?;
    Summary::from_outcome(&outcome).print();
    if let Some(v) = outcome.lp_max_violation {
        println!("lp_max_violation     {}", output::num(v));
    }
    Ok(())
}

fn compare(o: &Overrides, suite: &str) -> Result<(), CliError> {
    let suite = Suite::parse(suite)?;
    let exp = Experiment::new(load_config(o)?)?;
    let rows = exp.suite(suite)?;
    let mut art = RunArtifacts::new();
    for r in &rows {
        art.outcome(&o.out.join(report::slug(&r.outcome.label)), &r.outcome);
    }
    let text = report::markdown(suite, &rows);
    art.text(o.out.join("report.md"), text.clone());
    art.csv(o.out.join("report.csv"), report::table(&rows));
    art.text(o.out.join("ce_compare.svg"), report::ce_overlay(suite, &rows).render());
    art.text(o.out.join("feedrate_compare.svg"), report::feedrate_overlay(suite, &rows).render());
    art.write()?;
    print!("{text}");
    Ok(())
}

fn info(o: &Overrides) -> Result<(), CliError> {
    let cfg = load_config(o)?;
    let exp = Experiment::new(cfg.clone())?;
    println!("path_length_mm       {}", output::num(exp.path.length()));
    println!("sample_time_s        {}", output::num(cfg.sample_time));
    for (axis, (m, g)) in ["x", "y"].iter().zip([&cfg.models.x, &cfg.models.y].into_iter().zip(&exp.models)) {
        let raw = fosep_core::DiscreteTransferFunction::new(m.num.clone(), m.den.clone(), cfg.sample_time)?;
        let raw_dc = raw.dc_gain().map(output::num).unwrap_or_else(|e| format!("undefined ({e})"));
        println!("{axis}.raw_dc_gain        {raw_dc}");
        println!("{axis}.raw_max_pole       {}", output::num(raw.max_pole_magnitude()));
        println!("{axis}.dc_gain            {}", output::num(g.dc_gain()?));
        println!("{axis}.max_pole           {}", output::num(g.max_pole_magnitude()));
    }
    let limits = cfg.limit_set(&cfg.limits)?;
    let (spec, _) = exp.time_spec(
        &limits,
        TimeRun {
            include_jerk: cfg.include_jerk,
            ce_limit_mm: None,
            sep: false,
        },
    )?;
    let rows = spec.horizon();
    println!("horizon_samples      {rows}");
    let [cx, cy] = exp.compensators(rows)?;
    println!("x.fbs_condition      {}", output::num(cx.condition_number()));
    println!("y.fbs_condition      {}", output::num(cy.condition_number()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => run(&cli.opts),
        Command::Compare { suite } => compare(&cli.opts, suite),
        Command::Simulate { input } => simulate::simulate(&cli.opts, input),
        Command::Info => info(&cli.opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = e.kind();
            let family = match &e {
                CliError::Core(Error::Infeasible { family }) => format!(" family={family}"),
                _ => String::new(),
            };
            let reason = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("fosep: error kind={kind} exit={code}{family} reason={reason}");
            ExitCode::from(code)
        }
    }
}
