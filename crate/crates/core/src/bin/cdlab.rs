use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdlab::experiments::{run_scenario, Scenario, ScenarioConfig};
use cdlab::LabError;

#[derive(Parser)]
#[command(name = "cdlab", version, about = "Entropy convexity laboratory on branching sup-metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Profile gates and tabulated profile
    Profile,
    /// Margin sweep over the lemma inequalities
    Lemmas,
    /// Optimal plan between two strips and structured map checks
    Transport,
    /// Midpoint certificates and injectivity
    Midpoint,
    /// Pointwise condition sweep and dyadic entropy convexity
    CdCheck,
    /// Distortion of the ε → 0 maps
    Mgh,
    /// Strict convexity failure on the singular space
    Counterexample,
    /// Width and curvature calibration
    Calibrate,
}

#[derive(Args)]
struct Opts {
    /// JSON config; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long = "K", global = true, allow_hyphen_values = true)]
    big_k: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    nx: Option<usize>,
    #[arg(long, global = true)]
    ny: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    tbar: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Profile => Scenario::Profile,
            Command::Lemmas => Scenario::Lemmas,
            Command::Transport => Scenario::Transport,
            Command::Midpoint => Scenario::Midpoint,
            Command::CdCheck => Scenario::CdCheck,
            Command::Mgh => Scenario::Mgh,
            Command::Counterexample => Scenario::Counterexample,
            Command::Calibrate => Scenario::Calibrate,
        }
    }
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig, LabError> {
    let o = &cli.opts;
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    cfg.scenario = Some(cli.command.scenario());
    if let Some(v) = o.k {
        cfg.params.k = v;
    }
    if let Some(v) = o.big_k {
        cfg.params.big_k = v;
    }
    if let Some(v) = o.eps {
        cfg.params.epsilon = v;
    }
    if let Some(v) = o.nx {
        cfg.nx = v;
    }
    if let Some(v) = o.ny {
        cfg.ny = v;
    }
    if let Some(v) = o.depth {
        cfg.depth = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.samples {
        cfg.samples = v;
    }
    if let Some(v) = o.tbar {
        cfg.tbar = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &LabError) -> u8 {
    match e {
        LabError::Config(_) | LabError::Parameter(_) | LabError::Io(_) | LabError::Domain { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cdlab: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(&cfg) {
        Ok(outcome) => {
            for g in &outcome.gates {
                println!("{} {}: {:.6e} (limit {:.6e})", if g.pass { "PASS" } else { "FAIL" }, g.name, g.value, g.limit);
            }
            println!("{} {} -> {}", outcome.scenario.name(), if outcome.pass { "ok" } else { "gate failed" }, cfg.out.display());
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("cdlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
