use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sasaki_cli::config::{self, ConfigError};
use sasaki_cli::run::{self, EXIT_CONFIG};
use sasaki_core::verify::Level;
use serde_json::{Map, Value};

/// ε-regularized geodesics between Sasakian potentials on a flat torus.
#[derive(Parser)]
#[command(name = "sasaki", version)]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum CommandKind {
    /// Solve for a path; writes solution.bin, report.json and diagnostics.csv.
    Solve,
    /// Length of the path between the two boundary potentials; writes distance.json.
    Distance,
    /// Run the check suite; writes verify.json.
    Verify,
    /// Solve, then compare the cone and time-slice volume forms; writes identity.json.
    IdentityCheck,
}

impl CommandKind {
    fn name(&self) -> &'static str {
        match self {
            CommandKind::Solve => "solve",
            CommandKind::Distance => "distance",
            CommandKind::Verify => "verify",
            CommandKind::IdentityCheck => "identity-check",
        }
    }
}

/// Each flag overrides the same key of the `--config` document.
#[derive(Args)]
struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid points per real axis, e.g. 16,16.
    #[arg(long, global = true, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long, global = true)]
    nt: Option<usize>,
    #[arg(long, global = true)]
    eps_start: Option<f64>,
    #[arg(long, global = true)]
    eps_min: Option<f64>,
    #[arg(long, global = true)]
    eps_factor: Option<f64>,
    #[arg(long, global = true)]
    newton_tol: Option<f64>,
    #[arg(long, global = true)]
    max_newton: Option<usize>,
    /// Boundary as inline JSON, e.g. '{"kind":"cosine","amplitude":0.05}'.
    #[arg(long, global = true)]
    boundary: Option<String>,
    /// Right-hand side as inline JSON, e.g. '{"kind":"constant","value":1}'.
    #[arg(long, global = true)]
    rhs: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Suite level for `verify`.
    #[arg(long, global = true)]
    level: Option<Level>,
}

impl Overrides {
    fn into_map(self, command: &str) -> Result<Map<String, Value>, ConfigError> {
        let mut m = Map::new();
        m.insert("command".into(), command.into());
        let inline = |name: &str, text: &str| {
            serde_json::from_str::<Value>(text).map_err(|e| ConfigError::Parse(format!("--{name}: {e}")))
        };
        if let Some(v) = self.grid {
            m.insert("grid".into(), v.into());
        }
        if let Some(v) = self.nt {
            m.insert("nt".into(), v.into());
        }
        for (key, v) in [
            ("eps_start", self.eps_start),
            ("eps_min", self.eps_min),
            ("eps_factor", self.eps_factor),
            ("newton_tol", self.newton_tol),
        ] {
            if let Some(v) = v {
                m.insert(key.into(), v.into());
            }
        }
        if let Some(v) = self.max_newton {
            m.insert("max_newton".into(), v.into());
        }
        if let Some(text) = self.boundary {
            m.insert("boundary".into(), inline("boundary", &text)?);
        }
        if let Some(text) = self.rhs {
            m.insert("rhs".into(), inline("rhs", &text)?);
        }
        if let Some(v) = self.output {
            m.insert("output".into(), v.to_string_lossy().into_owned().into());
        }
        if let Some(v) = self.level {
            m.insert("level".into(), v.to_string().into());
        }
        Ok(m)
    }
}

fn load(cli: Cli) -> Result<config::RunConfig, ConfigError> {
    let base = match &cli.overrides.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
        }
        None => Value::Null,
    };
    let overrides = cli.overrides.into_map(cli.command.name())?;
    config::from_value(config::merge(base, overrides)?)
}

fn configure_threads() -> Result<(), String> {
    let Ok(text) = std::env::var("SASAKI_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("SASAKI_THREADS must be a positive integer, got {text:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let cfg = match load(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run::run(&cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
