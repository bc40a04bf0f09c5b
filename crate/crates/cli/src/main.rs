use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use nls_cli::{run, CliError, Command, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "nls",
    version,
    about = "Ground states and normalized solutions of the Dirichlet NLS"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mandatory unless the configuration file sets it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated masses.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    mu_bar_fraction: Option<f64>,
    /// Comma-separated box side lengths.
    #[arg(long)]
    boxes: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    /// Comma-separated boundary-layer fractions.
    #[arg(long)]
    eps: Option<String>,
    /// Number of eigenpairs.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Field dump to read.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Also write field dumps.
    #[arg(long)]
    dump: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let text = match cli.seed {
                // a command-line seed satisfies the mandatory key
                Some(s)
                    if !text.lines().any(|l| {
                        l.split('#')
                            .next()
                            .unwrap_or("")
                            .trim_start()
                            .starts_with("seed")
                    }) =>
                {
                    format!("{text}\nseed = {s}\n")
                }
                _ => text,
            };
            RunConfig::parse(&text)?
        }
        None => RunConfig::with_seed(cli.seed.ok_or_else(|| {
            CliError::Config("seed is mandatory (--seed or a config file)".into())
        })?),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    let o = &cli.overrides;
    let mut set = |k: &str, v: Option<String>| -> Result<(), CliError> {
        match v {
            Some(v) => cfg
                .set(k, &v)
                .map_err(|e| CliError::Config(format!("--{k}: {e}"))),
            None => Ok(()),
        }
    };
    let s = |x: Option<f64>| x.map(|v| v.to_string());
    set("n", o.n.map(|v| v.to_string()))?;
    set("dim", o.dim.map(|v| v.to_string()))?;
    set("p", s(o.p))?;
    set("kind", o.kind.clone())?;
    set("lambda", s(o.lambda))?;
    set("lambda_min", s(o.lambda_min))?;
    set("lambda_max", s(o.lambda_max))?;
    set("samples", o.samples.map(|v| v.to_string()))?;
    set("mu", o.mu.clone())?;
    set("mu_bar_fraction", s(o.mu_bar_fraction))?;
    set("boxes", o.boxes.clone())?;
    set("box_h", s(o.h))?;
    set("eps", o.eps.clone())?;
    set("eig_k", o.k.map(|v| v.to_string()))?;
    set("tol", s(o.tol))?;
    if let Some(i) = &o.input {
        cfg.input = Some(i.clone());
    }
    cfg.dump |= o.dump;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let summary = run(cli.command, &cfg);
    let mut stdout = std::io::stdout().lock();
    for c in &summary.checks {
        let verdict = format!("{:?}", c.verdict).to_uppercase();
        let _ = writeln!(stdout, "{verdict:<8} {}  {}", c.name, c.detail);
    }
    if let Some(e) = &summary.error {
        eprintln!("error ({}): {}", e.kind, e.message);
    }
    ExitCode::from(summary.exit_code() as u8)
}
