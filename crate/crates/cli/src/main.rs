use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynkin_cli::config::SEED_ENV;
use dynkin_cli::{
    cmd_perpetual, cmd_price, cmd_price_american, cmd_sweep, cmd_tree, cmd_verify, format_sig,
    sweep_csv, CliError, FileConfig, Overrides, RunConfig, EXIT_OK, EXIT_VERIFY_FAILED,
};

#[derive(Parser)]
#[command(name = "dynkin", version, about = "Game option pricing by two-mode optimal switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo value averaged over independent runs.
    Price {
        #[command(flatten)]
        common: Common,
        /// Price the plain American option instead.
        #[arg(long)]
        american: bool,
    },
    /// Values over horizons T = horizon * 2^q as CSV.
    Sweep(Common),
    /// Exact binomial tree values.
    Tree(Common),
    /// Perpetual closed-form values.
    Perpetual(Common),
    /// Invariant suite; exits 1 if any check fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    flags: Overrides,
    /// Write CSV output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let file = self.flags.config.as_deref().map(FileConfig::load).transpose()?;
        let env_seed = std::env::var(SEED_ENV).ok();
        RunConfig::resolve(file.as_ref(), env_seed.as_deref(), &self.flags)
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => print_stdout(text)?,
        }
        Ok(())
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn g(x: f64) -> String {
    format_sig(x, 10)
}

/// `writeln!` into a `String`, which cannot fail.
macro_rules! say {
    ($buf:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($buf, $($arg)*);
    }};
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut text = String::new();
    let code = match cli.command {
        Command::Price { common, american } => {
            let config = common.config()?;
            let report = if american { cmd_price_american(&config)? } else { cmd_price(&config)? };
            let mut csv = String::from("run,value\n");
            for (i, v) in report.per_run.iter().enumerate() {
                csv.push_str(&format!("{i},{}\n", g(*v)));
            }
            if common.out.is_some() {
                common.emit(&csv)?;
            }
            say!(
                text,
                "{} {} S0={} T={} M={} runs={} paths={}",
                if american { "american" } else { "cancellable" },
                config.market.kind,
                g(config.market.s0),
                g(config.grid.horizon()),
                config.grid.steps(),
                config.n_runs,
                config.n_paths
            );
            say!(text, "value     {}", g(report.mean));
            say!(text, "std_dev   {}", g(report.std_dev));
            say!(text, "std_error {}", g(report.std_error));
            EXIT_OK
        }
        Command::Sweep(common) => {
            let config = common.config()?;
            let rows = cmd_sweep(&config)?;
            common.emit(&sweep_csv(&rows))?;
            EXIT_OK
        }
        Command::Tree(common) => {
            let report = cmd_tree(&common.config()?)?;
            say!(text, "game      {}", g(report.v0));
            say!(text, "american  {}", g(report.american_v0));
            say!(text, "y0        {}", g(report.y0));
            say!(text, "y1        {}", g(report.y1));
            say!(text, "max |(Y1 - Y0) - V|   {:.3e}", report.identity_error);
            say!(text, "max band violation    {:.3e}", report.band_violation);
            say!(text, "  relative to max(1, |V|): {:.3e} / {:.3e}", report.identity_error_scaled, report.band_violation_scaled);
            say!(text, "double switch nodes   {}", report.double_switch_nodes);
            EXIT_OK
        }
        Command::Perpetual(common) => {
            let report = cmd_perpetual(&common.config()?)?;
            say!(text, "perpetual {} {}", report.kind, g(report.value));
            if let Some(p) = report.put {
                say!(text, "delta*    {}", g(p.delta_star));
                match p.k_star {
                    Some(k) => say!(text, "k*        {}", g(k)),
                    None => say!(text, "k*        none (penalty >= delta*)"),
                }
            }
            EXIT_OK
        }
        Command::Verify(common) => {
            let report = cmd_verify(&common.config()?)?;
            say!(text, "{report}");
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_VERIFY_FAILED
            }
        }
    };
    print_stdout(&text)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
