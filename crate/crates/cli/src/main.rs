use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use discrete_hj_cli::{execute, Command};

#[derive(Parser, Debug)]
#[command(name = "dhj", version, about = "Discrete Hamiltonian mechanics and discrete Hamilton-Jacobi experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for grid sweeps; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Iterate a discrete Hamiltonian map.
    Integrate(RunArgs),
    /// Discrete Riccati recurrence for a quadratic left Hamiltonian.
    Riccati(RunArgs),
    /// Discrete HJ residuals along Jacobi's solution.
    HjCheck(RunArgs),
    /// Grid dynamic programming for a linear-quadratic problem.
    Bellman(RunArgs),
    /// Grid dynamic programming over Galerkin steps.
    GalerkinBellman(RunArgs),
    /// Galerkin Heisenberg steps against the closed form.
    Heisenberg(RunArgs),
    /// Step-halving order study.
    Convergence(RunArgs),
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Sub::Integrate(a) => (Command::Integrate, a),
            Sub::Riccati(a) => (Command::Riccati, a),
            Sub::HjCheck(a) => (Command::HjCheck, a),
            Sub::Bellman(a) => (Command::Bellman, a),
            Sub::GalerkinBellman(a) => (Command::GalerkinBellman, a),
            Sub::Heisenberg(a) => (Command::Heisenberg, a),
            Sub::Convergence(a) => (Command::Convergence, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = cli.command.split();
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("error: cannot start {} threads: {e}", args.threads);
            return ExitCode::from(1);
        }
    }
    match execute(command, &args.config, &args.out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
