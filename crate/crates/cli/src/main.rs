mod commands;
mod report;
mod selftest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daecan_core::{Options, DEFAULT_GRID_N, DEFAULT_RANK_TOL};

use commands::{FixtureArgs, FixtureName, Output, Settings};

/// Regularity, index and canonical subspaces of linear DAEs E(t)x' + F(t)x = q.
#[derive(Parser)]
#[command(name = "daecan", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Number of uniform grid nodes.
    #[arg(long, global = true, default_value_t = DEFAULT_GRID_N)]
    grid_n: usize,
    /// Relative tolerance of every rank decision.
    #[arg(long, global = true, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Seed for generated fixtures.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report (or CSV) here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Full analysis: verdict, characteristic values, canonical subspaces.
    Analyze {
        file: String,
        /// Also report S_can, N_can and Π_can at these times.
        #[arg(long, allow_negative_numbers = true)]
        at: Vec<f64>,
    },
    /// Constant-pencil analysis, freezing time-varying coefficients.
    Pencil {
        file: String,
        /// Freeze time (default: start of the interval).
        #[arg(long, allow_negative_numbers = true)]
        at: Option<f64>,
    },
    /// Orthonormal bases of S_can(t), N_can(t) and the projector Π_can(t).
    Subspaces {
        file: String,
        #[arg(long, allow_negative_numbers = true)]
        at: f64,
    },
    /// Matrix G_a of accurately stated initial conditions at t = a.
    IcMatrix {
        file: String,
        #[arg(long, allow_negative_numbers = true)]
        at: f64,
    },
    /// Solve the initial value problem and print the trajectory as CSV.
    Solve {
        file: String,
        /// Initial data x_a, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        ic: Vec<f64>,
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
    },
    /// Run the bundled fixture checks.
    Selftest,
    /// Print a built-in fixture as a problem file.
    ExportFixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        rho: f64,
        /// Differential components of the semi-explicit fixture.
        #[arg(long, default_value_t = 2)]
        r: usize,
        /// Algebraic components of the semi-explicit fixture.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Dimension of the planted fixture.
        #[arg(long, default_value_t = 6)]
        m: usize,
        /// θ profile of the planted fixture, ending in 0.
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        profile: Vec<usize>,
        #[arg(long)]
        time_varying: bool,
    },
}

fn render(report: &report::Report, format: Format) -> String {
    match format {
        Format::Text => report.human(),
        Format::Machine => report.machine(),
    }
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn run(cli: Cli) -> Result<u8, commands::Failure> {
    let g = &cli.global;
    if g.grid_n < 2 || !(g.rank_tol > 0.0) {
        return Err(commands::Failure::usage(
            "--grid-n must be at least 2 and --rank-tol positive",
        ));
    }
    let settings = Settings {
        opts: Options::default().with_grid(g.grid_n).with_rank_tol(g.rank_tol),
        seed: g.seed,
    };
    let output = match &cli.command {
        Command::Analyze { file, at } => commands::analyze(&commands::load(file)?, &settings, at),
        Command::Pencil { file, at } => commands::pencil(&commands::load(file)?, &settings, *at),
        Command::Subspaces { file, at } => commands::subspaces(&commands::load(file)?, &settings, *at),
        Command::IcMatrix { file, at } => commands::ic_matrix_cmd(&commands::load(file)?, &settings, *at),
        Command::Solve { file, ic, from, to } => commands::solve(&commands::load(file)?, &settings, ic, *from, *to),
        Command::Selftest => commands::selftest(&settings),
        Command::ExportFixture {
            name,
            rho,
            r,
            k,
            m,
            profile,
            time_varying,
        } => {
            let args = FixtureArgs {
                rho: *rho,
                r: *r,
                k: *k,
                m: *m,
                profile: profile.clone(),
                time_varying: *time_varying,
            };
            commands::export_fixture(*name, &args, settings.seed)
        }
    }?;
    let io = |e: String| commands::Failure { code: 1, message: e };
    match output {
        Output::Report(report, code) => {
            emit(&g.out, &render(&report, g.format)).map_err(io)?;
            Ok(code)
        }
        Output::Raw(body, summary) => {
            emit(&g.out, &body).map_err(io)?;
            if let Some(summary) = summary {
                eprint!("{}", render(&summary, g.format));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; usage errors exit 1.
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("daecan: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
