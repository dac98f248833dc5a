use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use qwcp::cli::{run_file, CliError, Execution, RunOptions, EXIT_VERIFICATION};
use qwcp::statevec::MeasureMode;

#[derive(Parser)]
#[command(name = "qwcp", version, about = "Quantum walk control protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Draw one measurement outcome from the seeded generator.
    Sample,
    /// Follow every measurement outcome with nonzero probability.
    Branch,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a protocol script and verify it against the oracle.
    Run {
        script: PathBuf,
        /// Network file, replacing the script's `network` line.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Sample)]
        mode: Mode,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final data-plane state of every branch.
        #[arg(long)]
        dump_state: Option<PathBuf>,
        /// Print walker supports per timestep to stderr.
        #[arg(long)]
        trace: bool,
        /// Write the compiled schedules as JSON.
        #[arg(long)]
        schedule_out: Option<PathBuf>,
    },
}

fn write(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn print_trace(e: &Execution) {
    for s in &e.report.supports {
        let walkers: Vec<String> = s
            .walkers
            .iter()
            .enumerate()
            .map(|(j, vs)| format!("w{j}={{{}}}", vs.join(",")))
            .collect();
        eprintln!("line {:>3} t={:>2}  {}", s.line, s.t, walkers.join(" "));
    }
    for m in &e.report.classical_messages {
        eprintln!(
            "line {:>3} branch {} message {} -> {} bits {:?}",
            m.line, m.branch, m.from, m.to, m.bits
        );
    }
}

fn main() -> ExitCode {
    let Cmd::Run {
        script,
        network,
        seed,
        mode,
        out,
        dump_state,
        trace,
        schedule_out,
    } = Cli::parse().command;
    let opts = RunOptions {
        seed,
        mode: match mode {
            Mode::Sample => MeasureMode::Sample(seed),
            Mode::Branch => MeasureMode::Branch,
        },
    };
    let result = run_file(&script, network.as_deref(), opts).and_then(|e| {
        if trace {
            print_trace(&e);
        }
        let json = e.report.to_json();
        match &out {
            Some(p) => write(p, &format!("{json}\n"))?,
            None => println!("{json}"),
        }
        if let Some(p) = &dump_state {
            let text: String = e
                .final_states
                .iter()
                .enumerate()
                .map(|(i, s)| format!("# branch {i}\n{}", s.dump()))
                .collect();
            write(p, &text)?;
        }
        if let Some(p) = &schedule_out {
            let items: Vec<serde_json::Value> = e
                .schedules
                .iter()
                .map(|(line, s)| {
                    serde_json::json!({
                        "line": line,
                        "schedule": s,
                    })
                })
                .collect();
            write(p, &serde_json::to_string_pretty(&items).expect("json"))?;
        }
        Ok(e.report.passed)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFICATION as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
