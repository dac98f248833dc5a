//! Script-driven front end: the script language, binding against a network and execution with a
//! JSON report.

mod exec;
mod script;

pub use exec::{
    execute, run_file, BranchReport, CliError, CommandReport, Execution, MeasurementReport, MessageReport, Report,
    RunOptions, SupportReport,
};
pub use script::{
    gate_text, parse_gate, parse_script, Command, GateSpec, InitValue, Line, MultipathBranch, ParseError, Script,
    StepCommand,
};

/// Exit code for a run that completed but failed verification.
pub const EXIT_VERIFICATION: i32 = 4;
