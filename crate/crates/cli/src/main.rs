//! `qx`: parse, simulate, expand, verify, and draw branch-decomposed
//! quantum circuits.
//!
//! Exit codes: 0 success, 1 parse or validation error, 2 verification
//! failure, 3 branch-budget or size-limit error. Diagnostics go to stderr;
//! stdout is byte-deterministic for identical invocations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qx_core::{
    export_trace_json_with, render_compact, render_extended, render_state, run_circuit_with,
    serialize_ir, verify_with, Circuit, CircuitError, DiagramOptions, EngineError,
    NamedStateRegistry, OracleError, OutputFormat, Policy, PolicyMode,
};

#[derive(Parser)]
#[command(
    name = "qx",
    version,
    about = "Branch-decomposed quantum circuit simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a circuit and echo its canonical JSON form.
    Parse(Common),
    /// Simulate and print the final state readout.
    Run(Common),
    /// Simulate and print the extended per-branch diagram (or trace JSON).
    Expand(Common),
    /// Simulate, compare against the dense reference, print the report.
    Verify(Common),
    /// Print the compact circuit diagram without simulating.
    Render(Common),
}

#[derive(Args)]
struct Common {
    /// Circuit file (.qc text, or canonical JSON).
    file: PathBuf,
    /// Branch policy: split or block.
    #[arg(long, default_value = "split")]
    policy: PolicyMode,
    /// Verification tolerance on fidelity.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Branch coefficient prune threshold (default keeps numerical dust only).
    #[arg(long)]
    prune: Option<f64>,
    /// Hard cap on simultaneous branches.
    #[arg(long, default_value_t = 4096)]
    max_branches: usize,
    /// Output format for expand: text or json.
    #[arg(long, default_value = "text")]
    format: String,
    /// Extra named-state registry JSON, merged over the built-in names.
    #[arg(long)]
    states: Option<PathBuf>,
    /// Significant digits in rendered amplitudes (1..=17).
    #[arg(long, default_value_t = 6)]
    precision: usize,
}

/// Failure plus the exit code its class maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        Failure::new(1, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::BranchBudgetExceeded { .. } => 3,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooManyQubits(_) => Failure::new(3, e.to_string()),
            OracleError::Engine(inner) => inner.into(),
            other => Failure::new(1, other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let (cmd, args) = match &cli.command {
        Command::Parse(a) => ("parse", a),
        Command::Run(a) => ("run", a),
        Command::Expand(a) => ("expand", a),
        Command::Verify(a) => ("verify", a),
        Command::Render(a) => ("render", a),
    };
    match dispatch(cmd, args) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

/// Writes to stdout; a closed pipe ends the run quietly instead of panicking.
fn out(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(Failure {
            code: 0,
            message: String::new(),
        }),
        Err(e) => Err(Failure::new(1, format!("cannot write output: {e}"))),
    }
}

fn check_args(args: &Common) -> Result<(), Failure> {
    if !args.tol.is_finite() || args.tol <= 0.0 {
        return Err(Failure::new(
            1,
            format!("--tol must be positive, got {}", args.tol),
        ));
    }
    if let Some(p) = args.prune {
        if !p.is_finite() || p <= 0.0 {
            return Err(Failure::new(
                1,
                format!("--prune must be positive, got {p}"),
            ));
        }
    }
    if args.precision == 0 || args.precision > 17 {
        return Err(Failure::new(
            1,
            format!(
                "--precision must be between 1 and 17, got {}",
                args.precision
            ),
        ));
    }
    if args.format != "text" && args.format != "json" {
        return Err(Failure::new(
            1,
            format!("--format must be text or json, got {}", args.format),
        ));
    }
    Ok(())
}

fn load_circuit(path: &Path) -> Result<Circuit, Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loader = |rel: &str| -> Result<String, String> {
        let p = dir.join(rel);
        std::fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))
    };
    Ok(qx_core::parse_circuit_with_loader(&src, &loader)?)
}

fn load_registry(args: &Common) -> Result<NamedStateRegistry, Failure> {
    let mut registry = NamedStateRegistry::default();
    let extra = match &args.states {
        Some(p) => Some(p.clone()),
        None => std::env::var_os("QX_STATES").map(PathBuf::from),
    };
    if let Some(p) = extra {
        let text = std::fs::read_to_string(&p)
            .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", p.display())))?;
        registry
            .load_json(&text)
            .map_err(|e| Failure::new(1, format!("{}: {e}", p.display())))?;
    }
    Ok(registry)
}

fn dispatch(cmd: &str, args: &Common) -> Result<u8, Failure> {
    check_args(args)?;
    let circuit = load_circuit(&args.file)?;
    let opts = DiagramOptions {
        format: if args.format == "json" {
            OutputFormat::Json
        } else {
            OutputFormat::Text
        },
        precision: args.precision,
        use_named_kets: true,
    };
    let policy = Policy::new(args.policy).with_max_branches(args.max_branches);
    let prune = args.prune.unwrap_or(qx_core::tol::EPS_PRUNE);
    match cmd {
        "parse" => {
            out(&format!("{}\n", serialize_ir(&circuit)))?;
            Ok(0)
        }
        "render" => {
            out(&render_compact(&circuit, &opts))?;
            Ok(0)
        }
        "run" => {
            let registry = load_registry(args)?;
            let r = run_circuit_with(&circuit, &policy, qx_core::tol::EPS_MERGE, prune)?;
            out(&format!(
                "{}\n",
                render_state(&r.final_state, &registry, &opts)
            ))?;
            Ok(0)
        }
        "expand" => {
            let registry = load_registry(args)?;
            let r = run_circuit_with(&circuit, &policy, qx_core::tol::EPS_MERGE, prune)?;
            match opts.format {
                OutputFormat::Json => {
                    out(&format!(
                        "{}\n",
                        export_trace_json_with(&r, &registry, opts.precision)
                    ))?;
                }
                OutputFormat::Text => out(&render_extended(&r, &registry, &opts))?,
            }
            Ok(0)
        }
        "verify" => {
            let report = verify_with(&circuit, &policy, args.tol, qx_core::tol::EPS_MERGE, prune)?;
            out(&format!("{}\n", report.to_json()))?;
            Ok(if report.pass { 0 } else { 2 })
        }
        _ => unreachable!("subcommands are exhaustive"),
    }
}
