use std::fs;
use std::io::{self, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rtexec::cli::{
    build_executive, parse_script, run_latency_experiment, run_script, run_shell, ClockMode,
    ExperimentConfig, LoadMode, Session,
};
use rtexec::descriptor::{parse_descriptor_with, serialize_descriptor, validate_name, NameCheck, ParseMode};
use rtexec::executive::{replay, ExecutiveConfig, ExecutiveHandle};
use rtexec::resolver::{AdmissionPolicy, DEFAULT_EXTERNAL_TIMEOUT};

#[derive(Parser, Debug)]
#[command(name = "rtexec", version, about = "Declarative real-time component executive")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Clock driving the task container.
    #[arg(long, value_enum, default_value_t = Mode::Virtual, global = true)]
    mode: Mode,
    /// Per-CPU admission cap, in (0, 1].
    #[arg(long, default_value_t = 1.0, global = true)]
    cap: f64,
    /// Internal admission policy.
    #[arg(long, value_enum, default_value_t = Policy::Util, global = true)]
    policy: Policy,
    /// External resolving plug-in: accept, reject, random[:seed[:p]].
    #[arg(long, global = true)]
    resolver: Option<String>,
    /// Write the event log (JSON lines) to this file.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    /// Reject component names longer than six characters.
    #[arg(long, global = true)]
    strict_six: bool,
    /// Do not restart cascaded instances when their providers come back.
    #[arg(long, global = true)]
    no_auto_restart: bool,
    /// External resolver timeout in milliseconds.
    #[arg(long, global = true)]
    resolver_timeout_ms: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Mode {
    Wall,
    Virtual,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Policy {
    Util,
    Rm,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Load {
    Light,
    Stress,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Interactive command shell (default).
    Shell,
    /// Run a timed scenario script.
    Run {
        script: PathBuf,
    },
    /// Wall-clock latency experiment with the calc/display pair.
    Experiment {
        #[arg(long, default_value_t = 1000.0)]
        calc_hz: f64,
        #[arg(long, default_value_t = 4.0)]
        display_hz: f64,
        /// Seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = Load::Light)]
        load: Load,
        /// Busy-loop threads in stress mode (default: one per core).
        #[arg(long)]
        burners: Option<usize>,
        /// Write the statistics as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write every calc latency sample as CSV to this file.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Print what the display task reads.
        #[arg(long)]
        verbose: bool,
    },
    /// Replay an event log on a fresh executive and compare byte for byte.
    Replay {
        log: PathBuf,
    },
    /// Parse and validate descriptor files.
    Check {
        files: Vec<PathBuf>,
        /// Warn about unknown elements and attributes instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Print the normalized descriptor.
        #[arg(long)]
        print: bool,
    },
}

impl Global {
    fn config(&self) -> ExecutiveConfig {
        ExecutiveConfig {
            cap: self.cap,
            policy: match self.policy {
                Policy::Util => AdmissionPolicy::Utilization,
                Policy::Rm => AdmissionPolicy::RateMonotonic,
            },
            auto_restart: !self.no_auto_restart,
            strict_six: self.strict_six,
            resolver_timeout: self
                .resolver_timeout_ms
                .map_or(DEFAULT_EXTERNAL_TIMEOUT, Duration::from_millis),
        }
    }

    fn mode(&self) -> ClockMode {
        match self.mode {
            Mode::Wall => ClockMode::Wall,
            Mode::Virtual => ClockMode::Virtual,
        }
    }

    fn session(&self, log: Option<&Path>, base: &Path) -> Result<(ExecutiveHandle, Session), String> {
        let exec = build_executive(self.config(), self.mode(), self.resolver.as_deref(), log)
            .map_err(|e| e.to_string())?;
        let handle = ExecutiveHandle::spawn(exec);
        let session = Session::new(handle.client(), base);
        Ok((handle, session))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.global.cap > 0.0 && cli.global.cap <= 1.0) {
        eprintln!("--cap must be in (0, 1]");
        return ExitCode::from(2);
    }
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<i32, String> {
    let g = cli.global;
    match cli.command.unwrap_or(Cmd::Shell) {
        Cmd::Shell => {
            let (handle, mut session) = g.session(g.log.as_deref(), Path::new("."))?;
            let interactive = io::stdin().is_terminal();
            let code = run_shell(io::stdin().lock(), io::stdout().lock(), &mut session, interactive);
            drop(session);
            drop(handle);
            Ok(code)
        }
        Cmd::Run { script } => {
            let text = fs::read_to_string(&script).map_err(|e| format!("{}: {e}", script.display()))?;
            let parsed = parse_script(&text).map_err(|e| format!("{}: {e}", script.display()))?;
            let base = script.parent().unwrap_or(Path::new(".")).to_path_buf();
            let (handle, mut session) = g.session(g.log.as_deref(), &base)?;
            let outcome = run_script(&parsed, &mut session);
            drop(session);
            drop(handle);
            for line in &outcome.transcript {
                println!("{line}");
            }
            for f in &outcome.failures {
                eprintln!("FAILED {f}");
            }
            Ok(outcome.exit_code())
        }
        Cmd::Experiment {
            calc_hz,
            display_hz,
            duration,
            load,
            burners,
            csv,
            samples,
            verbose,
        } => {
            if !(calc_hz > 0.0 && display_hz > 0.0 && duration > 0.0) {
                return Err("rates and duration must be positive".into());
            }
            let load = match load {
                Load::Light => LoadMode::Light,
                Load::Stress => LoadMode::Stress,
            };
            let mut config = ExperimentConfig::new(calc_hz, display_hz, duration, load);
            config.executive = g.config();
            config.verbose = verbose;
            if let Some(n) = burners {
                config.burners = n;
            }
            let report = run_latency_experiment(&config).map_err(|e| e.to_string())?;
            print!("{}", report.table());
            println!(
                "elapsed {:.3} s, {} calc samples, {} display reads",
                report.elapsed.as_secs_f64(),
                report.calc_samples.len(),
                report.display_reads.len()
            );
            if let Some(path) = csv {
                fs::write(&path, report.csv()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            if let Some(path) = samples {
                let mut buf = Vec::new();
                rtexec::rtsim::write_latency_csv(&mut buf, &report.calc_samples, |_| "calc".to_string())
                    .map_err(|e| e.to_string())?;
                fs::write(&path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(0)
        }
        Cmd::Replay { log } => {
            let text = fs::read_to_string(&log).map_err(|e| format!("{}: {e}", log.display()))?;
            let mut exec = build_executive(g.config(), ClockMode::Virtual, g.resolver.as_deref(), None)
                .map_err(|e| e.to_string())?;
            let report = replay(&mut exec, &text).map_err(|(line, e)| format!("line {line}: {e}"))?;
            for m in &report.mismatches {
                println!("line {} differs\n  logged:   {}\n  replayed: {}", m.line, m.expected, m.actual);
            }
            println!(
                "{} events replayed, {} mismatches",
                report.events,
                report.mismatches.len()
            );
            Ok(i32::from(!report.is_identical()))
        }
        Cmd::Check { files, lenient, print } => {
            let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
            let mut failed = false;
            for path in &files {
                let text = match fs::read_to_string(path) {
                    Ok(t) => t,
                    Err(e) => {
                        println!("{}: error[io]: {e}", path.display());
                        failed = true;
                        continue;
                    }
                };
                match parse_descriptor_with(&text, mode) {
                    Ok(parsed) => {
                        let d = &parsed.descriptor;
                        println!("{}: ok ({} {})", path.display(), d.name, d.task_type.as_str());
                        for w in &parsed.warnings {
                            println!("  warning: {w}");
                        }
                        match validate_name(&d.name, g.strict_six) {
                            Ok(NameCheck::Warning) => {
                                println!("  warning: name {:?} is longer than six characters", d.name)
                            }
                            Ok(NameCheck::Ok) => {}
                            Err(e) => {
                                println!("  error[invalid-name]: {e}");
                                failed = true;
                            }
                        }
                        if print {
                            print!("{}", serialize_descriptor(d));
                        }
                    }
                    Err(e) => {
                        println!("{}: error[{}]: {e}", path.display(), e.code());
                        failed = true;
                    }
                }
            }
            Ok(i32::from(failed))
        }
    }
}
