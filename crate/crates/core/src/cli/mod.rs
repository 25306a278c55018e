//! Operator tools: latency statistics, the command shell, scenario scripts and
//! the latency experiment.

pub mod demo;
pub mod experiment;
pub mod script;
pub mod session;
pub mod stats;

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

use crate::executive::{Executive, ExecutiveConfig};
use crate::resolver::plugins;
use crate::rtsim::{Container, VirtualContainer, WallClockContainer};

pub use experiment::{run_latency_experiment, ExperimentConfig, ExperimentReport, LoadMode};
pub use script::{parse_script, run_script, run_shell, ScenarioOutcome, Script, ScriptError};
pub use session::{parse_command, Command, Outcome, Session};
pub use stats::{compute_stats, LatencyStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    Wall,
    #[default]
    Virtual,
}

pub fn make_container(mode: ClockMode) -> Box<dyn Container> {
    match mode {
        ClockMode::Wall => Box::new(WallClockContainer::new()),
        ClockMode::Virtual => Box::new(VirtualContainer::new()),
    }
}

/// Executive with the demo bodies, an optional resolver plug-in and an optional log file.
pub fn build_executive(
    config: ExecutiveConfig,
    mode: ClockMode,
    resolver: Option<&str>,
    log: Option<&Path>,
) -> io::Result<Executive> {
    let mut exec = Executive::new(config, make_container(mode)).with_bodies(demo::demo_catalog(None));
    if let Some(name) = resolver {
        let service = plugins::by_name(name).ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidInput, format!("unknown resolver {name:?}"))
        })?;
        exec = exec.with_resolver(service);
    }
    if let Some(path) = log {
        exec = exec.with_log(Box::new(BufWriter::new(File::create(path)?)));
    }
    Ok(exec)
}
