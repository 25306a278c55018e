//! Operator commands shared by the interactive shell and scenario scripts.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use crate::cli::stats::{compute_stats, format_block};
use crate::descriptor::parse_descriptor;
use crate::executive::{EventKind, EventRecord, ExecutiveClient, LifecycleState};
use crate::registry::ComponentId;
use crate::rtsim::LatencySample;

pub const USAGE: &str = "commands: load <file> | enable <name> | disable <name> | start <name> | \
stop <name> | uninstall <name> | suspend <name> | resume <name> | set <name> <prop> <value> | \
status [name] | stats <name> | sleep <ms> | expect-state <name> <STATE> | help | quit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Load(String),
    Enable(String),
    Disable(String),
    Start(String),
    Stop(String),
    Uninstall(String),
    Suspend(String),
    Resume(String),
    Set { name: String, prop: String, value: String },
    Status(Option<String>),
    Stats(String),
    Sleep(u64),
    ExpectState { name: String, state: LifecycleState },
    Help,
    Quit,
}

pub fn parse_command(line: &str) -> Result<Command, String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let Some((&verb, args)) = words.split_first() else {
        return Err("empty command".into());
    };
    let one = |make: fn(String) -> Command| match args {
        [name] => Ok(make(name.to_string())),
        _ => Err(format!("{verb} takes exactly one argument")),
    };
    match verb {
        "load" => one(Command::Load),
        "enable" => one(Command::Enable),
        "disable" => one(Command::Disable),
        "start" => one(Command::Start),
        "stop" => one(Command::Stop),
        "uninstall" => one(Command::Uninstall),
        "suspend" => one(Command::Suspend),
        "resume" => one(Command::Resume),
        "stats" => one(Command::Stats),
        "set" => match args {
            [name, prop, value] => Ok(Command::Set {
                name: name.to_string(),
                prop: prop.to_string(),
                value: value.to_string(),
            }),
            _ => Err("set takes <name> <prop> <value>".into()),
        },
        "status" => match args {
            [] => Ok(Command::Status(None)),
            [name] => Ok(Command::Status(Some(name.to_string()))),
            _ => Err("status takes at most one argument".into()),
        },
        "sleep" => match args {
            [ms] => ms
                .parse()
                .map(Command::Sleep)
                .map_err(|_| format!("bad duration {ms:?}")),
            _ => Err("sleep takes <ms>".into()),
        },
        "expect-state" => match args {
            [name, state] => Ok(Command::ExpectState {
                name: name.to_string(),
                state: state.parse()?,
            }),
            _ => Err("expect-state takes <name> <STATE>".into()),
        },
        "help" => Ok(Command::Help),
        "quit" | "exit" => Ok(Command::Quit),
        other => Err(format!("unknown command {other:?}")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub ok: bool,
    pub lines: Vec<String>,
    pub quit: bool,
    /// Set when an `expect-state` did not hold.
    pub expectation_failed: bool,
}

impl Outcome {
    fn ok(lines: Vec<String>) -> Self {
        Outcome {
            ok: true,
            lines,
            ..Default::default()
        }
    }

    fn err(line: String) -> Self {
        Outcome {
            ok: false,
            lines: vec![line],
            ..Default::default()
        }
    }
}

/// Renders an event's effects: one line per state change, then warnings and the error.
pub fn format_record(record: &EventRecord) -> Vec<String> {
    let mut lines: Vec<String> = record.changes.iter().map(|c| format!("  {c}")).collect();
    lines.extend(record.warnings.iter().map(|w| format!("warning: {w}")));
    if let Some(e) = &record.error {
        lines.push(format!("error[{}]: {}", e.code, e.message));
    }
    lines
}

/// Executes commands against an executive running on its own thread.
pub struct Session {
    client: ExecutiveClient,
    base_dir: PathBuf,
    samples: BTreeMap<String, Vec<LatencySample>>,
}

impl Session {
    /// Relative `load` paths resolve against `base_dir`.
    pub fn new(client: ExecutiveClient, base_dir: impl Into<PathBuf>) -> Self {
        Session {
            client,
            base_dir: base_dir.into(),
            samples: BTreeMap::new(),
        }
    }

    pub fn client(&self) -> &ExecutiveClient {
        &self.client
    }

    /// Executive clock in ns.
    pub fn now_ns(&self) -> u64 {
        self.client.call(|e| e.now_ns()).unwrap_or(0)
    }

    pub fn advance_to(&self, t_ns: u64) {
        let _ = self.client.call(move |e| e.advance_to(t_ns));
    }

    fn lookup(&self, name: &str) -> Result<ComponentId, Outcome> {
        let n = name.to_string();
        match self.client.call(move |e| e.lookup(&n)) {
            Ok(Some(id)) => Ok(id),
            Ok(None) => Err(Outcome::err(format!("error[unknown-name]: no component named {name:?}"))),
            Err(e) => Err(Outcome::err(format!("error[closed]: {e}"))),
        }
    }

    fn submit(&self, kind: EventKind) -> Outcome {
        match self.client.submit(kind) {
            Ok(record) => Outcome {
                ok: record.error.is_none(),
                lines: format_record(&record),
                ..Default::default()
            },
            Err(e) => Outcome::err(format!("error[closed]: {e}")),
        }
    }

    fn on_named(&self, name: &str, make: impl FnOnce(ComponentId) -> EventKind) -> Outcome {
        match self.lookup(name) {
            Ok(id) => self.submit(make(id)),
            Err(o) => o,
        }
    }

    pub fn execute_line(&mut self, line: &str) -> Outcome {
        match parse_command(line) {
            Ok(cmd) => self.execute(&cmd),
            Err(e) => Outcome::err(format!("error[usage]: {e}\n{USAGE}")),
        }
    }

    pub fn execute(&mut self, cmd: &Command) -> Outcome {
        match cmd {
            Command::Load(path) => self.load(path),
            Command::Enable(n) => self.on_named(n, |id| EventKind::Enable { id }),
            Command::Disable(n) => self.on_named(n, |id| EventKind::Disable { id }),
            Command::Start(n) => self.on_named(n, |id| EventKind::Start { id }),
            Command::Stop(n) => self.on_named(n, |id| EventKind::Stop { id }),
            Command::Uninstall(n) => self.on_named(n, |id| EventKind::Uninstall { id }),
            Command::Suspend(n) => self.on_named(n, |id| EventKind::Suspend { id }),
            Command::Resume(n) => self.on_named(n, |id| EventKind::Resume { id }),
            Command::Set { name, prop, value } => self.on_named(name, |id| EventKind::SetProperty {
                id,
                name: prop.clone(),
                value: value.clone(),
            }),
            Command::Status(name) => self.status(name.as_deref()),
            Command::Stats(name) => self.stats(name),
            Command::Sleep(ms) => {
                let target = self.now_ns() + ms * 1_000_000;
                self.advance_to(target);
                Outcome::ok(vec![])
            }
            Command::ExpectState { name, state } => self.expect(name, *state),
            Command::Help => Outcome::ok(vec![USAGE.to_string()]),
            Command::Quit => Outcome {
                ok: true,
                quit: true,
                ..Default::default()
            },
        }
    }

    fn load(&self, path: &str) -> Outcome {
        let full = self.base_dir.join(path);
        let xml = match fs::read_to_string(&full) {
            Ok(x) => x,
            Err(e) => return Outcome::err(format!("error[io]: {}: {e}", full.display())),
        };
        match parse_descriptor(&xml) {
            Ok(descriptor) => {
                let mut out = self.submit(EventKind::Install { descriptor });
                if out.ok {
                    let id = self.client.call(|e| e.history().last().and_then(|r| r.assigned));
                    if let Ok(Some(id)) = id {
                        out.lines.insert(0, format!("installed {id}"));
                    }
                }
                out
            }
            Err(e) => Outcome::err(format!("error[{}]: {}: {e}", e.code(), full.display())),
        }
    }

    fn status(&self, name: Option<&str>) -> Outcome {
        let filter = match name {
            Some(n) => match self.lookup(n) {
                Ok(id) => Some(id),
                Err(o) => return o,
            },
            None => None,
        };
        let lines = self.client.call(move |e| {
            let mut lines = Vec::new();
            for inst in e.registry().instances() {
                if filter.is_some_and(|f| f != inst.id) {
                    continue;
                }
                let mut line = format!("{} {} {}", inst.id, inst.name(), inst.state);
                if inst.state == LifecycleState::Unsatisfied {
                    let last = e
                        .history()
                        .iter()
                        .rev()
                        .flat_map(|r| r.changes.iter().rev())
                        .find(|c| c.id == inst.id);
                    if let Some(c) = last {
                        line.push_str(&format!(" ({})", c.reason));
                    }
                }
                for b in &inst.bindings {
                    line.push_str(&format!(" [{b}]"));
                }
                if let Some((cpu, usage)) = e.ledger().claim_of(inst.id) {
                    line.push_str(&format!(" cpu{cpu}={usage}"));
                }
                lines.push(line);
            }
            if filter.is_none() {
                for (cpu, load) in e.ledger().per_cpu_load() {
                    lines.push(format!("cpu{cpu} load {load} / {}", e.ledger().cap()));
                }
            }
            lines
        });
        match lines {
            Ok(lines) => Outcome::ok(lines),
            Err(e) => Outcome::err(format!("error[closed]: {e}")),
        }
    }

    fn stats(&mut self, name: &str) -> Outcome {
        let id = match self.lookup(name) {
            Ok(id) => id,
            Err(o) => return o,
        };
        match self.client.call(move |e| e.collect_latency(id)) {
            Ok(Ok(fresh)) => {
                let all = self.samples.entry(name.to_string()).or_default();
                all.extend(fresh);
                let block = format_block(name, &compute_stats(all));
                Outcome::ok(block.lines().map(str::to_string).collect())
            }
            Ok(Err(e)) => Outcome::err(format!("error[{}]: {e}", e.code())),
            Err(e) => Outcome::err(format!("error[closed]: {e}")),
        }
    }

    fn expect(&self, name: &str, state: LifecycleState) -> Outcome {
        let n = name.to_string();
        let actual = self
            .client
            .call(move |e| e.lookup(&n).and_then(|id| e.state(id)))
            .ok()
            .flatten();
        if actual == Some(state) {
            Outcome::ok(vec![format!("ok: {name} is {state}")])
        } else {
            let shown = actual.map_or("absent".to_string(), |s| s.to_string());
            Outcome {
                ok: false,
                lines: vec![format!("expectation failed: {name} is {shown}, expected {state}")],
                expectation_failed: true,
                quit: false,
            }
        }
    }
}
