//! The real-time execution plane.
//!
//! ACTIVE components run here as fixed-priority periodic (or mailbox-triggered
//! aperiodic) tasks. Two containers implement [`Container`]:
//! [`VirtualContainer`] advances a logical clock deterministically and is what
//! the correctness tests use; [`WallClockContainer`] runs one OS thread per task
//! against the host's monotonic clock.
//!
//! Each task's loop is: wait for the release, record a latency sample, run the
//! body's step, drain the command mailbox without blocking, advance the release
//! to `t0 + k * period`.

use std::any::Any;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::sync::atomic::AtomicBool;
use std::sync::mpsc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{ComponentDescriptor, PortSpec, TaskType};
use crate::registry::ComponentId;

pub mod channels;
mod virtual_time;
mod wall_clock;

pub use channels::{
    BoundedQueue, Channel, ChannelError, MailboxChannel, OutputPort, Payload, SharedMemoryChannel,
    ShmSnapshot, DEFAULT_MAILBOX_CAPACITY,
};
pub use virtual_time::VirtualContainer;
pub use wall_clock::WallClockContainer;

pub const DEFAULT_COMMAND_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Running,
    Suspended,
    Terminating,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskControlBlock {
    pub component_id: ComponentId,
    /// Zero for aperiodic tasks.
    pub period_ns: u64,
    pub priority: u32,
    /// Advisory only.
    pub cpu: u32,
    pub status: TaskStatus,
    pub next_release: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub task: ComponentId,
    pub release_expected: u64,
    pub release_actual: u64,
    /// `release_actual - release_expected`.
    pub latency_ns: i64,
}

impl LatencySample {
    pub fn new(task: ComponentId, release_expected: u64, latency_ns: i64) -> Self {
        LatencySample {
            task,
            release_expected,
            release_actual: release_expected.saturating_add_signed(latency_ns),
            latency_ns,
        }
    }
}

/// Writes samples as `task,release_expected_ns,release_actual_ns,latency_ns` CSV.
/// `label` maps a task id to the name written in the first column.
pub fn write_latency_csv<W: Write>(
    out: &mut W,
    samples: &[LatencySample],
    label: impl Fn(ComponentId) -> String,
) -> io::Result<()> {
    writeln!(out, "task,release_expected_ns,release_actual_ns,latency_ns")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{}",
            label(s.task),
            s.release_expected,
            s.release_actual,
            s.latency_ns
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub component: ComponentId,
    pub status: TaskStatus,
    pub properties: BTreeMap<String, String>,
    pub last_sample: Option<LatencySample>,
    pub steps: u64,
}

/// Asynchronous management command, applied by the task at its next period boundary.
#[derive(Debug, Clone)]
pub enum ManagementCommand {
    Suspend,
    Resume,
    SetProperty { name: String, value: String },
    QueryStatus(mpsc::Sender<StatusReport>),
    Terminate,
}

impl ManagementCommand {
    pub fn label(&self) -> &'static str {
        match self {
            ManagementCommand::Suspend => "suspend",
            ManagementCommand::Resume => "resume",
            ManagementCommand::SetProperty { .. } => "set-property",
            ManagementCommand::QueryStatus(_) => "query-status",
            ManagementCommand::Terminate => "terminate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandEnvelope {
    pub command: ManagementCommand,
    pub posted_at_ns: u64,
}

pub type CommandMailbox = BoundedQueue<CommandEnvelope>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RtError {
    #[error("unknown task {0}")]
    UnknownTask(ComponentId),
    #[error("command queue of task {0} is full")]
    CommandQueueFull(ComponentId),
    #[error("cannot spawn task {task}: {reason}")]
    SpawnFailure { task: ComponentId, reason: String },
}

impl RtError {
    pub fn code(&self) -> &'static str {
        match self {
            RtError::UnknownTask(_) => "unknown-task",
            RtError::CommandQueueFull(_) => "command-queue-full",
            RtError::SpawnFailure { .. } => "spawn-failure",
        }
    }
}

/// Port handles visible to a task body.
#[derive(Debug, Default, Clone)]
pub struct PortSet {
    inputs: BTreeMap<String, Channel>,
    outputs: BTreeMap<String, OutputPort>,
}

impl PortSet {
    pub fn input(&self, name: &str) -> Option<&Channel> {
        self.inputs.get(name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputPort> {
        self.outputs.get(name)
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.keys().map(String::as_str)
    }
}

/// What a task body sees during `init`, `step` and `uninit`.
pub struct TaskContext<'a> {
    pub component: ComponentId,
    pub name: &'a str,
    /// Time the step actually started.
    pub now_ns: u64,
    pub release_index: u64,
    /// Latency sample of the current release, if sampling is on.
    pub latency: Option<LatencySample>,
    pub properties: &'a BTreeMap<String, String>,
    pub ports: &'a PortSet,
}

impl TaskContext<'_> {
    pub fn property(&self, name: &str) -> Option<&str> {
        self.properties.get(name).map(String::as_str)
    }

    pub fn write(&self, port: &str, data: Payload) -> Result<u64, ChannelError> {
        self.ports
            .output(port)
            .ok_or_else(|| ChannelError::UnknownPort(port.into()))?
            .write(data)
    }

    pub fn read_shm(&self, port: &str) -> Result<Option<Arc<ShmSnapshot>>, ChannelError> {
        match self.ports.input(port) {
            Some(Channel::SharedMemory(shm)) => Ok(shm.read()),
            Some(Channel::Mailbox(_)) => Err(ChannelError::WrongTransport(port.into())),
            None => Err(ChannelError::UnknownPort(port.into())),
        }
    }

    pub fn recv(&self, port: &str) -> Result<Option<Payload>, ChannelError> {
        match self.ports.input(port) {
            Some(Channel::Mailbox(mbx)) => Ok(mbx.recv()),
            Some(Channel::SharedMemory(_)) => Err(ChannelError::WrongTransport(port.into())),
            None => Err(ChannelError::UnknownPort(port.into())),
        }
    }
}

/// The real-time part of a component.
pub trait TaskBody: Send {
    /// Runs once before the first release.
    fn init(&mut self, _ctx: &mut TaskContext<'_>) {}

    fn step(&mut self, ctx: &mut TaskContext<'_>);

    /// Runs once when the task terminates.
    fn uninit(&mut self, _ctx: &mut TaskContext<'_>) {}
}

/// A body that does nothing; used when no implementation is registered for a bincode.
#[derive(Debug, Default)]
pub struct IdleBody;

impl TaskBody for IdleBody {
    fn step(&mut self, _ctx: &mut TaskContext<'_>) {}
}

type BodyMaker = Box<dyn Fn(&ComponentDescriptor) -> Box<dyn TaskBody> + Send>;

/// Maps implementation identifiers (`bincode`) to task body constructors.
#[derive(Default)]
pub struct BodyCatalog {
    makers: HashMap<String, BodyMaker>,
}

impl fmt::Debug for BodyCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BodyCatalog")
            .field("bincodes", &self.makers.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BodyCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        bincode: impl Into<String>,
        maker: impl Fn(&ComponentDescriptor) -> Box<dyn TaskBody> + Send + 'static,
    ) {
        self.makers.insert(bincode.into(), Box::new(maker));
    }

    /// Unknown bincodes get an [`IdleBody`].
    pub fn instantiate(&self, descriptor: &ComponentDescriptor) -> Box<dyn TaskBody> {
        match self.makers.get(&descriptor.bincode) {
            Some(make) => make(descriptor),
            None => Box::new(IdleBody),
        }
    }
}

/// Input port wiring: the consumer's inport and the provider channel it reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputWire {
    pub port: PortSpec,
    pub provider: ComponentId,
    pub provider_port: String,
}

/// Everything a container needs to start one task.
pub struct TaskLaunch {
    pub component: ComponentId,
    pub name: String,
    pub task_type: TaskType,
    /// Zero for aperiodic tasks.
    pub period_ns: u64,
    pub priority: u32,
    pub cpu: u32,
    pub body: Box<dyn TaskBody>,
    pub properties: BTreeMap<String, String>,
    pub outports: Vec<PortSpec>,
    pub inports: Vec<InputWire>,
}

impl fmt::Debug for TaskLaunch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskLaunch")
            .field("component", &self.component)
            .field("name", &self.name)
            .field("task_type", &self.task_type)
            .field("period_ns", &self.period_ns)
            .field("priority", &self.priority)
            .finish_non_exhaustive()
    }
}

impl TaskLaunch {
    pub fn from_descriptor(
        component: ComponentId,
        descriptor: &ComponentDescriptor,
        body: Box<dyn TaskBody>,
        inports: Vec<InputWire>,
    ) -> Self {
        let (period_ns, priority, cpu) = descriptor
            .task
            .as_ref()
            .map_or((0, u32::MAX, 0), |t| (t.period_ns(), t.priority, t.run_on_cpu));
        TaskLaunch {
            component,
            name: descriptor.name.clone(),
            task_type: descriptor.task_type,
            period_ns,
            priority,
            cpu,
            body,
            properties: descriptor
                .properties
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
            outports: descriptor.outports.clone(),
            inports,
        }
    }
}

/// Outport channels of every live provider, keyed by `(provider, port name)`.
#[derive(Debug, Default)]
pub(crate) struct ChannelTable {
    channels: HashMap<(ComponentId, String), Channel>,
    mailbox_capacity: usize,
}

impl ChannelTable {
    pub(crate) fn new(mailbox_capacity: usize) -> Self {
        ChannelTable {
            channels: HashMap::new(),
            mailbox_capacity,
        }
    }

    /// Creates the launch's outport channels and looks up its inport channels.
    pub(crate) fn wire(&mut self, launch: &TaskLaunch, live: &Arc<AtomicBool>) -> Result<PortSet, RtError> {
        let mut ports = PortSet::default();
        for wire in &launch.inports {
            let channel = self
                .channels
                .get(&(wire.provider, wire.provider_port.clone()))
                .cloned()
                .ok_or_else(|| RtError::SpawnFailure {
                    task: launch.component,
                    reason: format!(
                        "no channel {}.{} for inport {}",
                        wire.provider, wire.provider_port, wire.port.name
                    ),
                })?;
            ports.inputs.insert(wire.port.name.clone(), channel);
        }
        for port in &launch.outports {
            let channel = Channel::for_port(port, self.mailbox_capacity);
            self.channels
                .insert((launch.component, port.name.clone()), channel.clone());
            ports
                .outputs
                .insert(port.name.clone(), OutputPort::new(channel, live.clone()));
        }
        Ok(ports)
    }

    pub(crate) fn remove_provider(&mut self, provider: ComponentId) {
        self.channels.retain(|(id, _), _| *id != provider);
    }

    pub(crate) fn get(&self, provider: ComponentId, port: &str) -> Option<Channel> {
        self.channels.get(&(provider, port.to_string())).cloned()
    }
}

/// First mailbox inport of an aperiodic task: its activation source.
pub(crate) fn trigger_mailbox(launch: &TaskLaunch, ports: &PortSet) -> Option<Arc<MailboxChannel>> {
    if launch.task_type != TaskType::Aperiodic {
        return None;
    }
    launch.inports.iter().find_map(|w| match ports.input(&w.port.name) {
        Some(Channel::Mailbox(m)) => Some(m.clone()),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    Init,
    Step { release_index: u64 },
    /// Release passed while suspended.
    Skip { release_index: u64 },
    CommandDrained { command: String, posted_at_ns: u64 },
    Terminated,
}

/// One dispatcher action, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub task: ComponentId,
    pub priority: u32,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Writes the trace as line-delimited JSON.
pub fn write_trace<W: Write>(out: &mut W, trace: &[TraceRecord]) -> io::Result<()> {
    for record in trace {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Release latency injected by the virtual-time container.
pub trait LatencyModel: Send {
    fn latency_ns(&mut self, task: ComponentId, release_index: u64) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroLatency;

impl LatencyModel for ZeroLatency {
    fn latency_ns(&mut self, _: ComponentId, _: u64) -> i64 {
        0
    }
}

/// Cycles through a fixed list of latencies.
#[derive(Debug, Clone)]
pub struct ScriptedLatency {
    values: Vec<i64>,
    next: usize,
}

impl ScriptedLatency {
    pub fn new(values: Vec<i64>) -> Self {
        assert!(!values.is_empty());
        ScriptedLatency { values, next: 0 }
    }
}

impl LatencyModel for ScriptedLatency {
    fn latency_ns(&mut self, _: ComponentId, _: u64) -> i64 {
        let v = self.values[self.next % self.values.len()];
        self.next += 1;
        v
    }
}

/// Seeded uniform jitter in `[-spread, spread]` around `offset`.
#[derive(Debug, Clone)]
pub struct UniformJitter {
    rng: ChaCha8Rng,
    offset: i64,
    spread: i64,
}

impl UniformJitter {
    pub fn new(seed: u64, offset: i64, spread: i64) -> Self {
        UniformJitter {
            rng: ChaCha8Rng::seed_from_u64(seed),
            offset,
            spread: spread.abs(),
        }
    }
}

impl LatencyModel for UniformJitter {
    fn latency_ns(&mut self, _: ComponentId, _: u64) -> i64 {
        self.offset + self.rng.gen_range(-self.spread..=self.spread)
    }
}

/// Execution plane used by the executive.
pub trait Container: Send {
    /// Runs the body's init hook and schedules the first release at the current time.
    fn spawn(&mut self, launch: TaskLaunch) -> Result<(), RtError>;

    /// Stops the task at its next boundary; its outport channels leave the table now.
    fn terminate(&mut self, task: ComponentId) -> Result<(), RtError>;

    fn post_command(&mut self, task: ComponentId, command: ManagementCommand) -> Result<(), RtError>;

    /// Samples recorded since the previous collection, by expected release.
    fn collect_latency(&mut self, task: ComponentId) -> Result<Vec<LatencySample>, RtError>;

    fn status(&self, task: ComponentId) -> Option<TaskStatus>;

    /// Container time in nanoseconds since its epoch.
    fn now_ns(&self) -> u64;

    /// Lets time pass until `t_ns` (virtual: runs the schedule; wall: sleeps).
    fn advance_to(&mut self, t_ns: u64);

    /// Terminates every task and waits for them.
    fn shutdown(&mut self) {}

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// State shared by both containers' command handling.
pub(crate) struct CommandEffect {
    pub suspend: Option<bool>,
    pub terminate: bool,
}

/// Applies one drained command to a task's property map; replies to status queries.
pub(crate) fn apply_command(
    command: ManagementCommand,
    properties: &mut BTreeMap<String, String>,
    report: impl FnOnce(&BTreeMap<String, String>) -> StatusReport,
) -> CommandEffect {
    let mut effect = CommandEffect {
        suspend: None,
        terminate: false,
    };
    match command {
        ManagementCommand::Suspend => effect.suspend = Some(true),
        ManagementCommand::Resume => effect.suspend = Some(false),
        ManagementCommand::SetProperty { name, value } => {
            properties.insert(name, value);
        }
        ManagementCommand::QueryStatus(reply) => {
            // The requester may have gone away; nothing to do then.
            let _ = reply.send(report(properties));
        }
        ManagementCommand::Terminate => effect.terminate = true,
    }
    effect
}
