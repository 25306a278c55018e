use std::any::Any;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{
    apply_command, trigger_mailbox, ChannelTable, CommandEnvelope, CommandMailbox, Container,
    LatencySample, MailboxChannel, ManagementCommand, PortSet, RtError, StatusReport, TaskBody,
    TaskContext, TaskLaunch, TaskStatus, TraceEvent, TraceRecord, DEFAULT_COMMAND_CAPACITY,
    DEFAULT_MAILBOX_CAPACITY,
};
use crate::descriptor::TaskType;
use crate::registry::ComponentId;

/// Final stretch before a release that is busy-waited instead of slept.
const SPIN_WINDOW: Duration = Duration::from_micros(50);
/// How often an idle aperiodic worker re-checks its command mailbox.
const APERIODIC_POLL: Duration = Duration::from_millis(5);

struct Shared {
    status: Mutex<TaskStatus>,
    samples: Mutex<Vec<LatencySample>>,
    terminate: AtomicBool,
}

struct WallTask {
    shared: Arc<Shared>,
    commands: Arc<CommandMailbox>,
    handle: Option<JoinHandle<()>>,
}

#[derive(Clone)]
struct Clock {
    epoch: Instant,
}

impl Clock {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    /// Sleeps until `deadline_ns`; false if `stop` was raised first.
    fn sleep_until(&self, deadline_ns: u64, stop: &AtomicBool) -> bool {
        let spin_ns = SPIN_WINDOW.as_nanos() as u64;
        loop {
            if stop.load(Ordering::Acquire) {
                return false;
            }
            let now = self.now_ns();
            if now + spin_ns >= deadline_ns {
                break;
            }
            thread::park_timeout(Duration::from_nanos(deadline_ns - spin_ns - now));
        }
        while self.now_ns() < deadline_ns {
            std::hint::spin_loop();
        }
        !stop.load(Ordering::Acquire)
    }
}

/// Runs every task on its own OS thread against the host monotonic clock.
///
/// Priorities and CPU pins are recorded but not applied to the host scheduler,
/// so measured latencies reflect an ordinary time-sharing kernel.
pub struct WallClockContainer {
    clock: Clock,
    tasks: HashMap<ComponentId, WallTask>,
    retired: BTreeMap<ComponentId, Vec<LatencySample>>,
    channels: ChannelTable,
    trace: Arc<Mutex<Vec<TraceRecord>>>,
    sampling: bool,
}

impl Default for WallClockContainer {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for WallClockContainer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct Worker {
    id: ComponentId,
    name: String,
    task_type: TaskType,
    period_ns: u64,
    priority: u32,
    body: Box<dyn TaskBody>,
    properties: BTreeMap<String, String>,
    ports: PortSet,
    live: Arc<AtomicBool>,
    trigger: Option<Arc<MailboxChannel>>,
    shared: Arc<Shared>,
    commands: Arc<CommandMailbox>,
    trace: Arc<Mutex<Vec<TraceRecord>>>,
    clock: Clock,
    sampling: bool,
    steps: u64,
    last_sample: Option<LatencySample>,
}

impl Worker {
    fn record(&self, event: TraceEvent) {
        self.trace.lock().unwrap().push(TraceRecord {
            time_ns: self.clock.now_ns(),
            task: self.id,
            priority: self.priority,
            event,
        });
    }

    fn status(&self) -> TaskStatus {
        *self.shared.status.lock().unwrap()
    }

    fn step(&mut self, release_index: u64, now_ns: u64, latency: Option<LatencySample>) {
        let mut ctx = TaskContext {
            component: self.id,
            name: &self.name,
            now_ns,
            release_index,
            latency,
            properties: &self.properties,
            ports: &self.ports,
        };
        self.body.step(&mut ctx);
        self.steps += 1;
    }

    /// Returns true when a Terminate command was drained.
    fn drain(&mut self) -> bool {
        let mut terminate = false;
        for envelope in self.commands.drain() {
            let label = envelope.command.label();
            let status = self.status();
            let (id, last, steps) = (self.id, self.last_sample, self.steps);
            let effect = apply_command(envelope.command, &mut self.properties, |props| StatusReport {
                component: id,
                status,
                properties: props.clone(),
                last_sample: last,
                steps,
            });
            if let Some(suspend) = effect.suspend {
                let mut s = self.shared.status.lock().unwrap();
                if *s != TaskStatus::Terminating {
                    *s = if suspend {
                        TaskStatus::Suspended
                    } else {
                        TaskStatus::Running
                    };
                }
            }
            terminate |= effect.terminate;
            self.record(TraceEvent::CommandDrained {
                command: label.to_string(),
                posted_at_ns: envelope.posted_at_ns,
            });
        }
        terminate
    }

    fn run(mut self) {
        let now = self.clock.now_ns();
        {
            let mut ctx = TaskContext {
                component: self.id,
                name: &self.name,
                now_ns: now,
                release_index: 0,
                latency: None,
                properties: &self.properties,
                ports: &self.ports,
            };
            self.body.init(&mut ctx);
        }
        self.record(TraceEvent::Init);
        match self.task_type {
            TaskType::Periodic => self.run_periodic(now),
            TaskType::Aperiodic => self.run_aperiodic(),
        }
        let now = self.clock.now_ns();
        {
            let mut ctx = TaskContext {
                component: self.id,
                name: &self.name,
                now_ns: now,
                release_index: 0,
                latency: None,
                properties: &self.properties,
                ports: &self.ports,
            };
            self.body.uninit(&mut ctx);
        }
        self.live.store(false, Ordering::Release);
        *self.shared.status.lock().unwrap() = TaskStatus::Terminated;
        self.record(TraceEvent::Terminated);
    }

    fn run_periodic(&mut self, t0: u64) {
        let mut k = 0u64;
        loop {
            let expected = t0 + k * self.period_ns;
            if !self.clock.sleep_until(expected, &self.shared.terminate) {
                return;
            }
            let actual = self.clock.now_ns();
            if self.status() == TaskStatus::Suspended {
                self.record(TraceEvent::Skip { release_index: k });
            } else {
                let sample = LatencySample {
                    task: self.id,
                    release_expected: expected,
                    release_actual: actual,
                    latency_ns: actual as i64 - expected as i64,
                };
                if self.sampling {
                    self.shared.samples.lock().unwrap().push(sample);
                }
                self.last_sample = Some(sample);
                self.record(TraceEvent::Step { release_index: k });
                self.step(k, actual, Some(sample));
            }
            if self.drain() {
                return;
            }
            k += 1;
        }
    }

    fn run_aperiodic(&mut self) {
        let mut k = 0u64;
        while !self.shared.terminate.load(Ordering::Acquire) {
            let triggered = match &self.trigger {
                Some(m) => m.wait_nonempty(APERIODIC_POLL),
                None => {
                    thread::park_timeout(APERIODIC_POLL);
                    false
                }
            };
            if self.shared.terminate.load(Ordering::Acquire) {
                return;
            }
            if triggered && self.status() != TaskStatus::Suspended {
                self.record(TraceEvent::Step { release_index: k });
                let now = self.clock.now_ns();
                self.step(k, now, None);
                k += 1;
            }
            if self.drain() {
                return;
            }
        }
    }
}

impl WallClockContainer {
    pub fn new() -> Self {
        WallClockContainer {
            clock: Clock {
                epoch: Instant::now(),
            },
            tasks: HashMap::new(),
            retired: BTreeMap::new(),
            channels: ChannelTable::new(DEFAULT_MAILBOX_CAPACITY),
            trace: Arc::new(Mutex::new(Vec::new())),
            sampling: true,
        }
    }

    pub fn set_sampling(&mut self, on: bool) {
        self.sampling = on;
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut *self.trace.lock().unwrap())
    }

    fn join(&mut self, id: ComponentId) {
        if let Some(mut task) = self.tasks.remove(&id) {
            task.shared.terminate.store(true, Ordering::Release);
            if let Some(handle) = task.handle.take() {
                handle.thread().unpark();
                let _ = handle.join();
            }
            let samples = std::mem::take(&mut *task.shared.samples.lock().unwrap());
            self.retired.entry(id).or_default().extend(samples);
        }
    }
}

impl Container for WallClockContainer {
    fn spawn(&mut self, launch: TaskLaunch) -> Result<(), RtError> {
        let id = launch.component;
        if let Some(existing) = self.tasks.get(&id) {
            if !existing.shared.terminate.load(Ordering::Acquire) {
                return Err(RtError::SpawnFailure {
                    task: id,
                    reason: "task already running".into(),
                });
            }
            self.join(id);
        }
        let live = Arc::new(AtomicBool::new(true));
        let ports = self.channels.wire(&launch, &live)?;
        let trigger = trigger_mailbox(&launch, &ports);
        let shared = Arc::new(Shared {
            status: Mutex::new(TaskStatus::Running),
            samples: Mutex::new(Vec::new()),
            terminate: AtomicBool::new(false),
        });
        let commands = Arc::new(CommandMailbox::new(DEFAULT_COMMAND_CAPACITY));
        let worker = Worker {
            id,
            name: launch.name,
            task_type: launch.task_type,
            period_ns: launch.period_ns,
            priority: launch.priority,
            body: launch.body,
            properties: launch.properties,
            ports,
            live,
            trigger,
            shared: shared.clone(),
            commands: commands.clone(),
            trace: self.trace.clone(),
            clock: self.clock.clone(),
            sampling: self.sampling,
            steps: 0,
            last_sample: None,
        };
        let handle = thread::Builder::new()
            .name(format!("rt-{}", worker.name))
            .spawn(move || worker.run())
            .map_err(|e| RtError::SpawnFailure {
                task: id,
                reason: e.to_string(),
            })?;
        self.tasks.insert(
            id,
            WallTask {
                shared,
                commands,
                handle: Some(handle),
            },
        );
        Ok(())
    }

    fn terminate(&mut self, task: ComponentId) -> Result<(), RtError> {
        let t = self.tasks.get(&task).ok_or(RtError::UnknownTask(task))?;
        *t.shared.status.lock().unwrap() = TaskStatus::Terminating;
        self.channels.remove_provider(task);
        self.join(task);
        Ok(())
    }

    fn post_command(&mut self, task: ComponentId, command: ManagementCommand) -> Result<(), RtError> {
        let t = self.tasks.get(&task).ok_or(RtError::UnknownTask(task))?;
        if *t.shared.status.lock().unwrap() == TaskStatus::Terminated {
            return Err(RtError::UnknownTask(task));
        }
        t.commands
            .push(CommandEnvelope {
                command,
                posted_at_ns: self.clock.now_ns(),
            })
            .map_err(|_| RtError::CommandQueueFull(task))
    }

    fn collect_latency(&mut self, task: ComponentId) -> Result<Vec<LatencySample>, RtError> {
        let retired = self.retired.remove(&task);
        let live = self
            .tasks
            .get(&task)
            .map(|t| std::mem::take(&mut *t.shared.samples.lock().unwrap()));
        match (retired, live) {
            (None, None) => Err(RtError::UnknownTask(task)),
            (retired, live) => {
                let mut out = retired.unwrap_or_default();
                out.extend(live.unwrap_or_default());
                Ok(out)
            }
        }
    }

    fn status(&self, task: ComponentId) -> Option<TaskStatus> {
        self.tasks
            .get(&task)
            .map(|t| *t.shared.status.lock().unwrap())
    }

    fn now_ns(&self) -> u64 {
        self.clock.now_ns()
    }

    fn advance_to(&mut self, t_ns: u64) {
        let now = self.clock.now_ns();
        if t_ns > now {
            thread::sleep(Duration::from_nanos(t_ns - now));
        }
    }

    fn shutdown(&mut self) {
        let ids: Vec<_> = self.tasks.keys().copied().collect();
        for id in ids {
            self.channels.remove_provider(id);
            self.join(id);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
