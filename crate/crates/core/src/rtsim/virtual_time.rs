use std::any::Any;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::{
    apply_command, trigger_mailbox, ChannelTable, CommandEnvelope, CommandMailbox, Container,
    LatencyModel, LatencySample, MailboxChannel, ManagementCommand, PortSet, RtError,
    StatusReport, TaskBody, TaskContext, TaskControlBlock, TaskLaunch, TaskStatus, TraceEvent,
    TraceRecord, ZeroLatency, DEFAULT_COMMAND_CAPACITY, DEFAULT_MAILBOX_CAPACITY,
};
use crate::descriptor::TaskType;
use crate::registry::ComponentId;

struct VirtualTask {
    tcb: TaskControlBlock,
    name: String,
    task_type: TaskType,
    t0: u64,
    release_index: u64,
    body: Box<dyn TaskBody>,
    properties: BTreeMap<String, String>,
    ports: PortSet,
    live: Arc<AtomicBool>,
    commands: Arc<CommandMailbox>,
    samples: Vec<LatencySample>,
    last_sample: Option<LatencySample>,
    steps: u64,
    trigger: Option<Arc<MailboxChannel>>,
}

impl VirtualTask {
    fn suspended(&self) -> bool {
        self.tcb.status == TaskStatus::Suspended
    }
}

/// Deterministic single-threaded container driven by a logical clock.
///
/// Due releases run in `(release time, priority, task id)` order. Steps take
/// no virtual time; release latency comes from the installed [`LatencyModel`].
pub struct VirtualContainer {
    now: u64,
    tasks: BTreeMap<ComponentId, VirtualTask>,
    retired: BTreeMap<ComponentId, Vec<LatencySample>>,
    channels: ChannelTable,
    trace: Vec<TraceRecord>,
    latency: Box<dyn LatencyModel>,
    sampling: bool,
    command_capacity: usize,
}

impl Default for VirtualContainer {
    fn default() -> Self {
        Self::new()
    }
}

impl VirtualContainer {
    pub fn new() -> Self {
        VirtualContainer {
            now: 0,
            tasks: BTreeMap::new(),
            retired: BTreeMap::new(),
            channels: ChannelTable::new(DEFAULT_MAILBOX_CAPACITY),
            trace: Vec::new(),
            latency: Box::new(ZeroLatency),
            sampling: true,
            command_capacity: DEFAULT_COMMAND_CAPACITY,
        }
    }

    pub fn with_latency_model(mut self, model: impl LatencyModel + 'static) -> Self {
        self.latency = Box::new(model);
        self
    }

    pub fn with_mailbox_capacity(mut self, capacity: usize) -> Self {
        self.channels = ChannelTable::new(capacity);
        self
    }

    pub fn set_sampling(&mut self, on: bool) {
        self.sampling = on;
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn tcb(&self, task: ComponentId) -> Option<&TaskControlBlock> {
        self.tasks.get(&task).map(|t| &t.tcb)
    }

    pub fn steps(&self, task: ComponentId) -> Option<u64> {
        self.tasks.get(&task).map(|t| t.steps)
    }

    pub fn properties(&self, task: ComponentId) -> Option<&BTreeMap<String, String>> {
        self.tasks.get(&task).map(|t| &t.properties)
    }

    /// Outport channel of a live provider.
    pub fn channel(&self, provider: ComponentId, port: &str) -> Option<super::Channel> {
        self.channels.get(provider, port)
    }

    pub fn task_ids(&self) -> Vec<ComponentId> {
        self.tasks.keys().copied().collect()
    }

    fn finalize(&mut self, id: ComponentId) {
        let Some(mut task) = self.tasks.remove(&id) else {
            return;
        };
        {
            let VirtualTask {
                body,
                properties,
                ports,
                name,
                release_index,
                ..
            } = &mut task;
            let mut ctx = TaskContext {
                component: id,
                name,
                now_ns: self.now,
                release_index: *release_index,
                latency: None,
                properties,
                ports,
            };
            body.uninit(&mut ctx);
        }
        task.live.store(false, Ordering::Release);
        task.tcb.status = TaskStatus::Terminated;
        self.trace.push(TraceRecord {
            time_ns: self.now,
            task: id,
            priority: task.tcb.priority,
            event: TraceEvent::Terminated,
        });
        self.retired.entry(id).or_default().extend(task.samples);
    }

    /// Drains the command mailbox; returns true when the task must terminate.
    fn drain_commands(&mut self, id: ComponentId) -> bool {
        let now = self.now;
        let Some(task) = self.tasks.get_mut(&id) else {
            return false;
        };
        let mut terminate = false;
        for envelope in task.commands.drain() {
            let label = envelope.command.label();
            let VirtualTask {
                tcb,
                properties,
                last_sample,
                steps,
                ..
            } = task;
            let effect = apply_command(envelope.command, properties, |props| StatusReport {
                component: id,
                status: tcb.status,
                properties: props.clone(),
                last_sample: *last_sample,
                steps: *steps,
            });
            if let Some(suspend) = effect.suspend {
                if tcb.status != TaskStatus::Terminating {
                    tcb.status = if suspend {
                        TaskStatus::Suspended
                    } else {
                        TaskStatus::Running
                    };
                }
            }
            terminate |= effect.terminate;
            self.trace.push(TraceRecord {
                time_ns: now,
                task: id,
                priority: tcb.priority,
                event: TraceEvent::CommandDrained {
                    command: label.to_string(),
                    posted_at_ns: envelope.posted_at_ns,
                },
            });
        }
        terminate
    }

    fn run_step(&mut self, id: ComponentId, latency: Option<LatencySample>) {
        let now = latency.map_or(self.now, |s| s.release_actual);
        let task = self.tasks.get_mut(&id).expect("task present");
        let VirtualTask {
            body,
            properties,
            ports,
            name,
            release_index,
            steps,
            ..
        } = task;
        let mut ctx = TaskContext {
            component: id,
            name,
            now_ns: now,
            release_index: *release_index,
            latency,
            properties,
            ports,
        };
        body.step(&mut ctx);
        *steps += 1;
    }

    fn dispatch_periodic(&mut self, id: ComponentId) {
        let task = self.tasks.get_mut(&id).expect("task present");
        if task.tcb.status == TaskStatus::Terminating {
            self.finalize(id);
            return;
        }
        let k = task.release_index;
        let expected = task.t0 + k * task.tcb.period_ns;
        let priority = task.tcb.priority;
        if task.suspended() {
            self.trace.push(TraceRecord {
                time_ns: expected,
                task: id,
                priority,
                event: TraceEvent::Skip { release_index: k },
            });
        } else {
            let sample = LatencySample::new(id, expected, self.latency.latency_ns(id, k));
            if self.sampling {
                task.samples.push(sample);
            }
            task.last_sample = Some(sample);
            self.trace.push(TraceRecord {
                time_ns: expected,
                task: id,
                priority,
                event: TraceEvent::Step { release_index: k },
            });
            self.run_step(id, Some(sample));
        }
        if self.drain_commands(id) {
            self.finalize(id);
            return;
        }
        let task = self.tasks.get_mut(&id).expect("task present");
        task.release_index += 1;
        task.tcb.next_release = task.t0 + task.release_index * task.tcb.period_ns;
    }

    /// Steps aperiodic tasks once per queued trigger message and drains their commands.
    fn poll_aperiodic(&mut self) {
        let ids: Vec<ComponentId> = self
            .tasks
            .values()
            .filter(|t| t.task_type == TaskType::Aperiodic)
            .map(|t| t.tcb.component_id)
            .collect();
        for id in ids {
            let task = &self.tasks[&id];
            if task.tcb.status == TaskStatus::Terminating {
                self.finalize(id);
                continue;
            }
            let pending = task.trigger.as_ref().map_or(0, |m| m.len());
            let mut terminated = false;
            for _ in 0..pending {
                if self.tasks[&id].suspended() {
                    break;
                }
                self.trace.push(TraceRecord {
                    time_ns: self.now,
                    task: id,
                    priority: self.tasks[&id].tcb.priority,
                    event: TraceEvent::Step {
                        release_index: self.tasks[&id].release_index,
                    },
                });
                self.run_step(id, None);
                self.tasks.get_mut(&id).expect("present").release_index += 1;
                if self.drain_commands(id) {
                    self.finalize(id);
                    terminated = true;
                    break;
                }
            }
            if !terminated && self.drain_commands(id) {
                self.finalize(id);
            }
        }
    }

    /// Runs every release strictly before `t_end`.
    pub fn run_until(&mut self, t_end: u64) {
        self.poll_aperiodic();
        loop {
            let next = self
                .tasks
                .values()
                .filter(|t| t.task_type == TaskType::Periodic && t.tcb.next_release < t_end)
                .min_by_key(|t| (t.tcb.next_release, t.tcb.priority, t.tcb.component_id))
                .map(|t| (t.tcb.component_id, t.tcb.next_release));
            let Some((id, release)) = next else { break };
            self.now = self.now.max(release);
            self.dispatch_periodic(id);
            self.poll_aperiodic();
        }
        self.now = self.now.max(t_end);
    }
}

impl Container for VirtualContainer {
    fn spawn(&mut self, launch: TaskLaunch) -> Result<(), RtError> {
        let id = launch.component;
        if let Some(existing) = self.tasks.get(&id) {
            if existing.tcb.status != TaskStatus::Terminating {
                return Err(RtError::SpawnFailure {
                    task: id,
                    reason: "task already running".into(),
                });
            }
            self.finalize(id);
        }
        let live = Arc::new(AtomicBool::new(true));
        let ports = self.channels.wire(&launch, &live)?;
        let trigger = trigger_mailbox(&launch, &ports);
        let TaskLaunch {
            component,
            name,
            task_type,
            period_ns,
            priority,
            cpu,
            mut body,
            properties,
            ..
        } = launch;
        let now = self.now;
        {
            let mut ctx = TaskContext {
                component,
                name: &name,
                now_ns: now,
                release_index: 0,
                latency: None,
                properties: &properties,
                ports: &ports,
            };
            body.init(&mut ctx);
        }
        self.trace.push(TraceRecord {
            time_ns: now,
            task: id,
            priority,
            event: TraceEvent::Init,
        });
        self.tasks.insert(
            id,
            VirtualTask {
                tcb: TaskControlBlock {
                    component_id: id,
                    period_ns,
                    priority,
                    cpu,
                    status: TaskStatus::Running,
                    next_release: now,
                },
                name,
                task_type,
                t0: now,
                release_index: 0,
                body,
                properties,
                ports,
                live,
                commands: Arc::new(CommandMailbox::new(self.command_capacity)),
                samples: Vec::new(),
                last_sample: None,
                steps: 0,
                trigger,
            },
        );
        Ok(())
    }

    fn terminate(&mut self, task: ComponentId) -> Result<(), RtError> {
        let t = self.tasks.get_mut(&task).ok_or(RtError::UnknownTask(task))?;
        t.tcb.status = TaskStatus::Terminating;
        self.channels.remove_provider(task);
        Ok(())
    }

    fn post_command(&mut self, task: ComponentId, command: ManagementCommand) -> Result<(), RtError> {
        let t = self.tasks.get(&task).ok_or(RtError::UnknownTask(task))?;
        t.commands
            .push(CommandEnvelope {
                command,
                posted_at_ns: self.now,
            })
            .map_err(|_| RtError::CommandQueueFull(task))
    }

    fn collect_latency(&mut self, task: ComponentId) -> Result<Vec<LatencySample>, RtError> {
        let retired = self.retired.remove(&task);
        let live = self.tasks.get_mut(&task).map(|t| std::mem::take(&mut t.samples));
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
        self.tasks.get(&task).map(|t| t.tcb.status)
    }

    fn now_ns(&self) -> u64 {
        self.now
    }

    fn advance_to(&mut self, t_ns: u64) {
        self.run_until(t_ns);
    }

    fn shutdown(&mut self) {
        for id in self.task_ids() {
            self.finalize(id);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
