//! Lifecycle state machine and event dispatch.
//!
//! Every operator action is an [`EventKind`] handled by [`Executive::dispatch`],
//! which applies it, then settles the registry: satisfied instances that lost a
//! provider are demoted, enabled unsatisfied instances are re-resolved, and
//! instances with a pending start request are started. Each dispatch yields one
//! [`EventRecord`]; the sequence of records is the event log.

mod handle;
mod log;
mod state;

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::mpsc;
use std::time::Duration;

use thiserror::Error;

use crate::descriptor::{
    parse_descriptor, validate_name, ComponentDescriptor, NameCheck, ParseError, ValidationError,
    ValueType, SHORT_NAME_LEN,
};
use crate::registry::{ComponentId, Registry, RegistryError};
use crate::resolver::{
    admit, cascade_unsatisfied, resolve_functional, AdmissionPolicy, Binding, CpuBudgetLedger,
    ExternalResolver, ResolvingService, DEFAULT_EXTERNAL_TIMEOUT,
};
use crate::rtsim::{
    BodyCatalog, Container, InputWire, LatencySample, ManagementCommand, RtError, StatusReport,
    TaskLaunch,
};

pub use handle::{ExecutiveClient, ExecutiveHandle, HandleClosed};
pub use log::{read_log, replay, EventRecord, ErrorInfo, Mismatch, ReplayReport};
pub use state::{EventKind, LifecycleEvent, LifecycleState, StateChange};

use LifecycleState::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutiveConfig {
    /// Per-CPU utilization cap, in (0, 1].
    pub cap: f64,
    pub policy: AdmissionPolicy,
    /// Start instances with a pending start request once they become satisfied.
    pub auto_restart: bool,
    /// Reject names longer than six characters instead of warning.
    pub strict_six: bool,
    pub resolver_timeout: Duration,
}

impl Default for ExecutiveConfig {
    fn default() -> Self {
        ExecutiveConfig {
            cap: 1.0,
            policy: AdmissionPolicy::Utilization,
            auto_restart: true,
            strict_six: false,
            resolver_timeout: DEFAULT_EXTERNAL_TIMEOUT,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("unknown component {0}")]
    UnknownId(ComponentId),
    #[error("a component named {0:?} is already installed")]
    DuplicateName(String),
    #[error("cannot {op} {id} while {state}")]
    WrongState {
        id: ComponentId,
        state: LifecycleState,
        op: &'static str,
    },
    #[error("{id} is unsatisfied: {reason}")]
    Unsatisfied { id: ComponentId, reason: String },
    #[error("admission rejected {id}: {reason}")]
    AdmissionRejected { id: ComponentId, reason: String },
    #[error(transparent)]
    InvalidName(#[from] ValidationError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{id} has no property {name:?}")]
    UnknownProperty { id: ComponentId, name: String },
    #[error("value {value:?} is not a valid {expected} for property {name:?}")]
    InvalidProperty {
        name: String,
        value: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Runtime(#[from] RtError),
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::UnknownId(_) => "unknown-id",
            ExecError::DuplicateName(_) => "duplicate-name",
            ExecError::WrongState { .. } => "wrong-state",
            ExecError::Unsatisfied { .. } => "unsatisfied",
            ExecError::AdmissionRejected { .. } => "admission-rejected",
            ExecError::InvalidName(_) => "invalid-name",
            ExecError::Parse(e) => e.code(),
            ExecError::UnknownProperty { .. } => "unknown-property",
            ExecError::InvalidProperty { .. } => "invalid-property",
            ExecError::Runtime(e) => e.code(),
        }
    }
}

impl From<RegistryError> for ExecError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::DuplicateName(n) => ExecError::DuplicateName(n),
            RegistryError::UnknownId(id) => ExecError::UnknownId(id),
            RegistryError::StillActive(id) => ExecError::WrongState {
                id,
                state: Active,
                op: "unregister",
            },
        }
    }
}

enum ResolveFailure {
    Functional(String),
    Admission(String),
}

impl ResolveFailure {
    fn text(&self) -> &str {
        match self {
            ResolveFailure::Functional(t) | ResolveFailure::Admission(t) => t,
        }
    }

    fn into_error(self, id: ComponentId) -> ExecError {
        match self {
            ResolveFailure::Functional(reason) => ExecError::Unsatisfied { id, reason },
            ResolveFailure::Admission(reason) => ExecError::AdmissionRejected { id, reason },
        }
    }
}

/// Where the subject of a deactivation ends up.
#[derive(Clone, Copy)]
enum Landing {
    Resolve,
    Uninstall,
}

struct Txn {
    seq: u64,
    changes: Vec<StateChange>,
    warnings: Vec<String>,
    /// Instances whose resolution or activation already failed during this event.
    failed: BTreeSet<ComponentId>,
}

pub struct Executive {
    config: ExecutiveConfig,
    registry: Registry,
    ledger: CpuBudgetLedger,
    external: Option<ExternalResolver>,
    container: Box<dyn Container>,
    bodies: BodyCatalog,
    history: Vec<EventRecord>,
    next_seq: u64,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Executive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executive")
            .field("config", &self.config)
            .field("instances", &self.registry.len())
            .field("events", &self.next_seq)
            .finish_non_exhaustive()
    }
}

impl Executive {
    pub fn new(config: ExecutiveConfig, container: Box<dyn Container>) -> Self {
        let ledger = CpuBudgetLedger::new(config.cap).with_policy(config.policy);
        Executive {
            config,
            registry: Registry::new(),
            ledger,
            external: None,
            container,
            bodies: BodyCatalog::new(),
            history: Vec::new(),
            next_seq: 0,
            sink: None,
        }
    }

    pub fn with_resolver(mut self, service: Box<dyn ResolvingService>) -> Self {
        self.external = Some(ExternalResolver::with_timeout(
            service,
            self.config.resolver_timeout,
        ));
        self
    }

    pub fn with_bodies(mut self, bodies: BodyCatalog) -> Self {
        self.bodies = bodies;
        self
    }

    /// Every subsequent record is written to `sink` as one JSON line.
    pub fn with_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &ExecutiveConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn ledger(&self) -> &CpuBudgetLedger {
        &self.ledger
    }

    pub fn container(&self) -> &dyn Container {
        self.container.as_ref()
    }

    pub fn container_mut(&mut self) -> &mut dyn Container {
        self.container.as_mut()
    }

    pub fn bodies_mut(&mut self) -> &mut BodyCatalog {
        &mut self.bodies
    }

    pub fn history(&self) -> &[EventRecord] {
        &self.history
    }

    pub fn state(&self, id: ComponentId) -> Option<LifecycleState> {
        self.registry.get(id).map(|i| i.state)
    }

    pub fn lookup(&self, name: &str) -> Option<ComponentId> {
        self.registry.lookup(name)
    }

    /// Applies one event, settles, and records the outcome.
    pub fn dispatch(&mut self, kind: EventKind) -> EventRecord {
        self.dispatch_full(kind).0
    }

    fn dispatch_full(&mut self, kind: EventKind) -> (EventRecord, Result<Option<ComponentId>, ExecError>) {
        self.next_seq += 1;
        let mut tx = Txn {
            seq: self.next_seq,
            changes: Vec::new(),
            warnings: Vec::new(),
            failed: BTreeSet::new(),
        };
        let result = self.apply(&kind, &mut tx);
        self.settle(&mut tx);
        let record = EventRecord {
            seq: tx.seq,
            event: kind,
            assigned: result.as_ref().ok().copied().flatten(),
            changes: tx.changes,
            warnings: tx.warnings,
            error: result.as_ref().err().map(|e| ErrorInfo {
                code: e.code().to_string(),
                message: e.to_string(),
            }),
        };
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&record).expect("event records serialize");
            if writeln!(sink, "{line}").and_then(|_| sink.flush()).is_err() {
                eprintln!("event log write failed at seq {}", record.seq);
            }
        }
        self.history.push(record.clone());
        (record, result)
    }

    fn run(&mut self, kind: EventKind) -> Result<Option<ComponentId>, ExecError> {
        self.dispatch_full(kind).1
    }

    pub fn install(&mut self, descriptor: ComponentDescriptor) -> Result<ComponentId, ExecError> {
        self.run(EventKind::Install { descriptor })
            .map(|id| id.expect("install assigns an id"))
    }

    pub fn install_xml(&mut self, xml: &str) -> Result<ComponentId, ExecError> {
        self.install(parse_descriptor(xml)?)
    }

    pub fn enable(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Enable { id }).map(drop)
    }

    pub fn disable(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Disable { id }).map(drop)
    }

    pub fn start(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Start { id }).map(drop)
    }

    pub fn stop(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Stop { id }).map(drop)
    }

    pub fn uninstall(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Uninstall { id }).map(drop)
    }

    pub fn suspend(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Suspend { id }).map(drop)
    }

    pub fn resume(&mut self, id: ComponentId) -> Result<(), ExecError> {
        self.run(EventKind::Resume { id }).map(drop)
    }

    pub fn set_property(&mut self, id: ComponentId, name: &str, value: &str) -> Result<(), ExecError> {
        self.run(EventKind::SetProperty {
            id,
            name: name.to_string(),
            value: value.to_string(),
        })
        .map(drop)
    }

    /// Asks the running task for a status report; the reply arrives after its next boundary.
    pub fn query_status(&mut self, id: ComponentId) -> Result<mpsc::Receiver<StatusReport>, ExecError> {
        let state = self.state(id).ok_or(ExecError::UnknownId(id))?;
        if !matches!(state, Active | Suspended) {
            return Err(ExecError::WrongState {
                id,
                state,
                op: "query",
            });
        }
        let (tx, rx) = mpsc::channel();
        self.container
            .post_command(id, ManagementCommand::QueryStatus(tx))?;
        Ok(rx)
    }

    pub fn collect_latency(&mut self, id: ComponentId) -> Result<Vec<LatencySample>, ExecError> {
        Ok(self.container.collect_latency(id)?)
    }

    pub fn advance_to(&mut self, t_ns: u64) {
        self.container.advance_to(t_ns);
    }

    pub fn now_ns(&self) -> u64 {
        self.container.now_ns()
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut expected = std::collections::BTreeMap::<u32, Vec<(ComponentId, f64)>>::new();
        for inst in self.registry.instances() {
            match inst.state {
                Active | Suspended => {
                    if inst.bindings.len() != inst.descriptor.inports.len() {
                        return Err(format!("{} runs with unbound inports", inst.id));
                    }
                    for b in &inst.bindings {
                        if !self.registry.get(b.provider).is_some_and(|p| p.is_provider()) {
                            return Err(format!("{} bound to stopped provider {}", inst.id, b.provider));
                        }
                    }
                    expected
                        .entry(inst.descriptor.cpu())
                        .or_default()
                        .push((inst.id, inst.descriptor.cpu_usage));
                    if self.ledger.claim_of(inst.id).is_none() {
                        return Err(format!("{} runs without a ledger claim", inst.id));
                    }
                }
                Registered | Unsatisfied => {
                    if !inst.bindings.is_empty() {
                        return Err(format!("{} holds bindings while {}", inst.id, inst.state));
                    }
                    if self.ledger.claim_of(inst.id).is_some() {
                        return Err(format!("{} holds a claim while {}", inst.id, inst.state));
                    }
                }
                Satisfied => {
                    if self.ledger.claim_of(inst.id).is_some() {
                        return Err(format!("{} holds a claim while SATISFIED", inst.id));
                    }
                }
                Uninstalled => return Err(format!("{} still registered while UNINSTALLED", inst.id)),
            }
            if inst.enabled != (inst.state != Registered) {
                return Err(format!("{} enabled={} in {}", inst.id, inst.enabled, inst.state));
            }
        }
        let loads = self.ledger.per_cpu_load();
        for (cpu, load) in &loads {
            let sum: f64 = expected.get(cpu).map_or(0.0, |v| v.iter().map(|(_, u)| u).sum());
            if *load != sum {
                return Err(format!("cpu {cpu} ledger {load} but active claims sum to {sum}"));
            }
            if *load > self.ledger.cap() {
                return Err(format!("cpu {cpu} ledger {load} exceeds cap {}", self.ledger.cap()));
            }
        }
        for cpu in expected.keys() {
            if !loads.contains_key(cpu) {
                return Err(format!("cpu {cpu} has active claims but no ledger entry"));
            }
        }
        Ok(())
    }

    fn apply(&mut self, kind: &EventKind, tx: &mut Txn) -> Result<Option<ComponentId>, ExecError> {
        if let Some(id) = kind.subject() {
            if !self.registry.contains(id) {
                return Err(ExecError::UnknownId(id));
            }
        }
        if let EventKind::Install { descriptor } = kind {
            return self.do_install(descriptor.clone(), tx).map(Some);
        }
        match kind {
            EventKind::Install { .. } => unreachable!(),
            EventKind::Enable { id } => self.do_enable(*id, tx),
            EventKind::Disable { id } => self.do_disable(*id, tx),
            EventKind::Start { id } => self.do_start(*id, tx),
            EventKind::Stop { id } => self.do_stop(*id, tx),
            EventKind::Uninstall { id } => self.do_uninstall(*id, tx),
            EventKind::Suspend { id } => self.do_suspend(*id, tx),
            EventKind::Resume { id } => self.do_resume(*id, tx),
            EventKind::SetProperty { id, name, value } => self.do_set_property(*id, name, value),
            EventKind::ProviderAppeared { .. } => Ok(()),
            EventKind::ProviderDeparted { id } => self.do_departed(*id, tx),
        }
        .map(|()| None)
    }

    fn inst_state(&self, id: ComponentId) -> LifecycleState {
        self.registry.get(id).expect("instance exists").state
    }

    fn wrong_state(&self, id: ComponentId, op: &'static str) -> ExecError {
        ExecError::WrongState {
            id,
            state: self.inst_state(id),
            op,
        }
    }

    fn transition(&mut self, tx: &mut Txn, id: ComponentId, to: LifecycleState, reason: impl Into<String>) {
        let inst = self.registry.get_mut(id).expect("transition on unknown instance");
        let from = inst.state;
        assert!(
            from.can_transition_to(to),
            "illegal transition {from} -> {to} for {id}"
        );
        inst.state = to;
        if matches!(to, Registered | Unsatisfied | Uninstalled) {
            inst.bindings.clear();
        }
        tx.changes.push(StateChange {
            id,
            name: inst.descriptor.name.clone(),
            from,
            to,
            reason: reason.into(),
        });
    }

    /// Functional resolution followed by admission.
    fn resolve(&mut self, id: ComponentId) -> Result<Vec<Binding>, ResolveFailure> {
        let bindings = resolve_functional(id, &self.registry)
            .map_err(|r| ResolveFailure::Functional(r.to_string()))?;
        let inst = self.registry.get(id).expect("instance exists");
        let decision = admit(inst, &self.ledger, self.external.as_mut(), &self.registry);
        if decision.admitted {
            Ok(bindings)
        } else {
            Err(ResolveFailure::Admission(decision.reason.to_string()))
        }
    }

    /// Resolves an enabled, stopped instance into SATISFIED or UNSATISFIED.
    fn land(&mut self, tx: &mut Txn, id: ComponentId, ok_reason: &str) -> Result<(), ResolveFailure> {
        match self.resolve(id) {
            Ok(bindings) => {
                self.registry.get_mut(id).unwrap().bindings = bindings;
                self.transition(tx, id, Satisfied, ok_reason);
                Ok(())
            }
            Err(f) => {
                tx.failed.insert(id);
                self.transition(tx, id, Unsatisfied, f.text());
                Err(f)
            }
        }
    }

    /// SATISFIED -> ACTIVE: re-validates, claims budget, spawns.
    fn activate(&mut self, tx: &mut Txn, id: ComponentId, reason: &str) -> Result<(), ExecError> {
        let bindings = match self.resolve(id) {
            Ok(b) => b,
            Err(f) => {
                tx.failed.insert(id);
                self.registry.get_mut(id).unwrap().start_intent = false;
                self.transition(tx, id, Unsatisfied, f.text());
                return Err(f.into_error(id));
            }
        };
        let descriptor = self.registry.get(id).unwrap().descriptor.clone();
        let wires = bindings
            .iter()
            .map(|b| InputWire {
                port: descriptor
                    .inport(&b.consumer_port)
                    .expect("binding names a declared inport")
                    .clone(),
                provider: b.provider,
                provider_port: b.provider_port.clone(),
            })
            .collect();
        let body = self.bodies.instantiate(&descriptor);
        let launch = TaskLaunch::from_descriptor(id, &descriptor, body, wires);
        self.ledger.commit(id, descriptor.cpu(), descriptor.cpu_usage);
        if let Err(e) = self.container.spawn(launch) {
            self.ledger.release(id);
            tx.failed.insert(id);
            self.registry.get_mut(id).unwrap().start_intent = false;
            self.transition(tx, id, Unsatisfied, e.to_string());
            return Err(e.into());
        }
        let inst = self.registry.get_mut(id).unwrap();
        inst.bindings = bindings;
        inst.start_intent = true;
        self.transition(tx, id, Active, reason);
        Ok(())
    }

    /// Stops a running instance and everything that depends on it.
    fn deactivate(&mut self, tx: &mut Txn, id: ComponentId, landing: Landing, reason: &str) {
        let cascade = cascade_unsatisfied(id, &self.registry, self.external.as_mut(), tx.seq);
        for &c in &cascade {
            self.retire_task(c);
        }
        self.retire_task(id);
        let name = self.registry.get(id).unwrap().descriptor.name.clone();
        for &c in &cascade {
            let keep = self.config.auto_restart;
            let inst = self.registry.get_mut(c).unwrap();
            inst.start_intent &= keep;
            self.transition(tx, c, Unsatisfied, format!("provider {name} ({id}) stopped"));
        }
        match landing {
            Landing::Resolve => {
                let _ = self.land(tx, id, reason);
            }
            Landing::Uninstall => self.transition(tx, id, Uninstalled, reason),
        }
    }

    fn retire_task(&mut self, id: ComponentId) {
        // A task that already exited on its own is not an error here.
        let _ = self.container.terminate(id);
        self.ledger.release(id);
    }

    /// Brings the registry to a fixed point after an event.
    fn settle(&mut self, tx: &mut Txn) {
        loop {
            let mut progressed = false;
            for id in self.registry.ids() {
                if self.inst_state(id) != Satisfied {
                    continue;
                }
                match resolve_functional(id, &self.registry) {
                    Ok(bindings) => self.registry.get_mut(id).unwrap().bindings = bindings,
                    Err(report) => self.transition(tx, id, Unsatisfied, report.to_string()),
                }
            }
            for id in self.registry.ids() {
                let inst = self.registry.get(id).unwrap();
                if inst.state != Unsatisfied || !inst.enabled || tx.failed.contains(&id) {
                    continue;
                }
                if let Ok(bindings) = self.resolve(id) {
                    self.registry.get_mut(id).unwrap().bindings = bindings;
                    self.transition(tx, id, Satisfied, "dependencies resolved");
                    progressed = true;
                }
            }
            if self.config.auto_restart {
                for id in self.registry.ids() {
                    let inst = self.registry.get(id).unwrap();
                    if inst.state != Satisfied || !inst.start_intent || tx.failed.contains(&id) {
                        continue;
                    }
                    if self.activate(tx, id, "auto-start").is_ok() {
                        progressed = true;
                    }
                }
            }
            if !progressed {
                break;
            }
        }
    }

    fn do_install(&mut self, descriptor: ComponentDescriptor, tx: &mut Txn) -> Result<ComponentId, ExecError> {
        if validate_name(&descriptor.name, self.config.strict_six)? == NameCheck::Warning {
            tx.warnings.push(format!(
                "component name {:?} is longer than {SHORT_NAME_LEN} characters",
                descriptor.name
            ));
        }
        let enabled = descriptor.enabled;
        let id = self.registry.register(descriptor)?;
        if enabled {
            let _ = self.land(tx, id, "installed");
        }
        Ok(id)
    }

    fn do_enable(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if self.inst_state(id) != Registered {
            return Err(self.wrong_state(id, "enable"));
        }
        self.registry.get_mut(id).unwrap().enabled = true;
        let _ = self.land(tx, id, "enabled");
        Ok(())
    }

    fn do_disable(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        match self.inst_state(id) {
            Registered | Uninstalled => return Err(self.wrong_state(id, "disable")),
            Active | Suspended => {
                self.registry.get_mut(id).unwrap().start_intent = false;
                self.deactivate(tx, id, Landing::Resolve, "stopped");
            }
            Unsatisfied | Satisfied => {}
        }
        let inst = self.registry.get_mut(id).unwrap();
        inst.enabled = false;
        inst.start_intent = false;
        self.transition(tx, id, Registered, "disabled");
        Ok(())
    }

    fn do_start(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        match self.inst_state(id) {
            Satisfied => self.activate(tx, id, "started"),
            Unsatisfied => {
                if self.config.auto_restart {
                    self.registry.get_mut(id).unwrap().start_intent = true;
                    tx.warnings
                        .push(format!("{id} will start once its dependencies resolve"));
                }
                Err(self.wrong_state(id, "start"))
            }
            _ => Err(self.wrong_state(id, "start")),
        }
    }

    fn do_stop(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if !matches!(self.inst_state(id), Active | Suspended) {
            return Err(self.wrong_state(id, "stop"));
        }
        self.registry.get_mut(id).unwrap().start_intent = false;
        self.deactivate(tx, id, Landing::Resolve, "stopped");
        Ok(())
    }

    fn do_uninstall(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if matches!(self.inst_state(id), Active | Suspended) {
            self.registry.get_mut(id).unwrap().start_intent = false;
            self.deactivate(tx, id, Landing::Uninstall, "uninstalled");
        } else {
            self.transition(tx, id, Uninstalled, "uninstalled");
        }
        self.registry.unregister(id)?;
        Ok(())
    }

    fn do_suspend(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if self.inst_state(id) != Active {
            return Err(self.wrong_state(id, "suspend"));
        }
        self.container.post_command(id, ManagementCommand::Suspend)?;
        self.transition(tx, id, Suspended, "suspended");
        Ok(())
    }

    fn do_resume(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if self.inst_state(id) != Suspended {
            return Err(self.wrong_state(id, "resume"));
        }
        self.container.post_command(id, ManagementCommand::Resume)?;
        self.transition(tx, id, Active, "resumed");
        Ok(())
    }

    fn do_set_property(&mut self, id: ComponentId, name: &str, value: &str) -> Result<(), ExecError> {
        let inst = self.registry.get(id).unwrap();
        let Some(prop) = inst.descriptor.property(name) else {
            return Err(ExecError::UnknownProperty {
                id,
                name: name.to_string(),
            });
        };
        let value_type: ValueType = prop.value_type;
        if !value_type.accepts(value) {
            return Err(ExecError::InvalidProperty {
                name: name.to_string(),
                value: value.to_string(),
                expected: value_type.as_str(),
            });
        }
        if inst.is_provider() {
            self.container.post_command(
                id,
                ManagementCommand::SetProperty {
                    name: name.to_string(),
                    value: value.to_string(),
                },
            )?;
        }
        let inst = self.registry.get_mut(id).unwrap();
        let prop = inst
            .descriptor
            .properties
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap();
        prop.value = value.to_string();
        Ok(())
    }

    /// Treats a running instance as failed: it and its dependents stop, start requests survive.
    fn do_departed(&mut self, id: ComponentId, tx: &mut Txn) -> Result<(), ExecError> {
        if !matches!(self.inst_state(id), Active | Suspended) {
            return Err(self.wrong_state(id, "depart"));
        }
        self.deactivate(tx, id, Landing::Resolve, "departed");
        Ok(())
    }
}
