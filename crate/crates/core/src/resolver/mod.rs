//! Functional resolution (port matching and binding selection) and
//! non-functional admission (per-CPU budget plus an optional external
//! resolving service).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::descriptor::{Direction, Interface, PortSpec};
use crate::executive::{EventKind, LifecycleEvent};
use crate::registry::{ComponentId, ComponentInstance, Registry};

pub mod plugins;

/// A resolved wire from a provider's outport to a consumer's inport.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub consumer: ComponentId,
    pub consumer_port: String,
    pub provider: ComponentId,
    pub provider_port: String,
    pub channel_kind: Interface,
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{} <- {}.{}",
            self.consumer, self.consumer_port, self.provider, self.provider_port
        )
    }
}

/// Name, transport, element type and element count must all agree.
pub fn ports_compatible(required: &PortSpec, provided: &PortSpec) -> bool {
    required.direction == Direction::In
        && provided.direction == Direction::Out
        && required.name == provided.name
        && required.interface == provided.interface
        && required.data_type == provided.data_type
        && required.size == provided.size
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsatisfiedReport {
    pub candidate: ComponentId,
    /// Inports without any compatible provider, in declaration order.
    pub missing: Vec<String>,
}

impl fmt::Display for UnsatisfiedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no provider for inport(s) {}", self.missing.join(", "))
    }
}

/// One binding per inport, choosing the lowest-id provider for each.
pub fn resolve_functional(
    candidate: ComponentId,
    view: &Registry,
) -> Result<Vec<Binding>, UnsatisfiedReport> {
    resolve_functional_excluding(candidate, view, &BTreeSet::new())
}

/// As [`resolve_functional`], treating every instance in `excluded` as gone.
pub fn resolve_functional_excluding(
    candidate: ComponentId,
    view: &Registry,
    excluded: &BTreeSet<ComponentId>,
) -> Result<Vec<Binding>, UnsatisfiedReport> {
    let Some(instance) = view.get(candidate) else {
        return Err(UnsatisfiedReport {
            candidate,
            missing: Vec::new(),
        });
    };
    let mut bindings = Vec::with_capacity(instance.descriptor.inports.len());
    let mut missing = Vec::new();
    for inport in &instance.descriptor.inports {
        let provider = view
            .find_provider(inport)
            .into_iter()
            .find(|(id, _)| *id != candidate && !excluded.contains(id));
        match provider {
            Some((provider, out)) => bindings.push(Binding {
                consumer: candidate,
                consumer_port: inport.name.clone(),
                provider,
                provider_port: out.name,
                channel_kind: inport.interface,
            }),
            None => missing.push(inport.name.clone()),
        }
    }
    if missing.is_empty() {
        Ok(bindings)
    } else {
        Err(UnsatisfiedReport { candidate, missing })
    }
}

/// Internal admission test applied per CPU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissionPolicy {
    /// Sum of claims on the CPU must stay within the cap.
    #[default]
    Utilization,
    /// Sum of claims must also stay within the Liu-Layland bound n(2^(1/n) - 1).
    RateMonotonic,
}

pub fn rate_monotonic_bound(tasks: usize) -> f64 {
    if tasks == 0 {
        return 1.0;
    }
    let n = tasks as f64;
    n * (2f64.powf(1.0 / n) - 1.0)
}

/// CPU claims of every running (ACTIVE or SUSPENDED) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuBudgetLedger {
    cap: f64,
    policy: AdmissionPolicy,
    claims: BTreeMap<u32, BTreeMap<ComponentId, f64>>,
}

impl Default for CpuBudgetLedger {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl CpuBudgetLedger {
    /// # Panics
    /// If `cap` is outside `(0, 1]`.
    pub fn new(cap: f64) -> Self {
        assert!(cap > 0.0 && cap <= 1.0, "admission cap must be in (0, 1], got {cap}");
        CpuBudgetLedger {
            cap,
            policy: AdmissionPolicy::Utilization,
            claims: BTreeMap::new(),
        }
    }

    pub fn with_policy(mut self, policy: AdmissionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn policy(&self) -> AdmissionPolicy {
        self.policy
    }

    /// Sum of claims on `cpu`, accumulated in ascending instance id order.
    pub fn load(&self, cpu: u32) -> f64 {
        self.claims
            .get(&cpu)
            .map_or(0.0, |c| c.values().fold(0.0, |acc, u| acc + u))
    }

    pub fn per_cpu_load(&self) -> BTreeMap<u32, f64> {
        self.claims.keys().map(|&cpu| (cpu, self.load(cpu))).collect()
    }

    pub fn claim_of(&self, id: ComponentId) -> Option<(u32, f64)> {
        self.claims
            .iter()
            .find_map(|(&cpu, c)| c.get(&id).map(|&u| (cpu, u)))
    }

    pub fn commit(&mut self, id: ComponentId, cpu: u32, usage: f64) {
        self.release(id);
        self.claims.entry(cpu).or_default().insert(id, usage);
    }

    pub fn release(&mut self, id: ComponentId) -> Option<(u32, f64)> {
        let (cpu, usage) = self.claim_of(id)?;
        let per_cpu = self.claims.get_mut(&cpu).expect("claim located above");
        per_cpu.remove(&id);
        if per_cpu.is_empty() {
            self.claims.remove(&cpu);
        }
        Some((cpu, usage))
    }

    /// Load of `cpu` without `id`, the load the ledger would report once `id`
    /// claims `usage` there, and the number of other nonzero claims.
    ///
    /// The prospective total is accumulated in the same id order as [`Self::load`].
    fn prospective(&self, cpu: u32, id: ComponentId, usage: f64) -> (f64, f64, usize) {
        let mut without = 0.0;
        let mut with = 0.0;
        let mut others = 0;
        let mut placed = false;
        for (&other, &u) in self.claims.get(&cpu).into_iter().flatten() {
            if other == id {
                continue;
            }
            if !placed && other > id {
                with += usage;
                placed = true;
            }
            with += u;
            without += u;
            others += usize::from(u > 0.0);
        }
        if !placed {
            with += usage;
        }
        (without, with, others)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    Admitted,
    CpuBudget,
    RmBound,
    ExternalVeto,
    ExternalFailure,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::Admitted => "admitted",
            ReasonCode::CpuBudget => "cpu-budget",
            ReasonCode::RmBound => "rm-bound",
            ReasonCode::ExternalVeto => "external-veto",
            ReasonCode::ExternalFailure => "external-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionReason {
    pub code: ReasonCode,
    pub text: String,
}

impl fmt::Display for AdmissionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.text)
    }
}

/// Internal budget verdict for `candidate`. The ledger is not mutated.
pub fn admit_internal(candidate: &ComponentInstance, ledger: &CpuBudgetLedger) -> (bool, AdmissionReason) {
    let usage = candidate.descriptor.cpu_usage;
    let cpu = candidate.descriptor.cpu();
    if usage == 0.0 {
        return (
            true,
            AdmissionReason {
                code: ReasonCode::Admitted,
                text: "no CPU claim".into(),
            },
        );
    }
    let (load, total, others) = ledger.prospective(cpu, candidate.id, usage);
    if total > ledger.cap {
        return (
            false,
            AdmissionReason {
                code: ReasonCode::CpuBudget,
                text: format!("cpu{cpu} load {load} + {usage} exceeds cap {}", ledger.cap),
            },
        );
    }
    if ledger.policy == AdmissionPolicy::RateMonotonic {
        let bound = rate_monotonic_bound(others + 1);
        if total > bound {
            return (
                false,
                AdmissionReason {
                    code: ReasonCode::RmBound,
                    text: format!(
                        "cpu{cpu} load {load} + {usage} exceeds rate-monotonic bound {bound:.6} for {} tasks",
                        others + 1
                    ),
                },
            );
        }
    }
    (
        true,
        AdmissionReason {
            code: ReasonCode::Admitted,
            text: format!("cpu{cpu} load {total} within cap {}", ledger.cap),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceFault(pub String);

impl fmt::Display for ServiceFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Application-specific admission and adaptation policy plugged into the executive.
pub trait ResolvingService: Send {
    fn name(&self) -> &str;

    /// Verdict on a candidate about to become SATISFIED or ACTIVE.
    fn on_admit(&mut self, candidate: &ComponentInstance, view: &Registry) -> Result<bool, ServiceFault>;

    /// Instances the service considers unsatisfiable after `event`.
    fn on_change(
        &mut self,
        _event: &LifecycleEvent,
        _view: &Registry,
    ) -> Result<Vec<ComponentId>, ServiceFault> {
        Ok(Vec::new())
    }
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_millis(100);

/// An installed [`ResolvingService`] with failure containment.
///
/// Errors, panics and calls that overrun the timeout all count as failures.
pub struct ExternalResolver {
    service: Box<dyn ResolvingService>,
    timeout: Duration,
}

impl fmt::Debug for ExternalResolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalResolver")
            .field("service", &self.service.name())
            .field("timeout", &self.timeout)
            .finish()
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

impl ExternalResolver {
    pub fn new(service: Box<dyn ResolvingService>) -> Self {
        Self::with_timeout(service, DEFAULT_EXTERNAL_TIMEOUT)
    }

    pub fn with_timeout(service: Box<dyn ResolvingService>, timeout: Duration) -> Self {
        ExternalResolver { service, timeout }
    }

    pub fn name(&self) -> &str {
        self.service.name()
    }

    fn guarded<T>(
        &mut self,
        call: impl FnOnce(&mut dyn ResolvingService) -> Result<T, ServiceFault>,
    ) -> Result<T, String> {
        let started = Instant::now();
        let service = &mut *self.service;
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| call(service)));
        let elapsed = started.elapsed();
        match outcome {
            Err(payload) => Err(format!("panicked: {}", panic_message(payload.as_ref()))),
            Ok(Err(fault)) => Err(format!("failed: {fault}")),
            Ok(Ok(_)) if elapsed > self.timeout => {
                Err(format!("exceeded {} ms timeout", self.timeout.as_millis()))
            }
            Ok(Ok(value)) => Ok(value),
        }
    }

    pub fn consult_admit(&mut self, candidate: &ComponentInstance, view: &Registry) -> Result<bool, String> {
        self.guarded(|s| s.on_admit(candidate, view))
    }

    pub fn consult_change(&mut self, event: &LifecycleEvent, view: &Registry) -> Result<Vec<ComponentId>, String> {
        self.guarded(|s| s.on_change(event, view))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub admitted: bool,
    pub internal_verdict: bool,
    /// True when no external service is installed.
    pub external_verdict: bool,
    pub reason: AdmissionReason,
}

/// Consults the internal budget policy and the external service (if any).
/// Both are always consulted; admission is their conjunction.
pub fn admit(
    candidate: &ComponentInstance,
    ledger: &CpuBudgetLedger,
    external: Option<&mut ExternalResolver>,
    view: &Registry,
) -> AdmissionDecision {
    let (internal_verdict, internal_reason) = admit_internal(candidate, ledger);
    let external_outcome = external.map(|ext| {
        let name = ext.name().to_string();
        (name, ext.consult_admit(candidate, view))
    });
    let (external_verdict, external_reason) = match external_outcome {
        None => (true, None),
        Some((_, Ok(true))) => (true, None),
        Some((name, Ok(false))) => (
            false,
            Some(AdmissionReason {
                code: ReasonCode::ExternalVeto,
                text: format!("resolver {name:?} rejected {}", candidate.name()),
            }),
        ),
        Some((name, Err(why))) => (
            false,
            Some(AdmissionReason {
                code: ReasonCode::ExternalFailure,
                text: format!("resolver {name:?} {why}"),
            }),
        ),
    };
    let reason = match (internal_verdict, external_reason) {
        (true, None) => internal_reason,
        (true, Some(ext)) => ext,
        (false, None) => internal_reason,
        (false, Some(ext)) => AdmissionReason {
            code: internal_reason.code,
            text: format!("{}; {}", internal_reason.text, ext),
        },
    };
    AdmissionDecision {
        admitted: internal_verdict && external_verdict,
        internal_verdict,
        external_verdict,
        reason,
    }
}

/// Running instances that lose a provider once `departed` stops, transitively.
///
/// An instance is broken when one of its bindings points at a departed or
/// already broken instance. The result lists broken instances in the order a
/// lowest-id-first rescan after every removal would find them, so every
/// instance appears before anything that only breaks because of it. Instances
/// named by the external service's change hook are added after the first
/// closure and the closure is continued from them.
pub fn cascade_unsatisfied(
    departed: ComponentId,
    view: &Registry,
    external: Option<&mut ExternalResolver>,
    sequence_no: u64,
) -> Vec<ComponentId> {
    let mut dependents: BTreeMap<ComponentId, BTreeSet<ComponentId>> = BTreeMap::new();
    for instance in view.instances().filter(|i| i.is_provider()) {
        for b in &instance.bindings {
            dependents.entry(b.provider).or_default().insert(instance.id);
        }
    }

    let mut excluded = BTreeSet::from([departed]);
    let mut order = Vec::new();
    let mut frontier: BinaryHeap<Reverse<ComponentId>> = BinaryHeap::new();
    let seed = |frontier: &mut BinaryHeap<Reverse<ComponentId>>, from: ComponentId| {
        if let Some(ds) = dependents.get(&from) {
            frontier.extend(ds.iter().map(|&d| Reverse(d)));
        }
    };

    seed(&mut frontier, departed);
    drain_frontier(&mut frontier, &mut excluded, &mut order, &seed);

    if let Some(ext) = external {
        let event = LifecycleEvent {
            sequence_no,
            kind: EventKind::ProviderDeparted { id: departed },
        };
        if let Ok(named) = ext.consult_change(&event, view) {
            for id in named {
                if view.get(id).is_some_and(|i| i.is_provider()) {
                    frontier.push(Reverse(id));
                }
            }
            drain_frontier(&mut frontier, &mut excluded, &mut order, &seed);
        }
    }
    order
}

fn drain_frontier(
    frontier: &mut BinaryHeap<Reverse<ComponentId>>,
    excluded: &mut BTreeSet<ComponentId>,
    order: &mut Vec<ComponentId>,
    seed: &impl Fn(&mut BinaryHeap<Reverse<ComponentId>>, ComponentId),
) {
    while let Some(Reverse(next)) = frontier.pop() {
        if excluded.insert(next) {
            order.push(next);
            seed(frontier, next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{parse_descriptor, ComponentDescriptor, DataType};
    use crate::executive::LifecycleState;

    fn port(name: &str, direction: Direction, interface: Interface, size: u32) -> PortSpec {
        PortSpec {
            name: name.into(),
            direction,
            interface,
            data_type: DataType::Byte,
            size,
        }
    }

    fn component(name: &str, cpu: u32, usage: f64) -> ComponentDescriptor {
        let mut d = parse_descriptor(&format!(
            r#"<dr:component name="{name}" type="periodic" cpuusage="{usage}">
                 <implementation bincode="demo.C"/>
                 <periodictask frequency="100" runoncpu="{cpu}" priority="1"/>
               </dr:component>"#
        ))
        .unwrap();
        d.name = name.into();
        d
    }

    fn instance(id: u64, d: ComponentDescriptor) -> ComponentInstance {
        ComponentInstance {
            id: ComponentId(id),
            descriptor: d,
            state: LifecycleState::Satisfied,
            bindings: Vec::new(),
            enabled: true,
            start_intent: false,
        }
    }

    #[test]
    fn budget_sum_follows_ledger_order() {
        // (0.341 + 0.559) + 0.1 rounds above 1.0, but the ledger adds id 1 first.
        let mut ledger = CpuBudgetLedger::new(1.0);
        ledger.commit(ComponentId(2), 0, 0.341);
        ledger.commit(ComponentId(3), 0, 0.559);
        let cand = instance(1, component("c", 0, 0.1));
        assert!(admit_internal(&cand, &ledger).0);
        ledger.commit(cand.id, 0, 0.1);
        assert!(ledger.load(0) <= ledger.cap());
    }

    #[test]
    fn compatibility_requires_every_attribute() {
        let req = port("images", Direction::In, Interface::SharedMemory, 400);
        let prov = port("images", Direction::Out, Interface::SharedMemory, 400);
        assert!(ports_compatible(&req, &prov));
        assert!(!ports_compatible(&req, &port("images", Direction::Out, Interface::SharedMemory, 200)));
        assert!(!ports_compatible(&req, &port("images", Direction::Out, Interface::Mailbox, 400)));
        assert!(!ports_compatible(&req, &port("other", Direction::Out, Interface::SharedMemory, 400)));
        let mut ints = prov.clone();
        ints.data_type = DataType::Integer;
        assert!(!ports_compatible(&req, &ints));
        // direction matters
        assert!(!ports_compatible(&prov, &req));
    }

    #[test]
    fn zero_inports_vacuously_satisfied() {
        let mut reg = Registry::new();
        let id = reg.register(component("solo", 0, 0.1)).unwrap();
        assert_eq!(resolve_functional(id, &reg), Ok(vec![]));
    }

    #[test]
    fn unsatisfied_report_lists_missing_inports() {
        let mut reg = Registry::new();
        let mut d = component("disp", 0, 0.1);
        d.inports.push(port("latdat", Direction::In, Interface::SharedMemory, 2));
        d.inports.push(port("extra", Direction::In, Interface::Mailbox, 1));
        let id = reg.register(d).unwrap();
        let report = resolve_functional(id, &reg).unwrap_err();
        assert_eq!(report.missing, ["latdat", "extra"]);
    }

    #[test]
    fn internal_admission_examples() {
        let empty = CpuBudgetLedger::new(1.0);
        assert!(admit_internal(&instance(1, component("cam", 0, 0.1)), &empty).0);

        let mut ledger = CpuBudgetLedger::new(1.0);
        ledger.commit(ComponentId(9), 0, 0.6);
        let (ok, reason) = admit_internal(&instance(1, component("c", 0, 0.5)), &ledger);
        assert!(!ok);
        assert_eq!(reason.code, ReasonCode::CpuBudget);
        assert!(admit_internal(&instance(1, component("c", 1, 0.5)), &ledger).0);
        // not mutated
        assert_eq!(ledger.per_cpu_load(), BTreeMap::from([(0, 0.6)]));
    }

    #[test]
    fn internal_admission_matches_subset_enumeration() {
        // Every subset of {0.6, 0.5} with sum <= 1.0 is admissible, nothing else.
        let claims = [0.6, 0.5];
        for mask in 0u32..4 {
            let chosen: Vec<f64> = (0..2).filter(|b| mask & (1 << b) != 0).map(|b| claims[b]).collect();
            let expect = chosen.iter().sum::<f64>() <= 1.0;
            let mut ledger = CpuBudgetLedger::new(1.0);
            let mut admitted_all = true;
            for (i, &u) in chosen.iter().enumerate() {
                let inst = instance(i as u64 + 1, component(&format!("c{i}"), 0, u));
                if admit_internal(&inst, &ledger).0 {
                    ledger.commit(inst.id, 0, u);
                } else {
                    admitted_all = false;
                }
            }
            assert_eq!(admitted_all, expect, "{chosen:?}");
        }
    }

    #[test]
    fn zero_claim_always_passes() {
        let mut ledger = CpuBudgetLedger::new(0.5).with_policy(AdmissionPolicy::RateMonotonic);
        ledger.commit(ComponentId(1), 0, 0.5);
        assert!(admit_internal(&instance(2, component("z", 0, 0.0)), &ledger).0);
    }

    #[test]
    fn rate_monotonic_bound_values() {
        assert_eq!(rate_monotonic_bound(1), 1.0);
        assert!((rate_monotonic_bound(2) - 0.828_427_124_746_190_1).abs() < 1e-12);
        assert!((rate_monotonic_bound(1000) - std::f64::consts::LN_2).abs() < 1e-3);

        let mut ledger = CpuBudgetLedger::new(1.0).with_policy(AdmissionPolicy::RateMonotonic);
        ledger.commit(ComponentId(1), 0, 0.5);
        let (ok, reason) = admit_internal(&instance(2, component("b", 0, 0.4)), &ledger);
        assert!(!ok);
        assert_eq!(reason.code, ReasonCode::RmBound);
        assert!(admit_internal(&instance(2, component("b", 0, 0.3)), &ledger).0);
    }

    #[test]
    fn ledger_commit_release() {
        let mut ledger = CpuBudgetLedger::new(1.0);
        ledger.commit(ComponentId(1), 0, 0.25);
        ledger.commit(ComponentId(2), 1, 0.5);
        ledger.commit(ComponentId(3), 0, 0.25);
        assert_eq!(ledger.load(0), 0.5);
        assert_eq!(ledger.release(ComponentId(1)), Some((0, 0.25)));
        assert_eq!(ledger.release(ComponentId(1)), None);
        assert_eq!(ledger.load(0), 0.25);
        // re-admitting an instance that already holds a claim does not double count
        assert!(admit_internal(&instance(3, component("c", 0, 1.0)), &ledger).0);
    }

    struct Fixed(Result<bool, ServiceFault>);
    impl ResolvingService for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
            self.0.clone()
        }
    }

    struct Panicky;
    impl ResolvingService for Panicky {
        fn name(&self) -> &str {
            "panicky"
        }
        fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
            panic!("boom")
        }
    }

    struct Slow;
    impl ResolvingService for Slow {
        fn name(&self) -> &str {
            "slow"
        }
        fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
            std::thread::sleep(Duration::from_millis(30));
            Ok(true)
        }
    }

    #[test]
    fn admit_conjunction_examples() {
        let reg = Registry::new();
        let ledger = CpuBudgetLedger::new(1.0);
        let cand = instance(1, component("c", 0, 0.1));

        let d = admit(&cand, &ledger, None, &reg);
        assert!(d.admitted && d.internal_verdict && d.external_verdict);

        let mut yes = ExternalResolver::new(Box::new(Fixed(Ok(true))));
        assert!(admit(&cand, &ledger, Some(&mut yes), &reg).admitted);

        let mut no = ExternalResolver::new(Box::new(Fixed(Ok(false))));
        let d = admit(&cand, &ledger, Some(&mut no), &reg);
        assert!(!d.admitted && d.internal_verdict && !d.external_verdict);
        assert_eq!(d.reason.code, ReasonCode::ExternalVeto);
        assert!(d.reason.text.contains("fixed"));
    }

    #[test]
    fn failing_external_services_veto() {
        let reg = Registry::new();
        let ledger = CpuBudgetLedger::new(1.0);
        let cand = instance(1, component("c", 0, 0.1));
        let services: Vec<ExternalResolver> = vec![
            ExternalResolver::new(Box::new(Fixed(Err(ServiceFault("db down".into()))))),
            ExternalResolver::new(Box::new(Panicky)),
            ExternalResolver::with_timeout(Box::new(Slow), Duration::from_millis(5)),
        ];
        let prev = panic::take_hook();
        panic::set_hook(Box::new(|_| {}));
        for mut ext in services {
            let d = admit(&cand, &ledger, Some(&mut ext), &reg);
            assert!(!d.admitted);
            assert_eq!(d.reason.code, ReasonCode::ExternalFailure, "{}", d.reason);
        }
        panic::set_hook(prev);
    }

    fn running(reg: &mut Registry, name: &str, consumes: &[(ComponentId, &str)], provides: &[&str]) -> ComponentId {
        let mut d = component(name, 0, 0.0);
        for (_, p) in consumes {
            d.inports.push(port(p, Direction::In, Interface::SharedMemory, 1));
        }
        for p in provides {
            d.outports.push(port(p, Direction::Out, Interface::SharedMemory, 1));
        }
        let id = reg.register(d).unwrap();
        let inst = reg.get_mut(id).unwrap();
        inst.state = LifecycleState::Active;
        inst.bindings = consumes
            .iter()
            .map(|(prov, p)| Binding {
                consumer: id,
                consumer_port: p.to_string(),
                provider: *prov,
                provider_port: p.to_string(),
                channel_kind: Interface::SharedMemory,
            })
            .collect();
        id
    }

    #[test]
    fn cascade_examples() {
        let mut reg = Registry::new();
        let a = running(&mut reg, "a", &[], &["pa"]);
        let b = running(&mut reg, "b", &[(a, "pa")], &["pb"]);
        let c = running(&mut reg, "c", &[(b, "pb")], &[]);
        let leaf = running(&mut reg, "leaf", &[], &[]);
        assert_eq!(cascade_unsatisfied(a, &reg, None, 0), [b, c]);
        assert_eq!(cascade_unsatisfied(b, &reg, None, 0), [c]);
        assert!(cascade_unsatisfied(leaf, &reg, None, 0).is_empty());
    }

    struct Names(Vec<ComponentId>);
    impl ResolvingService for Names {
        fn name(&self) -> &str {
            "names"
        }
        fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
            Ok(true)
        }
        fn on_change(&mut self, _: &LifecycleEvent, _: &Registry) -> Result<Vec<ComponentId>, ServiceFault> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn cascade_includes_external_closure() {
        let mut reg = Registry::new();
        let a = running(&mut reg, "a", &[], &[]);
        let x = running(&mut reg, "x", &[], &["px"]);
        let y = running(&mut reg, "y", &[(x, "px")], &[]);
        let mut ext = ExternalResolver::new(Box::new(Names(vec![x, ComponentId(99)])));
        assert_eq!(cascade_unsatisfied(a, &reg, Some(&mut ext), 1), [x, y]);
    }
}
