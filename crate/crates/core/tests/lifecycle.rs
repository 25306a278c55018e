mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use rtexec::executive::{replay, EventKind, Executive, ExecutiveConfig, LifecycleState};
use rtexec::resolver::{admit_internal, resolve_functional, AdmissionPolicy};
use rtexec::rtsim::TaskStatus;

fn config(cap: f64, policy: AdmissionPolicy, auto_restart: bool) -> ExecutiveConfig {
    ExecutiveConfig {
        cap,
        policy,
        auto_restart,
        ..ExecutiveConfig::default()
    }
}

/// Per-CPU sums over running instances, accumulated in ascending id order.
fn active_sums(exec: &Executive) -> BTreeMap<u32, f64> {
    let mut sums = BTreeMap::new();
    for inst in exec.registry().instances() {
        if inst.is_provider() {
            *sums.entry(inst.descriptor.cpu()).or_insert(0.0) += inst.descriptor.cpu_usage;
        }
    }
    sums
}

fn check_after_event(exec: &Executive, record: &rtexec::executive::EventRecord) -> Result<(), TestCaseError> {
    for c in &record.changes {
        prop_assert!(c.from.can_transition_to(c.to), "illegal {c}");
    }
    if let Err(e) = exec.check_invariants() {
        return Err(TestCaseError::fail(format!("after {}: {e}", record.to_line())));
    }
    let sums = active_sums(exec);
    let loads = exec.ledger().per_cpu_load();
    for (cpu, sum) in &sums {
        prop_assert_eq!(loads.get(cpu).copied().unwrap_or(0.0), *sum);
    }
    for (cpu, load) in &loads {
        prop_assert!(*load <= exec.ledger().cap(), "cpu{cpu} at {load}");
        prop_assert_eq!(sums.get(cpu).copied().unwrap_or(0.0), *load);
    }
    // Running in the registry means present in the container.
    for inst in exec.registry().instances() {
        let status = exec.container().status(inst.id);
        match inst.state {
            LifecycleState::Active | LifecycleState::Suspended => prop_assert!(
                matches!(status, Some(TaskStatus::Running | TaskStatus::Suspended)),
                "{} {} but container says {:?}",
                inst.id,
                inst.state,
                status
            ),
            _ => prop_assert!(
                !matches!(status, Some(TaskStatus::Running | TaskStatus::Suspended)),
                "{} {} but container says {:?}",
                inst.id,
                inst.state,
                status
            ),
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_sequences_keep_invariants(
        seed in any::<u64>(),
        len in 1usize..120,
        cap in prop::sample::select(vec![1.0, 0.75, 0.5]),
        rm in any::<bool>(),
        auto_restart in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = if rm { AdmissionPolicy::RateMonotonic } else { AdmissionPolicy::Utilization };
        let mut exec = virtual_exec(config(cap, policy, auto_restart));
        let mut driver = Driver::new(component_pool(&mut rng, 12, 3));
        for op in random_ops(&mut rng, 12, len) {
            if let Some(record) = driver.apply(&mut exec, &op) {
                check_after_event(&exec, &record)?;
            }
        }
    }

    #[test]
    fn settle_leaves_nothing_promotable(seed in any::<u64>(), len in 1usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut exec = virtual_exec(ExecutiveConfig::default());
        let mut driver = Driver::new(component_pool(&mut rng, 10, 2));
        for op in random_ops(&mut rng, 10, len) {
            driver.apply(&mut exec, &op);
        }
        let Some(any_id) = exec.registry().ids().first().copied() else {
            return Ok(());
        };
        exec.dispatch(EventKind::ProviderAppeared { id: any_id });
        for inst in exec.registry().instances() {
            match inst.state {
                LifecycleState::Unsatisfied if inst.enabled => {
                    let resolvable = resolve_functional(inst.id, exec.registry()).is_ok();
                    let admissible = admit_internal(inst, exec.ledger()).0;
                    prop_assert!(!(resolvable && admissible), "{} left UNSATISFIED", inst.id);
                }
                LifecycleState::Satisfied => {
                    prop_assert!(!inst.start_intent, "{} SATISFIED with a pending start", inst.id);
                    prop_assert!(resolve_functional(inst.id, exec.registry()).is_ok());
                }
                _ => {}
            }
        }
    }

    #[test]
    fn logs_replay_identically(seed in any::<u64>(), len in 1usize..80, auto_restart in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = config(1.0, AdmissionPolicy::Utilization, auto_restart);
        let sink = SharedBuf::default();
        let mut exec = virtual_exec(cfg.clone()).with_log(Box::new(sink.clone()));
        let mut driver = Driver::new(component_pool(&mut rng, 8, 2));
        for op in random_ops(&mut rng, 8, len) {
            driver.apply(&mut exec, &op);
        }
        let log = sink.text();
        let from_history: String = exec.history().iter().map(|r| r.to_line() + "\n").collect();
        prop_assert_eq!(&log, &from_history);

        let mut fresh = virtual_exec(cfg);
        let report = replay(&mut fresh, &log).unwrap();
        prop_assert_eq!(report.events, exec.history().len());
        prop_assert!(report.is_identical(), "{:?}", report.mismatches.first());
        let states = |e: &Executive| e.registry().instances().map(|i| (i.id, i.state, i.bindings.clone())).collect::<Vec<_>>();
        prop_assert_eq!(states(&exec), states(&fresh));
    }
}

#[test]
fn stop_resets_to_satisfied_and_releases_budget() {
    let mut exec = virtual_exec(ExecutiveConfig::default());
    let a = exec.install(periodic("a", 100.0, 0, 0.4)).unwrap();
    let b = exec.install(periodic("b", 100.0, 0, 0.4)).unwrap();
    let c = exec.install(periodic("c", 100.0, 0, 0.4)).unwrap();
    exec.start(a).unwrap();
    exec.start(b).unwrap();
    assert!(exec.start(c).is_err());
    assert_eq!(exec.state(c), Some(LifecycleState::Unsatisfied));
    exec.stop(a).unwrap();
    assert_eq!(exec.state(a), Some(LifecycleState::Satisfied));
    exec.start(c).unwrap();
    assert_eq!(exec.ledger().load(0), 0.4 + 0.4);
    exec.check_invariants().unwrap();
}
