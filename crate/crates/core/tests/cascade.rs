mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use rtexec::descriptor::Direction;
use rtexec::executive::{Executive, ExecutiveConfig, LifecycleState};
use rtexec::registry::ComponentId;
use rtexec::resolver::{cascade_unsatisfied, resolve_functional};

/// Installs every node in random order, starts them all and checks they run.
fn build(rng: &mut ChaCha8Rng, parents: &[Vec<usize>]) -> (Executive, Vec<ComponentId>) {
    let n = parents.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut exec = virtual_exec(ExecutiveConfig::default());
    let mut ids = vec![ComponentId(0); n];
    for &v in &order {
        ids[v] = exec.install(dag_node(v, &parents[v])).unwrap();
    }
    for &v in &order {
        // Consumers installed before their providers record the intent and start later.
        let _ = exec.start(ids[v]);
    }
    for &id in &ids {
        assert_eq!(exec.state(id), Some(LifecycleState::Active));
    }
    (exec, ids)
}

/// Brute force: after removing `departed`, rescan every running instance in
/// id order, drop the first one with an inport no remaining instance
/// provides, and repeat until nothing changes.
fn oracle(parents: &[Vec<usize>], ids: &[ComponentId], departed: usize) -> Vec<ComponentId> {
    let mut alive: BTreeSet<ComponentId> = ids.iter().copied().collect();
    alive.remove(&ids[departed]);
    let node_of = |id: ComponentId| ids.iter().position(|&x| x == id).unwrap();
    let mut out = Vec::new();
    loop {
        let broken = alive
            .iter()
            .copied()
            .find(|&id| parents[node_of(id)].iter().any(|&p| !alive.contains(&ids[p])));
        match broken {
            Some(id) => {
                alive.remove(&id);
                out.push(id);
            }
            None => return out,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force_on_random_dags(seed in any::<u64>(), n in 1usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = random_dag(&mut rng, n);
        let (mut exec, ids) = build(&mut rng, &parents);
        let departed = rng.gen_range(0..n);
        let got = cascade_unsatisfied(ids[departed], exec.registry(), None, 0);
        prop_assert_eq!(&got, &oracle(&parents, &ids, departed));

        // The executive deactivates exactly that set, consumers first, and every
        // instance left running still resolves against what remains.
        let record = exec.dispatch(rtexec::executive::EventKind::Stop { id: ids[departed] });
        let stopped: Vec<ComponentId> = record
            .changes
            .iter()
            .filter(|c| c.from == LifecycleState::Active)
            .map(|c| c.id)
            .collect();
        let mut expected = got.clone();
        expected.push(ids[departed]);
        prop_assert_eq!(stopped, expected);
        for inst in exec.registry().instances().filter(|i| i.state == LifecycleState::Active) {
            let fresh = resolve_functional(inst.id, exec.registry()).unwrap();
            prop_assert_eq!(&fresh, &inst.bindings);
        }
        exec.check_invariants().unwrap();
    }

    /// With several providers per port the cascade follows actual bindings: a
    /// consumer bound to the departed provider is listed even when another
    /// provider could serve it, and is rebound by the restart in the same event.
    #[test]
    fn follows_bindings_with_alternative_providers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut exec = virtual_exec(ExecutiveConfig::default());
        let mut ids = Vec::new();
        for i in 0..rng.gen_range(2..10) {
            let mut d = periodic(&format!("n{i}"), 100.0, 0, 0.0);
            d.outports.push(shm(&format!("q{}", rng.gen_range(0..3)), Direction::Out));
            if i > 0 && rng.gen_bool(0.7) {
                d.inports.push(shm(&format!("q{}", rng.gen_range(0..3)), Direction::In));
            }
            let id = exec.install(d).unwrap();
            let _ = exec.start(id);
            ids.push(id);
        }
        let running: Vec<ComponentId> = ids.iter().copied().filter(|&id| exec.state(id) == Some(LifecycleState::Active)).collect();
        prop_assume!(!running.is_empty());
        let departed = running[rng.gen_range(0..running.len())];

        let mut gone = BTreeSet::from([departed]);
        let mut expected = Vec::new();
        loop {
            let next = exec
                .registry()
                .instances()
                .filter(|i| i.is_provider() && !gone.contains(&i.id))
                .find(|i| i.bindings.iter().any(|b| gone.contains(&b.provider)))
                .map(|i| i.id);
            match next {
                Some(id) => {
                    gone.insert(id);
                    expected.push(id);
                }
                None => break,
            }
        }
        prop_assert_eq!(cascade_unsatisfied(departed, exec.registry(), None, 0), expected);

        exec.stop(departed).unwrap();
        exec.check_invariants().unwrap();
        for inst in exec.registry().instances().filter(|i| i.is_provider()) {
            prop_assert!(inst.bindings.iter().all(|b| b.provider != departed));
        }
    }
}

#[test]
fn chain_example() {
    let parents = vec![vec![], vec![0], vec![1]];
    let (exec, ids) = build(&mut ChaCha8Rng::seed_from_u64(7), &parents);
    assert_eq!(cascade_unsatisfied(ids[0], exec.registry(), None, 0), vec![ids[1], ids[2]]);
    assert_eq!(cascade_unsatisfied(ids[2], exec.registry(), None, 0), vec![]);
}
