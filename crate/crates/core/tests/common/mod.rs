//! Shared builders and generators for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rtexec::descriptor::{
    ComponentDescriptor, DataType, Direction, Interface, PeriodicTaskSpec, PortSpec, PropertySpec,
    TaskType, ValueType,
};
use rtexec::executive::{EventKind, Executive, ExecutiveConfig};
use rtexec::registry::ComponentId;
use rtexec::rtsim::VirtualContainer;

pub const MS: u64 = 1_000_000;

/// The published camera sample descriptor, character for character.
pub const CAMERA_SAMPLE_XML: &str = r#"
<? xml version="1.0" encoding="UTF-8"?>
<dr:component name="camera" desc="this is a smart camera
controller" type="periodic" enabled="true"
cpuusage="0.1">
  <implementation bincode="ua.pats.demo.
smartcamera.RTComponent"/>
  <periodictask frequency="100" runoncup="0" priority="2"/>
  <outport name="images" interface="RTAI.SHM" type="Byte"
size="400" />
  <inport name="xysize" interface="RTAI.SHM" type="Integer"
size="400"/>
  <property name="prox00" type="Integer" value="6" />
  ...
</dr:component>
"#;

pub fn shm(name: &str, direction: Direction) -> PortSpec {
    PortSpec {
        name: name.into(),
        direction,
        interface: Interface::SharedMemory,
        data_type: DataType::Integer,
        size: 2,
    }
}

pub fn periodic(name: &str, hz: f64, cpu: u32, usage: f64) -> ComponentDescriptor {
    ComponentDescriptor {
        name: name.into(),
        desc: String::new(),
        task_type: TaskType::Periodic,
        enabled: true,
        cpu_usage: usage,
        bincode: "test.Idle".into(),
        task: Some(PeriodicTaskSpec {
            frequency: hz,
            run_on_cpu: cpu,
            priority: 1,
        }),
        inports: vec![],
        outports: vec![],
        properties: vec![PropertySpec {
            name: "gain".into(),
            value_type: ValueType::Integer,
            value: "1".into(),
        }],
    }
}

pub fn virtual_exec(config: ExecutiveConfig) -> Executive {
    Executive::new(config, Box::new(VirtualContainer::new()))
}

// ---- descriptors -------------------------------------------------------

fn attr_text() -> impl Strategy<Value = String> {
    // Markup characters, whitespace escapes and non-ASCII must all survive.
    prop::collection::vec(
        prop_oneof![
            6 => prop::char::range('a', 'z'),
            2 => prop::char::range('0', '9'),
            1 => prop::sample::select(vec![
                '&', '<', '>', '"', '\'', ' ', '\n', '\t', '\r', '.', '-', 'é', 'λ', '中', '🙂'
            ]),
        ],
        0..24,
    )
    .prop_map(|cs| cs.into_iter().collect())
}

fn nonempty_text() -> impl Strategy<Value = String> {
    attr_text().prop_filter("non-empty", |s| !s.is_empty())
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_$][A-Za-z0-9_$]{0,8}"
}

fn bincode() -> impl Strategy<Value = String> {
    prop::collection::vec(ident(), 1..5).prop_map(|segs| segs.join("."))
}

fn frequency() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::sample::select(vec![0.5, 1.0, 4.0, 100.0, 1000.0, 33.333]),
        (1e-3f64..1e6),
    ]
}

fn port(direction: Direction) -> impl Strategy<Value = PortSpec> {
    (
        nonempty_text(),
        prop::sample::select(vec![Interface::SharedMemory, Interface::Mailbox]),
        prop::sample::select(vec![DataType::Integer, DataType::Byte]),
        1u32..5000,
    )
        .prop_map(move |(name, interface, data_type, size)| PortSpec {
            name,
            direction,
            interface,
            data_type,
            size,
        })
}

fn property() -> impl Strategy<Value = PropertySpec> {
    let typed = prop_oneof![
        any::<i64>().prop_map(|v| (ValueType::Integer, v.to_string())),
        any::<f64>()
            .prop_filter("finite", |v| v.is_finite())
            .prop_map(|v| (ValueType::Float, v.to_string())),
        prop::sample::select(vec!["true", "false", "TRUE", "False"])
            .prop_map(|v| (ValueType::Boolean, v.to_string())),
        attr_text().prop_map(|v| (ValueType::String, v)),
    ];
    (nonempty_text(), typed).prop_map(|(name, (value_type, value))| PropertySpec {
        name,
        value_type,
        value,
    })
}

/// Arbitrary valid descriptor. Port names are unique across both directions.
pub fn arb_descriptor() -> impl Strategy<Value = ComponentDescriptor> {
    let task = prop::option::of((frequency(), 0u32..8, 0u32..100).prop_map(|(frequency, run_on_cpu, priority)| {
        PeriodicTaskSpec {
            frequency,
            run_on_cpu,
            priority,
        }
    }));
    (
        (nonempty_text(), attr_text(), any::<bool>(), 0.0f64..=1.0, bincode()),
        task,
        prop::collection::vec(port(Direction::In), 0..4),
        prop::collection::vec(port(Direction::Out), 0..4),
        prop::collection::vec(property(), 0..5),
    )
        .prop_map(|((name, desc, enabled, cpu_usage, bincode), task, inports, mut outports, properties)| {
            outports.retain(|o| !inports.iter().any(|i| i.name == o.name));
            let mut seen = std::collections::HashSet::new();
            let inports: Vec<PortSpec> = inports.into_iter().filter(|p| seen.insert(p.name.clone())).collect();
            let outports: Vec<PortSpec> = outports.into_iter().filter(|p| seen.insert(p.name.clone())).collect();
            ComponentDescriptor {
                name,
                desc,
                task_type: if task.is_some() {
                    TaskType::Periodic
                } else {
                    TaskType::Aperiodic
                },
                enabled,
                cpu_usage,
                bincode,
                task,
                inports,
                outports,
                properties,
            }
        })
}

// ---- event sequences ---------------------------------------------------

/// One step of a randomized lifecycle run, addressing components by slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Install(usize),
    Enable(usize),
    Disable(usize),
    Start(usize),
    Stop(usize),
    Uninstall(usize),
    Suspend(usize),
    Resume(usize),
    Set(usize, i64),
    Appeared(usize),
    Departed(usize),
    Advance(u64),
}

/// A pool of components with random CPU claims, CPUs and port dependencies.
///
/// Every slot provides one port named after its group and may consume the
/// ports of other groups, so the dependency graph contains chains, fan-out,
/// alternative providers and the occasional cycle.
pub fn component_pool(rng: &mut ChaCha8Rng, n: usize, cpus: u32) -> Vec<ComponentDescriptor> {
    let groups = (n / 3).max(2);
    (0..n)
        .map(|i| {
            let hz = [10.0, 50.0, 100.0, 250.0][rng.gen_range(0..4)];
            let usage = match rng.gen_range(0..6) {
                0 => 0.0,
                1 => 1.0 / 3.0,
                2 => 0.1,
                _ => rng.gen_range(0.0..0.6),
            };
            let mut d = periodic(&format!("c{i:02}"), hz, rng.gen_range(0..cpus), usage);
            d.task.as_mut().unwrap().priority = rng.gen_range(0..10);
            let group = i % groups;
            d.outports.push(shm(&format!("g{group}"), Direction::Out));
            for g in 0..groups {
                if g != group && rng.gen_bool(0.25) {
                    d.inports.push(shm(&format!("g{g}"), Direction::In));
                }
            }
            if rng.gen_bool(0.1) {
                d.enabled = false;
            }
            d
        })
        .collect()
}

/// Installs most slots up front, then mixes random operations with a bias
/// towards starts so that budgets fill up.
pub fn random_ops(rng: &mut ChaCha8Rng, slots: usize, len: usize) -> Vec<Op> {
    let mut ops: Vec<Op> = (0..slots).filter(|_| rng.gen_bool(0.8)).map(Op::Install).collect();
    for i in (1..ops.len()).rev() {
        ops.swap(i, rng.gen_range(0..=i));
    }
    ops.extend((0..len).map(|_| {
        let s = rng.gen_range(0..slots);
        match rng.gen_range(0..28) {
            0..=2 => Op::Install(s),
            3..=12 => Op::Start(s),
            13..=15 => Op::Stop(s),
            16 => Op::Enable(s),
            17 => Op::Disable(s),
            18 => Op::Uninstall(s),
            19 => Op::Suspend(s),
            20 => Op::Resume(s),
            21 => Op::Set(s, rng.gen_range(-5..50)),
            22 => Op::Appeared(s),
            23 => Op::Departed(s),
            _ => Op::Advance(rng.gen_range(1..40)),
        }
    }));
    ops
}

/// Turns slot-addressed ops into events for the executive's current contents.
/// Ops on slots that are not installed address an id that was never issued.
pub struct Driver {
    pub pool: Vec<ComponentDescriptor>,
    pub ids: BTreeMap<usize, ComponentId>,
}

impl Driver {
    pub fn new(pool: Vec<ComponentDescriptor>) -> Self {
        Driver {
            pool,
            ids: BTreeMap::new(),
        }
    }

    fn id(&self, exec: &Executive, slot: usize) -> ComponentId {
        self.ids
            .get(&slot)
            .copied()
            .filter(|id| exec.registry().contains(*id))
            .unwrap_or(ComponentId(u64::MAX))
    }

    /// `None` for time advances, which are not lifecycle events.
    pub fn event(&self, exec: &Executive, op: &Op) -> Option<EventKind> {
        let id = |s: &usize| self.id(exec, *s);
        Some(match op {
            Op::Install(s) => EventKind::Install {
                descriptor: self.pool[*s].clone(),
            },
            Op::Enable(s) => EventKind::Enable { id: id(s) },
            Op::Disable(s) => EventKind::Disable { id: id(s) },
            Op::Start(s) => EventKind::Start { id: id(s) },
            Op::Stop(s) => EventKind::Stop { id: id(s) },
            Op::Uninstall(s) => EventKind::Uninstall { id: id(s) },
            Op::Suspend(s) => EventKind::Suspend { id: id(s) },
            Op::Resume(s) => EventKind::Resume { id: id(s) },
            Op::Set(s, v) => EventKind::SetProperty {
                id: id(s),
                name: "gain".into(),
                value: v.to_string(),
            },
            Op::Appeared(s) => EventKind::ProviderAppeared { id: id(s) },
            Op::Departed(s) => EventKind::ProviderDeparted { id: id(s) },
            Op::Advance(_) => return None,
        })
    }

    /// Applies one op and returns the record, if it was an event.
    pub fn apply(&mut self, exec: &mut Executive, op: &Op) -> Option<rtexec::executive::EventRecord> {
        if let Op::Advance(ms) = op {
            let t = exec.now_ns() + ms * MS;
            exec.advance_to(t);
            return None;
        }
        let kind = self.event(exec, op)?;
        let record = exec.dispatch(kind);
        if let (Op::Install(s), Some(id)) = (op, record.assigned) {
            self.ids.insert(*s, id);
        }
        Some(record)
    }
}

// ---- dependency graphs -------------------------------------------------

/// Random DAG over `n` nodes as parent lists. Node `v` may only consume from
/// nodes listed before it in the hidden topological order `topo`.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut topo: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        topo.swap(i, rng.gen_range(0..=i));
    }
    let density = rng.gen_range(0.05..0.5);
    let mut parents = vec![Vec::new(); n];
    for (pos, &v) in topo.iter().enumerate() {
        for &u in &topo[..pos] {
            if rng.gen_bool(density) {
                parents[v].push(u);
            }
        }
    }
    parents
}

/// Descriptor for DAG node `v`: one outport `p{v}` and one inport per parent.
pub fn dag_node(v: usize, parents: &[usize]) -> ComponentDescriptor {
    let mut d = periodic(&format!("n{v:02}"), 100.0, 0, 0.0);
    d.outports.push(shm(&format!("p{v}"), Direction::Out));
    for &u in parents {
        d.inports.push(shm(&format!("p{u}"), Direction::In));
    }
    d
}

// ---- log capture -------------------------------------------------------

/// Cloneable in-memory log sink.
#[derive(Clone, Default)]
pub struct SharedBuf(pub std::sync::Arc<std::sync::Mutex<Vec<u8>>>);

impl SharedBuf {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl std::io::Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
