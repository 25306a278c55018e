//! A declarative real-time component executive.
//!
//! Components describe their real-time contract (task type, period, priority,
//! CPU claim) and their typed communication ports in an XML descriptor. The
//! [`executive::Executive`] registers them, resolves port dependencies and CPU
//! admission, drives the lifecycle state machine and hands admitted components
//! to a simulated fixed-priority periodic container ([`rtsim`]).
//!
//! Module map:
//!
//! - [`descriptor`]: XML descriptor parsing, validation and serialization.
//! - [`registry`]: the global view of installed instances and their service records.
//! - [`resolver`]: port compatibility, binding selection, CPU admission, cascades.
//! - [`executive`]: lifecycle state machine, event dispatch, event log and replay.
//! - [`rtsim`]: virtual-time and wall-clock periodic containers, channels, latency sampling.
//! - [`cli`]: latency statistics, scenario scripts, operator shell, latency experiment.

pub mod cli;
pub mod descriptor;
pub mod executive;
pub mod registry;
pub mod resolver;
pub mod rtsim;

pub use descriptor::{
    parse_descriptor, serialize_descriptor, ComponentDescriptor, DataType, Direction, Interface,
    ParseError, PeriodicTaskSpec, PortSpec, PropertySpec, TaskType, ValueType,
};
pub use executive::{ExecError, Executive, ExecutiveConfig, LifecycleEvent, LifecycleState};
pub use registry::{ComponentId, ComponentInstance, Registry, RegistryError, ServiceRecord};
pub use resolver::{AdmissionDecision, AdmissionPolicy, Binding, CpuBudgetLedger, ResolvingService};
