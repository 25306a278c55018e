//! The executive's global view of installed component instances.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{ComponentDescriptor, Direction, PortSpec};
use crate::executive::LifecycleState;
use crate::resolver::{ports_compatible, Binding};

/// Instance handle. Assigned monotonically and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub u64);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentInstance {
    pub id: ComponentId,
    pub descriptor: ComponentDescriptor,
    pub state: LifecycleState,
    /// One per inport once resolved; empty while REGISTERED or UNSATISFIED.
    pub bindings: Vec<Binding>,
    pub enabled: bool,
    /// Operator asked for this instance to run. Survives cascade deactivation.
    pub start_intent: bool,
}

impl ComponentInstance {
    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    /// Whether the instance currently offers its outports to consumers.
    pub fn is_provider(&self) -> bool {
        matches!(
            self.state,
            LifecycleState::Active | LifecycleState::Suspended
        )
    }

    fn publishes_service(&self) -> bool {
        matches!(
            self.state,
            LifecycleState::Satisfied | LifecycleState::Active | LifecycleState::Suspended
        )
    }

    fn service_record(&self) -> ServiceRecord {
        let mut properties: BTreeMap<String, String> = self
            .descriptor
            .properties
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        properties.insert("name".into(), self.descriptor.name.clone());
        properties.insert("type".into(), self.descriptor.task_type.as_str().into());
        ServiceRecord {
            component_id: self.id,
            properties,
        }
    }
}

/// Management-service publication of one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRecord {
    pub component_id: ComponentId,
    pub properties: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a component named {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown component {0}")]
    UnknownId(ComponentId),
    #[error("component {0} is still running")]
    StillActive(ComponentId),
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    next_id: u64,
    instances: BTreeMap<ComponentId, ComponentInstance>,
    by_name: HashMap<String, ComponentId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: ComponentDescriptor) -> Result<ComponentId, RegistryError> {
        if self.by_name.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        self.next_id += 1;
        let id = ComponentId(self.next_id);
        self.by_name.insert(descriptor.name.clone(), id);
        let enabled = descriptor.enabled;
        self.instances.insert(
            id,
            ComponentInstance {
                id,
                descriptor,
                state: LifecycleState::Registered,
                bindings: Vec::new(),
                enabled,
                start_intent: false,
            },
        );
        Ok(id)
    }

    /// Removes an instance that the executive has already taken out of execution.
    pub fn unregister(&mut self, id: ComponentId) -> Result<ComponentInstance, RegistryError> {
        let instance = self.instances.get(&id).ok_or(RegistryError::UnknownId(id))?;
        if instance.is_provider() {
            return Err(RegistryError::StillActive(id));
        }
        let instance = self.instances.remove(&id).expect("checked above");
        self.by_name.remove(&instance.descriptor.name);
        Ok(instance)
    }

    pub fn get(&self, id: ComponentId) -> Option<&ComponentInstance> {
        self.instances.get(&id)
    }

    pub(crate) fn get_mut(&mut self, id: ComponentId) -> Option<&mut ComponentInstance> {
        self.instances.get_mut(&id)
    }

    pub fn lookup(&self, name: &str) -> Option<ComponentId> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, id: ComponentId) -> bool {
        self.instances.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instances in ascending id order.
    pub fn instances(&self) -> impl Iterator<Item = &ComponentInstance> {
        self.instances.values()
    }

    pub fn ids(&self) -> Vec<ComponentId> {
        self.instances.keys().copied().collect()
    }

    pub fn snapshot(&self) -> Registry {
        self.clone()
    }

    /// Service records of every SATISFIED, ACTIVE or SUSPENDED instance.
    pub fn records(&self) -> Vec<ServiceRecord> {
        self.instances
            .values()
            .filter(|i| i.publishes_service())
            .map(ComponentInstance::service_record)
            .collect()
    }

    /// Records whose properties contain every `(key, value)` pair. Empty filter matches all.
    pub fn query(&self, filter: &[(&str, &str)]) -> Vec<ServiceRecord> {
        self.records()
            .into_iter()
            .filter(|r| {
                filter
                    .iter()
                    .all(|(k, v)| r.properties.get(*k).map(String::as_str) == Some(*v))
            })
            .collect()
    }

    /// Every `(instance, outport)` able to feed `required`, lowest id first.
    pub fn find_provider(&self, required: &PortSpec) -> Vec<(ComponentId, PortSpec)> {
        debug_assert_eq!(required.direction, Direction::In);
        self.instances
            .values()
            .filter(|i| i.is_provider())
            .flat_map(|i| {
                i.descriptor
                    .outports
                    .iter()
                    .filter(|out| ports_compatible(required, out))
                    .map(move |out| (i.id, out.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{parse_descriptor, DataType, Interface};

    fn camera() -> ComponentDescriptor {
        parse_descriptor(
            r#"<dr:component name="camera" type="periodic" cpuusage="0.1">
                <implementation bincode="ua.pats.demo.smartcamera.RTComponent"/>
                <periodictask frequency="100" runoncup="0" priority="2"/>
                <outport name="images" interface="RTAI.SHM" type="Byte" size="400"/>
                <inport name="xysize" interface="RTAI.SHM" type="Integer" size="400"/>
                <property name="prox00" type="Integer" value="6"/>
            </dr:component>"#,
        )
        .unwrap()
    }

    fn named(name: &str) -> ComponentDescriptor {
        let mut d = camera();
        d.name = name.into();
        d
    }

    fn xysize_provider(name: &str) -> ComponentDescriptor {
        let mut d = named(name);
        d.inports.clear();
        d.outports = vec![PortSpec {
            name: "xysize".into(),
            direction: Direction::Out,
            interface: Interface::SharedMemory,
            data_type: DataType::Integer,
            size: 400,
        }];
        d.properties.clear();
        d
    }

    #[test]
    fn register_starts_registered() {
        let mut reg = Registry::new();
        let id = reg.register(camera()).unwrap();
        let inst = reg.get(id).unwrap();
        assert_eq!(inst.state, LifecycleState::Registered);
        assert!(inst.enabled);
        assert!(inst.bindings.is_empty());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut reg = Registry::new();
        reg.register(camera()).unwrap();
        assert_eq!(
            reg.register(camera()),
            Err(RegistryError::DuplicateName("camera".into()))
        );
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn hundred_distinct_ids() {
        let mut reg = Registry::new();
        let ids: std::collections::HashSet<_> = (0..100)
            .map(|i| reg.register(named(&format!("c{i}"))).unwrap())
            .collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn ids_are_not_reused() {
        let mut reg = Registry::new();
        let a = reg.register(named("a")).unwrap();
        reg.unregister(a).unwrap();
        let b = reg.register(named("a")).unwrap();
        assert!(b > a);
    }

    #[test]
    fn unregister_guards() {
        let mut reg = Registry::new();
        let id = reg.register(camera()).unwrap();
        reg.get_mut(id).unwrap().state = LifecycleState::Active;
        assert_eq!(reg.unregister(id), Err(RegistryError::StillActive(id)));
        reg.get_mut(id).unwrap().state = LifecycleState::Satisfied;
        assert!(reg.unregister(id).is_ok());
        assert_eq!(reg.unregister(id), Err(RegistryError::UnknownId(id)));
        assert!(reg.lookup("camera").is_none());
    }

    #[test]
    fn records_follow_state() {
        let mut reg = Registry::new();
        assert!(reg.query(&[]).is_empty());
        let id = reg.register(camera()).unwrap();
        assert!(reg.query(&[("name", "camera")]).is_empty());
        reg.get_mut(id).unwrap().state = LifecycleState::Satisfied;
        assert_eq!(reg.query(&[("name", "camera")]).len(), 1);
        assert_eq!(reg.query(&[("prox00", "6")]).len(), 1);
        assert_eq!(reg.query(&[("prox00", "6"), ("type", "periodic")]).len(), 1);
        assert!(reg.query(&[("prox00", "7")]).is_empty());
        reg.get_mut(id).unwrap().state = LifecycleState::Unsatisfied;
        assert!(reg.query(&[]).is_empty());
    }

    #[test]
    fn find_provider_counts_active_and_suspended() {
        let mut reg = Registry::new();
        let wanted = camera().inports[0].clone();
        assert!(reg.find_provider(&wanted).is_empty());
        let p = reg.register(xysize_provider("prov")).unwrap();
        for (state, expect) in [
            (LifecycleState::Registered, 0),
            (LifecycleState::Unsatisfied, 0),
            (LifecycleState::Satisfied, 0),
            (LifecycleState::Active, 1),
            (LifecycleState::Suspended, 1),
        ] {
            reg.get_mut(p).unwrap().state = state;
            assert_eq!(reg.find_provider(&wanted).len(), expect, "{state:?}");
        }
    }

    #[test]
    fn find_provider_orders_by_id() {
        let mut reg = Registry::new();
        let wanted = camera().inports[0].clone();
        let a = reg.register(xysize_provider("a")).unwrap();
        let b = reg.register(xysize_provider("b")).unwrap();
        for id in [b, a] {
            reg.get_mut(id).unwrap().state = LifecycleState::Active;
        }
        let found: Vec<_> = reg.find_provider(&wanted).into_iter().map(|(id, _)| id).collect();
        assert_eq!(found, [a, b]);
    }
}
