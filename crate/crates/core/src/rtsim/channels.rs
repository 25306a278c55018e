//! Data-path channels: last-value shared memory and bounded FIFO mailboxes.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use thiserror::Error;

use crate::descriptor::{DataType, Interface, PortSpec};

pub const DEFAULT_MAILBOX_CAPACITY: usize = 16;

/// One message or shared-memory image: exactly `size` elements of the port's type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Integer(Vec<i32>),
    Byte(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Integer(v) => v.len(),
            Payload::Byte(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Payload::Integer(_) => DataType::Integer,
            Payload::Byte(_) => DataType::Byte,
        }
    }

    pub fn as_integers(&self) -> Option<&[i32]> {
        match self {
            Payload::Integer(v) => Some(v),
            Payload::Byte(_) => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Payload::Byte(v) => Some(v),
            Payload::Integer(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("payload has {got} elements, channel expects {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("payload type {got:?} does not match channel type {expected:?}")]
    TypeMismatch { expected: DataType, got: DataType },
    #[error("mailbox full")]
    Overflow,
    #[error("port handle revoked after task termination")]
    Revoked,
    #[error("no such port {0:?}")]
    UnknownPort(String),
    #[error("port {0:?} has the wrong transport for this operation")]
    WrongTransport(String),
}

fn check_shape(data_type: DataType, size: u32, payload: &Payload) -> Result<(), ChannelError> {
    if payload.data_type() != data_type {
        return Err(ChannelError::TypeMismatch {
            expected: data_type,
            got: payload.data_type(),
        });
    }
    if payload.len() != size as usize {
        return Err(ChannelError::SizeMismatch {
            expected: size as usize,
            got: payload.len(),
        });
    }
    Ok(())
}

/// Bounded multi-producer FIFO. `push` refuses new items when full.
#[derive(Debug)]
pub struct BoundedQueue<T> {
    capacity: usize,
    items: Mutex<VecDeque<T>>,
    ready: Condvar,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        BoundedQueue {
            capacity,
            items: Mutex::new(VecDeque::with_capacity(capacity)),
            ready: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hands the item back when the queue is full.
    pub fn push(&self, item: T) -> Result<(), T> {
        let mut items = self.items.lock().unwrap();
        if items.len() >= self.capacity {
            return Err(item);
        }
        items.push_back(item);
        drop(items);
        self.ready.notify_one();
        Ok(())
    }

    pub fn pop(&self) -> Option<T> {
        self.items.lock().unwrap().pop_front()
    }

    pub fn drain(&self) -> Vec<T> {
        self.items.lock().unwrap().drain(..).collect()
    }

    /// Blocks until an item is queued or `timeout` elapses; true when non-empty.
    pub fn wait_nonempty(&self, timeout: Duration) -> bool {
        let items = self.items.lock().unwrap();
        let (items, _) = self
            .ready
            .wait_timeout_while(items, timeout, |q| q.is_empty())
            .unwrap();
        !items.is_empty()
    }

    pub fn notify(&self) {
        self.ready.notify_all();
    }
}

/// Committed shared-memory contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShmSnapshot {
    pub data: Payload,
    /// Number of writes so far; the first write has version 1.
    pub version: u64,
}

/// Single-slot last-value channel. Readers get whole snapshots, never a partial write.
#[derive(Debug)]
pub struct SharedMemoryChannel {
    name: String,
    data_type: DataType,
    size: u32,
    slot: RwLock<Option<Arc<ShmSnapshot>>>,
}

impl SharedMemoryChannel {
    pub fn new(name: impl Into<String>, data_type: DataType, size: u32) -> Self {
        SharedMemoryChannel {
            name: name.into(),
            data_type,
            size,
            slot: RwLock::new(None),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Replaces the slot and returns the new version.
    pub fn write(&self, data: Payload) -> Result<u64, ChannelError> {
        check_shape(self.data_type, self.size, &data)?;
        let mut slot = self.slot.write().unwrap();
        let version = slot.as_ref().map_or(0, |s| s.version) + 1;
        *slot = Some(Arc::new(ShmSnapshot { data, version }));
        Ok(version)
    }

    /// `None` until the first write.
    pub fn read(&self) -> Option<Arc<ShmSnapshot>> {
        self.slot.read().unwrap().clone()
    }

    pub fn version(&self) -> u64 {
        self.slot.read().unwrap().as_ref().map_or(0, |s| s.version)
    }
}

/// Bounded FIFO of fixed-size messages. Sending to a full mailbox is rejected.
#[derive(Debug)]
pub struct MailboxChannel {
    name: String,
    data_type: DataType,
    size: u32,
    queue: BoundedQueue<Payload>,
}

impl MailboxChannel {
    pub fn new(name: impl Into<String>, data_type: DataType, size: u32) -> Self {
        Self::with_capacity(name, data_type, size, DEFAULT_MAILBOX_CAPACITY)
    }

    pub fn with_capacity(name: impl Into<String>, data_type: DataType, size: u32, capacity: usize) -> Self {
        MailboxChannel {
            name: name.into(),
            data_type,
            size,
            queue: BoundedQueue::new(capacity),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn send(&self, msg: Payload) -> Result<(), ChannelError> {
        check_shape(self.data_type, self.size, &msg)?;
        self.queue.push(msg).map_err(|_| ChannelError::Overflow)
    }

    /// Non-blocking.
    pub fn recv(&self) -> Option<Payload> {
        self.queue.pop()
    }

    pub fn wait_nonempty(&self, timeout: Duration) -> bool {
        self.queue.wait_nonempty(timeout)
    }
}

#[derive(Debug, Clone)]
pub enum Channel {
    SharedMemory(Arc<SharedMemoryChannel>),
    Mailbox(Arc<MailboxChannel>),
}

impl Channel {
    pub fn for_port(port: &PortSpec, mailbox_capacity: usize) -> Self {
        match port.interface {
            Interface::SharedMemory => Channel::SharedMemory(Arc::new(SharedMemoryChannel::new(
                port.name.clone(),
                port.data_type,
                port.size,
            ))),
            Interface::Mailbox => Channel::Mailbox(Arc::new(MailboxChannel::with_capacity(
                port.name.clone(),
                port.data_type,
                port.size,
                mailbox_capacity,
            ))),
        }
    }
}

/// A task's write end of one of its outports. Dead once the task terminates.
#[derive(Debug, Clone)]
pub struct OutputPort {
    channel: Channel,
    live: Arc<AtomicBool>,
}

impl OutputPort {
    pub fn new(channel: Channel, live: Arc<AtomicBool>) -> Self {
        OutputPort { channel, live }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    fn ensure_live(&self) -> Result<(), ChannelError> {
        if self.live.load(Ordering::Acquire) {
            Ok(())
        } else {
            Err(ChannelError::Revoked)
        }
    }

    pub fn write(&self, data: Payload) -> Result<u64, ChannelError> {
        self.ensure_live()?;
        match &self.channel {
            Channel::SharedMemory(shm) => shm.write(data),
            Channel::Mailbox(mbx) => mbx.send(data).map(|_| 0),
        }
    }
}
