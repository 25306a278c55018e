//! Serialized access to an executive from many threads.

use std::sync::mpsc;
use std::thread::{self, JoinHandle};

use thiserror::Error;

use super::{EventKind, EventRecord, Executive};

type Job = Box<dyn FnOnce(&mut Executive) + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("executive thread has exited")]
pub struct HandleClosed;

/// Cloneable submitter; requests run one at a time in submission order.
#[derive(Clone)]
pub struct ExecutiveClient {
    tx: mpsc::Sender<Job>,
}

impl ExecutiveClient {
    pub fn call<R, F>(&self, f: F) -> Result<R, HandleClosed>
    where
        R: Send + 'static,
        F: FnOnce(&mut Executive) -> R + Send + 'static,
    {
        let (reply_tx, reply_rx) = mpsc::channel();
        self.tx
            .send(Box::new(move |exec: &mut Executive| {
                let _ = reply_tx.send(f(exec));
            }))
            .map_err(|_| HandleClosed)?;
        reply_rx.recv().map_err(|_| HandleClosed)
    }

    pub fn submit(&self, kind: EventKind) -> Result<EventRecord, HandleClosed> {
        self.call(move |exec| exec.dispatch(kind))
    }
}

/// Owns the executive thread.
pub struct ExecutiveHandle {
    client: Option<ExecutiveClient>,
    worker: Option<JoinHandle<Executive>>,
}

impl ExecutiveHandle {
    pub fn spawn(exec: Executive) -> Self {
        let (tx, rx) = mpsc::channel::<Job>();
        let worker = thread::Builder::new()
            .name("executive".into())
            .spawn(move || {
                let mut exec = exec;
                for job in rx {
                    job(&mut exec);
                }
                exec
            })
            .expect("spawn executive thread");
        ExecutiveHandle {
            client: Some(ExecutiveClient { tx }),
            worker: Some(worker),
        }
    }

    pub fn client(&self) -> ExecutiveClient {
        self.client.clone().expect("handle is live")
    }

    pub fn submit(&self, kind: EventKind) -> Result<EventRecord, HandleClosed> {
        self.client().submit(kind)
    }

    /// Waits for outstanding requests from this handle and returns the executive.
    /// Blocks while any cloned client is still alive.
    pub fn shutdown(mut self) -> Executive {
        self.client = None;
        self.worker
            .take()
            .unwrap()
            .join()
            .expect("executive thread panicked")
    }
}

impl Drop for ExecutiveHandle {
    fn drop(&mut self) {
        self.client = None;
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
