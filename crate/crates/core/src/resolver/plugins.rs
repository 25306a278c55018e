//! Built-in external resolving services, selectable by name.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ResolvingService, ServiceFault};
use crate::registry::{ComponentInstance, Registry};

/// Approves everything.
#[derive(Debug, Default)]
pub struct AcceptAll;

impl ResolvingService for AcceptAll {
    fn name(&self) -> &str {
        "accept"
    }

    fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
        Ok(true)
    }
}

/// Vetoes everything.
#[derive(Debug, Default)]
pub struct RejectAll;

impl ResolvingService for RejectAll {
    fn name(&self) -> &str {
        "reject"
    }

    fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
        Ok(false)
    }
}

/// Seeded pseudo-random verdicts, approving with probability `accept_p`.
#[derive(Debug)]
pub struct RandomVerdict {
    rng: ChaCha8Rng,
    accept_p: f64,
}

impl RandomVerdict {
    pub fn new(seed: u64, accept_p: f64) -> Self {
        RandomVerdict {
            rng: ChaCha8Rng::seed_from_u64(seed),
            accept_p: accept_p.clamp(0.0, 1.0),
        }
    }
}

impl ResolvingService for RandomVerdict {
    fn name(&self) -> &str {
        "random"
    }

    fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
        Ok(self.rng.gen_bool(self.accept_p))
    }
}

/// One scripted reply of [`Scripted`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    Fault,
    Panic,
}

/// Replays a fixed verdict sequence, cycling when exhausted.
#[derive(Debug)]
pub struct Scripted {
    verdicts: Vec<Verdict>,
    next: usize,
}

impl Scripted {
    pub fn new(verdicts: Vec<Verdict>) -> Self {
        assert!(!verdicts.is_empty(), "scripted resolver needs at least one verdict");
        Scripted { verdicts, next: 0 }
    }
}

impl ResolvingService for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn on_admit(&mut self, _: &ComponentInstance, _: &Registry) -> Result<bool, ServiceFault> {
        let v = self.verdicts[self.next % self.verdicts.len()].clone();
        self.next += 1;
        match v {
            Verdict::Accept => Ok(true),
            Verdict::Reject => Ok(false),
            Verdict::Fault => Err(ServiceFault("scripted fault".into())),
            Verdict::Panic => panic!("scripted panic"),
        }
    }
}

/// Resolves a plug-in spec: `accept`, `reject`, or `random[:seed[:p]]`.
pub fn by_name(spec: &str) -> Option<Box<dyn ResolvingService>> {
    let mut parts = spec.split(':');
    match parts.next()? {
        "accept" => Some(Box::new(AcceptAll)),
        "reject" => Some(Box::new(RejectAll)),
        "random" => {
            let seed = match parts.next() {
                Some(s) => s.parse().ok()?,
                None => 0,
            };
            let p = match parts.next() {
                Some(s) => s.parse().ok()?,
                None => 0.5,
            };
            Some(Box::new(RandomVerdict::new(seed, p)))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        assert_eq!(by_name("accept").unwrap().name(), "accept");
        assert_eq!(by_name("reject").unwrap().name(), "reject");
        assert_eq!(by_name("random:7:0.25").unwrap().name(), "random");
        assert!(by_name("random:x").is_none());
        assert!(by_name("ldap").is_none());
    }
}
