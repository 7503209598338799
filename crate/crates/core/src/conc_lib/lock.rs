use super::PayloadOutcome;
use crate::vm::{ThreadId, Value};

/// Reentrant lock state held by the peer.
///
/// Invariants: `owner.is_none() == (count == 0)`, no duplicates in `queue`,
/// and the owner is never queued.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LockPayload {
    pub owner: Option<ThreadId>,
    pub count: u32,
    pub queue: Vec<ThreadId>,
}

impl LockPayload {
    pub fn held_by(owner: ThreadId, count: u32) -> LockPayload {
        LockPayload {
            owner: Some(owner),
            count,
            queue: Vec::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let mut sorted = self.queue.clone();
        sorted.sort_unstable();
        sorted.dedup();
        self.owner.is_none() == (self.count == 0)
            && sorted.len() == self.queue.len()
            && self.owner.is_none_or(|o| !self.queue.contains(&o))
    }
}

/// A contended acquire blocks without changing the payload; the waiting
/// thread is recorded in its own (tracked) status and retries once woken.
pub fn lock_acquire(p: &LockPayload, tid: ThreadId) -> PayloadOutcome<LockPayload> {
    match p.owner {
        None => PayloadOutcome::Return(Value::Nil, LockPayload {
            owner: Some(tid),
            count: 1,
            queue: p.queue.clone(),
        }),
        Some(o) if o == tid => PayloadOutcome::Return(Value::Nil, LockPayload {
            count: p.count + 1,
            ..p.clone()
        }),
        Some(_) => PayloadOutcome::Block,
    }
}

pub fn lock_try_acquire(p: &LockPayload, tid: ThreadId) -> PayloadOutcome<LockPayload> {
    match lock_acquire(p, tid) {
        PayloadOutcome::Return(_, next) => PayloadOutcome::Return(Value::Int(1), next),
        _ => PayloadOutcome::Return(Value::Int(0), p.clone()),
    }
}

/// Releasing the last hold frees the lock and wakes every waiter: those in
/// the payload queue plus those the caller reports as blocked on the object.
pub fn lock_release(
    p: &LockPayload,
    tid: ThreadId,
    blocked_here: &[ThreadId],
) -> PayloadOutcome<LockPayload> {
    if p.owner != Some(tid) {
        let owner = p.owner.map_or("nobody".to_string(), |o| format!("thread {o}"));
        return PayloadOutcome::IllegalOp(format!(
            "thread {tid} released a lock held by {owner}"
        ));
    }
    if p.count > 1 {
        return PayloadOutcome::Return(Value::Nil, LockPayload {
            count: p.count - 1,
            ..p.clone()
        });
    }
    let mut wake: Vec<ThreadId> = p.queue.iter().chain(blocked_here).copied().collect();
    wake.sort_unstable();
    wake.dedup();
    if wake.is_empty() {
        PayloadOutcome::Return(Value::Nil, LockPayload::default())
    } else {
        PayloadOutcome::ReturnAndWake(Value::Nil, LockPayload::default(), wake)
    }
}
