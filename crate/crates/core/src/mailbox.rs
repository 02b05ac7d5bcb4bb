//! Mutex-guarded message mailbox living in the on-chip buffer.
//!
//! Both `post` and `get` are non-blocking: they take the hardware mutex,
//! touch the queue, release the mutex, and report `Full` / `Empty` through
//! their return values.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::core_model::Cycles;

/// Bytes per queued message in the buffer: 32-bit payload plus next-link.
pub const NODE_BYTES: u32 = 8;
pub const DEFAULT_MAILBOX_NAME: &str = "/dev/message_buffer_mailbox";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MailboxError {
    #[error("Cannot open Mailbox! (`{0}` is not registered)")]
    CannotOpen(String),
    #[error("mailbox capacity must be at least one message")]
    ZeroCapacity,
    #[error("mutex held by core {holder} until cycle {until}")]
    Busy { holder: usize, until: Cycles },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutexEventKind {
    Acquire,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutexEvent {
    pub at: Cycles,
    pub core: usize,
    pub kind: MutexEventKind,
}

/// Single-owner lock register. A hold is an interval `[at, at + hold)`.
#[derive(Debug, Clone, Default)]
pub struct HardwareMutex {
    holder: Option<(usize, Cycles)>,
    log: Vec<MutexEvent>,
}

impl HardwareMutex {
    pub fn holder_at(&self, at: Cycles) -> Option<usize> {
        self.holder.filter(|&(_, until)| at < until).map(|(c, _)| c)
    }

    fn acquire(&mut self, core: usize, at: Cycles, hold: Cycles) -> Result<(), MailboxError> {
        if let Some((holder, until)) = self.holder.filter(|&(_, until)| at < until) {
            return Err(MailboxError::Busy { holder, until });
        }
        self.log.push(MutexEvent { at, core, kind: MutexEventKind::Acquire });
        self.log.push(MutexEvent { at: at + hold, core, kind: MutexEventKind::Release });
        self.holder = Some((core, at + hold));
        Ok(())
    }

    pub fn events(&self) -> &[MutexEvent] {
        &self.log
    }
}

/// Checks that acquire/release pairs never interleave between cores.
pub fn mutually_exclusive(events: &[MutexEvent]) -> bool {
    let mut sorted = events.to_vec();
    // at equal instants a release precedes the next acquire
    sorted.sort_by_key(|e| (e.at, e.kind == MutexEventKind::Acquire));
    let mut held: Option<usize> = None;
    for e in sorted {
        match (e.kind, held) {
            (MutexEventKind::Acquire, None) => held = Some(e.core),
            (MutexEventKind::Release, Some(c)) if c == e.core => held = None,
            _ => return false,
        }
    }
    held.is_none()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostResult {
    Ok,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GetCode {
    Ok,
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MailboxStats {
    pub posts: u64,
    pub posts_accepted: u64,
    pub gets: u64,
    pub gets_successful: u64,
    pub full_rejections: u64,
    pub empty_rejections: u64,
}

#[derive(Debug, Clone)]
pub struct Mailbox {
    name: String,
    queue: VecDeque<u32>,
    capacity: usize,
    mutex: HardwareMutex,
    stats: MailboxStats,
    clock: Cycles,
}

impl Mailbox {
    pub fn new(name: impl Into<String>, capacity: usize) -> Result<Self, MailboxError> {
        if capacity == 0 {
            return Err(MailboxError::ZeroCapacity);
        }
        Ok(Self {
            name: name.into(),
            queue: VecDeque::with_capacity(capacity),
            capacity,
            mutex: HardwareMutex::default(),
            stats: MailboxStats::default(),
            clock: Cycles::ZERO,
        })
    }

    /// Capacity of a linked-list queue stored in a buffer of `bytes`.
    pub fn capacity_for_buffer(bytes: u32) -> usize {
        (bytes / NODE_BYTES) as usize
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Queued messages, oldest first.
    pub fn queued(&self) -> Vec<u32> {
        self.queue.iter().copied().collect()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stats(&self) -> &MailboxStats {
        &self.stats
    }

    pub fn mutex(&self) -> &HardwareMutex {
        &self.mutex
    }

    /// Post at an explicit instant, holding the mutex for `hold`.
    pub fn post_at(&mut self, core: usize, msg: u32, at: Cycles, hold: Cycles) -> Result<PostResult, MailboxError> {
        self.mutex.acquire(core, at, hold)?;
        self.stats.posts += 1;
        if self.queue.len() < self.capacity {
            self.queue.push_back(msg);
            self.stats.posts_accepted += 1;
            Ok(PostResult::Ok)
        } else {
            self.stats.full_rejections += 1;
            Ok(PostResult::Full)
        }
    }

    pub fn get_at(&mut self, core: usize, at: Cycles, hold: Cycles) -> Result<(Option<u32>, GetCode), MailboxError> {
        self.mutex.acquire(core, at, hold)?;
        self.stats.gets += 1;
        match self.queue.pop_front() {
            Some(m) => {
                self.stats.gets_successful += 1;
                Ok((Some(m), GetCode::Ok))
            }
            None => {
                self.stats.empty_rejections += 1;
                Ok((None, GetCode::Empty))
            }
        }
    }

    // Untimed operations run on a private clock, one cycle apart.
    fn tick(&mut self) -> Cycles {
        let at = self.clock;
        self.clock += Cycles::whole(1);
        at
    }

    pub fn post(&mut self, core: usize, msg: u32) -> PostResult {
        let at = self.tick();
        self.post_at(core, msg, at, Cycles::whole(1)).expect("untimed operations never overlap")
    }

    pub fn get(&mut self, core: usize) -> (Option<u32>, GetCode) {
        let at = self.tick();
        self.get_at(core, at, Cycles::whole(1)).expect("untimed operations never overlap")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MailboxHandle(usize);

/// Registry of named mailboxes shared by all cores.
#[derive(Debug, Clone, Default)]
pub struct MailboxBus {
    names: BTreeMap<String, usize>,
    boxes: Vec<Mailbox>,
}

impl MailboxBus {
    pub fn register(&mut self, mailbox: Mailbox) -> MailboxHandle {
        if let Some(&k) = self.names.get(mailbox.name()) {
            return MailboxHandle(k);
        }
        self.names.insert(mailbox.name().to_owned(), self.boxes.len());
        self.boxes.push(mailbox);
        MailboxHandle(self.boxes.len() - 1)
    }

    pub fn open(&self, name: &str) -> Result<MailboxHandle, MailboxError> {
        self.names.get(name).map(|&k| MailboxHandle(k)).ok_or_else(|| MailboxError::CannotOpen(name.to_owned()))
    }

    pub fn mailbox(&self, h: MailboxHandle) -> &Mailbox {
        &self.boxes[h.0]
    }

    pub fn mailbox_mut(&mut self, h: MailboxHandle) -> &mut Mailbox {
        &mut self.boxes[h.0]
    }

    pub fn post(&mut self, h: MailboxHandle, msg: u32, core: usize) -> PostResult {
        self.boxes[h.0].post(core, msg)
    }

    pub fn get(&mut self, h: MailboxHandle, core: usize) -> (Option<u32>, GetCode) {
        self.boxes[h.0].get(core)
    }
}

/// Outcome of exhaustively exploring a mailbox's operation sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelCheck {
    pub sequences: u64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Post(usize),
    Get(usize),
}

/// Explores every sequence of up to `depth` post/get attempts by two cores
/// against a mailbox of `capacity`. Each attempt starts either after the
/// previous holder released the mutex or while it still holds it. Results
/// are compared with a plain FIFO reference; conservation, FIFO order,
/// capacity and mutual exclusion are checked after every step.
pub fn model_check(capacity: usize, depth: usize) -> ModelCheck {
    let mut out = ModelCheck::default();
    let mb = Mailbox::new("model", capacity).expect("capacity must be positive");
    explore(&mb, &VecDeque::new(), Cycles::ZERO, 0, depth, &mut Vec::new(), &mut out);
    out
}

fn explore(
    mb: &Mailbox,
    reference: &VecDeque<u32>,
    free_at: Cycles,
    next_msg: u32,
    depth: usize,
    trail: &mut Vec<String>,
    out: &mut ModelCheck,
) {
    out.sequences += 1;
    if depth == 0 {
        return;
    }
    let hold = Cycles::whole(3);
    for action in [Action::Post(0), Action::Post(1), Action::Get(0), Action::Get(1)] {
        for overlap in [false, true] {
            if overlap && free_at == Cycles::ZERO {
                continue;
            }
            let at = if overlap { free_at - Cycles::whole(1) } else { free_at };
            let mut m = mb.clone();
            let mut r = reference.clone();
            let before = m.stats;
            let mut fail = |msg: String, trail: &Vec<String>| out.violations.push(format!("{trail:?}: {msg}"));
            let (label, step_ok) = match action {
                Action::Post(core) => {
                    let res = m.post_at(core, next_msg, at, hold);
                    let want = if r.len() < mb.capacity { PostResult::Ok } else { PostResult::Full };
                    let ok = match (&res, overlap) {
                        (Err(MailboxError::Busy { .. }), true) => true,
                        (Ok(got), false) => {
                            if want == PostResult::Ok {
                                r.push_back(next_msg);
                            }
                            *got == want
                        }
                        _ => false,
                    };
                    (format!("post{core}{}", if overlap { "*" } else { "" }), ok)
                }
                Action::Get(core) => {
                    let res = m.get_at(core, at, hold);
                    let ok = match (&res, overlap) {
                        (Err(MailboxError::Busy { .. }), true) => true,
                        (Ok((v, code)), false) => {
                            let want = r.pop_front();
                            *v == want && (*code == GetCode::Ok) == want.is_some()
                        }
                        _ => false,
                    };
                    (format!("get{core}{}", if overlap { "*" } else { "" }), ok)
                }
            };
            trail.push(label);
            if !step_ok {
                fail("result differs from reference".into(), trail);
            }
            if overlap && m.stats != before {
                fail("refused attempt changed the mailbox".into(), trail);
            }
            if m.queued() != r.iter().copied().collect::<Vec<_>>() {
                fail("queue contents differ from reference".into(), trail);
            }
            if m.len() > mb.capacity {
                fail("mb.capacity exceeded".into(), trail);
            }
            if m.stats.posts_accepted != m.stats.gets_successful + m.len() as u64 {
                fail("posts accepted != gets successful + queued".into(), trail);
            }
            if !mutually_exclusive(m.mutex.events()) {
                fail("mutex held by two cores".into(), trail);
            }
            let next_free = if overlap { free_at } else { at + hold };
            explore(&m, &r, next_free, next_msg + 1, depth - 1, trail, out);
            trail.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(capacity: usize) -> (MailboxBus, MailboxHandle) {
        let mut bus = MailboxBus::default();
        let h = bus.register(Mailbox::new(DEFAULT_MAILBOX_NAME, capacity).unwrap());
        (bus, h)
    }

    #[test]
    fn open_registered_and_unregistered() {
        let (bus, h) = bus(4);
        assert_eq!(bus.open(DEFAULT_MAILBOX_NAME), Ok(h));
        assert_eq!(bus.open(DEFAULT_MAILBOX_NAME), bus.open(DEFAULT_MAILBOX_NAME));
        assert_eq!(bus.open("/dev/nope"), Err(MailboxError::CannotOpen("/dev/nope".into())));
    }

    #[test]
    fn two_openers_share_one_queue() {
        let (mut bus, _) = bus(4);
        let cpu2 = bus.open(DEFAULT_MAILBOX_NAME).unwrap();
        let cpu1 = bus.open(DEFAULT_MAILBOX_NAME).unwrap();
        assert_eq!(bus.post(cpu2, 99, 1), PostResult::Ok);
        assert_eq!(bus.get(cpu1, 0), (Some(99), GetCode::Ok));
    }

    #[test]
    fn post_get_basics() {
        let (mut bus, h) = bus(4);
        assert_eq!(bus.get(h, 0), (None, GetCode::Empty));
        assert_eq!(bus.post(h, 42, 1), PostResult::Ok);
        assert_eq!(bus.mailbox(h).len(), 1);
        assert_eq!(bus.get(h, 0), (Some(42), GetCode::Ok));
        bus.post(h, 1, 1);
        bus.post(h, 2, 1);
        assert_eq!(bus.get(h, 0).0, Some(1));
        assert_eq!(bus.get(h, 0).0, Some(2));
    }

    #[test]
    fn capacity_four_rejects_fifth() {
        let (mut bus, h) = bus(4);
        let results: Vec<_> = (1..=5).map(|m| bus.post(h, m, 1)).collect();
        assert_eq!(results, [PostResult::Ok, PostResult::Ok, PostResult::Ok, PostResult::Ok, PostResult::Full]);
        assert_eq!(bus.mailbox(h).len(), 4);
        assert_eq!(bus.mailbox(h).stats().full_rejections, 1);
    }

    #[test]
    fn busy_mutex_refuses_overlap() {
        let mut m = Mailbox::new("x", 2).unwrap();
        m.post_at(0, 1, Cycles::whole(10), Cycles::whole(3)).unwrap();
        assert_eq!(m.mutex().holder_at(Cycles::whole(12)), Some(0));
        assert_eq!(
            m.get_at(1, Cycles::whole(12), Cycles::whole(3)),
            Err(MailboxError::Busy { holder: 0, until: Cycles::whole(13) })
        );
        assert_eq!(m.get_at(1, Cycles::whole(13), Cycles::whole(3)).unwrap().0, Some(1));
        assert!(mutually_exclusive(m.mutex().events()));
    }

    #[test]
    fn exclusion_checker_detects_overlap() {
        let ev = |t, core, kind| MutexEvent { at: Cycles::whole(t), core, kind };
        use MutexEventKind::*;
        assert!(mutually_exclusive(&[ev(0, 0, Acquire), ev(3, 0, Release), ev(3, 1, Acquire), ev(6, 1, Release)]));
        assert!(!mutually_exclusive(&[ev(0, 0, Acquire), ev(2, 1, Acquire), ev(3, 0, Release), ev(5, 1, Release)]));
    }

    #[test]
    fn buffer_capacity() {
        assert_eq!(Mailbox::capacity_for_buffer(1024), 128);
        assert_eq!(Mailbox::new("x", 0).unwrap_err(), MailboxError::ZeroCapacity);
    }

    #[test]
    fn exhaustive_small_capacities() {
        for cap in 1..=3 {
            let r = model_check(cap, 5);
            assert!(r.violations.is_empty(), "{:?}", &r.violations[..r.violations.len().min(3)]);
            assert!(r.sequences > 10_000);
        }
    }
}
