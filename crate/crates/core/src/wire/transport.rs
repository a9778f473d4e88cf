//! Transport abstraction and the in-process loopback backend.
//!
//! The loopback keeps every frame in flight on one global queue as encoded
//! bytes. It can be pumped one delivery at a time ([`Loopback::deliver_next`])
//! for deterministic single-threaded runs, or drained per party with the
//! blocking [`Transport::recv`] when parties run on their own threads. Either
//! way, frames between one `(src, dst)` pair arrive in the order sent, and
//! every delivery is appended to a trace.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{Envelope, MessageType, PartyId, WireError};

pub trait Transport: Send + Sync {
    fn send(&self, src: &PartyId, dst: &PartyId, envelope: &Envelope) -> Result<(), WireError>;

    /// Blocks until a frame addressed to `me` arrives.
    fn recv(&self, me: &PartyId) -> Result<(PartyId, Envelope), WireError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Drop,
    Duplicate,
    /// Hold the frame back until this many other frames have been delivered.
    Delay(usize),
}

/// Applies `fault` to the `occurrence`-th (0-based) sent frame matching all
/// of the given filters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultRule {
    pub msg_type: Option<MessageType>,
    pub src: Option<PartyId>,
    pub dst: Option<PartyId>,
    pub occurrence: usize,
    pub fault: Fault,
}

impl FaultRule {
    pub fn on(msg_type: MessageType, occurrence: usize, fault: Fault) -> Self {
        Self { msg_type: Some(msg_type), src: None, dst: None, occurrence, fault }
    }

    fn matches(&self, src: &PartyId, dst: &PartyId, msg_type: MessageType) -> bool {
        self.msg_type.is_none_or(|t| t == msg_type)
            && self.src.as_ref().is_none_or(|s| s == src)
            && self.dst.as_ref().is_none_or(|d| d == dst)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub rules: Vec<FaultRule>,
    /// When set, each delivery picks uniformly among the oldest pending frame
    /// of every `(src, dst)` pair instead of the globally oldest frame.
    pub reorder_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub seq: u64,
    pub src: PartyId,
    pub dst: PartyId,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
struct InFlight {
    src: PartyId,
    dst: PartyId,
    bytes: Vec<u8>,
}

#[derive(Debug)]
struct LoopState {
    queue: VecDeque<InFlight>,
    delayed: Vec<(usize, InFlight)>,
    rule_hits: Vec<usize>,
    plan: FaultPlan,
    reorder_rng: Option<ChaCha20Rng>,
    trace: Vec<TraceEntry>,
    record_trace: bool,
    digest: Sha256,
    delivered: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct Loopback {
    state: Mutex<LoopState>,
    ready: Condvar,
}

impl Default for Loopback {
    fn default() -> Self {
        Self::new(FaultPlan::default())
    }
}

impl Loopback {
    pub fn new(plan: FaultPlan) -> Self {
        let reorder_rng = plan.reorder_seed.map(ChaCha20Rng::seed_from_u64);
        Self {
            state: Mutex::new(LoopState {
                queue: VecDeque::new(),
                delayed: Vec::new(),
                rule_hits: vec![0; plan.rules.len()],
                plan,
                reorder_rng,
                trace: Vec::new(),
                record_trace: true,
                digest: Sha256::new(),
                delivered: 0,
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    /// Turns off keeping delivered frames; the digest is still maintained.
    pub fn set_record_trace(&self, on: bool) {
        self.lock().record_trace = on;
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LoopState> {
        self.state.lock().expect("loopback poisoned")
    }

    /// Index into `queue` of the next frame to deliver, restricted to frames
    /// for `dst` when given.
    fn pick(state: &mut LoopState, dst: Option<&PartyId>) -> Option<usize> {
        let candidates: Vec<usize> = {
            let mut seen: Vec<(&PartyId, &PartyId)> = Vec::new();
            let mut heads = Vec::new();
            for (i, f) in state.queue.iter().enumerate() {
                if dst.is_some_and(|d| d != &f.dst) {
                    continue;
                }
                if !seen.contains(&(&f.src, &f.dst)) {
                    seen.push((&f.src, &f.dst));
                    heads.push(i);
                }
            }
            heads
        };
        match state.reorder_rng.as_mut() {
            Some(rng) => candidates.choose(rng).copied(),
            None => candidates.first().copied(),
        }
    }

    fn take(state: &mut LoopState, idx: usize) -> InFlight {
        let frame = state.queue.remove(idx).expect("picked index is in range");
        state.delivered += 1;
        let seq = state.delivered;
        let h = &mut state.digest;
        h.update(seq.to_be_bytes());
        h.update(frame.src.to_string().as_bytes());
        h.update([0]);
        h.update(frame.dst.to_string().as_bytes());
        h.update([0]);
        h.update((frame.bytes.len() as u32).to_be_bytes());
        h.update(&frame.bytes);
        if state.record_trace {
            state.trace.push(TraceEntry { seq, src: frame.src.clone(), dst: frame.dst.clone(), bytes: frame.bytes.clone() });
        }
        let mut released = Vec::new();
        state.delayed.retain_mut(|(left, f)| {
            *left = left.saturating_sub(1);
            if *left == 0 {
                released.push(f.clone());
                false
            } else {
                true
            }
        });
        state.queue.extend(released);
        frame
    }

    fn decode(frame: InFlight) -> Result<(PartyId, PartyId, Envelope), WireError> {
        let env = Envelope::decode(&frame.bytes)?;
        Ok((frame.src, frame.dst, env))
    }

    /// Delivers the next pending frame, if any.
    pub fn deliver_next(&self) -> Option<Result<(PartyId, PartyId, Envelope), WireError>> {
        let mut state = self.lock();
        if state.queue.is_empty() && !state.delayed.is_empty() {
            // Nothing else will ever arrive to count down the delay.
            let held: Vec<_> = state.delayed.drain(..).map(|(_, f)| f).collect();
            state.queue.extend(held);
        }
        let idx = Self::pick(&mut state, None)?;
        let frame = Self::take(&mut state, idx);
        Some(Self::decode(frame))
    }

    pub fn pending(&self) -> usize {
        let s = self.lock();
        s.queue.len() + s.delayed.len()
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.lock().trace.clone()
    }

    pub fn delivered(&self) -> u64 {
        self.lock().delivered
    }

    /// SHA-256 over every delivered frame with its addressing, in order.
    pub fn trace_digest(&self) -> [u8; 32] {
        self.lock().digest.clone().finalize().into()
    }

    /// Wakes every blocked `recv` with an error.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    /// `recv` with a timeout; `Ok(None)` on timeout.
    pub fn recv_timeout(&self, me: &PartyId, timeout: Duration) -> Result<Option<(PartyId, Envelope)>, WireError> {
        let deadline = std::time::Instant::now() + timeout;
        let mut state = self.lock();
        loop {
            if let Some(idx) = Self::pick(&mut state, Some(me)) {
                let frame = Self::take(&mut state, idx);
                drop(state);
                self.ready.notify_all();
                let (src, _, env) = Self::decode(frame)?;
                return Ok(Some((src, env)));
            }
            if state.closed {
                return Err(WireError::Io("loopback closed".into()));
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            state = self.ready.wait_timeout(state, deadline - now).expect("loopback poisoned").0;
        }
    }
}

impl Transport for Loopback {
    fn send(&self, src: &PartyId, dst: &PartyId, envelope: &Envelope) -> Result<(), WireError> {
        let bytes = envelope.encode();
        let msg_type = envelope.message.msg_type();
        let mut state = self.lock();
        let mut fault = None;
        for i in 0..state.plan.rules.len() {
            if state.plan.rules[i].matches(src, dst, msg_type) {
                let hit = state.rule_hits[i];
                state.rule_hits[i] += 1;
                if hit == state.plan.rules[i].occurrence && fault.is_none() {
                    fault = Some(state.plan.rules[i].fault);
                }
            }
        }
        let frame = InFlight { src: src.clone(), dst: dst.clone(), bytes };
        match fault {
            None => state.queue.push_back(frame),
            Some(Fault::Drop) => {}
            Some(Fault::Duplicate) => {
                state.queue.push_back(frame.clone());
                state.queue.push_back(frame);
            }
            Some(Fault::Delay(0)) => state.queue.push_back(frame),
            Some(Fault::Delay(n)) => state.delayed.push((n, frame)),
        }
        drop(state);
        self.ready.notify_all();
        Ok(())
    }

    fn recv(&self, me: &PartyId) -> Result<(PartyId, Envelope), WireError> {
        loop {
            if let Some(got) = self.recv_timeout(me, Duration::from_secs(3600))? {
                return Ok(got);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Message;

    fn env(n: u8) -> Envelope {
        Envelope::new([n; 16], Message::UserAbort)
    }

    #[test]
    fn per_pair_fifo_and_trace() {
        let lb = Loopback::default();
        let (a, b) = (PartyId::User(1), PartyId::Bs);
        for n in 0..5 {
            lb.send(&a, &b, &env(n)).unwrap();
        }
        for n in 0..5 {
            let (_, _, e) = lb.deliver_next().unwrap().unwrap();
            assert_eq!(e.session_id, [n; 16]);
        }
        assert!(lb.deliver_next().is_none());
        assert_eq!(lb.trace().len(), 5);
    }

    #[test]
    fn faults_drop_duplicate_delay() {
        let plan = FaultPlan {
            rules: vec![
                FaultRule { msg_type: None, src: None, dst: None, occurrence: 0, fault: Fault::Drop },
                FaultRule { msg_type: None, src: None, dst: None, occurrence: 1, fault: Fault::Duplicate },
                FaultRule { msg_type: None, src: None, dst: None, occurrence: 2, fault: Fault::Delay(2) },
            ],
            reorder_seed: None,
        };
        let lb = Loopback::new(plan);
        for n in 0..5 {
            lb.send(&PartyId::User(1), &PartyId::Bs, &env(n)).unwrap();
        }
        let order: Vec<u8> = std::iter::from_fn(|| lb.deliver_next()).map(|r| r.unwrap().2.session_id[0]).collect();
        assert_eq!(order, vec![1, 1, 3, 4, 2]);
    }

    #[test]
    fn reorder_keeps_pairs_fifo() {
        let lb = Loopback::new(FaultPlan { rules: vec![], reorder_seed: Some(9) });
        for n in 0..20 {
            lb.send(&PartyId::User(u32::from(n % 3)), &PartyId::Bs, &env(n)).unwrap();
        }
        let mut last = [None::<u8>; 3];
        while let Some(r) = lb.deliver_next() {
            let (src, _, e) = r.unwrap();
            let PartyId::User(u) = src else { unreachable!() };
            let n = e.session_id[0];
            assert!(last[u as usize].is_none_or(|p| p < n));
            last[u as usize] = Some(n);
        }
    }

    #[test]
    fn threaded_recv() {
        let lb = std::sync::Arc::new(Loopback::default());
        let lb2 = lb.clone();
        let h = std::thread::spawn(move || lb2.recv(&PartyId::Fa).unwrap());
        lb.send(&PartyId::Bs, &PartyId::Fa, &env(3)).unwrap();
        let (src, e) = h.join().unwrap();
        assert_eq!((src, e.session_id[0]), (PartyId::Bs, 3));
    }
}
