//! Download keys and the concurrency queue.
//!
//! A single mutex-guarded state machine owns the slot counter, the FIFO of
//! waiting token requests and the token table, so grant, consume, expire and
//! release are each one atomic transition.
//!
//! Slot lifecycle: a slot is taken when a token is granted. It is released
//! when the token's stream finishes or is aborted ([`StreamSlot`] drop), or
//! when the token expires unconsumed. On release the slot is handed
//! directly to the oldest live waiter, so `active` never exceeds
//! `max_concurrent` and grants follow arrival order.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::RngCore;
use tokio::sync::oneshot;

use crate::clock::unix_now;
use crate::hash::ContentHash;

const EVENT_LOG_CAP: usize = 10_000;
const TOMBSTONE_SWEEP_AT: usize = 4_096;

#[derive(Debug, Clone, Copy)]
pub struct GateConfig {
    /// 0 means unlimited.
    pub max_concurrent: usize,
    pub queue_timeout: Duration,
    pub token_ttl: Duration,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            max_concurrent: 0,
            queue_timeout: Duration::from_secs(120),
            token_ttl: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateEvent {
    Arrived(u64),
    Granted(u64),
    TimedOut(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenState {
    Issued,
    Streaming,
    Done,
    Expired,
}

#[derive(Debug)]
struct TokenSlot {
    hash: ContentHash,
    expires_at: Instant,
    state: TokenState,
}

struct Waiter {
    ticket: u64,
    tx: oneshot::Sender<()>,
}

#[derive(Default)]
struct GateState {
    active: usize,
    high_water: usize,
    waiting: VecDeque<Waiter>,
    tokens: HashMap<String, TokenSlot>,
    next_ticket: u64,
    events: VecDeque<GateEvent>,
}

impl GateState {
    fn log(&mut self, event: GateEvent) {
        if self.events.len() == EVENT_LOG_CAP {
            self.events.pop_front();
        }
        self.events.push_back(event);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedToken {
    pub token: String,
    pub hash: ContentHash,
    pub expires_unix_s: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("download queue is full ({queue_len} waiting); retry later")]
    RetryLater { queue_len: usize },
    #[error("token unknown")]
    NotFound,
    #[error("token already used or expired")]
    Gone,
}

pub struct Gate {
    config: GateConfig,
    state: Mutex<GateState>,
}

impl Gate {
    pub fn new(config: GateConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            state: Mutex::new(GateState::default()),
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, GateState> {
        self.state.lock().unwrap()
    }

    /// Slots currently held (granted tokens plus running streams).
    pub fn active(&self) -> usize {
        self.lock().active
    }

    /// Highest `active` value ever reached.
    pub fn high_water(&self) -> usize {
        self.lock().high_water
    }

    pub fn queue_len(&self) -> usize {
        self.lock().waiting.len()
    }

    /// Recent arrival/grant/timeout history, oldest first.
    pub fn events(&self) -> Vec<GateEvent> {
        self.lock().events.iter().copied().collect()
    }

    fn unlimited(&self) -> bool {
        self.config.max_concurrent == 0
    }

    /// Obtain a download key for `hash`, waiting in FIFO order for a free
    /// slot for at most the queue timeout.
    pub async fn acquire(self: &Arc<Self>, hash: ContentHash) -> Result<IssuedToken, GateError> {
        let (ticket, rx) = {
            let mut st = self.lock();
            let ticket = st.next_ticket;
            st.next_ticket += 1;
            st.log(GateEvent::Arrived(ticket));
            if self.unlimited() || (st.active < self.config.max_concurrent && st.waiting.is_empty())
            {
                st.active += 1;
                st.high_water = st.high_water.max(st.active);
                st.log(GateEvent::Granted(ticket));
                return Ok(self.issue(&mut st, hash));
            }
            let (tx, rx) = oneshot::channel();
            st.waiting.push_back(Waiter { ticket, tx });
            (ticket, rx)
        };

        let mut guard = WaitGuard {
            gate: self.clone(),
            ticket,
            armed: true,
        };
        let outcome = tokio::time::timeout(self.config.queue_timeout, rx).await;
        let mut st = self.lock();
        guard.armed = false;
        match outcome {
            Ok(Ok(())) => Ok(self.issue(&mut st, hash)),
            _ => {
                if let Some(pos) = st.waiting.iter().position(|w| w.ticket == ticket) {
                    st.waiting.remove(pos);
                    st.log(GateEvent::TimedOut(ticket));
                    Err(GateError::RetryLater {
                        queue_len: st.waiting.len(),
                    })
                } else {
                    // handed a slot just as the timeout fired
                    Ok(self.issue(&mut st, hash))
                }
            }
        }
    }

    fn issue(self: &Arc<Self>, st: &mut GateState, hash: ContentHash) -> IssuedToken {
        let mut raw = [0u8; 16];
        rand::rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let now = Instant::now();
        if st.tokens.len() >= TOMBSTONE_SWEEP_AT {
            let keep_for = self.config.token_ttl * 10;
            st.tokens.retain(|_, t| {
                matches!(t.state, TokenState::Issued | TokenState::Streaming)
                    || now.saturating_duration_since(t.expires_at) < keep_for
            });
        }
        st.tokens.insert(
            token.clone(),
            TokenSlot {
                hash,
                expires_at: now + self.config.token_ttl,
                state: TokenState::Issued,
            },
        );
        let ttl = self.config.token_ttl;
        let expires_unix_s = unix_now() + ttl.as_secs_f64().ceil().max(1.0) as i64;
        let gate = self.clone();
        let t = token.clone();
        tokio::spawn(async move {
            tokio::time::sleep(ttl).await;
            gate.expire(&t);
        });
        IssuedToken {
            token,
            hash,
            expires_unix_s,
        }
    }

    fn expire(&self, token: &str) {
        let mut st = self.lock();
        if let Some(slot) = st.tokens.get_mut(token) {
            if slot.state == TokenState::Issued {
                slot.state = TokenState::Expired;
                release(&mut st);
            }
        }
    }

    /// Redeem a token. Exactly one caller wins per token; the returned slot
    /// must be held for the duration of the stream.
    pub fn consume(self: &Arc<Self>, token: &str) -> Result<(ContentHash, StreamSlot), GateError> {
        let mut st = self.lock();
        let slot = st.tokens.get_mut(token).ok_or(GateError::NotFound)?;
        match slot.state {
            TokenState::Issued if Instant::now() >= slot.expires_at => {
                slot.state = TokenState::Expired;
                release(&mut st);
                Err(GateError::Gone)
            }
            TokenState::Issued => {
                slot.state = TokenState::Streaming;
                let hash = slot.hash;
                Ok((
                    hash,
                    StreamSlot {
                        gate: self.clone(),
                        token: token.to_string(),
                    },
                ))
            }
            TokenState::Streaming | TokenState::Done | TokenState::Expired => Err(GateError::Gone),
        }
    }
}

/// Give the freed slot to the oldest waiter still listening, or return it.
fn release(st: &mut GateState) {
    while let Some(w) = st.waiting.pop_front() {
        if w.tx.send(()).is_ok() {
            st.log(GateEvent::Granted(w.ticket));
            return;
        }
    }
    st.active = st.active.saturating_sub(1);
}

/// Holds a concurrency slot for one running stream.
pub struct StreamSlot {
    gate: Arc<Gate>,
    token: String,
}

impl std::fmt::Debug for StreamSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StreamSlot").finish_non_exhaustive()
    }
}

impl Drop for StreamSlot {
    fn drop(&mut self) {
        let mut st = self.gate.lock();
        if let Some(t) = st.tokens.get_mut(&self.token) {
            t.state = TokenState::Done;
        }
        release(&mut st);
    }
}

/// Cleans up after a waiter whose request was cancelled mid-wait.
struct WaitGuard {
    gate: Arc<Gate>,
    ticket: u64,
    armed: bool,
}

impl Drop for WaitGuard {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        let mut st = self.gate.lock();
        if let Some(pos) = st.waiting.iter().position(|w| w.ticket == self.ticket) {
            st.waiting.remove(pos);
        } else {
            // a slot was handed over but never turned into a token
            release(&mut st);
        }
    }
}
