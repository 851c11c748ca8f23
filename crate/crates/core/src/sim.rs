//! Deterministic transport between actors.
//!
//! Time is a step counter. Synchronous requests either reach an online
//! actor or time out. Asynchronous messages wait in a pending queue that is
//! drained at the end of every step in an order drawn from a seeded RNG.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::wire::Frame;

/// Actor id of the Tier-0 pointer service.
pub const TIER0: &str = "TIER0";

/// An actor is unreachable for steps `from..=to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub actor: String,
    pub from: u64,
    pub to: u64,
}

impl Fault {
    pub fn covers(&self, actor: &str, step: u64) -> bool {
        self.actor == actor && (self.from..=self.to).contains(&step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Kept until the recipient is back online.
    Durable,
    /// Dropped if the recipient is offline when it is due.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub id: u64,
    pub from: String,
    pub to: String,
    pub frame: Frame,
    pub delivery: Delivery,
    pub sent_at: u64,
}

/// One request that reached its recipient, with the response it got.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub id: u64,
    pub step: u64,
    pub from: String,
    pub to: String,
    pub request: Frame,
    pub response: Frame,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub step: u64,
    faults: Vec<Fault>,
    pending: Vec<Envelope>,
    exchanges: Vec<Exchange>,
    /// Exchanges recorded before a restore; ids continue after them.
    exchange_base: u64,
    next_envelope: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

/// Everything needed to rebuild a [`Network`] except its faults and the
/// exchange history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    pub seed: u64,
    pub step: u64,
    pub rng_word_pos: u128,
    pub next_envelope: u64,
    pub next_exchange: u64,
    pub pending: Vec<Envelope>,
}

impl Network {
    pub fn new(seed: u64, faults: Vec<Fault>) -> Self {
        Self {
            step: 0,
            faults,
            pending: Vec::new(),
            exchanges: Vec::new(),
            exchange_base: 0,
            next_envelope: 1,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> NetworkState {
        NetworkState {
            seed: self.seed,
            step: self.step,
            rng_word_pos: self.rng.get_word_pos(),
            next_envelope: self.next_envelope,
            next_exchange: self.exchange_base + self.exchanges.len() as u64 + 1,
            pending: self.pending.clone(),
        }
    }

    pub fn restore(state: NetworkState, faults: Vec<Fault>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
        rng.set_word_pos(state.rng_word_pos);
        Self {
            step: state.step,
            faults,
            pending: state.pending,
            exchanges: Vec::new(),
            exchange_base: state.next_exchange.saturating_sub(1),
            next_envelope: state.next_envelope,
            seed: state.seed,
            rng,
        }
    }

    pub fn faults(&self) -> &[Fault] {
        &self.faults
    }

    pub fn add_fault(&mut self, fault: Fault) {
        self.faults.push(fault);
    }

    /// Last step covered by any fault.
    pub fn last_fault_step(&self) -> u64 {
        self.faults.iter().map(|f| f.to).max().unwrap_or(0)
    }

    pub fn is_online(&self, actor: &str) -> bool {
        !self.faults.iter().any(|f| f.covers(actor, self.step))
    }

    pub fn post(&mut self, from: &str, to: &str, frame: Frame, delivery: Delivery) -> u64 {
        let id = self.next_envelope;
        self.next_envelope += 1;
        self.pending.push(Envelope {
            id,
            from: from.to_string(),
            to: to.to_string(),
            frame,
            delivery,
            sent_at: self.step,
        });
        id
    }

    pub fn pending(&self) -> &[Envelope] {
        &self.pending
    }

    /// Removes and returns the envelopes deliverable now, shuffled, plus
    /// the best-effort ones whose recipient is offline. Durable messages
    /// for offline recipients stay queued.
    pub fn take_due(&mut self) -> (Vec<Envelope>, Vec<Envelope>) {
        let mut due = Vec::new();
        let mut dropped = Vec::new();
        let mut kept = Vec::new();
        for env in std::mem::take(&mut self.pending) {
            if self.is_online(&env.to) {
                due.push(env);
            } else if env.delivery == Delivery::BestEffort {
                dropped.push(env);
            } else {
                kept.push(env);
            }
        }
        self.pending = kept;
        due.shuffle(&mut self.rng);
        (due, dropped)
    }

    pub fn record(&mut self, from: &str, to: &str, request: Frame, response: Frame) -> u64 {
        let id = self.exchange_base + self.exchanges.len() as u64 + 1;
        self.exchanges.push(Exchange {
            id,
            step: self.step,
            from: from.to_string(),
            to: to.to_string(),
            request,
            response,
        });
        id
    }

    /// Exchanges since the network was created or restored.
    pub fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }

    pub fn exchange(&self, id: u64) -> Option<&Exchange> {
        self.exchanges.get(id.checked_sub(self.exchange_base + 1)? as usize)
    }

    /// Deterministic token material.
    pub fn draw(&mut self) -> u64 {
        use rand::Rng;
        self.rng.random()
    }
}
