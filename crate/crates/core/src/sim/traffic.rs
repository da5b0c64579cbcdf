//! Poisson arrivals per path with seeded, independent streams.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::TrafficMix;
use crate::road::PathId;
use crate::vehicle::{VehicleId, VehicleKind};

/// Arrival stream of one path: exponential gaps with mean `3600 / vph`.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    pub path: PathId,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    mix: TrafficMix,
    next_t: f64,
}

impl ArrivalStream {
    /// Stream `1 + path` of the run seed.
    pub fn new(seed: u64, path: PathId, vph: f64, mix: TrafficMix) -> Option<Self> {
        if !(vph > 0.0) {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + path as u64);
        let gap = Exp::new(vph / 3600.0).ok()?;
        let first = gap.sample(&mut rng);
        Some(ArrivalStream {
            path,
            rng,
            gap,
            mix,
            next_t: first,
        })
    }

    pub fn draw_gap(&mut self) -> f64 {
        self.gap.sample(&mut self.rng)
    }

    fn draw_kind(&mut self) -> VehicleKind {
        let u: f64 = self.rng.random();
        if u < self.mix.non_connected {
            VehicleKind::NonConnectedAutomated
        } else if u < self.mix.non_connected + self.mix.human_driven {
            VehicleKind::HumanDriven
        } else {
            VehicleKind::ConnectedAutomated
        }
    }

    /// Arrivals scheduled up to `now` and before `until`, in order.
    pub fn due(&mut self, now: f64, until: f64) -> Vec<(f64, VehicleKind)> {
        let mut out = Vec::new();
        while self.next_t <= now + 1e-9 && self.next_t < until {
            let kind = self.draw_kind();
            out.push((self.next_t, kind));
            self.next_t += self.draw_gap();
        }
        out
    }
}

/// A vehicle waiting to enter the road.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingSpawn {
    pub id: VehicleId,
    pub scheduled_t: f64,
    pub kind: VehicleKind,
    pub script: Option<usize>,
}

/// Per-path FIFO of vehicles whose entry is deferred.
#[derive(Debug, Clone, Default)]
pub struct SpawnQueues {
    pub queues: Vec<VecDeque<PendingSpawn>>,
}

impl SpawnQueues {
    pub fn new(paths: usize) -> Self {
        SpawnQueues {
            queues: vec![VecDeque::new(); paths],
        }
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
