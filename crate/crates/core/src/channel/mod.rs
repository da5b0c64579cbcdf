//! Simulated broadcast channel carrying encoded beacons between connected
//! vehicles, with seeded per-link loss and per-receiver neighbor tables.

pub mod beacon;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use beacon::{decode, encode, to_hex, Beacon, CodecError, FRAME_LEN};

use crate::geometry::Point;
use crate::vehicle::{VehicleId, VehicleKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossModel {
    /// Independent loss with probability `p` on every link.
    Bernoulli { p: f64 },
    /// No loss up to `start_m`, rising linearly to `p_max` at the range limit.
    DistanceRamp { start_m: f64, p_max: f64 },
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel::Bernoulli { p: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub range_m: f64,
    pub rate_hz: f64,
    pub loss: LossModel,
    /// Beacon intervals after which a silent neighbor is forgotten.
    pub expiry_intervals: u32,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            range_m: 400.0,
            rate_hz: 10.0,
            loss: LossModel::default(),
            expiry_intervals: 3,
        }
    }
}

impl ChannelParams {
    pub fn interval(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn expiry(&self) -> f64 {
        f64::from(self.expiry_intervals) * self.interval()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.range_m > 0.0) {
            return Err("channel range_m must be positive".into());
        }
        if !(self.rate_hz > 0.0) {
            return Err("channel rate_hz must be positive".into());
        }
        if self.expiry_intervals == 0 {
            return Err("channel expiry_intervals must be at least 1".into());
        }
        match self.loss {
            LossModel::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                Err("loss probability must lie in [0, 1]".into())
            }
            LossModel::DistanceRamp { start_m, p_max }
                if !(0.0..=1.0).contains(&p_max) || !(start_m >= 0.0 && start_m < self.range_m) =>
            {
                Err("distance ramp needs p_max in [0, 1] and 0 <= start_m < range_m".into())
            }
            _ => Ok(()),
        }
    }

    /// Link loss probability at distance `d`, ignoring per-vehicle overrides.
    pub fn link_loss(&self, d: f64) -> f64 {
        match self.loss {
            LossModel::Bernoulli { p } => p,
            LossModel::DistanceRamp { start_m, p_max } => {
                if d <= start_m {
                    0.0
                } else {
                    (p_max * (d - start_m) / (self.range_m - start_m)).min(p_max)
                }
            }
        }
    }
}

/// One vehicle's presence on the air for a beacon round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Station {
    pub kind: VehicleKind,
    /// True antenna position; the beacon itself carries the believed one.
    pub position: Point,
    pub loss_override: Option<f64>,
    pub beacon: Beacon,
}

/// Sender→receiver pairs delivered in one round, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Delivered {
    pub pairs: Vec<(VehicleId, VehicleId)>,
}

impl Delivered {
    pub fn by_sender(&self) -> BTreeMap<VehicleId, BTreeSet<VehicleId>> {
        let mut m: BTreeMap<VehicleId, BTreeSet<VehicleId>> = BTreeMap::new();
        for &(s, r) in &self.pairs {
            m.entry(s).or_default().insert(r);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

const RING: usize = 4;

#[derive(Debug, Clone)]
struct SlotFrames {
    id: VehicleId,
    /// `(round, frame)`, newest at `head`.
    frames: [(u64, [u8; FRAME_LEN]); RING],
    head: usize,
}

#[derive(Debug, Clone)]
pub struct Channel {
    params: ChannelParams,
    rng: ChaCha8Rng,
    round: u64,
    slot_of: HashMap<VehicleId, usize>,
    slots: Vec<Option<SlotFrames>>,
    /// `rx[r * cap + s]` = round + 1 of the last frame slot `r` got from `s`.
    rx: Vec<u64>,
    cap: usize,
    /// Time of the most recent round.
    last_t: f64,
}

impl Channel {
    /// The channel draws from stream 0 of the run seed.
    pub fn new(params: ChannelParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        Channel {
            params,
            rng,
            round: 0,
            slot_of: HashMap::new(),
            slots: Vec::new(),
            rx: Vec::new(),
            cap: 0,
            last_t: 0.0,
        }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn slot(&mut self, id: VehicleId) -> usize {
        if let Some(&s) = self.slot_of.get(&id) {
            return s;
        }
        let s = match self.slots.iter().position(Option::is_none) {
            Some(s) => s,
            None => {
                self.slots.push(None);
                self.slots.len() - 1
            }
        };
        if self.slots.len() > self.cap {
            let new_cap = (self.cap * 2).max(16).max(self.slots.len());
            let mut rx = vec![0; new_cap * new_cap];
            for r in 0..self.cap {
                rx[r * new_cap..r * new_cap + self.cap].copy_from_slice(&self.rx[r * self.cap..(r + 1) * self.cap]);
            }
            self.rx = rx;
            self.cap = new_cap;
        }
        self.slots[s] = Some(SlotFrames {
            id,
            frames: [(u64::MAX, [0; FRAME_LEN]); RING],
            head: 0,
        });
        for k in 0..self.cap {
            self.rx[s * self.cap + k] = 0;
            self.rx[k * self.cap + s] = 0;
        }
        self.slot_of.insert(id, s);
        s
    }

    /// Drop all state about a vehicle that left the simulation.
    pub fn forget(&mut self, id: VehicleId) {
        if let Some(s) = self.slot_of.remove(&id) {
            self.slots[s] = None;
        }
    }

    /// One beacon round at time `t`: every connected station transmits and
    /// every other connected station in range receives unless the link drops.
    pub fn broadcast_step(&mut self, stations: &[Station], t: f64) -> Result<Delivered, CodecError> {
        let phase = t * self.params.rate_hz;
        debug_assert!((phase - phase.round()).abs() < 1e-6, "t = {t} is off the beacon grid");
        let mut order: Vec<usize> = (0..stations.len())
            .filter(|&i| stations[i].kind.is_connected())
            .collect();
        order.sort_by_key(|&i| stations[i].beacon.sender);
        let round = self.round;
        self.round += 1;
        self.last_t = t;
        let mut slots = Vec::with_capacity(order.len());
        for &i in &order {
            let st = &stations[i];
            let frame = encode(&Beacon { timestamp: t, ..st.beacon })?;
            let s = self.slot(st.beacon.sender);
            let sf = self.slots[s].as_mut().unwrap();
            sf.head = (sf.head + 1) % RING;
            sf.frames[sf.head] = (round, frame);
            slots.push(s);
        }
        let mut pairs = Vec::new();
        for (a, &i) in order.iter().enumerate() {
            let tx = &stations[i];
            for (b, &j) in order.iter().enumerate() {
                if a == b {
                    continue;
                }
                let rxs = &stations[j];
                let d = tx.position.dist(rxs.position);
                if d > self.params.range_m {
                    continue;
                }
                let p = self
                    .params
                    .link_loss(d)
                    .max(tx.loss_override.unwrap_or(0.0))
                    .max(rxs.loss_override.unwrap_or(0.0));
                let lost = if p <= 0.0 {
                    false
                } else if p >= 1.0 {
                    true
                } else {
                    self.rng.random::<f64>() < p
                };
                if !lost {
                    self.rx[slots[b] * self.cap + slots[a]] = round + 1;
                    pairs.push((tx.beacon.sender, rxs.beacon.sender));
                }
            }
        }
        Ok(Delivered { pairs })
    }

    /// Latest beacon `receiver` holds from `sender`, if not yet expired.
    pub fn latest(&self, receiver: VehicleId, sender: VehicleId, now: f64) -> Option<Beacon> {
        let (&r, &s) = (self.slot_of.get(&receiver)?, self.slot_of.get(&sender)?);
        let got = self.rx[r * self.cap + s];
        if got == 0 {
            return None;
        }
        let sf = self.slots[s].as_ref()?;
        let (_, frame) = sf.frames.iter().find(|(rd, _)| *rd == got - 1)?;
        let b = decode(frame).ok()?;
        (now - b.timestamp <= self.params.expiry() + 1e-9).then_some(b)
    }

    /// Whether `receiver` holds an unexpired beacon from `sender`; same answer
    /// as `latest(..).is_some()` without decoding the frame.
    pub fn hears(&self, receiver: VehicleId, sender: VehicleId, now: f64) -> bool {
        let (Some(&r), Some(&s)) = (self.slot_of.get(&receiver), self.slot_of.get(&sender)) else {
            return false;
        };
        let got = self.rx[r * self.cap + s];
        if got == 0 || self.slots[s].is_none() {
            return false;
        }
        let sent = self.last_t - (self.round - got) as f64 * self.params.interval();
        now - sent <= self.params.expiry() + 1e-9
    }

    /// All unexpired beacons held by `receiver`, by sender id.
    pub fn neighbors(&self, receiver: VehicleId, now: f64) -> Vec<Beacon> {
        let mut out: Vec<Beacon> = self
            .slots
            .iter()
            .flatten()
            .filter(|sf| sf.id != receiver)
            .filter_map(|sf| self.latest(receiver, sf.id, now))
            .collect();
        out.sort_by_key(|b| b.sender);
        out
    }

    /// Most recent frame transmitted by `sender`.
    pub fn last_frame(&self, sender: VehicleId) -> Option<&[u8; FRAME_LEN]> {
        let sf = self.slots[*self.slot_of.get(&sender)?].as_ref()?;
        let (rd, f) = &sf.frames[sf.head];
        (*rd != u64::MAX).then_some(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(id: VehicleId, x: f64) -> Station {
        Station {
            kind: VehicleKind::ConnectedAutomated,
            position: Point::new(x, 0.0),
            loss_override: None,
            beacon: Beacon {
                sender: id,
                position: Point::new(x, 0.0),
                ..Default::default()
            },
        }
    }

    #[test]
    fn lossless_in_range_pair_hears_each_other() {
        let mut ch = Channel::new(ChannelParams::default(), 1);
        let d = ch.broadcast_step(&[station(1, 0.0), station(2, 100.0)], 0.0).unwrap();
        assert_eq!(d.pairs, vec![(1, 2), (2, 1)]);
        assert_eq!(ch.latest(2, 1, 0.0).unwrap().sender, 1);
    }

    #[test]
    fn out_of_range_pair_hears_nothing() {
        let mut ch = Channel::new(ChannelParams::default(), 1);
        let d = ch.broadcast_step(&[station(1, 0.0), station(2, 500.0)], 0.0).unwrap();
        assert!(d.is_empty());
        assert!(ch.latest(2, 1, 0.0).is_none());
    }

    #[test]
    fn certain_loss_isolates_a_vehicle() {
        let mut ch = Channel::new(ChannelParams::default(), 9);
        let mut a = station(1, 0.0);
        a.loss_override = Some(1.0);
        for k in 0..200 {
            let t = k as f64 * 0.1;
            let d = ch.broadcast_step(&[a, station(2, 20.0), station(3, 40.0)], t).unwrap();
            assert!(d.pairs.iter().all(|&(s, r)| s != 1 && r != 1));
            assert_eq!(d.len(), 2);
        }
    }

    #[test]
    fn non_connected_vehicles_stay_silent() {
        let mut ch = Channel::new(ChannelParams::default(), 1);
        let mut h = station(5, 10.0);
        h.kind = VehicleKind::HumanDriven;
        let d = ch.broadcast_step(&[station(1, 0.0), h], 0.0).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn neighbors_expire_after_three_intervals() {
        let mut ch = Channel::new(ChannelParams::default(), 1);
        ch.broadcast_step(&[station(1, 0.0), station(2, 10.0)], 1.0).unwrap();
        assert!(ch.latest(2, 1, 1.3).is_some());
        assert!(ch.latest(2, 1, 1.35).is_none());
        // Later rounds replace the entry rather than accumulate.
        ch.broadcast_step(&[station(1, 0.0), station(2, 10.0)], 1.1).unwrap();
        let n = ch.neighbors(2, 1.1);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].timestamp, 1.1);
    }

    #[test]
    fn seeded_loss_is_reproducible() {
        let params = ChannelParams {
            loss: LossModel::Bernoulli { p: 0.4 },
            ..Default::default()
        };
        let run = || {
            let mut ch = Channel::new(params, 77);
            (0..50)
                .map(|k| {
                    ch.broadcast_step(&[station(1, 0.0), station(2, 50.0), station(3, 90.0)], k as f64 * 0.1)
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        let (x, y) = (run(), run());
        assert_eq!(x, y);
        let total: usize = x.iter().map(Delivered::len).sum();
        assert!(total > 100 && total < 250, "{total}");
    }

    #[test]
    fn distance_ramp_shape() {
        let p = ChannelParams {
            loss: LossModel::DistanceRamp { start_m: 250.0, p_max: 0.6 },
            ..Default::default()
        };
        assert_eq!(p.link_loss(100.0), 0.0);
        assert_eq!(p.link_loss(250.0), 0.0);
        assert!((p.link_loss(325.0) - 0.3).abs() < 1e-12);
        assert!((p.link_loss(400.0) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn forgotten_slots_are_reused_cleanly() {
        let mut ch = Channel::new(ChannelParams::default(), 1);
        ch.broadcast_step(&[station(1, 0.0), station(2, 10.0)], 0.0).unwrap();
        ch.forget(1);
        ch.broadcast_step(&[station(3, 0.0)], 0.1).unwrap();
        assert!(ch.latest(2, 3, 0.1).is_none());
        assert!(ch.latest(3, 2, 0.1).is_none());
    }
}
