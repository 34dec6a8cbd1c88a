//! Fixed-capacity ring buffer of transitions.

use rand::seq::index;
use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HRLR";
const VERSION: u32 = 1;

/// One stored transition. `done` is true only for true terminations, so
/// transitions cut by the step limit still bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    obs_dim: usize,
    capacity: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<u32>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    /// Slot the next push overwrites.
    cursor: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, capacity: usize) -> Result<Self> {
        if obs_dim == 0 || capacity == 0 {
            return Err(Error::InvalidArgument("replay buffer needs obs_dim and capacity >= 1".into()));
        }
        Ok(Self {
            obs_dim,
            capacity,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
            inserted: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Total pushes since creation, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(Error::Dimension { expected: self.obs_dim, got: t.obs.len().max(t.next_obs.len()) });
        }
        let action = u32::try_from(t.action)
            .map_err(|_| Error::InvalidArgument(format!("action {} too large", t.action)))?;
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.actions.push(action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
        } else {
            let d = self.obs_dim;
            let at = self.cursor;
            self.obs[at * d..(at + 1) * d].copy_from_slice(&t.obs);
            self.next_obs[at * d..(at + 1) * d].copy_from_slice(&t.next_obs);
            self.actions[at] = action;
            self.rewards[at] = t.reward;
            self.dones[at] = t.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Transition stored in `slot` (slots are in physical ring order).
    pub fn get(&self, slot: usize) -> Option<Transition> {
        if slot >= self.len() {
            return None;
        }
        let d = self.obs_dim;
        Some(Transition {
            obs: self.obs[slot * d..(slot + 1) * d].to_vec(),
            action: self.actions[slot] as usize,
            reward: self.rewards[slot],
            next_obs: self.next_obs[slot * d..(slot + 1) * d].to_vec(),
            done: self.dones[slot],
        })
    }

    pub(crate) fn obs_row(&self, slot: usize) -> &[f64] {
        &self.obs[slot * self.obs_dim..(slot + 1) * self.obs_dim]
    }

    pub(crate) fn next_obs_row(&self, slot: usize) -> &[f64] {
        &self.next_obs[slot * self.obs_dim..(slot + 1) * self.obs_dim]
    }

    pub(crate) fn action(&self, slot: usize) -> usize {
        self.actions[slot] as usize
    }

    pub(crate) fn reward(&self, slot: usize) -> f64 {
        self.rewards[slot]
    }

    pub(crate) fn done(&self, slot: usize) -> bool {
        self.dones[slot]
    }

    /// `batch` distinct slots drawn uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 || batch > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {batch} distinct transitions from {}",
                self.len()
            )));
        }
        Ok(index::sample(rng, self.len(), batch).into_vec())
    }

    pub fn clear(&mut self) {
        *self = Self::new(self.obs_dim, self.capacity).expect("dims already validated");
    }

    /// Layout: obs_dim u32, capacity u64, cursor u64, inserted u64, len u64,
    /// then `len` records of `obs f64 × d | action u32 | reward f64 |
    /// next_obs f64 × d | done u8` in slot order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.obs_dim as u32)
            .u64(self.capacity as u64)
            .u64(self.cursor as u64)
            .u64(self.inserted)
            .u64(self.len() as u64);
        for slot in 0..self.len() {
            for &v in self.obs_row(slot) {
                w.f64(v);
            }
            w.u32(self.actions[slot]).f64(self.rewards[slot]);
            for &v in self.next_obs_row(slot) {
                w.f64(v);
            }
            w.u8(u8::from(self.dones[slot]));
        }
        w.finish(MAGIC, VERSION)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = Reader::open(bytes, MAGIC, VERSION, "replay buffer")?;
        let obs_dim = r.u32()? as usize;
        let capacity = r.u64()? as usize;
        let cursor = r.u64()? as usize;
        let inserted = r.u64()?;
        let len = r.u64()? as usize;
        let mut buf = Self::new(obs_dim, capacity).map_err(|e| Error::Corrupt(e.to_string()))?;
        let consistent = len <= capacity
            && cursor < capacity
            && (len == capacity || cursor == len)
            && inserted >= len as u64
            && (len < capacity || inserted % capacity as u64 == cursor as u64);
        if !consistent {
            return Err(Error::Corrupt("replay buffer: inconsistent ring header".into()));
        }
        for _ in 0..len {
            for _ in 0..obs_dim {
                buf.obs.push(r.f64()?);
            }
            buf.actions.push(r.u32()?);
            buf.rewards.push(r.f64()?);
            for _ in 0..obs_dim {
                buf.next_obs.push(r.f64()?);
            }
            buf.dones.push(match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Corrupt(format!("replay buffer: bad done flag {b}"))),
            });
        }
        r.finish()?;
        buf.cursor = cursor;
        buf.inserted = inserted;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn t(i: usize) -> Transition {
        Transition {
            obs: vec![i as f64, -(i as f64)],
            action: i % 3,
            reward: 0.5 * i as f64,
            next_obs: vec![i as f64 + 0.25, 1.0 / (i as f64 + 1.0)],
            done: i % 4 == 0,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(2, 3).unwrap();
        for i in 0..5 {
            b.push(t(i)).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 5);
        assert_eq!(b.get(0), Some(t(3)));
        assert_eq!(b.get(1), Some(t(4)));
        assert_eq!(b.get(2), Some(t(2)));
    }

    #[test]
    fn round_trip_partial_full_and_empty() {
        for n in [0, 2, 3, 7] {
            let mut b = ReplayBuffer::new(2, 3).unwrap();
            for i in 0..n {
                b.push(t(i)).unwrap();
            }
            let bytes = b.to_bytes();
            let mut back = ReplayBuffer::from_bytes(&bytes).unwrap();
            assert_eq!(back, b);
            assert_eq!(back.to_bytes(), bytes);
            // Insertion order survives: the next push lands in the same slot.
            b.push(t(100)).unwrap();
            back.push(t(100)).unwrap();
            assert_eq!(back, b);
        }
    }

    #[test]
    fn truncated_and_tampered_rejected() {
        let mut b = ReplayBuffer::new(2, 4).unwrap();
        b.push(t(1)).unwrap();
        let bytes = b.to_bytes();
        assert!(matches!(ReplayBuffer::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(ReplayBuffer::from_bytes(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn dimension_checked() {
        let mut b = ReplayBuffer::new(3, 4).unwrap();
        assert!(matches!(b.push(t(0)), Err(Error::Dimension { expected: 3, .. })));
    }

    #[test]
    fn sampling_is_distinct_and_seeded() {
        let mut b = ReplayBuffer::new(2, 50).unwrap();
        for i in 0..50 {
            b.push(t(i)).unwrap();
        }
        let s = b.sample_indices(50, &mut seed::rng(1)).unwrap();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(b.sample_indices(8, &mut seed::rng(4)).unwrap(), b.sample_indices(8, &mut seed::rng(4)).unwrap());
        assert!(b.sample_indices(51, &mut seed::rng(1)).is_err());
    }

    #[test]
    fn selection_frequency_within_three_sigma() {
        let n = 40;
        let mut b = ReplayBuffer::new(2, n).unwrap();
        for i in 0..n {
            b.push(t(i)).unwrap();
        }
        let (draws, batch) = (5000, 8);
        let mut counts = vec![0u32; n];
        let mut rng = seed::rng(77);
        for _ in 0..draws {
            for i in b.sample_indices(batch, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = batch as f64 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd + 1e-9, "count {c} vs mean {mean}");
        }
    }
}
