//! Bounded FIFO replay with an index from pivot keys to stored transitions.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;

use crate::env::{FeatureVec, Observation, PivotKey, Transition};
use crate::error::{Error, Result};
use crate::nn::{read_f64, read_f64s, read_u32, write_f64s, write_u32};

pub const DEFAULT_CAPACITY: usize = 200_000;

const DUMP_MAGIC: &[u8; 4] = b"FGRB";

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
    /// Sequence number of `storage[0]`.
    head: u64,
    pivot_index: HashMap<PivotKey, VecDeque<u64>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: VecDeque::new(),
            head: 0,
            pivot_index: HashMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.storage.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// Number of live transitions stored under `key`.
    pub fn bucket_len(&self, key: &PivotKey) -> usize {
        self.pivot_index.get(key).map_or(0, VecDeque::len)
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() == self.capacity {
            self.evict_oldest();
        }
        let id = self.head + self.storage.len() as u64;
        self.pivot_index
            .entry(t.pivot_key.clone())
            .or_default()
            .push_back(id);
        self.storage.push_back(t);
    }

    fn evict_oldest(&mut self) {
        let Some(old) = self.storage.pop_front() else {
            return;
        };
        let id = self.head;
        self.head += 1;
        if let Some(bucket) = self.pivot_index.get_mut(&old.pivot_key) {
            // Ids enter each bucket in increasing order, so the oldest is in front.
            debug_assert_eq!(bucket.front(), Some(&id));
            bucket.pop_front();
            if bucket.is_empty() {
                self.pivot_index.remove(&old.pivot_key);
            }
        }
    }

    /// `batch_size` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    /// Storage positions drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch_size)
            .map(|_| rng.gen_range(0..self.storage.len()))
            .collect())
    }

    /// Up to `n` distinct transitions stored under `key`.
    ///
    /// A bucket holding at least `n` entries yields `n` of them drawn without
    /// replacement; a smaller bucket yields all of its entries, so callers
    /// compare the length against `n` to decide whether to skip. An absent key
    /// yields an empty vector.
    pub fn sample_pivot_batch<R: Rng + ?Sized>(
        &self,
        key: &PivotKey,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition> {
        let Some(bucket) = self.pivot_index.get(key) else {
            return Vec::new();
        };
        let picks: Vec<usize> = if bucket.len() > n {
            let mut v = index::sample(rng, bucket.len(), n).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..bucket.len()).collect()
        };
        picks
            .into_iter()
            .map(|p| self.storage[(bucket[p] - self.head) as usize].clone())
            .collect()
    }

    /// Checks that every indexed id points at a live slot holding its key and
    /// that every live slot is indexed exactly once.
    pub fn audit(&self) -> Result<()> {
        let end = self.head + self.storage.len() as u64;
        let mut seen = 0usize;
        for (key, bucket) in &self.pivot_index {
            if bucket.is_empty() {
                return Err(Error::Numeric("empty pivot bucket retained".into()));
            }
            let mut prev = None;
            for &id in bucket {
                if id < self.head || id >= end {
                    return Err(Error::Numeric(format!("pivot id {id} outside live range")));
                }
                if prev.is_some_and(|p| p >= id) {
                    return Err(Error::Numeric("pivot bucket out of order".into()));
                }
                prev = Some(id);
                if &self.storage[(id - self.head) as usize].pivot_key != key {
                    return Err(Error::Numeric(format!("pivot id {id} holds another key")));
                }
                seen += 1;
            }
        }
        if seen != self.storage.len() {
            return Err(Error::Numeric(format!(
                "{seen} indexed entries for {} stored transitions",
                self.storage.len()
            )));
        }
        Ok(())
    }

    /// Binary dump of the stored transitions, oldest first.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.storage.len() as u64).to_le_bytes())?;
        for t in &self.storage {
            write_transition(w, t)?;
        }
        Ok(())
    }

    /// Reads a dump into a fresh buffer of the given capacity.
    pub fn load<R: Read>(r: &mut R, capacity: usize) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Input("not a replay dump".into()));
        }
        let mut count = [0u8; 8];
        r.read_exact(&mut count)?;
        let mut buf = Self::new(capacity)?;
        for _ in 0..u64::from_le_bytes(count) {
            buf.push(read_transition(r)?);
        }
        Ok(buf)
    }
}

pub fn write_transition<W: Write>(w: &mut W, t: &Transition) -> Result<()> {
    write_f64s(w, t.s.as_slice())?;
    write_u32(w, t.a as u32)?;
    w.write_all(&t.r.to_le_bytes())?;
    write_f64s(w, t.s_next.as_slice())?;
    write_f64s(w, t.features.as_slice())?;
    w.write_all(&[t.terminal as u8])?;
    w.write_all(&(t.task_id as u64).to_le_bytes())?;
    write_u32(w, t.pivot_key.0.len() as u32)?;
    w.write_all(&t.pivot_key.0)?;
    Ok(())
}

pub fn read_transition<R: Read>(r: &mut R) -> Result<Transition> {
    let s = Observation(read_f64s(r)?);
    let a = read_u32(r)? as usize;
    let rew = read_f64(r)?;
    let s_next = Observation(read_f64s(r)?);
    let features = FeatureVec(read_f64s(r)?);
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let mut task = [0u8; 8];
    r.read_exact(&mut task)?;
    let key_len = read_u32(r)? as usize;
    let mut key = Vec::new();
    r.take(key_len as u64).read_to_end(&mut key)?;
    if key.len() != key_len {
        return Err(Error::Input("truncated pivot key".into()));
    }
    Ok(Transition {
        s,
        a,
        r: rew,
        s_next,
        features,
        terminal: flag[0] != 0,
        task_id: u64::from_le_bytes(task) as usize,
        pivot_key: PivotKey(key),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(id: u8, key: u8) -> Transition {
        Transition {
            s: Observation(vec![id as f64]),
            a: 0,
            r: id as f64,
            s_next: Observation(vec![id as f64 + 1.0]),
            features: FeatureVec(vec![0.0]),
            terminal: false,
            task_id: 0,
            pivot_key: PivotKey(vec![key]),
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..4 {
            b.push(t(i, i));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).unwrap().r, 1.0);
        assert_eq!(b.bucket_len(&PivotKey(vec![0])), 0);
        b.audit().unwrap();
    }

    #[test]
    fn single_entry_sampling() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(1, &mut rng), Err(Error::Usage(_))));
        b.push(t(7, 1));
        for x in b.sample(64, &mut rng).unwrap() {
            assert_eq!(x, t(7, 1));
        }
    }

    #[test]
    fn pivot_buckets() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..3 {
            b.push(t(i, 9));
        }
        b.push(t(3, 4));
        assert_eq!(b.bucket_len(&PivotKey(vec![9])), 3);
        assert!(b.sample_pivot_batch(&PivotKey(vec![5]), 2, &mut rng).is_empty());
        let all = b.sample_pivot_batch(&PivotKey(vec![9]), 3, &mut rng);
        assert_eq!(all.len(), 3);
        assert_eq!(b.sample_pivot_batch(&PivotKey(vec![9]), 5, &mut rng).len(), 3);
        let two = b.sample_pivot_batch(&PivotKey(vec![9]), 2, &mut rng);
        assert_eq!(two.len(), 2);
        assert_ne!(two[0], two[1]);
        assert!(two.iter().all(|x| x.pivot_key == PivotKey(vec![9])));
    }

    #[test]
    fn dump_round_trip() {
        let mut b = ReplayBuffer::new(4).unwrap();
        for i in 0..6 {
            let mut x = t(i, i % 2);
            x.terminal = i == 5;
            b.push(x);
        }
        let mut bytes = Vec::new();
        b.dump(&mut bytes).unwrap();
        let c = ReplayBuffer::load(&mut bytes.as_slice(), 4).unwrap();
        assert_eq!(c.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
        c.audit().unwrap();
        assert!(ReplayBuffer::load(&mut &b"nope"[..], 4).is_err());
    }
}
