use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// FIFO buffer with seeded uniform sampling (no repeats within a batch).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends `item`, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// Indices of `n` distinct entries drawn uniformly.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        if n > self.items.len() {
            return Err(Error::InvalidState(format!(
                "cannot sample {n} from {} transitions",
                self.items.len()
            )));
        }
        Ok(rand::seq::index::sample(&mut self.rng, self.items.len(), n).into_vec())
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<&T>> {
        let idx = self.sample_indices(n)?;
        Ok(idx.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_one_sample_one() {
        let mut b = ReplayBuffer::new(4, 0).unwrap();
        b.push(7);
        assert_eq!(b.sample(1).unwrap(), vec![&7]);
    }

    #[test]
    fn oldest_is_evicted() {
        let mut b = ReplayBuffer::new(2, 0).unwrap();
        for i in 0..3 {
            b.push(i);
        }
        assert_eq!(b.len(), 2);
        let mut s: Vec<i32> = b.sample(2).unwrap().into_iter().copied().collect();
        s.sort();
        assert_eq!(s, vec![1, 2]);
    }

    #[test]
    fn empty_and_oversized_samples_fail() {
        let mut b: ReplayBuffer<u8> = ReplayBuffer::new(3, 0).unwrap();
        assert!(matches!(b.sample(1), Err(Error::Empty(_))));
        b.push(1);
        assert!(b.sample(2).is_err());
        assert!(ReplayBuffer::<u8>::new(0, 0).is_err());
    }

    #[test]
    fn batches_have_no_repeats() {
        let mut b = ReplayBuffer::new(50, 3).unwrap();
        for i in 0..50 {
            b.push(i);
        }
        for _ in 0..100 {
            let mut s = b.sample_indices(20).unwrap();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 20);
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let mut a = ReplayBuffer::new(10, 42).unwrap();
        let mut b = ReplayBuffer::new(10, 42).unwrap();
        for i in 0..10 {
            a.push(i);
            b.push(i);
        }
        assert_eq!(a.sample_indices(5).unwrap(), b.sample_indices(5).unwrap());
    }
}
