//! Space Saving counters backed by a stream summary.
//!
//! Monitored items live in count buckets kept in a doubly linked list sorted by
//! count. Since every update adds one, an item only ever moves to the adjacent
//! bucket, so increments and evictions are O(1) in the worst case.
//!
//! Among items sharing the minimum count, the one that entered that count
//! bucket first is evicted.

use std::hash::{BuildHasher, Hash};

use foldhash::fast::FixedState;
use hashbrown::HashTable;

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Slot<K> {
    key: K,
    error: u64,
    bucket: u32,
    prev: u32,
    next: u32,
}

#[derive(Debug, Clone)]
struct Bucket {
    count: u64,
    head: u32,
    tail: u32,
    prev: u32,
    next: u32,
}

/// A monitored item with its counter and overestimation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counter<K> {
    pub key: K,
    pub count: u64,
    pub error: u64,
}

/// Bounded frequency table with deterministic upper and lower bounds.
#[derive(Debug, Clone)]
pub struct SpaceSaving<K> {
    capacity: usize,
    // Slot ids keyed by the slot's item. Packed prefixes keep their entropy
    // in the high bits, which a plain multiplicative hash does not spread.
    index: HashTable<u32>,
    hasher: FixedState,
    slots: Vec<Slot<K>>,
    buckets: Vec<Bucket>,
    free_buckets: Vec<u32>,
    min_bucket: u32,
    updates: u64,
}

impl<K: Hash + Eq + Copy> SpaceSaving<K> {
    /// # Panics
    /// When `capacity` is zero or does not fit the internal 32-bit indices.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "space saving needs at least one counter");
        assert!(capacity < NIL as usize, "capacity too large");
        SpaceSaving {
            capacity,
            index: HashTable::with_capacity(capacity),
            hasher: FixedState::default(),
            slots: Vec::with_capacity(capacity),
            buckets: Vec::with_capacity(capacity + 1),
            free_buckets: Vec::new(),
            min_bucket: NIL,
            updates: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    /// Total increments applied.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Smallest monitored count, or 0 when nothing is monitored.
    pub fn min_count(&self) -> u64 {
        if self.min_bucket == NIL {
            0
        } else {
            self.buckets[self.min_bucket as usize].count
        }
    }

    pub fn increment(&mut self, key: K) {
        self.updates += 1;
        let hash = self.hasher.hash_one(key);
        if let Some(slot) = self.find(hash, &key) {
            self.bump(slot);
            return;
        }
        let slot = if self.slots.len() < self.capacity {
            let slot = self.slots.len() as u32;
            self.slots.push(Slot {
                key,
                error: 0,
                bucket: NIL,
                prev: NIL,
                next: NIL,
            });
            let bucket = if self.min_bucket != NIL && self.buckets[self.min_bucket as usize].count == 1 {
                self.min_bucket
            } else {
                let b = self.new_bucket(1, NIL, self.min_bucket);
                self.min_bucket = b;
                b
            };
            self.push_back(bucket, slot);
            slot
        } else {
            // Take over the oldest entry of the minimum bucket.
            let slot = self.buckets[self.min_bucket as usize].head;
            let old = self.slots[slot as usize].key;
            let old_hash = self.hasher.hash_one(old);
            if let Ok(entry) = self.index.find_entry(old_hash, |&s| s == slot) {
                entry.remove();
            }
            let s = &mut self.slots[slot as usize];
            s.key = key;
            s.error = self.buckets[s.bucket as usize].count;
            self.bump(slot);
            slot
        };
        let (slots, hasher) = (&self.slots, &self.hasher);
        self.index
            .insert_unique(hash, slot, |&s| hasher.hash_one(slots[s as usize].key));
    }

    fn find(&self, hash: u64, key: &K) -> Option<u32> {
        self.index.find(hash, |&s| self.slots[s as usize].key == *key).copied()
    }

    fn lookup(&self, key: &K) -> Option<&Slot<K>> {
        self.find(self.hasher.hash_one(key), key)
            .map(|s| &self.slots[s as usize])
    }

    fn count_of(&self, slot: &Slot<K>) -> u64 {
        self.buckets[slot.bucket as usize].count
    }

    /// Upper bound on the item's true count.
    pub fn upper_bound(&self, key: &K) -> u64 {
        match self.lookup(key) {
            Some(s) => self.count_of(s),
            None if self.is_full() => self.min_count(),
            None => 0,
        }
    }

    /// Lower bound on the item's true count.
    pub fn lower_bound(&self, key: &K) -> u64 {
        match self.lookup(key) {
            Some(s) => self.count_of(s) - s.error,
            None => 0,
        }
    }

    pub fn get(&self, key: &K) -> Option<Counter<K>> {
        self.lookup(key).map(|s| Counter {
            key: s.key,
            count: self.count_of(s),
            error: s.error,
        })
    }

    pub fn contains(&self, key: &K) -> bool {
        self.lookup(key).is_some()
    }

    /// Monitored items in unspecified order.
    pub fn counters(&self) -> impl Iterator<Item = Counter<K>> + '_ {
        self.slots.iter().map(|s| Counter {
            key: s.key,
            count: self.count_of(s),
            error: s.error,
        })
    }

    // Moves `slot` from its bucket to the bucket holding count + 1.
    fn bump(&mut self, slot: u32) {
        let b = self.slots[slot as usize].bucket;
        let count = self.buckets[b as usize].count + 1;
        let next = self.buckets[b as usize].next;
        let target = if next != NIL && self.buckets[next as usize].count == count {
            next
        } else {
            self.new_bucket(count, b, next)
        };
        self.unlink(slot);
        self.push_back(target, slot);
    }

    fn new_bucket(&mut self, count: u64, prev: u32, next: u32) -> u32 {
        let bucket = Bucket {
            count,
            head: NIL,
            tail: NIL,
            prev,
            next,
        };
        let id = match self.free_buckets.pop() {
            Some(id) => {
                self.buckets[id as usize] = bucket;
                id
            }
            None => {
                self.buckets.push(bucket);
                (self.buckets.len() - 1) as u32
            }
        };
        if prev != NIL {
            self.buckets[prev as usize].next = id;
        }
        if next != NIL {
            self.buckets[next as usize].prev = id;
        }
        id
    }

    fn push_back(&mut self, bucket: u32, slot: u32) {
        let tail = self.buckets[bucket as usize].tail;
        {
            let s = &mut self.slots[slot as usize];
            s.bucket = bucket;
            s.prev = tail;
            s.next = NIL;
        }
        if tail == NIL {
            self.buckets[bucket as usize].head = slot;
        } else {
            self.slots[tail as usize].next = slot;
        }
        self.buckets[bucket as usize].tail = slot;
    }

    // Detaches `slot` from its bucket, freeing the bucket when it empties.
    fn unlink(&mut self, slot: u32) {
        let (bucket, prev, next) = {
            let s = &self.slots[slot as usize];
            (s.bucket, s.prev, s.next)
        };
        if prev == NIL {
            self.buckets[bucket as usize].head = next;
        } else {
            self.slots[prev as usize].next = next;
        }
        if next == NIL {
            self.buckets[bucket as usize].tail = prev;
        } else {
            self.slots[next as usize].prev = prev;
        }
        if self.buckets[bucket as usize].head == NIL {
            let (bp, bn) = {
                let b = &self.buckets[bucket as usize];
                (b.prev, b.next)
            };
            if bp == NIL {
                self.min_bucket = bn;
            } else {
                self.buckets[bp as usize].next = bn;
            }
            if bn != NIL {
                self.buckets[bn as usize].prev = bp;
            }
            self.free_buckets.push(bucket);
        }
    }

    #[cfg(test)]
    fn check_structure(&self) {
        let mut seen = 0;
        let mut b = self.min_bucket;
        let mut prev = NIL;
        let mut last_count = 0;
        while b != NIL {
            let bucket = &self.buckets[b as usize];
            assert_eq!(bucket.prev, prev);
            assert!(bucket.count > last_count);
            assert_ne!(bucket.head, NIL, "empty bucket left linked");
            let mut s = bucket.head;
            while s != NIL {
                let slot = &self.slots[s as usize];
                assert_eq!(slot.bucket, b);
                assert_eq!(self.find(self.hasher.hash_one(slot.key), &slot.key), Some(s));
                seen += 1;
                s = slot.next;
            }
            last_count = bucket.count;
            prev = b;
            b = bucket.next;
        }
        assert_eq!(seen, self.slots.len());
        assert_eq!(self.index.len(), self.slots.len());
    }
}
