use std::cmp::Ordering;

/// Default number of entries held between flushes.
pub const HIT_BUFFER_CAPACITY: usize = 16;

/// Sort key of a hit: ray parameter first, anchor index on ties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitKey {
    pub t: f64,
    pub anchor_index: u32,
}

impl Eq for HitKey {}

impl PartialOrd for HitKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HitKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.anchor_index.cmp(&other.anchor_index))
    }
}

/// Bounded k-buffer keeping the smallest keys seen, sorted ascending.
#[derive(Clone, Debug)]
pub struct HitBuffer {
    entries: Vec<HitKey>,
    capacity: usize,
    overflowed: bool,
}

impl HitBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "hit buffer capacity must be positive");
        Self {
            entries: Vec::with_capacity(capacity),
            capacity,
            overflowed: false,
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.overflowed = false;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Whether some key was evicted or rejected since the last clear, i.e.
    /// the buffer no longer holds every hit of the pass.
    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    /// Largest key currently held, once the buffer is full.
    pub fn cutoff(&self) -> Option<HitKey> {
        if self.is_full() {
            self.entries.last().copied()
        } else {
            None
        }
    }

    /// Records that hits were skipped without being offered, so the pass
    /// cannot be the last one.
    pub fn mark_overflowed(&mut self) {
        self.overflowed = true;
    }

    pub fn insert(&mut self, key: HitKey) {
        if self.is_full() {
            self.overflowed = true;
            if key >= *self.entries.last().expect("full buffer is non-empty") {
                return;
            }
            self.entries.pop();
        }
        let pos = self.entries.partition_point(|e| *e < key);
        self.entries.insert(pos, key);
    }

    pub fn entries(&self) -> &[HitKey] {
        &self.entries
    }
}
