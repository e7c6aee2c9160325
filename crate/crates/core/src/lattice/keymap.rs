//! Open-addressing hash index from integer lattice keys to dense row ids.
//!
//! Keys are the first `d` coordinates of a lattice point, stored flat in a
//! single array so a probe never chases a pointer. The table grows by
//! doubling once it passes 2/3 load.

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct KeyMap {
    d: usize,
    /// Flat key storage, `capacity * d` entries; slot i occupies
    /// `keys[i*d .. (i+1)*d]` and is meaningful only when `rows[i] != EMPTY`.
    keys: Vec<i32>,
    rows: Vec<u32>,
    mask: usize,
    len: usize,
}

#[inline]
fn mix64(mut h: u64) -> u64 {
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    h
}

#[inline]
fn hash_key(key: &[i32]) -> u64 {
    let mut h: u64 = 0x9e3779b97f4a7c15;
    for &c in key {
        h = mix64(h ^ (c as u32 as u64));
    }
    h
}

impl KeyMap {
    pub fn new(d: usize) -> Self {
        Self::with_capacity(d, 16)
    }

    pub fn with_capacity(d: usize, cap_hint: usize) -> Self {
        let cap = cap_hint.max(8).next_power_of_two();
        KeyMap {
            d,
            keys: vec![0; cap * d],
            rows: vec![EMPTY; cap],
            mask: cap - 1,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, key: &[i32]) -> Option<u32> {
        debug_assert_eq!(key.len(), self.d);
        let mut slot = (hash_key(key) as usize) & self.mask;
        loop {
            let row = self.rows[slot];
            if row == EMPTY {
                return None;
            }
            if &self.keys[slot * self.d..slot * self.d + self.d] == key {
                return Some(row);
            }
            slot = (slot + 1) & self.mask;
        }
    }

    /// Insert `key` with value `row` if absent; returns the stored row either way.
    pub fn insert(&mut self, key: &[i32], row: u32) -> u32 {
        debug_assert_eq!(key.len(), self.d);
        if 3 * (self.len + 1) > 2 * (self.mask + 1) {
            self.grow();
        }
        let mut slot = (hash_key(key) as usize) & self.mask;
        loop {
            let existing = self.rows[slot];
            if existing == EMPTY {
                self.keys[slot * self.d..slot * self.d + self.d].copy_from_slice(key);
                self.rows[slot] = row;
                self.len += 1;
                return row;
            }
            if &self.keys[slot * self.d..slot * self.d + self.d] == key {
                return existing;
            }
            slot = (slot + 1) & self.mask;
        }
    }

    fn grow(&mut self) {
        let old_cap = self.mask + 1;
        let new_cap = old_cap * 2;
        let old_keys = std::mem::replace(&mut self.keys, vec![0; new_cap * self.d]);
        let old_rows = std::mem::replace(&mut self.rows, vec![EMPTY; new_cap]);
        self.mask = new_cap - 1;
        self.len = 0;
        for slot in 0..old_cap {
            if old_rows[slot] != EMPTY {
                let key = &old_keys[slot * self.d..slot * self.d + self.d];
                let row = old_rows[slot];
                let mut s = (hash_key(key) as usize) & self.mask;
                loop {
                    if self.rows[s] == EMPTY {
                        self.keys[s * self.d..s * self.d + self.d].copy_from_slice(key);
                        self.rows[s] = row;
                        self.len += 1;
                        break;
                    }
                    s = (s + 1) & self.mask;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_get_roundtrip() {
        let mut m = KeyMap::new(3);
        for i in 0..1000i32 {
            let key = [i, -2 * i, i * i % 97];
            assert_eq!(m.insert(&key, i as u32), i as u32);
        }
        for i in 0..1000i32 {
            let key = [i, -2 * i, i * i % 97];
            assert_eq!(m.get(&key), Some(i as u32));
        }
        assert_eq!(m.get(&[5000, 0, 0]), None);
        assert_eq!(m.len(), 1000);
    }

    #[test]
    fn duplicate_insert_keeps_first_row() {
        let mut m = KeyMap::new(2);
        assert_eq!(m.insert(&[1, 2], 0), 0);
        assert_eq!(m.insert(&[1, 2], 7), 0);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn survives_growth() {
        let mut m = KeyMap::with_capacity(2, 8);
        for i in 0..10_000i32 {
            m.insert(&[i, i ^ 0x55], i as u32);
        }
        assert_eq!(m.len(), 10_000);
        for i in (0..10_000i32).step_by(97) {
            assert_eq!(m.get(&[i, i ^ 0x55]), Some(i as u32));
        }
    }

    #[test]
    fn negative_coordinates_hash_distinctly() {
        let mut m = KeyMap::new(2);
        m.insert(&[-1, 1], 0);
        m.insert(&[1, -1], 1);
        assert_eq!(m.get(&[-1, 1]), Some(0));
        assert_eq!(m.get(&[1, -1]), Some(1));
    }
}
