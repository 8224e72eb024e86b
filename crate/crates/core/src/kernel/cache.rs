//! Least-recently-used column store with a budget counted in scalar entries.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

pub(crate) type Column = Arc<Vec<f64>>;

#[derive(Debug)]
pub(crate) struct ColumnCache {
    budget: usize,
    used: usize,
    clock: u64,
    map: HashMap<usize, (Column, u64)>,
    order: BTreeMap<u64, usize>,
}

impl ColumnCache {
    pub fn new(budget: usize) -> Self {
        ColumnCache {
            budget,
            used: 0,
            clock: 0,
            map: HashMap::new(),
            order: BTreeMap::new(),
        }
    }

    pub fn used(&self) -> usize {
        self.used
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn get(&mut self, j: usize) -> Option<Column> {
        let stamp = self.tick();
        let entry = self.map.get_mut(&j)?;
        self.order.remove(&entry.1);
        entry.1 = stamp;
        self.order.insert(stamp, j);
        Some(entry.0.clone())
    }

    /// Stores a column, evicting the least recently used ones as needed.
    /// Columns larger than the whole budget are not stored.
    pub fn insert(&mut self, j: usize, col: Column) {
        let len = col.len();
        if len > self.budget {
            return;
        }
        if let Some((old, stamp)) = self.map.remove(&j) {
            self.order.remove(&stamp);
            self.used -= old.len();
        }
        while self.used + len > self.budget {
            let (&stamp, &victim) = match self.order.iter().next() {
                Some(e) => e,
                None => break,
            };
            self.order.remove(&stamp);
            if let Some((old, _)) = self.map.remove(&victim) {
                self.used -= old.len();
            }
        }
        let stamp = self.tick();
        self.order.insert(stamp, j);
        self.map.insert(j, (col, stamp));
        self.used += len;
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.order.clear();
        self.used = 0;
    }
}
