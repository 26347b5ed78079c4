use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use once_cell::sync::OnceCell;

use super::{UtilityOracle, UtilityTable};
use crate::coalition::Coalition;
use crate::error::Result;

/// Counters kept by [`Memoized`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleStats {
    /// Inner evaluations that completed successfully.
    pub evaluations: u64,
    pub cache_hits: u64,
    /// Time spent inside the inner oracle.
    pub wall_time: Duration,
}

/// Caching wrapper: each distinct coalition reaches the inner oracle at most
/// once, also under concurrent callers. Failed evaluations are not cached.
pub struct Memoized<O> {
    inner: O,
    cells: Mutex<HashMap<u64, Arc<OnceCell<f64>>>>,
    evaluations: AtomicU64,
    hits: AtomicU64,
    nanos: AtomicU64,
}

pub fn memoize<O: UtilityOracle>(oracle: O) -> Memoized<O> {
    Memoized::new(oracle)
}

impl<O: UtilityOracle> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cells: Mutex::new(HashMap::new()),
            evaluations: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            nanos: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            evaluations: self.evaluations.load(Ordering::SeqCst),
            cache_hits: self.hits.load(Ordering::SeqCst),
            wall_time: Duration::from_nanos(self.nanos.load(Ordering::SeqCst)),
        }
    }

    /// Cached utility, without evaluating.
    pub fn cached(&self, coalition: Coalition) -> Option<f64> {
        let cells = self.cells.lock().expect("memo lock poisoned");
        cells.get(&coalition.bits()).and_then(|cell| cell.get().copied())
    }

    /// Everything evaluated so far, in the utility-table format.
    pub fn snapshot(&self) -> Result<UtilityTable> {
        let n = self.inner.n();
        let mut table = UtilityTable::new(n)?;
        let cells = self.cells.lock().expect("memo lock poisoned");
        for (&bits, cell) in cells.iter() {
            if let Some(&value) = cell.get() {
                table.insert(Coalition::new(n, bits)?, value)?;
            }
        }
        Ok(table)
    }
}

impl<O: UtilityOracle> UtilityOracle for Memoized<O> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        let cell = {
            let mut cells = self.cells.lock().expect("memo lock poisoned");
            Arc::clone(cells.entry(coalition.bits()).or_default())
        };
        if let Some(&value) = cell.get() {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(value);
        }
        let mut computed = false;
        let value = *cell.get_or_try_init(|| {
            computed = true;
            let start = Instant::now();
            let result = self.inner.evaluate(coalition);
            self.nanos
                .fetch_add(start.elapsed().as_nanos() as u64, Ordering::SeqCst);
            result
        })?;
        if computed {
            self.evaluations.fetch_add(1, Ordering::SeqCst);
        } else {
            self.hits.fetch_add(1, Ordering::SeqCst);
        }
        Ok(value)
    }
}
