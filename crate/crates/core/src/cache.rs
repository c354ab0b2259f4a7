//! Cache containers, the paired eviction/admission action mechanics and the
//! realtime hit-rate metrics.

use crate::env::{ContentId, UeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Server,
    Ue(UeId),
}

/// Ordered set of cached ids. Position in `entries` is insertion order and is
/// what an eviction mask indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    owner: Owner,
    capacity: usize,
    entries: Vec<ContentId>,
}

impl CacheState {
    pub fn new(owner: Owner, capacity: usize) -> Self {
        Self { owner, capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn owner(&self) -> Owner {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[ContentId] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn contains(&self, id: ContentId) -> bool {
        self.entries.contains(&id)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Warm-up admission of a missed content into free space.
    pub fn insert_for_fill(&mut self, id: ContentId) -> Result<()> {
        if self.contains(id) {
            return Err(Error::Duplicate(id));
        }
        if self.is_full() {
            return Err(Error::Constraint(format!("cache of capacity {} is full", self.capacity)));
        }
        self.entries.push(id);
        Ok(())
    }

    /// Binary membership vector over contents `1..=n`.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &id in &self.entries {
            v[id as usize - 1] = 1.0;
        }
        v
    }
}

/// Eviction mask over the cache's current entries and admission mask over
/// this slot's new files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheAction {
    pub evict: Vec<bool>,
    pub admit: Vec<bool>,
}

impl CacheAction {
    pub fn noop(cache_len: usize) -> Self {
        Self { evict: vec![false; cache_len], admit: Vec::new() }
    }

    pub fn n_evicted(&self) -> usize {
        self.evict.iter().filter(|&&b| b).count()
    }

    pub fn n_admitted(&self) -> usize {
        self.admit.iter().filter(|&&b| b).count()
    }

    pub fn is_noop(&self) -> bool {
        self.n_evicted() == 0 && self.n_admitted() == 0
    }
}

/// Applies one slot's eviction/admission pair.
///
/// On a full cache admissions must balance evictions exactly. A cache that is
/// still filling may grow, but never past its capacity. New files whose admit
/// bit is clear are discarded.
pub fn apply_action(cache: &CacheState, new_files: &[ContentId], action: &CacheAction) -> Result<CacheState> {
    if action.evict.len() != cache.len() {
        return Err(Error::Shape(format!(
            "eviction mask has {} bits for {} cached entries",
            action.evict.len(),
            cache.len()
        )));
    }
    if action.admit.len() != new_files.len() {
        return Err(Error::Shape(format!(
            "admission mask has {} bits for {} new files",
            action.admit.len(),
            new_files.len()
        )));
    }
    let admitted = action.n_admitted();
    let evicted = action.n_evicted();
    if cache.is_full() {
        if admitted != evicted {
            return Err(Error::Constraint(format!("admits {admitted} but evicts {evicted}")));
        }
    } else if cache.len() + admitted > cache.capacity() + evicted {
        return Err(Error::Constraint(format!(
            "admitting {admitted} and evicting {evicted} overflows capacity {}",
            cache.capacity()
        )));
    }
    for (k, (&id, &keep)) in new_files.iter().zip(&action.admit).enumerate() {
        if keep && (cache.contains(id) || new_files[..k].contains(&id)) {
            return Err(Error::Duplicate(id));
        }
    }
    let mut entries: Vec<ContentId> = cache
        .entries
        .iter()
        .zip(&action.evict)
        .filter_map(|(&id, &ev)| (!ev).then_some(id))
        .collect();
    entries.extend(new_files.iter().zip(&action.admit).filter_map(|(&id, &keep)| keep.then_some(id)));
    Ok(CacheState { owner: cache.owner, capacity: cache.capacity, entries })
}

/// Server realtime hit rate, `None` when no request reached the server.
pub fn hit_rate_server(n_server_misses: usize, batch_size: usize) -> Result<Option<f64>> {
    if n_server_misses > batch_size {
        return Err(Error::Domain(format!("{n_server_misses} misses in a batch of {batch_size}")));
    }
    if batch_size == 0 {
        return Ok(None);
    }
    Ok(Some(1.0 - n_server_misses as f64 / batch_size as f64))
}

pub fn hit_rate_ue(missed: usize) -> Result<f64> {
    match missed {
        0 => Ok(1.0),
        1 => Ok(0.0),
        m => Err(Error::Domain(format!("a UE misses at most one content per slot, got {m}"))),
    }
}

/// Mean over the values that carry traffic; `None` if there are none.
pub fn mean_with_traffic(values: &[Option<f64>]) -> Option<f64> {
    let (s, k) = values.iter().flatten().fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    (k > 0).then(|| s / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitRateSeries {
    values: Vec<f64>,
    window: usize,
}

impl HitRateSeries {
    pub fn new(window: usize) -> Self {
        Self { values: Vec::new(), window: window.max(1) }
    }

    pub fn push(&mut self, v: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("hit rate {v} outside [0,1]")));
        }
        self.values.push(v);
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn latest_average(&self) -> Result<f64> {
        if self.values.is_empty() {
            return Err(Error::Domain("sliding average of an empty series".into()));
        }
        sliding_average(self, self.values.len() - 1)
    }
}

/// Mean of the last `T_h` values ending at slot `t`, clipped at the start.
pub fn sliding_average(series: &HitRateSeries, t: usize) -> Result<f64> {
    if series.values.is_empty() {
        return Err(Error::Domain("sliding average of an empty series".into()));
    }
    if t >= series.values.len() {
        return Err(Error::Domain(format!("slot {t} beyond series of length {}", series.values.len())));
    }
    let lo = (t + 1).saturating_sub(series.window);
    let w = &series.values[lo..=t];
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}
