//! Classical replacement policies. Each admits every new file and evicts as
//! many victims. They read request identities and so are not private.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::cache::{CacheAction, CacheState};
use crate::env::ContentId;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Lru,
    Lfu,
    Fifo,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Fifo, PolicyKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Lru => "LRU",
            PolicyKind::Lfu => "LFU",
            PolicyKind::Fifo => "FIFO",
            PolicyKind::Random => "RANDOM",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LRU" => Ok(PolicyKind::Lru),
            "LFU" => Ok(PolicyKind::Lfu),
            "FIFO" => Ok(PolicyKind::Fifo),
            "RANDOM" => Ok(PolicyKind::Random),
            _ => Err(Error::Config(vec![format!("unknown policy {s:?}")])),
        }
    }
}

/// Per-cache bookkeeping. FIFO needs none: cache entries are kept in
/// insertion order, so the front of the cache is the oldest entry.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    /// Logical time of the latest request per content, 0 if never requested.
    Lru { clock: u64, last: Vec<u64> },
    /// Request counts per content over the whole run.
    Lfu { counts: Vec<u64> },
    Fifo,
    Random,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, n_contents: usize) -> Self {
        match kind {
            PolicyKind::Lru => PolicyState::Lru { clock: 0, last: vec![0; n_contents + 1] },
            PolicyKind::Lfu => PolicyState::Lfu { counts: vec![0; n_contents + 1] },
            PolicyKind::Fifo => PolicyState::Fifo,
            PolicyKind::Random => PolicyState::Random,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyState::Lru { .. } => PolicyKind::Lru,
            PolicyState::Lfu { .. } => PolicyKind::Lfu,
            PolicyState::Fifo => PolicyKind::Fifo,
            PolicyState::Random => PolicyKind::Random,
        }
    }

    /// Records one request seen by this cache, hit or miss.
    pub fn touch(&mut self, id: ContentId) {
        match self {
            PolicyState::Lru { clock, last } => {
                *clock += 1;
                last[id as usize] = *clock;
            }
            PolicyState::Lfu { counts } => counts[id as usize] += 1,
            PolicyState::Fifo | PolicyState::Random => {}
        }
    }
}

/// Positions of the `k` entries with the smallest key; ties go to the older
/// position.
fn smallest_k(cache: &CacheState, k: usize, key: impl Fn(ContentId) -> u64) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..cache.len()).collect();
    pos.sort_by_key(|&p| (key(cache.entries()[p]), p));
    pos.truncate(k);
    pos
}

/// Admits all `new_files` and picks as many victims.
pub fn baseline_decide(state: &PolicyState, cache: &CacheState, new_files: &[ContentId], rng: &mut Stream) -> Result<CacheAction> {
    let k = new_files.len();
    let free = cache.capacity() - cache.len();
    if k > cache.capacity() {
        return Err(Error::Constraint(format!("{k} new files exceed capacity {}", cache.capacity())));
    }
    let need = k.saturating_sub(free);
    let victims: Vec<usize> = match state {
        PolicyState::Lru { last, .. } => smallest_k(cache, need, |id| last[id as usize]),
        PolicyState::Lfu { counts } => smallest_k(cache, need, |id| counts[id as usize]),
        PolicyState::Fifo => (0..need).collect(),
        PolicyState::Random => index::sample(rng, cache.len(), need).into_vec(),
    };
    let mut evict = vec![false; cache.len()];
    for v in victims {
        evict[v] = true;
    }
    Ok(CacheAction { evict, admit: vec![true; k] })
}

/// A baseline attached to one cache.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub state: PolicyState,
    rng: Stream,
}

impl BaselinePolicy {
    pub fn new(kind: PolicyKind, n_contents: usize, rng: Stream) -> Self {
        Self { state: PolicyState::new(kind, n_contents), rng }
    }

    pub fn kind(&self) -> PolicyKind {
        self.state.kind()
    }

    pub fn touch(&mut self, id: ContentId) {
        self.state.touch(id);
    }

    pub fn decide(&mut self, cache: &CacheState, new_files: &[ContentId]) -> Result<CacheAction> {
        baseline_decide(&self.state, cache, new_files, &mut self.rng)
    }
}
