//! Set-associative tag array with true LRU replacement.
//!
//! Holds per-line state `S` and no data; data lives in the coherence layer's
//! backing store. Ties in LRU age cannot happen (every touch gets a fresh
//! stamp), but invalid ways are always filled lowest index first.

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Way<S> {
    line: u32,
    state: S,
    stamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetAssoc<S> {
    sets: Vec<Vec<Option<Way<S>>>>,
    line_bytes: u32,
    clock: u64,
}

/// Where a new line would go.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot<S> {
    Free,
    Evict { line: u32, state: S },
}

impl<S: Clone> SetAssoc<S> {
    pub fn new(sets: usize, ways: usize, line_bytes: u32) -> SetAssoc<S> {
        assert!(sets.is_power_of_two() && ways > 0 && line_bytes.is_power_of_two());
        SetAssoc { sets: vec![vec![None; ways]; sets], line_bytes, clock: 0 }
    }

    pub fn line_of(&self, addr: u32) -> u32 {
        addr / self.line_bytes
    }

    pub fn line_bytes(&self) -> u32 {
        self.line_bytes
    }

    pub fn ways(&self) -> usize {
        self.sets[0].len()
    }

    fn set_index(&self, line: u32) -> usize {
        line as usize & (self.sets.len() - 1)
    }

    fn find(&self, line: u32) -> Option<(usize, usize)> {
        let s = self.set_index(line);
        self.sets[s]
            .iter()
            .position(|w| w.as_ref().is_some_and(|w| w.line == line))
            .map(|i| (s, i))
    }

    pub fn get(&self, line: u32) -> Option<&S> {
        self.find(line).map(|(s, i)| &self.sets[s][i].as_ref().unwrap().state)
    }

    pub fn get_mut(&mut self, line: u32) -> Option<&mut S> {
        let (s, i) = self.find(line)?;
        self.sets[s][i].as_mut().map(|w| &mut w.state)
    }

    pub fn contains(&self, line: u32) -> bool {
        self.find(line).is_some()
    }

    /// Marks `line` most recently used. Returns false if absent.
    pub fn touch(&mut self, line: u32) -> bool {
        match self.find(line) {
            Some((s, i)) => {
                self.clock += 1;
                self.sets[s][i].as_mut().unwrap().stamp = self.clock;
                true
            }
            None => false,
        }
    }

    pub fn set_state(&mut self, line: u32, state: S) -> bool {
        match self.find(line) {
            Some((s, i)) => {
                self.sets[s][i].as_mut().unwrap().state = state;
                true
            }
            None => false,
        }
    }

    /// The slot `line` would take, without changing anything. Lines for
    /// which `pinned` returns true are never chosen as victims.
    pub fn victim(&self, line: u32, pinned: impl Fn(u32, &S) -> bool) -> Option<Slot<S>> {
        let set = &self.sets[self.set_index(line)];
        if set.iter().any(Option::is_none) {
            return Some(Slot::Free);
        }
        set.iter()
            .flatten()
            .filter(|w| !pinned(w.line, &w.state))
            .min_by_key(|w| w.stamp)
            .map(|w| Slot::Evict { line: w.line, state: w.state.clone() })
    }

    /// Installs `line` in a free way. The caller must have made room.
    pub fn insert(&mut self, line: u32, state: S) {
        debug_assert!(!self.contains(line));
        let s = self.set_index(line);
        self.clock += 1;
        let slot = self.sets[s].iter().position(Option::is_none).expect("set has no free way");
        self.sets[s][slot] = Some(Way { line, state, stamp: self.clock });
    }

    pub fn remove(&mut self, line: u32) -> Option<S> {
        let (s, i) = self.find(line)?;
        self.sets[s][i].take().map(|w| w.state)
    }

    pub fn lines(&self) -> impl Iterator<Item = (u32, &S)> + '_ {
        self.sets.iter().flatten().flatten().map(|w| (w.line, &w.state))
    }
}
