//! String interner shared by dependency labels and vocabularies.

use std::collections::HashMap;

/// Bidirectional string <-> id map. Ids are dense, assigned in insertion
/// order, and stable for the lifetime of the alphabet, so serialized models
/// can persist them by dumping the item list in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alphabet {
    items: Vec<String>,
    index: HashMap<String, u32>,
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `s`, inserting it if unseen.
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.items.len() as u32;
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn lookup(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    /// Resolves an id created by this alphabet. Panics on a foreign id since
    /// that is always a programming error.
    pub fn resolve(&self, id: u32) -> &str {
        &self.items[id as usize]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items in id order.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|s| s.as_str())
    }
}

impl FromIterator<String> for Alphabet {
    fn from_iter<T: IntoIterator<Item = String>>(iter: T) -> Self {
        let mut a = Alphabet::new();
        for s in iter {
            a.intern(&s);
        }
        a
    }
}
