use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Multiset of item names. Zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemBag(BTreeMap<String, u32>);

impl ItemBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, item: &str) -> u32 {
        self.0.get(item).copied().unwrap_or(0)
    }

    pub fn add(&mut self, item: &str, n: u32) {
        if n > 0 {
            *self.0.entry(item.to_string()).or_insert(0) += n;
        }
    }

    /// Removes `n` of `item`; returns false and leaves the bag untouched if short.
    pub fn take(&mut self, item: &str, n: u32) -> bool {
        let have = self.count(item);
        if have < n {
            return false;
        }
        if have == n {
            self.0.remove(item);
        } else {
            self.0.insert(item.to_string(), have - n);
        }
        true
    }

    pub fn contains_all(&self, other: &ItemBag) -> bool {
        other.iter().all(|(k, n)| self.count(k) >= n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&v| v as u64).sum()
    }

    pub fn merge(&mut self, other: &ItemBag) {
        for (k, n) in other.iter() {
            self.add(k, n);
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u32)> for ItemBag {
    fn from_iter<T: IntoIterator<Item = (S, u32)>>(iter: T) -> Self {
        let mut bag = ItemBag::new();
        for (k, n) in iter {
            bag.add(&k.into(), n);
        }
        bag
    }
}

impl fmt::Display for ItemBag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("empty");
        }
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k} x{v}")).collect();
        f.write_str(&parts.join(", "))
    }
}
