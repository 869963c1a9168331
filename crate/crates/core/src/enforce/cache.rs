use std::collections::HashMap;

use indexmap::IndexSet;

use super::rule::EnforcementRule;
use crate::mac::MacAddr;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("rule cache is full ({0} entries) and no absent device can be evicted")]
    CapacityExceeded(usize),
}

/// Hash table from device MAC to its single enforcement rule.
///
/// Devices reported absent become eviction candidates, oldest first, once the
/// capacity bound is reached.
#[derive(Debug, Clone, Default)]
pub struct RuleCache {
    rules: HashMap<MacAddr, EnforcementRule>,
    capacity: Option<usize>,
    absent: IndexSet<MacAddr>,
}

impl RuleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_bound(capacity: usize) -> Self {
        RuleCache { rules: HashMap::with_capacity(capacity), capacity: Some(capacity), absent: IndexSet::new() }
    }

    pub fn lookup(&self, mac: &MacAddr) -> Option<&EnforcementRule> {
        self.rules.get(mac)
    }

    /// Installs `rule` for each of its source MACs, replacing any previous rule.
    pub fn update(&mut self, rule: EnforcementRule) -> Result<(), CacheError> {
        let new_macs = rule.source_mac.iter().filter(|m| !self.rules.contains_key(m)).count();
        if let Some(cap) = self.capacity {
            let free = cap.saturating_sub(self.rules.len());
            let evictable = self.absent.iter().filter(|m| !rule.source_mac.contains(m)).count();
            if new_macs > free + evictable {
                return Err(CacheError::CapacityExceeded(cap));
            }
            let mut need = new_macs.saturating_sub(free);
            while need > 0 {
                let victim = *self
                    .absent
                    .iter()
                    .find(|m| !rule.source_mac.contains(m))
                    .expect("counted above");
                self.absent.shift_remove(&victim);
                self.rules.remove(&victim);
                need -= 1;
            }
        }
        for mac in &rule.source_mac {
            self.absent.shift_remove(mac);
            self.rules.insert(*mac, rule.clone());
        }
        Ok(())
    }

    pub fn remove(&mut self, mac: &MacAddr) -> Option<EnforcementRule> {
        self.absent.shift_remove(mac);
        self.rules.remove(mac)
    }

    /// Marks a cached device as gone from the network.
    pub fn mark_absent(&mut self, mac: MacAddr) {
        if self.rules.contains_key(&mac) {
            self.absent.insert(mac);
        }
    }

    pub fn mark_present(&mut self, mac: &MacAddr) {
        self.absent.shift_remove(mac);
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enforce::{make_rule, IsolationLevel};

    fn mac(i: u8) -> MacAddr {
        MacAddr([2, 0, 0, 0, 0, i])
    }

    fn rule(i: u8, level: IsolationLevel) -> EnforcementRule {
        make_rule(mac(i), level, vec![], i as u64, 0).unwrap()
    }

    #[test]
    fn lookup_and_replace() {
        let mut c = RuleCache::new();
        assert!(c.lookup(&mac(1)).is_none());
        c.update(rule(1, IsolationLevel::Strict)).unwrap();
        assert_eq!(c.lookup(&mac(1)).unwrap().level, IsolationLevel::Strict);
        c.update(rule(1, IsolationLevel::Trusted)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.lookup(&mac(1)).unwrap().level, IsolationLevel::Trusted);
    }

    #[test]
    fn capacity_and_eviction() {
        let mut c = RuleCache::with_capacity_bound(2);
        c.update(rule(1, IsolationLevel::Strict)).unwrap();
        c.update(rule(2, IsolationLevel::Strict)).unwrap();
        assert_eq!(c.update(rule(3, IsolationLevel::Strict)), Err(CacheError::CapacityExceeded(2)));
        // Replacing an existing entry needs no room.
        c.update(rule(2, IsolationLevel::Trusted)).unwrap();
        c.mark_absent(mac(1));
        c.update(rule(3, IsolationLevel::Strict)).unwrap();
        assert!(c.lookup(&mac(1)).is_none());
        assert!(c.lookup(&mac(3)).is_some());
        assert_eq!(c.len(), 2);
    }
}
