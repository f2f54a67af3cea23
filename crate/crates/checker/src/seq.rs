//! Sequential set specification: the oracle every checker compares against.

use std::collections::BTreeSet;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpTag {
    Insert,
    Remove,
    Contains,
}

impl OpTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "insert" => Some(OpTag::Insert),
            "remove" => Some(OpTag::Remove),
            "contains" => Some(OpTag::Contains),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpTag::Insert => "insert",
            OpTag::Remove => "remove",
            OpTag::Contains => "contains",
        }
    }

    pub fn is_update(self) -> bool {
        !matches!(self, OpTag::Contains)
    }
}

/// Key set with the sequential semantics: insert true iff absent,
/// remove true iff present, contains is membership.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SeqSet {
    keys: BTreeSet<i64>,
}

impl SeqSet {
    pub fn new(init: &BTreeSet<i64>) -> Self {
        SeqSet { keys: init.clone() }
    }

    pub fn apply(&mut self, tag: OpTag, key: i64) -> bool {
        match tag {
            OpTag::Insert => self.keys.insert(key),
            OpTag::Remove => self.keys.remove(&key),
            OpTag::Contains => self.keys.contains(&key),
        }
    }

    /// Undo an `apply` that returned `result`.
    pub fn revert(&mut self, tag: OpTag, key: i64, result: bool) {
        match tag {
            OpTag::Insert if result => {
                self.keys.remove(&key);
            }
            OpTag::Remove if result => {
                self.keys.insert(key);
            }
            _ => {}
        }
    }

    pub fn keys(&self) -> &BTreeSet<i64> {
        &self.keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_semantics() {
        let mut s = SeqSet::new(&BTreeSet::new());
        assert!(s.apply(OpTag::Insert, 5));
        assert!(!s.apply(OpTag::Insert, 5));
        assert!(s.apply(OpTag::Contains, 5));
        assert!(s.apply(OpTag::Remove, 5));
        assert!(!s.apply(OpTag::Remove, 5));
        assert!(!s.apply(OpTag::Contains, 5));
    }

    #[test]
    fn revert_roundtrip() {
        let init: BTreeSet<i64> = [1, 3].into_iter().collect();
        let mut s = SeqSet::new(&init);
        for (tag, key) in [
            (OpTag::Insert, 2),
            (OpTag::Insert, 1),
            (OpTag::Remove, 3),
            (OpTag::Remove, 9),
            (OpTag::Contains, 1),
        ] {
            let before = s.clone();
            let r = s.apply(tag, key);
            s.revert(tag, key, r);
            assert_eq!(s, before, "{tag:?}({key})");
        }
    }
}
