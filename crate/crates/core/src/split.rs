//! Deterministic stratified train/test partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::io::ClassLabel;
use crate::rng::{self, tag};

/// Strip an augmentation suffix (`<id>.aug<k>`) so variants stay with their source clip.
pub fn source_id(id: &str) -> &str {
    match id.rfind(".aug") {
        Some(pos) if id[pos + 4..].chars().all(|c| c.is_ascii_digit()) && pos + 4 < id.len() => &id[..pos],
        _ => id,
    }
}

/// Split items into `(train, test)` index lists. Items sharing a group key
/// land on the same side; each class contributes `round(frac * groups)`
/// groups to the test side, at least one whenever it has two or more groups.
pub fn stratified_split(labels: &[ClassLabel], groups: &[&str], test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    debug_assert_eq!(labels.len(), groups.len());
    let mut by_class: BTreeMap<ClassLabel, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, (l, g)) in labels.iter().zip(groups).enumerate() {
        by_class.entry(*l).or_default().entry(*g).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, members) in by_class {
        let mut keys: Vec<&str> = members.keys().copied().collect();
        keys.shuffle(&mut rng::stream(seed, &[tag::SPLIT, label.index() as u64]));
        let n = keys.len();
        let n_test = if n < 2 {
            0
        } else {
            ((test_frac * n as f64).round() as usize).clamp(1, n - 1)
        };
        for (k, key) in keys.iter().enumerate() {
            let side = if k < n_test { &mut test } else { &mut train };
            side.extend_from_slice(&members[key]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_ids() {
        assert_eq!(source_id("Music/m_001.aug3"), "Music/m_001");
        assert_eq!(source_id("Music/m_001"), "Music/m_001");
        assert_eq!(source_id("x.augment"), "x.augment");
        assert_eq!(source_id("x.aug"), "x.aug");
    }

    #[test]
    fn groups_never_straddle() {
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (c, l) in ClassLabel::ALL.iter().enumerate() {
            for k in 0..10 {
                for v in 0..3 {
                    labels.push(*l);
                    ids.push(format!("{c}_{k}.aug{v}"));
                }
            }
        }
        let groups: Vec<&str> = ids.iter().map(|s| source_id(s)).collect();
        let (train, test) = stratified_split(&labels, &groups, 0.2, 5);
        assert_eq!(train.len() + test.len(), labels.len());
        assert_eq!(test.len(), 3 * 2 * 3);
        for t in &test {
            assert!(train.iter().all(|r| groups[*r] != groups[*t]));
        }
        assert_eq!((train.clone(), test.clone()), stratified_split(&labels, &groups, 0.2, 5));
        assert_ne!(test, stratified_split(&labels, &groups, 0.2, 6).1);
    }
}
