use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::SplitTag;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Seeded train/test split stratified by `(label, group)` cells.
///
/// The overall train count is `round(fraction * labeled)` clamped to leave at
/// least one test node. Every cell with two or more members gets at least one
/// training node, as does every class; leftover slots go to the cells with
/// the largest rounding remainders. Unlabeled nodes are tagged [`SplitTag::Unlabeled`].
pub fn stratified_split(
    labels: &[Option<usize>],
    sensitive: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<SplitTag>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if labels.len() != sensitive.len() {
        return Err(Error::Schema(format!(
            "{} labels but {} sensitive values",
            labels.len(),
            sensitive.len()
        )));
    }
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (node, (label, &group)) in labels.iter().zip(sensitive).enumerate() {
        if let Some(class) = label {
            cells.entry((*class, group)).or_default().push(node);
        }
    }
    let labeled: usize = cells.values().map(Vec::len).sum();
    if labeled == 0 {
        return Err(Error::Split("no labeled nodes to split".into()));
    }
    let target = if labeled >= 2 {
        ((train_fraction * labeled as f64).round() as usize).clamp(1, labeled - 1)
    } else {
        1
    };

    struct Alloc {
        quota: f64,
        min: usize,
        size: usize,
        take: usize,
    }
    let mut alloc: Vec<Alloc> = cells
        .values()
        .map(|members| {
            let size = members.len();
            let quota = train_fraction * size as f64;
            let min = usize::from(size >= 2);
            Alloc {
                quota,
                min,
                size,
                take: (quota.floor() as usize).clamp(min, size),
            }
        })
        .collect();
    // Every class gets a training node, taken from its largest-remainder cell.
    let keys: Vec<(usize, usize)> = cells.keys().copied().collect();
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = keys.iter().map(|k| k.0).collect();
        c.dedup();
        c
    };
    for class in classes {
        let in_class = || keys.iter().enumerate().filter(move |(_, k)| k.0 == class);
        if in_class().all(|(i, _)| alloc[i].take == 0) {
            let (best, _) = in_class()
                .max_by(|(i, _), (j, _)| {
                    let (a, b) = (&alloc[*i], &alloc[*j]);
                    a.quota.total_cmp(&b.quota).then(j.cmp(i))
                })
                .expect("class has at least one cell");
            alloc[best].take = 1;
            alloc[best].min = 1;
        }
    }
    let mut total: usize = alloc.iter().map(|a| a.take).sum();
    while total < target {
        let Some(best) = alloc
            .iter()
            .enumerate()
            .filter(|(_, a)| a.take < a.size)
            .max_by(|(i, a), (j, b)| {
                (a.quota - a.take as f64)
                    .total_cmp(&(b.quota - b.take as f64))
                    .then(j.cmp(i))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        alloc[best].take += 1;
        total += 1;
    }
    while total > target {
        let Some(best) = alloc
            .iter()
            .enumerate()
            .filter(|(_, a)| a.take > a.min)
            .max_by(|(i, a), (j, b)| {
                (a.take as f64 - a.quota)
                    .total_cmp(&(b.take as f64 - b.quota))
                    .then(j.cmp(i))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        alloc[best].take -= 1;
        total -= 1;
    }

    let mut rng = seed::stream_rng(seed, stream::SPLIT);
    let mut tags = vec![SplitTag::Unlabeled; labels.len()];
    for (members, a) in cells.values().zip(&alloc) {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        for (k, &node) in order.iter().enumerate() {
            tags[node] = if k < a.take {
                SplitTag::Train
            } else {
                SplitTag::Test
            };
        }
    }

    let num_classes = cells.keys().map(|(c, _)| c + 1).max().unwrap_or(0);
    let mut covered = vec![false; num_classes];
    let mut present = vec![false; num_classes];
    for ((class, _), members) in &cells {
        present[*class] = true;
        if members.iter().any(|&n| tags[n] == SplitTag::Train) {
            covered[*class] = true;
        }
    }
    if let Some(c) = (0..num_classes).find(|&c| present[c] && !covered[c]) {
        return Err(Error::Split(format!("class {c} has no training nodes")));
    }
    Ok(tags)
}
