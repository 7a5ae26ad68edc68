use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Subjects present in every source, sorted.
pub fn intersect_cohort(sources: &[(&str, &[String])]) -> Result<Vec<String>> {
    let Some(((_, first), rest)) = sources.split_first() else {
        return Err(Error::Usage("no sources to intersect".into()));
    };
    let mut common: BTreeSet<&String> = first.iter().collect();
    for (_, ids) in rest {
        let set: BTreeSet<&String> = ids.iter().collect();
        common.retain(|id| set.contains(id));
    }
    if common.is_empty() {
        let sizes: Vec<String> = sources.iter().map(|(n, ids)| format!("{n}: {}", ids.len())).collect();
        return Err(Error::Data(format!(
            "no subject appears in every input ({}); check the subject ids, or use synthetic mode",
            sizes.join(", ")
        )));
    }
    Ok(common.into_iter().cloned().collect())
}

/// Stratified train/test split of sample indices. Each class contributes
/// `round(n_c * test_fraction)` test samples, clamped so both sides keep at
/// least one. Returns `(train, test)`, each sorted.
pub fn split_stratified(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Usage(format!("test fraction {test_fraction} must lie strictly between 0 and 1")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        match members.len() {
            0 => continue,
            1 => {
                return Err(Error::Data(format!(
                    "class {c} has a single sample; a stratified split needs at least two"
                )))
            }
            n => {
                members.shuffle(&mut rng);
                let k = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
                test.extend_from_slice(&members[..k]);
                train.extend_from_slice(&members[k..]);
            }
        }
    }
    if train.is_empty() {
        return Err(Error::Data("no samples to split".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
