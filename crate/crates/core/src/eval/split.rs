//! Participant-level holdout and grouped k-fold plans.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::Skill;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub skill: Skill,
}

impl Participant {
    pub fn new(id: impl Into<String>, skill: Skill) -> Self {
        Self {
            id: id.into(),
            skill,
        }
    }
}

/// Participant ids on each side of the holdout split, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train_val: Vec<String>,
    pub test: Vec<String>,
}

/// Splits participants into train/validation and test sets, stratified by skill.
///
/// The test side gets `round(test_frac * n)` participants, clamped so both sides
/// are non-empty. When the test side has room for every skill class, each class
/// with at least two members contributes one; the rest is shared out by largest
/// remainder.
pub fn split_holdout(
    participants: &[Participant],
    test_frac: f64,
    seed: u64,
) -> Result<HoldoutSplit, EvalError> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(EvalError::BadParam(format!("test_frac {test_frac} outside (0, 1)")));
    }
    let mut unique: Vec<&Participant> = participants.iter().collect();
    unique.sort();
    unique.dedup_by(|a, b| a.id == b.id);
    let n = unique.len();
    if n < 2 {
        return Err(EvalError::TooFewParticipants { found: n, needed: 2 });
    }
    let n_test = ((test_frac * n as f64).round() as usize).clamp(1, n - 1);

    let mut groups: BTreeMap<Skill, Vec<String>> = BTreeMap::new();
    for p in &unique {
        groups.entry(p.skill).or_default().push(p.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ids in groups.values_mut() {
        ids.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = allocate(&sizes, n_test, &mut rng);

    let mut split = HoldoutSplit {
        train_val: Vec::new(),
        test: Vec::new(),
    };
    for (ids, q) in groups.into_values().zip(quotas) {
        let (test, train) = ids.split_at(q);
        split.test.extend_from_slice(test);
        split.train_val.extend_from_slice(train);
    }
    split.test.sort();
    split.train_val.sort();
    Ok(split)
}

fn allocate(sizes: &[usize], n_test: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    // Leave at least one member of every class on the training side when possible.
    let cap: Vec<usize> = sizes.iter().map(|s| s.saturating_sub(1)).collect();
    let mut eligible: Vec<usize> = (0..sizes.len()).filter(|&g| cap[g] >= 1).collect();
    let mut quota = vec![0usize; sizes.len()];
    if n_test < eligible.len() {
        eligible.shuffle(rng);
        for &g in eligible.iter().take(n_test) {
            quota[g] = 1;
        }
        return quota;
    }
    for &g in &eligible {
        quota[g] = 1;
    }
    let need = |g: usize, q: &[usize]| n_test as f64 * sizes[g] as f64 / n as f64 - q[g] as f64;
    while quota.iter().sum::<usize>() < n_test {
        let pick = |limit: &dyn Fn(usize) -> usize, q: &[usize]| {
            (0..sizes.len())
                .filter(|&g| q[g] < limit(g))
                .max_by(|&a, &b| need(a, q).total_cmp(&need(b, q)).then(b.cmp(&a)))
        };
        let g = pick(&|g| cap[g], &quota)
            .or_else(|| pick(&|g| sizes[g], &quota))
            .expect("n_test < n");
        quota[g] += 1;
    }
    quota
}

/// `k` disjoint participant folds covering everyone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Ids held out in fold `i`.
    pub fn eval_ids(&self, i: usize) -> &[String] {
        &self.folds[i]
    }

    /// Ids trained on in fold `i`, sorted.
    pub fn train_ids(&self, i: usize) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        ids.sort();
        ids
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

/// Shuffles participants under `seed` and deals them round-robin into `k` folds.
pub fn grouped_kfold(participants: &[String], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let mut ids: Vec<String> = participants.to_vec();
    ids.sort();
    ids.dedup();
    if k < 2 || k > ids.len() {
        return Err(EvalError::BadK {
            k,
            participants: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(beginners: usize, intermediates: usize) -> Vec<Participant> {
        (0..beginners)
            .map(|i| Participant::new(format!("B{i:02}"), Skill::Beginner))
            .chain((0..intermediates).map(|i| Participant::new(format!("I{i:02}"), Skill::Intermediate)))
            .collect()
    }

    #[test]
    fn twelve_participants_eighty_twenty() {
        let split = split_holdout(&roster(6, 6), 0.2, 42).unwrap();
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.train_val.len(), 10);
        // one per skill
        assert_eq!(split.test.iter().filter(|id| id.starts_with('B')).count(), 1);
    }

    #[test]
    fn minimum_split() {
        let split = split_holdout(&roster(1, 1), 0.2, 7).unwrap();
        assert_eq!((split.train_val.len(), split.test.len()), (1, 1));
    }

    #[test]
    fn too_few_participants() {
        assert!(matches!(
            split_holdout(&roster(1, 0), 0.2, 1),
            Err(EvalError::TooFewParticipants { found: 1, .. })
        ));
        assert!(split_holdout(&roster(3, 3), 1.0, 1).is_err());
    }

    #[test]
    fn holdout_is_seeded() {
        let a = split_holdout(&roster(7, 5), 0.25, 3).unwrap();
        let b = split_holdout(&roster(7, 5), 0.25, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test.len(), 3);
        for id in &a.test {
            assert!(!a.train_val.contains(id));
        }
    }

    #[test]
    fn unbalanced_roster_keeps_each_class_in_test() {
        let split = split_holdout(&roster(9, 2), 0.2, 11).unwrap();
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.test.iter().filter(|id| id.starts_with('I')).count(), 1);
    }

    #[test]
    fn kfold_sizes() {
        let ids: Vec<String> = (0..12).map(|i| format!("P{i:02}")).collect();
        let plan = grouped_kfold(&ids, 5, 42).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![3, 3, 2, 2, 2]);

        let plan = grouped_kfold(&ids[..4], 4, 1).unwrap();
        assert_eq!(plan.sizes(), vec![1; 4]);

        assert!(matches!(
            grouped_kfold(&ids[..4], 5, 1),
            Err(EvalError::BadK { k: 5, participants: 4 })
        ));
    }

    #[test]
    fn train_ids_exclude_eval_fold() {
        let ids: Vec<String> = (0..7).map(|i| format!("P{i}")).collect();
        let plan = grouped_kfold(&ids, 3, 9).unwrap();
        for i in 0..3 {
            let train = plan.train_ids(i);
            assert_eq!(train.len() + plan.eval_ids(i).len(), 7);
            assert!(plan.eval_ids(i).iter().all(|id| !train.contains(id)));
        }
    }
}
