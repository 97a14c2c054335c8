use super::{EvalError, Result};
use crate::ingest::{Label, Segment};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Assignment of every segment to one of `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id per segment, in segment order.
    pub assignments: Vec<usize>,
    pub stratified: bool,
    pub subject_aware: bool,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    /// Control / schizophrenia counts per fold.
    pub fn class_counts(&self, labels: &[Label]) -> Vec<[usize; 2]> {
        let mut counts = vec![[0usize; 2]; self.k];
        for (&f, l) in self.assignments.iter().zip(labels) {
            counts[f][l.index()] += 1;
        }
        counts
    }
}

/// Stratified k-fold assignment.
///
/// Segment-level: each class is shuffled and dealt round-robin, continuing
/// the rotation from one class to the next, so per-fold class counts differ
/// by at most one. Subject-aware: whole subjects are dealt instead, largest
/// first, each to the fold currently holding the fewest segments of its
/// class.
pub fn make_folds(segments: &[Segment], k: usize, seed: u64, subject_aware: bool) -> Result<FoldPlan> {
    let n = segments.len();
    if k < 2 {
        return Err(EvalError::Split(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = rng::derive(seed, 0xF01D);
    let mut assignments = vec![usize::MAX; n];

    if subject_aware {
        let mut subjects: BTreeMap<&str, (Label, Vec<usize>)> = BTreeMap::new();
        for (i, s) in segments.iter().enumerate() {
            let entry = subjects.entry(s.source_subject.as_str()).or_insert((s.label, Vec::new()));
            if entry.0 != s.label {
                return Err(EvalError::Split(format!("subject {} has segments of both classes", s.source_subject)));
            }
            entry.1.push(i);
        }
        if subjects.len() < k {
            return Err(EvalError::Split(format!("{} subjects cannot fill {k} folds", subjects.len())));
        }
        let mut per_class_load = vec![[0usize; 2]; k];
        let mut total_load = vec![0usize; k];
        for label in [Label::Control, Label::Schizophrenia] {
            let mut group: Vec<&Vec<usize>> =
                subjects.values().filter(|(l, _)| *l == label).map(|(_, idx)| idx).collect();
            group.shuffle(&mut rng);
            // stable sort keeps the shuffled order among equal sizes
            group.sort_by_key(|idx| std::cmp::Reverse(idx.len()));
            for idx in group {
                let fold = (0..k)
                    .min_by_key(|&f| (per_class_load[f][label.index()], total_load[f], f))
                    .expect("k >= 2");
                for &i in idx {
                    assignments[i] = fold;
                }
                per_class_load[fold][label.index()] += idx.len();
                total_load[fold] += idx.len();
            }
        }
    } else {
        if n < k {
            return Err(EvalError::Split(format!("{n} segments cannot fill {k} folds")));
        }
        let mut next = 0usize;
        for label in [Label::Control, Label::Schizophrenia] {
            let mut idx: Vec<usize> = (0..n).filter(|&i| segments[i].label == label).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                assignments[i] = next % k;
                next += 1;
            }
        }
    }

    let plan = FoldPlan { k, assignments, stratified: true, subject_aware };
    let labels: Vec<Label> = segments.iter().map(|s| s.label).collect();
    let totals = plan.class_counts(&labels).iter().fold([0usize; 2], |acc, c| [acc[0] + c[0], acc[1] + c[1]]);
    for (f, c) in plan.class_counts(&labels).iter().enumerate() {
        if totals[0] - c[0] == 0 || totals[1] - c[1] == 0 {
            return Err(EvalError::Split(format!("training split of fold {f} lacks a class")));
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn segs(per_subject: &[(usize, Label)]) -> Vec<Segment> {
        let mut out = Vec::new();
        for (s, &(count, label)) in per_subject.iter().enumerate() {
            for j in 0..count {
                out.push(Segment {
                    data: vec![vec![0.0; 2]],
                    label,
                    source_subject: format!("s{s:02}"),
                    segment_index: j,
                });
            }
        }
        out
    }

    fn balanced(n: usize) -> Vec<Segment> {
        let spec: Vec<(usize, Label)> =
            (0..n).map(|i| (1, if i % 2 == 0 { Label::Control } else { Label::Schizophrenia })).collect();
        segs(&spec)
    }

    #[test]
    fn ten_segments_one_per_fold() {
        let plan = make_folds(&balanced(10), 10, 3, false).unwrap();
        let mut sorted = plan.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn subject_aware_keeps_subjects_together() {
        let spec: Vec<(usize, Label)> = (0..28)
            .map(|i| (3 + i % 4, if i < 14 { Label::Control } else { Label::Schizophrenia }))
            .collect();
        let data = segs(&spec);
        let plan = make_folds(&data, 10, 7, true).unwrap();
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (s, &f) in data.iter().zip(&plan.assignments) {
            assert_eq!(*fold_of.entry(&s.source_subject).or_insert(f), f);
        }
        assert!((0..10).all(|f| !plan.test_indices(f).is_empty()));
    }

    #[test]
    fn seeded_repeatability() {
        let data = balanced(40);
        assert_eq!(make_folds(&data, 10, 5, false).unwrap(), make_folds(&data, 10, 5, false).unwrap());
        assert_ne!(make_folds(&data, 10, 5, false).unwrap(), make_folds(&data, 10, 6, false).unwrap());
    }

    #[test]
    fn split_errors() {
        assert!(make_folds(&balanced(4), 10, 0, false).is_err());
        assert!(make_folds(&balanced(10), 1, 0, false).is_err());
        let one_class = segs(&[(5, Label::Control), (5, Label::Control)]);
        assert!(matches!(make_folds(&one_class, 2, 0, false), Err(EvalError::Split(_))));
        // a lone patient leaves one training split without patients
        let lone = segs(&[(5, Label::Control), (1, Label::Schizophrenia)]);
        assert!(make_folds(&lone, 2, 0, false).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(n0 in 5usize..40, n1 in 5usize..40, k in 2usize..6, seed in any::<u64>()) {
            let mut spec = vec![(1, Label::Control); n0];
            spec.extend(vec![(1, Label::Schizophrenia); n1]);
            let data = segs(&spec);
            let plan = make_folds(&data, k, seed, false).unwrap();
            let mut seen = vec![0usize; data.len()];
            for f in 0..k {
                for i in plan.test_indices(f) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let labels: Vec<Label> = data.iter().map(|s| s.label).collect();
            let counts = plan.class_counts(&labels);
            for class in 0..2 {
                let lo = counts.iter().map(|c| c[class]).min().unwrap();
                let hi = counts.iter().map(|c| c[class]).max().unwrap();
                prop_assert!(hi - lo <= 1);
            }
        }
    }
}
