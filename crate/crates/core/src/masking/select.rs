use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::plan::MaskPlan;

use super::solver::HidingSolution;

/// How concrete positions are picked for each configuration's removal count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// positions already hidden for the most other individuals first
    #[default]
    OverlapFirst,
    /// uniformly random among matching positions
    Random,
}

/// Extends `prior_plan` with positions hidden from the newest (last)
/// `family` member, `removals[c]` of them for each configuration `c`.
///
/// A position matches `c` when every family member's cell is visible (in
/// `matrix` and under `prior_plan`) and the joint genotypes spell `c`.
pub fn select_positions(
    matrix: &GenotypeMatrix,
    family: &[String],
    solution: &HidingSolution,
    prior_plan: &MaskPlan,
    policy: SelectionPolicy,
    seed: u64,
) -> Result<MaskPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    select_with_rng(matrix, family, solution, prior_plan, policy, &mut rng)
}

pub(crate) fn select_with_rng<R: Rng>(
    matrix: &GenotypeMatrix,
    family: &[String],
    solution: &HidingSolution,
    prior_plan: &MaskPlan,
    policy: SelectionPolicy,
    rng: &mut R,
) -> Result<MaskPlan> {
    let mut plan = prior_plan.clone();
    if solution.is_zero() {
        return Ok(plan);
    }
    let Some(newest) = family.last() else {
        return Err(Error::validation("empty family"));
    };
    let rows = family
        .iter()
        .map(|id| matrix.individual_index(id).map(|i| matrix.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let positions = matrix.snps();

    let config_at = |j: usize| -> Option<String> {
        let mut key = String::with_capacity(family.len());
        for (row, id) in rows.iter().zip(family) {
            let v = row[j].value()?;
            if prior_plan.is_hidden(id, &positions[j].id) {
                return None;
            }
            key.push(char::from(b'0' + v));
        }
        Some(key)
    };
    let mut by_config: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for j in 0..positions.len() {
        if let Some(c) = config_at(j) {
            if solution.removals.get(&c).is_some_and(|&x| x > 0) {
                by_config.entry(c).or_default().push(j);
            }
        }
    }

    for (config, &x) in &solution.removals {
        if x == 0 {
            continue;
        }
        let mut candidates = by_config.remove(config).unwrap_or_default();
        if (candidates.len() as u64) < x {
            return Err(Error::validation(format!(
                "solution hides {x} positions of configuration {config} but only {} exist",
                candidates.len()
            )));
        }
        candidates.shuffle(rng);
        if policy == SelectionPolicy::OverlapFirst {
            let overlap = |j: usize| {
                prior_plan
                    .iter()
                    .filter(|(id, hidden)| id.as_str() != newest && hidden.contains(&positions[j].id))
                    .count()
            };
            // stable: shuffled order breaks ties
            candidates.sort_by_key(|&j| std::cmp::Reverse(overlap(j)));
        }
        for &j in candidates.iter().take(x as usize) {
            plan.insert(newest, &positions[j].id);
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{Genotype, SnpMeta};

    /// a and b heterozygous at every position; `other` carries prior hides
    fn matrix(m: usize) -> GenotypeMatrix {
        GenotypeMatrix::new(
            vec!["a".into(), "b".into(), "other".into()],
            vec![],
            (0..m).map(|j| SnpMeta::new(format!("p{j}"), 0.3).unwrap()).collect(),
            vec![vec![Genotype::One; m]; 3],
        )
        .unwrap()
    }

    fn family() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn solution(x: u64) -> HidingSolution {
        HidingSolution {
            removals: [("11".to_string(), x)].into_iter().collect(),
            nodes_explored: 0,
        }
    }

    fn prior(hidden: &[&str]) -> MaskPlan {
        let mut p = MaskPlan::default();
        for h in hidden {
            p.insert("other", *h);
        }
        p
    }

    #[test]
    fn zero_solution_keeps_plan() {
        let p = prior(&["p1"]);
        let out = select_positions(&matrix(6), &family(), &solution(0), &p, SelectionPolicy::OverlapFirst, 1).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn overlap_positions_come_first() {
        let p = prior(&["p1", "p3", "p4"]);
        for seed in 0..20 {
            let out = select_positions(&matrix(10), &family(), &solution(2), &p, SelectionPolicy::OverlapFirst, seed).unwrap();
            let chosen = out.hidden_for("b").unwrap();
            assert_eq!(chosen.len(), 2);
            assert!(chosen.iter().all(|c| ["p1", "p3", "p4"].contains(&c.as_str())));
        }
    }

    #[test]
    fn remainder_is_seeded_random() {
        let p = prior(&["p2"]);
        let pick = |seed| {
            select_positions(&matrix(30), &family(), &solution(3), &p, SelectionPolicy::OverlapFirst, seed)
                .unwrap()
                .hidden_for("b")
                .unwrap()
                .clone()
        };
        let a = pick(4);
        assert_eq!(a.len(), 3);
        assert!(a.contains("p2"));
        assert_eq!(a, pick(4));
        assert!((5..15).any(|s| pick(s) != a));
    }

    #[test]
    fn too_few_positions_is_an_error() {
        let err = select_positions(&matrix(2), &family(), &solution(3), &MaskPlan::default(), SelectionPolicy::Random, 0);
        assert!(err.is_err());
    }

    #[test]
    fn hidden_family_positions_are_not_candidates() {
        let mut p = MaskPlan::default();
        p.insert("a", "p0");
        let out = select_positions(&matrix(2), &family(), &solution(1), &p, SelectionPolicy::Random, 0).unwrap();
        assert!(out.is_hidden("b", "p1"));
        assert!(!out.is_hidden("b", "p0"));
    }
}
