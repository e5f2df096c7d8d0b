use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Per-individual sets of hidden position ids.
///
/// Serializes as a JSON object mapping individual id to a sorted array of
/// position ids. Individuals with nothing hidden are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskPlan {
    hidden: BTreeMap<String, BTreeSet<String>>,
}

impl MaskPlan {
    /// Returns `true` if the cell was not already in the plan.
    pub fn insert(&mut self, individual: impl Into<String>, position: impl Into<String>) -> bool {
        self.hidden
            .entry(individual.into())
            .or_default()
            .insert(position.into())
    }

    pub fn hidden_for(&self, individual: &str) -> Option<&BTreeSet<String>> {
        self.hidden.get(individual)
    }

    pub fn is_hidden(&self, individual: &str, position: &str) -> bool {
        self.hidden
            .get(individual)
            .is_some_and(|set| set.contains(position))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.hidden.iter()
    }

    pub fn individuals(&self) -> impl Iterator<Item = &String> {
        self.hidden.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.values().all(BTreeSet::is_empty)
    }

    /// Number of hidden (individual, position) cells.
    pub fn total_cells(&self) -> usize {
        self.hidden.values().map(BTreeSet::len).sum()
    }

    /// Number of positions hidden for at least one individual.
    pub fn distinct_positions(&self) -> usize {
        self.hidden
            .values()
            .flatten()
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Hidden-cell count per individual.
    pub fn budget(&self) -> BTreeMap<String, usize> {
        self.hidden
            .iter()
            .filter(|(_, set)| !set.is_empty())
            .map(|(id, set)| (id.clone(), set.len()))
            .collect()
    }

    /// Union of two plans.
    pub fn merged(&self, other: &MaskPlan) -> MaskPlan {
        let mut out = self.clone();
        for (id, positions) in other.iter() {
            for pos in positions {
                out.insert(id.clone(), pos.clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut plan: MaskPlan = serde_json::from_str(text)?;
        plan.hidden.retain(|_, set| !set.is_empty());
        Ok(plan)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
