use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

/// Number of positions showing each joint genotype configuration across an
/// ordered family, restricted to positions visible for every member.
///
/// A configuration is a string over `{0,1,2}` with one character per member;
/// queries may use `*` as a wildcard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyConfigCounts {
    members: Vec<String>,
    counts: BTreeMap<String, u64>,
}

impl FamilyConfigCounts {
    /// Builds counts directly from configuration strings.
    pub fn from_counts(members: Vec<String>, counts: BTreeMap<String, u64>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::validation("a family needs at least two members"));
        }
        for config in counts.keys() {
            if config.len() != members.len() || !config.bytes().all(|b| matches!(b, b'0'..=b'2'))
            {
                return Err(Error::validation(format!(
                    "configuration '{config}' does not match {} members",
                    members.len()
                )));
            }
        }
        let counts = counts.into_iter().filter(|(_, n)| *n > 0).collect();
        Ok(FamilyConfigCounts { members, counts })
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Exact configurations with a non-zero count, in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(c, n)| (c.as_str(), *n))
    }

    /// Count for a pattern, `*` matching any genotype.
    pub fn count(&self, pattern: &str) -> u64 {
        if pattern.len() != self.members.len() {
            return 0;
        }
        if !pattern.contains('*') {
            return self.counts.get(pattern).copied().unwrap_or(0);
        }
        self.counts
            .iter()
            .filter(|(c, _)| matches(pattern, c))
            .map(|(_, n)| n)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

pub(crate) fn matches(pattern: &str, config: &str) -> bool {
    pattern
        .bytes()
        .zip(config.bytes())
        .all(|(p, c)| p == b'*' || p == c)
}

/// Configuration counts for `family` (in the given order).
pub fn family_config_counts(matrix: &GenotypeMatrix, family: &[String]) -> Result<FamilyConfigCounts> {
    if family.len() < 2 {
        return Err(Error::validation("a family needs at least two members"));
    }
    let rows = family
        .iter()
        .map(|id| matrix.individual_index(id).map(|i| matrix.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    let mut key = String::with_capacity(family.len());
    'positions: for j in 0..matrix.n_snps() {
        key.clear();
        for row in &rows {
            match row[j].value() {
                Some(v) => key.push(char::from(b'0' + v)),
                None => continue 'positions,
            }
        }
        *counts.entry(key.clone()).or_insert(0u64) += 1;
    }
    Ok(FamilyConfigCounts {
        members: family.to_vec(),
        counts,
    })
}
