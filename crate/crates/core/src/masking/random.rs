use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::pedigree::Pedigree;
use crate::plan::MaskPlan;

/// Hides uniformly random visible positions from each individual in
/// `budget`, as many as that individual has hidden there.
pub fn random_mask(matrix: &GenotypeMatrix, pedigree: &Pedigree, budget: &MaskPlan, seed: u64) -> Result<MaskPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = MaskPlan::default();
    for (id, n) in budget.budget() {
        if !pedigree.contains(&id) {
            return Err(Error::validation(format!("'{id}' is not a pedigree member")));
        }
        let row = matrix.row(matrix.individual_index(&id)?);
        let visible: Vec<usize> = (0..row.len()).filter(|&j| !row[j].is_hidden()).collect();
        if n > visible.len() {
            return Err(Error::validation(format!(
                "budget {n} for '{id}' exceeds its {} visible positions",
                visible.len()
            )));
        }
        let mut chosen: Vec<usize> = sample(&mut rng, visible.len(), n).into_iter().map(|k| visible[k]).collect();
        chosen.sort_unstable();
        for j in chosen {
            plan.insert(id.clone(), matrix.snps()[j].id.clone());
        }
    }
    Ok(plan)
}
