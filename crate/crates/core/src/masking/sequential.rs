use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PairViolation, Result};
use crate::genotype::GenotypeMatrix;
use crate::kinship::{kinship, pair_counts};
use crate::pedigree::Pedigree;
use crate::plan::MaskPlan;
use crate::rng::derive_seed;

use super::config::family_config_counts;
use super::select::{select_with_rng, SelectionPolicy};
use super::solver::{solve, HidingProblem, PairConstraint};
use super::{Phi, KINSHIP_TOLERANCE};

/// Slack allowed by the final recheck over the whole masked matrix.
pub const RECHECK_TOLERANCE: f64 = 1e-9;

/// One arrival step of a sequential run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub member: String,
    pub objective: u64,
    pub nodes_explored: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskOutcome {
    pub plan: MaskPlan,
    pub trace: Vec<TraceRow>,
}

impl MaskOutcome {
    pub fn write_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SequentialMasker {
    pub phi: Phi,
    pub policy: SelectionPolicy,
}

impl SequentialMasker {
    pub fn new(phi: Phi) -> Self {
        SequentialMasker {
            phi,
            policy: SelectionPolicy::OverlapFirst,
        }
    }

    pub fn with_policy(mut self, policy: SelectionPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Processes `arrival_order` one member at a time. Each newcomer is
    /// constrained against the earlier arrivals it is related to; earlier
    /// members are never touched again. The finished plan is rechecked
    /// over every related pair.
    pub fn run(
        &self,
        matrix: &GenotypeMatrix,
        pedigree: &Pedigree,
        arrival_order: &[String],
        seed: u64,
    ) -> Result<MaskOutcome> {
        let mut seen = HashSet::new();
        for id in arrival_order {
            matrix.individual_index(id)?;
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("'{id}' arrives twice")));
            }
        }
        if let Some(missing) = pedigree.members().iter().find(|m| !seen.contains(m.as_str())) {
            return Err(Error::validation(format!(
                "arrival order does not cover pedigree member '{missing}'"
            )));
        }

        let mut plan = MaskPlan::default();
        let mut masked = matrix.clone();
        let mut trace = Vec::with_capacity(arrival_order.len());
        for (step, newcomer) in arrival_order.iter().enumerate() {
            let mut family: Vec<String> = arrival_order[..step]
                .iter()
                .filter(|e| pedigree.degree(e, newcomer).is_some())
                .cloned()
                .collect();
            if family.is_empty() {
                trace.push(TraceRow {
                    step,
                    member: newcomer.clone(),
                    objective: 0,
                    nodes_explored: 0,
                });
                continue;
            }
            family.push(newcomer.clone());
            let newest = family.len() - 1;

            let counts = family_config_counts(&masked, &family)?;
            let constraints = (0..newest)
                .map(|a| {
                    Ok(PairConstraint {
                        a,
                        b: newest,
                        phi: self.phi,
                        base: pair_counts(&masked, &family[a], newcomer)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let problem = HidingProblem::with_baselines(&counts, constraints)?;
            let solution = solve(&problem).map_err(|e| match e {
                Error::Infeasible { pairs, .. } => Error::Infeasible {
                    step: Some(step),
                    pairs,
                },
                e => e,
            })?;

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, step as u64));
            let next = select_with_rng(&masked, &family, &solution, &plan, self.policy, &mut rng)?;
            for (id, positions) in next.iter() {
                let i = masked.individual_index(id)?;
                for pos in positions {
                    if !plan.is_hidden(id, pos) {
                        masked.hide(i, masked.position_index(pos)?);
                    }
                }
            }
            plan = next;
            trace.push(TraceRow {
                step,
                member: newcomer.clone(),
                objective: solution.objective(),
                nodes_explored: solution.nodes_explored,
            });
        }

        let violations = recheck(&masked, pedigree, self.phi)?;
        if !violations.is_empty() {
            return Err(Error::Infeasible {
                step: None,
                pairs: violations,
            });
        }
        Ok(MaskOutcome { plan, trace })
    }
}

/// Related pairs whose kinship over `masked` is above `phi` or undefined.
pub fn recheck(masked: &GenotypeMatrix, pedigree: &Pedigree, phi: Phi) -> Result<Vec<PairViolation>> {
    let mut out = Vec::new();
    for (a, b, _) in pedigree.relations() {
        let phi_ab = kinship(&pair_counts(masked, a, b)?).ok();
        if phi_ab.is_none_or(|k| k > phi.value() + RECHECK_TOLERANCE.max(KINSHIP_TOLERANCE)) {
            out.push(PairViolation {
                a: a.to_string(),
                b: b.to_string(),
                residual: phi_ab,
            });
        }
    }
    Ok(out)
}

/// Overlap-first sequential masking with ceiling `phi`.
pub fn sequential_mask(
    matrix: &GenotypeMatrix,
    pedigree: &Pedigree,
    phi: Phi,
    arrival_order: &[String],
    seed: u64,
) -> Result<MaskPlan> {
    SequentialMasker::new(phi)
        .run(matrix, pedigree, arrival_order, seed)
        .map(|o| o.plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, CohortSpec, FamilyShape, MafSampler};

    fn cohort(shape: FamilyShape, seed: u64) -> (GenotypeMatrix, Pedigree) {
        generate_cohort(&CohortSpec {
            n_unrelated: 4,
            family_shape: shape,
            m_snps: 500,
            maf_sampler: MafSampler::default(),
            seed,
        })
        .unwrap()
    }

    fn order(p: &Pedigree) -> Vec<String> {
        p.members().to_vec()
    }

    #[test]
    fn single_member_gives_empty_plan() {
        let (m, _) = cohort(FamilyShape::Trio, 1);
        let mut p = Pedigree::new();
        p.add_member("son");
        let plan = sequential_mask(&m, &p, Phi::DEFAULT, &["son".to_string()], 0).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn trio_ends_below_ceiling() {
        for seed in 0..5 {
            let (m, p) = cohort(FamilyShape::Trio, seed);
            let outcome = SequentialMasker::new(Phi::DEFAULT).run(&m, &p, &order(&p), seed).unwrap();
            let masked = m.apply_mask(&outcome.plan).unwrap();
            for (a, b, _) in p.relations() {
                let k = kinship(&pair_counts(&masked, a, b).unwrap()).unwrap();
                assert!(k <= 0.1 + 1e-9, "{a}-{b}: {k}");
            }
            // the first arrival is never touched, nor are unrelated individuals
            assert!(outcome.plan.hidden_for("son").is_none());
            assert!(outcome.plan.individuals().all(|id| p.contains(id)));
            assert_eq!(outcome.trace.len(), 3);
            assert_eq!(outcome.trace[0].objective, 0);
            let total: u64 = outcome.trace.iter().map(|r| r.objective).sum();
            assert_eq!(total as usize, outcome.plan.total_cells());
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (m, p) = cohort(FamilyShape::TrioPlusAunt, 3);
        let a = sequential_mask(&m, &p, Phi::DEFAULT, &order(&p), 9).unwrap();
        let b = sequential_mask(&m, &p, Phi::DEFAULT, &order(&p), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hidden_cells_are_heterozygous() {
        let (m, p) = cohort(FamilyShape::TrioPlusAunt, 4);
        let plan = sequential_mask(&m, &p, Phi::DEFAULT, &order(&p), 1).unwrap();
        for (id, positions) in plan.iter() {
            for pos in positions {
                assert!(m.cell(id, pos).unwrap().is_het());
            }
        }
    }

    #[test]
    fn incomplete_arrival_order_is_rejected() {
        let (m, p) = cohort(FamilyShape::Trio, 1);
        let err = sequential_mask(&m, &p, Phi::DEFAULT, &["son".into(), "father".into()], 0);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn trace_csv_header() {
        let outcome = MaskOutcome {
            plan: MaskPlan::default(),
            trace: vec![TraceRow {
                step: 1,
                member: "father".into(),
                objective: 4,
                nodes_explored: 17,
            }],
        };
        let mut buf = Vec::new();
        outcome.write_trace(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,member,objective,nodes_explored\n1,father,4,17\n"
        );
    }
}
