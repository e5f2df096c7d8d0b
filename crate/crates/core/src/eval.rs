//! Privacy/utility sweeps over synthetic cohorts.
//!
//! Each trial draws a cohort, builds one mask plan per mechanism, releases
//! the post-masking kinship of the query participants, answers one noisy
//! count per position and ε, and scores the adversary and the release.
//! Noise draws are shared across mechanisms within a (trial, ε) cell so
//! mechanism comparisons are paired.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{correctness, AdversaryKnowledge, AdversaryMode, AttackContext, NoiseModel};
use crate::cohort::{generate_cohort, CohortSpec, FamilyShape, MafSampler, AUNT, FATHER, MOTHER, SON};
use crate::dp::{answer_query, dependence_multiplier, Mechanism, QueryAnswer, QuerySpec};
use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::kinship::kinship_matrix;
use crate::masking::{random_mask, Phi, SequentialMasker};
use crate::pedigree::Pedigree;
use crate::plan::MaskPlan;
use crate::rng::derive_seed;

/// Relatives of the target included in every query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilySet {
    MT,
    FT,
    FMT,
    FMTA,
    #[serde(rename = "custom")]
    Custom(Vec<String>),
}

impl FamilySet {
    pub fn relatives(&self) -> Vec<String> {
        let ids: &[&str] = match self {
            FamilySet::MT => &[MOTHER],
            FamilySet::FT => &[FATHER],
            FamilySet::FMT => &[FATHER, MOTHER],
            FamilySet::FMTA => &[FATHER, MOTHER, AUNT],
            FamilySet::Custom(ids) => return ids.clone(),
        };
        ids.iter().map(|s| s.to_string()).collect()
    }

    pub fn label(&self) -> String {
        match self {
            FamilySet::MT => "MT".into(),
            FamilySet::FT => "FT".into(),
            FamilySet::FMT => "FMT".into(),
            FamilySet::FMTA => "FMTA".into(),
            FamilySet::Custom(ids) => format!("custom:{}", ids.join(";")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMechanism {
    NoHiding,
    RandomHiding,
    SelectiveHiding,
    DependentSensitivity,
}

impl EvalMechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMechanism::NoHiding => "no_hiding",
            EvalMechanism::RandomHiding => "random_hiding",
            EvalMechanism::SelectiveHiding => "selective_hiding",
            EvalMechanism::DependentSensitivity => "dependent_sensitivity",
        }
    }

    fn query_mechanism(self) -> Mechanism {
        match self {
            EvalMechanism::DependentSensitivity => Mechanism::DependentSensitivity,
            _ => Mechanism::StandardLpm,
        }
    }
}

pub const ALL_MECHANISMS: [EvalMechanism; 4] = [
    EvalMechanism::NoHiding,
    EvalMechanism::RandomHiding,
    EvalMechanism::SelectiveHiding,
    EvalMechanism::DependentSensitivity,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
/// Missing fields take their [`Default`] values.
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cohort: CohortSpec,
    pub family_set: FamilySet,
    pub u_nonrelatives: usize,
    pub epsilon_grid: Vec<f64>,
    pub mechanisms: Vec<EvalMechanism>,
    pub adversary_modes: Vec<AdversaryMode>,
    /// queried positions: the first `m_snps` of the cohort
    pub m_snps: usize,
    pub trials: usize,
    pub phi: Phi,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: CohortSpec {
                n_unrelated: 60,
                family_shape: FamilyShape::TrioPlusAunt,
                m_snps: 500,
                maf_sampler: MafSampler::default(),
                seed: 1,
            },
            family_set: FamilySet::FMT,
            u_nonrelatives: 5,
            epsilon_grid: vec![0.1, 0.5, 1.0, 2.5, 5.0],
            mechanisms: ALL_MECHANISMS.to_vec(),
            adversary_modes: vec![AdversaryMode::WithDependency, AdversaryMode::WithoutDependency],
            m_snps: 100,
            trials: 50,
            phi: Phi::DEFAULT,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        let fail = |m: String| Err(Error::Validation(m));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.epsilon_grid.is_empty() || self.mechanisms.is_empty() || self.adversary_modes.is_empty() {
            return fail("epsilon grid, mechanisms and adversary modes must be non-empty".into());
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return fail(format!("epsilon {e} must be positive"));
        }
        if self.m_snps == 0 || self.m_snps > self.cohort.m_snps {
            return fail(format!(
                "m_snps {} must be in 1..={} (cohort size)",
                self.m_snps, self.cohort.m_snps
            ));
        }
        if self.u_nonrelatives > self.cohort.n_unrelated {
            return fail(format!(
                "u_nonrelatives {} exceeds the {} unrelated individuals",
                self.u_nonrelatives, self.cohort.n_unrelated
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mechanism: EvalMechanism,
    pub adversary_mode: AdversaryMode,
    pub epsilon: f64,
    pub family_set: String,
    pub u: usize,
    pub trial: usize,
    pub correctness: f64,
    pub utility_loss: f64,
    pub hidden_cells: usize,
    /// false when masking was infeasible; the row then reflects unmasked data
    pub feasible: bool,
}

/// Mean absolute difference between true and released allele frequencies,
/// `|true/2q − noisy/2q|` averaged over positions.
pub fn utility_loss(true_sums: &[u64], answers: &[QueryAnswer]) -> Result<f64> {
    if true_sums.is_empty() || true_sums.len() != answers.len() {
        return Err(Error::validation(format!(
            "{} true sums for {} answers",
            true_sums.len(),
            answers.len()
        )));
    }
    let mut total = 0.0;
    for (t, a) in true_sums.iter().zip(answers) {
        if a.q == 0 {
            return Err(Error::validation(format!("answer at {} has q = 0", a.position)));
        }
        let two_q = 2.0 * a.q as f64;
        total += (*t as f64 / two_q - a.noisy_sum / two_q).abs();
    }
    Ok(total / true_sums.len() as f64)
}

struct Prepared {
    mechanism: EvalMechanism,
    plan: MaskPlan,
    feasible: bool,
    masked: GenotypeMatrix,
    /// per adversary mode, per queried position
    attacks: Vec<Vec<crate::adversary::PreparedPosition>>,
}

fn trial_cohort(config: &ExperimentConfig, trial: usize) -> Result<(GenotypeMatrix, Pedigree)> {
    let mut spec = config.cohort.clone();
    spec.seed = derive_seed(config.cohort.seed, trial as u64);
    generate_cohort(&spec)
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<MetricsRow>> {
    let trial_seed = derive_seed(config.seed, trial as u64);
    let (matrix, pedigree) = trial_cohort(config, trial)?;
    let target = SON.to_string();
    let relatives = config.family_set.relatives();
    for r in &relatives {
        if !pedigree.contains(r) {
            return Err(Error::validation(format!("family set member '{r}' is not in the cohort's family")));
        }
    }

    let unrelated: Vec<&String> = matrix.individuals().iter().filter(|id| !pedigree.contains(id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 1));
    let mut picked = sample(&mut rng, unrelated.len(), config.u_nonrelatives).into_vec();
    picked.sort_unstable();
    let mut participants = vec![target.clone()];
    participants.extend(relatives.iter().cloned());
    participants.extend(picked.into_iter().map(|k| unrelated[k].clone()));

    let positions: Vec<String> = matrix.snps()[..config.m_snps].iter().map(|s| s.id.clone()).collect();
    let exact = |m: &GenotypeMatrix| -> Result<Vec<u64>> {
        positions
            .iter()
            .map(|pos| {
                crate::dp::true_count(
                    m,
                    &QuerySpec {
                        position: pos.clone(),
                        participants: participants.clone(),
                        epsilon: 1.0,
                        mechanism: Mechanism::None,
                    },
                )
            })
            .collect()
    };
    let true_sums = exact(&matrix)?;
    let target_index = matrix.individual_index(&target)?;
    let truths: Vec<u8> = (0..config.m_snps)
        .map(|j| matrix.get(target_index, j).value().expect("generated cells are visible"))
        .collect();

    let arrival = pedigree.members().to_vec();
    let needs_selective = config
        .mechanisms
        .iter()
        .any(|m| matches!(m, EvalMechanism::SelectiveHiding | EvalMechanism::RandomHiding));
    let selective = if needs_selective {
        match SequentialMasker::new(config.phi).run(&matrix, &pedigree, &arrival, derive_seed(trial_seed, 2)) {
            Ok(outcome) => Some(outcome.plan),
            Err(e) if e.is_infeasible() => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let maf_table: HashMap<String, f64> = matrix.snps().iter().map(|s| (s.id.clone(), s.maf)).collect();
    let mut prepared = Vec::with_capacity(config.mechanisms.len());
    for &mechanism in &config.mechanisms {
        let (plan, feasible) = match mechanism {
            EvalMechanism::NoHiding | EvalMechanism::DependentSensitivity => (MaskPlan::default(), true),
            EvalMechanism::SelectiveHiding => match &selective {
                Some(plan) => (plan.clone(), true),
                None => (MaskPlan::default(), false),
            },
            EvalMechanism::RandomHiding => match &selective {
                Some(budget) => (random_mask(&matrix, &pedigree, budget, derive_seed(trial_seed, 3))?, true),
                None => (MaskPlan::default(), false),
            },
        };
        let masked = matrix.apply_mask(&plan)?;
        let (metadata, _) = kinship_matrix(&masked, &participants)?;
        let attacks = config
            .adversary_modes
            .iter()
            .map(|&mode| {
                let knowledge = AdversaryKnowledge {
                    memberships: participants.clone(),
                    kinship_metadata: metadata.clone(),
                    maf_table: maf_table.clone(),
                    mode,
                };
                let ctx = AttackContext::new(&knowledge, &participants, &target)?;
                positions.iter().map(|p| ctx.prepare(p)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        prepared.push(Prepared {
            mechanism,
            plan,
            feasible,
            masked,
            attacks,
        });
    }

    let d = dependence_multiplier(&participants, &pedigree);
    let mut rows = Vec::new();
    for (e, &epsilon) in config.epsilon_grid.iter().enumerate() {
        let noise_seed = derive_seed(trial_seed, 100 + e as u64);
        for p in &prepared {
            // the same stream for every mechanism: paired noise draws
            let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let mechanism = p.mechanism.query_mechanism();
            let answers = positions
                .iter()
                .map(|pos| {
                    let spec = QuerySpec {
                        position: pos.clone(),
                        participants: participants.clone(),
                        epsilon,
                        mechanism,
                    };
                    answer_query(&p.masked, &spec, &pedigree, &mut noise_rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let loss = utility_loss(&true_sums, &answers)?;
            let noise = NoiseModel::for_mechanism(mechanism, epsilon, d);
            for (mode, attack) in config.adversary_modes.iter().zip(&p.attacks) {
                let posteriors = attack
                    .iter()
                    .zip(&answers)
                    .map(|(prep, a)| prep.infer(a.noisy_sum, noise))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(MetricsRow {
                    mechanism: p.mechanism,
                    adversary_mode: *mode,
                    epsilon,
                    family_set: config.family_set.label(),
                    u: config.u_nonrelatives,
                    trial,
                    correctness: correctness(&posteriors, &truths)?,
                    utility_loss: loss,
                    hidden_cells: p.plan.total_cells(),
                    feasible: p.feasible,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs every trial (in parallel) and returns rows in (trial, ε,
/// mechanism, mode) order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn write_results<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error of one metric over the feasible trials of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mechanism: EvalMechanism,
    pub adversary_mode: AdversaryMode,
    pub epsilon: f64,
    pub family_set: String,
    pub u: usize,
    pub n: usize,
    pub infeasible: usize,
    pub correctness_mean: f64,
    pub correctness_stderr: f64,
    pub utility_loss_mean: f64,
    pub utility_loss_stderr: f64,
    pub hidden_cells_mean: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates rows per (mechanism, mode, ε, family set, u) in first-seen
/// order. Infeasible rows are counted but excluded from the means.
pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::validation("nothing to summarize"));
    }
    type Key = (EvalMechanism, AdversaryMode, u64, String, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&MetricsRow>> = HashMap::new();
    for r in rows {
        let key = (r.mechanism, r.adversary_mode, r.epsilon.to_bits(), r.family_set.clone(), r.u);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let ok: Vec<&&MetricsRow> = group.iter().filter(|r| r.feasible).collect();
            let pick = |f: fn(&MetricsRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (c_mean, c_se) = mean_stderr(&pick(|r| r.correctness));
            let (u_mean, u_se) = mean_stderr(&pick(|r| r.utility_loss));
            let (h_mean, _) = mean_stderr(&pick(|r| r.hidden_cells as f64));
            SummaryRow {
                mechanism: key.0,
                adversary_mode: key.1,
                epsilon: f64::from_bits(key.2),
                family_set: key.3,
                u: key.4,
                n: ok.len(),
                infeasible: group.len() - ok.len(),
                correctness_mean: c_mean,
                correctness_stderr: c_se,
                utility_loss_mean: u_mean,
                utility_loss_stderr: u_se,
                hidden_cells_mean: h_mean,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(writer: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in summary {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
