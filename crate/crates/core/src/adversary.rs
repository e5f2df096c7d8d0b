//! Attribute inference on a target's genotype from one noisy count.
//!
//! The adversary knows who participates, the released kinship metadata and
//! public MAFs. With dependency it rebuilds a pedigree around the target
//! from the metadata degrees and uses the exact family joint; without, it
//! treats every participant as an independent Hardy-Weinberg draw. It
//! assumes every participant contributes its genotype to the sum.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dp::{noise_scale, Mechanism, QueryAnswer};
use crate::error::{Error, Result};
use crate::inference::{convolve_sums, family_joint, hwe_prior, GenotypeDist, PedigreeModel, SumDist};
use crate::kinship::{KinshipMatrix, Relatedness};

/// Match slack between an exact observation and a candidate sum.
const EXACT_MATCH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    WithDependency,
    WithoutDependency,
}

impl AdversaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryMode::WithDependency => "with_dependency",
            AdversaryMode::WithoutDependency => "without_dependency",
        }
    }
}

impl std::str::FromStr for AdversaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_dependency" | "dep" => Ok(AdversaryMode::WithDependency),
            "without_dependency" | "indep" => Ok(AdversaryMode::WithoutDependency),
            _ => Err(Error::validation(format!("unknown adversary mode '{s}'"))),
        }
    }
}

/// Noise the adversary believes was added to the sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    Exact,
    Laplace { scale: f64 },
}

impl NoiseModel {
    pub fn for_mechanism(mechanism: Mechanism, epsilon: f64, multiplier: usize) -> Self {
        match noise_scale(mechanism, epsilon, multiplier) {
            Some(scale) => NoiseModel::Laplace { scale },
            None => NoiseModel::Exact,
        }
    }

    fn log_likelihood(self, observed: f64, sum: usize) -> f64 {
        let z = observed - sum as f64;
        match self {
            NoiseModel::Exact if z.abs() < EXACT_MATCH => 0.0,
            NoiseModel::Exact => f64::NEG_INFINITY,
            NoiseModel::Laplace { scale } => -z.abs() / scale - (2.0 * scale).ln(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdversaryKnowledge {
    pub memberships: Vec<String>,
    pub kinship_metadata: KinshipMatrix,
    pub maf_table: HashMap<String, f64>,
    pub mode: AdversaryMode,
}

/// Posterior over the target's genotype at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub probs: GenotypeDist,
    pub map_value: u8,
    pub map_prob: f64,
}

impl Posterior {
    pub fn from_weights(weights: [f64; 3]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::validation("observation has zero likelihood under the model"));
        }
        let probs = weights.map(|w| w / total);
        // first maximum: ties go to the smaller genotype
        let mut map_value = 0u8;
        for g in 1..3u8 {
            if probs[usize::from(g)] > probs[usize::from(map_value)] {
                map_value = g;
            }
        }
        Ok(Posterior {
            probs: GenotypeDist::new(probs).or_else(|_| {
                // renormalize rounding drift beyond the strict tolerance
                let t: f64 = probs.iter().sum();
                GenotypeDist::new(probs.map(|p| p / t))
            })?,
            map_value,
            map_prob: probs[usize::from(map_value)],
        })
    }
}

/// Pedigree the adversary reconstructs around `target` from metadata
/// degrees among `relatives`.
///
/// First-degree relatives fill the target's parent slots, then become
/// siblings. A second-degree relative becomes a sibling of a parent it is
/// first-degree with, otherwise of a new latent parent, otherwise of the
/// first parent. A relative linked only through a parent joins that
/// parent's sibship. Duplicates count as first degree. Relatives that fit
/// nowhere are left out of the model.
pub fn reconstruct_model(target: &str, relatives: &[String], metadata: &KinshipMatrix) -> Result<PedigreeModel> {
    let degree = |a: &str, b: &str| match metadata.degree(a, b) {
        Relatedness::Duplicate | Relatedness::First => Some(1),
        Relatedness::Second => Some(2),
        Relatedness::Unrelated => None,
    };
    let mut observed = vec![target.to_string()];
    let mut links: BTreeMap<String, (String, String)> = BTreeMap::new();
    let mut parents: Vec<String> = Vec::new();
    let mut latent = 0usize;
    let mut fresh = |prefix: &str| {
        latent += 1;
        format!("_{prefix}{latent}")
    };

    let first: Vec<&String> = relatives.iter().filter(|r| degree(target, r) == Some(1)).collect();
    let second: Vec<&String> = relatives.iter().filter(|r| degree(target, r) == Some(2)).collect();
    let indirect: Vec<&String> = relatives.iter().filter(|r| degree(target, r).is_none()).collect();

    let mut siblings = Vec::new();
    for r in first {
        if parents.len() < 2 {
            parents.push(r.clone());
        } else {
            siblings.push(r.clone());
        }
        observed.push(r.clone());
    }

    // (parent, relative) pairs to become siblings
    let mut parent_sibs: Vec<(String, String)> = Vec::new();
    for r in second {
        let via = parents.iter().find(|p| !p.starts_with('_') && degree(p, r) == Some(1)).cloned();
        let parent = match via {
            Some(p) => p,
            None if parents.len() < 2 => {
                let p = fresh("parent");
                parents.push(p.clone());
                p
            }
            None => parents
                .iter()
                .find(|p| p.starts_with('_'))
                .unwrap_or(&parents[0])
                .clone(),
        };
        parent_sibs.push((parent, r.clone()));
        observed.push(r.clone());
    }
    for r in indirect {
        if let Some(p) = parents.iter().find(|p| !p.starts_with('_') && degree(p, r) == Some(1)) {
            parent_sibs.push((p.clone(), r.clone()));
            observed.push(r.clone());
        }
    }

    if !parents.is_empty() {
        while parents.len() < 2 {
            parents.push(fresh("parent"));
        }
        let pair = (parents[0].clone(), parents[1].clone());
        links.insert(target.to_string(), pair.clone());
        for s in siblings {
            links.insert(s, pair.clone());
        }
    }
    let mut grandparents: HashMap<String, (String, String)> = HashMap::new();
    for (parent, sib) in parent_sibs {
        let gp = grandparents
            .entry(parent.clone())
            .or_insert_with(|| {
                let a = fresh("grandparent");
                let b = fresh("grandparent");
                (a, b)
            })
            .clone();
        links.insert(parent, gp.clone());
        links.insert(sib, gp);
    }
    PedigreeModel::new(&observed, &links)
}

/// Precomputed pieces for attacking one target over many positions.
#[derive(Clone, Debug)]
pub struct AttackContext {
    target: String,
    /// modeled relatives (target first) and participants treated as independent
    model: Option<PedigreeModel>,
    independent: Vec<String>,
    maf_table: HashMap<String, f64>,
}

impl AttackContext {
    pub fn new(knowledge: &AdversaryKnowledge, participants: &[String], target: &str) -> Result<Self> {
        if !participants.iter().any(|p| p == target) {
            return Err(Error::validation(format!("target '{target}' is not a query participant")));
        }
        if let Some(p) = participants.iter().find(|p| !knowledge.memberships.contains(p)) {
            return Err(Error::validation(format!("participant '{p}' is not a known member")));
        }
        let others: Vec<String> = participants.iter().filter(|p| *p != target).cloned().collect();
        let (model, independent) = match knowledge.mode {
            AdversaryMode::WithoutDependency => (None, others),
            AdversaryMode::WithDependency => {
                let component = connected(target, &others, &knowledge.kinship_metadata);
                let model = reconstruct_model(target, &component, &knowledge.kinship_metadata)?;
                let modeled = model.observed().to_vec();
                let independent = others.into_iter().filter(|p| !modeled.contains(p)).collect();
                (Some(model), independent)
            }
        };
        Ok(AttackContext {
            target: target.to_string(),
            model,
            independent,
            maf_table: knowledge.maf_table.clone(),
        })
    }

    pub fn modeled_relatives(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.observed().len() - 1)
    }

    /// Per target genotype, the distribution of everyone else's total.
    pub fn others_given_target(&self, position: &str) -> Result<([f64; 3], [SumDist; 3])> {
        let maf = *self
            .maf_table
            .get(position)
            .ok_or_else(|| Error::UnknownPosition(position.to_string()))?;
        let prior = hwe_prior(maf);
        let rest = convolve_sums(&vec![prior; self.independent.len()]);
        let (target_prior, family): ([f64; 3], [SumDist; 3]) = match &self.model {
            Some(model) if model.observed().len() > 1 => {
                let joint = family_joint(model, maf)?;
                let n_rel = model.observed().len() - 1;
                let mut table = [vec![0.0; 2 * n_rel + 1], vec![0.0; 2 * n_rel + 1], vec![0.0; 2 * n_rel + 1]];
                for (g, p) in joint.iter() {
                    let r: usize = g[1..].iter().map(|v| usize::from(*v)).sum();
                    table[usize::from(g[0])][r] += p;
                }
                let mut marginal = [0.0; 3];
                for g in 0..3 {
                    marginal[g] = table[g].iter().sum();
                }
                let conditional = table.map(|row| {
                    let t: f64 = row.iter().sum();
                    SumDist::from_probs(0, row.iter().map(|p| if t > 0.0 { p / t } else { 0.0 }).collect())
                });
                (marginal, conditional)
            }
            _ => (prior.probs(), [SumDist::point(0), SumDist::point(0), SumDist::point(0)]),
        };
        Ok((target_prior, family.map(|f| f.convolve(&rest))))
    }

    /// Everything about one position that does not depend on the answer.
    pub fn prepare(&self, position: &str) -> Result<PreparedPosition> {
        let (prior, others) = self.others_given_target(position)?;
        Ok(PreparedPosition {
            position: position.to_string(),
            prior,
            others,
        })
    }

    pub fn infer(&self, answer: &QueryAnswer, noise: NoiseModel) -> Result<Posterior> {
        self.prepare(&answer.position)?.infer(answer.noisy_sum, noise)
    }

    pub fn target(&self) -> &str {
        &self.target
    }
}

/// Target prior and the others' total given each target genotype at one
/// position.
#[derive(Clone, Debug)]
pub struct PreparedPosition {
    position: String,
    prior: [f64; 3],
    others: [SumDist; 3],
}

impl PreparedPosition {
    pub fn infer(&self, noisy_sum: f64, noise: NoiseModel) -> Result<Posterior> {
        let mut log_w = [f64::NEG_INFINITY; 3];
        for (g, w) in log_w.iter_mut().enumerate() {
            if self.prior[g] == 0.0 {
                continue;
            }
            let terms: Vec<f64> = self.others[g]
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(u, p)| p.ln() + noise.log_likelihood(noisy_sum, g + u))
                .collect();
            *w = self.prior[g].ln() + log_sum_exp(&terms);
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::validation(format!(
                "answer {noisy_sum} at {} is impossible under the adversary's model",
                self.position
            )));
        }
        Posterior::from_weights(log_w.map(|l| (l - max).exp()))
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Participants reachable from `target` through metadata relations.
fn connected(target: &str, others: &[String], metadata: &KinshipMatrix) -> Vec<String> {
    let related = |a: &str, b: &str| metadata.degree(a, b) != Relatedness::Unrelated;
    let mut reached: Vec<String> = Vec::new();
    let mut frontier = vec![target.to_string()];
    while let Some(node) = frontier.pop() {
        for o in others {
            if !reached.contains(o) && related(&node, o) {
                reached.push(o.clone());
                frontier.push(o.clone());
            }
        }
    }
    // keep participant order
    others.iter().filter(|o| reached.contains(o)).cloned().collect()
}

pub fn infer_snp(
    knowledge: &AdversaryKnowledge,
    answer: &QueryAnswer,
    participants: &[String],
    target: &str,
    noise: NoiseModel,
) -> Result<Posterior> {
    AttackContext::new(knowledge, participants, target)?.infer(answer, noise)
}

/// One posterior per answer, all over the same participants.
pub fn attack_sweep(
    knowledge: &AdversaryKnowledge,
    answers: &[QueryAnswer],
    participants: &[String],
    target: &str,
    noise: NoiseModel,
) -> Result<Vec<Posterior>> {
    if answers.is_empty() {
        return Ok(Vec::new());
    }
    let ctx = AttackContext::new(knowledge, participants, target)?;
    answers.iter().map(|a| ctx.infer(a, noise)).collect()
}

/// Adversary correctness: one minus the mean expected genotype distance
/// under the posterior, normalized by the largest distance 2. A confident
/// correct posterior scores 1, a confident wrong-by-2 posterior 0.
pub fn correctness(posteriors: &[Posterior], truths: &[u8]) -> Result<f64> {
    check_lengths(posteriors, truths)?;
    let loss: f64 = posteriors
        .iter()
        .zip(truths)
        .map(|(p, &t)| {
            (0..3u8)
                .map(|g| p.probs.prob(g) * f64::from(g.abs_diff(t)) / 2.0)
                .sum::<f64>()
        })
        .sum();
    Ok(1.0 - loss / truths.len() as f64)
}

/// Alternative reading that charges only the MAP value, weighted by its
/// posterior mass.
pub fn map_correctness(posteriors: &[Posterior], truths: &[u8]) -> Result<f64> {
    check_lengths(posteriors, truths)?;
    let loss: f64 = posteriors
        .iter()
        .zip(truths)
        .map(|(p, &t)| p.map_prob * f64::from(p.map_value.abs_diff(t)) / 2.0)
        .sum();
    Ok(1.0 - loss / truths.len() as f64)
}

fn check_lengths(posteriors: &[Posterior], truths: &[u8]) -> Result<()> {
    if posteriors.is_empty() || posteriors.len() != truths.len() {
        return Err(Error::validation(format!(
            "{} posteriors for {} true values",
            posteriors.len(),
            truths.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRow<'a> {
    position: &'a str,
    true_value: u8,
    map_value: u8,
    map_prob: f64,
    p0: f64,
    p1: f64,
    p2: f64,
}

/// Attack report CSV: `position,true_value,map_value,map_prob,p0,p1,p2`.
pub fn write_report<W: Write>(writer: W, positions: &[String], truths: &[u8], posteriors: &[Posterior]) -> Result<()> {
    check_lengths(posteriors, truths)?;
    let mut w = csv::Writer::from_writer(writer);
    for ((pos, &t), p) in positions.iter().zip(truths).zip(posteriors) {
        let [p0, p1, p2] = p.probs.probs();
        w.serialize(ReportRow {
            position: pos,
            true_value: t,
            map_value: p.map_value,
            map_prob: p.map_prob,
            p0,
            p1,
            p2,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::transmission;
    use crate::kinship::KinshipEntry;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn metadata(entries: &[(&str, &str, f64)]) -> KinshipMatrix {
        KinshipMatrix::from_entries(
            entries
                .iter()
                .map(|(a, b, phi)| KinshipEntry {
                    id_a: a.to_string(),
                    id_b: b.to_string(),
                    phi: *phi,
                    degree: crate::kinship::classify_degree(*phi),
                })
                .collect(),
        )
    }

    fn knowledge(members: &[&str], meta: KinshipMatrix, maf: f64, mode: AdversaryMode) -> AdversaryKnowledge {
        AdversaryKnowledge {
            memberships: ids(members),
            kinship_metadata: meta,
            maf_table: [("rs1".to_string(), maf)].into_iter().collect(),
            mode,
        }
    }

    fn answer(sum: f64, q: usize) -> QueryAnswer {
        QueryAnswer {
            position: "rs1".into(),
            q,
            noisy_sum: sum,
        }
    }

    fn trio_meta() -> KinshipMatrix {
        metadata(&[("son", "father", 0.25), ("son", "mother", 0.25), ("father", "mother", 0.0)])
    }

    #[test]
    fn modes_agree_without_relations() {
        let members = ["a", "b", "c"];
        let dep = knowledge(&members, KinshipMatrix::default(), 0.3, AdversaryMode::WithDependency);
        let indep = knowledge(&members, KinshipMatrix::default(), 0.3, AdversaryMode::WithoutDependency);
        let noise = NoiseModel::Laplace { scale: 2.0 };
        let a = infer_snp(&dep, &answer(2.4, 3), &ids(&members), "a", noise).unwrap();
        let b = infer_snp(&indep, &answer(2.4, 3), &ids(&members), "a", noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lone_exact_observation_is_certain() {
        let k = knowledge(&["a"], KinshipMatrix::default(), 0.3, AdversaryMode::WithDependency);
        let p = infer_snp(&k, &answer(2.0, 1), &ids(&["a"]), "a", NoiseModel::Exact).unwrap();
        assert_eq!(p.map_value, 2);
        assert_eq!(p.map_prob, 1.0);
    }

    /// Exhaustive Bayes over all 27 trio genotype assignments.
    #[test]
    fn trio_matches_enumeration() {
        let maf = 0.5;
        let k = knowledge(&["son", "father", "mother"], trio_meta(), maf, AdversaryMode::WithDependency);
        let prior = hwe_prior(maf);
        for s in 0..=6u8 {
            let mut w = [0.0; 3];
            for gs in 0..3u8 {
                for gf in 0..3u8 {
                    for gm in 0..3u8 {
                        if gs + gf + gm == s {
                            w[usize::from(gs)] += prior.prob(gf) * prior.prob(gm) * transmission(gf, gm).prob(gs);
                        }
                    }
                }
            }
            let total: f64 = w.iter().sum();
            let p = infer_snp(&k, &answer(f64::from(s), 3), &ids(&["son", "father", "mother"]), "son", NoiseModel::Exact)
                .unwrap();
            for g in 0..3u8 {
                assert!((p.probs.prob(g) - w[usize::from(g)] / total).abs() < 1e-12, "s={s} g={g}");
            }
        }
    }

    #[test]
    fn reconstruction_shapes() {
        // trio: both first-degree relatives become parents
        let m = reconstruct_model("son", &ids(&["father", "mother"]), &trio_meta()).unwrap();
        assert_eq!(m.observed(), &["son", "father", "mother"]);
        assert_eq!(m.n_latent(), 0);

        // mother only: one latent parent
        let m = reconstruct_model("son", &ids(&["mother"]), &trio_meta()).unwrap();
        assert_eq!(m.n_latent(), 1);

        // aunt is second degree to son, first to mother: sibling of mother
        let meta = metadata(&[
            ("son", "father", 0.25),
            ("son", "mother", 0.25),
            ("son", "aunt", 0.125),
            ("mother", "aunt", 0.25),
        ]);
        let m = reconstruct_model("son", &ids(&["father", "mother", "aunt"]), &meta).unwrap();
        assert_eq!(m.observed().len(), 4);
        assert_eq!(m.n_latent(), 2);
        let joint = family_joint(&m, 0.3).unwrap();
        // aunt and mother share parents: P(both 2) exceeds the independent value
        let both: f64 = joint.iter().filter(|(g, _)| g[2] == 2 && g[3] == 2).map(|(_, p)| p).sum();
        assert!(both > 0.09f64.powi(2));
    }

    #[test]
    fn masked_metadata_drops_relatives() {
        // after masking the family looks unrelated: the dependent attack
        // degenerates to the independent one
        let meta = metadata(&[("son", "father", 0.08), ("son", "mother", 0.05)]);
        let members = ["son", "father", "mother"];
        let dep = knowledge(&members, meta.clone(), 0.3, AdversaryMode::WithDependency);
        let indep = knowledge(&members, meta, 0.3, AdversaryMode::WithoutDependency);
        let ctx = AttackContext::new(&dep, &ids(&members), "son").unwrap();
        assert_eq!(ctx.modeled_relatives(), 0);
        let noise = NoiseModel::Laplace { scale: 0.4 };
        assert_eq!(
            infer_snp(&dep, &answer(3.2, 3), &ids(&members), "son", noise).unwrap(),
            infer_snp(&indep, &answer(3.2, 3), &ids(&members), "son", noise).unwrap()
        );
    }

    #[test]
    fn target_must_participate() {
        let k = knowledge(&["a", "b"], KinshipMatrix::default(), 0.3, AdversaryMode::WithDependency);
        assert!(infer_snp(&k, &answer(1.0, 1), &ids(&["b"]), "a", NoiseModel::Exact).is_err());
        assert!(attack_sweep(&k, &[], &ids(&["b"]), "a", NoiseModel::Exact).unwrap().is_empty());
    }

    #[test]
    fn correctness_examples() {
        let p = |w: [f64; 3]| Posterior::from_weights(w).unwrap();
        assert_eq!(correctness(&[p([0.0, 1.0, 0.0]), p([1.0, 0.0, 0.0])], &[1, 0]).unwrap(), 1.0);
        assert_eq!(correctness(&[p([0.0, 0.0, 1.0])], &[0]).unwrap(), 0.0);
        // MAP 1 with mass 0.6, remaining mass on the truth 0
        let c = correctness(&[p([0.4, 0.6, 0.0])], &[0]).unwrap();
        assert!((c - 0.7).abs() < 1e-12);
        assert_eq!(map_correctness(&[p([0.4, 0.6, 0.0])], &[0]).unwrap(), c);
        assert!(correctness(&[], &[]).is_err());
        assert!(correctness(&[p([1.0, 0.0, 0.0])], &[0, 1]).is_err());
    }

    #[test]
    fn map_ties_go_low() {
        let p = Posterior::from_weights([0.0, 0.5, 0.5]).unwrap();
        assert_eq!(p.map_value, 1);
        assert_eq!(p.map_prob, 0.5);
    }

    #[test]
    fn report_csv() {
        let p = Posterior::from_weights([0.25, 0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, &ids(&["rs1"]), &[1], &[p]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "position,true_value,map_value,map_prob,p0,p1,p2\nrs1,1,1,0.5,0.25,0.5,0.25\n"
        );
    }
}
