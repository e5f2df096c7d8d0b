//! Seeded synthetic cohorts: unrelated founders plus one Mendelian family.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{Genotype, GenotypeMatrix, SnpMeta};
use crate::pedigree::Pedigree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FamilyShape {
    /// mother and son
    ParentChild,
    /// father, mother and son
    Trio,
    /// trio plus the mother's sister, linked through latent maternal grandparents
    TrioPlusAunt,
    /// Explicit parent links. Every node named in the links is emitted,
    /// except those listed in `latent`.
    Custom {
        parents: BTreeMap<String, [String; 2]>,
        #[serde(default)]
        latent: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MafSampler {
    Uniform { low: f64, high: f64 },
    Fixed { maf: f64 },
}

impl Default for MafSampler {
    fn default() -> Self {
        MafSampler::Uniform {
            low: 0.05,
            high: 0.5,
        }
    }
}

impl MafSampler {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MafSampler::Uniform { low, high } => low > 0.0 && low <= high && high <= 0.5,
            MafSampler::Fixed { maf } => maf > 0.0 && maf <= 0.5,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("maf sampler {self:?} not within (0, 0.5]")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            MafSampler::Uniform { low, high } if low < high => rng.gen_range(low..=high),
            MafSampler::Uniform { low, .. } => low,
            MafSampler::Fixed { maf } => maf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_unrelated: usize,
    pub family_shape: FamilyShape,
    pub m_snps: usize,
    #[serde(default)]
    pub maf_sampler: MafSampler,
    pub seed: u64,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_snps == 0 {
            return Err(Error::validation("m_snps must be at least 1"));
        }
        self.maf_sampler.validate()
    }
}

/// Family member ids used by the built-in shapes.
pub const SON: &str = "son";
pub const FATHER: &str = "father";
pub const MOTHER: &str = "mother";
pub const AUNT: &str = "aunt";

/// Prefix of unrelated individual ids (`U000`, `U001`, ...).
pub const UNRELATED_PREFIX: &str = "U";

struct FamilyLayout {
    /// parent links over observed and latent nodes
    links: BTreeMap<String, (String, String)>,
    /// observed members in output order
    observed: Vec<String>,
}

fn layout(shape: &FamilyShape) -> Result<FamilyLayout> {
    let link = |c: &str, f: &str, m: &str| (c.to_string(), (f.to_string(), m.to_string()));
    let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(match shape {
        FamilyShape::ParentChild => FamilyLayout {
            // latent father
            links: [link(SON, "_father", MOTHER)].into_iter().collect(),
            observed: names(&[SON, MOTHER]),
        },
        FamilyShape::Trio => FamilyLayout {
            links: [link(SON, FATHER, MOTHER)].into_iter().collect(),
            observed: names(&[SON, FATHER, MOTHER]),
        },
        FamilyShape::TrioPlusAunt => FamilyLayout {
            links: [
                link(SON, FATHER, MOTHER),
                link(MOTHER, "_grandfather", "_grandmother"),
                link(AUNT, "_grandfather", "_grandmother"),
            ]
            .into_iter()
            .collect(),
            observed: names(&[SON, FATHER, MOTHER, AUNT]),
        },
        FamilyShape::Custom { parents, latent } => {
            let links: BTreeMap<_, _> = parents
                .iter()
                .map(|(c, [f, m])| (c.clone(), (f.clone(), m.clone())))
                .collect();
            let mut observed: Vec<String> = Vec::new();
            // children first (in link order), then their ancestors
            for (c, (f, m)) in &links {
                for id in [c, f, m] {
                    if !observed.contains(id) && !latent.contains(id) {
                        observed.push(id.clone());
                    }
                }
            }
            if observed.is_empty() {
                return Err(Error::validation("custom family has no observed members"));
            }
            FamilyLayout { links, observed }
        }
    })
}

/// Hardy-Weinberg draw for minor allele frequency `p`.
pub(crate) fn draw_founder<R: Rng>(p: f64, rng: &mut R) -> u8 {
    u8::from(rng.gen_bool(p)) + u8::from(rng.gen_bool(p))
}

/// Child genotype from independent allele transmission.
pub(crate) fn draw_child<R: Rng>(father: u8, mother: u8, rng: &mut R) -> u8 {
    let transmit = |g: u8, rng: &mut R| match g {
        0 => 0,
        2 => 1,
        _ => u8::from(rng.gen_bool(0.5)),
    };
    transmit(father, rng) + transmit(mother, rng)
}

/// Simulates a cohort: the family members come first (target first), then
/// `n_unrelated` founders. Identical specs give identical matrices.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(GenotypeMatrix, Pedigree)> {
    spec.validate()?;
    let family = layout(&spec.family_shape)?;
    let mut ped_for_order = Pedigree::new();
    for (c, (f, m)) in &family.links {
        ped_for_order.set_parents(c, f, m)?;
    }
    for id in &family.observed {
        ped_for_order.add_member(id.clone());
    }
    let order = ped_for_order.topological_order()?;
    let node_index: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let parents: Vec<Option<(usize, usize)>> = order
        .iter()
        .map(|n| {
            family
                .links
                .get(n)
                .map(|(f, m)| (node_index[f.as_str()], node_index[m.as_str()]))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut snps = Vec::with_capacity(spec.m_snps);
    for j in 0..spec.m_snps {
        let maf = spec.maf_sampler.sample(&mut rng);
        snps.push(SnpMeta::new(format!("rs{}", j + 1), maf)?);
    }

    let n_family = family.observed.len();
    let mut family_rows = vec![Vec::with_capacity(spec.m_snps); n_family];
    let mut unrelated_rows = vec![Vec::with_capacity(spec.m_snps); spec.n_unrelated];
    let mut nodes = vec![0u8; order.len()];
    for snp in &snps {
        let p = snp.maf;
        for (n, parent) in parents.iter().enumerate() {
            nodes[n] = match *parent {
                Some((f, m)) => draw_child(nodes[f], nodes[m], &mut rng),
                None => draw_founder(p, &mut rng),
            };
        }
        for (row, id) in family_rows.iter_mut().zip(&family.observed) {
            row.push(nodes[node_index[id.as_str()]]);
        }
        for row in unrelated_rows.iter_mut() {
            row.push(draw_founder(p, &mut rng));
        }
    }

    let to_cells = |row: Vec<u8>| {
        row.into_iter()
            .map(|v| Genotype::from_count(v).expect("simulated genotype in 0..=2"))
            .collect::<Vec<_>>()
    };
    let mut individuals = family.observed.clone();
    let mut labels = vec!["case".to_string(); n_family];
    let mut rows: Vec<Vec<Genotype>> = family_rows.into_iter().map(to_cells).collect();
    for (u, row) in unrelated_rows.into_iter().enumerate() {
        individuals.push(format!("{UNRELATED_PREFIX}{u:03}"));
        labels.push(if u % 2 == 0 { "control" } else { "case" }.to_string());
        rows.push(to_cells(row));
    }
    let matrix = GenotypeMatrix::new(individuals, labels, snps, rows)?;
    let pedigree = Pedigree::from_parent_links(&family.links, &family.observed)?;
    Ok((matrix, pedigree))
}
