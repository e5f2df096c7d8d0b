//! Exact genotype distributions for small pedigrees.
//!
//! Positions are independent. Founders follow Hardy-Weinberg proportions
//! and each parent transmits its minor allele with probability `g/2`.
//! Family joints are computed by variable elimination over latent
//! ancestors; sums of independent genotypes by polynomial convolution.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::pedigree::Pedigree;

/// Normalization slack for genotype distributions.
pub const GENOTYPE_TOLERANCE: f64 = 1e-12;
/// Normalization slack for sum distributions and joints.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Most observed members a pedigree model may hold.
pub const MAX_MODELED_MEMBERS: usize = 6;

/// Distribution over a genotype value `{0, 1, 2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenotypeDist([f64; 3]);

impl GenotypeDist {
    pub fn new(probs: [f64; 3]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > GENOTYPE_TOLERANCE {
            return Err(Error::validation(format!("{probs:?} is not a genotype distribution")));
        }
        Ok(GenotypeDist(probs))
    }

    pub fn point(g: u8) -> Self {
        let mut p = [0.0; 3];
        p[usize::from(g)] = 1.0;
        GenotypeDist(p)
    }

    pub fn probs(&self) -> [f64; 3] {
        self.0
    }

    pub fn prob(&self, g: u8) -> f64 {
        self.0[usize::from(g)]
    }
}

/// Hardy-Weinberg genotype proportions for minor allele frequency `maf`.
pub fn hwe_prior(maf: f64) -> GenotypeDist {
    let q = 1.0 - maf;
    GenotypeDist([q * q, 2.0 * maf * q, maf * maf])
}

/// Child genotype given the parents' genotypes.
pub fn transmission(father: u8, mother: u8) -> GenotypeDist {
    let (a, b) = (f64::from(father) / 2.0, f64::from(mother) / 2.0);
    GenotypeDist([(1.0 - a) * (1.0 - b), a * (1.0 - b) + (1.0 - a) * b, a * b])
}

/// Distribution over consecutive integer sums starting at `offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct SumDist {
    offset: usize,
    probs: Vec<f64>,
}

impl SumDist {
    pub fn point(value: usize) -> Self {
        SumDist {
            offset: value,
            probs: vec![1.0],
        }
    }

    pub fn from_probs(offset: usize, probs: Vec<f64>) -> Self {
        SumDist { offset, probs }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Smallest and largest sum in the support representation.
    pub fn support(&self) -> (usize, usize) {
        (self.offset, self.offset + self.probs.len() - 1)
    }

    pub fn prob(&self, sum: usize) -> f64 {
        sum.checked_sub(self.offset)
            .and_then(|k| self.probs.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(|(k, p)| (self.offset + k, *p))
    }

    /// Distribution of the sum of two independent variables.
    pub fn convolve(&self, other: &SumDist) -> SumDist {
        let mut probs = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (a, pa) in self.probs.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for (b, pb) in other.probs.iter().enumerate() {
                probs[a + b] += pa * pb;
            }
        }
        SumDist {
            offset: self.offset + other.offset,
            probs,
        }
    }

    pub fn add_genotype(&self, g: &GenotypeDist) -> SumDist {
        self.convolve(&SumDist {
            offset: 0,
            probs: g.0.to_vec(),
        })
    }
}

/// Distribution of the sum of independent genotypes (point mass at 0 for
/// an empty list).
pub fn convolve_sums(dists: &[GenotypeDist]) -> SumDist {
    dists
        .iter()
        .fold(SumDist::point(0), |acc, g| acc.add_genotype(g))
}

/// A pedigree over observed members plus any latent ancestors that connect
/// them.
#[derive(Clone, Debug, PartialEq)]
pub struct PedigreeModel {
    /// observed members first, then latent nodes
    nodes: Vec<String>,
    n_observed: usize,
    parents: Vec<Option<(usize, usize)>>,
}

impl PedigreeModel {
    pub fn new(observed: &[String], links: &BTreeMap<String, (String, String)>) -> Result<Self> {
        if observed.len() > MAX_MODELED_MEMBERS {
            return Err(Error::validation(format!(
                "pedigree model holds {} members, at most {MAX_MODELED_MEMBERS} supported",
                observed.len()
            )));
        }
        let mut nodes: Vec<String> = Vec::new();
        for id in observed {
            if nodes.contains(id) {
                return Err(Error::validation(format!("'{id}' listed twice")));
            }
            nodes.push(id.clone());
        }
        for (c, (f, m)) in links {
            for id in [c, f, m] {
                if !nodes.contains(id) {
                    nodes.push(id.clone());
                }
            }
        }
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let parents: Vec<Option<(usize, usize)>> = nodes
            .iter()
            .map(|n| links.get(n).map(|(f, m)| (index[f.as_str()], index[m.as_str()])))
            .collect();
        let model = PedigreeModel {
            n_observed: observed.len(),
            nodes,
            parents,
        };
        model.topological_order()?;
        Ok(model)
    }

    /// Model over a pedigree's members and parent links.
    pub fn from_pedigree(pedigree: &Pedigree) -> Result<Self> {
        Self::new(pedigree.members(), pedigree.parent_links())
    }

    pub fn observed(&self) -> &[String] {
        &self.nodes[..self.n_observed]
    }

    pub fn n_latent(&self) -> usize {
        self.nodes.len() - self.n_observed
    }

    fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let before = order.len();
            for v in 0..n {
                if !placed[v] && self.parents[v].is_none_or(|(f, m)| placed[f] && placed[m]) {
                    placed[v] = true;
                    order.push(v);
                }
            }
            if order.len() == before {
                return Err(Error::validation("cyclic pedigree"));
            }
        }
        Ok(order)
    }
}

/// A table over genotype assignments of `vars`, the first variable most
/// significant in the base-3 index.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    fn index(vars: &[usize], assignment: &[usize]) -> usize {
        vars.iter().fold(0, |acc, v| acc * 3 + assignment[*v])
    }

    /// Scratch assignment indexed by variable id.
    fn scratch(vars: &[usize]) -> Vec<usize> {
        vec![0; vars.iter().max().map_or(0, |m| m + 1)]
    }

    fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        for v in &other.vars {
            if !vars.contains(v) {
                vars.push(*v);
            }
        }
        let size = 3usize.pow(vars.len() as u32);
        let mut table = vec![0.0; size];
        let mut assignment = Self::scratch(&vars);
        for (idx, cell) in table.iter_mut().enumerate() {
            let mut rest = idx;
            for v in vars.iter().rev() {
                assignment[*v] = rest % 3;
                rest /= 3;
            }
            *cell = self.table[Self::index(&self.vars, &assignment)]
                * other.table[Self::index(&other.vars, &assignment)];
        }
        Factor { vars, table }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let pos = self.vars.iter().position(|v| *v == var).expect("variable in factor");
        let vars: Vec<usize> = self.vars.iter().copied().filter(|v| *v != var).collect();
        let inner = 3usize.pow((self.vars.len() - pos - 1) as u32);
        let mut table = vec![0.0; 3usize.pow(vars.len() as u32)];
        for (idx, p) in self.table.iter().enumerate() {
            let high = idx / (inner * 3);
            let low = idx % inner;
            table[high * inner + low] += p;
        }
        Factor { vars, table }
    }

    fn reordered(&self, vars: &[usize]) -> Factor {
        let mut table = vec![0.0; self.table.len()];
        let mut assignment = Self::scratch(vars);
        for (idx, cell) in table.iter_mut().enumerate() {
            let mut rest = idx;
            for v in vars.iter().rev() {
                assignment[*v] = rest % 3;
                rest /= 3;
            }
            *cell = self.table[Self::index(&self.vars, &assignment)];
        }
        Factor {
            vars: vars.to_vec(),
            table,
        }
    }
}

/// Joint genotype distribution over a model's observed members, indexed in
/// base 3 with the first member most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDist {
    members: Vec<String>,
    probs: Vec<f64>,
}

impl JointDist {
    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, genotypes: &[u8]) -> f64 {
        assert_eq!(genotypes.len(), self.members.len());
        self.probs[genotypes.iter().fold(0, |acc, g| acc * 3 + usize::from(*g))]
    }

    /// Every assignment with its probability, in index order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<u8>, f64)> + '_ {
        let n = self.members.len();
        self.probs.iter().enumerate().map(move |(idx, p)| {
            let mut g = vec![0u8; n];
            let mut rest = idx;
            for slot in g.iter_mut().rev() {
                *slot = (rest % 3) as u8;
                rest /= 3;
            }
            (g, *p)
        })
    }

    pub fn marginal(&self, member: usize) -> GenotypeDist {
        let mut p = [0.0; 3];
        for (g, prob) in self.iter() {
            p[usize::from(g[member])] += prob;
        }
        GenotypeDist(p)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Exact joint over the observed members, summing out latent nodes.
pub fn family_joint(model: &PedigreeModel, maf: f64) -> Result<JointDist> {
    if !(maf > 0.0 && maf <= 0.5) {
        return Err(Error::validation(format!("maf {maf} not within (0, 0.5]")));
    }
    model.topological_order()?;
    let prior = hwe_prior(maf);
    let mut factors: Vec<Factor> = (0..model.nodes.len())
        .map(|v| match model.parents[v] {
            None => Factor {
                vars: vec![v],
                table: prior.0.to_vec(),
            },
            Some((f, m)) => {
                let mut table = Vec::with_capacity(27);
                for gf in 0..3u8 {
                    for gm in 0..3u8 {
                        table.extend_from_slice(&transmission(gf, gm).0);
                    }
                }
                Factor {
                    vars: vec![f, m, v],
                    table,
                }
            }
        })
        .collect();

    for latent in model.n_observed..model.nodes.len() {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&latent));
        factors = rest;
        if let Some(first) = touching.first() {
            let merged = touching[1..].iter().fold(first.clone(), |acc, f| acc.product(f));
            factors.push(merged.sum_out(latent));
        }
    }

    let observed: Vec<usize> = (0..model.n_observed).collect();
    let joint = factors
        .iter()
        .fold(Factor { vars: vec![], table: vec![1.0] }, |acc, f| acc.product(f))
        .reordered(&observed);
    Ok(JointDist {
        members: model.observed().to_vec(),
        probs: joint.table,
    })
}
