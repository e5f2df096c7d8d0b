//! Pairwise SNP-configuration counts and the KING-robust kinship estimator.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{Genotype, GenotypeMatrix};

/// Counts over the positions where neither individual is hidden.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PairCounts {
    /// Both heterozygous.
    pub n11: u64,
    /// First 0, second 2.
    pub n02: u64,
    /// First 2, second 0.
    pub n20: u64,
    /// Heterozygous in the first individual.
    pub het_i: u64,
    /// Heterozygous in the second individual.
    pub het_k: u64,
    pub n_valid: u64,
}

impl PairCounts {
    pub fn from_rows(first: &[Genotype], second: &[Genotype]) -> Self {
        let mut c = PairCounts::default();
        for (&a, &b) in first.iter().zip(second) {
            let (Some(a), Some(b)) = (a.value(), b.value()) else {
                continue;
            };
            c.n_valid += 1;
            match (a, b) {
                (1, 1) => c.n11 += 1,
                (0, 2) => c.n02 += 1,
                (2, 0) => c.n20 += 1,
                _ => {}
            }
            c.het_i += u64::from(a == 1);
            c.het_k += u64::from(b == 1);
        }
        c
    }

    /// Same pair seen from the other side.
    pub fn swapped(self) -> Self {
        PairCounts {
            n02: self.n20,
            n20: self.n02,
            het_i: self.het_k,
            het_k: self.het_i,
            ..self
        }
    }

    pub fn opposite_homozygotes(&self) -> u64 {
        self.n02 + self.n20
    }

    /// Counts after hiding `x` positions where both are heterozygous.
    pub fn without_double_hets(self, x: u64) -> Self {
        PairCounts {
            n11: self.n11 - x,
            het_i: self.het_i - x,
            het_k: self.het_k - x,
            n_valid: self.n_valid - x,
            ..self
        }
    }

    /// KING-robust kinship with the smaller heterozygote count in the
    /// denominator.
    pub fn kinship(&self) -> Result<f64> {
        kinship(self)
    }
}

/// Counts for individuals `i` and `k` of `matrix`.
pub fn pair_counts(matrix: &GenotypeMatrix, i: &str, k: &str) -> Result<PairCounts> {
    let i = matrix.individual_index(i)?;
    let k = matrix.individual_index(k)?;
    Ok(PairCounts::from_rows(matrix.row(i), matrix.row(k)))
}

/// `(2·n11 − 4·(n02 + n20) − het_large + het_small) / (4·het_small)`.
///
/// Returns [`Error::UndefinedKinship`] when either individual has no
/// heterozygous site left.
pub fn kinship(counts: &PairCounts) -> Result<f64> {
    let small = counts.het_i.min(counts.het_k);
    let large = counts.het_i.max(counts.het_k);
    if small == 0 {
        return Err(Error::UndefinedKinship);
    }
    let numerator = 2.0 * counts.n11 as f64 - 4.0 * counts.opposite_homozygotes() as f64
        - large as f64
        + small as f64;
    Ok(numerator / (4.0 * small as f64))
}

/// Relationship inferred from a kinship coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relatedness {
    Duplicate,
    First,
    Second,
    Unrelated,
}

impl Relatedness {
    pub fn as_str(self) -> &'static str {
        match self {
            Relatedness::Duplicate => "duplicate",
            Relatedness::First => "first",
            Relatedness::Second => "second",
            Relatedness::Unrelated => "unrelated",
        }
    }
}

/// Lower edges of the duplicate, first- and second-degree bands.
pub const DUPLICATE_MIN: f64 = 0.353_553_390_593_273_8; // 2^-1.5
pub const FIRST_DEGREE_MIN: f64 = 0.176_776_695_296_636_9; // 2^-2.5
pub const SECOND_DEGREE_MIN: f64 = 0.088_388_347_648_318_44; // 2^-3.5

pub fn classify_degree(phi: f64) -> Relatedness {
    if phi > DUPLICATE_MIN {
        Relatedness::Duplicate
    } else if phi > FIRST_DEGREE_MIN {
        Relatedness::First
    } else if phi > SECOND_DEGREE_MIN {
        Relatedness::Second
    } else {
        Relatedness::Unrelated
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinshipEntry {
    pub id_a: String,
    pub id_b: String,
    pub phi: f64,
    pub degree: Relatedness,
}

/// Pairwise kinship over a set of individuals; pairs with undefined
/// kinship are absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KinshipMatrix {
    entries: Vec<KinshipEntry>,
}

impl KinshipMatrix {
    pub fn from_entries(entries: Vec<KinshipEntry>) -> Self {
        KinshipMatrix { entries }
    }

    pub fn entries(&self) -> &[KinshipEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.entry(a, b).map(|e| e.phi)
    }

    pub fn degree(&self, a: &str, b: &str) -> Relatedness {
        self.entry(a, b)
            .map_or(Relatedness::Unrelated, |e| e.degree)
    }

    fn entry(&self, a: &str, b: &str) -> Option<&KinshipEntry> {
        self.entries
            .iter()
            .find(|e| (e.id_a == a && e.id_b == b) || (e.id_a == b && e.id_b == a))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        if self.entries.is_empty() {
            wtr.write_record(["id_a", "id_b", "phi", "degree"])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<KinshipEntry>, _>>()?;
        Ok(KinshipMatrix { entries })
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Kinship for every pair of `ids` (in list order). Pairs whose kinship is
/// undefined are left out and reported in the returned warning list.
pub fn kinship_matrix(
    matrix: &GenotypeMatrix,
    ids: &[String],
) -> Result<(KinshipMatrix, Vec<String>)> {
    let rows = ids
        .iter()
        .map(|id| matrix.individual_index(id).map(|i| matrix.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for a in 0..ids.len() {
        for b in a + 1..ids.len() {
            match PairCounts::from_rows(rows[a], rows[b]).kinship() {
                Ok(phi) => entries.push(KinshipEntry {
                    id_a: ids[a].clone(),
                    id_b: ids[b].clone(),
                    phi,
                    degree: classify_degree(phi),
                }),
                Err(e) => warnings.push(format!("{}~{}: {e}", ids[a], ids[b])),
            }
        }
    }
    Ok((KinshipMatrix { entries }, warnings))
}
