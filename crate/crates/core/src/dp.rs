//! Count queries over the (masked) matrix, released with Laplace noise.
//!
//! A hidden cell contributes 0 to the sum but its owner still counts
//! toward `q`. The noise scale is `2/ε`; the dependent-sensitivity
//! baseline multiplies it by the largest number of query participants from
//! any one family.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::pedigree::Pedigree;

/// Sensitivity of a sum of genotype values, folded into the noise scale.
pub const BASE_SENSITIVITY: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    StandardLpm,
    DependentSensitivity,
    None,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::StandardLpm => "standard_lpm",
            Mechanism::DependentSensitivity => "dependent_sensitivity",
            Mechanism::None => "none",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard_lpm" => Ok(Mechanism::StandardLpm),
            "dependent_sensitivity" => Ok(Mechanism::DependentSensitivity),
            "none" => Ok(Mechanism::None),
            _ => Err(Error::validation(format!("unknown mechanism '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub position: String,
    pub participants: Vec<String>,
    pub epsilon: f64,
    pub mechanism: Mechanism,
}

impl QuerySpec {
    pub fn validate(&self) -> Result<()> {
        if self.participants.is_empty() {
            return Err(Error::validation(format!("query at {} has no participants", self.position)));
        }
        if self.mechanism != Mechanism::None && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub position: String,
    pub q: usize,
    pub noisy_sum: f64,
}

/// Sum of the visible genotype values at the queried position.
pub fn true_count(matrix: &GenotypeMatrix, spec: &QuerySpec) -> Result<u64> {
    let j = matrix.position_index(&spec.position)?;
    spec.participants.iter().try_fold(0u64, |sum, id| {
        let i = matrix.individual_index(id)?;
        Ok(sum + u64::from(matrix.get(i, j).value().unwrap_or(0)))
    })
}

/// One Laplace(0, `scale`) draw by inverting the CDF.
pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    assert!(scale > 0.0, "Laplace scale must be positive");
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}

/// Largest number of `participants` that share a family in `pedigree`
/// (1 when none are related).
pub fn dependence_multiplier(participants: &[String], pedigree: &Pedigree) -> usize {
    pedigree
        .families()
        .iter()
        .map(|family| participants.iter().filter(|p| family.contains(p)).count())
        .max()
        .unwrap_or(0)
        .max(1)
}

/// Laplace scale for a mechanism, `None` for exact release.
pub fn noise_scale(mechanism: Mechanism, epsilon: f64, multiplier: usize) -> Option<f64> {
    match mechanism {
        Mechanism::None => None,
        Mechanism::StandardLpm => Some(BASE_SENSITIVITY / epsilon),
        Mechanism::DependentSensitivity => Some(BASE_SENSITIVITY / epsilon * multiplier as f64),
    }
}

pub fn answer_query<R: Rng + ?Sized>(
    matrix: &GenotypeMatrix,
    spec: &QuerySpec,
    pedigree: &Pedigree,
    rng: &mut R,
) -> Result<QueryAnswer> {
    spec.validate()?;
    let exact = true_count(matrix, spec)? as f64;
    let d = dependence_multiplier(&spec.participants, pedigree);
    let noise = noise_scale(spec.mechanism, spec.epsilon, d).map_or(0.0, |b| laplace_noise(b, rng));
    Ok(QueryAnswer {
        position: spec.position.clone(),
        q: spec.participants.len(),
        noisy_sum: exact + noise,
    })
}

/// Released minor allele frequency `noisy_sum / 2q`, clamped to `[0, 1]`.
pub fn maf_release(answer: &QueryAnswer) -> f64 {
    assert!(answer.q > 0, "MAF release needs q > 0");
    (answer.noisy_sum / (2.0 * answer.q as f64)).clamp(0.0, 1.0)
}

#[derive(Serialize, Deserialize)]
struct BatchRecord {
    position: String,
    participants: String,
    epsilon: f64,
    mechanism: Mechanism,
}

/// Reads a query batch: `position,participants,epsilon,mechanism` with
/// participants joined by `;`.
pub fn read_query_batch<R: Read>(reader: R) -> Result<Vec<QuerySpec>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize::<BatchRecord>() {
        let line = out.len() as u64 + 2;
        let r = record.map_err(|e| Error::Ingest {
            line: e.position().map_or(line, |p| p.line()),
            message: e.to_string(),
        })?;
        let spec = QuerySpec {
            position: r.position,
            participants: r
                .participants
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            epsilon: r.epsilon,
            mechanism: r.mechanism,
        };
        spec.validate().map_err(|e| Error::Ingest {
            line,
            message: e.to_string(),
        })?;
        out.push(spec);
    }
    Ok(out)
}

pub fn write_query_batch<W: Write>(writer: W, specs: &[QuerySpec]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in specs {
        w.serialize(BatchRecord {
            position: s.position.clone(),
            participants: s.participants.join(";"),
            epsilon: s.epsilon,
            mechanism: s.mechanism,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Answers CSV: `position,q,noisy_sum`.
pub fn write_answers<W: Write>(writer: W, answers: &[QueryAnswer]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for a in answers {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_answers<R: Read>(reader: R) -> Result<Vec<QueryAnswer>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| Error::Ingest {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{Genotype, SnpMeta};
    use crate::pedigree::Degree;
    use crate::plan::MaskPlan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(values: &[Option<u8>]) -> GenotypeMatrix {
        GenotypeMatrix::new(
            (0..values.len()).map(|i| format!("i{i}")).collect(),
            vec![],
            vec![SnpMeta::new("rs1", 0.3).unwrap()],
            values
                .iter()
                .map(|v| vec![v.and_then(Genotype::from_count).unwrap_or(Genotype::Hidden)])
                .collect(),
        )
        .unwrap()
    }

    fn spec(n: usize, epsilon: f64, mechanism: Mechanism) -> QuerySpec {
        QuerySpec {
            position: "rs1".into(),
            participants: (0..n).map(|i| format!("i{i}")).collect(),
            epsilon,
            mechanism,
        }
    }

    fn trio_pedigree() -> Pedigree {
        let mut p = Pedigree::new();
        for id in ["i0", "i1", "i2"] {
            p.add_member(id);
        }
        p.add_relation("i0", "i1", Degree::First).unwrap();
        p.add_relation("i0", "i2", Degree::First).unwrap();
        p
    }

    fn sample_stats(scale: f64, n: usize, seed: u64) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..n).map(|_| laplace_noise(scale, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mad = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        (mean, var, mad)
    }

    #[test]
    fn hidden_cells_count_toward_q() {
        let m = matrix(&[Some(1), Some(2), None]);
        let s = spec(3, 1.0, Mechanism::None);
        assert_eq!(true_count(&m, &s).unwrap(), 3);
        let a = answer_query(&m, &s, &Pedigree::new(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((a.q, a.noisy_sum), (3, 3.0));

        let all_hidden = matrix(&[None, None]);
        assert_eq!(true_count(&all_hidden, &spec(2, 1.0, Mechanism::None)).unwrap(), 0);
        assert_eq!(true_count(&matrix(&[Some(0); 3]), &spec(3, 1.0, Mechanism::None)).unwrap(), 0);
    }

    #[test]
    fn q_is_invariant_under_masking() {
        let m = matrix(&[Some(1), Some(2), Some(1)]);
        let mut plan = MaskPlan::default();
        plan.insert("i1", "rs1");
        let masked = m.apply_mask(&plan).unwrap();
        let s = spec(3, 1.0, Mechanism::StandardLpm);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = answer_query(&m, &s, &Pedigree::new(), &mut rng).unwrap();
        let after = answer_query(&masked, &s, &Pedigree::new(), &mut rng).unwrap();
        assert_eq!(before.q, after.q);
        assert_eq!(true_count(&masked, &s).unwrap(), 2);
    }

    #[test]
    fn scales() {
        assert_eq!(noise_scale(Mechanism::StandardLpm, 0.5, 1), Some(4.0));
        assert_eq!(noise_scale(Mechanism::None, 0.5, 3), None);
        let ped = trio_pedigree();
        let participants = spec(5, 1.0, Mechanism::DependentSensitivity).participants;
        let d = dependence_multiplier(&participants, &ped);
        assert_eq!(d, 3);
        assert_eq!(noise_scale(Mechanism::DependentSensitivity, 1.0, d), Some(6.0));
        assert_eq!(dependence_multiplier(&participants, &Pedigree::new()), 1);
    }

    #[test]
    fn laplace_moments() {
        let (mean, var, _) = sample_stats(4.0, 100_000, 3);
        assert!((var - 32.0).abs() / 32.0 < 0.1, "variance {var}");
        assert!(mean.abs() < 3.0 * (32.0f64 / 1e5).sqrt(), "mean {mean}");
    }

    #[test]
    fn mean_absolute_deviation_is_scale() {
        let m = matrix(&[Some(1), Some(2), Some(0)]);
        let s = spec(3, 5.0, Mechanism::StandardLpm);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let mut abs_dev = 0.0;
        let mut total = 0.0;
        for _ in 0..n {
            let a = answer_query(&m, &s, &Pedigree::new(), &mut rng).unwrap();
            abs_dev += (a.noisy_sum - 3.0).abs();
            total += a.noisy_sum;
        }
        assert!((abs_dev / n as f64 - 0.4).abs() < 0.04);
        // unbiased within 3 standard errors (sd = 0.4·√2)
        let se = 0.4 * 2f64.sqrt() / (n as f64).sqrt();
        assert!((total / n as f64 - 3.0).abs() < 3.0 * se);
    }

    #[test]
    fn dependent_variance_dominates() {
        let (_, standard, _) = sample_stats(2.0, 50_000, 4);
        let (_, dependent, _) = sample_stats(2.0 * 3.0, 50_000, 4);
        assert!(dependent >= standard);
    }

    /// Neighbouring sums differ by the full sensitivity 2. The binned
    /// empirical likelihood ratio stays within ε plus sampling error.
    #[test]
    fn binned_likelihood_ratio_is_bounded() {
        let epsilon = 1.0;
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let bins = |offset: f64, rng: &mut ChaCha8Rng| {
            let mut h = [0usize; 12];
            for _ in 0..n {
                let x = offset + laplace_noise(2.0 / epsilon, rng);
                let b = ((x + 6.0) / 1.0).floor();
                if (0.0..12.0).contains(&b) {
                    h[b as usize] += 1;
                }
            }
            h
        };
        let a = bins(0.0, &mut rng);
        let b = bins(2.0, &mut rng);
        for (x, y) in a.iter().zip(&b) {
            let ratio = (*x as f64 / *y as f64).ln().abs();
            assert!(ratio <= epsilon + 0.1, "{x} vs {y}");
        }
    }

    #[test]
    fn maf_release_clamps() {
        let a = |s: f64, q: usize| QueryAnswer {
            position: "rs1".into(),
            q,
            noisy_sum: s,
        };
        assert_eq!(maf_release(&a(3.0, 3)), 0.5);
        assert_eq!(maf_release(&a(-2.0, 3)), 0.0);
        assert_eq!(maf_release(&a(6.0, 3)), 1.0);
        assert_eq!(maf_release(&a(9.0, 3)), 1.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(0, 1.0, Mechanism::StandardLpm).validate().is_err());
        assert!(spec(1, 0.0, Mechanism::StandardLpm).validate().is_err());
        assert!(spec(1, 0.0, Mechanism::None).validate().is_ok());
        let m = matrix(&[Some(1)]);
        let mut s = spec(1, 1.0, Mechanism::None);
        s.position = "rs9".into();
        assert!(true_count(&m, &s).is_err());
    }

    #[test]
    fn batch_and_answers_round_trip() {
        let specs = vec![spec(3, 0.5, Mechanism::StandardLpm), spec(2, 1.0, Mechanism::None)];
        let mut buf = Vec::new();
        write_query_batch(&mut buf, &specs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("position,participants,epsilon,mechanism\nrs1,i0;i1;i2,0.5,standard_lpm\n"));
        assert_eq!(read_query_batch(text.as_bytes()).unwrap(), specs);

        let answers = vec![QueryAnswer {
            position: "rs1".into(),
            q: 3,
            noisy_sum: -1.25,
        }];
        let mut buf = Vec::new();
        write_answers(&mut buf, &answers).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "position,q,noisy_sum\nrs1,3,-1.25\n");
        assert_eq!(read_answers(buf.as_slice()).unwrap(), answers);

        let bad = "position,participants,epsilon,mechanism\nrs1,i0,0.5,gaussian\n";
        assert!(matches!(read_query_batch(bad.as_bytes()), Err(Error::Ingest { line: 2, .. })));
    }
}
