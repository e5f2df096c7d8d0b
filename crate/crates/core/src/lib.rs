//! Selective SNP hiding for statistical genomic datasets.
//!
//! Related participants leak each other's genotypes through noisy count
//! queries. This crate masks the smallest set of heterozygous cells that
//! pushes every related pair's kinship below a ceiling, answers Laplace
//! count queries over the masked data, and measures what a pedigree-aware
//! Bayesian adversary can still infer.

pub mod adversary;
pub mod cohort;
pub mod dp;
pub mod error;
pub mod eval;
pub mod genotype;
pub mod inference;
pub mod kinship;
pub mod masking;
pub mod pedigree;
pub mod plan;
pub mod rng;

pub use cohort::{generate_cohort, CohortSpec, FamilyShape, MafSampler};
pub use error::{Error, PairViolation, Result};
pub use genotype::{Genotype, GenotypeMatrix, SnpMeta};
pub use kinship::{classify_degree, kinship, kinship_matrix, pair_counts, KinshipMatrix, PairCounts, Relatedness};
pub use masking::{sequential_mask, MaskOutcome, Phi, SelectionPolicy, SequentialMasker};
pub use pedigree::{Degree, Pedigree};
pub use plan::MaskPlan;
pub use adversary::{AdversaryKnowledge, AdversaryMode, NoiseModel, Posterior};
pub use dp::{Mechanism, QueryAnswer, QuerySpec};
pub use eval::{EvalMechanism, ExperimentConfig, FamilySet, MetricsRow, SummaryRow};
