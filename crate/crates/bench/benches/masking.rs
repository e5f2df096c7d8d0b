use criterion::{criterion_group, criterion_main, Criterion};
use kinmask::masking::{family_config_counts, solve_hiding_ip};
use kinmask::{generate_cohort, kinship_matrix, CohortSpec, FamilyShape, MafSampler, Phi, SequentialMasker};

fn cohort(shape: FamilyShape) -> CohortSpec {
    CohortSpec {
        n_unrelated: 20,
        family_shape: shape,
        m_snps: 500,
        maf_sampler: MafSampler::default(),
        seed: 1,
    }
}

fn bench_masking(c: &mut Criterion) {
    let (matrix, pedigree) = generate_cohort(&cohort(FamilyShape::TrioPlusAunt)).unwrap();
    let order = pedigree.members().to_vec();

    c.bench_function("kinship_matrix_24x500", |b| {
        b.iter(|| kinship_matrix(&matrix, matrix.individuals()).unwrap())
    });

    let family: Vec<String> = ["son", "father"].map(String::from).to_vec();
    let counts = family_config_counts(&matrix, &family).unwrap();
    c.bench_function("solve_pair", |b| {
        b.iter(|| solve_hiding_ip(&counts, &[(0, 1, Phi::DEFAULT)]).unwrap())
    });

    let family: Vec<String> = ["son", "mother", "aunt"].map(String::from).to_vec();
    let counts = family_config_counts(&matrix, &family).unwrap();
    c.bench_function("solve_three_members", |b| {
        b.iter(|| solve_hiding_ip(&counts, &[(0, 2, Phi::DEFAULT), (1, 2, Phi::DEFAULT)]).unwrap())
    });

    c.bench_function("sequential_mask_trio_plus_aunt", |b| {
        b.iter(|| SequentialMasker::new(Phi::DEFAULT).run(&matrix, &pedigree, &order, 3).unwrap())
    });
}

criterion_group!(benches, bench_masking);
criterion_main!(benches);
