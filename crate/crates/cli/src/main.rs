use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kinmask::adversary::{attack_sweep, write_report};
use kinmask::dp::{answer_query, read_answers, read_query_batch, write_answers};
use kinmask::eval::{run_experiment, summarize, write_results, write_summary};
use kinmask::masking::random_mask;
use kinmask::{
    generate_cohort, kinship_matrix, AdversaryKnowledge, AdversaryMode, CohortSpec, Degree, Error,
    ExperimentConfig, GenotypeMatrix, KinshipMatrix, MaskPlan, NoiseModel, Pedigree, Phi, Relatedness,
    SequentialMasker,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "kinmask", version, about = "Kinship-aware SNP hiding for statistical genomic queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort and its pedigree.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pedigree: PathBuf,
    },
    /// Compute a hiding plan that caps related-pair kinship.
    Mask {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pedigree: PathBuf,
        #[arg(long, default_value_t = Phi::DEFAULT.value())]
        phi: f64,
        #[arg(long, value_enum, default_value_t = Strategy::Selective)]
        strategy: Strategy,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pairwise kinship over all individuals.
    Kinship {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a batch of noisy count queries.
    Query {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Needed for the dependent-sensitivity mechanism.
        #[arg(long)]
        pedigree: Option<PathBuf>,
    },
    /// Infer a target's genotypes from released answers.
    Attack {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        kin: PathBuf,
        /// Cohort CSV supplying the public MAF row and the target's true values.
        #[arg(long)]
        maf: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        /// Query batch the answers came from (participants, ε, mechanism).
        #[arg(long)]
        batch: PathBuf,
    },
    /// Run an evaluation sweep.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Selective,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dep,
    Indep,
}

impl From<Mode> for AdversaryMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dep => AdversaryMode::WithDependency,
            Mode::Indep => AdversaryMode::WithoutDependency,
        }
    }
}

/// Files produced by a subcommand, written only once everything succeeded.
type Outputs = Vec<(PathBuf, Vec<u8>)>;

fn read_text(path: &Path) -> kinmask::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> kinmask::Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn load_matrix(input: &Path, plan: Option<&Path>) -> kinmask::Result<GenotypeMatrix> {
    let matrix = GenotypeMatrix::from_csv_reader(open(input)?)?;
    match plan {
        Some(p) => matrix.apply_mask(&MaskPlan::from_json(&read_text(p)?)?),
        None => Ok(matrix),
    }
}

fn run(command: Command) -> kinmask::Result<Outputs> {
    match command {
        Command::Generate { spec, out, pedigree } => {
            let spec: CohortSpec = serde_json::from_str(&read_text(&spec)?)?;
            let (matrix, ped) = generate_cohort(&spec)?;
            let mut csv = Vec::new();
            matrix.to_csv_writer(&mut csv)?;
            Ok(vec![(out, csv), (pedigree, ped.to_json()?.into_bytes())])
        }
        Command::Mask { input, pedigree, phi, strategy, seed, out, trace } => {
            let matrix = load_matrix(&input, None)?;
            let ped = Pedigree::from_json(&read_text(&pedigree)?)?;
            let order = ped.members().to_vec();
            let outcome = SequentialMasker::new(Phi::new(phi)?).run(&matrix, &ped, &order, seed)?;
            let plan = match strategy {
                Strategy::Selective => outcome.plan.clone(),
                Strategy::Random => random_mask(&matrix, &ped, &outcome.plan, seed)?,
            };
            let mut files = vec![(out, plan.to_json()?.into_bytes())];
            if let Some(path) = trace {
                let mut buf = Vec::new();
                outcome.write_trace(&mut buf)?;
                files.push((path, buf));
            }
            Ok(files)
        }
        Command::Kinship { input, plan, out } => {
            let matrix = load_matrix(&input, plan.as_deref())?;
            let (kin, warnings) = kinship_matrix(&matrix, matrix.individuals())?;
            for w in warnings {
                eprintln!("WARN {w}");
            }
            let mut buf = Vec::new();
            kin.write_csv(&mut buf)?;
            Ok(vec![(out, buf)])
        }
        Command::Query { input, plan, batch, seed, out, pedigree } => {
            let matrix = load_matrix(&input, plan.as_deref())?;
            let specs = read_query_batch(open(&batch)?)?;
            let ped = match pedigree {
                Some(p) => Pedigree::from_json(&read_text(&p)?)?,
                None if specs.iter().any(|s| s.mechanism == kinmask::Mechanism::DependentSensitivity) => {
                    return Err(Error::Validation(
                        "the dependent_sensitivity mechanism needs --pedigree".into(),
                    ))
                }
                None => Pedigree::new(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let answers = specs
                .iter()
                .map(|s| answer_query(&matrix, s, &ped, &mut rng))
                .collect::<kinmask::Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            write_answers(&mut buf, &answers)?;
            Ok(vec![(out, buf)])
        }
        Command::Attack { answers, kin, maf, mode, target, out, batch } => {
            let answers = read_answers(open(&answers)?)?;
            let kin = KinshipMatrix::read_csv(open(&kin)?)?;
            let cohort = load_matrix(&maf, None)?;
            let specs = read_query_batch(open(&batch)?)?;
            if specs.len() != answers.len() {
                return Err(Error::Validation(format!(
                    "{} answers for {} queries",
                    answers.len(),
                    specs.len()
                )));
            }
            let participants = specs.first().map(|s| s.participants.clone()).unwrap_or_default();
            if let Some(s) = specs.iter().find(|s| s.participants != participants) {
                return Err(Error::Validation(format!(
                    "query at {} uses a different participant set",
                    s.position
                )));
            }
            let knowledge = AdversaryKnowledge {
                memberships: participants.clone(),
                kinship_metadata: kin.clone(),
                maf_table: cohort.snps().iter().map(|s| (s.id.clone(), s.maf)).collect::<HashMap<_, _>>(),
                mode: mode.into(),
            };
            let d = kinmask::dp::dependence_multiplier(&participants, &related_pedigree(&kin)?);
            let target_row = cohort.individual_index(&target)?;
            let mut posteriors = Vec::with_capacity(answers.len());
            let mut truths = Vec::with_capacity(answers.len());
            let mut positions = Vec::with_capacity(answers.len());
            for (spec, answer) in specs.iter().zip(&answers) {
                if spec.position != answer.position {
                    return Err(Error::Validation(format!(
                        "answer for {} does not match query at {}",
                        answer.position, spec.position
                    )));
                }
                let noise = NoiseModel::for_mechanism(spec.mechanism, spec.epsilon, d);
                let post = attack_sweep(&knowledge, std::slice::from_ref(answer), &participants, &target, noise)?;
                let j = cohort.position_index(&answer.position)?;
                let truth = cohort.get(target_row, j).value().ok_or_else(|| {
                    Error::Validation(format!("{target} has no visible value at {}", answer.position))
                })?;
                posteriors.extend(post);
                truths.push(truth);
                positions.push(answer.position.clone());
            }
            let mut buf = Vec::new();
            write_report(&mut buf, &positions, &truths, &posteriors)?;
            Ok(vec![(out, buf)])
        }
        Command::Evaluate { config, out, summary } => {
            let config = ExperimentConfig::from_json(&read_text(&config)?)?;
            let rows = run_experiment(&config)?;
            let mut results = Vec::new();
            write_results(&mut results, &rows)?;
            let mut sums = Vec::new();
            write_summary(&mut sums, &summarize(&rows)?)?;
            Ok(vec![(out, results), (summary, sums)])
        }
    }
}

/// Relations the kinship file reveals, for the public dependence multiplier.
fn related_pedigree(kin: &KinshipMatrix) -> kinmask::Result<Pedigree> {
    let mut ped = Pedigree::new();
    for e in kin.entries() {
        let degree = match e.degree {
            Relatedness::Duplicate | Relatedness::First => Degree::First,
            Relatedness::Second => Degree::Second,
            Relatedness::Unrelated => continue,
        };
        ped.add_relation(&e.id_a, &e.id_b, degree)?;
    }
    Ok(ped)
}

fn fail(code: &str, message: impl std::fmt::Display, exit: u8) -> ExitCode {
    let line = message.to_string().replace('\n', " ");
    eprintln!("ERROR {code}: {line}");
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 1);
        }
    };
    let outputs = match run(cli.command) {
        Ok(outputs) => outputs,
        Err(e) => return fail(e.code(), &e, if e.is_infeasible() { 2 } else { 1 }),
    };
    for (path, bytes) in outputs {
        if let Err(e) = fs::write(&path, bytes) {
            return fail("io", format!("{}: {e}", path.display()), 1);
        }
    }
    ExitCode::SUCCESS
}
