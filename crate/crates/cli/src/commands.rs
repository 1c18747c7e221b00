//! The five subcommands.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use sandwich_core::analysis::{
    concentration_bound, condition_number, resolution, sandwich_delta, sandwich_side_conditions, thickness,
    unimodality_distance, Bound, DiagnosticsReport, SideConditions, Unimodality,
};
use sandwich_core::constraints::feasible_profiles;
use sandwich_core::coupling::{run_sandwich_trials, SandwichCoupler, SandwichRate};
use sandwich_core::graphspace::{EdgePartition, Graph, Profile};
use sandwich_core::maxent::{ent, maximize_entropy, MaxEntSolution, SolveStatus};
use sandwich_core::oracle::{entropy_gap_full_space, profile_space_size, ProfileSpaceSize};
use sandwich_core::sampler::{geweke_z, sample_within_parts, ProfileSampler, Strategy};
use sandwich_core::{ConstraintSpec, RandomStream};

use crate::config::ExperimentConfig;
use crate::output::OutputDir;
use crate::verify::{default_suite, verify_cases, Case, VerifySettings};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Diagnose,
    Sample,
    Couple,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Diagnose => "diagnose",
            Self::Sample => "sample",
            Self::Couple => "couple",
            Self::Verify => "verify",
        }
    }
}

/// Deliberate faults for exercising the failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    CorruptEnt,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub fault: Option<Fault>,
}

const DEFAULT_OUT: &str = "out";

/// Run `command`. `config` may only be absent for `verify`, which then
/// runs the built-in suite. Returns the files written.
pub fn run(command: Command, config: Option<&ExperimentConfig>, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let go = || match (command, config) {
        (Command::Verify, None) => run_default_verify(opts),
        (_, None) => Err(CliError::Config(format!("{}: --config is required", command.name()))),
        (Command::Solve, Some(c)) => run_solve(c),
        (Command::Diagnose, Some(c)) => run_diagnose(c),
        (Command::Sample, Some(c)) => run_sample(c),
        (Command::Couple, Some(c)) => run_couple(c),
        (Command::Verify, Some(c)) => run_verify(c, opts),
    };
    in_pool(opts.jobs, go)
}

/// The built-in verify suite, with seed, draw counts and output directory
/// taken from `config`; its partition and constraint are ignored.
pub fn run_builtin_verify(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    in_pool(opts.jobs, || run_default_verify_with(config, opts))
}

fn in_pool<T: Send>(
    jobs: Option<usize>,
    go: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match jobs {
        Some(0) => Err(CliError::Config("jobs: must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Config(format!("jobs: {e}")))?
            .install(go),
        None => go(),
    }
}

fn open_output(config: &ExperimentConfig, command: Command) -> Result<OutputDir, CliError> {
    let root = config.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    OutputDir::create(&root, config.hash(), config.seed, command.name())
}

fn setup(config: &ExperimentConfig) -> Result<(EdgePartition, ConstraintSpec), CliError> {
    let part = config.build_partition()?;
    let spec = config.build_constraint(&part)?;
    Ok((part, spec))
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    solution: &'a MaxEntSolution,
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    diagnostics: &'a DiagnosticsReport,
}

fn status_result(sol: &MaxEntSolution) -> Result<(), CliError> {
    match sol.status {
        SolveStatus::Converged => Ok(()),
        SolveStatus::Infeasible => Err(sandwich_core::Error::EmptySet.into()),
        SolveStatus::IterationLimit => Err(CliError::IterationLimit),
    }
}

pub fn run_solve(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let (part, spec) = setup(config)?;
    let out = open_output(config, Command::Solve)?;
    let sol = maximize_entropy(&part, &spec, &config.solver)?;
    let mut files = vec![out.write_json("solution.json", &SolutionFile { solution: &sol })?];
    if sol.status != SolveStatus::Infeasible {
        let report = DiagnosticsReport::from_solution(&sol, &part)?;
        files.push(out.write_json("diagnostics.json", &DiagnosticsFile { diagnostics: &report })?);
    }
    status_result(&sol)?;
    Ok(files)
}

#[derive(Serialize)]
struct EpsilonBounds {
    epsilon: f64,
    concentration: Bound,
    sandwich_delta: Bound,
    side_conditions: SideConditions,
}

#[derive(Serialize)]
struct DiagnoseFile {
    status: SolveStatus,
    m_star: Vec<f64>,
    objective: f64,
    diagnostics: DiagnosticsReport,
    bounds: Option<EpsilonBounds>,
    /// Absent when the profile box exceeds the enumeration cap.
    unimodality: Option<Unimodality>,
    profile_space: ProfileSpaceSize,
    /// Only for the unconstrained set.
    full_space_gap: Option<f64>,
}

pub fn run_diagnose(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let (part, spec) = setup(config)?;
    let out = open_output(config, Command::Diagnose)?;
    let sol = maximize_entropy(&part, &spec, &config.solver)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(sandwich_core::Error::EmptySet.into());
    }
    let diagnostics = DiagnosticsReport::from_solution(&sol, &part)?;
    let bounds = match (config.epsilon, diagnostics.lambda_cond) {
        (Some(_), Some(lambda)) => {
            let eps = config.epsilon()?;
            Some(EpsilonBounds {
                epsilon: eps,
                concentration: concentration_bound(eps, diagnostics.mu, lambda),
                sandwich_delta: sandwich_delta(eps, diagnostics.mu, lambda),
                side_conditions: sandwich_side_conditions(eps, diagnostics.mu, part.k(), lambda),
            })
        }
        _ => None,
    };
    let unimodality = if part.profile_space_size() <= config.caps.enumeration {
        let feasible = feasible_profiles(&spec, &part, config.caps.enumeration)?;
        Some(unimodality_distance(&sol.m_star, &feasible, &part)?)
    } else {
        None
    };
    let unconstrained = spec == ConstraintSpec::unconstrained();
    let file = DiagnoseFile {
        status: sol.status,
        m_star: sol.m_star.clone(),
        objective: sol.objective,
        diagnostics,
        bounds,
        unimodality,
        profile_space: profile_space_size(&part),
        full_space_gap: unconstrained.then(|| entropy_gap_full_space(&part)),
    };
    let files = vec![out.write_json("diagnostics.json", &file)?];
    status_result(&sol)?;
    Ok(files)
}

fn require_exact_or_approved(config: &ExperimentConfig) -> Result<(), CliError> {
    if !config.strategy.is_exact() && !config.allow_approx {
        return Err(CliError::Config(format!(
            "strategy: {} is approximate; pass --allow-approx to use it",
            config.strategy
        )));
    }
    Ok(())
}

const CHUNK: u64 = 4096;

#[derive(Serialize)]
struct ChainDiagnostics {
    burn_in: u64,
    thinning: u64,
    acceptance_rate: f64,
    /// Geweke z-score of the `Ent` trace; absent for short or constant
    /// traces.
    geweke_z: Option<f64>,
}

#[derive(Serialize)]
struct SampleFile {
    strategy: Strategy,
    exact: bool,
    draws: u64,
    mean_profile: Vec<f64>,
    chain: Option<ChainDiagnostics>,
}

fn graph_block(t: u64, g: &Graph) -> String {
    format!("graph {t}\n{}", g.to_text())
}

pub fn run_sample(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    require_exact_or_approved(config)?;
    let (part, spec) = setup(config)?;
    let out = open_output(config, Command::Sample)?;
    let mut sampler = ProfileSampler::new(&part, &spec, config.strategy, &config.sampler_options())?;
    let seed = config.seed;
    let mut chain_rng = RandomStream::derive(seed, u64::MAX);
    let mut graphs = out.text_writer("graphs.txt")?;
    let mut profiles = out.text_writer("profiles.csv")?;
    let header: Vec<String> = std::iter::once("draw_index".to_string())
        .chain((1..=part.k()).map(|i| format!("v_{i}")))
        .collect();
    writeln!(profiles, "{}", header.join(","))?;
    let mut sums = vec![0.0; part.k()];
    let mut trace = Vec::new();
    let mut start = 0;
    while start < config.trials {
        let end = (start + CHUNK).min(config.trials);
        let draws: Vec<(Profile, Graph)> = if sampler.is_exact() {
            let sampler = &sampler;
            (start..end)
                .into_par_iter()
                .map(|t| {
                    let mut rng = RandomStream::derive(seed, t);
                    let v = sampler.sample_with_uniform(rng.uniform())?;
                    let g = sample_within_parts(&v, &part, &mut rng)?;
                    Ok((v, g))
                })
                .collect::<Result<_, sandwich_core::Error>>()?
        } else {
            let vs: Vec<Profile> = (start..end).map(|_| sampler.sample(&mut chain_rng)).collect();
            for v in &vs {
                trace.push(ent(v, &part)?);
            }
            vs.into_par_iter()
                .enumerate()
                .map(|(j, v)| {
                    let mut rng = RandomStream::derive(seed, start + j as u64);
                    let g = sample_within_parts(&v, &part, &mut rng)?;
                    Ok((v, g))
                })
                .collect::<Result<_, sandwich_core::Error>>()?
        };
        for (t, (v, g)) in (start..end).zip(&draws) {
            graphs.write_all(graph_block(t, g).as_bytes())?;
            let row: Vec<String> = std::iter::once(t.to_string())
                .chain(v.iter().map(|x| x.to_string()))
                .collect();
            writeln!(profiles, "{}", row.join(","))?;
            for (s, &x) in sums.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        start = end;
    }
    graphs.flush()?;
    profiles.flush()?;
    let chain = match &sampler {
        ProfileSampler::Mcmc(c) => Some(ChainDiagnostics {
            burn_in: config.mcmc.burn_in,
            thinning: c.thinning(),
            acceptance_rate: c.acceptance_rate(),
            geweke_z: geweke_z(&trace),
        }),
        _ => None,
    };
    let draws = config.trials;
    let summary = SampleFile {
        strategy: config.strategy,
        exact: sampler.is_exact(),
        draws,
        mean_profile: sums.iter().map(|s| s / draws as f64).collect(),
        chain,
    };
    let summary_path = out.write_json("sample_summary.json", &summary)?;
    Ok(vec![out.path("graphs.txt"), out.path("profiles.csv"), summary_path])
}

#[derive(Serialize)]
struct CoupleFile {
    epsilon: f64,
    strategy: Strategy,
    exact: bool,
    rate: SandwichRate,
    m_star: Vec<f64>,
    mu: f64,
    lambda: Option<f64>,
    resolution: Option<f64>,
    /// Sandwich failure probability `δ` and whether `ε > sqrt(12 λ)`.
    theorem_delta: Option<Bound>,
    concentration: Option<Bound>,
    /// `rate >= 1 - δ` with `δ` valid.
    valid: bool,
    side_conditions: Option<SideConditions>,
}

pub fn run_couple(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    require_exact_or_approved(config)?;
    let eps = config.epsilon()?;
    let (part, spec) = setup(config)?;
    let out = open_output(config, Command::Couple)?;
    let coupler = SandwichCoupler::new(&part, &spec, eps, config.strategy, &config.sampler_options())?;
    let records = run_sandwich_trials(&coupler, config.trials, config.seed);
    let mut csv = out.text_writer("trials.csv")?;
    writeln!(csv, "trial_index,holds,lower_edges,middle_edges,upper_edges,per_part")?;
    for r in &records {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.trial_index,
            r.holds as u8,
            r.lower_edges,
            r.middle_edges,
            r.upper_edges,
            r.bitstring()
        )?;
    }
    csv.flush()?;
    let rate = SandwichRate::from_records(&records);
    let sol = coupler.solution();
    let (mu, _) = thickness(&sol.m_star, &part)?;
    let lambda = condition_number(mu, part.k(), part.n()).ok();
    let theorem_delta = lambda.map(|l| sandwich_delta(eps, mu, l));
    let valid = theorem_delta.is_some_and(|d| d.valid);
    let file = CoupleFile {
        epsilon: eps,
        strategy: config.strategy,
        exact: coupler.is_exact(),
        m_star: sol.m_star.clone(),
        mu,
        resolution: lambda.map(resolution),
        concentration: lambda.map(|l| concentration_bound(eps, mu, l)),
        side_conditions: lambda.map(|l| sandwich_side_conditions(eps, mu, part.k(), l)),
        lambda,
        theorem_delta,
        valid,
        rate,
    };
    let summary = out.write_json("couple_summary.json", &file)?;
    Ok(vec![out.path("trials.csv"), summary])
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    report: &'a crate::verify::VerifyReport,
}

fn finish_verify(
    out: &OutputDir,
    cases: &[Case],
    settings: &VerifySettings,
) -> Result<Vec<PathBuf>, CliError> {
    let report = verify_cases(cases, settings)?;
    let path = out.write_json("verify.json", &VerifyFile { report: &report })?;
    if !report.passed {
        return Err(CliError::VerifyFailed(report.failures));
    }
    Ok(vec![path])
}

fn settings_for(config: &ExperimentConfig, opts: &RunOptions) -> VerifySettings {
    VerifySettings {
        seed: config.seed,
        draws: config.verify.draws,
        families: config.verify.families,
        permutations: config.verify.permutations,
        caps: config.oracle_caps(),
        sampler: config.sampler_options(),
        solver: config.solver,
        corrupt_ent: opts.fault == Some(Fault::CorruptEnt),
    }
}

pub fn run_verify(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let (part, spec) = setup(config)?;
    let out = open_output(config, Command::Verify)?;
    let case = Case {
        name: "config".into(),
        part,
        spec,
        strategies: vec![config.strategy],
    };
    finish_verify(&out, &[case], &settings_for(config, opts))
}

/// The config the built-in suite runs under; its hash stamps the report.
pub fn default_verify_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        4,
        crate::config::PartitionSource::Trivial,
        ConstraintSpec::unconstrained(),
    );
    c.seed = 2026;
    c
}

fn run_default_verify(opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    run_default_verify_with(&default_verify_config(), opts)
}

fn run_default_verify_with(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let out = open_output(config, Command::Verify)?;
    finish_verify(&out, &default_suite(), &settings_for(config, opts))
}
