//! Exact property checks at oracle scale.
//!
//! Each case enumerates its set explicitly and runs a fixed list of named
//! checks against it. A failed check is reported by name; the caller turns
//! any failure into a nonzero exit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use sandwich_core::constraints::{for_each_profile, verify_convexity, ConstraintSpec};
use sandwich_core::graphspace::{edge_profile, EdgePartition, Graph, Profile};
use sandwich_core::maxent::{ent, maximize_entropy, p_entropy};
use sandwich_core::oracle::{
    empirical_distribution, entropy_gap_full_space, enumerate_spec, exact_profile_distribution,
    profile_space_size, total_variation, verify_conditional_factorization, verify_counting_identity,
    verify_orbit_constancy, ExactSetSummary, OracleCaps,
};
use sandwich_core::sampler::{log_sum_exp, sample_within_parts, ProfileSampler, SamplerOptions, Strategy};
use sandwich_core::{RandomStream, SolverOptions};

use crate::CliError;

/// A named set to verify.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub part: EdgePartition,
    pub spec: ConstraintSpec,
    /// Sampler strategies whose draws are checked against the exact law.
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone)]
pub struct VerifySettings {
    pub seed: u64,
    pub draws: u64,
    pub families: usize,
    pub permutations: usize,
    pub caps: OracleCaps,
    pub sampler: SamplerOptions,
    pub solver: SolverOptions,
    /// Test hook: perturb `Ent` so the entropy checks must fail.
    pub corrupt_ent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub constraint: ConstraintSpec,
    /// `|S|` as a decimal string.
    pub set_size: String,
    pub empty: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub cases: Vec<CaseReport>,
    /// `case/check` for every failed check.
    pub failures: Vec<String>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn from_cases(cases: Vec<CaseReport>) -> Self {
        let failures: Vec<String> = cases
            .iter()
            .flat_map(|c| {
                c.checks
                    .iter()
                    .filter(|k| k.status == Status::Fail)
                    .map(move |k| format!("{}/{}", c.name, k.name))
            })
            .collect();
        Self {
            passed: failures.is_empty(),
            cases,
            failures,
        }
    }
}

/// Built-in cases, all with `n <= 6`.
pub fn default_suite() -> Vec<Case> {
    let exact = vec![Strategy::Enumeration];
    let with_dp = vec![Strategy::Enumeration, Strategy::BudgetDp];
    let (groups, _) = EdgePartition::from_groups(&[0, 0, 1, 1, 2, 2]).expect("valid groups");
    let pairs = EdgePartition::from_groups(&[0, 0, 1, 1, 2, 2]).expect("valid groups").1;
    vec![
        Case {
            name: "full-n4".into(),
            part: EdgePartition::trivial(4).expect("n = 4"),
            spec: ConstraintSpec::unconstrained(),
            strategies: exact.clone(),
        },
        Case {
            name: "gnm-n4-m3".into(),
            part: EdgePartition::trivial(4).expect("n = 4"),
            spec: ConstraintSpec::exact_edges(3),
            strategies: exact.clone(),
        },
        Case {
            name: "budget-n5".into(),
            part: EdgePartition::balanced(5, 2).expect("n = 5"),
            spec: ConstraintSpec::Budget {
                costs: vec![1.0, 2.0],
                budget: 9.0,
            },
            strategies: with_dp.clone(),
        },
        Case {
            name: "box-n5".into(),
            part: EdgePartition::balanced(5, 3).expect("n = 5"),
            spec: ConstraintSpec::Box {
                lo: vec![1, 0, 1],
                hi: vec![3, 2, 3],
            },
            strategies: exact.clone(),
        },
        Case {
            name: "linear-n5".into(),
            part: EdgePartition::balanced(5, 2).expect("n = 5"),
            spec: ConstraintSpec::LinearSystem {
                a: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
                b: vec![6.0, 1.0],
            },
            strategies: exact.clone(),
        },
        Case {
            name: "budget-box-n6".into(),
            part: EdgePartition::balanced(6, 3).expect("n = 6"),
            spec: ConstraintSpec::Intersection {
                members: vec![
                    ConstraintSpec::Budget {
                        costs: vec![1.0, 0.5, 2.0],
                        budget: 8.0,
                    },
                    ConstraintSpec::Box {
                        lo: vec![0, 1, 0],
                        hi: vec![5, 5, 3],
                    },
                ],
            },
            strategies: exact.clone(),
        },
        Case {
            name: "spectral-n6".into(),
            part: groups,
            spec: ConstraintSpec::Spectral {
                rho: vec![1.0 / 3.0; 3],
                connector: 2,
                threshold: 0.2,
                block_index: pairs,
            },
            strategies: exact,
        },
        Case {
            name: "empty-n4".into(),
            part: EdgePartition::trivial(4).expect("n = 4"),
            spec: ConstraintSpec::Budget {
                costs: vec![1.0],
                budget: -1.0,
            },
            strategies: with_dp,
        },
    ]
}

const DISTRIBUTION_CHECKS: [&str; 9] = [
    "orbit-constancy",
    "conditional-factorization",
    "counting-identity",
    "size-dominates-ent",
    "profile-law",
    "grid-optimality",
    "entropy-decay",
    "full-space-gap",
    "sampler-law",
];

struct Checks(Vec<CheckResult>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.0.push(CheckResult {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        });
    }

    fn skip(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.0.push(CheckResult {
            name: name.into(),
            status: Status::Skipped,
            detail: detail.into(),
        });
    }
}

fn ent_of(v: &[u64], part: &EdgePartition, corrupt: bool) -> Result<f64, CliError> {
    let e = ent(v, part)?;
    Ok(if corrupt { e + 0.25 * v.iter().sum::<u64>() as f64 } else { e })
}

fn as_real(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Run every check on one case. Capacity and input errors abort the case;
/// check failures are recorded.
pub fn verify_case(case: &Case, settings: &VerifySettings) -> Result<CaseReport, CliError> {
    let part = &case.part;
    let spec = &case.spec;
    let corrupt = settings.corrupt_ent;
    let n = part.n();
    let k = part.k();
    let mut checks = Checks(Vec::new());

    let space = profile_space_size(part);
    checks.push(
        "profile-space-bound",
        space.within_bound,
        format!("prod (p_i + 1) = {} against n^(2k)", space.count),
    );

    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    for_each_profile(part, settings.caps.profile_cap, |v| {
        let gap = p_entropy(&as_real(v), part)? - ent_of(v, part, corrupt).map_err(core_error)?;
        worst_low = worst_low.min(gap);
        worst_high = worst_high.max(gap);
        Ok(())
    })?;
    let ceiling = k as f64 * (n as f64).ln();
    checks.push(
        "stirling-gap",
        worst_low >= -1e-9 && worst_high <= ceiling + 1e-9,
        format!("gap range [{worst_low:.6}, {worst_high:.6}], ceiling k ln n = {ceiling:.6}"),
    );

    let convex = verify_convexity(spec, part, settings.caps.profile_cap)?;
    checks.push("convexity", convex, "integer points of the hull are admitted");

    let summary = enumerate_spec(part, spec, &settings.caps)?;
    if summary.is_empty() {
        for name in DISTRIBUTION_CHECKS {
            checks.skip(name, "empty-set");
        }
        return Ok(CaseReport {
            name: case.name.clone(),
            n,
            k,
            constraint: spec.clone(),
            set_size: "0".into(),
            empty: true,
            checks: checks.0,
        });
    }

    match summary.graphs() {
        Some(graphs) => {
            let mut rng = RandomStream::derive(settings.seed, 2);
            let full: u64 = 1 << part.num_edges();
            let mut probe: Vec<Graph> = graphs.into_iter().take(64).collect();
            probe.extend((0..64).map(|_| Graph::from_mask(n, rng.below(full as usize) as u64)));
            let member = |g: &Graph| {
                let v = edge_profile(g, part).expect("graph on n vertices");
                spec.contains(&v, part).unwrap_or(false)
            };
            let ok = verify_orbit_constancy(part, &probe, settings.permutations, settings.seed, member);
            checks.push(
                "orbit-constancy",
                ok,
                format!("{} graphs x {} within-part permutations", probe.len(), settings.permutations),
            );
            let ok = verify_conditional_factorization(&summary, settings.families, settings.seed)?;
            checks.push(
                "conditional-factorization",
                ok,
                format!("{} random event families, exact counts", settings.families),
            );
        }
        None => {
            checks.skip("orbit-constancy", "set too large to list");
            checks.skip("conditional-factorization", "set too large to list");
        }
    }

    checks.push(
        "counting-identity",
        verify_counting_identity(&summary),
        "count(v) = prod C(p_i, v_i)",
    );

    let mut max_ent = f64::NEG_INFINITY;
    for v in summary.profiles.keys() {
        max_ent = max_ent.max(ent_of(v, part, corrupt)?);
    }
    checks.push(
        "size-dominates-ent",
        max_ent <= summary.log_size + 1e-12 * (1.0 + summary.log_size.abs()),
        format!("ln|S| = {:.12}, max Ent = {max_ent:.12}", summary.log_size),
    );

    profile_law_check(&summary, corrupt, &mut checks)?;

    let sol = maximize_entropy(part, spec, &settings.solver)?;
    if sol.is_converged() {
        let mut best = f64::NEG_INFINITY;
        for v in summary.profiles.keys() {
            best = best.max(p_entropy(&as_real(v), part)?);
        }
        checks.push(
            "grid-optimality",
            sol.objective >= best - 1e-6,
            format!("H_P(m*) = {:.9}, best integer H_P = {best:.9}", sol.objective),
        );
        let rounded: Vec<u64> = sol.m_star.iter().map(|m| m.round() as u64).collect();
        let base = ent_of(&rounded, part, corrupt)?;
        let mut worst = f64::NEG_INFINITY;
        for w in summary.profiles.keys() {
            let bound = sandwich_core::analysis::entropy_decay_bound(&as_real(w), &sol.m_star, part)?;
            worst = worst.max(ent_of(w, part, corrupt)? - base - bound);
        }
        checks.push(
            "entropy-decay",
            worst <= 1e-9,
            format!("max of Ent(w) - Ent(round m*) - bound = {worst:.6}"),
        );
    } else {
        checks.push("grid-optimality", false, format!("solver status {:?}", sol.status));
        checks.skip("entropy-decay", "solver did not converge");
    }

    // Full space exactly when every profile of the box is admitted.
    if summary.profiles.len().to_string() == space.count {
        let direct = summary.log_size - max_ent;
        let closed = entropy_gap_full_space(part);
        checks.push(
            "full-space-gap",
            (direct - closed).abs() <= 1e-9,
            format!("ln|S| - max Ent = {direct:.12}, closed form {closed:.12}"),
        );
    } else {
        checks.skip("full-space-gap", "set is not the full graph space");
    }

    let exact = exact_profile_distribution(&summary)?;
    for &strategy in &case.strategies {
        sampler_check(case, settings, strategy, &summary, &exact, &mut checks)?;
    }

    Ok(CaseReport {
        name: case.name.clone(),
        n,
        k,
        constraint: spec.clone(),
        set_size: summary.size.to_string(),
        empty: false,
        checks: checks.0,
    })
}

fn core_error(e: CliError) -> sandwich_core::Error {
    match e {
        CliError::Core(e) => e,
        other => sandwich_core::Error::InvalidState(other.to_string()),
    }
}

/// Counted profile law against `exp(Ent(v)) / Z` to 1e-12.
fn profile_law_check(summary: &ExactSetSummary, corrupt: bool, checks: &mut Checks) -> Result<(), CliError> {
    let part = summary.partition();
    let exact = exact_profile_distribution(summary);
    let keys: Vec<&Profile> = summary.profiles.keys().collect();
    let logs = keys
        .iter()
        .map(|v| ent_of(v, part, corrupt))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let z = log_sum_exp(&logs);
    let worst = keys
        .iter()
        .zip(&logs)
        .map(|(v, l)| ((l - z).exp() - summary.profiles[*v].prob).abs())
        .fold(0.0, f64::max);
    let consistent = exact.is_ok();
    checks.push(
        "profile-law",
        consistent && worst <= 1e-12,
        format!("max |count/|S| - exp(Ent)/Z| = {worst:.3e}"),
    );
    Ok(())
}

fn sampler_check(
    case: &Case,
    settings: &VerifySettings,
    strategy: Strategy,
    summary: &ExactSetSummary,
    exact: &BTreeMap<Profile, f64>,
    checks: &mut Checks,
) -> Result<(), CliError> {
    let name = format!("sampler-law[{strategy}]");
    if !strategy.is_exact() {
        checks.skip(name, "approximate strategy");
        return Ok(());
    }
    let part = &case.part;
    let sampler = ProfileSampler::new(part, &case.spec, strategy, &settings.sampler)?;
    let draws = settings.draws;
    if draws == 0 {
        checks.skip(name, "no draws requested");
        return Ok(());
    }
    let pairs: Vec<(Profile, u64)> = (0..draws)
        .into_par_iter()
        .map(|t| {
            let mut rng = RandomStream::derive(settings.seed, t);
            let v = sampler.sample_with_uniform(rng.uniform())?;
            let g = sample_within_parts(&v, part, &mut rng)?;
            let mask = g.edge_indices().fold(0u64, |m, e| m | 1 << e);
            Ok((v, mask))
        })
        .collect::<Result<_, sandwich_core::Error>>()?;
    // A correct sampler has expected TV near 0.4 sqrt(cells / draws).
    let profile_tv = total_variation(&empirical_distribution(pairs.iter().map(|(v, _)| v.clone())), exact);
    let threshold = (exact.len() as f64 / draws as f64).sqrt();
    checks.push(
        name.clone(),
        profile_tv <= threshold,
        format!("profile TV {profile_tv:.5} over {draws} draws, threshold {threshold:.5}"),
    );
    if let Some(uniform) = summary.uniform_distribution().filter(|u| (u.len() as u64) * 100 <= draws) {
        let tv = total_variation(&empirical_distribution(pairs.iter().map(|(_, m)| *m)), &uniform);
        let threshold = (uniform.len() as f64 / draws as f64).sqrt();
        checks.push(
            format!("sampler-graphs[{strategy}]"),
            tv <= threshold,
            format!("graph TV {tv:.5} over {} graphs, threshold {threshold:.5}", uniform.len()),
        );
    }
    Ok(())
}

/// Verify every case; cases run in order, checks inside use the pool.
pub fn verify_cases(cases: &[Case], settings: &VerifySettings) -> Result<VerifyReport, CliError> {
    let reports = cases
        .iter()
        .map(|c| verify_case(c, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport::from_cases(reports))
}
