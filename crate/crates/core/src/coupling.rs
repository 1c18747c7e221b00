//! Couplings that nest a uniform graph from a profile-defined set between
//! two product-measure graphs, built from shared uniforms.

use rayon::prelude::*;
use serde::Serialize;

use crate::constraints::ConstraintSpec;
use crate::error::{invalid, Error, Result};
use crate::graphspace::{EdgePartition, Graph, Profile};
use crate::maxent::{maximize_entropy, MaxEntSolution, SolveStatus};
use crate::rng::RandomStream;
use crate::sampler::{ProfileSampler, SamplerOptions, Strategy};

/// The three nested subsets of one Samp/Flip draw, as sorted indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampFlip {
    pub z_minus: Vec<usize>,
    pub x: Vec<usize>,
    pub z_plus: Vec<usize>,
}

impl SampFlip {
    /// `z_minus ⊆ x ⊆ z_plus`, checked element by element.
    pub fn nested(&self) -> bool {
        is_sorted_subset(&self.z_minus, &self.x) && is_sorted_subset(&self.x, &self.z_plus)
    }

    /// The cardinality form `|z_minus| <= m <= |z_plus|`.
    pub fn counts_nested(&self) -> bool {
        self.z_minus.len() <= self.x.len() && self.x.len() <= self.z_plus.len()
    }
}

fn is_sorted_subset(a: &[usize], b: &[usize]) -> bool {
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Positions of the `m` smallest uniforms, ties broken by position.
fn smallest(uniforms: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..uniforms.len()).collect();
    let key = |&i: &usize| (uniforms[i], i);
    if m > 0 && m < order.len() {
        order.select_nth_unstable_by(m - 1, |a, b| key(a).partial_cmp(&key(b)).expect("finite uniforms"));
    }
    order.truncate(m);
    order.sort_unstable();
    order
}

fn below(uniforms: &[f64], p: f64) -> Vec<usize> {
    (0..uniforms.len()).filter(|&i| uniforms[i] <= p).collect()
}

fn couple_with_probabilities(uniforms: &[f64], m: usize, p_minus: f64, p_plus: f64) -> SampFlip {
    SampFlip {
        z_minus: below(uniforms, p_minus),
        x: smallest(uniforms, m),
        z_plus: below(uniforms, p_plus),
    }
}

/// Samp/Flip on a universe of `uniforms.len()` elements: `x` holds the `m`
/// smallest uniforms and `z±` the uniforms at most `m / ((1 ∓ δ) N)`, the
/// upper probability clamped to 1.
pub fn couple_samp_flip(m: usize, delta: f64, uniforms: &[f64]) -> Result<SampFlip> {
    let n = uniforms.len();
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    if m > n {
        return invalid(format!("m = {m} exceeds the universe size {n}"));
    }
    if uniforms.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return invalid("uniforms must lie in [0, 1]");
    }
    let (p_minus, p_plus) = samp_flip_probabilities(n, m, delta);
    Ok(couple_with_probabilities(uniforms, m, p_minus, p_plus))
}

/// `(p−, p+) = (m / ((1 + δ) N), min(1, m / ((1 − δ) N)))`.
pub fn samp_flip_probabilities(universe: usize, m: usize, delta: f64) -> (f64, f64) {
    if universe == 0 {
        return (0.0, 1.0);
    }
    let base = m as f64 / universe as f64;
    (base / (1.0 + delta), (base / (1.0 - delta)).min(1.0))
}

/// Chernoff bound on the Samp/Flip failure probability,
/// `2 exp(−δ² m / (3 (1 + δ)))`.
pub fn samp_flip_failure_bound(m: usize, delta: f64) -> f64 {
    2.0 * (-delta * delta * m as f64 / (3.0 * (1.0 + delta))).exp()
}

/// One draw of the sandwich coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOutcome {
    pub g_minus: Graph,
    pub g: Graph,
    pub g_plus: Graph,
    pub holds: bool,
    pub per_part_holds: Vec<bool>,
    pub profile_used: Profile,
}

/// Shared state for repeated sandwich draws: the entropic optimizer, the
/// clamped per-part probabilities `q_i (1 ± ε)` and the profile sampler.
#[derive(Debug, Clone)]
pub struct SandwichCoupler {
    part: EdgePartition,
    eps: f64,
    solution: MaxEntSolution,
    p_minus: Vec<f64>,
    p_plus: Vec<f64>,
    sampler: ProfileSampler,
}

impl SandwichCoupler {
    pub fn new(
        part: &EdgePartition,
        spec: &ConstraintSpec,
        eps: f64,
        strategy: Strategy,
        opts: &SamplerOptions,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return invalid(format!("epsilon must lie in (0, 1), got {eps}"));
        }
        let solution = maximize_entropy(part, spec, &opts.solver)?;
        match solution.status {
            SolveStatus::Converged => {}
            SolveStatus::Infeasible => return Err(Error::EmptySet),
            SolveStatus::IterationLimit => {
                return Err(Error::InvalidState("entropy maximization did not converge".into()))
            }
        }
        let sampler = ProfileSampler::new(part, spec, strategy, opts)?;
        let p_minus = solution.q_star.iter().map(|q| (q * (1.0 - eps)).clamp(0.0, 1.0)).collect();
        let p_plus = solution.q_star.iter().map(|q| (q * (1.0 + eps)).clamp(0.0, 1.0)).collect();
        Ok(Self {
            part: part.clone(),
            eps,
            solution,
            p_minus,
            p_plus,
            sampler,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn solution(&self) -> &MaxEntSolution {
        &self.solution
    }

    pub fn partition(&self) -> &EdgePartition {
        &self.part
    }

    pub fn strategy(&self) -> Strategy {
        self.sampler.strategy()
    }

    /// Whether `g` is exactly uniform on the set.
    pub fn is_exact(&self) -> bool {
        self.sampler.is_exact()
    }

    /// Nest a graph with profile `v` using one uniform per edge.
    fn assemble(&self, v: Profile, rng: &mut RandomStream) -> CouplingOutcome {
        let total = self.part.num_edges();
        let uniforms: Vec<f64> = (0..total).map(|_| rng.uniform()).collect();
        let mut lower = vec![false; total];
        let mut middle = vec![false; total];
        let mut upper = vec![false; total];
        let mut per_part_holds = Vec::with_capacity(self.part.k());
        for (i, &vi) in v.iter().enumerate() {
            let members = self.part.members(i);
            let local: Vec<f64> = members.iter().map(|&e| uniforms[e]).collect();
            let draw = couple_with_probabilities(&local, vi as usize, self.p_minus[i], self.p_plus[i]);
            for (set, marks) in [(&draw.z_minus, &mut lower), (&draw.x, &mut middle), (&draw.z_plus, &mut upper)] {
                for &j in set {
                    marks[members[j]] = true;
                }
            }
            per_part_holds.push(draw.counts_nested());
        }
        let n = self.part.n();
        CouplingOutcome {
            g_minus: Graph::from_indicator(n, lower).expect("length matches"),
            g: Graph::from_indicator(n, middle).expect("length matches"),
            g_plus: Graph::from_indicator(n, upper).expect("length matches"),
            holds: per_part_holds.iter().all(|&h| h),
            per_part_holds,
            profile_used: v,
        }
    }

    /// One draw. Exact strategies spend a single uniform on the profile;
    /// the mcmc strategy advances its chain instead.
    pub fn sample(&mut self, rng: &mut RandomStream) -> CouplingOutcome {
        let v = match &mut self.sampler {
            ProfileSampler::Mcmc(chain) => chain.sample(rng),
            exact => exact.sample_with_uniform(rng.uniform()).expect("exact strategy"),
        };
        self.assemble(v, rng)
    }

    /// One draw without mutation; exact strategies only.
    pub fn sample_exact(&self, rng: &mut RandomStream) -> Result<CouplingOutcome> {
        let v = self.sampler.sample_with_uniform(rng.uniform())?;
        Ok(self.assemble(v, rng))
    }
}

/// One draw of the sandwich coupling for `spec`.
pub fn sandwich_sample(
    part: &EdgePartition,
    spec: &ConstraintSpec,
    eps: f64,
    strategy: Strategy,
    rng: &mut RandomStream,
) -> Result<CouplingOutcome> {
    let mut coupler = SandwichCoupler::new(part, spec, eps, strategy, &SamplerOptions::default())?;
    Ok(coupler.sample(rng))
}

/// Summary of one trial, as written to the per-trial table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub holds: bool,
    pub per_part_holds: Vec<bool>,
    pub lower_edges: usize,
    pub middle_edges: usize,
    pub upper_edges: usize,
}

impl TrialRecord {
    fn from_outcome(trial_index: u64, o: &CouplingOutcome) -> Self {
        Self {
            trial_index,
            holds: o.holds,
            per_part_holds: o.per_part_holds.clone(),
            lower_edges: o.g_minus.edge_count(),
            middle_edges: o.g.edge_count(),
            upper_edges: o.g_plus.edge_count(),
        }
    }

    /// Per-part verdicts as a string of `0`/`1`.
    pub fn bitstring(&self) -> String {
        self.per_part_holds.iter().map(|&h| if h { '1' } else { '0' }).collect()
    }
}

/// Run `trials` sandwich draws. Trial `t` uses the derived stream
/// `(seed, t)`, so the records do not depend on the thread count. The mcmc
/// strategy runs one chain sequentially on its own derived stream.
pub fn run_sandwich_trials(coupler: &SandwichCoupler, trials: u64, seed: u64) -> Vec<TrialRecord> {
    if coupler.is_exact() {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = RandomStream::derive(seed, t);
                let outcome = coupler.sample_exact(&mut rng).expect("exact strategy");
                TrialRecord::from_outcome(t, &outcome)
            })
            .collect()
    } else {
        let mut chain = match &coupler.sampler {
            ProfileSampler::Mcmc(c) => c.clone(),
            _ => unreachable!("inexact strategy is mcmc"),
        };
        let mut chain_rng = RandomStream::derive(seed, u64::MAX);
        (0..trials)
            .map(|t| {
                let v = chain.sample(&mut chain_rng);
                let mut rng = RandomStream::derive(seed, t);
                TrialRecord::from_outcome(t, &coupler.assemble(v, &mut rng))
            })
            .collect()
    }
}

/// Empirical containment rate with a 99% normal-approximation half-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichRate {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub ci_halfwidth: f64,
    /// Set when a single trial makes the interval meaningless.
    pub degenerate: bool,
}

/// Two-sided 99% standard normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

impl SandwichRate {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let trials = records.len() as u64;
        let successes = records.iter().filter(|r| r.holds).count() as u64;
        Self::from_counts(successes, trials)
    }

    pub fn from_counts(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                trials,
                successes,
                rate: f64::NAN,
                ci_halfwidth: f64::NAN,
                degenerate: true,
            };
        }
        let rate = successes as f64 / trials as f64;
        let (ci_halfwidth, degenerate) = if trials == 1 {
            (1.0, true)
        } else {
            (Z_99 * (rate * (1.0 - rate) / trials as f64).sqrt(), false)
        };
        Self {
            trials,
            successes,
            rate,
            ci_halfwidth,
            degenerate,
        }
    }
}

/// Fraction of `trials` sandwich draws in which the containment holds.
pub fn empirical_sandwich_rate(coupler: &SandwichCoupler, trials: u64, seed: u64) -> Result<SandwichRate> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    Ok(SandwichRate::from_records(&run_sandwich_trials(coupler, trials, seed)))
}
