//! Uniform sampling from profile-defined sets by the two-stage procedure:
//! draw the edge profile from its induced law `P(v) ∝ exp(Ent(v))`, then
//! a uniform `v_i`-subset of every part.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{feasible_profiles, ConstraintSpec, DEFAULT_ENUMERATION_CAP};
use crate::error::{invalid, Error, Result};
use crate::graphspace::{EdgePartition, Graph, Profile};
use crate::maxent::{ent, ln_binomial, maximize_entropy, ProbabilityMatrix, SolverOptions};
use crate::rng::RandomStream;

/// How the profile is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "enumeration", alias = "enum")]
    Enumeration,
    #[serde(rename = "budget-dp", alias = "dp")]
    BudgetDp,
    #[serde(rename = "mcmc")]
    Mcmc,
}

impl Strategy {
    /// Whether draws follow the induced profile law exactly.
    pub fn is_exact(self) -> bool {
        !matches!(self, Strategy::Mcmc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Enumeration => "enumeration",
            Strategy::BudgetDp => "budget-dp",
            Strategy::Mcmc => "mcmc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enum" | "enumeration" => Ok(Strategy::Enumeration),
            "dp" | "budget-dp" => Ok(Strategy::BudgetDp),
            "mcmc" => Ok(Strategy::Mcmc),
            other => Err(Error::InvalidStrategy(format!(
                "unknown strategy {other:?}, expected enum, dp or mcmc"
            ))),
        }
    }
}

/// Stable `ln Σ exp(x_i)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, Default)]
struct OnlineLogSumExp {
    max: f64,
    scaled: f64,
}

impl OnlineLogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// The induced profile law of a set, with its support listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDistribution {
    pub support: Vec<Profile>,
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    pub strategy: Strategy,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl ProfileDistribution {
    /// Enumerate the feasible profiles of `spec` and weight each by `Ent`.
    pub fn enumerate(part: &EdgePartition, spec: &ConstraintSpec, cap: f64) -> Result<Self> {
        spec.validate(part)?;
        let support = feasible_profiles(spec, part, cap)?;
        Self::from_support(part, support, Strategy::Enumeration)
    }

    pub(crate) fn from_support(
        part: &EdgePartition,
        support: Vec<Profile>,
        strategy: Strategy,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySet);
        }
        let log_weights = support
            .iter()
            .map(|v| ent(v, part))
            .collect::<Result<Vec<_>>>()?;
        let log_z = log_sum_exp(&log_weights);
        let mut acc = 0.0;
        let cdf = log_weights
            .iter()
            .map(|w| {
                acc += (w - log_z).exp();
                acc
            })
            .collect();
        Ok(Self {
            support,
            log_weights,
            log_z,
            strategy,
            cdf,
        })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| (w - self.log_z).exp()).collect()
    }

    /// Probability of `v`, zero off the support.
    pub fn probability(&self, v: &[u64]) -> f64 {
        match self.support.binary_search_by(|s| s.as_slice().cmp(v)) {
            Ok(i) => (self.log_weights[i] - self.log_z).exp(),
            Err(_) => 0.0,
        }
    }

    /// Inverse-CDF draw from a single uniform in [0, 1).
    pub fn sample_with_uniform(&self, u: f64) -> Profile {
        let i = self.cdf.partition_point(|&c| c <= u).min(self.support.len() - 1);
        self.support[i].clone()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Profile {
        self.sample_with_uniform(rng.uniform())
    }
}

/// Default cap on budget-DP work, counted as table cells times part sizes.
pub const DEFAULT_DP_CAP: f64 = 1e10;

/// Exact profile sampler for a single budget constraint with integer (or
/// rationally scaled) costs. `table[j][b]` is the log of the weighted count
/// of profiles of parts `0..j` spending at most `b`.
#[derive(Debug, Clone)]
pub struct BudgetDp {
    sizes: Vec<u64>,
    costs: Vec<u64>,
    budget: u64,
    scale: u64,
    ln_binom: Vec<Vec<f64>>,
    table: Vec<Vec<f64>>,
}

/// Smallest denominator `q <= max_den` with `x ≈ p/q`, by continued fractions.
fn rational_denominator(x: f64, max_den: u64) -> Option<u64> {
    let tol = 4.0 * f64::EPSILON * x.abs().max(1.0);
    let (mut h0, mut h1) = (0.0f64, 1.0f64);
    let (mut k0, mut k1) = (1.0f64, 0.0f64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > max_den as f64 {
            return None;
        }
        if (x - h2 / k2).abs() <= tol {
            return Some(k2 as u64);
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl BudgetDp {
    /// Largest denominator accepted when scaling rational costs.
    pub const MAX_SCALE: u64 = 1_000_000;

    pub fn new(part: &EdgePartition, spec: &ConstraintSpec, cap: f64) -> Result<Self> {
        spec.validate(part)?;
        let (costs, budget) = match spec {
            ConstraintSpec::Budget { costs, budget } => (costs, *budget),
            ConstraintSpec::Intersection { members } if members.len() == 1 => match &members[0] {
                ConstraintSpec::Budget { costs, budget } => (costs, *budget),
                _ => return Err(Error::InvalidStrategy("budget-dp needs a single budget constraint".into())),
            },
            _ => return Err(Error::InvalidStrategy("budget-dp needs a single budget constraint".into())),
        };
        let mut scale = 1u64;
        for &c in costs {
            let den = rational_denominator(c, Self::MAX_SCALE).ok_or_else(|| {
                Error::InvalidStrategy(format!("cost {c} is not a rational with denominator <= 1e6"))
            })?;
            scale = scale / gcd(scale, den) * den;
            if scale > Self::MAX_SCALE {
                return Err(Error::InvalidStrategy(format!(
                    "cost denominators need a scale above 1e6 ({scale})"
                )));
            }
        }
        let int_costs: Vec<u64> = costs.iter().map(|&c| (c * scale as f64).round() as u64).collect();
        let scaled_budget = budget * scale as f64;
        if scaled_budget < -1e-9 * (1.0 + scaled_budget.abs()) {
            return Err(Error::EmptySet);
        }
        let sizes = part.part_sizes().to_vec();
        let full: u64 = int_costs.iter().zip(&sizes).map(|(c, p)| c * p).sum();
        let budget = ((scaled_budget + 1e-9 * (1.0 + scaled_budget.abs())).floor().max(0.0) as u64).min(full);
        let work = (budget as f64 + 1.0) * sizes.iter().map(|&p| p as f64 + 1.0).sum::<f64>();
        if work > cap {
            return Err(Error::Capacity {
                what: "budget dp work",
                size: work,
                cap,
            });
        }
        let ln_binom: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&p| (0..=p).map(|v| ln_binomial(p, v)).collect())
            .collect();
        let width = budget as usize + 1;
        let mut table = vec![vec![0.0; width]];
        for j in 0..sizes.len() {
            let prev = &table[j];
            let (c, lb) = (int_costs[j], &ln_binom[j]);
            let row: Vec<f64> = (0..width)
                .into_par_iter()
                .map(|b| {
                    let mut acc = OnlineLogSumExp::new();
                    for (v, &w) in lb.iter().enumerate() {
                        let spend = c * v as u64;
                        if spend > b as u64 {
                            break;
                        }
                        acc.push(w + prev[b - spend as usize]);
                    }
                    acc.value()
                })
                .collect();
            table.push(row);
        }
        Ok(Self {
            sizes,
            costs: int_costs,
            budget,
            scale,
            ln_binom,
            table,
        })
    }

    /// `ln Z`, the log of the set size.
    pub fn log_z(&self) -> f64 {
        self.table[self.sizes.len()][self.budget as usize]
    }

    /// Factor that turns the given costs into integers.
    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn admits(&self, v: &[u64]) -> bool {
        v.len() == self.sizes.len()
            && v.iter().zip(&self.sizes).all(|(x, p)| x <= p)
            && v.iter().zip(&self.costs).map(|(x, c)| x * c).sum::<u64>() <= self.budget
    }

    /// Probability of `v` under the induced law.
    pub fn probability(&self, v: &[u64]) -> f64 {
        if !self.admits(v) {
            return 0.0;
        }
        let w: f64 = v.iter().enumerate().map(|(i, &x)| self.ln_binom[i][x as usize]).sum();
        (w - self.log_z()).exp()
    }

    /// Pick `v_j` given remaining budget `b`; returns the value and the
    /// uniform rescaled to the chosen cell.
    fn choose(&self, j: usize, b: u64, u: f64) -> (u64, f64) {
        let row = &self.table[j];
        let total = self.table[j + 1][b as usize];
        let c = self.costs[j];
        let mut cum = 0.0;
        let mut last = (0u64, 0.0f64, 0.0f64);
        for (v, &w) in self.ln_binom[j].iter().enumerate() {
            let spend = c * v as u64;
            if spend > b {
                break;
            }
            let prob = (w + row[(b - spend) as usize] - total).exp();
            if prob == 0.0 {
                continue;
            }
            if u < cum + prob {
                let rescaled = ((u - cum) / prob).clamp(0.0, 1.0 - f64::EPSILON);
                return (v as u64, rescaled);
            }
            last = (v as u64, cum, prob);
            cum += prob;
        }
        // Rounding left u past the accumulated mass: take the last cell.
        let rescaled = ((u - last.1) / last.2).clamp(0.0, 1.0 - f64::EPSILON);
        (last.0, rescaled)
    }

    /// Backward sampling from one uniform, rescaled between stages.
    pub fn sample_with_uniform(&self, u: f64) -> Profile {
        let k = self.sizes.len();
        let mut v = vec![0u64; k];
        let (mut b, mut u) = (self.budget, u);
        for j in (0..k).rev() {
            let (x, rest) = self.choose(j, b, u);
            v[j] = x;
            b -= self.costs[j] * x;
            u = rest;
        }
        v
    }

    /// Backward sampling with a fresh uniform per stage.
    pub fn sample(&self, rng: &mut RandomStream) -> Profile {
        let k = self.sizes.len();
        let mut v = vec![0u64; k];
        let mut b = self.budget;
        for j in (0..k).rev() {
            let (x, _) = self.choose(j, b, rng.uniform());
            v[j] = x;
            b -= self.costs[j] * x;
        }
        v
    }
}

/// Burn-in and thinning of the Metropolis chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcOptions {
    pub burn_in: u64,
    /// Steps between returned states; `None` means `k * max_i p_i`.
    pub thinning: Option<u64>,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            burn_in: 100_000,
            thinning: None,
        }
    }
}

/// Metropolis chain on the integer profiles of a set, targeting the
/// induced law. Approximate: no mixing guarantee is made.
#[derive(Debug, Clone)]
pub struct McmcChain {
    part: EdgePartition,
    spec: ConstraintSpec,
    state: Profile,
    burn_in: u64,
    thinning: u64,
    burned: bool,
    proposed: u64,
    accepted: u64,
}

impl McmcChain {
    /// Start from the best feasible rounding of `m_star`.
    pub fn new(part: &EdgePartition, spec: &ConstraintSpec, m_star: &[f64], opts: McmcOptions) -> Result<Self> {
        spec.validate(part)?;
        part.check_real_profile(m_star)?;
        let state = feasible_rounding(part, spec, m_star)?;
        let max_p = part.part_sizes().iter().copied().max().unwrap_or(1);
        let thinning = opts.thinning.unwrap_or(part.k() as u64 * max_p).max(1);
        Ok(Self {
            part: part.clone(),
            spec: spec.clone(),
            state,
            burn_in: opts.burn_in,
            thinning,
            burned: false,
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn state(&self) -> &[u64] {
        &self.state
    }

    pub fn thinning(&self) -> u64 {
        self.thinning
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// One Metropolis step: a uniform part, a uniform ±1 move, acceptance
    /// `min(1, exp(ΔEnt))`, infeasible proposals rejected.
    pub fn step(&mut self, rng: &mut RandomStream) {
        self.proposed += 1;
        let i = rng.below(self.state.len());
        let up = rng.below(2) == 1;
        let p = self.part.part_sizes()[i];
        let old = self.state[i];
        let new = match (up, old) {
            (true, x) if x < p => x + 1,
            (false, x) if x > 0 => x - 1,
            _ => {
                rng.uniform();
                return;
            }
        };
        let delta = ln_binomial(p, new) - ln_binomial(p, old);
        let u = rng.uniform();
        if delta < 0.0 && u >= delta.exp() {
            return;
        }
        self.state[i] = new;
        let real: Vec<f64> = self.state.iter().map(|&x| x as f64).collect();
        if self.spec.admits(&real, &self.part) {
            self.accepted += 1;
        } else {
            self.state[i] = old;
        }
    }

    /// Next thinned state, running the burn-in first if needed.
    pub fn sample(&mut self, rng: &mut RandomStream) -> Profile {
        if !self.burned {
            for _ in 0..self.burn_in {
                self.step(rng);
            }
            self.burned = true;
        }
        for _ in 0..self.thinning {
            self.step(rng);
        }
        self.state.clone()
    }
}

/// The feasible floor/ceiling combination of `m_star` with the largest
/// `Ent`, falling back to the feasible profile nearest in L1.
pub fn feasible_rounding(part: &EdgePartition, spec: &ConstraintSpec, m_star: &[f64]) -> Result<Profile> {
    let k = part.k();
    let sizes = part.part_sizes();
    let mut best: Option<(f64, Profile)> = None;
    if k <= 16 {
        for mask in 0u32..(1 << k) {
            let v: Profile = (0..k)
                .map(|i| {
                    let x = if mask >> i & 1 == 1 { m_star[i].ceil() } else { m_star[i].floor() };
                    (x.max(0.0) as u64).min(sizes[i])
                })
                .collect();
            if spec.contains(&v, part)? {
                let w = ent(&v, part)?;
                if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
                    best = Some((w, v));
                }
            }
        }
    } else {
        let v: Profile = (0..k)
            .map(|i| (m_star[i].round().max(0.0) as u64).min(sizes[i]))
            .collect();
        if spec.contains(&v, part)? {
            best = Some((0.0, v));
        }
    }
    if let Some((_, v)) = best {
        return Ok(v);
    }
    let feasible = feasible_profiles(spec, part, DEFAULT_ENUMERATION_CAP)?;
    let distance = |v: &Profile| -> f64 { v.iter().zip(m_star).map(|(&x, m)| (x as f64 - m).abs()).sum() };
    feasible
        .into_iter()
        .min_by(|a, b| distance(a).total_cmp(&distance(b)))
        .ok_or(Error::EmptySet)
}

/// Geweke-style convergence score: difference of the means of the first
/// 10% and the last 50% of `series`, in units of their naive standard
/// error. `None` for fewer than 20 points or zero variance.
pub fn geweke_z(series: &[f64]) -> Option<f64> {
    if series.len() < 20 {
        return None;
    }
    let head = &series[..series.len() / 10];
    let tail = &series[series.len() / 2..];
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var / n)
    };
    let (ma, va) = stats(head);
    let (mb, vb) = stats(tail);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        None
    } else {
        Some((ma - mb) / se)
    }
}

/// Limits and tuning shared by the profile samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    pub enumeration_cap: f64,
    pub dp_cap: f64,
    pub mcmc: McmcOptions,
    pub solver: SolverOptions,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            dp_cap: DEFAULT_DP_CAP,
            mcmc: McmcOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// A profile sampler for one of the three strategies.
#[derive(Debug, Clone)]
pub enum ProfileSampler {
    Enumeration(ProfileDistribution),
    BudgetDp(BudgetDp),
    Mcmc(McmcChain),
}

impl ProfileSampler {
    pub fn new(
        part: &EdgePartition,
        spec: &ConstraintSpec,
        strategy: Strategy,
        opts: &SamplerOptions,
    ) -> Result<Self> {
        match strategy {
            Strategy::Enumeration => Ok(Self::Enumeration(ProfileDistribution::enumerate(
                part,
                spec,
                opts.enumeration_cap,
            )?)),
            Strategy::BudgetDp => Ok(Self::BudgetDp(BudgetDp::new(part, spec, opts.dp_cap)?)),
            Strategy::Mcmc => {
                let sol = maximize_entropy(part, spec, &opts.solver)?;
                if sol.m_star.is_empty() {
                    return Err(Error::EmptySet);
                }
                Ok(Self::Mcmc(McmcChain::new(part, spec, &sol.m_star, opts.mcmc)?))
            }
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            Self::Enumeration(_) => Strategy::Enumeration,
            Self::BudgetDp(_) => Strategy::BudgetDp,
            Self::Mcmc(_) => Strategy::Mcmc,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.strategy().is_exact()
    }

    pub fn sample(&mut self, rng: &mut RandomStream) -> Profile {
        match self {
            Self::Enumeration(d) => d.sample(rng),
            Self::BudgetDp(d) => d.sample(rng),
            Self::Mcmc(c) => c.sample(rng),
        }
    }

    /// Inverse-CDF draw from one uniform; exact strategies only.
    pub fn sample_with_uniform(&self, u: f64) -> Result<Profile> {
        match self {
            Self::Enumeration(d) => Ok(d.sample_with_uniform(u)),
            Self::BudgetDp(d) => Ok(d.sample_with_uniform(u)),
            Self::Mcmc(_) => Err(Error::InvalidStrategy(
                "mcmc cannot draw a profile from a single uniform".into(),
            )),
        }
    }

    /// Two-stage draw of a graph.
    pub fn sample_graph(&mut self, part: &EdgePartition, rng: &mut RandomStream) -> Result<Graph> {
        let v = self.sample(rng);
        sample_within_parts(&v, part, rng)
    }
}

/// One profile from the induced law of `spec`.
pub fn sample_profile(
    part: &EdgePartition,
    spec: &ConstraintSpec,
    strategy: Strategy,
    rng: &mut RandomStream,
) -> Result<Profile> {
    let mut sampler = ProfileSampler::new(part, spec, strategy, &SamplerOptions::default())?;
    Ok(sampler.sample(rng))
}

/// Independently per part, a uniform `v_i`-subset of the part's edges.
pub fn sample_within_parts(v: &[u64], part: &EdgePartition, rng: &mut RandomStream) -> Result<Graph> {
    part.check_profile(v)?;
    let mut edges = vec![false; part.num_edges()];
    for (i, &vi) in v.iter().enumerate() {
        let mut pool = part.members(i).to_vec();
        let len = pool.len();
        for t in 0..vi as usize {
            let j = t + rng.below(len - t);
            pool.swap(t, j);
            edges[pool[t]] = true;
        }
    }
    Graph::from_indicator(part.n(), edges)
}

/// One graph from the uniform distribution on the set.
pub fn sample_uniform(
    part: &EdgePartition,
    spec: &ConstraintSpec,
    strategy: Strategy,
    rng: &mut RandomStream,
) -> Result<Graph> {
    let mut sampler = ProfileSampler::new(part, spec, strategy, &SamplerOptions::default())?;
    sampler.sample_graph(part, rng)
}

/// Every edge independently with its probability in `q`.
pub fn sample_product(q: &ProbabilityMatrix, rng: &mut RandomStream) -> Graph {
    let edges = q.edge_probabilities().into_iter().map(|p| rng.uniform() < p).collect();
    Graph::from_indicator(q.n(), edges).expect("indicator length matches n")
}

/// Same as [`sample_product`] from per-edge probabilities in canonical
/// edge order.
pub fn sample_product_edges(n: usize, per_edge: &[f64], rng: &mut RandomStream) -> Result<Graph> {
    if per_edge.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return invalid("edge probabilities must lie in [0, 1]");
    }
    let edges = per_edge.iter().map(|&p| rng.uniform() < p).collect();
    Graph::from_indicator(n, edges)
}
