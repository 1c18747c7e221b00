//! Brute-force ground truth for tiny instances: enumerate the set, count
//! graphs per profile and check the structural identities exactly.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::constraints::{check_enumeration_cap, ConstraintSpec, ProfileSet};
use crate::error::{invalid, Error, Result};
use crate::graphspace::{EdgePartition, Graph, Profile};
use crate::maxent::{ent, ln_binomial};
use crate::rng::RandomStream;
use crate::sampler::log_sum_exp;

/// Largest edge count for which every graph is listed.
pub const MAX_EXPLICIT_EDGES: usize = 24;

/// Limits for [`enumerate_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCaps {
    /// List members explicitly when `N` is at most this.
    pub max_explicit_edges: usize,
    /// Cap on the profile box in counts-only mode.
    pub profile_cap: f64,
}

impl Default for OracleCaps {
    fn default() -> Self {
        Self {
            max_explicit_edges: MAX_EXPLICIT_EDGES,
            profile_cap: crate::constraints::DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Number of graphs and probability of one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCount {
    pub count: BigUint,
    pub prob: f64,
}

/// Exact description of a set: its members (when listed), its size and
/// the law of the profile of a uniform member.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSetSummary {
    part: EdgePartition,
    /// Members as edge bitmasks over the canonical edge order, ascending.
    pub members: Option<Vec<u64>>,
    pub size: BigUint,
    pub log_size: f64,
    pub profiles: BTreeMap<Profile, ProfileCount>,
}

impl ExactSetSummary {
    pub fn partition(&self) -> &EdgePartition {
        &self.part
    }

    pub fn is_empty(&self) -> bool {
        self.size.is_zero()
    }

    /// Members as graphs; `None` in counts-only mode.
    pub fn graphs(&self) -> Option<Vec<Graph>> {
        let n = self.part.n();
        self.members
            .as_ref()
            .map(|ms| ms.iter().map(|&m| Graph::from_mask(n, m)).collect())
    }

    /// Uniform law over the members, keyed by bitmask.
    pub fn uniform_distribution(&self) -> Option<BTreeMap<u64, f64>> {
        let members = self.members.as_ref()?;
        let p = 1.0 / members.len() as f64;
        Some(members.iter().map(|&m| (m, p)).collect())
    }

    /// Profile law as counted, `count(v) / |S|`.
    pub fn counted_distribution(&self) -> BTreeMap<Profile, f64> {
        self.profiles.iter().map(|(v, c)| (v.clone(), c.prob)).collect()
    }

    pub fn to_json(&self) -> SummaryJson {
        SummaryJson {
            size: self.size.to_string(),
            log_size: self.log_size,
            empty: self.is_empty(),
            profiles: self
                .profiles
                .iter()
                .map(|(v, c)| ProfileJson {
                    v: v.clone(),
                    count: c.count.to_string(),
                    prob: c.prob,
                })
                .collect(),
        }
    }
}

/// Serialized form of a summary; counts are decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryJson {
    pub size: String,
    pub log_size: f64,
    pub empty: bool,
    pub profiles: Vec<ProfileJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileJson {
    pub v: Profile,
    pub count: String,
    pub prob: f64,
}

/// `ln x` for a big integer; `-inf` at zero.
pub fn ln_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("64 bits").ln() + shift as f64 * std::f64::consts::LN_2
}

/// `C(p, m)` exactly.
pub fn binomial_big(p: u64, m: u64) -> BigUint {
    if m > p {
        return BigUint::zero();
    }
    let m = m.min(p - m);
    let mut acc = BigUint::one();
    for j in 0..m {
        acc *= p - j;
        acc /= j + 1;
    }
    acc
}

/// `Π_i C(p_i, v_i)`, the number of graphs with profile `v`.
pub fn profile_count(v: &[u64], part: &EdgePartition) -> BigUint {
    v.iter()
        .zip(part.part_sizes())
        .map(|(&vi, &pi)| binomial_big(pi, vi))
        .product()
}

fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    (ln_big(num) - ln_big(den)).exp()
}

fn part_masks(part: &EdgePartition) -> Vec<u64> {
    (0..part.k())
        .map(|i| part.members(i).iter().fold(0u64, |m, &e| m | 1 << e))
        .collect()
}

/// Profile of the graph with edge bitmask `mask`.
pub fn mask_profile(mask: u64, masks: &[u64]) -> Profile {
    masks.iter().map(|&pm| (mask & pm).count_ones() as u64).collect()
}

fn explicit_cap_check(part: &EdgePartition, caps: &OracleCaps) -> Result<()> {
    let total = part.num_edges();
    if total > caps.max_explicit_edges.min(63) {
        return Err(Error::Capacity {
            what: "graphs to list (edges)",
            size: total as f64,
            cap: caps.max_explicit_edges.min(63) as f64,
        });
    }
    Ok(())
}

/// Every graph in the set cut out by an arbitrary predicate on edge
/// bitmasks. Work is sharded over blocks of masks and merged in order.
pub fn enumerate_graph_set(
    part: &EdgePartition,
    caps: &OracleCaps,
    member: impl Fn(u64) -> bool + Sync,
) -> Result<ExactSetSummary> {
    explicit_cap_check(part, caps)?;
    let masks = part_masks(part);
    let total: u64 = 1 << part.num_edges();
    let block: u64 = 1 << 14;
    let blocks = total.div_ceil(block);
    let shards: Vec<(Vec<u64>, BTreeMap<Profile, u64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut members = Vec::new();
            let mut counts = BTreeMap::new();
            for mask in b * block..((b + 1) * block).min(total) {
                if member(mask) {
                    members.push(mask);
                    *counts.entry(mask_profile(mask, &masks)).or_insert(0u64) += 1;
                }
            }
            (members, counts)
        })
        .collect();
    let mut members = Vec::new();
    let mut counts: BTreeMap<Profile, u64> = BTreeMap::new();
    for (m, c) in shards {
        members.extend(m);
        for (v, x) in c {
            *counts.entry(v).or_insert(0) += x;
        }
    }
    let size = BigUint::from(members.len());
    let profiles = counts
        .into_iter()
        .map(|(v, c)| {
            let count = BigUint::from(c);
            let prob = ratio(&count, &size);
            (v, ProfileCount { count, prob })
        })
        .collect();
    Ok(ExactSetSummary {
        part: part.clone(),
        members: Some(members),
        log_size: ln_big(&size),
        size,
        profiles,
    })
}

/// Membership of every profile in the box, indexed in mixed radix.
fn membership_table(set: &(impl ProfileSet + Sync), part: &EdgePartition) -> Result<Vec<bool>> {
    let sizes = part.part_sizes();
    let space: usize = sizes.iter().map(|&p| p as usize + 1).product();
    (0..space)
        .into_par_iter()
        .map(|mut idx| {
            let mut v = vec![0u64; sizes.len()];
            for i in (0..sizes.len()).rev() {
                let radix = sizes[i] as usize + 1;
                v[i] = (idx % radix) as u64;
                idx /= radix;
            }
            set.contains_profile(&v, part)
        })
        .collect()
}

fn table_index(v: &[u64], sizes: &[u64]) -> usize {
    v.iter().zip(sizes).fold(0, |idx, (&x, &p)| idx * (p as usize + 1) + x as usize)
}

/// Enumerate a profile-defined set. Graphs are listed when `N` is small
/// enough; otherwise only the per-profile counts `Π C(p_i, v_i)` are kept.
pub fn enumerate_set(
    part: &EdgePartition,
    set: &(impl ProfileSet + Sync),
    caps: &OracleCaps,
) -> Result<ExactSetSummary> {
    if part.num_edges() <= caps.max_explicit_edges.min(63) {
        let table = membership_table(set, part)?;
        let masks = part_masks(part);
        let sizes = part.part_sizes().to_vec();
        return enumerate_graph_set(part, caps, |mask| {
            table[table_index(&mask_profile(mask, &masks), &sizes)]
        });
    }
    check_enumeration_cap(part, caps.profile_cap)?;
    let mut profiles = BTreeMap::new();
    let mut size = BigUint::zero();
    crate::constraints::for_each_profile(part, caps.profile_cap, |v| {
        if set.contains_profile(v, part)? {
            let count = profile_count(v, part);
            size += &count;
            profiles.insert(v.to_vec(), ProfileCount { count, prob: 0.0 });
        }
        Ok(())
    })?;
    for c in profiles.values_mut() {
        c.prob = ratio(&c.count, &size);
    }
    Ok(ExactSetSummary {
        part: part.clone(),
        members: None,
        log_size: ln_big(&size),
        size,
        profiles,
    })
}

/// Convenience wrapper for a constraint specification.
pub fn enumerate_spec(part: &EdgePartition, spec: &ConstraintSpec, caps: &OracleCaps) -> Result<ExactSetSummary> {
    spec.validate(part)?;
    enumerate_set(part, spec, caps)
}

/// `P(v) = exp(Ent(v)) / Σ_w exp(Ent(w))` over the feasible profiles,
/// cross-checked against the counted law to 1e-12.
pub fn exact_profile_distribution(summary: &ExactSetSummary) -> Result<BTreeMap<Profile, f64>> {
    if summary.is_empty() {
        return invalid("the set is empty, so there is no profile distribution");
    }
    let part = &summary.part;
    let weights = summary
        .profiles
        .keys()
        .map(|v| ent(v, part))
        .collect::<Result<Vec<_>>>()?;
    let log_z = log_sum_exp(&weights);
    let dist: BTreeMap<Profile, f64> = summary
        .profiles
        .keys()
        .zip(&weights)
        .map(|(v, w)| (v.clone(), (w - log_z).exp()))
        .collect();
    for (v, p) in &dist {
        let counted = summary.profiles[v].prob;
        if (p - counted).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "profile {v:?}: entropy law gives {p}, counting gives {counted}"
            )));
        }
    }
    Ok(dist)
}

/// `½ Σ |d1 − d2|` over the union of the supports.
pub fn total_variation<K: Ord>(d1: &BTreeMap<K, f64>, d2: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, p) in d1 {
        sum += (p - d2.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in d2 {
        if !d1.contains_key(k) {
            sum += q.abs();
        }
    }
    (0.5 * sum).min(1.0)
}

/// Empirical law of a sample.
pub fn empirical_distribution<K: Ord + Clone>(draws: impl IntoIterator<Item = K>) -> BTreeMap<K, f64> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    let mut total = 0u64;
    for d in draws {
        *counts.entry(d).or_insert(0) += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

/// Events `A_i = {I_i ⊆ G, O_i ∩ G = ∅}`, one pair per part, given as
/// positions within each part's member list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFamily {
    pub inside: Vec<Vec<usize>>,
    pub outside: Vec<Vec<usize>>,
}

impl EventFamily {
    fn validate(&self, part: &EdgePartition) -> Result<()> {
        let k = part.k();
        if self.inside.len() != k || self.outside.len() != k {
            return invalid(format!("an event family needs one pair of sets per part (k = {k})"));
        }
        for i in 0..k {
            let p = part.part_sizes()[i] as usize;
            if self.inside[i].iter().chain(&self.outside[i]).any(|&j| j >= p) {
                return invalid(format!("event sets of part {i} leave the part"));
            }
            if self.inside[i].iter().any(|j| self.outside[i].contains(j)) {
                return invalid(format!("inside and outside sets of part {i} overlap"));
            }
        }
        Ok(())
    }

    /// Random disjoint sets: each edge goes inside or outside with
    /// probability 1/4 each.
    pub fn random(part: &EdgePartition, rng: &mut RandomStream) -> Self {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for i in 0..part.k() {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for j in 0..part.part_sizes()[i] as usize {
                match rng.below(4) {
                    0 => a.push(j),
                    1 => b.push(j),
                    _ => {}
                }
            }
            inside.push(a);
            outside.push(b);
        }
        Self { inside, outside }
    }

    fn masks(&self, part: &EdgePartition) -> Vec<(u64, u64)> {
        (0..part.k())
            .map(|i| {
                let members = part.members(i);
                let fold = |set: &[usize]| set.iter().fold(0u64, |m, &j| m | 1 << members[j]);
                (fold(&self.inside[i]), fold(&self.outside[i]))
            })
            .collect()
    }
}

/// Check `P(∩ A_i | v) = Π_i P(A_i | v)` for every profile, by exact
/// counting over the listed members.
pub fn check_factorization(summary: &ExactSetSummary, family: &EventFamily) -> Result<bool> {
    let part = &summary.part;
    family.validate(part)?;
    let members = summary
        .members
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("factorization needs the explicit member list".into()))?;
    let masks = part_masks(part);
    let events = family.masks(part);
    let hits = |g: u64, (inside, outside): (u64, u64)| g & inside == inside && g & outside == 0;
    // Per profile: (members, joint hits, per-part hits).
    let mut tallies: BTreeMap<Profile, (u64, u64, Vec<u64>)> = BTreeMap::new();
    for &g in members {
        let entry = tallies
            .entry(mask_profile(g, &masks))
            .or_insert_with(|| (0, 0, vec![0; part.k()]));
        entry.0 += 1;
        let mut all = true;
        for (i, &ev) in events.iter().enumerate() {
            if hits(g, ev) {
                entry.2[i] += 1;
            } else {
                all = false;
            }
        }
        if all {
            entry.1 += 1;
        }
    }
    let k = part.k() as u32;
    Ok(tallies.values().all(|(count, joint, marginals)| {
        let lhs = BigUint::from(*joint) * BigUint::from(*count).pow(k.saturating_sub(1));
        let rhs: BigUint = marginals.iter().map(|&x| BigUint::from(x)).product();
        lhs == rhs
    }))
}

/// Factorization over `families` random event families drawn from the
/// derived stream `(seed, 0)`.
pub fn verify_conditional_factorization(summary: &ExactSetSummary, families: usize, seed: u64) -> Result<bool> {
    let mut rng = RandomStream::derive(seed, 0);
    for _ in 0..families {
        let family = EventFamily::random(&summary.part, &mut rng);
        if !check_factorization(summary, &family)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every counted profile has exactly `Π C(p_i, v_i)` members.
pub fn verify_counting_identity(summary: &ExactSetSummary) -> bool {
    summary
        .profiles
        .iter()
        .all(|(v, c)| c.count == profile_count(v, &summary.part))
}

/// `ln |S| >= Ent(v)` for every profile of the set.
pub fn verify_size_dominates_entropy(summary: &ExactSetSummary) -> Result<bool> {
    for v in summary.profiles.keys() {
        if ent(v, &summary.part)? > summary.log_size + 1e-12 * (1.0 + summary.log_size.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Membership is unchanged under `rounds` random within-part edge
/// permutations of every given graph.
pub fn verify_orbit_constancy(
    part: &EdgePartition,
    graphs: &[Graph],
    rounds: usize,
    seed: u64,
    member: impl Fn(&Graph) -> bool,
) -> bool {
    let mut rng = RandomStream::derive(seed, 1);
    graphs.iter().all(|g| {
        let base = member(g);
        (0..rounds).all(|_| member(&crate::graphspace::permute_within_parts(g, part, &mut rng)) == base)
    })
}

/// `Π_i (p_i + 1)` and whether it is at most `n^{2k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSpaceSize {
    pub count: String,
    pub log_count: f64,
    pub within_bound: bool,
}

pub fn profile_space_size(part: &EdgePartition) -> ProfileSpaceSize {
    let count: BigUint = part.part_sizes().iter().map(|&p| BigUint::from(p + 1)).product();
    let bound = BigUint::from(part.n()).pow(2 * part.k() as u32);
    ProfileSpaceSize {
        log_count: ln_big(&count),
        within_bound: count <= bound,
        count: count.to_string(),
    }
}

/// `N ln 2 − Σ_i ln C(p_i, ⌊p_i / 2⌋)`: how far the largest profile class
/// of the full graph space falls short of the whole space, in nats.
pub fn entropy_gap_full_space(part: &EdgePartition) -> f64 {
    part.num_edges() as f64 * std::f64::consts::LN_2
        - part
            .part_sizes()
            .iter()
            .map(|&p| ln_binomial(p, p / 2))
            .sum::<f64>()
}
