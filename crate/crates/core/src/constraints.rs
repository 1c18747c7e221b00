//! Symmetric graph sets described through conditions on the edge profile.
//!
//! A [`ConstraintSpec`] says which integer profiles are admitted. Every
//! variant is convex in the sense needed downstream: the admitted profiles
//! are exactly the integer points of a convex region of the profile box.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphspace::EdgePartition;
use crate::lp;

/// Slack used when comparing `A m` against `b`, relative to `1 + |b|`. It
/// only absorbs rounding in the dot product.
const LINEAR_SLACK: f64 = 1e-12;

fn default_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConstraintSpec {
    /// `A m <= b` componentwise; `a` is row-major, one row per constraint.
    #[serde(rename = "linear")]
    LinearSystem { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `sum_i costs_i m_i <= budget`.
    Budget { costs: Vec<f64>, budget: f64 },
    /// `lo_i <= m_i <= hi_i`.
    Box { lo: Vec<u64>, hi: Vec<u64> },
    /// `||T(M)||_2 < threshold` for the branching matrix of the group-pair
    /// edge counts. Groups are 0-based; `block_index[i]` is the unordered
    /// group pair of part `i`.
    Spectral {
        rho: Vec<f64>,
        connector: usize,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        block_index: Vec<(usize, usize)>,
    },
    /// Conjunction. The empty intersection admits every profile.
    Intersection { members: Vec<ConstraintSpec> },
}

impl ConstraintSpec {
    /// No constraint at all: `S` is every graph.
    pub fn unconstrained() -> Self {
        Self::Intersection { members: Vec::new() }
    }

    /// The `G(n, m)` set on a single-part partition.
    pub fn exact_edges(m: u64) -> Self {
        Self::Box {
            lo: vec![m],
            hi: vec![m],
        }
    }

    pub fn validate(&self, part: &EdgePartition) -> Result<()> {
        let k = part.k();
        match self {
            Self::LinearSystem { a, b } => {
                if a.len() != b.len() {
                    return invalid(format!("A has {} rows but b has {}", a.len(), b.len()));
                }
                if let Some(row) = a.iter().find(|r| r.len() != k) {
                    return invalid(format!("A row has {} columns, expected k = {k}", row.len()));
                }
                if a.iter().flatten().chain(b).any(|x| !x.is_finite()) {
                    return invalid("linear system entries must be finite");
                }
            }
            Self::Budget { costs, budget } => {
                if costs.len() != k {
                    return invalid(format!("{} costs given, expected k = {k}", costs.len()));
                }
                if costs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) || !budget.is_finite() {
                    return invalid("budget costs must be finite and nonnegative");
                }
            }
            Self::Box { lo, hi } => {
                if lo.len() != k || hi.len() != k {
                    return invalid(format!("box bounds must have length k = {k}"));
                }
                for (i, ((&l, &h), &p)) in lo.iter().zip(hi).zip(part.part_sizes()).enumerate() {
                    if l > h || h > p {
                        return invalid(format!("box bounds violate 0 <= lo <= hi <= p at part {i}"));
                    }
                }
            }
            Self::Spectral {
                rho,
                connector,
                threshold,
                block_index,
            } => {
                let ell = rho.len();
                if ell == 0 || rho.iter().any(|r| !(*r > 0.0)) {
                    return invalid("group fractions rho must be positive");
                }
                if (rho.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return invalid("group fractions rho must sum to 1");
                }
                if *connector >= ell {
                    return invalid(format!("connector {connector} is not one of {ell} groups"));
                }
                if !threshold.is_finite() {
                    return invalid("spectral threshold must be finite");
                }
                if block_index.len() != k || k != ell * (ell + 1) / 2 {
                    return invalid(format!(
                        "spectral constraint needs the group-pair partition with {} parts, got k = {k}",
                        ell * (ell + 1) / 2
                    ));
                }
                let mut seen = vec![false; ell * ell];
                for &(a, b) in block_index {
                    let (a, b) = (a.min(b), a.max(b));
                    if b >= ell || seen[a * ell + b] {
                        return invalid(format!("group pair ({a}, {b}) invalid or repeated"));
                    }
                    seen[a * ell + b] = true;
                }
            }
            Self::Intersection { members } => {
                for m in members {
                    m.validate(part)?;
                }
            }
        }
        Ok(())
    }

    /// Whether the integer profile `m` is admitted.
    pub fn contains(&self, m: &[u64], part: &EdgePartition) -> Result<bool> {
        part.check_profile(m)?;
        self.validate(part)?;
        let v: Vec<f64> = m.iter().map(|&x| x as f64).collect();
        Ok(self.admits(&v, part))
    }

    /// Whether a real profile satisfies every condition. Assumes validation.
    pub(crate) fn admits(&self, v: &[f64], part: &EdgePartition) -> bool {
        match self {
            Self::LinearSystem { a, b } => a
                .iter()
                .zip(b)
                .all(|(row, &bj)| dot(row, v) <= bj + LINEAR_SLACK * (1.0 + bj.abs())),
            Self::Budget { costs, budget } => {
                dot(costs, v) <= budget + LINEAR_SLACK * (1.0 + budget.abs())
            }
            Self::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&l, &h))| x >= l as f64 && x <= h as f64),
            Self::Spectral { .. } => {
                let block = SpectralBlock::from_spec(self, part).expect("validated");
                spectral_norm(&block.matrix(v)) < block.threshold
            }
            Self::Intersection { members } => members.iter().all(|s| s.admits(v, part)),
        }
    }

    /// Flatten into box bounds, linear rows and spectral blocks.
    pub fn linear_form(&self, part: &EdgePartition) -> Result<LinearForm> {
        self.validate(part)?;
        let mut form = LinearForm {
            lo: vec![0.0; part.k()],
            hi: part.part_sizes().iter().map(|&p| p as f64).collect(),
            rows: Vec::new(),
            rhs: Vec::new(),
            spectral: Vec::new(),
        };
        self.collect_into(part, &mut form);
        Ok(form)
    }

    fn collect_into(&self, part: &EdgePartition, form: &mut LinearForm) {
        match self {
            Self::LinearSystem { a, b } => {
                form.rows.extend(a.iter().cloned());
                form.rhs.extend(b.iter().copied());
            }
            Self::Budget { costs, budget } => {
                form.rows.push(costs.clone());
                form.rhs.push(*budget);
            }
            Self::Box { lo, hi } => {
                for i in 0..lo.len() {
                    form.lo[i] = form.lo[i].max(lo[i] as f64);
                    form.hi[i] = form.hi[i].min(hi[i] as f64);
                }
            }
            Self::Spectral { .. } => {
                form.spectral.push(SpectralBlock::from_spec(self, part).expect("validated"));
            }
            Self::Intersection { members } => {
                for m in members {
                    m.collect_into(part, form);
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A spec reduced to `lo <= v <= hi`, `rows v <= rhs` and spectral-norm
/// conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub spectral: Vec<SpectralBlock>,
}

impl LinearForm {
    /// Nonemptiness of the linear part over the reals.
    pub fn linear_part_nonempty(&self) -> bool {
        lp::polyhedron_nonempty(&self.lo, &self.hi, &self.rows, &self.rhs)
    }
}

/// Spectral condition bound to a concrete group-pair partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBlock {
    pub rho: Vec<f64>,
    pub connector: usize,
    pub threshold: f64,
    pub block_index: Vec<(usize, usize)>,
    pub n: usize,
}

impl SpectralBlock {
    fn from_spec(spec: &ConstraintSpec, part: &EdgePartition) -> Option<Self> {
        match spec {
            ConstraintSpec::Spectral {
                rho,
                connector,
                threshold,
                block_index,
            } => Some(Self {
                rho: rho.clone(),
                connector: *connector,
                threshold: *threshold,
                block_index: block_index.clone(),
                n: part.n(),
            }),
            _ => None,
        }
    }

    /// Symmetric `l x l` matrix of group-pair edge counts.
    pub fn block_counts(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let ell = self.rho.len();
        let mut m = vec![vec![0.0; ell]; ell];
        for (&(a, b), &x) in self.block_index.iter().zip(v) {
            m[a][b] = x;
            m[b][a] = x;
        }
        m
    }

    pub fn matrix(&self, v: &[f64]) -> Vec<Vec<f64>> {
        branching_matrix(&self.block_counts(v), &self.rho, self.connector, self.n)
            .expect("validated block")
    }

    /// Coefficients over parts of the linear functional `x^T T(v) y`.
    pub(crate) fn bilinear_coefficients(&self, left: &[f64], right: &[f64]) -> Vec<f64> {
        let others: Vec<usize> = (0..self.rho.len()).filter(|&g| g != self.connector).collect();
        let pos = |g: usize| others.iter().position(|&o| o == g);
        let scale = (self.n * self.n) as f64;
        self.block_index
            .iter()
            .map(|&(a, b)| {
                let (Some(ia), Some(ib)) = (pos(a), pos(b)) else {
                    return 0.0;
                };
                if a == b {
                    left[ia] * right[ia] / (scale * self.rho[a])
                } else {
                    left[ia] * right[ib] / (scale * self.rho[a])
                        + left[ib] * right[ia] / (scale * self.rho[b])
                }
            })
            .collect()
    }
}

/// Branching matrix `T_ij = m_ij / (n^2 rho_i)` over groups `i, j != s`.
pub fn branching_matrix(
    m_blocks: &[Vec<f64>],
    rho: &[f64],
    connector: usize,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let ell = rho.len();
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0)) {
        return invalid(format!("group fraction {r} is not positive"));
    }
    if connector >= ell {
        return invalid(format!("connector {connector} is not one of {ell} groups"));
    }
    if m_blocks.len() != ell || m_blocks.iter().any(|r| r.len() != ell) {
        return invalid(format!("block counts must be {ell} x {ell}"));
    }
    let scale = (n * n) as f64;
    let others: Vec<usize> = (0..ell).filter(|&g| g != connector).collect();
    Ok(others
        .iter()
        .map(|&i| {
            others
                .iter()
                .map(|&j| m_blocks[i][j] / (scale * rho[i]))
                .collect()
        })
        .collect())
}

/// Largest singular value.
pub fn spectral_norm(t: &[Vec<f64>]) -> f64 {
    top_singular_triplet(t).0
}

/// Largest singular value with unit left and right singular vectors.
///
/// Power iteration on `T^T T`. The start vector is the heaviest column of a
/// high power of `T^T T` (obtained by repeated squaring), which always has a
/// component along the top eigenspace.
pub(crate) fn top_singular_triplet(t: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
    let rows = t.len();
    let cols = t.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return (0.0, vec![0.0; rows], vec![0.0; cols]);
    }
    let gram: Vec<Vec<f64>> = (0..cols)
        .map(|a| {
            (0..cols)
                .map(|b| (0..rows).map(|r| t[r][a] * t[r][b]).sum())
                .collect()
        })
        .collect();
    let max_entry = gram.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max_entry == 0.0 {
        let mut right = vec![0.0; cols];
        right[0] = 1.0;
        let mut left = vec![0.0; rows];
        left[0] = 1.0;
        return (0.0, left, right);
    }

    let mut power: Vec<Vec<f64>> = gram
        .iter()
        .map(|r| r.iter().map(|x| x / max_entry).collect())
        .collect();
    for _ in 0..40 {
        let mut sq = matmul(&power, &power);
        let m = sq.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        if m == 0.0 || !m.is_finite() {
            break;
        }
        sq.iter_mut().flatten().for_each(|x| *x /= m);
        power = sq;
    }
    let best = (0..cols)
        .max_by(|&a, &b| {
            let na: f64 = power.iter().map(|r| r[a] * r[a]).sum();
            let nb: f64 = power.iter().map(|r| r[b] * r[b]).sum();
            na.total_cmp(&nb)
        })
        .unwrap_or(0);
    let mut x: Vec<f64> = power.iter().map(|r| r[best]).collect();
    normalize(&mut x);

    let mut estimate = rayleigh(&gram, &x);
    for _ in 0..100_000 {
        let mut y = matvec(&gram, &x);
        if normalize(&mut y) == 0.0 {
            break;
        }
        let next = rayleigh(&gram, &y);
        x = y;
        let done = (next - estimate).abs() <= 1e-15 * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let mut left = matvec(t, &x);
    let sigma = normalize(&mut left);
    (sigma, left, x)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum())
                .collect()
        })
        .collect()
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

fn rayleigh(a: &[Vec<f64>], x: &[f64]) -> f64 {
    dot(x, &matvec(a, x))
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Anything that decides membership of integer profiles.
pub trait ProfileSet {
    fn contains_profile(&self, m: &[u64], part: &EdgePartition) -> Result<bool>;
}

impl ProfileSet for ConstraintSpec {
    fn contains_profile(&self, m: &[u64], part: &EdgePartition) -> Result<bool> {
        self.contains(m, part)
    }
}

/// Membership given by an arbitrary predicate on the profile.
pub struct PredicateSet<F>(pub F);

impl<F: Fn(&[u64]) -> bool> ProfileSet for PredicateSet<F> {
    fn contains_profile(&self, m: &[u64], part: &EdgePartition) -> Result<bool> {
        part.check_profile(m)?;
        Ok((self.0)(m))
    }
}

/// Default cap on the number of profiles any enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e7;

/// Fail with a capacity error when the profile box is larger than `cap`.
pub fn check_enumeration_cap(part: &EdgePartition, cap: f64) -> Result<()> {
    let size = part.profile_space_size();
    if size > cap {
        return Err(Error::Capacity {
            what: "profile space",
            size,
            cap,
        });
    }
    Ok(())
}

/// Visit every integer profile of the box in lexicographic order.
pub fn for_each_profile(
    part: &EdgePartition,
    cap: f64,
    mut visit: impl FnMut(&[u64]) -> Result<()>,
) -> Result<()> {
    check_enumeration_cap(part, cap)?;
    let sizes = part.part_sizes();
    let mut m = vec![0u64; sizes.len()];
    loop {
        visit(&m)?;
        let mut i = m.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if m[i] < sizes[i] {
                m[i] += 1;
                break;
            }
            m[i] = 0;
        }
    }
}

/// All admitted integer profiles, in lexicographic order.
pub fn feasible_profiles(
    set: &impl ProfileSet,
    part: &EdgePartition,
    cap: f64,
) -> Result<Vec<Vec<u64>>> {
    let mut out = Vec::new();
    for_each_profile(part, cap, |m| {
        if set.contains_profile(m, part)? {
            out.push(m.to_vec());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Check that every integer point of the convex hull of the admitted
/// profiles is itself admitted.
pub fn verify_convexity(spec: &ConstraintSpec, part: &EdgePartition, cap: f64) -> Result<bool> {
    spec.validate(part)?;
    verify_convexity_of(spec, part, cap)
}

pub fn verify_convexity_of(set: &impl ProfileSet, part: &EdgePartition, cap: f64) -> Result<bool> {
    let feasible = feasible_profiles(set, part, cap)?;
    if feasible.is_empty() {
        return Ok(true);
    }
    let k = part.k();
    let lo: Vec<u64> = (0..k).map(|i| feasible.iter().map(|v| v[i]).min().unwrap()).collect();
    let hi: Vec<u64> = (0..k).map(|i| feasible.iter().map(|v| v[i]).max().unwrap()).collect();
    let vertices: Vec<Vec<f64>> = feasible
        .iter()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .collect();
    let mut convex = true;
    for_each_profile(part, cap, |m| {
        if !convex || m.iter().zip(lo.iter().zip(&hi)).any(|(&x, (&l, &h))| x < l || x > h) {
            return Ok(());
        }
        if feasible.binary_search_by(|v| v.as_slice().cmp(m)).is_ok() {
            return Ok(());
        }
        let point: Vec<f64> = m.iter().map(|&x| x as f64).collect();
        if lp::in_convex_hull(&point, &vertices) {
            convex = false;
        }
        Ok(())
    })?;
    Ok(convex)
}
