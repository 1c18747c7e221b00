//! Canonical edge indexing, edge partitions, graphs and edge profiles.
//!
//! The `N = n(n-1)/2` potential edges of a graph on `n` labeled vertices are
//! indexed in lexicographic order of `(u, v)`, `u < v`. Every other module
//! refers to edges by this index.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;

/// Integer edge profile: number of included edges per part.
pub type Profile = Vec<u64>;

pub fn num_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All unordered vertex pairs in canonical order.
pub fn enumerate_edges(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return invalid(format!("need at least 2 vertices, got {n}"));
    }
    let mut out = Vec::with_capacity(num_edges(n));
    for u in 0..n {
        for v in (u + 1)..n {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// Canonical index of the pair `{u, v}`.
pub fn edge_index(n: usize, u: usize, v: usize) -> Result<usize> {
    let (u, v) = if u < v { (u, v) } else { (v, u) };
    if u == v || v >= n {
        return invalid(format!("({u}, {v}) is not an edge of K_{n}"));
    }
    Ok(u * n - u * (u + 1) / 2 + (v - u - 1))
}

/// Assignment of every potential edge to one of `k` nonempty parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePartition {
    n: usize,
    part_of: Vec<usize>,
    part_sizes: Vec<u64>,
    members: Vec<Vec<usize>>,
}

impl EdgePartition {
    /// Build from an explicit edge-to-part map. Part labels must be exactly
    /// `0..k` with every label used.
    pub fn new(n: usize, part_of: Vec<usize>) -> Result<Self> {
        if n < 2 {
            return invalid(format!("need at least 2 vertices, got {n}"));
        }
        let total = num_edges(n);
        if part_of.len() != total {
            return invalid(format!(
                "partition has {} entries, expected N = {total}",
                part_of.len()
            ));
        }
        let k = part_of.iter().max().map_or(0, |&m| m + 1);
        let mut members = vec![Vec::new(); k];
        for (e, &i) in part_of.iter().enumerate() {
            members[i].push(e);
        }
        if let Some(empty) = members.iter().position(|m| m.is_empty()) {
            return invalid(format!("part {empty} is empty"));
        }
        let part_sizes = members.iter().map(|m| m.len() as u64).collect();
        Ok(Self {
            n,
            part_of,
            part_sizes,
            members,
        })
    }

    /// A single part holding every edge.
    pub fn trivial(n: usize) -> Result<Self> {
        Self::new(n, vec![0; num_edges(n)])
    }

    /// `k` contiguous blocks of the canonical order whose sizes differ by at
    /// most one.
    pub fn balanced(n: usize, k: usize) -> Result<Self> {
        let total = num_edges(n);
        if k == 0 || k > total {
            return invalid(format!("k = {k} must be in 1..={total}"));
        }
        let part_of = (0..total).map(|e| e * k / total).collect();
        Self::new(n, part_of)
    }

    /// Geometric binning of edge costs: edges with cost in
    /// `[c_min (1+δ)^i, c_min (1+δ)^(i+1))` share a part, zero-cost edges get
    /// a part of their own and empty bins are dropped.
    pub fn from_costs(n: usize, costs: &[f64], bin_ratio: f64) -> Result<Self> {
        if !(bin_ratio > 0.0) || !bin_ratio.is_finite() {
            return invalid(format!("bin ratio must be positive, got {bin_ratio}"));
        }
        if costs.len() != num_edges(n) {
            return invalid(format!(
                "got {} costs, expected N = {}",
                costs.len(),
                num_edges(n)
            ));
        }
        if let Some(c) = costs.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return invalid(format!("costs must be finite and nonnegative, got {c}"));
        }
        let c_min = costs
            .iter()
            .copied()
            .filter(|&c| c > 0.0)
            .fold(f64::INFINITY, f64::min);
        let growth = 1.0 + bin_ratio;
        // Bin labels: None for zero cost, Some(i) for the i-th geometric bin.
        let labels: Vec<Option<i64>> = costs
            .iter()
            .map(|&c| {
                if c == 0.0 {
                    return None;
                }
                let ratio = c / c_min;
                let mut i = (ratio.ln() / growth.ln()).floor() as i64;
                while i > 0 && ratio < growth.powi(i as i32) {
                    i -= 1;
                }
                while ratio >= growth.powi(i as i32 + 1) {
                    i += 1;
                }
                Some(i)
            })
            .collect();
        let mut distinct: Vec<Option<i64>> = labels.clone();
        distinct.sort();
        distinct.dedup();
        let part_of = labels
            .iter()
            .map(|l| distinct.binary_search(l).expect("label present"))
            .collect();
        Self::new(n, part_of)
    }

    /// Partition by the (unordered) pair of vertex groups of each edge's
    /// endpoints. Returns the partition and the group pair of every part.
    pub fn from_groups(groups: &[usize]) -> Result<(Self, Vec<(usize, usize)>)> {
        let n = groups.len();
        let ell = groups.iter().max().map_or(0, |&g| g + 1);
        let mut pairs = Vec::new();
        for a in 0..ell {
            for b in a..ell {
                pairs.push((a, b));
            }
        }
        let edges = enumerate_edges(n)?;
        let part_of = edges
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (groups[u].min(groups[v]), groups[u].max(groups[v]));
                pairs.binary_search(&(a, b)).expect("pair listed")
            })
            .collect();
        let part = Self::new(n, part_of).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!(
                "every group needs at least 2 vertices and every group must be used ({msg})"
            )),
            other => other,
        })?;
        if part.k() != pairs.len() {
            return invalid("every group needs at least 2 vertices and every group must be used");
        }
        Ok((part, pairs))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.part_sizes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.part_of.len()
    }

    pub fn part_of(&self, edge: usize) -> usize {
        self.part_of[edge]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.part_of
    }

    pub fn part_sizes(&self) -> &[u64] {
        &self.part_sizes
    }

    /// Edge indices of part `i`, ascending.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    /// Product of `(p_i + 1)` as a float, the number of integer profiles in
    /// the box.
    pub fn profile_space_size(&self) -> f64 {
        self.part_sizes.iter().map(|&p| (p + 1) as f64).product()
    }

    pub fn check_profile(&self, m: &[u64]) -> Result<()> {
        if m.len() != self.k() {
            return invalid(format!("profile has length {}, expected k = {}", m.len(), self.k()));
        }
        for (i, (&mi, &pi)) in m.iter().zip(&self.part_sizes).enumerate() {
            if mi > pi {
                return invalid(format!("m[{i}] = {mi} exceeds part size {pi}"));
            }
        }
        Ok(())
    }

    pub fn check_real_profile(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.k() {
            return invalid(format!("profile has length {}, expected k = {}", v.len(), self.k()));
        }
        for (i, (&vi, &pi)) in v.iter().zip(&self.part_sizes).enumerate() {
            if !(vi >= 0.0 && vi <= pi as f64) {
                return invalid(format!("v[{i}] = {vi} outside [0, {pi}]"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n {} k {}\n", self.n, self.k());
        for (e, &i) in self.part_of.iter().enumerate() {
            let _ = writeln!(out, "{e} {i}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty partition file".into()))?
            .split_whitespace()
            .collect();
        let (n, k) = match header.as_slice() {
            ["n", n, "k", k] => (parse_num(n)?, parse_num(k)?),
            _ => return invalid("partition header must be `n <n> k <k>`"),
        };
        let total = num_edges(n);
        let mut part_of = vec![usize::MAX; total];
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [e, i] = fields.as_slice() else {
                return invalid(format!("malformed partition line `{line}`"));
            };
            let (e, i) = (parse_num(e)?, parse_num(i)?);
            if e >= total || part_of[e] != usize::MAX {
                return invalid(format!("edge index {e} out of range or repeated"));
            }
            part_of[e] = i;
        }
        if part_of.contains(&usize::MAX) {
            return invalid("partition file does not assign every edge");
        }
        let part = Self::new(n, part_of)?;
        if part.k() != k {
            return invalid(format!("header says k = {k} but {} parts found", part.k()));
        }
        Ok(part)
    }
}

fn parse_num(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("`{s}` is not a nonnegative integer")))
}

/// Simple graph on `n` labeled vertices, stored as a membership indicator
/// over the canonical edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<bool>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: vec![false; num_edges(n)],
        }
    }

    pub fn complete(n: usize) -> Self {
        Self {
            n,
            edges: vec![true; num_edges(n)],
        }
    }

    pub fn from_indicator(n: usize, edges: Vec<bool>) -> Result<Self> {
        if edges.len() != num_edges(n) {
            return invalid(format!(
                "indicator has length {}, expected {}",
                edges.len(),
                num_edges(n)
            ));
        }
        Ok(Self { n, edges })
    }

    pub fn from_edge_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut g = Self::empty(n);
        for e in indices {
            if e >= g.edges.len() {
                return invalid(format!("edge index {e} out of range"));
            }
            g.edges[e] = true;
        }
        Ok(g)
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let idx = pairs
            .iter()
            .map(|&(u, v)| edge_index(n, u, v))
            .collect::<Result<Vec<_>>>()?;
        Self::from_edge_indices(n, idx)
    }

    /// Graph whose edge set is the set bits of `mask` (bit `e` = edge `e`).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let edges = (0..num_edges(n)).map(|e| mask >> e & 1 == 1).collect();
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, e: usize) -> bool {
        self.edges[e]
    }

    pub fn indicator(&self) -> &[bool] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&b| b).count()
    }

    pub fn edge_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(|(_, &b)| b).map(|(e, _)| e)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let all = enumerate_edges(self.n).unwrap_or_default();
        self.edge_indices().map(|e| all[e]).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            n: self.n,
            edges: self.edges.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.n == other.n && self.edges.iter().zip(&other.edges).all(|(&a, &b)| !a || b)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (u, v) in self.pairs() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty graph file".into()))?
            .split_whitespace()
            .collect();
        let n = match header.as_slice() {
            ["n", n] => parse_num(n)?,
            _ => return invalid("graph header must be `n <n>`"),
        };
        let mut pairs = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [u, v] = fields.as_slice() else {
                return invalid(format!("malformed edge line `{line}`"));
            };
            pairs.push((parse_num(u)?, parse_num(v)?));
        }
        Self::from_pairs(n, &pairs)
    }
}

/// Number of edges of `g` in each part.
pub fn edge_profile(g: &Graph, part: &EdgePartition) -> Result<Profile> {
    if g.n != part.n {
        return invalid(format!(
            "graph has {} vertices, partition has {}",
            g.n, part.n
        ));
    }
    let mut counts = vec![0u64; part.k()];
    for e in g.edge_indices() {
        counts[part.part_of[e]] += 1;
    }
    Ok(counts)
}

/// Per-part densities `a_i = m_i / p_i`.
pub fn density_profile(m: &[f64], part: &EdgePartition) -> Result<Vec<f64>> {
    part.check_real_profile(m)?;
    Ok(m.iter()
        .zip(part.part_sizes())
        .map(|(&mi, &pi)| mi / pi as f64)
        .collect())
}

/// Apply an independent uniformly random permutation inside every part.
pub fn permute_within_parts(g: &Graph, part: &EdgePartition, rng: &mut RandomStream) -> Graph {
    let mut out = Graph::empty(g.n);
    for i in 0..part.k() {
        let members = part.members(i);
        let mut image: Vec<usize> = members.to_vec();
        for j in (1..image.len()).rev() {
            image.swap(j, rng.below(j + 1));
        }
        for (&src, &dst) in members.iter().zip(&image) {
            out.edges[dst] = g.edges[src];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_in_lexicographic_order() {
        assert_eq!(enumerate_edges(3).unwrap(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(enumerate_edges(2).unwrap(), vec![(0, 1)]);
        let four = enumerate_edges(4).unwrap();
        assert_eq!(four.len(), 6);
        assert_eq!(*four.last().unwrap(), (2, 3));
        assert!(enumerate_edges(1).is_err());
    }

    #[test]
    fn edge_index_matches_enumeration() {
        for n in 2..9 {
            for (e, (u, v)) in enumerate_edges(n).unwrap().into_iter().enumerate() {
                assert_eq!(edge_index(n, u, v).unwrap(), e);
                assert_eq!(edge_index(n, v, u).unwrap(), e);
            }
        }
        assert!(edge_index(4, 2, 2).is_err());
        assert!(edge_index(4, 1, 4).is_err());
    }

    #[test]
    fn cost_binning_examples() {
        let p = EdgePartition::from_costs(3, &[1.0; 3], 0.5).unwrap();
        assert_eq!(p.part_sizes(), &[3]);

        let p = EdgePartition::from_costs(3, &[1.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!(p.part_sizes(), &[2, 1]);

        // 2x2 grid: vertices (0,0),(0,1),(1,0),(1,1).
        let s = 2f64.sqrt();
        let costs = [1.0, 1.0, s, s, 1.0, 1.0];
        let p = EdgePartition::from_costs(4, &costs, 0.2).unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.part_sizes(), &[4, 2]);

        assert!(EdgePartition::from_costs(3, &[1.0; 3], 0.0).is_err());
        assert!(EdgePartition::from_costs(3, &[1.0; 3], -1.0).is_err());
    }

    #[test]
    fn zero_cost_edges_get_their_own_part() {
        let p = EdgePartition::from_costs(3, &[0.0, 1.0, 5.0], 0.5).unwrap();
        assert_eq!(p.k(), 3);
        assert_eq!(p.part_of(0), 0);
        // Bins 0 and 3 are nonempty; 1 and 2 are dropped.
        assert_eq!(p.part_sizes(), &[1, 1, 1]);
    }

    #[test]
    fn profile_examples() {
        let part = EdgePartition::new(4, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(edge_profile(&Graph::empty(4), &part).unwrap(), vec![0, 0]);
        assert_eq!(edge_profile(&Graph::complete(4), &part).unwrap(), vec![3, 3]);
        let g = Graph::from_pairs(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(edge_profile(&g, &part).unwrap(), vec![1, 2]);
        assert!(edge_profile(&Graph::empty(5), &part).is_err());
    }

    #[test]
    fn density_examples() {
        let part = EdgePartition::balanced(5, 2).unwrap();
        assert_eq!(part.part_sizes(), &[5, 5]);
        assert_eq!(density_profile(&[0.0, 0.0], &part).unwrap(), vec![0.0, 0.0]);
        assert_eq!(density_profile(&[5.0, 5.0], &part).unwrap(), vec![1.0, 1.0]);
        // n = 9 gives N = 36 = 10 + 20 + 6.
        let labels = (0..36).map(|e| if e < 10 { 0 } else if e < 30 { 1 } else { 2 });
        let part = EdgePartition::new(9, labels.collect()).unwrap();
        assert_eq!(part.part_sizes(), &[10, 20, 6]);
        let a = density_profile(&[5.0, 5.0, 0.0], &part).unwrap();
        assert_eq!(a, vec![0.5, 0.25, 0.0]);
        assert!(density_profile(&[11.0, 0.0, 0.0], &part).is_err());
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(EdgePartition::new(3, vec![0, 0]).is_err());
        assert!(EdgePartition::new(3, vec![0, 2, 2]).is_err());
        assert!(EdgePartition::balanced(3, 4).is_err());
        assert!(EdgePartition::balanced(3, 0).is_err());
    }

    #[test]
    fn group_pair_partition() {
        let (part, pairs) = EdgePartition::from_groups(&[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(part.k(), 6);
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
        assert_eq!(part.part_sizes(), &[1, 4, 4, 1, 4, 1]);
        assert!(EdgePartition::from_groups(&[0, 0, 1]).is_err());
    }

    #[test]
    fn text_formats() {
        let g = Graph::from_pairs(4, &[(2, 3), (0, 1)]).unwrap();
        let text = g.to_text();
        assert_eq!(text, "n 4\n0 1\n2 3\n");
        assert_eq!(Graph::from_text(&text).unwrap(), g);
        assert!(Graph::from_text("n 3\n0 0\n").is_err());
        assert!(Graph::from_text("vertices 3\n").is_err());

        let part = EdgePartition::balanced(4, 2).unwrap();
        let text = part.to_text();
        assert!(text.starts_with("n 4 k 2\n0 0\n"));
        assert_eq!(EdgePartition::from_text(&text).unwrap(), part);
        assert!(EdgePartition::from_text("n 3 k 1\n0 0\n1 0\n").is_err());
        assert!(EdgePartition::from_text("n 3 k 2\n0 0\n1 0\n2 0\n").is_err());
    }

    #[test]
    fn subgraph_and_mask() {
        let g = Graph::from_mask(4, 0b000101);
        assert_eq!(g.edge_indices().collect::<Vec<_>>(), vec![0, 2]);
        assert!(g.is_subgraph_of(&Graph::complete(4)));
        assert!(!Graph::complete(4).is_subgraph_of(&g));
    }
}
