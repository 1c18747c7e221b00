//! Geometry of the optimizer and the concentration and sandwich bounds.
//!
//! All logarithms are natural.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graphspace::EdgePartition;
use crate::maxent::MaxEntSolution;

/// Per-part thickness `min(m*_i, p_i - m*_i)` and their minimum `μ`.
pub fn thickness(m_star: &[f64], part: &EdgePartition) -> Result<(f64, Vec<f64>)> {
    part.check_real_profile(m_star)?;
    let tilde: Vec<f64> = m_star
        .iter()
        .zip(part.part_sizes())
        .map(|(&m, &p)| m.min(p as f64 - m))
        .collect();
    let mu = tilde.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((mu, tilde))
}

/// `λ = 5 k ln(n) / μ`.
pub fn condition_number(mu: f64, k: usize, n: usize) -> Result<f64> {
    if mu == 0.0 {
        return Err(Error::DegenerateThickness);
    }
    if !(mu > 0.0) {
        return invalid(format!("thickness must be positive, got {mu}"));
    }
    Ok(5.0 * k as f64 * (n as f64).ln() / mu)
}

/// Positive root of `r^2 / (1 + r) = λ`.
pub fn resolution(lambda: f64) -> f64 {
    (lambda + (lambda * lambda + 4.0 * lambda).sqrt()) / 2.0
}

/// A bound value together with whether its hypothesis holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub valid: bool,
}

/// Upper bound `exp(-μ (ε²/(1+ε) - λ))` on the probability that some part
/// leaves `[(1-ε) m*_i, (1+ε) m*_i]`; valid for `ε > r(λ)`.
pub fn concentration_bound(eps: f64, mu: f64, lambda: f64) -> Bound {
    Bound {
        value: (-mu * (eps * eps / (1.0 + eps) - lambda)).exp(),
        valid: eps > resolution(lambda),
    }
}

/// Sandwich failure probability `δ = 2 exp(-μ (ε²/12 - λ))`; valid for
/// `ε > sqrt(12 λ)`.
pub fn sandwich_delta(eps: f64, mu: f64, lambda: f64) -> Bound {
    Bound {
        value: 2.0 * (-mu * (eps * eps / 12.0 - lambda)).exp(),
        valid: eps > (12.0 * lambda).sqrt(),
    }
}

/// Conditions used by the last step of the sandwich argument that the
/// headline statement does not list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SideConditions {
    /// `ε < 1/2`.
    pub eps_below_half: bool,
    /// `ln(2k) / μ <= λ`.
    pub union_term_absorbed: bool,
}

pub fn sandwich_side_conditions(eps: f64, mu: f64, k: usize, lambda: f64) -> SideConditions {
    SideConditions {
        eps_below_half: eps < 0.5,
        union_term_absorbed: mu > 0.0 && (2.0 * k as f64).ln() / mu <= lambda,
    }
}

/// Upper bound on `Ent(w) - Ent(m*)`:
/// `-Σ_i (w_i - m*_i)² / max(m̃*_i, w̃_i) + 3 k ln n`.
pub fn entropy_decay_bound(w: &[f64], m_star: &[f64], part: &EdgePartition) -> Result<f64> {
    let (_, tilde_star) = thickness(m_star, part)?;
    let (_, tilde_w) = thickness(w, part)?;
    let quadratic: f64 = (0..part.k())
        .map(|i| {
            let denom = tilde_star[i].max(tilde_w[i]);
            if denom == 0.0 {
                0.0
            } else {
                (w[i] - m_star[i]).powi(2) / denom
            }
        })
        .sum();
    Ok(-quadratic + 3.0 * part.k() as f64 * (part.n() as f64).ln())
}

/// Parts whose thickness is at least `5 k ln n`, ascending.
pub fn well_conditioned_parts(m_star: &[f64], part: &EdgePartition) -> Result<Vec<usize>> {
    let (_, tilde) = thickness(m_star, part)?;
    Ok(well_conditioned_by_thickness(&tilde, part.k(), part.n()))
}

/// Same selection from precomputed per-part thickness values.
pub fn well_conditioned_by_thickness(tilde: &[f64], k: usize, n: usize) -> Vec<usize> {
    let threshold = 5.0 * k as f64 * (n as f64).ln();
    tilde
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unimodality {
    /// `min_v ||m* - v||_1` over the admitted integer profiles.
    pub delta: f64,
    /// `(2Δ + 3k) ln(n) / μ`, absent when `μ = 0`.
    pub adjusted_condition: Option<f64>,
}

pub fn unimodality_distance(
    m_star: &[f64],
    feasible: &[Vec<u64>],
    part: &EdgePartition,
) -> Result<Unimodality> {
    if feasible.is_empty() {
        return invalid("feasible profile set is empty");
    }
    let (mu, _) = thickness(m_star, part)?;
    let delta = feasible
        .iter()
        .map(|v| {
            v.iter()
                .zip(m_star)
                .map(|(&x, &m)| (x as f64 - m).abs())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let adjusted_condition = (mu > 0.0).then(|| {
        (2.0 * delta + 3.0 * part.k() as f64) * (part.n() as f64).ln() / mu
    });
    Ok(Unimodality {
        delta,
        adjusted_condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub k: usize,
    pub mu: f64,
    pub tilde_m: Vec<f64>,
    /// Absent when `μ = 0`; then only `well_conditioned` is meaningful.
    pub lambda_cond: Option<f64>,
    pub resolution: Option<f64>,
    pub well_conditioned: Vec<usize>,
    /// Parts with `m̃_i < 1`, where the product approximation is vacuous.
    pub thin_parts: Vec<usize>,
}

impl DiagnosticsReport {
    pub fn from_solution(sol: &MaxEntSolution, part: &EdgePartition) -> Result<Self> {
        let (mu, tilde_m) = thickness(&sol.m_star, part)?;
        let lambda_cond = match condition_number(mu, part.k(), part.n()) {
            Ok(l) => Some(l),
            Err(Error::DegenerateThickness) => None,
            Err(e) => return Err(e),
        };
        let thin_parts = tilde_m
            .iter()
            .enumerate()
            .filter(|(_, &t)| t < 1.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            n: part.n(),
            k: part.k(),
            mu,
            resolution: lambda_cond.map(resolution),
            lambda_cond,
            well_conditioned: well_conditioned_parts(&sol.m_star, part)?,
            tilde_m,
            thin_parts,
        })
    }
}
