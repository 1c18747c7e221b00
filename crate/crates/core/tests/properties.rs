//! Property tests for the structural invariants.

use proptest::prelude::*;

use sandwich_core::analysis::entropy_decay_bound;
use sandwich_core::constraints::{feasible_profiles, ConstraintSpec};
use sandwich_core::coupling::couple_samp_flip;
use sandwich_core::graphspace::{
    edge_index, edge_profile, enumerate_edges, num_edges, permute_within_parts, EdgePartition, Graph,
};
use sandwich_core::maxent::{ent, ln_binomial, maximize_entropy, p_entropy, stirling_gap, SolverOptions};
use sandwich_core::oracle::{binomial_big, ln_big, profile_space_size};
use sandwich_core::rng::RandomStream;
use sandwich_core::sampler::{sample_within_parts, BudgetDp, ProfileDistribution};

/// A partition of `K_n` into `k` nonempty parts with random labels.
fn random_partition(n: usize, k: usize, seed: u64) -> EdgePartition {
    let total = num_edges(n);
    let k = k.clamp(1, total);
    let mut rng = RandomStream::new(seed);
    let mut labels: Vec<usize> = (0..total).map(|e| if e < k { e } else { rng.below(k) }).collect();
    for i in (1..total).rev() {
        labels.swap(i, rng.below(i + 1));
    }
    EdgePartition::new(n, labels).unwrap()
}

fn random_profile(part: &EdgePartition, rng: &mut RandomStream) -> Vec<u64> {
    part.part_sizes().iter().map(|&p| rng.below(p as usize + 1) as u64).collect()
}

fn random_graph(n: usize, rng: &mut RandomStream) -> Graph {
    let edges = (0..num_edges(n)).map(|_| rng.below(2) == 1).collect();
    Graph::from_indicator(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edge_index_is_the_enumeration_position(n in 2usize..40) {
        for (e, (u, v)) in enumerate_edges(n).unwrap().into_iter().enumerate() {
            prop_assert_eq!(edge_index(n, u, v).unwrap(), e);
            prop_assert_eq!(edge_index(n, v, u).unwrap(), e);
        }
    }

    #[test]
    fn stirling_gap_is_bounded(n in 2usize..=100, k in 1usize..=10, seed in any::<u64>()) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed ^ 1);
        let v = random_profile(&part, &mut rng);
        let gap = stirling_gap(&v, &part).unwrap();
        prop_assert!(gap >= -1e-9, "gap {}", gap);
        prop_assert!(gap <= part.k() as f64 * (n as f64).ln() + 1e-9, "gap {}", gap);
    }

    #[test]
    fn permutations_within_parts_keep_the_profile(n in 2usize..=12, k in 1usize..=6, seed in any::<u64>()) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed);
        let g = random_graph(n, &mut rng);
        let h = permute_within_parts(&g, &part, &mut rng);
        prop_assert_eq!(edge_profile(&g, &part).unwrap(), edge_profile(&h, &part).unwrap());
    }

    #[test]
    fn within_parts_sampling_hits_the_profile(n in 2usize..=30, k in 1usize..=8, seed in any::<u64>()) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed);
        let v = random_profile(&part, &mut rng);
        let g = sample_within_parts(&v, &part, &mut rng).unwrap();
        prop_assert_eq!(edge_profile(&g, &part).unwrap(), v);
    }

    #[test]
    fn text_formats_round_trip(n in 2usize..=15, k in 1usize..=5, seed in any::<u64>()) {
        let part = random_partition(n, k, seed);
        prop_assert_eq!(&EdgePartition::from_text(&part.to_text()).unwrap(), &part);
        let g = random_graph(n, &mut RandomStream::new(seed));
        prop_assert_eq!(Graph::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn ln_binomial_matches_exact_integers(p in 0u64..3000, frac in 0.0f64..=1.0) {
        let m = (p as f64 * frac).round() as u64;
        let exact = ln_big(&binomial_big(p, m));
        prop_assert!((ln_binomial(p, m) - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn profile_space_is_within_the_polynomial_bound(n in 2usize..=60, k in 1usize..=10, seed in any::<u64>()) {
        let part = random_partition(n, k, seed);
        prop_assert!(profile_space_size(&part).within_bound);
    }

    #[test]
    fn samp_flip_nesting_equivalence(size in 1usize..200, frac in 0.0f64..=1.0, delta in 0.01f64..0.99, seed in any::<u64>()) {
        let m = (size as f64 * frac).round() as usize;
        let mut rng = RandomStream::new(seed);
        let u: Vec<f64> = (0..size).map(|_| rng.uniform()).collect();
        let d = couple_samp_flip(m, delta, &u).unwrap();
        prop_assert_eq!(d.nested(), d.counts_nested());
        prop_assert_eq!(d.x.len(), m);
    }

    #[test]
    fn constraint_specs_round_trip_through_json(costs in prop::collection::vec(0.0f64..10.0, 1..5), budget in -5.0f64..50.0) {
        let spec = ConstraintSpec::Intersection {
            members: vec![
                ConstraintSpec::Budget { costs: costs.clone(), budget },
                ConstraintSpec::LinearSystem { a: vec![costs.clone()], b: vec![budget] },
            ],
        };
        let text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(serde_json::from_str::<ConstraintSpec>(&text).unwrap(), spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn budget_dp_agrees_with_enumeration(n in 3usize..=7, k in 1usize..=3, seed in any::<u64>(), frac in 0.0f64..0.8) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed);
        let costs: Vec<f64> = (0..part.k()).map(|_| rng.below(4) as f64 * 0.5).collect();
        let full: f64 = costs.iter().zip(part.part_sizes()).map(|(c, &p)| c * p as f64).sum();
        let spec = ConstraintSpec::Budget { costs, budget: frac * full };
        let dp = BudgetDp::new(&part, &spec, 1e10).unwrap();
        let en = ProfileDistribution::enumerate(&part, &spec, 1e7).unwrap();
        prop_assert!((dp.log_z() - en.log_z).abs() <= 1e-9);
        for (v, w) in en.support.iter().zip(&en.log_weights) {
            prop_assert!(dp.admits(v));
            prop_assert!((w - ent(v, &part).unwrap()).abs() <= 1e-9);
            prop_assert!((dp.probability(v) - en.probability(v)).abs() <= 1e-9);
        }
    }

    #[test]
    fn budget_optimum_dominates_feasible_points(n in 3usize..=8, k in 1usize..=3, seed in any::<u64>(), frac in 0.05f64..0.9) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed);
        let costs: Vec<f64> = (0..part.k()).map(|_| 0.5 + rng.uniform() * 2.0).collect();
        let full: f64 = costs.iter().zip(part.part_sizes()).map(|(c, &p)| c * p as f64).sum();
        let spec = ConstraintSpec::Budget { costs: costs.clone(), budget: frac * full };
        let sol = maximize_entropy(&part, &spec, &SolverOptions::default()).unwrap();
        prop_assert!(sol.is_converged());
        let spent: f64 = costs.iter().zip(&sol.m_star).map(|(c, m)| c * m).sum();
        prop_assert!(spent <= frac * full + 1e-8);
        for v in feasible_profiles(&spec, &part, 1e7).unwrap() {
            let real: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            prop_assert!(p_entropy(&real, &part).unwrap() <= sol.objective + 1e-6);
        }
    }

    #[test]
    fn entropy_decay_bound_holds_on_small_sets(n in 3usize..=6, k in 1usize..=3, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let part = random_partition(n, k, seed);
        let mut rng = RandomStream::new(seed);
        let costs: Vec<f64> = (0..part.k()).map(|_| rng.below(3) as f64 + 1.0).collect();
        let full: f64 = costs.iter().zip(part.part_sizes()).map(|(c, &p)| c * p as f64).sum();
        let spec = ConstraintSpec::Budget { costs, budget: frac * full };
        let sol = maximize_entropy(&part, &spec, &SolverOptions::default()).unwrap();
        let rounded: Vec<u64> = sol.m_star.iter().map(|m| m.round() as u64).collect();
        let base = ent(&rounded, &part).unwrap();
        for w in feasible_profiles(&spec, &part, 1e7).unwrap() {
            let real: Vec<f64> = w.iter().map(|&x| x as f64).collect();
            let bound = entropy_decay_bound(&real, &sol.m_star, &part).unwrap();
            prop_assert!(ent(&w, &part).unwrap() - base <= bound + 1e-9);
        }
    }
}
