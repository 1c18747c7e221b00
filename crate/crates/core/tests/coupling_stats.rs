//! Monte Carlo checks of the Samp/Flip and sandwich couplings.

use sandwich_core::analysis::{condition_number, sandwich_delta};
use sandwich_core::constraints::ConstraintSpec;
use sandwich_core::coupling::{
    couple_samp_flip, empirical_sandwich_rate, run_sandwich_trials, samp_flip_failure_bound,
    samp_flip_probabilities, SandwichCoupler, SandwichRate,
};
use sandwich_core::graphspace::EdgePartition;
use sandwich_core::oracle::{empirical_distribution, enumerate_spec, total_variation, OracleCaps};
use sandwich_core::rng::RandomStream;
use sandwich_core::sampler::{SamplerOptions, Strategy};

fn sized(n: usize, sizes: &[usize]) -> EdgePartition {
    let mut labels = Vec::new();
    for (i, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(i).take(s));
    }
    EdgePartition::new(n, labels).unwrap()
}

struct SampFlipStats {
    failures: u64,
    x_hits: Vec<u64>,
    minus_hits: Vec<u64>,
    plus_hits: Vec<u64>,
}

fn run_samp_flip(universe: usize, m: usize, delta: f64, trials: u64, seed: u64) -> SampFlipStats {
    let mut rng = RandomStream::new(seed);
    let mut stats = SampFlipStats {
        failures: 0,
        x_hits: vec![0; universe],
        minus_hits: vec![0; universe],
        plus_hits: vec![0; universe],
    };
    let mut u = vec![0.0; universe];
    for _ in 0..trials {
        u.iter_mut().for_each(|x| *x = rng.uniform());
        let d = couple_samp_flip(m, delta, &u).unwrap();
        assert_eq!(d.nested(), d.counts_nested());
        stats.failures += !d.nested() as u64;
        for (set, hits) in [(&d.x, &mut stats.x_hits), (&d.z_minus, &mut stats.minus_hits), (&d.z_plus, &mut stats.plus_hits)] {
            for &i in set {
                hits[i] += 1;
            }
        }
    }
    stats
}

/// Largest per-element deviation in units of the binomial standard error.
fn worst_z(hits: &[u64], p: f64, trials: u64) -> f64 {
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    hits.iter()
        .map(|&h| (h as f64 / trials as f64 - p).abs() / sd)
        .fold(0.0, f64::max)
}

#[test]
fn samp_flip_failure_rate_is_below_the_chernoff_bound() {
    for (j, delta) in [0.2, 0.3, 0.5].into_iter().enumerate() {
        let trials = 100_000;
        let stats = run_samp_flip(100, 50, delta, trials, 300 + j as u64);
        let rate = stats.failures as f64 / trials as f64;
        assert!(rate <= samp_flip_failure_bound(50, delta), "delta {delta}: {rate}");
    }
}

#[test]
fn samp_flip_marginals() {
    let (universe, m, delta, trials) = (100, 50, 0.3, 100_000u64);
    let stats = run_samp_flip(universe, m, delta, trials, 310);
    let (p_minus, p_plus) = samp_flip_probabilities(universe, m, delta);
    // 300 simultaneous checks: a Bonferroni bound at family level 1e-3
    // sits at 4.5 standard errors.
    for (hits, p) in [(&stats.x_hits, 0.5), (&stats.minus_hits, p_minus), (&stats.plus_hits, p_plus)] {
        let z = worst_z(hits, p, trials);
        assert!(z < 4.5, "p = {p}: worst z {z}");
    }
}

fn budget_instance() -> (EdgePartition, ConstraintSpec) {
    let part = sized(7, &[10, 10, 1]);
    let spec = ConstraintSpec::Budget {
        costs: vec![1.0, 2.0, 0.0],
        budget: 12.0,
    };
    (part, spec)
}

#[test]
fn budget_sandwich_rate_meets_delta() {
    let (part, spec) = budget_instance();
    let eps = 0.8;
    let coupler = SandwichCoupler::new(&part, &spec, eps, Strategy::BudgetDp, &SamplerOptions::default()).unwrap();
    let sol = coupler.solution();
    let (mu, _) = sandwich_core::analysis::thickness(&sol.m_star, &part).unwrap();
    let lambda = condition_number(mu, part.k(), part.n()).unwrap();
    let delta = sandwich_delta(eps, mu, lambda);
    let rate = empirical_sandwich_rate(&coupler, 10_000, 320).unwrap();
    assert!(rate.rate >= 1.0 - delta.value, "{rate:?} vs {delta:?}");
}

#[test]
fn rate_is_monotone_in_epsilon() {
    let (part, spec) = budget_instance();
    let mut previous = 0.0;
    for eps in [0.1, 0.2, 0.3, 0.5, 0.7, 0.9] {
        let coupler =
            SandwichCoupler::new(&part, &spec, eps, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
        let rate = empirical_sandwich_rate(&coupler, 4_000, 321).unwrap().rate;
        assert!(rate >= previous, "eps {eps}: {rate} < {previous}");
        previous = rate;
    }
    assert!(previous > 0.5);
}

#[test]
fn single_trial_is_flagged_degenerate() {
    let (part, spec) = budget_instance();
    let coupler = SandwichCoupler::new(&part, &spec, 0.5, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    let rate = empirical_sandwich_rate(&coupler, 1, 3).unwrap();
    assert!(rate.rate == 0.0 || rate.rate == 1.0);
    assert!(rate.degenerate);
    assert_eq!(rate.ci_halfwidth, 1.0);
    assert!(empirical_sandwich_rate(&coupler, 0, 3).is_err());
}

#[test]
fn loose_sandwich_almost_always_holds() {
    // Tiny densities with eps close to 1: the lower graph is nearly empty
    // and the upper one nearly doubles the edge count.
    let part = EdgePartition::trivial(12).unwrap();
    let spec = ConstraintSpec::Box { lo: vec![0], hi: vec![3] };
    let coupler = SandwichCoupler::new(&part, &spec, 0.99, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    let rate = empirical_sandwich_rate(&coupler, 2_000, 5).unwrap();
    assert!(rate.rate > 0.7, "{rate:?}");
}

#[test]
fn middle_graph_is_uniform_and_outer_graphs_are_product() {
    let part = EdgePartition::balanced(4, 2).unwrap();
    let spec = ConstraintSpec::Budget {
        costs: vec![1.0, 2.0],
        budget: 4.0,
    };
    let summary = enumerate_spec(&part, &spec, &OracleCaps::default()).unwrap();
    let uniform = summary.uniform_distribution().unwrap();
    let eps = 0.3;
    let mut coupler =
        SandwichCoupler::new(&part, &spec, eps, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    let q = coupler.solution().q_star.clone();
    let mut rng = RandomStream::new(330);
    let draws = 200_000u64;
    let mut middles = Vec::with_capacity(draws as usize);
    let mut lower_hits = [0u64; 6];
    let mut upper_hits = [0u64; 6];
    for _ in 0..draws {
        let o = coupler.sample(&mut rng);
        middles.push(o.g.edge_indices().fold(0u64, |m, e| m | 1 << e));
        for e in o.g_minus.edge_indices() {
            lower_hits[e] += 1;
        }
        for e in o.g_plus.edge_indices() {
            upper_hits[e] += 1;
        }
    }
    let tv = total_variation(&empirical_distribution(middles), &uniform);
    assert!(tv <= 4.0 * ((uniform.len() as f64).ln() / draws as f64).sqrt(), "{tv}");
    for e in 0..6 {
        let qi = q[part.part_of(e)];
        for (hits, p) in [(lower_hits[e], qi * (1.0 - eps)), (upper_hits[e], (qi * (1.0 + eps)).min(1.0))] {
            let f = hits as f64 / draws as f64;
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((f - p).abs() <= 4.0 * sd, "edge {e}: {f} vs {p}");
        }
    }
}

#[test]
fn gnm_recovery_rate() {
    let part = EdgePartition::trivial(50).unwrap();
    let spec = ConstraintSpec::exact_edges(200);
    let eps = 0.5;
    let coupler = SandwichCoupler::new(&part, &spec, eps, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    assert_eq!(coupler.solution().m_star, vec![200.0]);
    let lambda = condition_number(200.0, 1, 50).unwrap();
    let bound = 1.0 - 2.0 * (-200.0 * (eps * eps / 12.0 - lambda)).exp();
    let rate = empirical_sandwich_rate(&coupler, 2_000, 340).unwrap();
    assert!(rate.rate >= bound);
}

#[test]
fn mcmc_coupling_is_reproducible() {
    let (part, spec) = budget_instance();
    let mut opts = SamplerOptions::default();
    opts.mcmc.burn_in = 2_000;
    let coupler = SandwichCoupler::new(&part, &spec, 0.5, Strategy::Mcmc, &opts).unwrap();
    assert!(!coupler.is_exact());
    let a = run_sandwich_trials(&coupler, 100, 8);
    let b = run_sandwich_trials(&coupler, 100, 8);
    assert_eq!(a, b);
    let rate = SandwichRate::from_records(&a);
    assert_eq!(rate.trials, 100);
}
