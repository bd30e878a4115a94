use tree_ldp::distance_chain::{brute_force_distance_dist, simple_walk_distance_dist};
use tree_ldp::legendre::{increment_tilt, lambda_star_closed_form};
use tree_ldp::montecarlo::{convergence_sweep, estimate_box, tilted_estimate, McConfig};
use tree_ldp::tree_walk::DEFAULT_ENUMERATION_CAP;
use tree_ldp::{BoxSpec, StepDistribution, TimeGrid};

fn endpoint_box(x: f64, rho: f64) -> BoxSpec {
    BoxSpec::new(TimeGrid::endpoint(), vec![x], rho).unwrap()
}

/// Box around the single lattice point `l/n`.
fn length_box(l: usize, n: usize) -> BoxSpec {
    endpoint_box(l as f64 / n as f64, 0.5 / n as f64)
}

#[test]
fn crude_histogram_matches_enumeration() {
    let n = 9;
    for mu in [StepDistribution::uniform(3).unwrap(), StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap()] {
        let exact = brute_force_distance_dist(&mu, n, DEFAULT_ENUMERATION_CAP).unwrap();
        for l in (1..=n).step_by(2) {
            let cfg = McConfig { mu: mu.clone(), n, samples: 100_000, seed: 11 + l as u64, tilt: None };
            let e = &estimate_box(&cfg, &length_box(l, n)).unwrap().entries[0];
            let p = exact.prob(l);
            let se = (p * (1.0 - p) / cfg.samples as f64).sqrt();
            assert!((e.probability - p).abs() <= 3.0 * se, "μ={:?} l={l}: {} vs {p}", mu.probs(), e.probability);
        }
    }
}

#[test]
fn non_uniform_return_probability_after_two_steps() {
    let mu = StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
    let cfg = McConfig { mu, n: 2, samples: 200_000, seed: 5, tilt: None };
    let e = &estimate_box(&cfg, &length_box(0, 2)).unwrap().entries[0];
    let se = (0.38f64 * 0.62 / cfg.samples as f64).sqrt();
    assert!((e.probability - 0.38).abs() <= 3.0 * se, "{}", e.probability);
}

#[test]
fn tilted_estimates_are_unbiased_over_seeds() {
    let n = 10;
    let exact = simple_walk_distance_dist(3, n).unwrap();
    for (x, l) in [(0.8, 8usize), (0.95, 10), (0.2, 2)] {
        let theta = increment_tilt(3, x).unwrap();
        let spec = length_box(l, n);
        let p = exact.prob(l);
        let mut misses = 0;
        for seed in 0..20 {
            let cfg = McConfig { mu: StepDistribution::uniform(3).unwrap(), n, samples: 4000, seed, tilt: Some(theta) };
            let e = &tilted_estimate(&cfg, &spec).unwrap().entries[0];
            assert!((e.probability - p).abs() <= 4.0 * e.probability_stderr, "x={x} seed={seed}");
            if (e.probability - p).abs() > 3.0 * e.probability_stderr {
                misses += 1;
            }
        }
        assert!(misses <= 1, "x={x}: {misses} of 20 seeds outside 3 stderr");
    }
}

#[test]
fn tilted_sweep_stabilizes_near_closed_form() {
    let theta = increment_tilt(3, 0.6).unwrap();
    let n_list: Vec<usize> = (400..=1000).step_by(100).collect();
    let est = convergence_sweep(
        &endpoint_box(0.6, 0.05),
        &StepDistribution::uniform(3).unwrap(),
        &n_list,
        20_000,
        3,
        Some(theta),
    )
    .unwrap();
    let stab = est.stabilization.unwrap();
    assert!(stab <= 0.05, "stabilization {stab}");
    let target = lambda_star_closed_form(3, 0.6).finite().unwrap();
    let last = est.entries.last().unwrap().rate.unwrap();
    // the open box rate is at most the centre rate
    assert!(last <= target + 0.01, "{last} vs {target}");
}

#[test]
fn larger_box_is_at_least_as_likely() {
    let mu = StepDistribution::uniform(4).unwrap();
    let cfg = McConfig { mu, n: 60, samples: 50_000, seed: 9, tilt: None };
    let small = &estimate_box(&cfg, &endpoint_box(0.7, 0.05)).unwrap().entries[0];
    let large = &estimate_box(&cfg, &endpoint_box(0.7, 0.15)).unwrap().entries[0];
    assert!(large.probability + 3.0 * large.probability_stderr >= small.probability);
}
