use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use skipring::privacy::{
    a_coefficient, a_coefficient_lower_gamma, alpha_upper_limit, calibrate_sigma, compose_rdp,
    epsilon_skip_rand_ring, epsilon_skip_ring, gamma_rh, h_tilde, privacy_bound, PrivacyParams,
};
use skipring::schedule::Scheme;

const ORACLE: &str = include_str!("data/privacy_oracle.csv");

struct Case {
    params: PrivacyParams,
    sigma: f64,
    h_tilde: u64,
    eps_ring: f64,
    gamma_3_h: f64,
    a: f64,
    alpha: f64,
    eps_rand_ring: f64,
}

fn cases() -> Vec<Case> {
    ORACLE
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| f[i].parse::<f64>().unwrap();
            Case {
                params: PrivacyParams {
                    epsilon: num(0),
                    delta: num(1),
                    delta_prime: num(2),
                    k: num(3),
                    n: f[4].parse().unwrap(),
                    p: num(5),
                    h_max: f[6].parse().unwrap(),
                    scheme: Scheme::SkipRing,
                    smoothness_attested: true,
                },
                sigma: num(7),
                h_tilde: f[8].parse().unwrap(),
                eps_ring: num(9),
                gamma_3_h: num(10),
                a: num(11),
                alpha: num(12),
                eps_rand_ring: num(13),
            }
        })
        .collect()
}

fn close(got: f64, want: f64, what: &str) {
    assert!(
        (got - want).abs() <= 1e-9 * want.abs(),
        "{what}: {got} vs {want} (rel {:e})",
        (got - want).abs() / want.abs()
    );
}

#[test]
fn matches_extended_precision_evaluations() {
    let cases = cases();
    assert!(cases.len() >= 23);
    for c in &cases {
        let pp = c.params;
        close(calibrate_sigma(pp.k, pp.epsilon, pp.delta).unwrap(), c.sigma, "sigma");
        assert_eq!(h_tilde(pp.h_max, pp.p, pp.n, pp.delta_prime), c.h_tilde);
        let ring = epsilon_skip_ring(&pp).unwrap();
        close(ring.epsilon_skip, c.eps_ring, "ring epsilon");
        close(gamma_rh(3, (pp.n as u64 - 1).min(4)), c.gamma_3_h, "gamma");
        let rand = epsilon_skip_rand_ring(&PrivacyParams {
            scheme: Scheme::SkipRandRing,
            ..pp
        })
        .unwrap();
        close(rand.a.unwrap(), c.a, "a");
        close(rand.alpha.unwrap(), c.alpha, "alpha");
        close(rand.epsilon_skip, c.eps_rand_ring, "rand-ring epsilon");
    }
}

#[test]
fn chernoff_visit_bound_holds_empirically() {
    let ht = h_tilde(1000, 0.5, 10, 0.1);
    let bin = Binomial::new(100, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 1_000_000;
    let exceed = (0..trials).filter(|_| bin.sample(&mut rng) >= ht).count();
    assert!((exceed as f64 / trials as f64) <= 0.1);
}

#[test]
fn ring_bound_functional_form() {
    let base = PrivacyParams {
        epsilon: 1.0,
        delta: 1e-6,
        delta_prime: 0.1,
        k: 1.0,
        n: 10,
        p: 0.5,
        h_max: 1000,
        scheme: Scheme::SkipRing,
        smoothness_attested: true,
    };
    let b = epsilon_skip_ring(&base).unwrap();
    assert_eq!(b.h_tilde, 69);
    assert!((b.epsilon_skip - 9.469_093_052_559_449).abs() < 1e-9);
    let l1 = (1e6f64).ln();
    let l125 = (1.25e6f64).ln();
    let first = |h: f64| (h * l1).sqrt() / l125.sqrt();
    let second = |h: f64| h / (4.0 * l125);
    assert!((first(138.0) / first(69.0) - 2f64.sqrt()).abs() < 1e-14);
    assert!((second(138.0) / second(69.0) - 2.0).abs() < 1e-14);
}

#[test]
fn monotone_in_hops_and_nodes() {
    for scheme in [Scheme::SkipRing, Scheme::SkipRandRing] {
        for p in [1e-4, 0.5, 0.7] {
            for n in [5usize, 10, 20] {
                let mut prev = 0.0;
                for h in [1_000u64, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000] {
                    let pp = PrivacyParams {
                        epsilon: 1.0,
                        delta: 1e-6,
                        delta_prime: 0.1,
                        k: 1.0,
                        n,
                        p,
                        h_max: h,
                        scheme,
                        smoothness_attested: true,
                    };
                    let e = privacy_bound(&pp).unwrap().epsilon_skip;
                    assert!(e >= prev, "{scheme} p={p} n={n} h={h}");
                    prev = e;
                }
            }
            for h in [1_000u64, 10_000, 100_000] {
                let at = |n: usize| {
                    privacy_bound(&PrivacyParams {
                        epsilon: 1.0,
                        delta: 1e-6,
                        delta_prime: 0.1,
                        k: 1.0,
                        n,
                        p,
                        h_max: h,
                        scheme,
                        smoothness_attested: true,
                    })
                    .unwrap()
                    .epsilon_skip
                };
                assert!(at(5) >= at(10) && at(10) >= at(20), "{scheme} p={p} h={h}");
            }
        }
    }
}

#[test]
fn gamma_increases_in_r() {
    for h in 1..=64u64 {
        for r in 0..100u64 {
            assert!(gamma_rh(r + 1, h) > gamma_rh(r, h), "h={h} r={r}");
        }
    }
}

#[test]
fn lower_gamma_coefficient_dominates_exact() {
    for n in [2usize, 5, 10, 30] {
        for p in [0.0, 1e-4, 0.3, 0.5, 0.9] {
            for ht in [1u64, 10, 100, 1000] {
                assert!(a_coefficient(n, p, ht) <= a_coefficient_lower_gamma(n, p, ht) * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn alpha_within_admissible_window() {
    for c in cases() {
        let rand = epsilon_skip_rand_ring(&PrivacyParams {
            scheme: Scheme::SkipRandRing,
            ..c.params
        })
        .unwrap();
        let alpha = rand.alpha.unwrap();
        assert!(alpha > 1.0);
        assert!(alpha <= alpha_upper_limit(c.params.epsilon, c.params.delta));
    }
}

#[test]
fn composition_of_gaussian_steps() {
    let (alpha, k, sigma, ht) = (3.0, 1.0, 10.5976, 69usize);
    let step = 2.0 * alpha * k * k / (sigma * sigma);
    let total = compose_rdp(&vec![step; ht]);
    assert!((total - ht as f64 * step).abs() < 1e-13 * total);
}
